"""Procedural facade label maps for tests and demos.

Layouts are regular: floors of windows with sills, cornice bands between
floors, optional balconies and a ground floor with a door and shop
fronts.  Everything is in meters and rasterized at ``px_per_m``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .raster import CLASS_IDS, LabelMap, save_label_map


@dataclass(frozen=True)
class FacadeSpec:
    width_m: float = 12.0
    height_m: float = 9.0
    floors: int = 3
    bays: int = 4
    window_w_m: float = 1.2
    window_h_m: float = 1.5
    sill_h_m: float = 0.1
    cornice_h_m: float = 0.25
    balconies: bool = False
    shop: bool = False
    sky_m: float = 0.0
    blank_m: float = 0.0  # windowless wall on the right-hand side


def _paint(arr: np.ndarray, cls: str, x0: float, y0: float, x1: float, y1: float, s: float) -> None:
    h, w = arr.shape
    a, b = max(0, int(round(y0 * s))), min(h, int(round(y1 * s)))
    c, d = max(0, int(round(x0 * s))), min(w, int(round(x1 * s)))
    if a < b and c < d:
        arr[a:b, c:d] = CLASS_IDS[cls]


def facade_label_map(spec: FacadeSpec, px_per_m: float = 20.0) -> LabelMap:
    s = px_per_m
    h_px, w_px = int(round(spec.height_m * s)), int(round(spec.width_m * s))
    arr = np.full((h_px, w_px), CLASS_IDS["facade"], dtype=np.uint8)
    _paint(arr, "background", 0, 0, spec.width_m, spec.sky_m, s)
    body_h = spec.height_m - spec.sky_m
    floor_h = body_h / spec.floors
    bay_w = (spec.width_m - spec.blank_m) / spec.bays
    for f in range(spec.floors):
        top = spec.sky_m + f * floor_h
        ground = f == spec.floors - 1
        if f > 0:
            _paint(arr, "cornice", 0, top, spec.width_m - spec.blank_m, top + spec.cornice_h_m, s)
        for b in range(spec.bays):
            cx = (b + 0.5) * bay_w
            x0, x1 = cx - spec.window_w_m / 2, cx + spec.window_w_m / 2
            y0 = top + (floor_h - spec.window_h_m) / 2
            y1 = y0 + spec.window_h_m
            if ground and b == 0:
                _paint(arr, "door", x0, top + floor_h - 2.2, x0 + 1.0, top + floor_h, s)
                continue
            if ground and spec.shop:
                _paint(arr, "shop", x0, y0, x1, top + floor_h - 0.3, s)
                continue
            _paint(arr, "window", x0, y0, x1, y1, s)
            _paint(arr, "sill", x0 - 0.1, y1, x1 + 0.1, y1 + spec.sill_h_m, s)
            if spec.balconies and not ground:
                _paint(arr, "balcony", x0 - 0.3, y1 - 0.6, x1 + 0.3, y1 + 0.1, s)
    return LabelMap(arr)


def pillar_strips(width_m: float = 10.0, height_m: float = 10.0, strip_m: float = 0.6,
                  pillar_m: float = 0.15, px_per_m: float = 20.0) -> LabelMap:
    """Wall strips separated by pillars: high suitable share, too narrow for a module."""
    s = px_per_m
    arr = np.full((int(round(height_m * s)), int(round(width_m * s))), CLASS_IDS["facade"], dtype=np.uint8)
    x = strip_m
    while x < width_m:
        _paint(arr, "pillar", x, 0, x + pillar_m, height_m, s)
        x += strip_m + pillar_m
    return LabelMap(arr)


DEMO_FACADES = (
    ("f01", FacadeSpec(width_m=14, blank_m=4.0), 180.0, 47.3769, 8.5417),
    ("f02", FacadeSpec(width_m=16, height_m=12, floors=4, bays=4, window_w_m=1.0, shop=True, blank_m=2.5),
     225.0, 48.1351, 11.582),
    ("f03", FacadeSpec(width_m=10, height_m=9, floors=3, bays=3, balconies=True, sky_m=1.0), 90.0, 52.52, 13.405),
    ("f04", FacadeSpec(width_m=8, height_m=6, floors=2, bays=2, window_w_m=1.0, cornice_h_m=0.0),
     270.0, 45.4642, 9.19),
    ("pillars", None, 200.0, 41.3874, 2.1686),
)


def write_demo(out_dir: str | Path, px_per_m: float = 50.0) -> Path:
    """Write the demo facades as PNGs plus a ``manifest.csv``; returns the manifest path."""
    out = Path(out_dir)
    (out / "labels").mkdir(parents=True, exist_ok=True)
    rows = []
    for fid, spec, az, lat, lon in DEMO_FACADES:
        if spec is None:
            lmap, w, h = pillar_strips(px_per_m=px_per_m), 10.0, 10.0
        else:
            lmap, w, h = facade_label_map(spec, px_per_m), spec.width_m, spec.height_m
        rel = f"labels/{fid}.png"
        save_label_map(lmap, out / rel)
        rows.append([fid, rel, w, h, az, lat, lon, ""])
    manifest = out / "manifest.csv"
    with manifest.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["id", "image", "width_m", "height_m", "azimuth_deg", "lat", "lon", "gt_image"])
        writer.writerows(rows)
    return manifest
