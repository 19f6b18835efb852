"""Largest-rectangle search and panel grid fitting.

A single axis-aligned rectangle is taken from the suitability mask and a
regular module grid is fitted inside it, trying portrait and landscape.
All pixel arithmetic is integer; meters are converted once through the
facade's scale factors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .geometry import FacadeGeometry, InvalidGeometry

PORTRAIT = "portrait"
LANDSCAPE = "landscape"

# guards float noise such as 0.76 * 100 == 76.00000000000001
_EPS = 1e-9


@dataclass(frozen=True)
class PanelSpec:
    name: str
    width_mm: float
    height_mm: float
    rating_wp: float

    @property
    def width_m(self) -> float:
        return self.width_mm / 1000.0

    @property
    def height_m(self) -> float:
        return self.height_mm / 1000.0

    @property
    def area_m2(self) -> float:
        return self.width_m * self.height_m


PANEL_L = PanelSpec("L", 935.0, 1300.0, 225.0)
PANEL_S = PanelSpec("S", 720.0, 875.0, 110.0)
DEFAULT_CATALOG = (PANEL_L, PANEL_S)
DEFAULT_GAP_M = 0.02


def panel_by_name(name: str, catalog: Iterable[PanelSpec] = DEFAULT_CATALOG) -> PanelSpec:
    for spec in catalog:
        if spec.name == name:
            return spec
    raise KeyError(f"no panel named {name!r} in catalog")


@dataclass(frozen=True)
class ScaleFactors:
    s_x: float  # px per meter, horizontal
    s_y: float  # px per meter, vertical


@dataclass(frozen=True)
class PixelRect:
    x: int
    y: int
    w: int
    h: int

    @property
    def area(self) -> int:
        return self.w * self.h

    def as_slices(self) -> tuple[slice, slice]:
        return slice(self.y, self.y + self.h), slice(self.x, self.x + self.w)


EMPTY_RECT = PixelRect(0, 0, 0, 0)


@dataclass(frozen=True)
class PanelLayout:
    rect: PixelRect
    panel: PanelSpec
    orientation: str
    n_x: int
    n_y: int
    gap_m: float
    placements: tuple[PixelRect, ...] = field(repr=False)
    leftover_area_px: int

    @property
    def n_modules(self) -> int:
        return self.n_x * self.n_y

    @property
    def placed_area_px(self) -> int:
        return sum(p.area for p in self.placements)


def round_half_up(value: float) -> int:
    return int(math.floor(value + 0.5 + _EPS))


def scale_factors(geom: FacadeGeometry, width_px: int, height_px: int) -> ScaleFactors:
    if width_px <= 0 or height_px <= 0:
        raise InvalidGeometry("raster dimensions must be positive")
    return ScaleFactors(width_px / geom.width_m, height_px / geom.height_m)


def panel_px(panel: PanelSpec, orientation: str, sf: ScaleFactors) -> tuple[int, int]:
    """Panel (width, height) in pixels for the given orientation."""
    if orientation == PORTRAIT:
        w_m, h_m = panel.width_m, panel.height_m
    elif orientation == LANDSCAPE:
        w_m, h_m = panel.height_m, panel.width_m
    else:
        raise ValueError(f"unknown orientation {orientation!r}")
    return round_half_up(w_m * sf.s_x), round_half_up(h_m * sf.s_y)


def gap_px(gap_m: float, sf: ScaleFactors) -> tuple[int, int]:
    if gap_m < 0:
        raise ValueError("gap must be non-negative")
    return round_half_up(gap_m * sf.s_x), round_half_up(gap_m * sf.s_y)


def min_panel_area_px(panel: PanelSpec, gap_m: float, sf: ScaleFactors) -> int:
    """Pixel area of one portrait module plus a gap margin on every side."""
    wx = math.ceil((panel.width_m + 2 * gap_m) * sf.s_x - _EPS)
    hy = math.ceil((panel.height_m + 2 * gap_m) * sf.s_y - _EPS)
    return wx * hy


def axis_count(extent: int, size: int, gap: int) -> int:
    """Modules of ``size`` separated by ``gap`` that fit in ``extent`` pixels."""
    if size <= 0 or extent < size:
        return 0
    return (extent + gap) // (size + gap)


def fit_grid(
    rect: PixelRect, panel: PanelSpec, orientation: str, gap_m: float, sf: ScaleFactors
) -> tuple[int, int]:
    pw, ph = panel_px(panel, orientation, sf)
    gx, gy = gap_px(gap_m, sf)
    n_x, n_y = axis_count(rect.w, pw, gx), axis_count(rect.h, ph, gy)
    if n_x == 0 or n_y == 0:
        return 0, 0
    return n_x, n_y


def _histogram_rectangles(heights: np.ndarray, row: int):
    """Yield (area, top, left, width, height) for every maximal bar span."""
    stack: list[int] = []
    n = len(heights)
    for i in range(n + 1):
        h = int(heights[i]) if i < n else 0
        while stack and int(heights[stack[-1]]) >= h:
            top_h = int(heights[stack.pop()])
            if top_h == 0:
                continue
            left = stack[-1] + 1 if stack else 0
            width = i - left
            yield top_h * width, row - top_h + 1, left, width, top_h
        stack.append(i)


def largest_rectangle(mask: np.ndarray) -> PixelRect:
    """Largest all-true axis-aligned rectangle in ``mask``.

    Row-wise column histograms with a monotonic stack per row.  Among
    rectangles of equal area the one with the smallest top row, then the
    smallest left column, wins.  An all-false mask gives ``EMPTY_RECT``.
    """
    mask = np.asarray(mask, dtype=bool)
    if mask.ndim != 2 or mask.size == 0:
        raise ValueError("mask must be a non-empty 2-D array")
    heights = np.zeros(mask.shape[1], dtype=np.int64)
    best_key = (0, 0, 0)
    best = EMPTY_RECT
    for r in range(mask.shape[0]):
        heights = np.where(mask[r], heights + 1, 0)
        if not heights.any():
            continue
        for area, top, left, width, height in _histogram_rectangles(heights, r):
            key = (area, -top, -left)
            if key > best_key:
                best_key = key
                best = PixelRect(left, top, width, height)
    return best


def grid_placements(
    rect: PixelRect, n_x: int, n_y: int, size: tuple[int, int], gap: tuple[int, int]
) -> tuple[PixelRect, ...]:
    if n_x == 0 or n_y == 0:
        return ()
    pw, ph = size
    gx, gy = gap
    off_x = rect.x + (rect.w - (n_x * pw + (n_x - 1) * gx)) // 2
    off_y = rect.y + (rect.h - (n_y * ph + (n_y - 1) * gy)) // 2
    return tuple(
        PixelRect(off_x + i * (pw + gx), off_y + j * (ph + gy), pw, ph)
        for j in range(n_y)
        for i in range(n_x)
    )


def layout_in_rect(
    rect: PixelRect, panel: PanelSpec, orientation: str, gap_m: float, sf: ScaleFactors
) -> PanelLayout:
    n_x, n_y = fit_grid(rect, panel, orientation, gap_m, sf)
    size = panel_px(panel, orientation, sf)
    placements = grid_placements(rect, n_x, n_y, size, gap_px(gap_m, sf))
    return PanelLayout(
        rect=rect,
        panel=panel,
        orientation=orientation,
        n_x=n_x,
        n_y=n_y,
        gap_m=gap_m,
        placements=placements,
        leftover_area_px=rect.area - sum(p.area for p in placements),
    )


def best_layout_in_rect(rect: PixelRect, panel: PanelSpec, gap_m: float, sf: ScaleFactors) -> PanelLayout:
    candidates = [layout_in_rect(rect, panel, o, gap_m, sf) for o in (PORTRAIT, LANDSCAPE)]
    # max count, then min leftover; stable min keeps portrait on full ties
    return min(candidates, key=lambda lay: (-lay.n_modules, lay.leftover_area_px))


def best_layout(
    mask: np.ndarray,
    catalog: Sequence[PanelSpec] = DEFAULT_CATALOG,
    gap_m: float = DEFAULT_GAP_M,
    sf: ScaleFactors = ScaleFactors(1.0, 1.0),
    rect: PixelRect | None = None,
) -> dict[str, PanelLayout]:
    """Best orientation per panel spec inside the mask's largest rectangle."""
    if not catalog:
        raise ValueError("panel catalog is empty")
    if rect is None:
        rect = largest_rectangle(mask)
    return {spec.name: best_layout_in_rect(rect, spec, gap_m, sf) for spec in catalog}
