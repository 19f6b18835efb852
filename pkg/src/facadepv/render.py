"""Overlay and summary figures.

Overlays stack, bottom to top: class colours, a green tint on suitable
pixels, the largest rectangle (yellow) and module outlines (blue).
Figures are built on ``matplotlib.figure.Figure`` directly so rendering
is safe from worker threads.
"""

from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure
from matplotlib.patches import Rectangle

from .layout import PanelLayout, PixelRect
from .raster import LabelMap

# RGB per class id, background .. unknown
CLASS_COLORS = np.array(
    [
        (0, 0, 0),  # background
        (176, 176, 176),  # facade
        (30, 90, 200),  # window
        (140, 70, 20),  # door
        (230, 140, 0),  # cornice
        (250, 220, 90),  # sill
        (200, 40, 140),  # balcony
        (110, 200, 230),  # blind
        (170, 110, 60),  # molding
        (240, 120, 160),  # deco
        (120, 40, 170),  # pillar
        (220, 40, 40),  # shop
        (60, 60, 60),  # unknown
    ],
    dtype=np.uint8,
)
MASK_TINT = np.array((40, 200, 60), dtype=np.float64)
MASK_ALPHA = 0.45
RECT_COLOR = "#ffd400"
PANEL_COLOR = "#0033cc"
PANEL_FILL = (0.2, 0.45, 1.0, 0.35)

PNG_METADATA = {"Software": None}


class RenderIoError(OSError):
    pass


def compose_rgb(label_map: LabelMap, mask: np.ndarray | None = None) -> np.ndarray:
    rgb = CLASS_COLORS[label_map.labels].astype(np.float64)
    if mask is not None:
        m = np.asarray(mask, dtype=bool)
        rgb[m] = (1 - MASK_ALPHA) * rgb[m] + MASK_ALPHA * MASK_TINT
    return np.round(rgb).astype(np.uint8)


def _rect_patch(r: PixelRect, **kw) -> Rectangle:
    # pixel (x, y) covers [x - 0.5, x + 0.5] in imshow coordinates
    return Rectangle((r.x - 0.5, r.y - 0.5), r.w, r.h, **kw)


def overlay_figure(
    label_map: LabelMap,
    mask: np.ndarray | None,
    layout: PanelLayout | None,
    title: str | None = None,
    min_side_px: int = 480,
) -> Figure:
    h, w = label_map.shape
    zoom = max(1, int(np.ceil(min_side_px / max(h, w))))
    dpi = 100
    fig = Figure(figsize=(w * zoom / dpi, h * zoom / dpi), dpi=dpi)
    FigureCanvasAgg(fig)
    ax = fig.add_axes((0, 0, 1, 1))
    ax.imshow(compose_rgb(label_map, mask), interpolation="nearest")
    ax.set_axis_off()
    ax.set_xlim(-0.5, w - 0.5)
    ax.set_ylim(h - 0.5, -0.5)
    if layout is not None and layout.rect.area > 0:
        ax.add_patch(_rect_patch(layout.rect, fill=False, edgecolor=RECT_COLOR, linewidth=2.0, gid="max-rect"))
        for p in layout.placements:
            ax.add_patch(_rect_patch(p, facecolor=PANEL_FILL, edgecolor=PANEL_COLOR, linewidth=1.0, gid="panel"))
    if title:
        ax.text(4, 4, title, color="white", fontsize=9, va="top", ha="left",
                bbox=dict(facecolor="black", alpha=0.6, linewidth=0))
    return fig


def save_figure(fig: Figure, path: str | Path) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fig.savefig(path, format="png", metadata=PNG_METADATA)
    except OSError as exc:
        raise RenderIoError(f"cannot write {path}: {exc}") from exc
    return path


def render_overlay(
    path: str | Path,
    label_map: LabelMap,
    mask: np.ndarray | None,
    layout: PanelLayout | None,
    title: str | None = None,
) -> Path:
    return save_figure(overlay_figure(label_map, mask, layout, title), path)


def shares_figure(rows: Sequence[Mapping], panels: Sequence[str]) -> Figure:
    """Theoretical vs practical share per facade, one marker series per panel spec."""
    ok = [r for r in rows if r.get("status") in ("ok", "layout-infeasible")]
    fig = Figure(figsize=(6.0, 4.5), dpi=100)
    FigureCanvasAgg(fig)
    ax = fig.add_subplot(111)
    markers = ("o", "s", "^", "D")
    for k, name in enumerate(panels):
        x = [100 * r["f_pv"] for r in ok]
        y = [100 * r["panels"][name]["practical_share"] for r in ok]
        ax.scatter(x, y, s=18, marker=markers[k % len(markers)], label=f"panel {name}")
    ax.plot([0, 100], [0, 100], color="0.6", linewidth=0.8, linestyle="--", label="practical = theoretical")
    ax.set_xlim(0, 100)
    ax.set_ylim(0, 100)
    ax.set_xlabel("theoretical share f_PV (%)")
    ax.set_ylabel("practical share (%)")
    ax.legend(loc="upper left", frameon=False, fontsize=8)
    fig.tight_layout()
    return fig
