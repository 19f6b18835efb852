"""PV-suitability masks from facade label maps.

The mask starts from wall (``facade`` class) pixels and loses, in order,
buffered openings, buffered protrusions, and connected regions too small
to hold one module with its clearances.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Any, Mapping

import numpy as np

from . import raster
from .geometry import FacadeGeometry, InvalidGeometry
from .layout import PANEL_S, PanelSpec, ScaleFactors, min_panel_area_px, scale_factors
from .raster import LabelMap

logger = logging.getLogger(__name__)

OPENING_CLASSES = ("window", "door", "shop")
PROTRUSION_CLASSES = ("balcony", "cornice", "sill", "molding", "deco", "pillar", "blind")

# denominator choices for f_PV
DENOM_SURFACE = "surface"  # every pixel that is neither background nor unknown
DENOM_FACADE_CLASS = "facade-class"

THRESHOLD_ALWAYS = "always"
THRESHOLD_AREA = "area"


class ZeroFacadePixels(UserWarning):
    pass


class EmptyDenominator(ValueError):
    pass


@dataclass(frozen=True)
class SuitabilityConfig:
    opening_buffer_m: float = 0.10
    protrusion_buffers_m: Mapping[str, float] = field(
        default_factory=lambda: {c: 0.05 for c in PROTRUSION_CLASSES}
    )
    # per-class minimum component area (px) for a protrusion to be excluded
    protrusion_area_threshold_px: Mapping[str, int] = field(
        default_factory=lambda: {c: 0 for c in PROTRUSION_CLASSES}
    )
    protrusion_threshold_mode: str = THRESHOLD_AREA
    # None disables small-component removal
    min_component_panel: PanelSpec | None = PANEL_S
    gap_m: float = 0.02
    connectivity: int = 8
    denominator: str = DENOM_SURFACE

    def __post_init__(self) -> None:
        if self.opening_buffer_m < 0:
            raise ValueError("opening buffer must be >= 0")
        for cls, v in self.protrusion_buffers_m.items():
            if cls not in PROTRUSION_CLASSES:
                raise ValueError(f"{cls!r} is not a protrusion class")
            if v < 0:
                raise ValueError(f"buffer for {cls} must be >= 0")
        for cls, v in self.protrusion_area_threshold_px.items():
            if cls not in PROTRUSION_CLASSES:
                raise ValueError(f"{cls!r} is not a protrusion class")
            if v < 0:
                raise ValueError(f"area threshold for {cls} must be >= 0")
        if self.protrusion_threshold_mode not in (THRESHOLD_ALWAYS, THRESHOLD_AREA):
            raise ValueError(f"unknown threshold mode {self.protrusion_threshold_mode!r}")
        if self.connectivity not in (4, 8):
            raise ValueError("connectivity must be 4 or 8")
        if self.denominator not in (DENOM_SURFACE, DENOM_FACADE_CLASS):
            raise ValueError(f"unknown denominator {self.denominator!r}")
        if self.gap_m < 0:
            raise ValueError("gap must be >= 0")

    @classmethod
    def from_dict(cls, data: Mapping[str, Any], catalog: Mapping[str, PanelSpec] | None = None) -> "SuitabilityConfig":
        data = dict(data)
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown suitability keys: {sorted(unknown)}")
        base = cls()
        if "protrusion_buffers_m" in data:
            data["protrusion_buffers_m"] = {**base.protrusion_buffers_m, **data["protrusion_buffers_m"]}
        if "protrusion_area_threshold_px" in data:
            data["protrusion_area_threshold_px"] = {
                **base.protrusion_area_threshold_px,
                **data["protrusion_area_threshold_px"],
            }
        if "min_component_panel" in data and isinstance(data["min_component_panel"], str):
            from .layout import DEFAULT_CATALOG

            lookup = catalog or {p.name: p for p in DEFAULT_CATALOG}
            data["min_component_panel"] = lookup[data["min_component_panel"]]
        return replace(base, **data)

    def to_dict(self) -> dict[str, Any]:
        return {
            "opening_buffer_m": self.opening_buffer_m,
            "protrusion_buffers_m": dict(sorted(self.protrusion_buffers_m.items())),
            "protrusion_area_threshold_px": dict(sorted(self.protrusion_area_threshold_px.items())),
            "protrusion_threshold_mode": self.protrusion_threshold_mode,
            "min_component_panel": None if self.min_component_panel is None else self.min_component_panel.name,
            "gap_m": self.gap_m,
            "connectivity": self.connectivity,
            "denominator": self.denominator,
        }


@dataclass(frozen=True)
class SuitabilityResult:
    mask: np.ndarray = field(repr=False)
    facade_denominator_px: int
    pv_fraction: float
    pv_area_m2: float
    # (step, class or None, pixels removed)
    exclusion_log: tuple[tuple[str, str | None, int], ...]
    flags: tuple[str, ...] = ()

    @property
    def popcount(self) -> int:
        return int(self.mask.sum())


def pv_fraction(mask_or_count: np.ndarray | int, facade_count: int) -> float:
    if facade_count < 0:
        raise ValueError("facade pixel count must be >= 0")
    n = int(np.count_nonzero(mask_or_count)) if isinstance(mask_or_count, np.ndarray) else int(mask_or_count)
    if facade_count == 0:
        return 0.0
    return n / facade_count


def pv_area(fraction: float, geom: FacadeGeometry) -> float:
    if not 0.0 <= fraction <= 1.0:
        raise ValueError(f"fraction {fraction} outside [0, 1]")
    return fraction * geom.width_m * geom.height_m


def facade_surface(label_map: LabelMap) -> np.ndarray:
    return ~raster.class_mask(label_map, ("background", "unknown"))


def class_group_shares(label_map: LabelMap, denominator: np.ndarray | None = None) -> dict[str, float]:
    """Wall / glazing / other shares over the facade surface (sum to 1)."""
    denom = facade_surface(label_map) if denominator is None else np.asarray(denominator, bool)
    total = int(denom.sum())
    if total == 0:
        raise EmptyDenominator("facade surface is empty")
    labels = label_map.labels[denom]
    wall = int(np.count_nonzero(labels == raster.FACADE))
    glazing = int(np.count_nonzero((labels == raster.WINDOW) | (labels == raster.SHOP)))
    return {"wall": wall / total, "glazing": glazing / total, "other": (total - wall - glazing) / total}


def _buffer_px(meters: float, sf: ScaleFactors) -> tuple[int, int]:
    # ceiling so clearances are never under-applied
    return math.ceil(meters * sf.s_x - 1e-9), math.ceil(meters * sf.s_y - 1e-9)


def _protrusion_region(label_map: LabelMap, cls: str, cfg: SuitabilityConfig) -> np.ndarray:
    region = raster.class_mask(label_map, (cls,))
    threshold = cfg.protrusion_area_threshold_px.get(cls, 0)
    if cfg.protrusion_threshold_mode == THRESHOLD_AREA and threshold > 1 and region.any():
        comps = raster.connected_components(region, cfg.connectivity)
        keep = np.zeros(comps.count + 1, dtype=bool)
        for cid, area in comps.areas.items():
            keep[cid] = area >= threshold
        region = keep[comps.label_grid]
    return region


def build_pv_mask(label_map: LabelMap, cfg: SuitabilityConfig, geom: FacadeGeometry) -> SuitabilityResult:
    if not isinstance(geom, FacadeGeometry):
        raise InvalidGeometry("geometry required")
    sf = scale_factors(geom, label_map.width_px, label_map.height_px)
    log: list[tuple[str, str | None, int]] = []

    mask = raster.class_mask(label_map, ("facade",))
    log.append(("select", "facade", 0))

    openings = raster.class_mask(label_map, OPENING_CLASSES)
    rx, ry = _buffer_px(cfg.opening_buffer_m, sf)
    before = int(mask.sum())
    mask &= ~raster.dilate(openings, rx, ry)
    log.append(("openings", None, before - int(mask.sum())))

    for cls in PROTRUSION_CLASSES:
        region = _protrusion_region(label_map, cls, cfg)
        rx, ry = _buffer_px(cfg.protrusion_buffers_m.get(cls, 0.0), sf)
        before = int(mask.sum())
        mask &= ~raster.dilate(region, rx, ry)
        log.append(("protrusions", cls, before - int(mask.sum())))

    if cfg.min_component_panel is not None:
        min_area = max(1, min_panel_area_px(cfg.min_component_panel, cfg.gap_m, sf))
        before = int(mask.sum())
        mask = raster.remove_small_components(mask, min_area, cfg.connectivity)
        log.append(("components", None, before - int(mask.sum())))

    if cfg.denominator == DENOM_SURFACE:
        denom = int(facade_surface(label_map).sum())
    else:
        denom = int(raster.class_mask(label_map, ("facade",)).sum())

    flags: tuple[str, ...] = ()
    if denom == 0:
        logger.warning("label map has no facade pixels; f_PV set to 0")
        flags = ("zero-facade-pixels",)
    f = pv_fraction(mask, denom)
    mask.setflags(write=False)
    return SuitabilityResult(
        mask=mask,
        facade_denominator_px=denom,
        pv_fraction=f,
        pv_area_m2=pv_area(f, geom),
        exclusion_log=tuple(log),
        flags=flags,
    )
