"""Facade PV potential: suitability masks, panel layouts, yield and segmentation metrics."""

from .energy import CapacityEstimate, EnergyEstimate, SpecificYield, annual_energy, peak_capacity
from .geometry import FacadeGeometry, InvalidGeometry
from .layout import (
    PANEL_L,
    PANEL_S,
    PanelLayout,
    PanelSpec,
    PixelRect,
    ScaleFactors,
    best_layout,
    fit_grid,
    largest_rectangle,
    min_panel_area_px,
    scale_factors,
)
from .raster import LabelMap, class_mask, connected_components, dilate, load_label_map, remove_small_components
from .suitability import SuitabilityConfig, SuitabilityResult, build_pv_mask, class_group_shares, pv_area, pv_fraction

__version__ = "0.1.0"
