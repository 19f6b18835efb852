"""Label rasters, binary masks and the morphology used to clean them.

Masks are plain 2-D ``bool`` numpy arrays (row-major, shape ``(H, W)``).
Label maps wrap a ``uint8`` array of class ids so the class table travels
with the pixels.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np
from PIL import Image, UnidentifiedImageError
from scipy import ndimage

logger = logging.getLogger(__name__)

CLASS_NAMES = (
    "background",
    "facade",
    "window",
    "door",
    "cornice",
    "sill",
    "balcony",
    "blind",
    "molding",
    "deco",
    "pillar",
    "shop",
    "unknown",
)
CLASS_IDS = {name: i for i, name in enumerate(CLASS_NAMES)}

BACKGROUND = CLASS_IDS["background"]
FACADE = CLASS_IDS["facade"]
WINDOW = CLASS_IDS["window"]
DOOR = CLASS_IDS["door"]
SHOP = CLASS_IDS["shop"]
UNKNOWN = CLASS_IDS["unknown"]

# on-disk value == class id (0 background, 1 facade, ..., 12 unknown)
DEFAULT_VALUE_MAPPING = {i: i for i in range(len(CLASS_NAMES))}


class RasterError(Exception):
    pass


class FileUnreadable(RasterError):
    pass


class EmptyRaster(RasterError):
    pass


class UnmappedLabelValue(RasterError):
    def __init__(self, value: int, pixel_index: int):
        super().__init__(f"raster value {value} at pixel {pixel_index} has no class mapping")
        self.value = value
        self.pixel_index = pixel_index


def class_id(name_or_id: str | int) -> int:
    if isinstance(name_or_id, str):
        try:
            return CLASS_IDS[name_or_id]
        except KeyError:
            raise ValueError(f"unknown class name {name_or_id!r}") from None
    cid = int(name_or_id)
    if not 0 <= cid < len(CLASS_NAMES):
        raise ValueError(f"class id {cid} outside [0, {len(CLASS_NAMES) - 1}]")
    return cid


@dataclass(frozen=True)
class LabelMap:
    """Per-pixel semantic class ids, shape ``(height_px, width_px)``."""

    labels: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        arr = np.asarray(self.labels)
        if arr.ndim != 2:
            raise ValueError("label map must be 2-D")
        if arr.size == 0:
            raise EmptyRaster("label map has zero width or height")
        if arr.min() < 0 or arr.max() >= len(CLASS_NAMES):
            raise ValueError("label map holds ids outside the class table")
        arr = arr.astype(np.uint8, copy=True)
        arr.setflags(write=False)
        object.__setattr__(self, "labels", arr)

    @property
    def height_px(self) -> int:
        return self.labels.shape[0]

    @property
    def width_px(self) -> int:
        return self.labels.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.labels.shape

    def histogram(self) -> dict[str, int]:
        counts = np.bincount(self.labels.ravel(), minlength=len(CLASS_NAMES))
        return {name: int(counts[i]) for i, name in enumerate(CLASS_NAMES)}


@dataclass(frozen=True)
class ComponentSet:
    label_grid: np.ndarray = field(repr=False)
    areas: dict[int, int]

    @property
    def count(self) -> int:
        return len(self.areas)


def read_mapping_file(path: str | Path) -> dict[int, int]:
    """Parse an ``integer = class-name`` mapping file.

    Blank lines and ``#`` comments are skipped.  Class names may also be
    given as integer ids.
    """
    mapping: dict[int, int] = {}
    text = Path(path).read_text()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected 'value = class'")
        key, value = (s.strip() for s in line.split("=", 1))
        try:
            raster_value = int(key)
        except ValueError:
            raise ValueError(f"{path}:{lineno}: raster value {key!r} is not an integer") from None
        if raster_value in mapping:
            raise ValueError(f"{path}:{lineno}: duplicate raster value {raster_value}")
        mapping[raster_value] = class_id(int(value) if value.isdigit() else value)
    return mapping


def _read_raster(path: Path) -> np.ndarray:
    try:
        with Image.open(path) as img:
            if img.mode not in ("P", "L", "I", "I;16"):
                raise FileUnreadable(
                    f"{path}: mode {img.mode} is not single-channel or palette-indexed"
                )
            # palette images keep their indices: no conversion
            return np.array(img)
    except (OSError, UnidentifiedImageError) as exc:
        raise FileUnreadable(f"{path}: {exc}") from exc


def labels_from_values(values: np.ndarray, mapping: Mapping[int, int] | None = None) -> LabelMap:
    """Map raw raster values to class ids; any unmapped value is an error."""
    mapping = DEFAULT_VALUE_MAPPING if mapping is None else mapping
    values = np.asarray(values)
    if values.ndim != 2 or values.size == 0:
        raise EmptyRaster("raster is empty")
    lut_size = max(int(values.max()), max(mapping, default=0)) + 1
    lut = np.full(lut_size, -1, dtype=np.int16)
    for raw, cid in mapping.items():
        if raw >= 0:
            lut[raw] = class_id(cid)
    if values.min() < 0:
        flat = int(np.flatnonzero(values.ravel() < 0)[0])
        raise UnmappedLabelValue(int(values.ravel()[flat]), flat)
    mapped = lut[values]
    bad = mapped < 0
    if bad.any():
        flat = int(np.flatnonzero(bad.ravel())[0])
        raise UnmappedLabelValue(int(values.ravel()[flat]), flat)
    return LabelMap(mapped.astype(np.uint8))


def load_label_map(path: str | Path, mapping: Mapping[int, int] | None = None) -> LabelMap:
    path = Path(path)
    if not path.is_file():
        raise FileUnreadable(f"{path}: no such file")
    return labels_from_values(_read_raster(path), mapping)


def save_label_map(label_map: LabelMap, path: str | Path) -> None:
    Image.fromarray(label_map.labels, mode="L").save(path)


def class_mask(label_map: LabelMap, classes: Iterable[str | int]) -> np.ndarray:
    ids = sorted({class_id(c) for c in classes})
    if not ids:
        raise ValueError("class set must be non-empty")
    return np.isin(label_map.labels, ids)


def dilate(mask: np.ndarray, radius_px: int, radius_y_px: int | None = None) -> np.ndarray:
    """Square (Chebyshev) dilation.

    ``radius_y_px`` gives a rectangular element for anisotropic rasters; it
    defaults to ``radius_px``.  Pixels outside the raster count as false.
    """
    ry = radius_px if radius_y_px is None else radius_y_px
    if radius_px < 0 or ry < 0:
        raise ValueError("dilation radius must be non-negative")
    mask = np.asarray(mask, dtype=bool)
    if (radius_px == 0 and ry == 0) or not mask.any():
        return mask.copy()
    footprint = np.ones((2 * ry + 1, 2 * radius_px + 1), dtype=bool)
    return ndimage.binary_dilation(mask, structure=footprint)


def _structure(connectivity: int) -> np.ndarray:
    if connectivity == 4:
        return ndimage.generate_binary_structure(2, 1)
    if connectivity == 8:
        return np.ones((3, 3), dtype=bool)
    raise ValueError(f"connectivity must be 4 or 8, got {connectivity}")


def connected_components(mask: np.ndarray, connectivity: int = 8) -> ComponentSet:
    grid, n = ndimage.label(np.asarray(mask, dtype=bool), structure=_structure(connectivity))
    counts = np.bincount(grid.ravel(), minlength=n + 1)
    return ComponentSet(grid, {i: int(counts[i]) for i in range(1, n + 1)})


def remove_small_components(mask: np.ndarray, min_area_px: int, connectivity: int = 8) -> np.ndarray:
    if min_area_px < 1:
        raise ValueError("min_area_px must be >= 1")
    mask = np.asarray(mask, dtype=bool)
    if min_area_px == 1:
        return mask.copy()
    comps = connected_components(mask, connectivity)
    keep = np.zeros(comps.count + 1, dtype=bool)
    for cid, area in comps.areas.items():
        keep[cid] = area >= min_area_px
    return keep[comps.label_grid]
