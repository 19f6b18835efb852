from __future__ import annotations

import math
from dataclasses import dataclass


class InvalidGeometry(ValueError):
    pass


@dataclass(frozen=True)
class FacadeGeometry:
    """Physical extent and placement of one facade.

    ``azimuth_deg`` is a compass bearing (0 = north, clockwise) of the
    facade's outward normal; ``None`` when unknown.
    """

    width_m: float
    height_m: float
    azimuth_deg: float | None = None
    latitude_deg: float | None = None
    longitude_deg: float | None = None

    def __post_init__(self) -> None:
        for name in ("width_m", "height_m"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise InvalidGeometry(f"{name} must be finite and positive, got {v!r}")
        if self.latitude_deg is not None and not abs(self.latitude_deg) <= 90:
            raise InvalidGeometry(f"latitude {self.latitude_deg} outside [-90, 90]")
        if self.longitude_deg is not None and not abs(self.longitude_deg) <= 180:
            raise InvalidGeometry(f"longitude {self.longitude_deg} outside [-180, 180]")
        if self.azimuth_deg is not None and not math.isfinite(self.azimuth_deg):
            raise InvalidGeometry("azimuth must be finite")

    @property
    def area_m2(self) -> float:
        return self.width_m * self.height_m
