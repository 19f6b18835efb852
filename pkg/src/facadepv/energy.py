"""Peak capacity and annual energy from module counts."""

from __future__ import annotations

from dataclasses import dataclass

from .layout import PanelSpec

G_STC_KW_M2 = 1.0

SOURCE_SERVICE = "service"
SOURCE_OFFLINE = "offline"


@dataclass(frozen=True)
class CapacityEstimate:
    n_modules: int
    rating_wp: float
    p_dc_kwp: float


@dataclass(frozen=True)
class SpecificYield:
    y_spec_kwh_per_kwp_yr: float
    source: str
    pr_ann: float | None = None
    h_poa_kwh_m2_yr: float | None = None
    g_stc: float = G_STC_KW_M2

    def __post_init__(self) -> None:
        if self.y_spec_kwh_per_kwp_yr < 0:
            raise ValueError("specific yield must be >= 0")
        if self.pr_ann is not None and self.h_poa_kwh_m2_yr is not None:
            expected = self.pr_ann * self.h_poa_kwh_m2_yr / self.g_stc
            if abs(expected - self.y_spec_kwh_per_kwp_yr) > 1e-6 * max(abs(expected), 1e-12):
                raise ValueError(
                    f"specific yield {self.y_spec_kwh_per_kwp_yr} inconsistent with "
                    f"PR x H_POA / G_STC = {expected}"
                )

    @classmethod
    def from_decomposition(cls, pr_ann: float, h_poa_kwh_m2_yr: float, source: str = SOURCE_OFFLINE) -> "SpecificYield":
        return cls(pr_ann * h_poa_kwh_m2_yr / G_STC_KW_M2, source, pr_ann, h_poa_kwh_m2_yr)


@dataclass(frozen=True)
class EnergyEstimate:
    e_ann_kwh: float
    capacity: CapacityEstimate
    specific_yield: SpecificYield


def peak_capacity(n_modules: int, panel: PanelSpec) -> CapacityEstimate:
    if n_modules < 0:
        raise ValueError("module count must be >= 0")
    return CapacityEstimate(n_modules, panel.rating_wp, n_modules * panel.rating_wp / 1000.0)


def annual_energy(cap: CapacityEstimate, y: SpecificYield) -> EnergyEstimate:
    return EnergyEstimate(cap.p_dc_kwp * y.y_spec_kwh_per_kwp_yr, cap, y)


def annual_energy_decomposed(p_dc_kwp: float, pr_ann: float, h_poa_kwh_m2_yr: float) -> float:
    """E = P_DC * PR * H_POA / G_STC without forming the specific yield first."""
    return p_dc_kwp * pr_ann * h_poa_kwh_m2_yr / G_STC_KW_M2
