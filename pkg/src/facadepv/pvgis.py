"""Client for a PVGIS-style ``PVcalc`` irradiance service.

One GET per facade orientation, bounded retries with exponential backoff,
and a JSON-file disk cache so repeated batch runs do not hit the network.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import tempfile
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import requests

from .energy import SOURCE_OFFLINE, SOURCE_SERVICE, SpecificYield

logger = logging.getLogger(__name__)

DEFAULT_ENDPOINT = "https://re.jrc.ec.europa.eu/api/v5_3/PVcalc"
ENV_ENDPOINT = "FACADEPV_ENDPOINT"
ENV_CACHE_DIR = "FACADEPV_CACHE_DIR"

FACADE_TILT_DEG = 90.0
LOSS_CABLE_PCT = 1.0
LOSS_INVERTER_PCT = 2.0
LOSS_PV_PCT = 0.5


class IrradianceServiceError(Exception):
    pass


class ServiceUnreachable(IrradianceServiceError):
    pass


class MalformedResponse(IrradianceServiceError):
    pass


class CoordinatesOutOfCoverage(IrradianceServiceError):
    pass


def combined_loss_pct(*losses_pct: float) -> float:
    """Multiplicative combination of independent loss percentages."""
    kept = 1.0
    for loss in losses_pct:
        if loss < 0:
            raise ValueError("loss percentages must be >= 0")
        kept *= 1.0 - loss / 100.0
    return (1.0 - kept) * 100.0


def compass_to_aspect(azimuth_deg: float) -> float:
    """Compass bearing (0 = N, clockwise) to service aspect (0 = S, 90 = W, -90 = E)."""
    aspect = (azimuth_deg - 180.0) % 360.0
    if aspect >= 180.0:
        aspect -= 360.0
    return aspect


@dataclass(frozen=True)
class YieldInputs:
    latitude_deg: float
    longitude_deg: float
    azimuth_deg: float
    tilt_deg: float = FACADE_TILT_DEG
    mounting: str = "building"
    loss_cable_pct: float = LOSS_CABLE_PCT
    loss_inverter_pct: float = LOSS_INVERTER_PCT
    loss_pv_pct: float = LOSS_PV_PCT

    def __post_init__(self) -> None:
        if not abs(self.latitude_deg) <= 90 or not abs(self.longitude_deg) <= 180:
            raise ValueError("coordinates out of range")
        if min(self.loss_cable_pct, self.loss_inverter_pct, self.loss_pv_pct) < 0:
            raise ValueError("loss percentages must be >= 0")

    @property
    def loss_pct(self) -> float:
        return combined_loss_pct(self.loss_cable_pct, self.loss_inverter_pct, self.loss_pv_pct)

    def cache_key(self) -> str:
        parts = (
            f"{round(self.latitude_deg, 4):.4f}",
            f"{round(self.longitude_deg, 4):.4f}",
            f"{round(self.azimuth_deg) % 360:d}",
            f"{round(self.tilt_deg, 1):.1f}",
            self.mounting,
            f"{self.loss_pct:.4f}",
        )
        return "_".join(parts)


def parse_response(payload: Any, peak_kwp: float) -> SpecificYield:
    """Specific yield from the annual totals block of a ``PVcalc`` reply."""
    try:
        fixed = payload["outputs"]["totals"]["fixed"]
        e_y = float(fixed["E_y"])
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedResponse(f"missing outputs.totals.fixed.E_y: {exc!r}") from exc
    if peak_kwp <= 0:
        raise ValueError("peak power must be positive")
    y_spec = e_y / peak_kwp
    if y_spec < 0:
        raise MalformedResponse(f"negative annual yield {e_y}")
    h_poa = fixed.get("H(i)_y")
    pr = None
    if h_poa is not None:
        h_poa = float(h_poa)
        # PR follows from Y = PR * H / G_STC with G_STC = 1 kW/m2
        pr = y_spec / h_poa if h_poa > 0 else None
        if pr is None:
            h_poa = None
    return SpecificYield(y_spec, SOURCE_SERVICE, pr, h_poa)


@dataclass
class PVGISClient:
    endpoint: str = DEFAULT_ENDPOINT
    cache_dir: Path | None = None
    retries: int = 3
    backoff_s: float = 0.5
    timeout_s: float = 30.0
    max_in_flight: int = 2
    session: Any = None
    sleep: Any = time.sleep
    request_count: int = field(default=0, init=False)

    def __post_init__(self) -> None:
        if self.session is None:
            self.session = requests.Session()
        if self.cache_dir is not None:
            self.cache_dir = Path(self.cache_dir)
        self._slots = threading.BoundedSemaphore(max(1, self.max_in_flight))
        self._write_lock = threading.Lock()
        self._count_lock = threading.Lock()

    @classmethod
    def from_env(cls, **kwargs: Any) -> "PVGISClient":
        kwargs.setdefault("endpoint", os.environ.get(ENV_ENDPOINT, DEFAULT_ENDPOINT))
        cache = os.environ.get(ENV_CACHE_DIR)
        if cache and "cache_dir" not in kwargs:
            kwargs["cache_dir"] = Path(cache)
        return cls(**kwargs)

    def _cache_path(self, inputs: YieldInputs) -> Path | None:
        if self.cache_dir is None:
            return None
        key = inputs.cache_key()
        digest = hashlib.sha1(f"{self.endpoint}|{key}".encode()).hexdigest()[:12]
        return self.cache_dir / f"{key}_{digest}.json"

    def _read_cache(self, path: Path | None) -> SpecificYield | None:
        if path is None or not path.is_file():
            return None
        try:
            data = json.loads(path.read_text())
            return SpecificYield(
                data["y_spec_kwh_per_kwp_yr"], SOURCE_SERVICE, data.get("pr_ann"), data.get("h_poa_kwh_m2_yr")
            )
        except (OSError, ValueError, KeyError) as exc:
            logger.warning("ignoring unreadable cache entry %s: %s", path, exc)
            return None

    def _write_cache(self, path: Path | None, y: SpecificYield) -> None:
        if path is None:
            return
        data = {
            "y_spec_kwh_per_kwp_yr": y.y_spec_kwh_per_kwp_yr,
            "pr_ann": y.pr_ann,
            "h_poa_kwh_m2_yr": y.h_poa_kwh_m2_yr,
        }
        with self._write_lock:
            path.parent.mkdir(parents=True, exist_ok=True)
            fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
            with os.fdopen(fd, "w") as fh:
                json.dump(data, fh, sort_keys=True)
            os.replace(tmp, path)

    def params(self, inputs: YieldInputs, peak_kwp: float) -> dict[str, Any]:
        # same rounding as the cache key, so a cached answer is the one a request would give
        return {
            "lat": round(inputs.latitude_deg, 4),
            "lon": round(inputs.longitude_deg, 4),
            "peakpower": peak_kwp,
            "loss": round(inputs.loss_pct, 4),
            "angle": inputs.tilt_deg,
            "aspect": compass_to_aspect(round(inputs.azimuth_deg)),
            "mountingplace": inputs.mounting,
            "outputformat": "json",
        }

    def _get(self, params: dict[str, Any]) -> Any:
        last: Exception | None = None
        for attempt in range(self.retries + 1):
            try:
                with self._slots:
                    with self._count_lock:
                        self.request_count += 1
                    resp = self.session.get(self.endpoint, params=params, timeout=self.timeout_s)
            except requests.RequestException as exc:
                last = exc
            else:
                if resp.status_code == 200:
                    try:
                        return resp.json()
                    except ValueError as exc:
                        raise MalformedResponse(f"response is not JSON: {exc}") from exc
                if 400 <= resp.status_code < 500:
                    _raise_client_error(resp)
                last = ServiceUnreachable(f"HTTP {resp.status_code}")
            if attempt < self.retries:
                self.sleep(self.backoff_s * 2**attempt)
        raise ServiceUnreachable(f"{self.endpoint} failed after {self.retries + 1} attempts: {last}")

    def fetch_specific_yield(self, inputs: YieldInputs, peak_kwp: float = 1.0) -> SpecificYield:
        path = self._cache_path(inputs)
        cached = self._read_cache(path)
        if cached is not None:
            return cached
        payload = self._get(self.params(inputs, peak_kwp))
        y = parse_response(payload, peak_kwp)
        self._write_cache(path, y)
        return y


def _raise_client_error(resp: Any) -> None:
    try:
        message = str(resp.json().get("message", ""))
    except (ValueError, AttributeError):
        message = getattr(resp, "text", "")
    lowered = message.lower()
    if any(word in lowered for word in ("sea", "location", "coverage", "outside")):
        raise CoordinatesOutOfCoverage(message or f"HTTP {resp.status_code}")
    raise IrradianceServiceError(f"HTTP {resp.status_code}: {message}")


def offline_yield(y_spec: float) -> SpecificYield:
    return SpecificYield(float(y_spec), SOURCE_OFFLINE)


def fetch_specific_yield(
    inputs: YieldInputs,
    peak_kwp: float = 1.0,
    *,
    client: PVGISClient | None = None,
    offline: bool = False,
    offline_y_spec: float | None = None,
) -> SpecificYield | None:
    """Service lookup, or the configured offline value when ``offline`` is set.

    Returns ``None`` in offline mode without a configured value.
    """
    if offline:
        return None if offline_y_spec is None else offline_yield(offline_y_spec)
    if client is None:
        client = PVGISClient.from_env()
    return client.fetch_specific_yield(inputs, peak_kwp)
