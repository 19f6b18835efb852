import sys
from pathlib import Path

import numpy as np
import pytest
from PIL import Image

sys.path.insert(0, str(Path(__file__).parent))

from facadepv.raster import CLASS_IDS, LabelMap  # noqa: E402


def lm(array) -> LabelMap:
    return LabelMap(np.asarray(array, dtype=np.uint8))


def facade_block(h, w, fill="facade", bg="background"):
    arr = np.full((h, w), CLASS_IDS[bg], dtype=np.uint8)
    arr[:, :] = CLASS_IDS[fill]
    return arr


def write_png(path, array, mode="L"):
    Image.fromarray(np.asarray(array, dtype=np.uint8), mode=mode).save(path)
    return path


class FakeResponse:
    def __init__(self, status_code=200, payload=None, text=""):
        self.status_code = status_code
        self._payload = payload
        self.text = text

    def json(self):
        if self._payload is None:
            raise ValueError("no JSON")
        return self._payload


class FakeSession:
    """Replays queued responses (or raises queued exceptions) and records calls."""

    def __init__(self, *responses):
        self.queue = list(responses)
        self.calls = []

    def get(self, url, params=None, timeout=None):
        self.calls.append((url, dict(params or {})))
        item = self.queue.pop(0) if len(self.queue) > 1 else self.queue[0]
        if isinstance(item, Exception):
            raise item
        return item


@pytest.fixture
def pvcalc_fixture():
    """Trimmed ``PVcalc`` reply for a south facade at 90 degrees, 2.5 kWp."""
    return {
        "inputs": {
            "location": {"latitude": 47.3769, "longitude": 8.5417, "elevation": 408.0},
            "mounting_system": {"fixed": {"slope": {"value": 90}, "azimuth": {"value": 0}}},
            "pv_module": {"technology": "c-Si", "peak_power": 2.5, "system_loss": 3.4651},
        },
        "outputs": {
            "totals": {
                "fixed": {
                    "E_d": 4.99,
                    "E_m": 151.83,
                    "E_y": 1821.96,
                    "H(i)_d": 2.44,
                    "H(i)_m": 74.27,
                    "H(i)_y": 891.26,
                    "SD_m": 21.05,
                    "SD_y": 79.66,
                    "l_aoi": -4.12,
                    "l_spec": "1.05",
                    "l_tg": -2.81,
                    "l_total": -18.2,
                }
            }
        },
    }
