"""
Shared fixtures for the funkrad test suite.
"""

import pytest

from src.funk_engine.config import reset_config
from src.funk_engine.fields import PhantomSpec, make_phantom
from src.funk_engine.geometry import ScanGeometry
from src.funk_engine.transform import clear_operator_cache


@pytest.fixture(autouse=True)
def fresh_state(monkeypatch):
    """Every test sees default settings and an empty operator cache."""
    for name in ("FUNKRAD_THREADS", "FUNKRAD_LOG_LEVEL", "FUNKRAD_LOG_FORMAT"):
        monkeypatch.delenv(name, raising=False)
    reset_config()
    clear_operator_cache()
    yield
    reset_config()
    clear_operator_cache()


@pytest.fixture
def full_geom():
    return ScanGeometry(detector_radius=1.5, n_detectors=64, n_radii=64)


@pytest.fixture
def partial_geom():
    return ScanGeometry(detector_radius=1.5, delta=0.3, n_detectors=64, n_radii=64)


@pytest.fixture
def disk_phantom():
    return make_phantom(PhantomSpec.parse("disk:0,0,0.5,1"), 32, 32)


@pytest.fixture
def smooth_phantom():
    return make_phantom(PhantomSpec.parse("gauss:0.2,-0.1,0.2,1;gauss:-0.3,0.3,0.12,0.7"), 32, 32)
