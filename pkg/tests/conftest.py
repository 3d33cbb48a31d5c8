import sys
from pathlib import Path

import pytest

ROOT = Path(__file__).resolve().parents[1]
if str(ROOT) not in sys.path:
    sys.path.insert(0, str(ROOT))

from config import presets, settings  # noqa: E402
from domain.levy_noise import GammaFamily, LevyMeasureSpec, LevyTriplet, SubordinatorSpec  # noqa: E402
from domain.volterra import VolterraKernel  # noqa: E402

PAYLOADS = ROOT / "tests" / "payloads"


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: acceptance-size runs")


@pytest.fixture(autouse=True)
def isolated_settings(monkeypatch, tmp_path):
    """Outputs go to tmp, the run log is off; settings are re-read per test."""
    monkeypatch.setenv("LEVY_RUN_LOG", "0")
    monkeypatch.setenv("LEVY_OUT_DIR", str(tmp_path / "outputs"))
    monkeypatch.delenv("LEVY_LOG_DIR", raising=False)
    monkeypatch.delenv("LEVY_CONFIG_PATH", raising=False)
    settings.cache_clear()
    yield
    settings.cache_clear()
    presets.cache_clear()


@pytest.fixture
def payload():
    def _path(name: str) -> str:
        return str(PAYLOADS / name)
    return _path


@pytest.fixture
def brownian():
    return LevyTriplet.brownian(1.0)


@pytest.fixture
def symmetric_atoms():
    return LevyTriplet(levy_measure=LevyMeasureSpec.from_atoms([(1.0, 0.5), (-1.0, 0.5)]))


@pytest.fixture
def gamma_sub():
    return SubordinatorSpec(GammaFamily(c=1.0, rate=1.0))


@pytest.fixture
def mg_kernel():
    return VolterraKernel.molchan_golosov(0.7)


@pytest.fixture
def out_dir(tmp_path):
    path = tmp_path / "run"
    path.mkdir()
    return path
