import numpy as np
import pytest

from rrwm.cell import DEFAULT_MODEL
from rrwm.device import Device
from rrwm.watermark import calibrate_reference

QUIET = DEFAULT_MODEL.with_overrides(meas_noise=0.0)
REFERENCE_WORD = "C2F740EB"


@pytest.fixture
def quiet_model():
    return QUIET


@pytest.fixture
def small_device():
    def make(cells=8192, seed=0, model=DEFAULT_MODEL, **kw):
        return Device.new(cells, seed=seed, model=model, **kw)

    return make


@pytest.fixture(scope="session")
def set_threshold():
    return calibrate_reference(DEFAULT_MODEL, "set", 10_000, groups=32, seed=9001)


@pytest.fixture(scope="session")
def reset_threshold_15k():
    return calibrate_reference(DEFAULT_MODEL, "reset", 15_000, groups=32, seed=9002)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# acceptance verdicts, printed after the run so they survive output capture
ACCEPTANCE = {}


def record_acceptance(number, name, ok, detail=""):
    ACCEPTANCE[number] = f"ACCEPTANCE {number} {name}: {'PASS' if ok else 'FAIL'}" + (f" ({detail})" if detail else "")
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[number])
