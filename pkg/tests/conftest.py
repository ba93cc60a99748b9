import numpy as np
import pytest
from hypothesis import strategies as st

from lindjump.model import validate_spec

SLOW_SF = dict(kind="SelfFluctuating", scheme="PhotonOnly", r_max=2, rabi=[1.0, 1.0], detuning=[0.0, 0.0],
           decay=[1.0, 10.0], config_rates=[[0.0, 0.003], [0.009, 0.0]])
LIGHT_AB = dict(kind="LightAssisted", scheme="PhotonOnly", r_max=2, rabi=[1.0, 1.0], detuning=[0.0, 0.0],
            decay=[1.8, 0.15], config_rates=[[0.0, 0.35], [0.2, 0.0]])


def make(base, **changes):
    doc = dict(base)
    doc.update(changes)
    return validate_spec(doc)


def single(gamma=1.0, rabi=1.0, det=0.0, kind="SelfFluctuating"):
    return validate_spec(dict(kind=kind, scheme="PhotonOnly", r_max=1, rabi=[rabi], detuning=[det],
                              decay=[gamma], config_rates=[[0.0]]))


@pytest.fixture
def slow_sf():
    return make(SLOW_SF)


@pytest.fixture
def light_ab():
    return make(LIGHT_AB)


@pytest.fixture(params=["PhotonOnly", "PhotonAndConfig"])
def scheme(request):
    return request.param


@st.composite
def specs(draw, max_r=3):
    """Random valid model documents."""
    r = draw(st.integers(1, max_r))
    pos = st.floats(0.05, 5.0)
    rate = st.floats(0.0, 2.0)
    rates = [[0.0 if i == j else draw(rate) for j in range(r)] for i in range(r)]
    return validate_spec(dict(
        kind=draw(st.sampled_from(["SelfFluctuating", "LightAssisted"])),
        scheme=draw(st.sampled_from(["PhotonOnly", "PhotonAndConfig"])),
        r_max=r,
        rabi=[draw(st.floats(0.0, 3.0)) for _ in range(r)],
        detuning=[draw(st.floats(-2.0, 2.0)) for _ in range(r)],
        decay=[draw(pos) for _ in range(r)],
        config_rates=rates,
    ))


def connected(spec):
    """True when the configurational chain has a unique stationary distribution."""
    Q = spec.config_rates - np.diag(spec.out_rates)
    if spec.r_max == 1:
        return True
    sv = np.linalg.svd(Q, compute_uv=False)
    return sv[-2] > 1e-6


# one line per acceptance criterion, printed at the end of the run
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
