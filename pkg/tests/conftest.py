import numpy as np
import pytest
from hypothesis import settings

from accfit.controllers import equilibrium_spacing
from accfit.models import get_model
from accfit.simulator import simulate_follower
from accfit.synthetic import scripted_leader
from accfit.trajectory_data import KinematicSeries

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")

# Reference parameter sets for the five base models.
BASE_PARAMS = {
    1: dict(delta=4.0, v0=32.0, d0=2.5, th=1.2, a_max=1.5, a_min=-2.0),
    19: dict(theta=0.4, v0=32.0, d0=2.5, th=1.0, a_max=1.5, a_min=-2.0, a_min_hat=-2.5),
    37: dict(ks=0.3, kv=0.8, k0=0.4, v0=32.0, d0=2.5, th=1.2),
    55: dict(ks=0.3, kv=0.8, k0=0.4, v0=32.0, d0=2.5, th=1.2, a_max=1.5, a_min=-2.0),
    73: dict(ks=0.3, kv=0.8, k0=0.4, v0=32.0, d0=2.5, th=1.0, theta=0.4, a_min=-2.0, a_min_hat=-2.5),
}
EXTENSION_PARAMS = dict(tau_p=0.35, tau_a=0.5, m_load=250.0, f0=200.0, f1=0.6, f2=0.03)


def full_params(model_id):
    spec = get_model(model_id)
    p = dict(BASE_PARAMS[spec.base_id])
    p.update({k: EXTENSION_PARAMS[k] for k in spec.param_names if k in EXTENSION_PARAMS})
    return p


def constant_leader(speed=20.0, duration=100.0, dt=0.1, x0=0.0):
    n = int(round(duration / dt)) + 1
    t = np.arange(n) * dt
    return KinematicSeries(t, x0 + speed * t, np.full(n, speed), np.zeros(n))


def synthetic_follower(model_id, leader=None, gap_factor=1.2, length=5.0):
    """Follower generated by ``model_id`` behind ``leader``; returns (leader, SimResult)."""
    leader = leader if leader is not None else scripted_leader()
    spec = get_model(model_id)
    p = full_params(model_id)
    v = float(leader.v[0])
    gap = gap_factor * equilibrium_spacing(spec, v, p)
    res = simulate_follower(leader, (float(leader.x[0]) - length - gap, v), spec, p, length)
    return leader, res


@pytest.fixture(scope="session")
def leader():
    return scripted_leader()


# One line per acceptance criterion, printed after the test session.
ACCEPTANCE_LINES: dict[int, str] = {}


def report_criterion(number: int, passed: bool, detail: str) -> None:
    ACCEPTANCE_LINES[number] = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[number])
