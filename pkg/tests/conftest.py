import numpy as np
import pytest

from apsolve import analysis
from apsolve.grid import lipschitz_constant
from apsolve.model import analytic_1d, paper_1d, paper_2d
from apsolve.stepper_eps import EpsRunConfig, run_eps
from apsolve.stepper_limit import LimitRunConfig, run_limit

EPS_SWEEP = (1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6)

_ACCEPTANCE = {}


def record(number, passed, detail):
    """Store one acceptance verdict for the end-of-session summary."""
    _ACCEPTANCE[number] = (bool(passed), detail)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_ACCEPTANCE):
        ok, detail = _ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture(scope="session")
def acceptance_record():
    return record


class Tracker:
    """Per-step diagnostics collected through the run callback.

    ``lipschitz`` is measured on the retained domain ``|x - x0| <= halfwidth``
    (max over axes); full states are kept every ``keep`` steps.
    """

    def __init__(self, model, keep=100):
        self.model = model
        self.keep = keep
        self.min_values = []
        self.lipschitz = []
        self.states = {}

    def retained(self, state):
        x = state.grid.points().reshape(state.values.size, -1)
        mask = np.all(np.abs(x - np.asarray(self.model.x0)) <= self.model.halfwidth + 1e-9, axis=1)
        shape = tuple(int(round(2 * self.model.halfwidth / h)) + 1 for h in state.grid.dx)
        return x[mask].reshape(shape + (-1,)), state.values.ravel()[mask].reshape(shape)

    def __call__(self, n, state, value):
        self.min_values.append(float(state.values.min()))
        _, v = self.retained(state)
        self.lipschitz.append(max(lipschitz_constant(v, state.grid.dx)))
        if n % self.keep == 0:
            self.states[n] = state


@pytest.fixture(scope="session")
def paper_limit_run():
    tracker = Tracker(paper_1d())
    tr = run_limit(LimitRunConfig(paper_1d()), callback=tracker)
    return tr, tracker


@pytest.fixture(scope="session")
def analytic_limit_run():
    return run_limit(LimitRunConfig(analytic_1d(), snapshots=(0.25, 0.5, 1.0)))


@pytest.fixture(scope="session")
def small_eps_runs():
    out = {}
    for eps in (1e-4, 1e-5, 1e-6):
        tracker = Tracker(paper_1d())
        out[eps] = (run_eps(EpsRunConfig(paper_1d(), eps), callback=tracker), tracker)
    return out


@pytest.fixture(scope="session")
def ap_report():
    return analysis.ap_study(paper_1d(), EPS_SWEEP)


@pytest.fixture(scope="session")
def ua_report():
    return analysis.ua_study(paper_1d(), (0.2, 0.1, 0.05), EPS_SWEEP, lam=5e-2)


@pytest.fixture(scope="session")
def convergence_report():
    return analysis.convergence_study(analytic_1d(), (4e-3, 2e-3, 1e-3, 5e-4), lam=1e-2)


@pytest.fixture(scope="session")
def truncation_report():
    return analysis.truncation_study(paper_1d(), EPS_SWEEP)


@pytest.fixture(scope="session")
def paper2d_limit_run():
    tracker = Tracker(paper_2d(), keep=10**9)
    tr = run_limit(LimitRunConfig(paper_2d()), callback=tracker)
    return tr, tracker


@pytest.fixture(scope="session")
def demo_report():
    m = paper_2d()
    return analysis.demo_2d(m, (1e-2, 1e-4), start=m.wells[0], target=m.wells[1])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
