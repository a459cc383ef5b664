import math

import numpy as np
import pytest

from apsolve.errors import DomainError
from apsolve.grid import (
    SHRINKING,
    Grid,
    State,
    TruncationPolicy,
    extrapolate_boundary,
    lipschitz_constant,
    shrink,
    truncation_radius,
)
from apsolve.model import ModelConstants, estimate_constants, paper_1d

from oracles import bisect, quadrature_total


def _line_state(values):
    values = np.asarray(values, dtype=float)
    n = (len(values) - 1) // 2
    return State(Grid.uniform(float(n), 1.0, n), values)


@pytest.mark.parametrize("power", [1, 2, 3])
def test_extrapolation_exact_on_monomials(power):
    i = np.arange(1, 10, dtype=float)  # u_1 .. u_9
    ghosted = extrapolate_boundary(_line_state(i**power))
    assert ghosted.values[0] == pytest.approx(0.0, abs=1e-12)
    assert ghosted.values[-1] == pytest.approx(10.0**power, rel=1e-12)
    assert ghosted.grid.shape == (11,)


def test_extrapolation_random_cubics(rng):
    grid = Grid.uniform(0.3, 0.1, 6)
    for _ in range(100):
        c = rng.normal(size=4)
        p = np.polynomial.Polynomial(c)
        g = extrapolate_boundary(State.sample(p, grid))
        x = g.grid.axes()[0]
        for k in (0, -1):
            assert g.values[k] == pytest.approx(p(x[k]), rel=1e-12, abs=1e-12)


def test_extrapolation_two_dimensional_axis_by_axis(rng):
    grid = Grid.uniform((0.0, 1.0), (0.1, 0.2), (4, 5))
    c = rng.normal(size=(4, 4))
    f = lambda X: np.polynomial.polynomial.polyval2d(X[..., 0], X[..., 1], c)  # noqa: E731
    g = extrapolate_boundary(State.sample(f, grid))
    exact = f(g.grid.points())
    # edges (not corners) are exact for tensor cubics
    assert np.allclose(g.values[0, 1:-1], exact[0, 1:-1], rtol=1e-10, atol=1e-10)
    assert np.allclose(g.values[1:-1, -1], exact[1:-1, -1], rtol=1e-10, atol=1e-10)


def test_extrapolation_needs_four_points():
    with pytest.raises(DomainError):
        extrapolate_boundary(_line_state([0.0, 1.0, 2.0]))


def test_shrink_examples():
    s = _line_state(np.arange(7.0))
    s5 = shrink(s)
    assert s5.values.tolist() == [1, 2, 3, 4, 5]
    assert s5.grid.x0 == s.grid.x0
    assert shrink(s5).grid.shape == (3,)
    with pytest.raises(DomainError):
        shrink(shrink(s5))
    s2 = State(Grid.uniform((0, 0), 1.0, 4), np.zeros((9, 9)))
    assert shrink(s2).grid.shape == (7, 7)


def test_shrink_commutes_in_2d(rng):
    v = rng.normal(size=(9, 11))
    s = State(Grid.uniform((0, 0), (1.0, 0.5), (4, 5)), v)
    a = shrink(shrink(s)).values
    b = v[1:-1, :][:, 1:-1][1:-1, :][:, 1:-1]
    assert np.array_equal(a, b)


def test_argmin_ties_go_to_smallest_index():
    s = _line_state([3.0, 1.0, 2.0, 1.0, 5.0])
    assert s.argmin() == (1.0,)


def test_lipschitz_constant_per_axis():
    assert lipschitz_constant(np.array([0.0, 1.0, 3.0]), (0.5,)) == (4.0,)


def test_policy_padding():
    with pytest.raises(DomainError):
        TruncationPolicy(SHRINKING, 3).check(4)
    TruncationPolicy(SHRINKING, 4).check(4)


def test_from_halfwidth_requires_multiple():
    assert Grid.from_halfwidth(1.0, 0.05, 5.0).shape == (201,)
    with pytest.raises(DomainError):
        Grid.from_halfwidth(0.0, 0.3, 1.0)


def _consts(a_low=1.0, b_low=0.0, K=0.0, psi_M=1.0):
    return ModelConstants(L0=0, K=K, kappa=1, I_m=0, I_M=1, a_low=a_low, a_high=1, b_low=b_low, b_high=0, psi_M=psi_M)


def test_truncation_radius_closed_form_example():
    X = truncation_radius(_consts(), eps=1.0, dt=0.1, T=0.0, dx=1.0)
    oracle = bisect(lambda r: 2 * math.exp(-r) / (1 - math.exp(-1)) - 0.1, 0.0, 20.0)
    assert X == pytest.approx(oracle, abs=1e-10)
    assert X == pytest.approx(3.45, abs=5e-3)


def test_truncation_radius_monotone():
    c = _consts(a_low=0.5, b_low=-0.3, K=1.0)
    eps = 1e-2
    radii = [truncation_radius(c, eps, dt, 1.0, 0.05) for dt in (1e-2, 5e-3, 1e-3, 1e-4)]
    assert all(b >= a for a, b in zip(radii, radii[1:]))
    for dt in (1e-2, 1e-3):
        gain = truncation_radius(c, eps, dt / 2, 1.0, 0.05) - truncation_radius(c, eps, dt, 1.0, 0.05)
        assert gain <= math.log(2) * eps / 0.5 + 1e-12
    slopes = [truncation_radius(_consts(a_low=a, b_low=0.0), 0.1, 1e-3, 0.0, 0.05) for a in (0.5, 1.0, 2.0)]
    assert slopes[0] >= slopes[1] >= slopes[2]


def test_truncation_radius_bounded_as_eps_vanishes():
    c = _consts(a_low=0.5, b_low=-0.3)
    assert truncation_radius(c, 1e-12, 1e-3, 1.0, 0.05) == truncation_radius(c, 1e-6, 1e-3, 1.0, 0.05)


def test_truncation_radius_needs_coercivity():
    with pytest.raises(DomainError):
        truncation_radius(_consts(a_low=0.0), 0.1, 1e-3, 1.0, 0.05)


def test_truncation_radius_a_posteriori_paper():
    m = paper_1d()
    eps, dt, dx = 1e-2, 5e-4, 0.05
    consts = estimate_constants(m, m.grid(dx), 1.0)
    X = truncation_radius(consts, eps, dt, 1.0, dx)
    assert 0 < X < 20

    def total(radius):
        n = math.ceil(radius / dx)
        x = m.x0[0] + dx * np.arange(-n, n + 1)
        return quadrature_total(m.u_init(x), eps, dx)

    assert abs(total(X) - total(2 * X)) < dt
