"""One test per acceptance criterion; each records a PASS/FAIL line."""

import math

import numpy as np
import pytest

from apsolve.analysis import detect_jumps
from apsolve.grid import Grid, PointSet, State, lipschitz_constant
from apsolve.hamiltonian import monotone_step
from apsolve.model import Model, find_Im_IM, paper_1d
from apsolve.stepper_eps import solve_I_implicit
from apsolve.stepper_limit import solve_J_constraint

from oracles import bisect, quadrature_total, random_lipschitz

SLACK = 1e-12


def _verdict(record, number, checks, detail):
    failed = [k for k, ok in checks.items() if not ok]
    record(number, not failed, detail + (f"; failed: {', '.join(failed)}" if failed else ""))
    assert not failed, failed


def _monotone_suite(rng, n_pairs, make_pair, dx):
    """Counts of violations of the four monotone-operator properties."""
    bad = dict(monotone=0, lipschitz=0, nonexpansive=0, constants=0)
    for _ in range(n_pairs):
        u, w, L, s, eps = make_pair(rng)
        grid = Grid.uniform(tuple(0.0 for _ in dx), dx, tuple((k - 1) // 2 for k in u.shape))
        f = lambda z: monotone_step(State(grid, z), s, eps).values  # noqa: E731
        lo, hi = np.minimum(u, w), np.maximum(u, w)
        fu, fw = f(u), f(w)
        bad["monotone"] += not np.all(f(lo) <= f(hi) + SLACK)
        bad["lipschitz"] += not max(lipschitz_constant(fu, dx)) <= L * (1 + SLACK)
        bad["nonexpansive"] += not np.max(np.abs(fu - fw)) <= np.max(np.abs(u - w)) + SLACK
        c = rng.normal()
        bad["constants"] += not np.max(np.abs(f(u + c) - (fu + c))) <= SLACK * max(1.0, abs(c)) * 10
    return bad


def _pair_1d(rng, dx=0.05):
    L = rng.uniform(0.1, 5.0)
    eps = 0.0 if rng.random() < 0.5 else 10 ** rng.uniform(-6, 0)
    s = rng.uniform(0.1, 1.0) / (2 * eps / dx**2 + 4 * L / dx)
    n = 2 * rng.integers(4, 30) + 1
    return random_lipschitz(rng, n, L, dx), random_lipschitz(rng, n, L, dx), L, s, eps


def _lipschitz_2d(rng, shape, L, dx):
    # max of mins of random l1-cones: slope at most L along each axis
    x = np.arange(shape[0])[:, None] * dx[0]
    y = np.arange(shape[1])[None, :] * dx[1]
    span = (shape[0] * dx[0], shape[1] * dx[1])

    def cones(k):
        px, py = rng.uniform(0, span[0], k), rng.uniform(0, span[1], k)
        c, slope = rng.normal(scale=0.1, size=k), rng.uniform(0.5 * L, L, k)
        sign = rng.choice([-1.0, 1.0], k)
        return [c[i] + sign[i] * slope[i] * (np.abs(x - px[i]) + np.abs(y - py[i])) for i in range(k)]

    return np.maximum(np.minimum.reduce(cones(4)), np.minimum.reduce(cones(3)))


def _pair_2d(rng, dx=(0.05, 0.05)):
    L = rng.uniform(0.1, 5.0)
    eps = 0.0 if rng.random() < 0.5 else 10 ** rng.uniform(-6, 0)
    s = rng.uniform(0.1, 1.0) / sum(2 * eps / h**2 + 4 * L / h for h in dx)
    shape = tuple(2 * rng.integers(3, 10, size=2) + 1)
    u = _lipschitz_2d(rng, shape, L, dx)
    w = _lipschitz_2d(rng, shape, L, dx)
    return u, w, L, s, eps


def test_criterion_01_monotone_operator(acceptance_record, rng):
    bad = _monotone_suite(rng, 1000, _pair_1d, (0.05,))
    _verdict(acceptance_record, 1, {k: v == 0 for k, v in bad.items()}, f"1000 random 1D pairs, violations {bad}")


def test_criterion_02_limit_invariants(acceptance_record, paper_limit_run):
    tr, tracker = paper_limit_run
    c = tr.constants
    _, I_M_wide = find_Im_IM(paper_1d(), Grid.from_halfwidth(0.0, 0.05, 2000.0))
    J = tr.series
    bound = c.L0 + tr.times * c.K + 1e-8
    checks = {
        "min_v": max(abs(v) for v in tracker.min_values) <= 1e-10,
        "J_nondecreasing": bool(np.all(np.diff(J) >= -SLACK)),
        "J_in_bracket": bool(np.all(J >= c.I_m - 1e-8) and np.all(J <= c.I_M + 1e-8)),
        "J_below_wide_I_M": bool(np.all(J <= I_M_wide + 1e-8)),
        "I_M_oracle": abs(I_M_wide - 0.567143) < 1e-5,
        "lipschitz": bool(np.all(np.array(tracker.lipschitz) <= bound)),
    }
    detail = (
        f"max|min v|={max(map(abs, tracker.min_values)):.1e}, min dJ={np.diff(J).min():.1e}, "
        f"J in [{J.min():.4f}, {J.max():.4f}], I_M(grid)={c.I_M:.6f}, I_M(wide)={I_M_wide:.6f}"
    )
    _verdict(acceptance_record, 2, checks, detail)


def test_criterion_03_asymptotic_preserving(acceptance_record, ap_report):
    r = ap_report
    detail = (
        f"slopes linf_u={r.slopes['linf_u']:.3f}, l1_I={r.slopes['l1_I']:.3f}, "
        f"|min u|={r.slopes['min_u']:.3f} on eps<=1e-4"
    )
    _verdict(acceptance_record, 3, {**r.passed, "no_failures": not r.failures}, detail)


def test_criterion_04_small_eps_bounds(acceptance_record, small_eps_runs):
    checks, spans = {}, []
    for eps, (tr, _) in small_eps_runs.items():
        c = tr.constants
        I = tr.series
        checks[f"eps={eps:g}"] = bool(np.all(I >= c.I_m / 2 - 1e-6) and np.all(I <= 2 * c.I_M + 1e-6))
        spans.append(f"eps={eps:g}: [{I.min():.4f}, {I.max():.4f}]")
    c = next(iter(small_eps_runs.values()))[0].constants
    detail = f"bounds [{c.I_m / 2:.2e}, {2 * c.I_M:.4f}]; " + ", ".join(spans)
    _verdict(acceptance_record, 4, checks, detail)


def test_criterion_05_jump_capture(acceptance_record, analytic_limit_run):
    tr = analytic_limit_run
    jumps = detect_jumps(tr.series, tr.times)
    checks = {"one_jump": len(jumps) == 1, "at_half": len(jumps) == 1 and abs(jumps[0][0] - 0.5) <= 2 * tr.dt}
    _verdict(acceptance_record, 5, checks, f"jumps {[(round(t, 5), round(s, 3)) for t, s in jumps]}")


def test_criterion_06_limit_convergence(acceptance_record, convergence_report):
    r = convergence_report
    dt_ref = float(r.provenance["reference"].split("dt_ref=")[1])
    checks = {**r.passed, "no_failures": not r.failures, "dt_ref": math.isclose(dt_ref, 1.25e-4)}
    detail = f"slopes linf_v={r.slopes['linf_v']:.3f}, l1_J={r.slopes['l1_J']:.3f}; dt_ref={dt_ref:g}"
    _verdict(acceptance_record, 6, checks, detail)


def test_criterion_07_uniform_accuracy(acceptance_record, ua_report):
    r = ua_report
    checks = {k: r.passed[k] for k in ("stratified_linf_u", "stratified_l1_I")}
    checks["no_failures"] = not r.failures
    worst = {
        n: max(float(np.max(r.column(n, dx=f) / r.column(n, dx=c))) for c, f in ((0.2, 0.1), (0.1, 0.05)))
        for n in ("linf_u", "l1_I")
    }
    detail = f"worst fine/coarse error ratio over eps: linf_u={worst['linf_u']:.3f}, l1_I={worst['l1_I']:.3f}"
    _verdict(acceptance_record, 7, checks, detail)


def test_criterion_08_non_uniformity(acceptance_record, ua_report):
    r = ua_report
    keys = ("ratio_linf_u", "ratio_l1_I", "not_ua_linf_I", "not_ua_tv_I")
    ratios = r.extra["sup_ratio_finest"]
    detail = "sup-over-eps decrease factors " + ", ".join(f"{k}={v:.3f}" for k, v in ratios.items())
    _verdict(acceptance_record, 8, {k: r.passed[k] for k in keys}, detail)


def test_criterion_09_truncation_policies(acceptance_record, truncation_report, ap_report):
    r = truncation_report
    # the same error measured by the AP study
    ap_u = ap_report.column("linf_u")
    checks = {
        **r.passed,
        "matches_ap_study": bool(np.allclose(r.column("ap_u"), ap_u, rtol=1e-12, atol=0)),
        "no_failures": not r.failures,
    }
    detail = "diff_u " + ", ".join(f"{v:.1e}" for v in r.column("diff_u"))
    _verdict(acceptance_record, 9, checks, detail)


def test_criterion_10_two_dimensional(acceptance_record, rng, demo_report, paper2d_limit_run):
    bad = _monotone_suite(rng, 200, _pair_2d, (0.05, 0.05))
    tr, tracker = paper2d_limit_run
    c = tr.constants
    J = tr.series
    r = demo_report
    checks = {
        **{f"operator_{k}": v == 0 for k, v in bad.items()},
        "min_v": max(abs(v) for v in tracker.min_values) <= 1e-10,
        "J_nondecreasing": bool(np.all(np.diff(J) >= -SLACK)),
        "J_in_bracket": bool(np.all(J >= c.I_m - 1e-8) and np.all(J <= c.I_M + 1e-8)),
        "lipschitz": bool(np.all(np.array(tracker.lipschitz) <= c.L0 + tr.times * c.K + 1e-8)),
        **r.passed,
        "no_failures": not r.failures,
    }
    last = r.rows[-1]
    detail = (
        f"l1_I {', '.join(f'{v:.2e}' for v in r.column('l1_I'))}; argmin "
        f"({last['argmin_start_x']:.2f}, {last['argmin_start_y']:.2f}) -> "
        f"({last['argmin_end_x']:.2f}, {last['argmin_end_y']:.2f})"
    )
    _verdict(acceptance_record, 10, checks, detail)


def test_criterion_11_root_solvers(acceptance_record):
    minus_I = Model(R=lambda x, I: np.full(np.shape(x), -I), psi=np.ones_like, u_init=np.zeros_like)
    zero = Model(R=lambda x, I: np.zeros(np.shape(x)), psi=np.ones_like, u_init=np.zeros_like)
    u = np.array([0.0, 0.02, 0.05])
    I_errors = [
        abs(solve_I_implicit(u, zero, 0.1, 0.01, grid=PointSet([0.0, 1.0, 2.0], 0.5)) - quadrature_total(u, 0.1, 0.5)),
        abs(solve_I_implicit(np.zeros(1), minus_I, 0.5, 0.5, grid=PointSet([0.0])) - bisect(lambda s: s - math.exp(-s), 0, 1)),
        abs(solve_I_implicit(np.zeros(2), minus_I, 1.0, 1.0, grid=PointSet([0.0, 1.0])) - bisect(lambda s: s - 2 * math.exp(-s), 0, 2)),
    ]
    linear = Model(R=lambda x, J: x - J, psi=np.ones_like, u_init=np.zeros_like)
    flat = Model(R=lambda x, J: np.full(np.shape(x), -J), psi=np.ones_like, u_init=np.zeros_like)
    v = np.array([0.7, 0.3, 0.9])
    J_errors = [
        abs(solve_J_constraint(np.array([0.1]), linear, 0.1, grid=PointSet([0.0])) + 1.0),
        abs(solve_J_constraint(np.array([0.2, 0.0]), linear, 0.1, grid=PointSet([0.0, 1.0])) - 1.0),
        abs(solve_J_constraint(v, flat, 0.1, grid=PointSet([0.0, 1.0, 2.0])) + v.min() / 0.1),
    ]
    checks = {f"I_{k}": e <= 1e-10 for k, e in enumerate(I_errors)}
    checks.update({f"J_{k}": e <= 1e-10 for k, e in enumerate(J_errors)})
    detail = f"max I error {max(I_errors):.1e}, max J error {max(J_errors):.1e}"
    _verdict(acceptance_record, 11, checks, detail)
