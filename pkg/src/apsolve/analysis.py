"""Error norms, rate fits, jump detection and the study drivers.

Scalar series are treated as piecewise constant in time: the ``n``-th entry
of a series with step ``dt`` is the value on ``((n-1) dt, n dt]``.  Series
computed with different steps are compared on the common refinement.
"""

from __future__ import annotations

import hashlib
import logging
import math
import os
import pickle
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import ApsolveError, DomainError
from .grid import EXTRAPOLATED, SHRINKING, Grid, State
from .model import Model
from .stepper_eps import EpsRunConfig, run_eps
from .stepper_limit import LimitRunConfig, run_limit

logger = logging.getLogger(__name__)

AP = "ap"
CONVERGENCE = "convergence"
UA = "ua"
TRUNCATION = "truncation"
DEMO_2D = "demo-2d"
STUDY_KINDS = (AP, CONVERGENCE, UA, TRUNCATION, DEMO_2D)

MAX_REFINEMENT = 10_000_000
ROUNDING_FLOOR = 1e-14


# --- norms ----------------------------------------------------------------------


def _same_grid(a: Grid, b: Grid) -> bool:
    return a.n_half == b.n_half and np.allclose(a.x0, b.x0, rtol=0, atol=1e-12) and np.allclose(a.dx, b.dx, rtol=1e-12, atol=0)


def linf_grid_error(a: State, b: State) -> float:
    """``max |a - b|`` over the common grid."""
    if not _same_grid(a.grid, b.grid):
        raise DomainError("states live on different grids")
    return float(np.max(np.abs(a.values - b.values)))


def restrict(fine: State, coarse: Grid) -> State:
    """Sample ``fine`` at the points of ``coarse``.

    The grids must share their centre, the coarse step must be an integer
    multiple of the fine one and the coarse lattice must fit inside.
    """
    index = []
    for x0f, x0c, hf, hc, nf, nc in zip(fine.grid.x0, coarse.x0, fine.grid.dx, coarse.dx, fine.grid.n_half, coarse.n_half):
        if abs(x0f - x0c) > 1e-12 * max(1.0, abs(x0c)):
            raise DomainError("grids are not centred at the same point")
        r = round(hc / hf)
        if r < 1 or abs(r * hf - hc) > 1e-9 * hc:
            raise DomainError(f"coarse step {hc} is not a multiple of fine step {hf}")
        if nc * r > nf:
            raise DomainError("coarse grid extends beyond the fine grid")
        index.append(slice(nf - nc * r, nf + nc * r + 1, r))
    return State(coarse, fine.values[tuple(index)])


def l1_time_error(f, g, dt: float) -> float:
    """``dt * sum |f_n - g_n|``."""
    f, g = np.asarray(f, dtype=float), np.asarray(g, dtype=float)
    if f.shape != g.shape:
        raise DomainError(f"series lengths differ: {f.shape} vs {g.shape}")
    return float(dt * np.sum(np.abs(f - g)))


def linf_time_error(f, g) -> float:
    f, g = np.asarray(f, dtype=float), np.asarray(g, dtype=float)
    if f.shape != g.shape:
        raise DomainError(f"series lengths differ: {f.shape} vs {g.shape}")
    return float(np.max(np.abs(f - g))) if f.size else 0.0


def tv_seminorm(f) -> float:
    """``sum |f_{n+1} - f_n|``."""
    f = np.asarray(f, dtype=float)
    if f.size < 1:
        raise DomainError("total variation needs at least one value")
    return float(np.sum(np.abs(np.diff(f))))


def align_series(f, g):
    """Refine two piecewise-constant series on ``[0, T]`` to a common length.

    Returns ``(f_fine, g_fine, scale)`` where ``scale`` is the common step as
    a fraction of ``T``.
    """
    f, g = np.asarray(f, dtype=float), np.asarray(g, dtype=float)
    n = math.lcm(f.size, g.size)
    if n > MAX_REFINEMENT:
        raise DomainError(f"common refinement of {f.size} and {g.size} steps is too large")
    return np.repeat(f, n // f.size), np.repeat(g, n // g.size), 1.0 / n


def series_errors(f, g, T: float) -> dict:
    """L1(0,T), Linf(0,T) and TV(0,T) of ``f - g`` on the common refinement."""
    a, b, scale = align_series(f, g)
    d = a - b
    return {
        "l1": l1_time_error(a, b, T * scale),
        "linf": linf_time_error(a, b),
        "tv": tv_seminorm(d),
    }


def hopf_cole_density(u: State, eps: float) -> State:
    """``exp(-u/eps)`` with exponents below ``-700`` mapped to exactly 0."""
    if not eps > 0:
        raise DomainError(f"eps must be positive, got {eps}")
    z = -u.values / eps
    return State(u.grid, np.where(z < -700.0, 0.0, np.exp(np.maximum(z, -700.0))))


def fit_rate(pairs) -> float:
    """Least-squares slope of ``log(err)`` against ``log(h)``."""
    pairs = [(float(h), float(e)) for h, e in pairs]
    if len(pairs) < 3:
        raise DomainError("a rate fit needs at least 3 points")
    if any(not (h > 0 and e > 0) or not (math.isfinite(h) and math.isfinite(e)) for h, e in pairs):
        raise DomainError("rate fit needs positive finite entries")
    h, e = np.log(np.array(pairs)).T
    return float(np.polyfit(h, e, 1)[0])


def detect_jumps(series, times, factor: float = 10.0) -> list[tuple[float, float]]:
    """Jumps of a scalar series as ``(time, size)`` pairs.

    A step is flagged when ``|f_{n+1} - f_n|`` exceeds ``factor`` times the
    median of the nonzero steps; consecutive flagged steps form one jump, reported at the
    time of the largest step in the run.
    """
    f = np.asarray(series, dtype=float)
    times = np.asarray(times, dtype=float)
    if f.size < 2:
        return []
    steps = np.abs(np.diff(f))
    # staircase series have many exactly flat steps; they carry no scale
    moving = steps[steps > 1e-12 * max(1.0, float(np.max(np.abs(f))))]
    if moving.size == 0:
        return []
    flagged = steps > factor * np.median(moving)
    out = []
    n = 0
    while n < steps.size:
        if not flagged[n]:
            n += 1
            continue
        start = n
        while n < steps.size and flagged[n]:
            n += 1
        k = start + int(np.argmax(steps[start:n]))
        out.append((float(times[k + 1]), float(f[n] - f[start])))
    return out


# --- reports --------------------------------------------------------------------


@dataclass
class StudyReport:
    """Errors per parameter point, fitted slopes and pass flags.

    ``rows`` hold one dict per parameter point; ``columns`` fixes the order
    used for serialisation.  Failed sub-runs appear in ``failures`` and
    their error entries are NaN.
    """

    kind: str
    columns: tuple
    rows: list = field(default_factory=list)
    slopes: dict = field(default_factory=dict)
    fit_range: dict = field(default_factory=dict)
    passed: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)
    failures: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return not self.failures and all(self.passed.values())

    def column(self, name, **where):
        return np.array([r[name] for r in self.rows if all(r[k] == v for k, v in where.items())], dtype=float)


def config_digest(params: dict) -> str:
    text = "\n".join(f"{k}={params[k]!r}" for k in sorted(params))
    return hashlib.sha256(text.encode()).hexdigest()


def worker_count(n_tasks: int) -> int:
    env = os.environ.get("APSOLVE_THREADS")
    cap = int(env) if env else (os.cpu_count() or 1)
    return max(1, min(cap, n_tasks))


def _attempt(run, cfg):
    try:
        return run(cfg)
    except ApsolveError as exc:
        return exc


def _map_runs(run, cfgs):
    """Run every config, in worker processes when allowed; failures are returned, not raised."""
    cfgs = list(cfgs)
    workers = worker_count(len(cfgs))
    if workers > 1:
        try:
            pickle.dumps(cfgs)
        except (pickle.PicklingError, AttributeError, TypeError):
            workers = 1
    if workers == 1:
        return [_attempt(run, c) for c in cfgs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_attempt, [run] * len(cfgs), cfgs))


def _strictly_decreasing(values) -> bool:
    v = np.asarray(values, dtype=float)
    return bool(np.all(np.isfinite(v)) and np.all(np.diff(v) < 0))


def _slope(xs, ys):
    pairs = [(x, y) for x, y in zip(xs, ys) if math.isfinite(y) and y > 0]
    if len(pairs) < 3:
        return math.nan
    return fit_rate(pairs)


def _within(value, target, tol) -> bool:
    return bool(math.isfinite(value) and abs(value - target) <= tol)


def _nan_row(keys):
    return {k: math.nan for k in keys}


# --- studies --------------------------------------------------------------------


def ap_study(
    model: Model,
    eps_list: Sequence[float],
    T: float = 1.0,
    dt: float = 5e-4,
    dx: float = 5e-2,
    truncation: Optional[str] = None,
    halfwidth: Optional[float] = None,
    fit_eps_max: float = 1e-4,
    slope_tol: float = 0.3,
    min_u_slope_tol: float = 0.1,
) -> StudyReport:
    """Distance between the fixed-``eps`` scheme and the limit scheme on one grid.

    Flags: both distances decrease strictly as ``eps`` decreases; their
    slopes against ``eps`` (fitted on ``eps <= fit_eps_max``) are ``1`` within
    ``slope_tol``; the slope of ``|min u|`` is ``1`` within ``min_u_slope_tol``.
    """
    eps_list = sorted(map(float, eps_list), reverse=True)
    common = dict(T=T, dt=dt, dx=dx, truncation=truncation, halfwidth=halfwidth)
    cfgs = [LimitRunConfig(model, **common)] + [EpsRunConfig(model, e, **common) for e in eps_list]
    results = _map_runs(_run_any, cfgs)
    ref, runs = results[0], results[1:]
    columns = ("eps", "linf_u", "l1_I", "linf_I", "min_u")
    report = StudyReport(AP, columns)
    if isinstance(ref, Exception):
        report.failures["reference"] = str(ref)
    for e, tr in zip(eps_list, runs):
        row = {"eps": e, **_nan_row(columns[1:]), "tv_I": math.nan}
        if isinstance(tr, Exception):
            report.failures[f"eps={e:g}"] = str(tr)
        elif not isinstance(ref, Exception):
            s = series_errors(tr.series, ref.series, T)
            row.update(
                linf_u=linf_grid_error(tr.final, ref.final),
                l1_I=s["l1"],
                linf_I=s["linf"],
                tv_I=s["tv"],
                min_u=float(tr.final.values.min()),
            )
        report.rows.append(row)

    fit = [r for r in report.rows if r["eps"] <= fit_eps_max * (1 + 1e-12)]
    xs = [r["eps"] for r in fit]
    report.fit_range = {"eps_max": fit_eps_max, "points": len(fit)}
    report.slopes = {
        "linf_u": _slope(xs, [r["linf_u"] for r in fit]),
        "l1_I": _slope(xs, [r["l1_I"] for r in fit]),
        "min_u": _slope(xs, [abs(r["min_u"]) for r in fit]),
    }
    report.passed = {
        "linf_u_decreasing": _strictly_decreasing(report.column("linf_u")),
        "l1_I_decreasing": _strictly_decreasing(report.column("l1_I")),
        "linf_u_slope": _within(report.slopes["linf_u"], 1.0, slope_tol),
        "l1_I_slope": _within(report.slopes["l1_I"], 1.0, slope_tol),
        "min_u_slope": _within(report.slopes["min_u"], 1.0, min_u_slope_tol),
    }
    params = dict(kind=AP, model=model.name, eps_list=tuple(eps_list), fit_eps_max=fit_eps_max, **common)
    report.provenance = {"config_digest": config_digest(params), "reference": f"limit scheme dt={dt:g} dx={dx:g}"}
    return report


def _run_any(cfg):
    return run_limit(cfg) if isinstance(cfg, LimitRunConfig) else run_eps(cfg)


def convergence_study(
    model: Model,
    dt_list: Sequence[float],
    lam: float = 1e-2,
    T: float = 1.0,
    dx_ref: Optional[float] = None,
    truncation: Optional[str] = None,
    halfwidth: Optional[float] = None,
    slope_tol: float = 0.3,
) -> StudyReport:
    """Limit scheme at fixed ``dt/dx = lam`` against a finer self-reference.

    The reference uses ``dx_ref`` (default: smallest ``dx`` over 4) and
    ``dt_ref = lam * dx_ref``.  Flags: slopes of ``||v - v_ref||_inf`` and
    ``||J - J_ref||_L1`` against ``dt`` are ``1`` within ``slope_tol``.
    """
    dt_list = sorted(map(float, dt_list), reverse=True)
    dxs = [dt / lam for dt in dt_list]
    dx_ref = min(dxs) / 4 if dx_ref is None else float(dx_ref)
    if dx_ref >= min(dxs):
        raise DomainError("reference step must be finer than every swept step")
    common = dict(T=T, truncation=truncation, halfwidth=halfwidth)
    cfgs = [LimitRunConfig(model, dt=lam * dx_ref, dx=dx_ref, **common)]
    cfgs += [LimitRunConfig(model, dt=dt, dx=dx, **common) for dt, dx in zip(dt_list, dxs)]
    results = _map_runs(run_limit, cfgs)
    ref, runs = results[0], results[1:]
    columns = ("dt", "dx", "linf_v", "l1_J", "linf_J", "tv_J")
    report = StudyReport(CONVERGENCE, columns)
    if isinstance(ref, Exception):
        report.failures["reference"] = str(ref)
    for dt, dx, tr in zip(dt_list, dxs, runs):
        row = {"dt": dt, "dx": dx, **_nan_row(columns[2:])}
        if isinstance(tr, Exception):
            report.failures[f"dt={dt:g}"] = str(tr)
        elif not isinstance(ref, Exception):
            s = series_errors(tr.series, ref.series, T)
            row.update(
                linf_v=linf_grid_error(tr.final, restrict(ref.final, tr.final.grid)),
                l1_J=s["l1"],
                linf_J=s["linf"],
                tv_J=s["tv"],
            )
        report.rows.append(row)
    report.fit_range = {"dt": (min(dt_list), max(dt_list))}
    report.slopes = {
        "linf_v": _slope(dt_list, report.column("linf_v")),
        "l1_J": _slope(dt_list, report.column("l1_J")),
    }
    report.passed = {
        "linf_v_slope": _within(report.slopes["linf_v"], 1.0, slope_tol),
        "l1_J_slope": _within(report.slopes["l1_J"], 1.0, slope_tol),
    }
    if not isinstance(ref, Exception):
        report.extra["reference_jumps"] = detect_jumps(ref.series, ref.times)
    params = dict(kind=CONVERGENCE, model=model.name, dt_list=tuple(dt_list), lam=lam, dx_ref=dx_ref, **common)
    report.provenance = {"config_digest": config_digest(params), "reference": f"limit scheme dx_ref={dx_ref:g} dt_ref={lam * dx_ref:g}"}
    return report


def ua_time_step(lam: float, dx: float, eps: float, T: float) -> float:
    """``lam * min(dx, dx**2/eps)`` rounded down to divide ``T``."""
    dt = lam * min(dx, dx * dx / eps)
    return T / math.ceil(T / dt * (1 - 1e-12))


def ua_study(
    model: Model,
    dx_list: Sequence[float],
    eps_list: Sequence[float],
    lam: float = 5e-2,
    T: float = 1.0,
    dx_ref: Optional[float] = None,
    truncation: Optional[str] = EXTRAPOLATED,
    halfwidth: Optional[float] = None,
    strat_ratio: float = 1.8,
    non_ua_ratio: float = 1.5,
) -> StudyReport:
    """Errors of the fixed-``eps`` scheme over ``(dx, eps)`` against per-``eps`` references.

    Flags:

    * ``stratified_linf_u`` / ``stratified_l1_I``: at every ``eps`` the error
      decreases strictly from each ``dx`` to the next finer one;
    * ``ratio_linf_u`` / ``ratio_l1_I``: the sup over ``eps`` drops by at
      least ``strat_ratio`` between the two finest steps;
    * ``not_ua_linf_I`` / ``not_ua_tv_I``: the sup over ``eps`` of the
      ``L^inf`` and TV distances drops by less than ``non_ua_ratio`` there.
    """
    dx_list = sorted(map(float, dx_list), reverse=True)
    eps_list = sorted(map(float, eps_list), reverse=True)
    dx_ref = min(dx_list) / 4 if dx_ref is None else float(dx_ref)
    if dx_ref >= min(dx_list):
        raise DomainError("reference step must be finer than every swept step")
    common = dict(T=T, truncation=truncation, halfwidth=halfwidth)
    points = [(dx_ref, e) for e in eps_list] + [(dx, e) for dx in dx_list for e in eps_list]
    cfgs = [EpsRunConfig(model, e, dt=ua_time_step(lam, dx, e, T), dx=dx, **common) for dx, e in points]
    results = _map_runs(run_eps, cfgs)
    refs = dict(zip(eps_list, results[: len(eps_list)]))
    columns = ("dx", "eps", "dt", "linf_u", "l1_I", "linf_I", "tv_I")
    report = StudyReport(UA, columns)
    for e, r in refs.items():
        if isinstance(r, Exception):
            report.failures[f"reference eps={e:g}"] = str(r)
    for (dx, e), cfg, tr in zip(points[len(eps_list) :], cfgs[len(eps_list) :], results[len(eps_list) :]):
        row = {"dx": dx, "eps": e, "dt": cfg.dt, **_nan_row(columns[3:])}
        ref = refs[e]
        if isinstance(tr, Exception):
            report.failures[f"dx={dx:g} eps={e:g}"] = str(tr)
        elif not isinstance(ref, Exception):
            s = series_errors(tr.series, ref.series, T)
            row.update(
                linf_u=linf_grid_error(tr.final, restrict(ref.final, tr.final.grid)),
                l1_I=s["l1"],
                linf_I=s["linf"],
                tv_I=s["tv"],
            )
        report.rows.append(row)

    def curves(norm):
        return np.array([report.column(norm, dx=dx) for dx in dx_list])

    def sup_ratio(norm):
        c = curves(norm)
        return float(np.max(c[-2]) / np.max(c[-1])) if len(dx_list) >= 2 else math.nan

    ratios = {n: sup_ratio(n) for n in ("linf_u", "l1_I", "linf_I", "tv_I")}
    report.extra["sup_ratio_finest"] = ratios
    report.passed = {
        "stratified_linf_u": bool(np.all(np.diff(curves("linf_u"), axis=0) < 0)),
        "stratified_l1_I": bool(np.all(np.diff(curves("l1_I"), axis=0) < 0)),
        "ratio_linf_u": ratios["linf_u"] >= strat_ratio,
        "ratio_l1_I": ratios["l1_I"] >= strat_ratio,
        "not_ua_linf_I": ratios["linf_I"] < non_ua_ratio,
        "not_ua_tv_I": ratios["tv_I"] < non_ua_ratio,
    }
    params = dict(kind=UA, model=model.name, dx_list=tuple(dx_list), eps_list=tuple(eps_list), lam=lam, dx_ref=dx_ref, **common)
    report.provenance = {"config_digest": config_digest(params), "reference": f"fixed-eps scheme dx_ref={dx_ref:g}"}
    return report


def truncation_study(
    model: Model,
    eps_list: Sequence[float],
    T: float = 1.0,
    dt: float = 5e-4,
    dx: float = 5e-2,
    halfwidth: Optional[float] = None,
) -> StudyReport:
    """Shrinking-domain runs against fixed-domain runs with extrapolated ghosts.

    Each difference is compared with the distance to the limit scheme at the
    same ``eps`` (the AP error of the shrinking run).  Flags: the ``u``
    difference stays below that error at every ``eps`` and decreases strictly
    as ``eps`` decreases; the ``I`` difference also stays below its
    counterpart and never increases above the rounding floor.
    """
    eps_list = sorted(map(float, eps_list), reverse=True)
    common = dict(T=T, dt=dt, dx=dx, halfwidth=halfwidth)
    cfgs = [LimitRunConfig(model, truncation=SHRINKING, **common)]
    for e in eps_list:
        cfgs += [EpsRunConfig(model, e, truncation=SHRINKING, **common), EpsRunConfig(model, e, truncation=EXTRAPOLATED, **common)]
    results = _map_runs(_run_any, cfgs)
    ref = results[0]
    columns = ("eps", "diff_u", "diff_I", "ap_u", "ap_I")
    report = StudyReport(TRUNCATION, columns)
    if isinstance(ref, Exception):
        report.failures["reference"] = str(ref)
    for k, e in enumerate(eps_list):
        a, b = results[1 + 2 * k], results[2 + 2 * k]
        row = {"eps": e, **_nan_row(columns[1:])}
        bad = [x for x in (a, b) if isinstance(x, Exception)]
        if bad:
            report.failures[f"eps={e:g}"] = "; ".join(map(str, bad))
        elif not isinstance(ref, Exception):
            row.update(
                diff_u=linf_grid_error(a.final, b.final),
                diff_I=l1_time_error(a.series, b.series, dt),
                ap_u=linf_grid_error(a.final, ref.final),
                ap_I=l1_time_error(a.series, ref.series, dt),
            )
        report.rows.append(row)
    du, dI = report.column("diff_u"), report.column("diff_I")
    report.passed = {
        "u_below_discretisation": bool(np.all(du <= report.column("ap_u"))),
        "I_below_discretisation": bool(np.all(dI <= report.column("ap_I"))),
        "u_decreasing": _strictly_decreasing(du),
        # below the rounding floor the I difference is noise
        "I_nonincreasing": bool(np.all(np.isfinite(dI)) and np.all(np.diff(np.maximum(dI, ROUNDING_FLOOR * T)) <= 0)),
    }
    params = dict(kind=TRUNCATION, model=model.name, eps_list=tuple(eps_list), **common)
    report.provenance = {"config_digest": config_digest(params), "reference": f"limit scheme dt={dt:g} dx={dx:g}"}
    return report


def demo_2d(
    model: Model,
    eps_list: Sequence[float] = (1e-2, 1e-4),
    T: float = 1.0,
    dt: float = 5e-4,
    dx: float = 5e-2,
    truncation: Optional[str] = None,
    halfwidth: Optional[float] = None,
    start=None,
    target=None,
    radius: float = 0.5,
) -> StudyReport:
    """Two-dimensional runs of both schemes.

    Flags: the ``L1`` distance between ``I`` and ``J`` decreases strictly as
    ``eps`` decreases, and at the smallest ``eps`` the argmin starts within
    ``radius`` of ``start`` and ends within ``radius`` of ``target``.
    """
    if model.dim != 2:
        raise DomainError("demo_2d needs a two-dimensional model")
    eps_list = sorted(map(float, eps_list), reverse=True)
    common = dict(T=T, dt=dt, dx=dx, truncation=truncation, halfwidth=halfwidth)
    cfgs = [LimitRunConfig(model, **common)] + [EpsRunConfig(model, e, **common) for e in eps_list]
    results = _map_runs(_run_any, cfgs)
    ref, runs = results[0], results[1:]
    columns = ("eps", "linf_u", "l1_I", "argmin_start_x", "argmin_start_y", "argmin_end_x", "argmin_end_y")
    report = StudyReport(DEMO_2D, columns)
    if isinstance(ref, Exception):
        report.failures["reference"] = str(ref)
    for e, tr in zip(eps_list, runs):
        row = {"eps": e, **_nan_row(columns[1:])}
        if isinstance(tr, Exception):
            report.failures[f"eps={e:g}"] = str(tr)
        elif not isinstance(ref, Exception):
            row.update(
                linf_u=linf_grid_error(tr.final, ref.final),
                l1_I=l1_time_error(tr.series, ref.series, dt),
                argmin_start_x=tr.argmin[0][0],
                argmin_start_y=tr.argmin[0][1],
                argmin_end_x=tr.argmin[-1][0],
                argmin_end_y=tr.argmin[-1][1],
            )
        report.rows.append(row)
    last = report.rows[-1]
    passed = {"l1_I_decreasing": _strictly_decreasing(report.column("l1_I"))}
    if start is not None:
        passed["argmin_starts_near"] = bool(math.dist((last["argmin_start_x"], last["argmin_start_y"]), start) <= radius)
    if target is not None:
        passed["argmin_ends_near"] = bool(math.dist((last["argmin_end_x"], last["argmin_end_y"]), target) <= radius)
    report.passed = passed
    if not isinstance(ref, Exception):
        report.extra["limit"] = ref
    report.extra["runs"] = {e: tr for e, tr in zip(eps_list, runs) if not isinstance(tr, Exception)}
    params = dict(kind=DEMO_2D, model=model.name, eps_list=tuple(eps_list), **common)
    report.provenance = {"config_digest": config_digest(params), "reference": f"limit scheme dt={dt:g} dx={dx:g}"}
    return report


_STUDIES = {
    AP: ap_study,
    CONVERGENCE: convergence_study,
    UA: ua_study,
    TRUNCATION: truncation_study,
    DEMO_2D: demo_2d,
}


def run_study(kind: str, model: Model, **params) -> StudyReport:
    """Dispatch to the study driver named ``kind`` (see ``STUDY_KINDS``)."""
    try:
        driver = _STUDIES[kind]
    except KeyError:
        raise DomainError(f"unknown study {kind!r}; choose from {STUDY_KINDS}") from None
    return driver(model, **params)
