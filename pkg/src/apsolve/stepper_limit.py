"""Time stepping for the constrained limit problem.

With ``v~ = M(v^n)`` the explicit stage at ``eps = 0``, ``J^{n+1}`` is the
root of the nondecreasing map

    g(J) = min_i (v~_i - dt R(x_i, J))

and ``v^{n+1} = v~ - dt R(x, J^{n+1})``, so that ``min v^{n+1} = 0``.  ``g``
is only piecewise smooth, hence the default solver is bisection.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import CflError, DomainError, SolverError
from .grid import EXTRAPOLATED, SHRINKING, State, TruncationPolicy, extrapolate_boundary
from .hamiltonian import LIMIT, check_cfl, monotone_step
from .model import Model, estimate_constants
from .trajectory import Trajectory, march, step_count

logger = logging.getLogger(__name__)

MAX_EXPANSIONS = 60
BISECT = "bisect"
SECANT = "secant"


class _Constraint:
    """``g(J)`` restricted to the points that can attain the minimum."""

    def __init__(self, m: Model, values, pts, dt: float):
        self.m = m
        self.dt = dt
        self.values = np.ravel(values)
        self.pts = pts
        self.n_evals = 0

    def _R(self, pts, J):
        r = np.asarray(self.m.R(pts, J), dtype=float)
        if not np.all(np.isfinite(r)):
            raise DomainError(f"growth rate is not finite at J={J}")
        return r

    def full(self, J):
        self.n_evals += 1
        r = np.ravel(self._R(self.pts, J))
        if r.size != self.values.size:
            r = np.broadcast_to(r, self.values.shape)
        return self.values - self.dt * r

    def prune(self, lo, hi):
        """Keep only points whose value can be the minimum for ``J`` in ``[lo, hi]``."""
        at_lo = self.full(lo)
        at_hi = self.full(hi)
        keep = at_lo <= at_hi.min()
        flat = np.reshape(self.pts, (self.values.size, -1))
        self.values = self.values[keep]
        self.pts = flat[keep] if flat.shape[1] > 1 else flat[keep, 0]

    def __call__(self, J):
        return float(self.full(J).min())


def _expand(g, lo, hi):
    """Widen ``[lo, hi]`` geometrically until ``g(lo) <= 0 <= g(hi)``."""
    width = max(hi - lo, 1e-3 * max(1.0, abs(lo), abs(hi)))
    g_lo = g(lo)
    step = width
    for _ in range(MAX_EXPANSIONS):
        if g_lo <= 0:
            break
        lo, step = lo - step, 2 * step
        g_lo = g(lo)
    else:
        raise SolverError("constraint map has no sign change below the bracket")
    g_hi = g(hi)
    step = width
    for _ in range(MAX_EXPANSIONS):
        if g_hi >= 0:
            break
        hi, step = hi + step, 2 * step
        g_hi = g(hi)
    else:
        raise SolverError("constraint map has no sign change above the bracket")
    return lo, hi, g_lo, g_hi


def _bisect(g, lo, hi, g_lo, g_hi):
    while True:
        if g_lo == 0:
            return lo
        if g_hi == 0:
            return hi
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        g_mid = g(mid)
        if g_mid < 0:
            lo, g_lo = mid, g_mid
        else:
            hi, g_hi = mid, g_mid
    return lo if -g_lo <= g_hi else hi


def _illinois(g, lo, hi, g_lo, g_hi):
    """Bracket-preserving false position with the Illinois modification."""
    side = 0
    while True:
        if g_lo == 0:
            return lo
        if g_hi == 0:
            return hi
        x = (lo * g_hi - hi * g_lo) / (g_hi - g_lo)
        if not lo < x < hi:
            x = 0.5 * (lo + hi)
            if x <= lo or x >= hi:
                break
        g_x = g(x)
        if g_x < 0:
            lo, g_lo = x, g_x
            if side == -1:
                g_hi *= 0.5
            side = -1
        else:
            hi, g_hi = x, g_x
            if side == 1:
                g_lo *= 0.5
            side = 1
        if hi - lo <= 4 * math.ulp(max(abs(lo), abs(hi))):
            break
    g_lo, g_hi = g(lo), g(hi)
    return lo if -g_lo <= g_hi else hi


def solve_J_constraint(
    v_tilde,
    m: Model,
    dt: float,
    grid=None,
    bracket=(0.0, 1.0),
    tol_J: Optional[float] = None,
    method: str = BISECT,
    full_output: bool = False,
):
    """Root of ``J -> min_i (v~_i - dt R(x_i, J))``.

    Parameters
    ----------
    v_tilde : State or ndarray
        Output of the explicit stage; an array needs ``grid``.
    grid : Grid or PointSet, optional
    bracket : (float, float)
        Initial bracket, typically ``(I_m, I_M)``.  It is widened
        geometrically when it does not contain a sign change.
    tol_J : float, optional
        Accepted constraint residual, ``1e-12 * max(1, bracket[1])`` by default.
    method : {"bisect", "secant"}
        ``secant`` uses bracketed false position (Illinois).
    """
    if not dt > 0:
        raise DomainError(f"dt must be positive, got {dt}")
    if method not in (BISECT, SECANT):
        raise DomainError(f"unknown method {method!r}")
    if isinstance(v_tilde, State):
        values = v_tilde.values
        grid = v_tilde.grid if grid is None else grid
    else:
        values = np.asarray(v_tilde, dtype=float)
    if grid is None:
        raise DomainError("a grid (or point set) is required for array input")
    if not np.all(np.isfinite(values)):
        raise DomainError("intermediate state has non-finite values")
    lo, hi = map(float, bracket)
    if hi < lo:
        raise DomainError(f"invalid bracket {bracket}")
    tol = 1e-12 * max(1.0, hi) if tol_J is None else tol_J

    g = _Constraint(m, values, grid.points(), dt)
    lo, hi, _, _ = _expand(g, lo, hi)
    g.prune(lo, hi)
    solve = _bisect if method == BISECT else _illinois
    J = solve(g, lo, hi, g(lo), g(hi))
    residual = g(J)
    if not abs(residual) <= tol:
        raise SolverError(f"constraint residual {residual:.3g} exceeds tolerance {tol:.3g}")
    if full_output:
        return J, {"iterations": g.n_evals, "residual": residual, "candidates": g.values.size}
    return J


def _step(v, m, dt, policy, bracket, tol_J, method, unsafe):
    if policy.kind == EXTRAPOLATED:
        v_tilde = monotone_step(extrapolate_boundary(v), dt, 0.0, unsafe=unsafe)
    else:
        v_tilde = monotone_step(v, dt, 0.0, unsafe=unsafe)
    J, info = solve_J_constraint(v_tilde, m, dt, bracket=bracket, tol_J=tol_J, method=method, full_output=True)
    r = np.asarray(m.R(v_tilde.grid.points(), J), dtype=float)
    return State(v_tilde.grid, v_tilde.values - dt * r), J, info


def step_limit(
    v: State,
    m: Model,
    dt: float,
    policy: Optional[TruncationPolicy] = None,
    bracket=(0.0, 1.0),
    tol_J: Optional[float] = None,
    method: str = BISECT,
    unsafe: bool = False,
):
    """One step of the limit scheme; returns ``(v^{n+1}, J^{n+1})``.

    No renormalisation is applied: ``min v^{n+1}`` equals the constraint
    residual, which is at most ``tol_J`` in magnitude.
    """
    policy = policy or TruncationPolicy()
    state, J, _ = _step(v, m, dt, policy, bracket, tol_J, method, unsafe)
    return state, J


@dataclass(frozen=True)
class LimitRunConfig:
    """Parameters of one run of the limit scheme (see :class:`EpsRunConfig`)."""

    model: Model
    T: float = 1.0
    dt: float = 5e-4
    dx: float = 5e-2
    truncation: Optional[str] = None
    halfwidth: Optional[float] = None
    snapshots: tuple = ()
    tol_J: Optional[float] = None
    method: str = BISECT
    unsafe: bool = False

    def __post_init__(self):
        if not self.T > 0:
            raise DomainError("T must be positive")
        if self.method not in (BISECT, SECANT):
            raise DomainError(f"unknown method {self.method!r}")
        if any(not -1e-12 <= t <= self.T * (1 + 1e-12) for t in self.snapshots):
            raise DomainError("snapshot times must lie in [0, T]")

    @property
    def n_steps(self) -> int:
        return step_count(self.T, self.dt)

    @property
    def policy(self) -> TruncationPolicy:
        kind = self.truncation or self.model.truncation
        return TruncationPolicy(kind, self.n_steps if kind == SHRINKING else 0)

    def domain(self):
        return self.model.grid(self.dx, self.halfwidth)

    def initial_grid(self):
        return self.domain().resized(self.policy.padding)


def run_limit(cfg: LimitRunConfig, callback: Optional[Callable] = None) -> Trajectory:
    """March the limit scheme from ``v^0 = u_init``.

    The sharp monotonicity and multiplier conditions are enforced; the
    enlarged-constant condition is only reported.
    """
    m = cfg.model
    n_steps = cfg.n_steps
    policy = cfg.policy
    policy.check(n_steps)
    consts = estimate_constants(m, cfg.domain(), cfg.T)
    cfl = check_cfl(LIMIT, 0.0, consts, cfg.T, cfg.dt, cfg.dx, m.dim)
    if not cfl.ok and not cfg.unsafe:
        failed = [k for k, ok in cfl.satisfied.items() if not ok and k not in cfl.advisory]
        raise CflError(f"limit stability condition fails: {failed}")
    for k in cfl.advisory:
        if not cfl.satisfied[k]:
            logger.info("advisory condition %s not met (%.3g)", k, cfl.terms[k])

    bracket = (consts.I_m, consts.I_M)
    tol_J = cfg.tol_J if cfg.tol_J is not None else 1e-12 * max(1.0, consts.I_M)
    grid0 = cfg.initial_grid()
    v0 = State.sample(m.u_init, grid0)

    def advance(v, n):
        state, J, info = _step(v, m, cfg.dt, policy, bracket, tol_J, cfg.method, cfg.unsafe)
        return state, J, info["iterations"]

    final, series, argmin, its, snaps = march(v0, advance, n_steps, cfg.dt, cfg.snapshots, callback)
    return Trajectory(
        kind="limit",
        eps=0.0,
        dt=cfg.dt,
        T=cfg.T,
        initial_grid=grid0,
        times=cfg.dt * np.arange(1, n_steps + 1),
        series=series,
        argmin=argmin,
        initial_argmin=v0.argmin(),
        final=final,
        snapshots=snaps,
        iterations=its,
        cfl=cfl,
        constants=consts,
    )
