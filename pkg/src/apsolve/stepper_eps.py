"""Time stepping for fixed ``eps``: explicit monotone stage, then an implicit
scalar solve for the total population.

With ``u~ = M(u^n)`` the explicit stage, ``I^{n+1}`` is the root of

    phi(I) = I - dx * sum_i psi_i exp((-u~_i + dt R(x_i, I)) / eps)

and ``u^{n+1} = u~ - dt R(x, I^{n+1})``.  ``phi`` is increasing, so the root
is unique.  All sums are evaluated in log-sum-exp form.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import CflError, DomainError, SolverError
from .grid import EXTRAPOLATED, SHRINKING, State, TruncationPolicy, extrapolate_boundary
from .hamiltonian import EPS_FIXED, check_cfl, monotone_step
from .model import Model, estimate_constants
from .trajectory import Trajectory, march, step_count

logger = logging.getLogger(__name__)

MAX_NEWTON = 50
BISECT_TOL = 1e-13
MAX_DOUBLINGS = 60
LOG_OVERFLOW = 700.0
LOG_STEP = 50.0


def _unpack(u_tilde, grid):
    if isinstance(u_tilde, State):
        values = u_tilde.values
        grid = u_tilde.grid if grid is None else grid
    else:
        values = np.asarray(u_tilde, dtype=float)
    if grid is None:
        raise DomainError("a grid (or point set) is required for array input")
    if not np.all(np.isfinite(values)):
        raise DomainError("intermediate state has non-finite values")
    return values, grid


class _Population:
    """``log F(I)`` with ``F(I) = dx sum psi exp((-u + dt R(., I))/eps)``."""

    def __init__(self, m: Model, values, grid, eps: float, dt: float):
        pts = grid.points()
        psi = np.broadcast_to(np.asarray(m.psi(pts), dtype=float), values.shape)
        if np.any(psi <= 0):
            raise DomainError("weight psi must be positive on the grid")
        self.m = m
        self.pts = pts
        self.shape = values.shape
        self.base = (np.log(psi) - values / eps).ravel()
        self.rate = dt / eps
        self.log_vol = math.log(grid.cell_volume)
        self.n_evals = 0

    def _R(self, I):
        r = np.asarray(self.m.R(self.pts, I), dtype=float)
        if not np.all(np.isfinite(r)):
            raise DomainError(f"growth rate is not finite at I={I}")
        return np.broadcast_to(r, self.shape).ravel()

    def _dR(self, I):
        if self.m.dI_R is not None:
            return np.broadcast_to(np.asarray(self.m.dI_R(self.pts, I), dtype=float), self.shape).ravel()
        h = 1e-6 * max(1.0, abs(I))
        return (self._R(I + h) - self._R(I - h)) / (2 * h)

    def log_total(self, I):
        """``(log F(I), d log F / dI)``."""
        self.n_evals += 1
        a = self.base + self.rate * self._R(I)
        top = a.max()
        e = np.exp(a - top)
        s = e.sum()
        slope = self.rate * float(np.dot(e, self._dR(I))) / s
        return self.log_vol + top + math.log(s), slope

    def log_total_at_rest(self):
        """``log F`` with the reaction term removed (``R = 0``)."""
        top = self.base.max()
        return self.log_vol + top + math.log(np.exp(self.base - top).sum())


def _tol(tol_phi, I):
    return 1e-12 * max(1.0, I) if tol_phi is None else tol_phi


def _newton_direct(pop, I, tol_phi, max_newton):
    """Newton on ``phi``; returns ``(I, iterations)`` or ``None`` on divergence."""
    for k in range(max_newton):
        logF, slope = pop.log_total(I)
        if logF > LOG_OVERFLOW:
            return None
        F = math.exp(logF)
        phi = I - F
        if abs(phi) <= _tol(tol_phi, I):
            return I, k
        I_new = I - phi / (1.0 - F * slope)
        if not (math.isfinite(I_new) and I_new > 0):
            return None
        I = I_new
    return None


def _newton_log(pop, y, tol_phi, max_newton):
    """Newton on ``g(y) = y - log F(e^y)`` with ``y = log I``."""
    y = min(y, LOG_OVERFLOW)
    for k in range(max_newton):
        I = math.exp(y)
        logF, slope = pop.log_total(I)
        g = y - logF
        if abs(g) < LOG_OVERFLOW and abs(I * -math.expm1(-g)) <= _tol(tol_phi, I):
            return I, k
        step = g / (1.0 - I * slope)
        if not math.isfinite(step):
            return None
        # the log variable moves by at most LOG_STEP per iteration
        y = min(y - max(-LOG_STEP, min(LOG_STEP, step)), LOG_OVERFLOW)
    return None


def _bisect(pop, I0):
    """Bisection on the sign of ``log I - log F(I)`` with geometric expansion."""

    def sign(I):
        return math.log(I) - pop.log_total(I)[0]

    lo = hi = max(I0, 1e-300) if math.isfinite(I0) else 1.0
    for _ in range(MAX_DOUBLINGS):
        if sign(lo) <= 0:
            break
        lo *= 0.5
    else:
        raise SolverError("no sign change of phi below the initial guess")
    for _ in range(MAX_DOUBLINGS):
        if sign(hi) >= 0:
            break
        hi *= 2.0
    else:
        raise SolverError("no sign change of phi above the initial guess")
    k = 0
    while hi - lo > BISECT_TOL:
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if sign(mid) < 0:
            lo = mid
        else:
            hi = mid
        k += 1
    return 0.5 * (lo + hi), k


def solve_I_implicit(
    u_tilde,
    m: Model,
    eps: float,
    dt: float,
    grid=None,
    I0: Optional[float] = None,
    tol_phi: Optional[float] = None,
    max_newton: int = MAX_NEWTON,
    full_output: bool = False,
):
    """Root of ``phi(I) = I - dx sum psi exp((-u~ + dt R(x, I))/eps)``.

    Parameters
    ----------
    u_tilde : State or ndarray
        Output of the explicit stage.  An array needs ``grid``.
    grid : Grid or PointSet, optional
        Points and quadrature weight; defaults to ``u_tilde.grid``.
    I0 : float, optional
        Initial iterate.  Defaults to the value with the reaction switched off.
    tol_phi : float, optional
        Residual tolerance, ``1e-12 * max(1, I)`` by default.

    Newton on ``phi`` is tried first, then Newton on the logarithmic form,
    then bisection with geometric bracket expansion.  ``full_output`` also
    returns a dict with the method used and the iteration count.
    """
    if not eps > 0:
        raise DomainError(f"eps must be positive, got {eps}")
    if not dt > 0:
        raise DomainError(f"dt must be positive, got {dt}")
    values, grid = _unpack(u_tilde, grid)
    pop = _Population(m, values, grid, eps, dt)

    if I0 is None or not (math.isfinite(I0) and I0 > 0):
        y0 = pop.log_total_at_rest()
        I0 = math.exp(y0) if y0 < LOG_OVERFLOW else math.inf
    else:
        y0 = math.log(I0)

    result, method = None, "newton"
    if math.isfinite(I0) and I0 > 0:
        result = _newton_direct(pop, I0, tol_phi, max_newton)
    if result is None:
        method = "log-newton"
        result = _newton_log(pop, y0, tol_phi, max_newton)
    if result is None:
        method = "bisection"
        logger.debug("Newton iterations failed; falling back to bisection")
        result = _bisect(pop, I0)
    I, _ = result
    if not (math.isfinite(I) and I >= 0):
        raise SolverError(f"implicit solve produced I={I}")
    if full_output:
        return I, {"method": method, "iterations": pop.n_evals}
    return I


def _explicit_stage(u: State, eps: float, dt: float, policy: TruncationPolicy, unsafe: bool) -> State:
    if policy.kind == EXTRAPOLATED:
        return monotone_step(extrapolate_boundary(u), dt, eps, unsafe=unsafe)
    return monotone_step(u, dt, eps, unsafe=unsafe)


def _step(u, m, eps, dt, policy, I0, tol_phi, max_newton, unsafe):
    u_tilde = _explicit_stage(u, eps, dt, policy, unsafe)
    I, info = solve_I_implicit(u_tilde, m, eps, dt, I0=I0, tol_phi=tol_phi, max_newton=max_newton, full_output=True)
    r = np.asarray(m.R(u_tilde.grid.points(), I), dtype=float)
    return State(u_tilde.grid, u_tilde.values - dt * r), I, info


def step_eps(
    u: State,
    m: Model,
    eps: float,
    dt: float,
    policy: Optional[TruncationPolicy] = None,
    I0: Optional[float] = None,
    tol_phi: Optional[float] = None,
    unsafe: bool = False,
):
    """One step for fixed ``eps``; returns ``(u^{n+1}, I^{n+1})``.

    With the ``shrinking`` policy the result lives on the grid shrunk by one
    layer; with ``extrapolated`` it keeps the grid of ``u``.
    """
    policy = policy or TruncationPolicy()
    state, I, _ = _step(u, m, eps, dt, policy, I0, tol_phi, MAX_NEWTON, unsafe)
    return state, I


@dataclass(frozen=True)
class EpsRunConfig:
    """Parameters of one run at fixed ``eps``.

    ``truncation`` defaults to the model's preferred policy.  ``halfwidth``
    is the half-width of the retained domain around ``model.x0``; under the
    shrinking policy the initial lattice is padded by one layer per step.
    """

    model: Model
    eps: float
    T: float = 1.0
    dt: float = 5e-4
    dx: float = 5e-2
    truncation: Optional[str] = None
    halfwidth: Optional[float] = None
    snapshots: tuple = ()
    tol_phi: Optional[float] = None
    max_newton: int = MAX_NEWTON
    unsafe: bool = False

    def __post_init__(self):
        if not 0 < self.eps <= 1:
            raise DomainError(f"eps must lie in (0, 1], got {self.eps}")
        if not self.T > 0:
            raise DomainError("T must be positive")
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


def run_eps(cfg: EpsRunConfig, callback: Optional[Callable] = None) -> Trajectory:
    """March ``N_t = T/dt`` steps from ``u^0 = u_init`` on the grid.

    ``callback(n, state, I)`` is called after every step.  The run-level
    stability condition is checked at the run's own ``eps`` with the
    constants measured on the retained domain.
    """
    m = cfg.model
    n_steps = cfg.n_steps
    policy = cfg.policy
    policy.check(n_steps)
    consts = estimate_constants(m, cfg.domain(), cfg.T)
    cfl = check_cfl(EPS_FIXED, cfg.eps, consts, cfg.T, cfg.dt, cfg.dx, m.dim)
    if not cfl.ok and not cfg.unsafe:
        raise CflError(f"stability condition fails at eps={cfg.eps}: Lambda={cfl.Lambda:.6g} > 1")

    grid0 = cfg.initial_grid()
    u0 = State.sample(m.u_init, grid0)
    pop = _Population(m, u0.values, grid0, cfg.eps, cfg.dt)
    y0 = pop.log_total_at_rest()
    last = [math.exp(y0) if y0 < LOG_OVERFLOW else None]

    def advance(u, n):
        state, I, info = _step(u, m, cfg.eps, cfg.dt, policy, last[0], cfg.tol_phi, cfg.max_newton, cfg.unsafe)
        last[0] = I
        return state, I, info["iterations"]

    final, series, argmin, its, snaps = march(u0, advance, n_steps, cfg.dt, cfg.snapshots, callback)
    return Trajectory(
        kind="eps",
        eps=cfg.eps,
        dt=cfg.dt,
        T=cfg.T,
        initial_grid=grid0,
        times=cfg.dt * np.arange(1, n_steps + 1),
        series=series,
        argmin=argmin,
        initial_argmin=u0.argmin(),
        final=final,
        snapshots=snaps,
        iterations=its,
        cfl=cfl,
        constants=consts,
    )


__all__ = ["EpsRunConfig", "run_eps", "solve_I_implicit", "step_eps"]
