"""Monotone numerical Hamiltonian, CFL bookkeeping and the explicit operator.

The explicit stage of both schemes is

    M(u)_i = u_i + eps*s*(u_{i+1} - 2u_i + u_{i-1})/dx**2
             - s*H((u_i - u_{i-1})/dx, (u_{i+1} - u_i)/dx)

with ``H(p, q) = max(H+(p), H-(q))`` the upwind splitting of ``|p|**2``.  In
2D one Laplacian term and one ``H`` term are added per axis.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import CflError, DomainError
from .grid import State, lipschitz_constant

logger = logging.getLogger(__name__)

EPS_FIXED = "eps_fixed"
AP_LIMIT = "ap_limit"
LIMIT = "limit"
CFL_MODES = (EPS_FIXED, AP_LIMIT, LIMIT)

CFL_SLACK = 1e-12


def numerical_hamiltonian(p, q):
    """``max(p**2 [p > 0], q**2 [q < 0])``, elementwise."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    h = np.maximum(np.where(p > 0, p * p, 0.0), np.where(q < 0, q * q, 0.0))
    return h if h.ndim else float(h)


def ch_constant(L: float) -> float:
    """Sum of the sup of ``|H+'|`` and ``|H-'|`` over ``[-L, L]``, i.e. ``4L``."""
    if L < 0:
        raise DomainError(f"Lipschitz bound must be nonnegative, got {L}")
    return 4.0 * L


def limit_constant(L0: float, K: float, T: float) -> float:
    """Enlarged Hamiltonian constant of the limit-scheme CFL."""
    return ch_constant(14.0 * (L0 + K * T) + 1.0)


@dataclass(frozen=True)
class CflSpec:
    """A resolved ``(dt, dx)`` pair and the CFL quantities it was checked against.

    ``terms`` maps each condition to its left-hand side (all must be ``<= 1``
    except ``Lambda`` under ``eps_fixed``, which records the attained value).
    ``advisory`` lists conditions whose failure is logged but not enforced.
    """

    mode: str
    dt: float
    dx: float
    eps: float
    T: float
    n_steps: int
    Lambda: float
    Lambda_target: float | None = None
    terms: dict = field(default_factory=dict)
    advisory: tuple[str, ...] = ()

    @property
    def lam(self) -> float:
        return self.dt / self.dx

    @property
    def satisfied(self) -> dict:
        return {k: v <= 1.0 + CFL_SLACK for k, v in self.terms.items()}

    @property
    def ok(self) -> bool:
        return all(v for k, v in self.satisfied.items() if k not in self.advisory)


def _round_dt(dt: float, T: float) -> tuple[float, int]:
    if not dt > 0:
        raise DomainError(f"time step must be positive, got {dt}")
    n = max(1, math.ceil(T / dt * (1.0 - 1e-12)))
    return T / n, n


def cfl_terms(mode: str, eps: float, consts, T: float, dt: float, dx: float, dim: int = 1) -> dict:
    """Left-hand sides of the CFL conditions of ``mode`` for the pair ``(dt, dx)``."""
    lam = dt / dx
    if mode == EPS_FIXED:
        C = ch_constant(consts.L0 + T * consts.kappa)
        return {"Lambda": dim * (2 * eps * dt / dx**2 + C * lam)}
    if mode == AP_LIMIT:
        C = ch_constant(consts.L0 + T * consts.K)
        return {"ap_limit": dim * (2 * dt / dx**2 + C * lam)}
    if mode == LIMIT:
        LT = consts.L0 + T * consts.K
        return {
            "limit_monotone": dim * limit_constant(consts.L0, consts.K, T) * lam,
            "limit_multiplier": lam * math.sqrt(LT * LT + consts.K),
            "monotone": dim * ch_constant(LT) * lam,
        }
    raise DomainError(f"unknown CFL mode {mode!r}")


# The enlarged constant of the limit CFL is a proof device; only the sharp
# monotonicity bound and the multiplier condition are enforced.
_ADVISORY = {LIMIT: ("limit_monotone",)}


def check_cfl(mode: str, eps: float, consts, T: float, dt: float, dx: float, dim: int = 1) -> CflSpec:
    """Evaluate ``mode`` on a given pair (no rounding, no completion)."""
    n = round(T / dt)
    terms = cfl_terms(mode, eps, consts, T, dt, dx, dim)
    return CflSpec(
        mode=mode,
        dt=dt,
        dx=dx,
        eps=eps,
        T=T,
        n_steps=n,
        Lambda=terms.get("Lambda", max(terms.values())),
        terms=terms,
        advisory=_ADVISORY.get(mode, ()),
    )


def resolve_cfl(mode, eps, consts, T, *, dt=None, dx=None, lam=None, Lambda=None, dim=1) -> CflSpec:
    """Complete ``(dt, dx)`` from one given quantity so that ``mode`` holds.

    ``eps_fixed`` solves ``2 eps dt/dx**2 + C_H(L0 + T kappa) dt/dx = Lambda``
    for the missing member.  ``ap_limit`` and ``limit`` return the largest
    admissible ``dt`` (smallest admissible ``dx``).  ``dt`` is finally rounded
    down to ``T / N_t``; the attained left-hand side is reported in ``Lambda``.
    """
    given = [k for k, v in (("dt", dt), ("dx", dx), ("lam", lam)) if v is not None]
    if len(given) != 1:
        raise DomainError(f"exactly one of dt, dx, lam must be given (got {given or 'none'})")
    if any(v is not None and not v > 0 for v in (dt, dx, lam)):
        raise DomainError("the given step or ratio must be positive")
    if not 0 <= eps <= 1:
        raise DomainError(f"eps must lie in [0, 1], got {eps}")

    if mode == EPS_FIXED:
        if Lambda is None or not 0 < Lambda < 1:
            raise DomainError(f"eps_fixed needs Lambda in (0, 1), got {Lambda}")
        a = dim * 2 * eps  # coefficient of dt/dx**2
        b = dim * ch_constant(consts.L0 + T * consts.kappa)  # coefficient of dt/dx
        target = Lambda
    elif mode == AP_LIMIT:
        a = dim * 2.0
        b = dim * ch_constant(consts.L0 + T * consts.K)
        target = 1.0
    elif mode == LIMIT:
        LT = consts.L0 + T * consts.K
        a = 0.0
        b = max(dim * limit_constant(consts.L0, consts.K, T), math.sqrt(LT * LT + consts.K))
        target = 1.0
    else:
        raise DomainError(f"unknown CFL mode {mode!r}")

    if dx is not None:
        dt = target / (a / dx**2 + b / dx)
        dt, _ = _round_dt(dt, T)
    elif dt is not None:
        dt, _ = _round_dt(dt, T)
        # a y**2 + b y = target / dt with y = 1/dx
        c = target / dt
        y = c / b if a == 0 else (-b + math.sqrt(b * b + 4 * a * c)) / (2 * a)
        dx = 1.0 / y
    else:
        if a == 0:
            raise DomainError(f"mode {mode!r} fixes only the ratio dt/dx; give dt or dx")
        if b * lam >= target:
            raise DomainError(f"ratio dt/dx={lam} is infeasible for mode {mode!r}")
        dx = a * lam / (target - b * lam)
        dt, _ = _round_dt(lam * dx, T)

    spec = check_cfl(mode, eps, consts, T, dt, dx, dim)
    return CflSpec(
        mode=mode,
        dt=spec.dt,
        dx=spec.dx,
        eps=eps,
        T=T,
        n_steps=spec.n_steps,
        Lambda=spec.Lambda,
        Lambda_target=Lambda if mode == EPS_FIXED else None,
        terms=spec.terms,
        advisory=spec.advisory,
    )


def step_cfl_number(lip, dx, s: float, eps: float) -> float:
    """Left-hand side of the monotonicity condition for one explicit stage."""
    return sum(2 * eps * s / h**2 + ch_constant(L) * s / h for L, h in zip(lip, dx))


def monotone_step(u: State, s: float, eps: float, unsafe: bool = False) -> State:
    """Apply the explicit monotone operator at every interior point of ``u``.

    The result lives on the grid shrunk by one layer; pass a ghosted state
    (see :func:`~apsolve.grid.extrapolate_boundary`) to keep the lattice size.
    Raises :class:`CflError` when the monotonicity condition, evaluated with
    the discrete Lipschitz constant of ``u``, fails and ``unsafe`` is false.
    """
    if not s > 0:
        raise DomainError(f"sub-step s must be positive, got {s}")
    if eps < 0:
        raise DomainError(f"eps must be nonnegative, got {eps}")
    v = u.values
    dx = u.grid.dx
    if not unsafe:
        number = step_cfl_number(lipschitz_constant(v, dx), dx, s, eps)
        if number > 1.0 + CFL_SLACK:
            raise CflError(f"explicit stage violates monotonicity: CFL number {number:.6g} > 1")

    inner = tuple(slice(1, -1) for _ in dx)
    centre = v[inner]
    out = centre.copy()
    for axis, h in enumerate(dx):
        up = list(inner)
        dn = list(inner)
        up[axis] = slice(2, None)
        dn[axis] = slice(None, -2)
        fwd = v[tuple(up)]
        bwd = v[tuple(dn)]
        p = (centre - bwd) / h
        q = (fwd - centre) / h
        hp = np.where(p > 0, p * p, 0.0)
        hq = np.where(q < 0, q * q, 0.0)
        out -= s * np.maximum(hp, hq)
        if eps:
            out += (eps * s / h**2) * (fwd - 2 * centre + bwd)
    return State(u.grid.resized(-1), out)
