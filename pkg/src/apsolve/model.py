"""Problem data (growth rate, weight, initial datum) and derived constants.

Callables receive trait points in the layout produced by :meth:`Grid.points`:
a 1D array of abscissae in dimension 1, an array of shape ``(..., 2)`` in
dimension 2.  ``R`` and ``dI_R`` take a scalar total population ``I`` as
second argument and must be vectorised over the points.
"""

from __future__ import annotations

import functools
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import DomainError
from .grid import EXTRAPOLATED, SHRINKING, Grid

logger = logging.getLogger(__name__)

ROOT_TOL = 1e-12


@dataclass(frozen=True)
class Model:
    R: Callable
    psi: Callable
    u_init: Callable
    dim: int = 1
    x0: tuple[float, ...] = (0.0,)
    dI_R: Optional[Callable] = None
    name: str = "custom"
    halfwidth: float = 5.0
    truncation: str = EXTRAPOLATED
    # (initial minimiser, competing well) of the initial datum, if known
    wells: tuple = ()

    def __post_init__(self):
        if self.truncation not in (SHRINKING, EXTRAPOLATED):
            raise DomainError(f"unknown truncation policy {self.truncation!r}")
        if self.dim not in (1, 2):
            raise DomainError(f"trait dimension must be 1 or 2, got {self.dim}")
        x0 = (float(self.x0),) * self.dim if np.ndim(self.x0) == 0 else tuple(float(v) for v in self.x0)
        if len(x0) != self.dim:
            raise DomainError("x0 must have one coordinate per trait dimension")
        object.__setattr__(self, "x0", x0)

    def grid(self, dx, halfwidth=None) -> Grid:
        return Grid.from_halfwidth(self.x0, dx, self.halfwidth if halfwidth is None else halfwidth, self.dim)


@dataclass(frozen=True)
class ModelConstants:
    L0: float
    K: float
    kappa: float
    I_m: float
    I_M: float
    a_low: float
    a_high: float
    b_low: float
    b_high: float
    psi_m: float = 1.0
    psi_M: float = 1.0
    violations: tuple[str, ...] = field(default=())

    def lower_offset(self, t: float) -> float:
        """Time-decayed offset of the lower envelope."""
        return self.b_low - t * (self.a_low**2 + self.K)

    def upper_offset(self, t: float) -> float:
        return self.b_high + t * self.K


def eval_model(m: Model, x, I: float):
    """``R(x, I)``; raises :class:`DomainError` on a non-finite value."""
    value = m.R(np.asarray(x, dtype=float), float(I))
    if not np.all(np.isfinite(value)):
        raise DomainError(f"growth rate is not finite at I={I}: ill-posed model")
    return value if np.ndim(value) else float(value)


def _bisect_decreasing(f, lo, hi, tol):
    """Root of a nonincreasing function with f(lo) >= 0 >= f(hi)."""
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if f(mid) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def find_Im_IM(m: Model, grid: Grid, bracket=(0.0, 10.0), tol: float = ROOT_TOL, full_output: bool = False):
    """Roots of ``I -> min_x R(x, I)`` and ``I -> max_x R(x, I)`` on the grid.

    When a map has no sign change on ``bracket`` the corresponding endpoint
    is returned and the violation is recorded (``full_output``) and logged;
    callers keep going.
    """
    pts = grid.points()
    lo, hi = map(float, bracket)
    if not hi > lo:
        raise DomainError(f"empty bracket {bracket}")
    out = []
    violations = []
    for label, reduce in (("I_m", np.min), ("I_M", np.max)):
        f = lambda I, reduce=reduce: float(reduce(m.R(pts, I)))  # noqa: E731
        f_lo, f_hi = f(lo), f(hi)
        if f_lo < 0:
            out.append(lo)
            violations.append(f"{label}: growth-rate root assumption violated on bracket [{lo}, {hi}] (root below)")
        elif f_hi > 0:
            out.append(hi)
            violations.append(f"{label}: growth-rate root assumption violated on bracket [{lo}, {hi}] (root above)")
        else:
            out.append(_bisect_decreasing(f, lo, hi, tol))
    for v in violations:
        logger.info("%s: %s", m.name, v)
    if full_output:
        return out[0], out[1], tuple(violations)
    return out[0], out[1]


def _axis_derivatives(values: np.ndarray, dx) -> tuple[np.ndarray, np.ndarray]:
    """Sum over axes of |centred first| and |second| differences, on the interior."""
    inner = tuple(slice(1, -1) for _ in dx)
    first = np.zeros(tuple(s - 2 for s in values.shape))
    second = np.zeros_like(first)
    for axis, h in enumerate(dx):
        up = [slice(1, -1)] * len(dx)
        dn = [slice(1, -1)] * len(dx)
        up[axis] = slice(2, None)
        dn[axis] = slice(None, -2)
        fwd, bwd, mid = values[tuple(up)], values[tuple(dn)], values[inner]
        first += np.abs(fwd - bwd) / (2 * h)
        second += np.abs(fwd - 2 * mid + bwd) / (h * h)
    return first, second


def estimate_constants(m: Model, grid: Grid, T: float, n_samples: int = 65, bracket=(0.0, 10.0)) -> ModelConstants:
    """Structural constants of the model, measured on ``grid``.

    ``K`` bounds ``|dR/dI|``, ``1/|dR/dI|`` and the sup norms of ``R`` and its
    first two trait derivatives for ``I`` in ``[I_m/2, 2 I_M]``; ``kappa`` is
    the pointwise sum ``|R| + |R_x| + |R_xx|`` maximised over ``I`` in
    ``[0, 2 I_M]``.  Trait derivatives are centred differences with the grid
    step.  The coercive envelopes hold on every grid point.
    """
    if grid.size == 0:
        raise DomainError("empty grid")
    if min(grid.shape) < 3:
        raise DomainError("estimate_constants needs at least 3 points per axis")
    pts = grid.points()
    u0 = np.asarray(m.u_init(pts), dtype=float)
    L0 = max((float(np.max(np.abs(np.diff(u0, axis=a)))) / h for a, h in enumerate(grid.dx)))

    I_m, I_M, violations = find_Im_IM(m, grid, bracket, full_output=True)

    def dR_dI(I):
        if m.dI_R is not None:
            return np.asarray(m.dI_R(pts, I), dtype=float)
        h = 1e-6 * max(1.0, abs(I))
        return (m.R(pts, I + h) - m.R(pts, I - h)) / (2 * h)

    K_terms = [1.0]
    for I in np.linspace(0.5 * I_m, 2.0 * I_M, n_samples):
        r = np.asarray(m.R(pts, I), dtype=float)
        dI = np.abs(dR_dI(I))
        first, second = _axis_derivatives(r, grid.dx)
        K_terms += [dI.max(), 1.0 / max(dI.min(), 1e-300), np.abs(r).max(), first.max(), second.max()]
    K = float(max(K_terms))

    kappa = 0.0
    for I in np.linspace(0.0, 2.0 * I_M, n_samples):
        r = np.asarray(m.R(pts, I), dtype=float)
        first, second = _axis_derivatives(r, grid.dx)
        inner = tuple(slice(1, -1) for _ in grid.dx)
        kappa = max(kappa, float(np.max(np.abs(r[inner]) + first + second)))

    dist = grid.distance_to_center()
    far = dist >= 0.5 * dist.max()
    a_low = max(0.0, float(np.min((u0[far] - u0.min()) / dist[far])))
    b_low = float(np.min(u0 - a_low * dist))
    a_high = L0
    b_high = float(np.max(u0 - a_high * dist))

    psi = np.asarray(m.psi(pts), dtype=float)
    return ModelConstants(
        L0=L0,
        K=K,
        kappa=kappa,
        I_m=I_m,
        I_M=I_M,
        a_low=a_low,
        a_high=a_high,
        b_low=b_low,
        b_high=b_high,
        psi_m=float(psi.min()),
        psi_M=float(psi.max()),
        violations=violations,
    )


# --- presets -------------------------------------------------------------------


def _paper_R(x, I, dim):
    r2 = x * x if dim == 1 else np.sum(x * x, axis=-1)
    return math.exp(-I) * r2 / (1.0 + r2) - I


def _paper_dIR(x, I, dim):
    r2 = x * x if dim == 1 else np.sum(x * x, axis=-1)
    return -math.exp(-I) * r2 / (1.0 + r2) - 1.0


def _two_wells(x, alpha, beta, delta, dim):
    if dim == 1:
        d_beta, d_alpha, r2 = (x - beta) ** 2, (x - alpha) ** 2, x * x
    else:
        d_beta = np.sum((x - np.asarray(beta)) ** 2, axis=-1)
        d_alpha = np.sum((x - np.asarray(alpha)) ** 2, axis=-1)
        r2 = np.sum(x * x, axis=-1)
    return np.minimum(d_beta, d_alpha + delta) / np.sqrt(1.0 + r2)


def _linear_R(x, I):
    return x - I


def _linear_dIR(x, I):
    return -np.ones_like(x)


def _analytic_init(x):
    return np.minimum(x * x, (x - 2.0) ** 2 + 1.0)


def _unit_weight(x, dim):
    shape = np.shape(x) if dim == 1 else np.shape(x)[:-1]
    return np.ones(shape)


def paper_1d(alpha=2.0, beta=-0.2, delta=1.0) -> Model:
    return Model(
        R=functools.partial(_paper_R, dim=1),
        psi=functools.partial(_unit_weight, dim=1),
        u_init=functools.partial(_two_wells, alpha=alpha, beta=beta, delta=delta, dim=1),
        dI_R=functools.partial(_paper_dIR, dim=1),
        dim=1,
        x0=(1.0,),
        name="paper-1d",
        halfwidth=5.0,
        truncation=SHRINKING,
        wells=((beta,), (alpha,)),
    )


def analytic_1d() -> Model:
    return Model(
        R=_linear_R,
        psi=functools.partial(_unit_weight, dim=1),
        u_init=_analytic_init,
        dI_R=_linear_dIR,
        dim=1,
        x0=(0.0,),
        name="analytic-1d",
        wells=((0.0,), (2.0,)),
        halfwidth=4.0,
    )


def paper_2d(alpha=(2.0, 2.0), beta=(-0.2, -0.2), delta=1.0) -> Model:
    return Model(
        R=functools.partial(_paper_R, dim=2),
        psi=functools.partial(_unit_weight, dim=2),
        u_init=functools.partial(_two_wells, alpha=tuple(alpha), beta=tuple(beta), delta=delta, dim=2),
        dI_R=functools.partial(_paper_dIR, dim=2),
        dim=2,
        x0=(1.0, 1.0),
        name="paper-2d",
        halfwidth=5.0,
        wells=(tuple(beta), tuple(alpha)),
    )


PRESETS = {
    "paper-1d": paper_1d,
    "analytic-1d": analytic_1d,
    "paper-2d": paper_2d,
}


def get_preset(name: str) -> Model:
    try:
        return PRESETS[name]()
    except KeyError:
        raise DomainError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
