"""Uniform trait lattices, grid-valued states and the two boundary policies.

A grid is centred at ``x0`` and holds the points ``x0 + i*dx`` for
``i = -n_half .. n_half`` along every axis (tensor product in 2D).  Two ways
of living on a finite lattice are supported:

* ``shrinking``: start on a lattice padded by one layer per time step and
  drop the outer layer after every step, so no boundary value is ever
  invented;
* ``extrapolated``: keep the lattice fixed and rebuild one ghost layer per
  step from a four-point cubic extrapolation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DomainError

SHRINKING = "shrinking"
EXTRAPOLATED = "extrapolated"

EPS_FLOOR = 1e-6


def _as_tuple(value, dim, cast=float):
    if np.ndim(value) == 0:
        return (cast(value),) * dim
    out = tuple(cast(v) for v in value)
    if len(out) != dim:
        raise DomainError(f"expected {dim} entries, got {len(out)}")
    return out


@dataclass(frozen=True)
class Grid:
    """Uniform lattice ``x0 + i*dx``, ``|i| <= n_half`` per axis."""

    x0: tuple[float, ...]
    dx: tuple[float, ...]
    n_half: tuple[int, ...]

    def __post_init__(self):
        if not (len(self.x0) == len(self.dx) == len(self.n_half)):
            raise DomainError("x0, dx and n_half must have one entry per axis")
        if self.dim not in (1, 2):
            raise DomainError(f"only 1D and 2D lattices are supported, got dim={self.dim}")
        if any(not (h > 0 and math.isfinite(h)) for h in self.dx):
            raise DomainError(f"grid steps must be positive, got {self.dx}")
        if any(n < 1 for n in self.n_half):
            raise DomainError(f"n_half must be >= 1 on every axis, got {self.n_half}")

    @classmethod
    def uniform(cls, x0, dx, n_half, dim=None):
        if dim is None:
            dim = 1 if np.ndim(x0) == 0 else len(x0)
        return cls(_as_tuple(x0, dim), _as_tuple(dx, dim), _as_tuple(n_half, dim, int))

    @classmethod
    def from_halfwidth(cls, x0, dx, halfwidth, dim=None):
        """Lattice covering ``[x0 - halfwidth, x0 + halfwidth]`` on every axis.

        ``halfwidth`` must be an integer multiple of ``dx`` (to 1e-9 relative)
        so that the lattice boundary coincides with the requested window.
        """
        if dim is None:
            dim = 1 if np.ndim(x0) == 0 else len(x0)
        dxs = _as_tuple(dx, dim)
        hws = _as_tuple(halfwidth, dim)
        n_half = []
        for h, w in zip(dxs, hws):
            n = round(w / h)
            if n < 1 or abs(n * h - w) > 1e-9 * max(1.0, abs(w)):
                raise DomainError(f"halfwidth {w} is not a positive multiple of dx={h}")
            n_half.append(n)
        return cls(_as_tuple(x0, dim), dxs, tuple(n_half))

    @property
    def dim(self) -> int:
        return len(self.x0)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(2 * n + 1 for n in self.n_half)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.dx))

    def axes(self) -> list[np.ndarray]:
        return [x0 + h * np.arange(-n, n + 1) for x0, h, n in zip(self.x0, self.dx, self.n_half)]

    def points(self) -> np.ndarray:
        """Coordinates: shape ``(N,)`` in 1D, ``(Nx, Ny, 2)`` in 2D."""
        axes = self.axes()
        if self.dim == 1:
            return axes[0]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)

    def distance_to_center(self) -> np.ndarray:
        pts = self.points()
        if self.dim == 1:
            return np.abs(pts - self.x0[0])
        return np.linalg.norm(pts - np.asarray(self.x0), axis=-1)

    def resized(self, layers: int) -> "Grid":
        """Grid with ``layers`` points added (or removed, if negative) per side."""
        return Grid(self.x0, self.dx, tuple(n + layers for n in self.n_half))

    def point(self, index: Sequence[int]) -> tuple[float, ...]:
        """Coordinates of the array index ``index`` (0-based, per axis)."""
        return tuple(x0 + h * (i - n) for x0, h, n, i in zip(self.x0, self.dx, self.n_half, index))


@dataclass(frozen=True, eq=False)
class State:
    """Grid values of one unknown at a single time level."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != self.grid.shape:
            raise DomainError(f"values of shape {values.shape} do not match grid shape {self.grid.shape}")
        object.__setattr__(self, "values", values)

    @classmethod
    def sample(cls, func, grid: Grid) -> "State":
        return cls(grid, np.asarray(func(grid.points()), dtype=float))

    def argmin(self) -> tuple[float, ...]:
        """Coordinates of the minimum; ties go to the smallest flat index."""
        flat = int(np.argmin(self.values))
        return self.grid.point(np.unravel_index(flat, self.grid.shape))

    def lipschitz(self) -> tuple[float, ...]:
        return lipschitz_constant(self.values, self.grid.dx)


@dataclass(frozen=True)
class TruncationPolicy:
    kind: str = EXTRAPOLATED
    padding: int = 0

    def __post_init__(self):
        if self.kind not in (SHRINKING, EXTRAPOLATED):
            raise DomainError(f"unknown truncation policy {self.kind!r}")
        if self.padding < 0:
            raise DomainError("padding must be nonnegative")

    def check(self, n_steps: int) -> None:
        if self.kind == SHRINKING and self.padding < n_steps:
            raise DomainError(
                f"shrinking policy needs padding >= number of steps ({self.padding} < {n_steps})"
            )


def lipschitz_constant(values: np.ndarray, dx: Sequence[float]) -> tuple[float, ...]:
    """Per-axis discrete Lipschitz constant ``max |u_{i+1} - u_i| / dx``."""
    out = []
    for axis, h in enumerate(dx):
        if values.shape[axis] < 2:
            out.append(0.0)
        else:
            out.append(float(np.max(np.abs(np.diff(values, axis=axis)))) / h)
    return tuple(out)


def _extrapolate_axis(values: np.ndarray, axis: int) -> np.ndarray:
    u = np.moveaxis(values, axis, 0)
    if u.shape[0] < 4:
        raise DomainError("boundary extrapolation needs at least 4 points per axis")
    left = 4.0 * u[0] - 6.0 * u[1] + 4.0 * u[2] - u[3]
    right = 4.0 * u[-1] - 6.0 * u[-2] + 4.0 * u[-3] - u[-4]
    out = np.concatenate([left[None], u, right[None]], axis=0)
    return np.moveaxis(out, 0, axis)


def extrapolate_boundary(state: State) -> State:
    """Add one ghost layer per side from the cubic rule ``4u1 - 6u2 + 4u3 - u4``.

    In 2D the axes are extended one after the other; corner ghosts are
    produced as a by-product but are never read by the five-point stencils.
    """
    values = state.values
    for axis in range(state.grid.dim):
        values = _extrapolate_axis(values, axis)
    return State(state.grid.resized(1), values)


def shrink(state: State) -> State:
    """Drop the outermost layer on every side."""
    if any(n < 2 for n in state.grid.n_half):
        raise DomainError("shrinking would leave fewer than 3 points on an axis")
    inner = tuple(slice(1, -1) for _ in range(state.grid.dim))
    return State(state.grid.resized(-1), state.values[inner])


def truncation_radius(consts, eps: float, dt: float, T: float, dx: float, eps_floor: float = EPS_FLOOR) -> float:
    """Radius beyond which the quadrature tail of the total population is below ``dt``.

    Uses the coercive lower envelope ``a_low |x - x0| + b_low`` decayed over
    ``[0, T]`` and sums the geometric tail of ``psi_M exp(-u/eps)`` on both
    sides.  Below ``eps_floor`` the envelope is frozen at ``eps_floor`` so the
    radius stays bounded as ``eps -> 0``.
    """
    a = consts.a_low
    if not a > 0:
        raise DomainError(f"coercivity failure: lower envelope slope a_low={a} must be positive")
    if dt <= 0 or dx <= 0 or not 0 <= eps <= 1:
        raise DomainError("truncation_radius needs dt > 0, dx > 0 and eps in [0, 1]")
    e = max(eps, eps_floor)
    b_T = consts.b_low - T * (a * a + consts.K)
    tail = 2.0 * consts.psi_M * dx / (-math.expm1(-a * dx / e))
    # tail * exp(-(a X + b_T)/e) <= dt
    X = (e * math.log(tail / dt) - b_T) / a
    return max(X, 0.0)


@dataclass(frozen=True, eq=False)
class PointSet:
    """Arbitrary finite set of trait points with a uniform quadrature weight.

    Accepted wherever a root solve needs only ``points()`` and
    ``cell_volume``, e.g. for one- or two-point problems.
    """

    coords: np.ndarray
    weight: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "coords", np.asarray(self.coords, dtype=float))
        if self.coords.size == 0:
            raise DomainError("empty point set")
        if not self.weight > 0:
            raise DomainError("quadrature weight must be positive")

    def points(self) -> np.ndarray:
        return self.coords

    @property
    def cell_volume(self) -> float:
        return float(self.weight)
