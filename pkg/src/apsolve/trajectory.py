"""Time series produced by the two time loops."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import ApsolveError, DomainError
from .grid import Grid, State


@dataclass(eq=False)
class Trajectory:
    """Output of :func:`run_eps` or :func:`run_limit`.

    ``series[n-1]`` is the nonlocal scalar (``I`` or ``J``) at ``times[n-1] =
    n*dt``, ``n = 1..N_t``.  ``argmin`` has one row per entry of ``series``.
    """

    kind: str
    eps: float
    dt: float
    T: float
    initial_grid: Grid
    times: np.ndarray
    series: np.ndarray
    argmin: np.ndarray
    initial_argmin: tuple[float, ...]
    final: State
    snapshots: dict = field(default_factory=dict)
    iterations: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    cfl: object = None
    constants: object = None

    @property
    def grid(self) -> Grid:
        return self.final.grid

    @property
    def n_steps(self) -> int:
        return len(self.series)


def snapshot_steps(snapshots, dt: float, T: float) -> dict:
    """Map requested snapshot times to step indices (nearest step)."""
    out = {}
    for t in snapshots:
        t = float(t)
        if not -1e-12 <= t <= T * (1 + 1e-12):
            raise DomainError(f"snapshot time {t} outside [0, {T}]")
        out.setdefault(int(round(t / dt)), []).append(t)
    return out


def step_count(T: float, dt: float) -> int:
    if not (T > 0 and dt > 0):
        raise DomainError("T and dt must be positive")
    n = round(T / dt)
    if n < 1 or abs(n * dt - T) > 1e-9 * T:
        raise DomainError(f"T={T} is not an integer multiple of dt={dt}")
    return n


def march(
    state: State,
    step: Callable,
    n_steps: int,
    dt: float,
    snapshots=(),
    callback: Optional[Callable] = None,
):
    """Drive ``step(state, n) -> (state, scalar, iterations)`` for ``n_steps`` steps.

    Returns ``(final, series, argmin, iterations, snapshots)``.  Failures are
    re-raised with the 1-based step index attached.
    """
    wanted = snapshot_steps(snapshots, dt, n_steps * dt)
    snaps = {t: state for t in wanted.get(0, [])}
    series = np.empty(n_steps)
    argmin = np.empty((n_steps, state.grid.dim))
    iterations = np.zeros(n_steps, dtype=int)
    for n in range(n_steps):
        try:
            state, value, its = step(state, n)
        except ApsolveError as exc:
            raise type(exc)(f"step {n + 1}: {exc}", step=n + 1) from exc
        if not math.isfinite(value):
            raise DomainError(f"step {n + 1}: non-finite nonlocal term", step=n + 1)
        series[n] = value
        argmin[n] = state.argmin()
        iterations[n] = its
        for t in wanted.get(n + 1, []):
            snaps[t] = state
        if callback is not None:
            callback(n + 1, state, value)
    return state, series, argmin, iterations, snaps
