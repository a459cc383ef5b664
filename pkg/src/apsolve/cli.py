"""Command-line front end.

Usage::

    apsolve COMMAND CONFIG [--out-dir DIR] [--set key=value ...] [--unsafe]

``CONFIG`` is a file of ``key=value`` lines (``#`` starts a comment) or ``-``
for standard input.  Every invocation writes CSV files and a
``manifest.json`` into its output directory.

Exit status: 0 success, 1 run failure, 2 configuration error, 3 a study
check failed.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import math
import os
import sys
import time
from dataclasses import asdict, dataclass, field, replace
from typing import Optional

import numpy as np

from . import analysis
from .errors import ApsolveError, ConfigError, DomainError
from .grid import EXTRAPOLATED, SHRINKING
from .hamiltonian import CFL_MODES, EPS_FIXED, resolve_cfl
from .model import PRESETS, estimate_constants, get_preset
from .stepper_eps import EpsRunConfig, run_eps
from .stepper_limit import LimitRunConfig, run_limit

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_RUN_FAILURE = 1
EXIT_CONFIG = 2
EXIT_STUDY_FAILED = 3

COMMANDS = ("run-eps", "run-limit", "ap-study", "convergence-study", "ua-study", "demo-2d", "compare-truncation")

DEFAULT_EPS_LIST = (1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6)
DEFAULT_DX_LIST = (0.2, 0.1, 0.05)
DEFAULT_DT_LIST = (4e-3, 2e-3, 1e-3, 5e-4)
DEFAULT_DEMO_EPS = (1e-2, 1e-4)
DEFAULT_LAMBDA = {"convergence-study": 1e-2, "ua-study": 5e-2}


# --- configuration ----------------------------------------------------------------


def _float(key, text):
    try:
        value = float(text)
    except ValueError:
        raise ConfigError(f"{key}: expected a number, got {text!r}", key) from None
    if not math.isfinite(value):
        raise ConfigError(f"{key}: value must be finite", key)
    return value


def _float_list(key, text):
    items = [t.strip() for t in text.split(",") if t.strip()]
    if not items:
        raise ConfigError(f"{key}: empty list", key)
    return tuple(_float(key, t) for t in items)


def _positive(key, value):
    values = value if isinstance(value, tuple) else (value,)
    if any(not v > 0 for v in values):
        raise ConfigError(f"{key}: out of range, must be positive (got {value})", key)
    return value


def _unit(key, value):
    values = value if isinstance(value, tuple) else (value,)
    if any(not 0 < v <= 1 for v in values):
        raise ConfigError(f"{key}: out of range, must lie in (0, 1] (got {value})", key)
    return value


def _choice(options):
    def check(key, text):
        if text not in options:
            raise ConfigError(f"{key}: expected one of {sorted(options)}, got {text!r}", key)
        return text

    return check


_PARSERS = {
    "preset": _choice(set(PRESETS)),
    "eps": lambda k, t: _unit(k, _float(k, t)),
    "T": lambda k, t: _positive(k, _float(k, t)),
    "dt": lambda k, t: _positive(k, _float(k, t)),
    "dx": lambda k, t: _positive(k, _float(k, t)),
    "lambda": lambda k, t: _positive(k, _float(k, t)),
    "cfl_mode": _choice(set(CFL_MODES)),
    "cfl_Lambda": _float,
    "domain_halfwidth": lambda k, t: _positive(k, _float(k, t)),
    "truncation": _choice({SHRINKING, EXTRAPOLATED}),
    "snapshots": lambda k, t: tuple(_float(k, x) for x in t.split(",") if x.strip()),
    "eps_list": lambda k, t: _unit(k, _float_list(k, t)),
    "dx_list": lambda k, t: _positive(k, _float_list(k, t)),
    "dt_list": lambda k, t: _positive(k, _float_list(k, t)),
    "dx_ref": lambda k, t: _positive(k, _float(k, t)),
    "fit_eps_max": lambda k, t: _positive(k, _float(k, t)),
    "tol_phi": lambda k, t: _positive(k, _float(k, t)),
    "tol_J": lambda k, t: _positive(k, _float(k, t)),
    "out_dir": lambda k, t: t,
}
CONFIG_KEYS = tuple(_PARSERS)


@dataclass(frozen=True)
class Config:
    """Fully resolved configuration (defaults filled, CFL pair completed)."""

    preset: str
    eps: Optional[float] = None
    T: float = 1.0
    dt: float = 5e-4
    dx: float = 5e-2
    lam: Optional[float] = None
    cfl_mode: Optional[str] = None
    cfl_Lambda: Optional[float] = None
    domain_halfwidth: Optional[float] = None
    truncation: Optional[str] = None
    snapshots: tuple = ()
    eps_list: tuple = DEFAULT_EPS_LIST
    dx_list: tuple = DEFAULT_DX_LIST
    dt_list: tuple = DEFAULT_DT_LIST
    dx_ref: Optional[float] = None
    fit_eps_max: float = 1e-4
    tol_phi: Optional[float] = None
    tol_J: Optional[float] = None
    out_dir: Optional[str] = None
    given: tuple = ()  # keys set explicitly

    def digest(self) -> str:
        """SHA-256 of the resolved parameters (output directory excluded)."""
        items = {k: v for k, v in asdict(self).items() if k not in ("out_dir", "given")}
        text = "\n".join(f"{k}={items[k]!r}" for k in sorted(items))
        return hashlib.sha256(text.encode()).hexdigest()

    def params(self) -> dict:
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(self).items() if k != "given"}


def _read_pairs(text: str) -> dict:
    raw = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in _PARSERS:
            raise ConfigError(f"unknown key {key!r}", key)
        if key in raw:
            raise ConfigError(f"duplicate key {key!r}", key)
        raw[key] = value
    return raw


def _round_to_T(dt, T):
    n = max(1, math.ceil(T / dt * (1 - 1e-12)))
    return T / n


def parse_config(text: str, overrides=()) -> Config:
    """Parse ``key=value`` text into a resolved :class:`Config`.

    ``overrides`` is an iterable of extra ``key=value`` strings applied on
    top of ``text``.  Without ``cfl_mode`` the pair ``(dt, dx)`` comes from
    the given keys (``lambda`` completes a missing member).  With
    ``cfl_mode`` the single given member among ``dt``, ``dx``, ``lambda``
    (``dx`` by default) is completed so that the condition holds.
    """
    raw = _read_pairs(text)
    for item in overrides:
        extra = _read_pairs(item)
        raw.update(extra)
    if "preset" not in raw:
        raise ConfigError("preset required", "preset")
    values = {k: _PARSERS[k](k, v) for k, v in raw.items()}
    if "lambda" in values:
        values["lam"] = values.pop("lambda")
    cfg = Config(**values, given=tuple(sorted(values)))
    given = tuple(k for k in ("dt", "dx", "lam") if k in values)

    if cfg.cfl_Lambda is not None and not 0 < cfg.cfl_Lambda < 1:
        raise ConfigError(f"cfl_Lambda: out of range, must lie in (0, 1) (got {cfg.cfl_Lambda})", "cfl_Lambda")
    if any(not -1e-12 <= t <= cfg.T * (1 + 1e-12) for t in cfg.snapshots):
        raise ConfigError("snapshots: times must lie in [0, T]", "snapshots")
    if cfg.cfl_mode is None:
        if len(given) == 3:
            raise ConfigError("lambda: dt, dx and lambda over-determine the step pair", "lambda")
        dt, dx = cfg.dt, cfg.dx
        if cfg.lam is not None:
            if "dt" in given:
                dx = dt / cfg.lam
            else:
                dt = cfg.lam * dx
        return replace(cfg, dt=_round_to_T(dt, cfg.T), dx=dx)
    return _resolve_with_cfl(cfg, given)


def _resolve_with_cfl(cfg: Config, given) -> Config:
    if len(given) > 1:
        raise ConfigError(f"cfl_mode: give only one of dt, dx, lambda (got {list(given)})", "cfl_mode")
    if cfg.cfl_mode == EPS_FIXED:
        if cfg.cfl_Lambda is None:
            raise ConfigError("cfl_Lambda: required with cfl_mode=eps_fixed", "cfl_Lambda")
        if cfg.eps is None:
            raise ConfigError("eps: required with cfl_mode=eps_fixed", "eps")
    model = get_preset(cfg.preset)
    consts = estimate_constants(model, model.grid(cfg.dx, cfg.domain_halfwidth), cfg.T)
    which = given[0] if given else "dx"
    kwargs = {which: getattr(cfg, which)}
    eps = cfg.eps if cfg.eps is not None else 1.0
    try:
        spec = resolve_cfl(cfg.cfl_mode, eps, consts, cfg.T, Lambda=cfg.cfl_Lambda, dim=model.dim, **kwargs)
    except DomainError as exc:
        key = {"lam": "lambda"}.get(which, which)
        raise ConfigError(f"{key}: infeasible stability condition: {exc}", key) from None
    return replace(cfg, dt=spec.dt, dx=spec.dx)


# --- output -------------------------------------------------------------------------


def _fmt(value) -> str:
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    return str(value)


def write_csv(path: str, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


@dataclass
class RunManifest:
    command: str
    argv: list
    config_digest: str
    preset: str
    params: dict
    artifacts: list = field(default_factory=list)
    duration: float = 0.0
    status: str = "ok"
    exit_code: int = EXIT_OK
    error: Optional[dict] = None
    checks: dict = field(default_factory=dict)
    results: dict = field(default_factory=dict)

    def write(self, out_dir: str) -> str:
        path = os.path.join(out_dir, "manifest.json")
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(_jsonable(asdict(self)), fh, indent=2, sort_keys=True)
            fh.write("\n")
        return path


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


class _Writer:
    def __init__(self, out_dir):
        self.out_dir = out_dir
        self.files = []
        os.makedirs(out_dir, exist_ok=True)

    def csv(self, name, header, rows):
        write_csv(os.path.join(self.out_dir, name), header, rows)
        self.files.append(name)


def _coord_names(dim):
    return ("x",) if dim == 1 else ("x", "y")


def _write_trace(w: _Writer, name, tr):
    dim = tr.final.grid.dim
    header = ("t", "I_or_J") + tuple(f"argmin_{c}" for c in _coord_names(dim))
    w.csv(name, header, ([t, v, *a] for t, v, a in zip(tr.times, tr.series, tr.argmin)))


def _write_state(w: _Writer, name, state):
    pts = state.grid.points().reshape(state.values.size, -1)
    header = _coord_names(state.grid.dim) + ("u",)
    w.csv(name, header, ([*p, u] for p, u in zip(pts, state.values.ravel())))


def _write_snapshots(w: _Writer, tr, prefix="snapshot"):
    for t in sorted(tr.snapshots):
        _write_state(w, f"{prefix}_{t:g}.csv", tr.snapshots[t])


def _write_report(w: _Writer, name, report):
    w.csv(name, report.columns, ([r[c] for c in report.columns] for r in report.rows))


def _report_results(report):
    return {
        "slopes": report.slopes,
        "fit_range": report.fit_range,
        "failures": report.failures,
        "provenance": report.provenance,
        **{k: v for k, v in report.extra.items() if k in ("sup_ratio_finest", "reference_jumps")},
    }


# --- commands -----------------------------------------------------------------------


def _run_eps(cfg, model, w, unsafe, manifest):
    if cfg.eps is None:
        raise ConfigError("eps: required for run-eps", "eps")
    tr = run_eps(
        EpsRunConfig(
            model, cfg.eps, T=cfg.T, dt=cfg.dt, dx=cfg.dx, truncation=cfg.truncation,
            halfwidth=cfg.domain_halfwidth, snapshots=cfg.snapshots, tol_phi=cfg.tol_phi, unsafe=unsafe,
        )
    )
    _write_trace(w, "jtrace.csv", tr)
    _write_snapshots(w, tr)
    manifest.results = {
        "n_steps": tr.n_steps,
        "Lambda": tr.cfl.Lambda,
        "lambda": cfg.dt / cfg.dx,
        "grid_bounds": _bounds(tr.final.grid),
        "final": float(tr.series[-1]),
        "min_u": float(tr.final.values.min()),
        "jumps": analysis.detect_jumps(tr.series, tr.times),
        "newton_iterations_mean": float(np.mean(tr.iterations)),
        "violations": list(tr.constants.violations),
    }
    return EXIT_OK


def _run_limit(cfg, model, w, unsafe, manifest):
    tr = run_limit(
        LimitRunConfig(
            model, T=cfg.T, dt=cfg.dt, dx=cfg.dx, truncation=cfg.truncation,
            halfwidth=cfg.domain_halfwidth, snapshots=cfg.snapshots, tol_J=cfg.tol_J, unsafe=unsafe,
        )
    )
    jumps = analysis.detect_jumps(tr.series, tr.times)
    _write_trace(w, "jtrace.csv", tr)
    w.csv("jumps.csv", ("t", "size"), jumps)
    _write_snapshots(w, tr)
    manifest.results = {
        "n_steps": tr.n_steps,
        "cfl_terms": tr.cfl.terms,
        "lambda": cfg.dt / cfg.dx,
        "grid_bounds": _bounds(tr.final.grid),
        "final": float(tr.series[-1]),
        "jumps": jumps,
        "violations": list(tr.constants.violations),
    }
    return EXIT_OK


def _bounds(grid):
    return [[a[0], a[-1]] for a in grid.axes()]


def _study_exit(report, manifest):
    manifest.checks = dict(report.passed)
    manifest.results = _report_results(report)
    return EXIT_OK if report.ok else EXIT_STUDY_FAILED


def _ap_study(cfg, model, w, unsafe, manifest):
    report = analysis.ap_study(
        model, cfg.eps_list, T=cfg.T, dt=cfg.dt, dx=cfg.dx, truncation=cfg.truncation,
        halfwidth=cfg.domain_halfwidth, fit_eps_max=cfg.fit_eps_max,
    )
    _write_report(w, "ap_errors.csv", report)
    return _study_exit(report, manifest)


def _convergence_study(cfg, model, w, unsafe, manifest):
    lam = cfg.lam if cfg.lam is not None else DEFAULT_LAMBDA["convergence-study"]
    report = analysis.convergence_study(
        model, cfg.dt_list, lam=lam, T=cfg.T, dx_ref=cfg.dx_ref, truncation=cfg.truncation, halfwidth=cfg.domain_halfwidth
    )
    _write_report(w, "convergence_errors.csv", report)
    return _study_exit(report, manifest)


def _ua_study(cfg, model, w, unsafe, manifest):
    lam = cfg.lam if cfg.lam is not None else DEFAULT_LAMBDA["ua-study"]
    report = analysis.ua_study(
        model, cfg.dx_list, cfg.eps_list, lam=lam, T=cfg.T, dx_ref=cfg.dx_ref,
        truncation=cfg.truncation or EXTRAPOLATED, halfwidth=cfg.domain_halfwidth,
    )
    _write_report(w, "ua_errors.csv", report)
    return _study_exit(report, manifest)


def _compare_truncation(cfg, model, w, unsafe, manifest):
    report = analysis.truncation_study(model, cfg.eps_list, T=cfg.T, dt=cfg.dt, dx=cfg.dx, halfwidth=cfg.domain_halfwidth)
    _write_report(w, "truncation_diff.csv", report)
    return _study_exit(report, manifest)


def _demo_2d(cfg, model, w, unsafe, manifest):
    if model.dim != 2:
        raise ConfigError(f"preset: demo-2d needs a two-dimensional preset, got {cfg.preset!r}", "preset")
    eps_list = cfg.eps_list if "eps_list" in cfg.given else DEFAULT_DEMO_EPS
    start, target = model.wells if len(model.wells) == 2 else (None, None)
    report = analysis.demo_2d(
        model, eps_list, T=cfg.T, dt=cfg.dt, dx=cfg.dx, truncation=cfg.truncation,
        halfwidth=cfg.domain_halfwidth, start=start, target=target,
    )
    _write_report(w, "demo2d_summary.csv", report)
    if "limit" in report.extra:
        _write_trace(w, "jtrace_limit.csv", report.extra["limit"])
        _write_state(w, "final_limit.csv", report.extra["limit"].final)
    for e, tr in report.extra["runs"].items():
        _write_trace(w, f"jtrace_eps_{e:g}.csv", tr)
        _write_state(w, f"final_eps_{e:g}.csv", tr.final)
    return _study_exit(report, manifest)


_HANDLERS = {
    "run-eps": _run_eps,
    "run-limit": _run_limit,
    "ap-study": _ap_study,
    "convergence-study": _convergence_study,
    "ua-study": _ua_study,
    "demo-2d": _demo_2d,
    "compare-truncation": _compare_truncation,
}


def dispatch(command: str, cfg: Config, out_dir: Optional[str] = None, argv=None, unsafe: bool = False) -> RunManifest:
    """Run ``command`` with ``cfg``, write its artifacts and return the manifest.

    Run failures do not raise: they are recorded in ``manifest.error`` with
    exit code 1.  Configuration problems found here give exit code 2.
    """
    if command not in _HANDLERS:
        raise ConfigError(f"unknown command {command!r}; choose from {COMMANDS}")
    out_dir = out_dir or cfg.out_dir or os.path.join("apsolve_out", command)
    manifest = RunManifest(
        command=command,
        argv=list(argv) if argv is not None else [command],
        config_digest=cfg.digest(),
        preset=cfg.preset,
        params=cfg.params(),
    )
    w = _Writer(out_dir)
    start = time.perf_counter()
    try:
        manifest.exit_code = _HANDLERS[command](cfg, get_preset(cfg.preset), w, unsafe, manifest)
        manifest.status = {EXIT_OK: "ok", EXIT_STUDY_FAILED: "check_failed"}[manifest.exit_code]
    except ConfigError as exc:
        manifest.exit_code, manifest.status = EXIT_CONFIG, "config_error"
        manifest.error = {"type": type(exc).__name__, "message": str(exc), "key": exc.key}
    except ApsolveError as exc:
        manifest.exit_code, manifest.status = EXIT_RUN_FAILURE, "run_failed"
        manifest.error = {"type": type(exc).__name__, "message": str(exc), "step": exc.step}
    manifest.duration = time.perf_counter() - start
    manifest.artifacts = list(w.files) + ["manifest.json"]
    manifest.write(out_dir)
    return manifest


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="apsolve", description="Asymptotic-preserving solver and experiment harness.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("config", help="key=value config file, or - for stdin")
    p.add_argument("--out-dir", help="output directory (overrides out_dir in the config)")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a config entry")
    p.add_argument("--unsafe", action="store_true", help="do not enforce the stability conditions")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        text = sys.stdin.read() if args.config == "-" else open(args.config, encoding="utf-8").read()
    except OSError as exc:
        print(json.dumps({"error": "config_error", "message": str(exc)}), file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = parse_config(text, args.set)
    except ConfigError as exc:
        print(json.dumps({"error": "config_error", "message": str(exc), "key": exc.key}), file=sys.stderr)
        return EXIT_CONFIG
    manifest = dispatch(args.command, cfg, out_dir=args.out_dir, argv=["apsolve"] + argv, unsafe=args.unsafe)
    if manifest.error:
        print(json.dumps({"error": manifest.status, **manifest.error}), file=sys.stderr)
    else:
        summary = {"status": manifest.status, "checks": manifest.checks, "artifacts": manifest.artifacts}
        print(json.dumps(_jsonable(summary)))
    return manifest.exit_code


if __name__ == "__main__":
    sys.exit(main())
