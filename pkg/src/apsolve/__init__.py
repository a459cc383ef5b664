"""Asymptotic-preserving finite-difference solver for stiff selection-mutation
models in Hopf-Cole form, and the monotone scheme for their constrained
Hamilton-Jacobi limit.
"""

from .analysis import (
    StudyReport,
    ap_study,
    convergence_study,
    detect_jumps,
    fit_rate,
    hopf_cole_density,
    l1_time_error,
    linf_grid_error,
    run_study,
    truncation_study,
    tv_seminorm,
    ua_study,
)
from .errors import ApsolveError, CflError, ConfigError, DomainError, SolverError
from .grid import EXTRAPOLATED, SHRINKING, Grid, PointSet, State, TruncationPolicy, extrapolate_boundary, shrink, truncation_radius
from .hamiltonian import CflSpec, ch_constant, check_cfl, monotone_step, numerical_hamiltonian, resolve_cfl
from .model import Model, ModelConstants, estimate_constants, eval_model, find_Im_IM, get_preset
from .stepper_eps import EpsRunConfig, run_eps, solve_I_implicit, step_eps
from .stepper_limit import LimitRunConfig, run_limit, solve_J_constraint, step_limit
from .trajectory import Trajectory

__version__ = "0.1.0"
