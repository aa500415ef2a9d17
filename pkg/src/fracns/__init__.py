"""Mild solutions of time-fractional Navier-Stokes equations with delayed forcing
on a periodic spectral surrogate, with numerical audits of the supporting bounds.
"""

__version__ = "0.1.0"

from .specfun import (  # noqa: E402
    FractionalOrder,
    QuadratureError,
    SampledFunction,
    caputo_derivative,
    mainardi,
    mainardi_moment,
    mittag_leffler,
    rl_integral,
)
from .spectral import (  # noqa: E402
    SpectralField,
    SpectralGrid,
    SpectralOperator,
    SymmetryError,
    apply_fractional_power,
    leray_project,
    nonlinear_term,
    sobolev_norm,
)
from .solops import (  # noqa: E402
    OperatorFamily,
    apply_S,
    apply_T,
    audit_operator_bounds,
    check_commutation,
    contour_eval_scalar,
)
from .delaysolver import (  # noqa: E402
    DelayedForce,
    HistorySegment,
    PicardError,
    RunState,
    SolverConfig,
    evaluate_force,
    mild_step,
    picard_solve,
    solve,
)
from .analysis import (  # noqa: E402
    EstimatedConstants,
    RegularityReport,
    estimate_bilinear_constants,
    estimate_holder,
    run_convergence_study,
)
