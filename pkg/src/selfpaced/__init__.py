"""Self-paced learning as majorization-minimization, with convergence certificates."""

__version__ = "0.1.0"

from .regularizers import (  # noqa: E402
    ConditionReport,
    DomainError,
    RegularizerKind,
    RegularizerSpec,
    UnsupportedOperation,
    F_value,
    check_sp_conditions,
    f_value,
    load_table,
    v_star,
)
from .models import (  # noqa: E402
    Dataset,
    LossKind,
    Problem,
    explicit_objective,
    implicit_gradient,
    implicit_objective,
    load_dataset,
    loss_gradients,
    losses,
    surrogate,
    surrogate_gradient,
)
from .solvers import (  # noqa: E402
    ErrorSchedule,
    InnerMethod,
    InnerSolverConfig,
    IterateTrace,
    Scheme,
    SolverConfig,
    aos_solve,
    inexact_mm_solve,
    mm_solve,
    solve,
    v_step,
    w_step,
)
from .diagnostics import CertificationReport, certify_trace  # noqa: E402
