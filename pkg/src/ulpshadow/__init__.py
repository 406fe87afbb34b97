"""ULP-scale shadow execution for floating-point error detection.

Evaluates numerical programs twice, once normally and once with tiny
ULP-scale perturbations injected at every atomic-operation site, and
reports the divergence in ULPs; a software double-double backend serves as
the high-precision reference.  Large divergences localize the
ill-conditioned (error-amplifying) operations.
"""

from ._kernels import IMPL as kernel_impl
from .expr_ir import (
    EvalResult,
    Oracle,
    Perturbed,
    Plain,
    Program,
    dela_error,
    evaluate,
    oracle_error,
    parse,
    to_source,
)
from .hp_oracle import DoubleDouble, dd
from .perturb_engine import (
    AtomicOp,
    Cyclic,
    FixedOffset,
    NoPerturbation,
    PerturbationPolicy,
    PerturbationStrategy,
    TraceRecord,
    apply_perturbation,
    condition_numbers,
    in_dangerous_region,
)
from .sweep_analysis import (
    CorrelationReport,
    SweepConfig,
    SweepRow,
    classify_significant,
    detect_outliers,
    pearson,
    permutation_p_value,
    spearman,
    sweep,
)
from .ulp_core import (
    NONFINITE_DIVERGENCE,
    DomainError,
    UlpOverflowError,
    divergence_ulp,
    err_abs,
    err_rel,
    err_ulp,
    offset_by_ulps,
    ulp_distance,
    ulp_of,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "kernel_impl",
    # ulp_core
    "NONFINITE_DIVERGENCE",
    "DomainError",
    "UlpOverflowError",
    "ulp_of",
    "ulp_distance",
    "offset_by_ulps",
    "err_abs",
    "err_rel",
    "err_ulp",
    "divergence_ulp",
    # perturb_engine
    "AtomicOp",
    "NoPerturbation",
    "FixedOffset",
    "Cyclic",
    "PerturbationStrategy",
    "PerturbationPolicy",
    "TraceRecord",
    "apply_perturbation",
    "condition_numbers",
    "in_dangerous_region",
    # expr_ir
    "Program",
    "parse",
    "to_source",
    "evaluate",
    "EvalResult",
    "Plain",
    "Perturbed",
    "Oracle",
    "dela_error",
    "oracle_error",
    # hp_oracle
    "DoubleDouble",
    "dd",
    # sweep_analysis
    "SweepConfig",
    "SweepRow",
    "CorrelationReport",
    "sweep",
    "pearson",
    "spearman",
    "permutation_p_value",
    "classify_significant",
    "detect_outliers",
]
