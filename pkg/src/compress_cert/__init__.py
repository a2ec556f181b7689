"""Risk certificates for compression schemes."""

from .bounds import (
    BoundQuery,
    BoundRow,
    BoundTable,
    asymptotic_envelope,
    bound_table,
    eps_interval,
    eps_upper,
    psi,
    psi_tilde,
)
from .compression import (
    CHECKS,
    CompressionScheme,
    Multiset,
    PropertyReport,
    augment,
    change_of_compression,
)
from .experiments import Distribution, ExperimentConfig, coverage_report, parse_config, run_trials
from .numerics import Precision, bisect, log_binomial, reg_inc_beta
from .schemes import make_scheme

__version__ = "0.1.0"
