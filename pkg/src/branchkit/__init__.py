"""Tail generating functions for continuous-time Markov branching processes."""

from .errors import (
    BranchkitError,
    ConvergenceError,
    DegenerateInputError,
    DomainError,
    InvalidLawError,
    PoleError,
    UnderflowError,
)
from .law import (
    ExplicitLaw,
    FixedPoints,
    LinearFractionalLaw,
    OffspringLaw,
    Regime,
    TailPowerLaw,
    dual_law,
    fixed_points,
    lf_closed_forms,
    make_law,
    success_law,
)
from .series import AnchorList, TruncatedSeries
from .pifn import PiEvaluator
from .evolve import EvolveResult, Route, integral_inverse, mean, regularity, scalar_F, series_F
from .limits import (
    martingale_limit_transform,
    subcritical_limit,
    supercritical_local_limit,
    critical_asymptotics,
)
from .mc import SimConfig, SimStats, extinction_conditioned_sample, simulate

__version__ = "0.1.0"
