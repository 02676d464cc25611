"""Splitting trees with neutral mutations: scale functions, allelic spectra,
mutation counts, and an exact simulator to check them against."""
from .errors import (
    DivergentMoment,
    GridTooCoarse,
    HorizonTooShort,
    InvalidConfig,
    NoNegativeRoot,
    NonConvergence,
    OutOfRange,
    RejectionBudgetExceeded,
    SplitTreeError,
    TooFewSamples,
    WrongRegime,
    ZeroVariance,
)
from .lifespan import (
    Exponential,
    Gamma,
    LifespanMeasure,
    MutationContext,
    PureBirth,
    UniformLife,
    parse_measure,
)
from .scale import (
    GeometricLaw,
    LimitConstants,
    ScaleGrid,
    clonal_grid,
    extinction_probability,
    growth_constants,
    malthusian,
    marginal,
    negative_root,
    solve_scale,
)
from .spectrum import SpectrumQuery, expected_spectrum, limit_J, size_fraction_limit, spectrum_limits
from .mutation import (
    KappaLaw,
    expected_K,
    expected_L,
    K_asymptotics,
    L_asymptotics,
    kappa_law,
    kappa_fixed_point_residual,
)
from .simulator import PopulationSnapshot, simulate, snapshot_spectrum, snapshot_type_counts

__version__ = "0.1.0"
