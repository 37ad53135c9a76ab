"""Performative ridge regression under repeated retraining.

Library layout:

- :mod:`perfridge.model`      data-generating process and risk functional
- :mod:`perfridge.population` exact population recursion and risk expansions
- :mod:`perfridge.detequiv`   over-parameterized deterministic equivalents
- :mod:`perfridge.simulate`   reproducible Monte-Carlo engine
- :mod:`perfridge.dataset`    real-data protocol (CSV, folds, label shifts)
- :mod:`perfridge.cli`        experiment command line
"""

from .errors import (
    DegenerateDenominator,
    DimensionMismatch,
    InsufficientRows,
    InvalidCovariance,
    InvalidInput,
    MissingColumn,
    NoBracket,
    ParseError,
    PerfridgeError,
    SingularBlock,
    SingularSystem,
)
from .model import (
    BlockCovariance,
    EffectRecipe,
    ModelSpec,
    Normalization,
    PerformativeEffect,
    RidgeConfig,
    assemble_sigma,
    excess_risk,
    sample_theta_star,
    schur_offdiag,
    schur_predictive,
)

__version__ = "0.1.0"
