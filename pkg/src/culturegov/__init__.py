"""Culture-mix indicators and spatial-temporal SUR estimation of governance.

The package computes population-share weighted culture level and diversity
indicators from migrant birthplace stocks, and fits a six-equation panel
regression of governance indicators on them under spatially and serially
correlated, cross-equation dependent Gaussian errors estimated by exact
maximum likelihood.
"""

from .errors import CultureGovError, DataError, ModelError
from .estimator import (
    ERROR_STRUCTURES,
    REGRESSOR_SETS,
    DesignMatrices,
    FitResult,
    ModelSpec,
    OptimizerSettings,
    assemble_design,
    fit,
    fit_statistics,
)
from .imputation import ImputedHofstedeTable, impute_hofstede, redistribute_unknown
from .indicators import (
    IndicatorPanel,
    SpatialWeights,
    build_weights,
    compute_cdi,
    compute_cli,
)
from .ingest import (
    DIMENSIONS,
    WGI_INDICATORS,
    CountryPanel,
    CountryRegistry,
    HofstedeTable,
    MigrantStockTensor,
    ObservationGrid,
    build_observation_grid,
    load_hofstede,
    load_migrant_stock,
    load_panel,
    load_registry,
)
from .likelihood import ErrorParams, log_likelihood
from .simulate import (
    SimulationConfig,
    SimulationResult,
    TrueParams,
    dense_covariance,
    empirical_covariance_check,
    simulate_panel,
    simulate_world,
)

__version__ = "0.1.0"

__all__ = [
    "CultureGovError",
    "DataError",
    "ModelError",
    "DIMENSIONS",
    "WGI_INDICATORS",
    "CountryRegistry",
    "CountryPanel",
    "HofstedeTable",
    "MigrantStockTensor",
    "ObservationGrid",
    "load_registry",
    "load_hofstede",
    "load_migrant_stock",
    "load_panel",
    "build_observation_grid",
    "ImputedHofstedeTable",
    "impute_hofstede",
    "redistribute_unknown",
    "IndicatorPanel",
    "SpatialWeights",
    "compute_cli",
    "compute_cdi",
    "build_weights",
    "ErrorParams",
    "log_likelihood",
    "REGRESSOR_SETS",
    "ERROR_STRUCTURES",
    "ModelSpec",
    "OptimizerSettings",
    "DesignMatrices",
    "FitResult",
    "assemble_design",
    "fit",
    "fit_statistics",
    "SimulationConfig",
    "SimulationResult",
    "TrueParams",
    "simulate_panel",
    "simulate_world",
    "dense_covariance",
    "empirical_covariance_check",
]
