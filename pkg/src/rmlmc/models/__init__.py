"""Target models and data sources."""

from .banana import BananaModel
from .base import ModelError, TargetModel
from .data import (
    BENCHMARK_DATASETS,
    MIXTURE_DENSITIES,
    Dataset,
    DimensionMismatch,
    ParseError,
    fetch_instructions,
    load_dataset,
    synthesize_banana,
    synthesize_gmm,
    synthesize_logreg,
)
from .logistic import LogisticRegressionModel
from .mixture import GaussianMixtureModel, from_unconstrained, to_unconstrained
from .toy import (
    FunctionalModel,
    RandomMetricModel,
    gaussian_with_metric,
    quadratic_metric_1d,
    standard_gaussian,
)

__all__ = [
    "BENCHMARK_DATASETS", "MIXTURE_DENSITIES", "BananaModel", "Dataset", "DimensionMismatch",
    "FunctionalModel", "GaussianMixtureModel", "LogisticRegressionModel", "ModelError",
    "ParseError", "RandomMetricModel", "TargetModel", "fetch_instructions", "from_unconstrained",
    "gaussian_with_metric", "load_dataset", "quadratic_metric_1d", "standard_gaussian",
    "synthesize_banana", "synthesize_gmm", "synthesize_logreg", "to_unconstrained",
]
