"""Moment-matching scenario extraction from empirical sample measures."""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    ConfigError,
    DataFormatError,
    DegenerateError,
    ExtractionError,
    FlatnessError,
    InfeasibleError,
    InvalidInputError,
    NormalizationError,
    NotPSDError,
    NumericalBreakdownError,
    ScenarioError,
)
from .extractors import ScenarioSet, covariance_scenarios, extract_scenarios  # noqa: E402
from .moments import (  # noqa: E402
    basis_size,
    empirical_moments,
    enumerate_basis,
    moment_matrix,
    relative_error,
    vandermonde,
)
from .weights import AdmmConfig, admm_weights  # noqa: E402

__all__ = [
    "AdmmConfig", "ConfigError", "DataFormatError", "DegenerateError", "ExtractionError",
    "FlatnessError", "InfeasibleError", "InvalidInputError", "NormalizationError",
    "NotPSDError", "NumericalBreakdownError", "ScenarioError", "ScenarioSet",
    "admm_weights", "basis_size", "covariance_scenarios", "empirical_moments",
    "enumerate_basis", "extract_scenarios", "moment_matrix", "relative_error", "vandermonde",
]
