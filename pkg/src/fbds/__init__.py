"""Functional BDS independence test for functional time series."""

__version__ = "0.1.0"

from fbds.bds import BdsParams, BdsResult, bds_grid, bds_test, bds_variance, correlation_integral, k_estimate
from fbds.curves import CurveNorm, FunctionalSeries, Grid, curve_distance, distance_matrix, pooled_sd
from fbds.errors import (
    DegenerateScaleError,
    DegenerateVarianceError,
    DimensionError,
    DomainError,
    FbdsError,
    InsufficientLengthError,
    ValidationError,
)

__all__ = [
    "BdsParams", "BdsResult", "bds_grid", "bds_test", "bds_variance", "correlation_integral",
    "k_estimate", "CurveNorm", "FunctionalSeries", "Grid", "curve_distance", "distance_matrix",
    "pooled_sd", "DegenerateScaleError", "DegenerateVarianceError", "DimensionError", "DomainError",
    "FbdsError", "InsufficientLengthError", "ValidationError",
]
