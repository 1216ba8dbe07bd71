"""
fAR(1) estimation by functional principal components, residual extraction,
and the log-squared standardized-return transform for multiplicative models.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from fbds.curves import FunctionalSeries, Grid
from fbds.errors import DimensionError, DomainError, EstimationError, ValidationError

RIDGE = 1e-8
DEFAULT_VARIANCE_SHARE = 0.95
MAX_AUTO_DIM = 10


@dataclass(frozen=True)
class Far1Fit:
    """Fitted fAR(1) model in principal-component coordinates.

    Attributes
    ----------
    mean_curve : ndarray, shape (p,)
    operator_matrix : ndarray, shape (d, d)
        Maps the score vector of ``X_t - mean`` to the predicted scores of
        ``X_{t+1} - mean``.
    components : ndarray, shape (d, p)
        Eigencurves, orthonormal under the trapezoidal L2 inner product.
    explained_variance : ndarray, shape (d,)
    total_variance : float
    grid : Grid
    """

    mean_curve: np.ndarray
    operator_matrix: np.ndarray
    components: np.ndarray
    explained_variance: np.ndarray
    total_variance: float
    grid: Grid

    @property
    def d(self) -> int:
        return int(self.components.shape[0])

    def scores(self, values: np.ndarray) -> np.ndarray:
        return (values - self.mean_curve) @ (self.components * self.grid.weights).T

    def reconstruct(self, scores: np.ndarray) -> np.ndarray:
        return scores @ self.components

    def to_dict(self) -> dict:
        return {
            "d": self.d,
            "grid": self.grid.points.tolist(),
            "mean_curve": self.mean_curve.tolist(),
            "operator_matrix": self.operator_matrix.tolist(),
            "components": self.components.tolist(),
            "explained_variance": self.explained_variance.tolist(),
            "total_variance": self.total_variance,
        }

    def to_json(self) -> str:
        # repr-exact floats, so a reread fit reproduces residuals bit for bit
        return json.dumps(self.to_dict(), indent=1)

    @classmethod
    def from_dict(cls, d: dict) -> "Far1Fit":
        try:
            fit = cls(
                mean_curve=np.asarray(d["mean_curve"], dtype=float),
                operator_matrix=np.asarray(d["operator_matrix"], dtype=float).reshape(d["d"], d["d"]),
                components=np.asarray(d["components"], dtype=float).reshape(d["d"], -1),
                explained_variance=np.asarray(d["explained_variance"], dtype=float),
                total_variance=float(d["total_variance"]),
                grid=Grid(np.asarray(d["grid"], dtype=float)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"malformed fit document: {exc}") from None
        if fit.components.shape[1] != fit.grid.size or fit.mean_curve.shape != (fit.grid.size,):
            raise ValidationError("fit document: components/mean do not match the grid")
        return fit

    @classmethod
    def from_json(cls, text: str) -> "Far1Fit":
        return cls.from_dict(json.loads(text))


def _weighted_pca(centered: np.ndarray, weights: np.ndarray):
    n = centered.shape[0]
    sw = np.sqrt(weights)
    cov = (centered * sw).T @ (centered * sw) / n
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1]
    evals = np.clip(evals[order], 0.0, None)
    # back to eigencurves with unit trapezoidal L2 norm
    curves = (evecs[:, order] / sw[:, None]).T
    return evals, curves


def choose_dimension(series: FunctionalSeries, share: float = DEFAULT_VARIANCE_SHARE,
                     cap: int = MAX_AUTO_DIM) -> int:
    """Smallest number of components explaining ``share`` of the variance, capped."""
    x = series.values
    evals, _ = _weighted_pca(x - x.mean(axis=0), series.grid.weights)
    total = evals.sum()
    if total <= 0:
        return 1
    d = int(np.searchsorted(np.cumsum(evals) / total, share) + 1)
    return max(1, min(d, cap, series.p, series.n - 2))


def fit_far1(series: FunctionalSeries, d: int | None = None) -> Far1Fit:
    """Fit ``X_{t+1} - mu = rho (X_t - mu) + eps_t`` on the top ``d`` principal components.

    The score-space operator is the ridge-stabilized least-squares estimate
    ``(sum s_{t+1} s_t') (sum s_t s_t' + lam I)^{-1}`` with
    ``lam = 1e-8 * trace(sum s_t s_t')``.
    """
    if d is None:
        d = choose_dimension(series)
    if int(d) != d or d < 1 or d > min(series.n - 2, series.p):
        raise ValidationError(f"d must satisfy 1 <= d <= min(N-2, p) = {min(series.n - 2, series.p)}, got {d}")
    d = int(d)
    if series.n < d + 10:
        raise ValidationError(f"need N >= d + 10 observations, got N={series.n}, d={d}")
    x = series.values
    w = series.grid.weights
    mean = x.mean(axis=0)
    evals, curves = _weighted_pca(x - mean, w)
    comps = curves[:d]
    s = (x - mean) @ (comps * w).T
    lagged, lead = s[:-1], s[1:]
    gram = lagged.T @ lagged
    tr = np.trace(gram)
    if not tr > 0:
        raise EstimationError("score covariance is zero; the series has no variation")
    cross = lead.T @ lagged
    try:
        op = np.linalg.solve((gram + RIDGE * tr * np.eye(d)).T, cross.T).T
    except np.linalg.LinAlgError as exc:
        raise EstimationError(f"score covariance is singular even after ridge: {exc}") from None
    if not np.all(np.isfinite(op)):
        raise EstimationError("operator estimate is not finite")
    return Far1Fit(mean, op, comps, evals[:d].copy(), float(evals.sum()), series.grid)


def far1_residuals(series: FunctionalSeries, fit: Far1Fit) -> FunctionalSeries:
    """One-step prediction errors ``(X_{t+1} - mu) - P(rho s_t)``; length ``N - 1``."""
    if series.grid != fit.grid:
        raise DimensionError("series grid does not match the grid the model was fitted on")
    if series.n < 2:
        raise ValidationError("need at least two curves to form residuals")
    x = series.values
    s = fit.scores(x[:-1])
    pred = fit.reconstruct(s @ fit.operator_matrix.T)
    resid = (x[1:] - fit.mean_curve) - pred
    return FunctionalSeries(series.grid, resid, {"kind": "far1_residuals", "d": fit.d})


def log_squared_standardized(returns: FunctionalSeries, sigma: FunctionalSeries,
                             floor: float = 1e-12) -> FunctionalSeries:
    """``ln(max(R**2, floor)) - ln(sigma**2)`` pointwise."""
    if returns.values.shape != sigma.values.shape:
        raise DimensionError(f"returns {returns.values.shape} and sigma {sigma.values.shape} differ in shape")
    if returns.grid != sigma.grid:
        raise DimensionError("returns and sigma are on different grids")
    if not floor > 0:
        raise ValidationError("floor must be positive")
    sig = sigma.values
    if np.any(sig <= 0):
        i, j = np.argwhere(sig <= 0)[0]
        raise DomainError(f"sigma must be strictly positive; found {sig[i, j]!r} at curve {i}, point {j}")
    out = np.log(np.maximum(returns.values**2, floor)) - np.log(sig**2)
    return FunctionalSeries(returns.grid, out, {"kind": "log_squared_standardized"})
