"""
The functional BDS statistic.

Two curves' m-histories are neighbours when every one of the ``m``
component-wise curve distances is strictly below ``r``. Along a diagonal
``j - i = const`` of the base indicator matrix this is a running AND, so we
store, for every pair ``(i, j)``, the length of the run of consecutive
neighbouring pairs ending there. A pair's m-history indicator is then
``run >= m``, and a histogram of run lengths yields the neighbour counts for
every embedding dimension at once, in exact integer arithmetic.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np
from scipy.special import ndtr

from fbds.curves import CurveNorm, FunctionalSeries, distance_matrix, pooled_sd
from fbds.errors import (
    DegenerateScaleError,
    DegenerateVarianceError,
    FbdsError,
    InsufficientLengthError,
    ValidationError,
)

#: sigma**2 is degenerate when it falls below this fraction of the magnitude
#: of the terms it is built from (cancellation down to rounding noise).
VARIANCE_FLOOR = 1e-12


@dataclass(frozen=True)
class BdsParams:
    m: int
    r: float
    norm: CurveNorm = CurveNorm.L2

    def __post_init__(self) -> None:
        if int(self.m) != self.m or self.m < 2:
            raise ValidationError(f"embedding dimension m must be an integer >= 2, got {self.m!r}")
        if not (self.r > 0 and math.isfinite(self.r)):
            raise ValidationError(f"radius r must be positive and finite, got {self.r!r}")
        object.__setattr__(self, "m", int(self.m))
        object.__setattr__(self, "r", float(self.r))
        object.__setattr__(self, "norm", CurveNorm.parse(self.norm))


@dataclass(frozen=True)
class BdsResult:
    statistic: float
    p_value: float
    c_m: float
    c_1: float
    k_hat: float
    sigma: float
    m: int
    r: float
    norm: CurveNorm
    r_multiplier: float | None = None

    def as_dict(self) -> dict:
        d = asdict(self)
        d["norm"] = self.norm.value
        return d


class NeighbourCounts:
    """Exact neighbour-pair bookkeeping for one distance matrix and radius.

    Parameters
    ----------
    dm : ndarray, shape (N, N)
        Symmetric distance matrix.
    r : float
        Proximity radius; a pair is a neighbour iff its distance is ``< r``.
    """

    def __init__(self, dm: np.ndarray, r: float):
        dm = np.asarray(dm)
        if dm.ndim != 2 or dm.shape[0] != dm.shape[1]:
            raise ValidationError("distance matrix must be square")
        self.n = n = dm.shape[0]
        self.r = float(r)
        base = dm < r
        self.base = base
        runs = np.zeros((n, n), dtype=np.int32)
        if n > 1:
            runs[0, 1:] = base[0, 1:]
            for t in range(1, n - 1):
                # run ending at (t, j) extends the run ending at (t-1, j-1)
                runs[t, t + 1 :] = base[t, t + 1 :] * (runs[t - 1, t : n - 1] + 1)
        self.runs = runs
        upper = runs[np.triu_indices(n, 1)]
        hist = np.bincount(upper, minlength=n + 1).astype(np.int64)
        # pairs_at_least[m] = number of pairs with run length >= m
        self._at_least = np.cumsum(hist[::-1])[::-1]
        tri = np.triu(base, 1)
        self.lower_counts = tri.sum(axis=0).astype(np.int64)  # neighbours with smaller index
        self.upper_counts = tri.sum(axis=1).astype(np.int64)  # neighbours with larger index

    def pair_count(self, m: int) -> int:
        """Number of pairs ``i < j <= N - m + 1`` whose m-histories are neighbours."""
        if m < 1 or m > self.n - 1:
            raise InsufficientLengthError(f"m={m} needs 1 <= m <= N-1 with N={self.n}")
        return int(self._at_least[m]) if m < self._at_least.size else 0

    def triple_count(self) -> int:
        """``sum over t<s<u`` of ``1{d(t,s)<r} * 1{d(s,u)<r}``."""
        return int(np.dot(self.lower_counts, self.upper_counts))


def _check_dm(dm) -> np.ndarray:
    dm = np.asarray(dm, dtype=float)
    if dm.ndim != 2 or dm.shape[0] != dm.shape[1]:
        raise ValidationError("distance matrix must be square")
    return dm


def history_indicator(dm, m: int, r: float) -> np.ndarray:
    """Boolean ``M x M`` upper-triangular matrix of m-history neighbours.

    Entry ``(i, j)``, ``i < j``, is true iff
    ``max_k dm[i+k, j+k] < r`` for ``k = 0..m-1``. Indices are zero-based
    and ``M = N - m + 1``.
    """
    dm = _check_dm(dm)
    n = dm.shape[0]
    if int(m) != m or m < 1 or n - m + 1 < 2:
        raise InsufficientLengthError(f"m={m} out of range for N={n}")
    m = int(m)
    counts = NeighbourCounts(dm, r)
    big_m = n - m + 1
    ind = counts.runs[m - 1 :, m - 1 :] >= m
    return np.triu(ind, 1)[:big_m, :big_m]


def correlation_integral(dm, m: int, r: float, _counts: NeighbourCounts | None = None) -> float:
    """Fraction of m-history pairs closer than ``r`` in the sup-norm.

    ``C(m, N, r) = 2 / (M (M - 1)) * #{i < j <= M : neighbours}`` with
    ``M = N - m + 1``.
    """
    counts = _counts if _counts is not None else NeighbourCounts(_check_dm(dm), r)
    n = counts.n
    if int(m) != m or m < 1:
        raise ValidationError(f"m must be a positive integer, got {m!r}")
    big_m = n - int(m) + 1
    if big_m < 2:
        raise InsufficientLengthError(f"C(m={m}) needs N - m + 1 >= 2, got N={n}")
    return 2.0 * counts.pair_count(int(m)) / (big_m * (big_m - 1))


def k_estimate(dm, r: float, _counts: NeighbourCounts | None = None) -> float:
    """Estimate of ``K``: fraction of ordered triples ``t < s < u`` with
    ``s`` a neighbour of both ``t`` and ``u``.

    Computed as ``sum_s a_s * b_s`` where ``a_s`` (``b_s``) counts the
    neighbours of ``s`` with a smaller (larger) index.
    """
    counts = _counts if _counts is not None else NeighbourCounts(_check_dm(dm), r)
    n = counts.n
    if n < 3:
        raise InsufficientLengthError(f"K estimate needs at least 3 observations, got {n}")
    return 6.0 * counts.triple_count() / (n * (n - 1) * (n - 2))


def bds_variance(c: float, k: float, m: int) -> float:
    """Asymptotic variance ``sigma**2`` of ``sqrt(N) (C_m - C_1**m)``.

    Raises
    ------
    DegenerateVarianceError
        If the variance is not positive or is lost in cancellation (below
        ``VARIANCE_FLOOR`` times the size of its terms), which happens when
        ``k`` is (numerically) equal to ``c**2``.
    """
    if not (0.0 <= c <= 1.0 and 0.0 <= k <= 1.0):
        raise ValidationError(f"c and k must lie in [0, 1], got c={c!r}, k={k!r}")
    if int(m) != m or m < 2:
        raise ValidationError(f"m must be an integer >= 2, got {m!r}")
    m = int(m)
    cross = sum(k ** (m - j) * c ** (2 * j) for j in range(1, m))
    positive = k**m + 2.0 * cross + (m - 1) ** 2 * c ** (2 * m)
    negative = m**2 * k * c ** (2 * m - 2)
    var = 4.0 * (positive - negative)
    if not (var > 0 and var >= VARIANCE_FLOOR * 4.0 * (positive + negative)):
        raise DegenerateVarianceError(
            f"degenerate variance sigma^2={var:.3e} at c={c!r}, k={k!r}, m={m}", c=c, k=k
        )
    return var


def two_sided_p_value(z: float) -> float:
    return float(2.0 * ndtr(-abs(z)))


def _result_from_counts(counts: NeighbourCounts, m: int, r: float, norm: CurveNorm,
                        r_multiplier: float | None) -> BdsResult:
    n = counts.n
    if n < m + 2:
        raise InsufficientLengthError(f"series of length {n} is too short for m={m} (need N >= m + 2)")
    c_m = correlation_integral(None, m, r, _counts=counts)
    c_1 = correlation_integral(None, 1, r, _counts=counts)
    k = k_estimate(None, r, _counts=counts)
    sigma = math.sqrt(bds_variance(c_1, k, m))
    stat = math.sqrt(n) * (c_m - c_1**m) / sigma
    return BdsResult(stat, two_sided_p_value(stat), c_m, c_1, k, sigma, m, r, norm, r_multiplier)


def _radius_scale(series: FunctionalSeries, r_in_sd_units: bool) -> float:
    if not r_in_sd_units:
        return 1.0
    try:
        return pooled_sd(series)
    except DegenerateScaleError:
        if series.n > 1 and np.all(series.values == series.values.flat[0]):
            # identical curves: every distance is 0, so any positive radius
            # gives C = K = 1 and the variance check reports the degeneracy
            return 1.0
        raise


def bds_test(series: FunctionalSeries, params: BdsParams, r_in_sd_units: bool = True,
             dm: np.ndarray | None = None) -> BdsResult:
    """Functional BDS test of the IID hypothesis.

    Parameters
    ----------
    series : FunctionalSeries
    params : BdsParams
        ``params.r`` is a multiple of the pooled s.d. when ``r_in_sd_units``,
        otherwise an absolute radius in data units.
    r_in_sd_units : bool
    dm : ndarray, optional
        Precomputed distance matrix for ``series`` under ``params.norm``.

    Returns
    -------
    BdsResult
        Statistic ``sqrt(N) (C(m,N,r) - C(1,N,r)**m) / sigma`` with a
        two-sided standard-normal p-value.
    """
    n = series.n
    if n < params.m + 2:
        raise InsufficientLengthError(
            f"series of length {n} is too short for m={params.m} (need N >= m + 2)"
        )
    scale = _radius_scale(series, r_in_sd_units)
    r_abs = params.r * scale
    if dm is None:
        dm = distance_matrix(series, params.norm)
    counts = NeighbourCounts(dm, r_abs)
    return _result_from_counts(counts, params.m, r_abs, params.norm,
                               params.r if r_in_sd_units else None)


@dataclass(frozen=True)
class GridCell:
    m: int
    r_multiplier: float
    r_absolute: float
    result: BdsResult | None = None
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.result is not None


def bds_grid(series: FunctionalSeries, m_values: Sequence[int], r_multipliers: Sequence[float],
             norm: "CurveNorm | str" = CurveNorm.L2, r_in_sd_units: bool = True,
             dm: np.ndarray | None = None) -> list[GridCell]:
    """BDS test over an ``(m, r)`` grid sharing one distance matrix.

    Cells are ordered by ``r`` then ``m``. A failing cell carries its error
    message instead of a result; other cells are unaffected.
    """
    norm = CurveNorm.parse(norm)
    m_values = [int(m) for m in m_values]
    r_multipliers = [float(r) for r in r_multipliers]
    if not m_values or not r_multipliers:
        raise ValidationError("m and r grids must be non-empty")
    for m in m_values:
        BdsParams(m, 1.0, norm)
    for r in r_multipliers:
        if not r > 0:
            raise ValidationError(f"radius multipliers must be positive, got {r!r}")
    try:
        scale = _radius_scale(series, r_in_sd_units)
    except DegenerateScaleError as exc:  # pragma: no cover - single-value series
        return [GridCell(m, r, float("nan"), error=f"{type(exc).__name__}: {exc}")
                for r in r_multipliers for m in m_values]
    if dm is None and series.n >= 2:
        dm = distance_matrix(series, norm)
    cells = []
    for r in r_multipliers:
        r_abs = r * scale
        counts = NeighbourCounts(dm, r_abs) if dm is not None else None
        for m in m_values:
            try:
                if counts is None:
                    raise InsufficientLengthError(f"series of length {series.n} is too short for m={m}")
                res = _result_from_counts(counts, m, r_abs, norm, r if r_in_sd_units else None)
                cells.append(GridCell(m, r, r_abs, result=res))
            except FbdsError as exc:
                cells.append(GridCell(m, r, r_abs, error=f"{type(exc).__name__}: {exc}"))
    return cells


RESULT_COLUMNS = ("m", "r_multiplier", "r_absolute", "statistic", "p_value", "c_m", "c_1", "k_hat", "sigma")


def _fmt(v) -> str:
    if v is None:
        return ""
    return repr(float(v)) if isinstance(v, float) else str(v)


def grid_to_csv(cells: Sequence[GridCell]) -> str:
    """One row per cell; failed cells leave the numeric columns blank and fill ``error``."""
    lines = [",".join(RESULT_COLUMNS + ("error",))]
    for cell in cells:
        res = cell.result
        vals = [cell.m, cell.r_multiplier, cell.r_absolute]
        vals += [getattr(res, k) if res else None for k in ("statistic", "p_value", "c_m", "c_1", "k_hat", "sigma")]
        err = (cell.error or "").replace('"', "'")
        lines.append(",".join(_fmt(v) for v in vals) + "," + (f'"{err}"' if err else ""))
    return "\n".join(lines) + "\n"


def grid_to_json(cells: Sequence[GridCell], norm: "CurveNorm | str", metadata: dict | None = None) -> str:
    import json

    rows = []
    for cell in cells:
        row = {"m": cell.m, "r_multiplier": cell.r_multiplier,
               "r_absolute": None if math.isnan(cell.r_absolute) else cell.r_absolute}
        for k in ("statistic", "p_value", "c_m", "c_1", "k_hat", "sigma"):
            row[k] = getattr(cell.result, k) if cell.result else None
        row["error"] = cell.error
        rows.append(row)
    doc = {"norm": CurveNorm.parse(norm).value, "series": metadata or {}, "results": rows}
    return json.dumps(doc, indent=1, sort_keys=True)
