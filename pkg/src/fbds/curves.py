"""
Discretized functional time series, curve norms and tick-data ingestion.

A functional series is stored as an ``N x p`` matrix whose rows are curves
evaluated on a shared grid. Integral norms use the trapezoidal rule on that
grid, which is exact for piecewise-linear curves.
"""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from fbds.errors import DegenerateScaleError, DimensionError, DomainError, ValidationError


class CurveNorm(str, enum.Enum):
    """Norm used to measure the distance between two curves."""

    L1 = "l1"
    L2 = "l2"
    LINF = "linf"

    @classmethod
    def parse(cls, value: "str | CurveNorm") -> "CurveNorm":
        if isinstance(value, CurveNorm):
            return value
        key = str(value).strip().lower().replace("_", "")
        aliases = {"l1": cls.L1, "l2": cls.L2, "linf": cls.LINF, "inf": cls.LINF, "sup": cls.LINF}
        try:
            return aliases[key]
        except KeyError:
            raise ValidationError(f"unknown norm {value!r}; expected one of l1, l2, linf") from None


@dataclass(frozen=True)
class Grid:
    """Strictly increasing evaluation abscissae shared by every curve.

    A single-point grid is accepted so that scalar series can be pushed
    through the functional machinery; integral norms then reduce to
    ``|a - b|``.
    """

    points: np.ndarray

    def __post_init__(self) -> None:
        pts = np.array(self.points, dtype=float).ravel()
        if pts.size < 1:
            raise ValidationError("grid must contain at least one point")
        if not np.all(np.isfinite(pts)):
            raise ValidationError("grid points must be finite")
        if pts.size > 1 and not np.all(np.diff(pts) > 0):
            raise ValidationError("grid points must be strictly increasing")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @classmethod
    def uniform(cls, p: int, start: float = 0.0, stop: float = 1.0) -> "Grid":
        return cls(np.linspace(start, stop, p))

    @property
    def size(self) -> int:
        return int(self.points.size)

    @property
    def weights(self) -> np.ndarray:
        """Trapezoidal quadrature weights (unit weight on a one-point grid)."""
        return _trapezoid_weights(self.points)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Grid):
            return NotImplemented
        return self.points.shape == other.points.shape and bool(np.all(self.points == other.points))

    def __hash__(self) -> int:
        return hash(self.points.tobytes())


def _trapezoid_weights(points: np.ndarray) -> np.ndarray:
    if points.size == 1:
        w = np.ones(1)
    else:
        h = np.diff(points)
        w = np.zeros(points.size)
        w[:-1] += h / 2.0
        w[1:] += h / 2.0
    w.setflags(write=False)
    return w


@dataclass(frozen=True)
class FunctionalSeries:
    """``N`` curves sampled on a common :class:`Grid`.

    Parameters
    ----------
    grid : Grid
        Evaluation points shared by all curves.
    values : ndarray, shape (N, p)
        Row ``t`` is curve ``t`` evaluated on ``grid``.
    """

    grid: Grid
    values: np.ndarray
    metadata: dict = field(default_factory=dict, compare=False)

    def __post_init__(self) -> None:
        vals = np.array(self.values, dtype=float)
        if vals.ndim == 1:
            vals = vals.reshape(-1, 1) if self.grid.size == 1 else vals.reshape(1, -1)
        if vals.ndim != 2:
            raise DimensionError(f"values must be a 2-d array, got {vals.ndim} dimensions")
        if vals.shape[0] < 1:
            raise ValidationError("a functional series needs at least one curve")
        if vals.shape[1] != self.grid.size:
            raise DimensionError(
                f"curves have {vals.shape[1]} points but the grid has {self.grid.size}"
            )
        if not np.all(np.isfinite(vals)):
            raise ValidationError("curve values must be finite")
        vals = np.ascontiguousarray(vals)
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def n(self) -> int:
        return int(self.values.shape[0])

    @property
    def p(self) -> int:
        return int(self.values.shape[1])

    def __len__(self) -> int:
        return self.n

    def with_values(self, values: np.ndarray) -> "FunctionalSeries":
        return FunctionalSeries(self.grid, values, dict(self.metadata))

    @classmethod
    def from_scalar(cls, x: Sequence[float]) -> "FunctionalSeries":
        """Wrap a scalar time series as curves on a one-point grid."""
        x = np.asarray(x, dtype=float).reshape(-1, 1)
        return cls(Grid(np.zeros(1)), x)


# ---------------------------------------------------------------------------
# distances


def _row_distances(rows: np.ndarray, ref: np.ndarray, weights: np.ndarray, norm: CurveNorm) -> np.ndarray:
    # Every distance in the package goes through here, so single distances and
    # full matrices agree bit for bit.
    diff = rows - ref
    if norm is CurveNorm.L2:
        return np.sqrt(np.sum(diff * diff * weights, axis=-1))
    if norm is CurveNorm.L1:
        return np.sum(np.abs(diff) * weights, axis=-1)
    return np.max(np.abs(diff), axis=-1)


def curve_distance(a, b, grid: Grid, norm: "CurveNorm | str" = CurveNorm.L2) -> float:
    """Distance ``||a - b||`` between two curves on ``grid``.

    L1 and L2 integrate ``|a - b|`` and ``(a - b)**2`` with the trapezoidal
    rule (L2 takes the square root); Linf is the largest pointwise gap.
    """
    norm = CurveNorm.parse(norm)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != (grid.size,) or b.shape != (grid.size,):
        raise DimensionError(
            f"curves of shape {a.shape} and {b.shape} do not conform to a grid of {grid.size} points"
        )
    return float(_row_distances(a[None, :], b, grid.weights, norm)[0])


def distance_matrix(series: FunctionalSeries, norm: "CurveNorm | str" = CurveNorm.L2) -> np.ndarray:
    """Symmetric ``N x N`` matrix of pairwise curve distances.

    Entry ``(i, j)`` equals ``curve_distance(values[i], values[j])`` exactly;
    the diagonal is zero.
    """
    norm = CurveNorm.parse(norm)
    n = series.n
    if n < 2:
        raise ValidationError("distance matrix needs at least two curves")
    x = series.values
    w = series.grid.weights
    dm = np.zeros((n, n))
    for i in range(n - 1):
        d = _row_distances(x[i + 1 :], x[i], w, norm)
        dm[i, i + 1 :] = d
        dm[i + 1 :, i] = d
    return dm


def pooled_sd(series: FunctionalSeries) -> float:
    """Sample standard deviation of all ``N * p`` values pooled together."""
    vals = series.values.ravel()
    if vals.size < 2 or np.all(vals == vals[0]):
        raise DegenerateScaleError("all values are identical; a proximity radius in s.d. units would be zero")
    return float(np.std(vals, ddof=1))


# ---------------------------------------------------------------------------
# ticks and CIDR curves


@dataclass(frozen=True)
class TickDay:
    day_id: str
    timestamps: np.ndarray
    prices: np.ndarray


@dataclass(frozen=True)
class TickSheet:
    """Intraday price ticks grouped by day, plus the canonical clock."""

    days: tuple
    clock: np.ndarray

    def __post_init__(self) -> None:
        clock = np.asarray(self.clock, dtype=float).ravel()
        if clock.size == 0:
            raise ValidationError("target clock is empty")
        if clock.size > 1 and not np.all(np.diff(clock) > 0):
            raise ValidationError("target clock must be strictly increasing")
        object.__setattr__(self, "clock", clock)
        days = []
        for day in self.days:
            if not isinstance(day, TickDay):
                day_id, ticks = day
                ticks = list(ticks)
                ts = np.array([t for t, _ in ticks], dtype=float)
                px = np.array([p for _, p in ticks], dtype=float)
                day = TickDay(str(day_id), ts, px)
            if day.timestamps.size == 0:
                raise ValidationError(f"day {day.day_id!r} has no ticks")
            if np.any(~(day.prices > 0)):
                bad = int(np.flatnonzero(~(day.prices > 0))[0])
                raise DomainError(
                    f"day {day.day_id!r}, tick {bad}: price {day.prices[bad]!r} is not strictly positive"
                )
            if day.timestamps.size > 1 and not np.all(np.diff(day.timestamps) > 0):
                raise ValidationError(f"day {day.day_id!r}: timestamps must be strictly increasing")
            days.append(day)
        if not days:
            raise ValidationError("tick sheet contains no days")
        object.__setattr__(self, "days", tuple(days))


def cidr_transform(ticks: TickSheet) -> FunctionalSeries:
    """Cumulative intraday return curves, one per day.

    Prices are linearly interpolated onto the clock (held flat beyond the
    first and last tick) and ``R(t_j) = 100 * (ln P(t_j) - ln P(t_1))``.
    """
    clock = ticks.clock
    rows = []
    for day in ticks.days:
        log_p = np.log(np.interp(clock, day.timestamps, day.prices))
        rows.append(100.0 * (log_p - log_p[0]))
    values = np.vstack(rows)
    return FunctionalSeries(
        Grid(clock),
        values,
        {"days": [d.day_id for d in ticks.days]},
    )


def trading_clock(start: float, stop: float, count: int) -> np.ndarray:
    """``count`` equally spaced timestamps (seconds) from ``start`` to ``stop``."""
    if count < 1:
        raise ValidationError("clock needs at least one point")
    if count > 1 and not stop > start:
        raise ValidationError("clock stop must exceed start")
    return np.linspace(start, stop, count)


# ---------------------------------------------------------------------------
# CSV formats


def write_series_csv(series: FunctionalSeries, path) -> None:
    """First row holds the grid, each following row one curve."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([repr(float(u)) for u in series.grid.points])
        for row in series.values:
            writer.writerow([repr(float(v)) for v in row])


def read_series_csv(path) -> FunctionalSeries:
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                rows.append([float(c) for c in row])
            except ValueError as exc:
                raise ValidationError(f"{path}: line {lineno}: {exc}") from None
    if len(rows) < 2:
        raise ValidationError(f"{path}: need a grid row and at least one curve")
    width = len(rows[0])
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != width:
            raise ValidationError(f"{path}: line {lineno} has {len(row)} values, grid has {width}")
    return FunctionalSeries(Grid(np.array(rows[0])), np.array(rows[1:]), {"source": str(path)})


def read_tick_csv(path, clock: np.ndarray) -> TickSheet:
    """Read ``day_id,timestamp_seconds,price`` rows (header optional)."""
    grouped: dict[str, list] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            if lineno == 1 and row[0].strip().lower() == "day_id":
                continue
            if len(row) != 3:
                raise ValidationError(f"{path}: line {lineno}: expected 3 columns, got {len(row)}")
            day_id = row[0].strip()
            try:
                ts, price = float(row[1]), float(row[2])
            except ValueError as exc:
                raise ValidationError(f"{path}: line {lineno}: {exc}") from None
            if not price > 0:
                raise DomainError(f"{path}: line {lineno}: day {day_id!r} has non-positive price {price!r}")
            grouped.setdefault(day_id, []).append((ts, price))
    return TickSheet(tuple(grouped.items()), clock)
