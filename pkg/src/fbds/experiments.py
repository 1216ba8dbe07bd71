"""
Monte-Carlo campaigns: normality resemblance, power, outlier robustness and
series length.

A campaign simulates ``paths`` independent series per sample size. Every
``(norm, m, r)`` cell is evaluated on the same simulated paths, and path
``k`` at sample-size index ``j`` draws from the stream
``SeedSequence([master_seed, block, j, k])``. Any cell can therefore be
recomputed on its own, and results do not depend on the worker count.
"""

from __future__ import annotations

import csv
import enum
import io
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy.special import ndtr

from fbds.bds import bds_grid
from fbds.curves import CurveNorm
from fbds.errors import ValidationError
from fbds.simulate import Process, SimSpec, gen_far1, gen_iid, inject_outliers, rng_for

KS_ALPHA = 0.025
POWER_ALPHA = 0.05
LENGTHS = (100, 250, 500, 750, 1000)

# seed-stream blocks; normality and robustness share one so that a
# zero-shift contamination reproduces the normality campaign exactly
NULL_BLOCK = 0
POWER_BLOCK = 1


# ---------------------------------------------------------------------------
# one-sample Kolmogorov-Smirnov against N(0, 1)


def kolmogorov_sf(x: float) -> float:
    """Survival function of the limiting Kolmogorov distribution, ``P(K > x)``."""
    if x <= 0:
        return 1.0
    if x < 1.18:
        # small-x form: P(K <= x) = sqrt(2 pi)/x * sum exp(-(2k-1)^2 pi^2 / (8 x^2))
        w = math.pi**2 / (8.0 * x * x)
        total = 0.0
        k = 1
        while True:
            term = math.exp(-((2 * k - 1) ** 2) * w)
            total += term
            if term < 1e-10 * max(total, 1e-300):
                break
            k += 1
        return min(1.0, max(0.0, 1.0 - math.sqrt(2.0 * math.pi) / x * total))
    total = 0.0
    k = 1
    while True:
        term = math.exp(-2.0 * k * k * x * x)
        total += term if k % 2 else -term
        if term < 1e-10:
            break
        k += 1
    return min(1.0, max(0.0, 2.0 * total))


def ks_test_standard_normal(sample: Sequence[float]) -> tuple[float, float]:
    """One-sample KS test of ``sample`` against the standard normal.

    Returns ``(D, p_value)`` where ``D = sup |ECDF - Phi|`` is evaluated
    exactly at the jump points and the p-value is the asymptotic
    Kolmogorov tail at ``sqrt(n) D``.
    """
    x = np.sort(np.asarray(sample, dtype=float).ravel())
    n = x.size
    if n == 0:
        raise ValidationError("KS test needs a non-empty sample")
    if not np.all(np.isfinite(x)):
        raise ValidationError("KS sample must be finite")
    cdf = ndtr(x)
    i = np.arange(1, n + 1)
    d_plus = np.max(i / n - cdf)
    d_minus = np.max(cdf - (i - 1) / n)
    d = float(max(d_plus, d_minus))
    return d, kolmogorov_sf(math.sqrt(n) * d)


# ---------------------------------------------------------------------------
# campaign description


class Study(str, enum.Enum):
    NORMALITY = "normality"
    POWER = "power"
    ROBUSTNESS = "robustness"
    LENGTH = "length"


@dataclass(frozen=True)
class CampaignSpec:
    study: Study
    paths: int
    sim: SimSpec
    master_seed: int
    m_values: tuple = tuple(range(2, 11))
    r_multipliers: tuple = (0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 1.75, 2.0)
    norms: tuple = (CurveNorm.L2,)
    alpha: float = POWER_ALPHA
    ks_alpha: float = KS_ALPHA
    lengths: tuple = LENGTHS
    outlier_fraction: float = 0.01
    shift_sds: float = 5.0
    length_power_rho: float = 0.1
    emit_raw: bool = False

    def __post_init__(self) -> None:
        try:
            object.__setattr__(self, "study", Study(str(getattr(self.study, "value", self.study)).lower()))
        except ValueError:
            raise ValidationError(f"study: unknown study {self.study!r}") from None
        if isinstance(self.paths, bool) or not isinstance(self.paths, (int, np.integer)) or self.paths < 2:
            raise ValidationError(f"paths: must be an integer >= 2, got {self.paths!r}")
        if isinstance(self.master_seed, bool) or not isinstance(self.master_seed, (int, np.integer)):
            raise ValidationError(f"master_seed: expected an integer, got {self.master_seed!r}")
        for name in ("m_values", "r_multipliers", "norms", "lengths"):
            v = tuple(getattr(self, name))
            if not v:
                raise ValidationError(f"{name}: must be non-empty")
            object.__setattr__(self, name, v)
        if any(int(m) != m or m < 2 for m in self.m_values):
            raise ValidationError("m_values: every m must be an integer >= 2")
        object.__setattr__(self, "m_values", tuple(int(m) for m in self.m_values))
        if any(not r > 0 for r in self.r_multipliers):
            raise ValidationError("r_multipliers: must be positive")
        object.__setattr__(self, "r_multipliers", tuple(float(r) for r in self.r_multipliers))
        try:
            object.__setattr__(self, "norms", tuple(CurveNorm.parse(n) for n in self.norms))
        except ValidationError as exc:
            raise ValidationError(f"norms: {exc}") from None
        if any(int(n) != n or n < 3 for n in self.lengths):
            raise ValidationError("lengths: every length must be an integer >= 3")
        if not 0 < self.alpha < 1 or not 0 < self.ks_alpha < 1:
            raise ValidationError("alpha: rejection levels must lie in (0, 1)")
        if not 0 < self.outlier_fraction < 1:
            raise ValidationError("outlier_fraction: must lie in (0, 1)")
        if not abs(self.length_power_rho) < 1:
            raise ValidationError("length_power_rho: |rho| must be < 1")
        if self.study is Study.NORMALITY and self.sim.process is not Process.IID:
            raise ValidationError("sim.process: a normality study simulates IID series")
        if self.study is Study.POWER and self.sim.process is not Process.FAR1:
            raise ValidationError("sim.process: a power study simulates an fAR(1) process")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["study"] = self.study.value
        d["sim"] = self.sim.to_dict()
        d["norms"] = [n.value for n in self.norms]
        for k in ("m_values", "r_multipliers", "lengths"):
            d[k] = list(d[k])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "CampaignSpec":
        d = dict(d)
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValidationError(f"{sorted(unknown)[0]}: unknown field")
        for required in ("study", "paths", "sim", "master_seed"):
            if required not in d:
                raise ValidationError(f"{required}: missing required field")
        sim = dict(d["sim"]) if isinstance(d["sim"], dict) else d["sim"]
        if isinstance(sim, dict):
            sim.setdefault("seed", d["master_seed"])
            d["sim"] = SimSpec.from_dict(sim)
        return cls(**d)

    @classmethod
    def from_json(cls, text: str) -> "CampaignSpec":
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as exc:
            raise ValidationError(f"config is not valid JSON: {exc}") from None


# ---------------------------------------------------------------------------
# per-path work


@dataclass(frozen=True)
class _Unit:
    kind: str            # "null", "contaminated", "power"
    block: int
    size_index: int
    path: int
    n_obs: int
    rho: float


def _simulate_unit(spec: CampaignSpec, unit: _Unit):
    rng = rng_for(spec.master_seed, unit.block, unit.size_index, unit.path)
    sim = replace(spec.sim, n_obs=unit.n_obs, seed=spec.master_seed)
    if unit.kind == "power":
        return gen_far1(replace(sim, process=Process.FAR1, rho=unit.rho), rng)
    series = gen_iid(replace(sim, process=Process.IID), rng)
    if unit.kind == "contaminated":
        series = inject_outliers(series, spec.outlier_fraction, spec.shift_sds, rng)
    return series


def _run_unit(args) -> list:
    spec, unit, m_values, r_values = args
    series = _simulate_unit(spec, unit)
    out = []
    for norm in spec.norms:
        for cell in bds_grid(series, m_values, r_values, norm):
            if cell.ok:
                out.append((cell.result.statistic, cell.result.p_value))
            else:
                out.append((None, cell.error.split(":", 1)[0]))
    return out


def default_workers() -> int:
    env = os.environ.get("FBDS_WORKERS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ValidationError(f"FBDS_WORKERS must be an integer, got {env!r}") from None
    return 1


def _map_units(tasks: list, workers: int) -> list:
    if workers <= 1 or len(tasks) < 2:
        return [_run_unit(t) for t in tasks]
    chunk = max(1, len(tasks) // (workers * 4))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_unit, tasks, chunksize=chunk))


# ---------------------------------------------------------------------------
# reports


@dataclass
class CellRecord:
    norm: CurveNorm
    m: int
    r_multiplier: float
    n: int
    metric: str                 # "ks_p_value" or "rejection_rate"
    value: float
    paths: int
    n_ok: int
    n_errors: int
    rejections: int | None = None
    ks_d: float | None = None
    error: str | None = None
    raw: list | None = None

    def key(self) -> tuple:
        return (self.norm.value, self.m, self.r_multiplier, self.n, self.metric)


@dataclass
class ExperimentReport:
    study: Study
    master_seed: int
    paths: int
    records: list = field(default_factory=list)
    spec: dict = field(default_factory=dict)

    def cell(self, norm, m: int, r_multiplier: float, n: int | None = None,
             metric: str | None = None) -> CellRecord:
        norm = CurveNorm.parse(norm)
        for rec in self.records:
            if (rec.norm is norm and rec.m == m and rec.r_multiplier == float(r_multiplier)
                    and (n is None or rec.n == n) and (metric is None or rec.metric == metric)):
                return rec
        raise KeyError((norm.value, m, r_multiplier, n, metric))

    def to_rows(self) -> list[tuple]:
        rows = []
        for rec in self.records:
            base = (rec.norm.value, rec.m, repr(rec.r_multiplier), rec.n)
            rows.append(base + (rec.metric, repr(float(rec.value))))
            if rec.ks_d is not None:
                rows.append(base + ("ks_d_statistic", repr(float(rec.ks_d))))
            if rec.rejections is not None:
                rows.append(base + ("rejections", str(rec.rejections)))
            rows.append(base + ("errors", str(rec.n_errors)))
        return rows

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["norm", "m", "r_multiplier", "n", "metric_name", "value"])
        w.writerows(self.to_rows())
        return buf.getvalue()

    def to_json(self, include_raw: bool = False) -> str:
        recs = []
        for rec in self.records:
            d = asdict(rec)
            d["norm"] = rec.norm.value
            d["value"] = None if math.isnan(rec.value) else rec.value
            if not include_raw:
                d.pop("raw")
            recs.append(d)
        doc = {"study": self.study.value, "master_seed": self.master_seed, "paths": self.paths,
               "spec": self.spec, "records": recs}
        return json.dumps(doc, indent=1, sort_keys=True)

    def raw_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["norm", "m", "r_multiplier", "n", "metric_name", "path", "statistic", "p_value"])
        for rec in self.records:
            for k, (stat, p) in enumerate(rec.raw or []):
                w.writerow([rec.norm.value, rec.m, repr(rec.r_multiplier), rec.n, rec.metric, k,
                            "" if stat is None else repr(stat), p if stat is None else repr(p)])
        return buf.getvalue()


def _aggregate(spec: CampaignSpec, results: list, n: int, metric: str) -> list[CellRecord]:
    """Fold per-path results (in path order) into one record per cell."""
    records = []
    idx = 0
    for norm in spec.norms:
        for r in spec.r_multipliers:
            for m in spec.m_values:
                column = [res[idx] for res in results]
                idx += 1
                ok = [(s, p) for s, p in column if s is not None]
                n_err = len(column) - len(ok)
                rec = CellRecord(norm, m, r, n, metric, float("nan"), len(column), len(ok), n_err,
                                 raw=column if spec.emit_raw else None)
                if n_err:
                    kinds = sorted({p for s, p in column if s is None})
                    rec.error = f"{n_err} of {len(column)} paths failed ({', '.join(kinds)})"
                if metric == "ks_p_value":
                    if ok:
                        rec.ks_d, rec.value = ks_test_standard_normal([s for s, _ in ok])
                else:
                    # failed paths cannot reject
                    rec.rejections = sum(1 for _, p in ok if p < spec.alpha)
                    rec.value = rec.rejections / len(column)
                records.append(rec)
    return records


def _campaign(spec: CampaignSpec, kind: str, block: int, lengths: Sequence[int], rho: float,
              metric: str, workers: int) -> list[CellRecord]:
    records = []
    for j, n in enumerate(lengths):
        units = [_Unit(kind, block, j, k, int(n), rho) for k in range(spec.paths)]
        tasks = [(spec, u, spec.m_values, spec.r_multipliers) for u in units]
        results = _map_units(tasks, workers)
        records.extend(_aggregate(spec, results, int(n), metric))
    return records


def _report(spec: CampaignSpec, records: list) -> ExperimentReport:
    return ExperimentReport(spec.study, spec.master_seed, spec.paths, records, spec.to_dict())


def run_normality_study(spec: CampaignSpec, workers: int | None = None) -> ExperimentReport:
    """KS p-value of the BDS statistics of ``paths`` IID series, per cell."""
    if spec.study is not Study.NORMALITY:
        raise ValidationError("run_normality_study needs study = normality")
    workers = default_workers() if workers is None else workers
    recs = _campaign(spec, "null", NULL_BLOCK, [spec.sim.n_obs], 0.0, "ks_p_value", workers)
    return _report(spec, recs)


def run_power_study(spec: CampaignSpec, workers: int | None = None) -> ExperimentReport:
    """Fraction of fAR(1) paths rejected at level ``alpha``, per cell."""
    if spec.study is not Study.POWER:
        raise ValidationError("run_power_study needs study = power")
    workers = default_workers() if workers is None else workers
    recs = _campaign(spec, "power", POWER_BLOCK, [spec.sim.n_obs], spec.sim.rho, "rejection_rate", workers)
    return _report(spec, recs)


def run_robustness_study(spec: CampaignSpec, workers: int | None = None) -> ExperimentReport:
    """Normality study on IID series with a fraction of mean-shifted curves."""
    if spec.study is not Study.ROBUSTNESS:
        raise ValidationError("run_robustness_study needs study = robustness")
    workers = default_workers() if workers is None else workers
    recs = _campaign(spec, "contaminated", NULL_BLOCK, [spec.sim.n_obs], 0.0, "ks_p_value", workers)
    return _report(spec, recs)


def run_length_study(spec: CampaignSpec, workers: int | None = None) -> ExperimentReport:
    """KS (IID) and rejection-rate (fAR(1)) metrics across series lengths."""
    if spec.study is not Study.LENGTH:
        raise ValidationError("run_length_study needs study = length")
    workers = default_workers() if workers is None else workers
    recs = _campaign(spec, "null", NULL_BLOCK, spec.lengths, 0.0, "ks_p_value", workers)
    recs += _campaign(spec, "power", POWER_BLOCK, spec.lengths, spec.length_power_rho,
                      "rejection_rate", workers)
    return _report(spec, recs)


def run_campaign(spec: CampaignSpec, workers: int | None = None) -> ExperimentReport:
    runner = {
        Study.NORMALITY: run_normality_study,
        Study.POWER: run_power_study,
        Study.ROBUSTNESS: run_robustness_study,
        Study.LENGTH: run_length_study,
    }[spec.study]
    return runner(spec, workers)


def binomial_band(q: float, paths: int) -> tuple[float, float]:
    """Acceptance band ``q +/- max(3 sqrt(q(1-q)/paths), 0.05)`` for a tabulated rate."""
    half = max(3.0 * math.sqrt(q * (1.0 - q) / paths), 0.05)
    return max(0.0, q - half), min(1.0, q + half)
