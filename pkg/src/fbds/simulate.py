"""
Seeded generators for synthetic functional time series.

All processes live on the span of five sinusoidal basis curves. Innovations
are curves whose basis coefficients are independent standard normals; the
fAR(1) operator acts on coefficients as multiplication by ``rho``.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import asdict, dataclass, replace

import numpy as np

from fbds.curves import FunctionalSeries, Grid, pooled_sd
from fbds.errors import ValidationError

BURN_IN = 100


class Process(str, enum.Enum):
    IID = "iid"
    FAR1 = "far1"
    FGARCH11 = "fgarch11"


def rng_for(*key: int) -> np.random.Generator:
    """Generator seeded from an integer tuple, e.g. ``(master_seed, cell, path)``.

    ``SeedSequence`` hashes the whole tuple, so streams for different keys are
    independent and do not depend on how work is scheduled.
    """
    return np.random.default_rng(np.random.SeedSequence([int(k) for k in key]))


@dataclass(frozen=True)
class FgarchParams:
    delta: float | tuple = 0.01
    alpha_scale: float = 0.3
    beta_scale: float = 0.6


@dataclass(frozen=True)
class SimSpec:
    process: Process
    n_obs: int
    seed: int
    grid_size: int = 100
    basis_size: int = 5
    rho: float = 0.1
    fgarch: FgarchParams | None = None
    burn_in: int = BURN_IN

    def __post_init__(self) -> None:
        try:
            object.__setattr__(self, "process", Process(str(getattr(self.process, "value", self.process)).lower()))
        except ValueError:
            raise ValidationError(f"process: unknown process {self.process!r}") from None
        for name in ("n_obs", "grid_size", "basis_size", "seed", "burn_in"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, (int, np.integer)):
                raise ValidationError(f"{name}: expected an integer, got {v!r}")
        if self.n_obs < 1:
            raise ValidationError(f"n_obs: must be >= 1, got {self.n_obs}")
        if self.grid_size < 2:
            raise ValidationError(f"grid_size: must be >= 2, got {self.grid_size}")
        if not 1 <= self.basis_size <= 5:
            raise ValidationError(f"basis_size: must be between 1 and 5, got {self.basis_size}")
        if self.burn_in < 0:
            raise ValidationError(f"burn_in: must be >= 0, got {self.burn_in}")
        if not -(2**63) <= self.seed < 2**64:
            raise ValidationError("seed: must fit in 64 bits")
        if not (isinstance(self.rho, (int, float)) and math.isfinite(self.rho)):
            raise ValidationError(f"rho: expected a finite number, got {self.rho!r}")
        if self.process is Process.FAR1 and not abs(self.rho) < 1:
            raise ValidationError(f"rho: |rho| must be < 1 for a stationary fAR(1), got {self.rho}")
        if self.process is Process.FGARCH11:
            g = self.fgarch if self.fgarch is not None else FgarchParams()
            if isinstance(g, dict):
                g = FgarchParams(**g)
            if g.alpha_scale < 0 or g.beta_scale < 0:
                raise ValidationError("fgarch: alpha_scale and beta_scale must be non-negative")
            if not g.alpha_scale + g.beta_scale < 1:
                raise ValidationError("fgarch: alpha_scale + beta_scale must be < 1")
            delta = np.broadcast_to(np.asarray(g.delta, dtype=float), (self.grid_size,))
            if not np.all(delta > 0):
                raise ValidationError("fgarch: delta must be strictly positive on the whole grid")
            object.__setattr__(self, "fgarch", g)

    # -- JSON ------------------------------------------------------------
    def to_dict(self) -> dict:
        d = asdict(self)
        d["process"] = self.process.value
        if self.fgarch is not None and isinstance(self.fgarch.delta, tuple):
            d["fgarch"]["delta"] = list(self.fgarch.delta)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SimSpec":
        d = dict(d)
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ValidationError(f"{sorted(unknown)[0]}: unknown field")
        for required in ("process", "n_obs", "seed"):
            if required not in d:
                raise ValidationError(f"{required}: missing required field")
        g = d.get("fgarch")
        if isinstance(g, dict):
            g = dict(g)
            if isinstance(g.get("delta"), list):
                g["delta"] = tuple(float(x) for x in g["delta"])
            try:
                d["fgarch"] = FgarchParams(**g)
            except TypeError as exc:
                raise ValidationError(f"fgarch: {exc}") from None
        return cls(**d)

    @classmethod
    def from_json(cls, text: str) -> "SimSpec":
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as exc:
            raise ValidationError(f"config is not valid JSON: {exc}") from None

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def with_seed(self, seed: int) -> "SimSpec":
        return replace(self, seed=int(seed))


def sim_grid(grid_size: int) -> Grid:
    return Grid.uniform(grid_size, 0.0, 1.0)


def basis(grid: Grid, size: int = 5) -> np.ndarray:
    """The sinusoidal basis ``1, sqrt2 sin 2pi u, sqrt2 cos 2pi u, sqrt2 sin 4pi u, sqrt2 cos 4pi u``.

    Returns an array of shape ``(size, p)``.
    """
    u = grid.points
    s2 = math.sqrt(2.0)
    funcs = np.vstack([
        np.ones_like(u),
        s2 * np.sin(2 * np.pi * u),
        s2 * np.cos(2 * np.pi * u),
        s2 * np.sin(4 * np.pi * u),
        s2 * np.cos(4 * np.pi * u),
    ])
    return funcs[:size]


def _innovation_scores(rng: np.random.Generator, n: int, k: int) -> np.ndarray:
    return rng.standard_normal((n, k))


def _spec_rng(spec: SimSpec) -> np.random.Generator:
    return rng_for(spec.seed)


def gen_iid(spec: SimSpec, rng: np.random.Generator | None = None) -> FunctionalSeries:
    """Independent curves ``sum_k z_k * basis_k`` with standard normal ``z``."""
    rng = rng if rng is not None else _spec_rng(spec)
    grid = sim_grid(spec.grid_size)
    z = _innovation_scores(rng, spec.n_obs, spec.basis_size)
    return FunctionalSeries(grid, z @ basis(grid, spec.basis_size), {"process": "iid", "seed": spec.seed})


def far1_scores(spec: SimSpec, rng: np.random.Generator | None = None) -> np.ndarray:
    """Basis coefficients of an fAR(1) path, burn-in removed."""
    rng = rng if rng is not None else _spec_rng(spec)
    if not abs(spec.rho) < 1:
        raise ValidationError(f"rho: |rho| must be < 1, got {spec.rho}")
    total = spec.n_obs + spec.burn_in
    eps = _innovation_scores(rng, total, spec.basis_size)
    z = np.empty_like(eps)
    # stationary start: the first state has the stationary variance 1 / (1 - rho^2)
    z[0] = eps[0] / math.sqrt(1.0 - spec.rho**2)
    for t in range(1, total):
        z[t] = spec.rho * z[t - 1] + eps[t]
    return z[spec.burn_in:]


def gen_far1(spec: SimSpec, rng: np.random.Generator | None = None) -> FunctionalSeries:
    """fAR(1) path ``X_{t+1} = rho X_t + eps_t`` (zero mean)."""
    grid = sim_grid(spec.grid_size)
    z = far1_scores(spec, rng)
    return FunctionalSeries(grid, z @ basis(grid, spec.basis_size),
                            {"process": "far1", "rho": spec.rho, "seed": spec.seed})


def gen_fgarch11(spec: SimSpec, rng: np.random.Generator | None = None
                 ) -> tuple[FunctionalSeries, FunctionalSeries]:
    """fGARCH(1,1) returns and their conditional volatility curves.

    ``sigma2_i(u) = delta(u) + alpha * R_{i-1}(u)**2 + beta * sigma2_{i-1}(u)``,
    ``R_i = sigma_i * eps_i``. The recursion starts from the unconditional
    level ``delta / (1 - alpha - beta)``.
    """
    rng = rng if rng is not None else _spec_rng(spec)
    g = spec.fgarch if spec.fgarch is not None else FgarchParams()
    grid = sim_grid(spec.grid_size)
    delta = np.broadcast_to(np.asarray(g.delta, dtype=float), (grid.size,)).copy()
    if not np.all(delta > 0):
        raise ValidationError("fgarch: delta must be strictly positive on the whole grid")
    total = spec.n_obs + spec.burn_in
    eps = _innovation_scores(rng, total, spec.basis_size) @ basis(grid, spec.basis_size)
    sig2 = np.empty_like(eps)
    ret = np.empty_like(eps)
    prev_s2 = delta / (1.0 - g.alpha_scale - g.beta_scale)
    prev_r2 = prev_s2
    for i in range(total):
        s2 = delta + g.alpha_scale * prev_r2 + g.beta_scale * prev_s2
        sig2[i] = s2
        ret[i] = np.sqrt(s2) * eps[i]
        prev_s2, prev_r2 = s2, ret[i] ** 2
    sl = slice(spec.burn_in, None)
    meta = {"process": "fgarch11", "seed": spec.seed}
    returns = FunctionalSeries(grid, ret[sl], meta)
    sigma = FunctionalSeries(grid, np.sqrt(sig2[sl]), dict(meta, kind="sigma"))
    return returns, sigma


def innovations_of(returns: FunctionalSeries, sigma: FunctionalSeries) -> np.ndarray:
    return returns.values / sigma.values


def simulate(spec: SimSpec, rng: np.random.Generator | None = None):
    """Dispatch on ``spec.process``. fGARCH returns a ``(returns, sigma)`` pair."""
    if spec.process is Process.IID:
        return gen_iid(spec, rng)
    if spec.process is Process.FAR1:
        return gen_far1(spec, rng)
    return gen_fgarch11(spec, rng)


def inject_outliers(series: FunctionalSeries, fraction: float = 0.01, shift_sds: float = 5.0,
                    seed: int | np.random.Generator = 0) -> FunctionalSeries:
    """Shift ``ceil(fraction * N)`` randomly chosen curves up by ``shift_sds`` pooled s.d.

    Curves are chosen uniformly without replacement.
    """
    if not 0 < fraction < 1:
        raise ValidationError(f"fraction must lie in (0, 1), got {fraction!r}")
    n = series.n
    count = math.ceil(fraction * n)
    if count >= n:
        raise ValidationError(f"fraction {fraction} of N={n} would contaminate every curve")
    if shift_sds == 0:
        return series
    rng = seed if isinstance(seed, np.random.Generator) else rng_for(seed)
    idx = rng.choice(n, size=count, replace=False)
    values = series.values.copy()
    values[idx] += shift_sds * pooled_sd(series)
    out = series.with_values(values)
    out.metadata["outliers"] = sorted(int(i) for i in idx)
    return out
