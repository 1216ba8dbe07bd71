"""Acceptance checks. Each prints one PASS/FAIL line and asserts its criterion."""

import math
import os
import time

import numpy as np
import pytest

from fbds.bds import BdsParams, bds_grid, bds_test, bds_variance, correlation_integral, k_estimate
from fbds.curves import FunctionalSeries, Grid, distance_matrix
from fbds.errors import DegenerateVarianceError
from fbds.experiments import CampaignSpec, run_campaign
from fbds.fit import fit_far1, log_squared_standardized
from fbds.simulate import FgarchParams, SimSpec, gen_far1, gen_fgarch11, gen_iid
from oracles import literal_correlation_integral, literal_k, scalar_bds

pytestmark = pytest.mark.slow

ALL_NORMS = ("l2", "l1", "linf")
WORKERS = min(8, os.cpu_count() or 1)
ALPHA = 0.05


def verdict(capsys, number, ok, detail):
    with capsys.disabled():
        print(f"\n[criterion {number}] {'PASS' if ok else 'FAIL'}: {detail}")
    assert ok, detail


def rejection_frequency(rec):
    ok = [p for s, p in rec.raw if s is not None]
    return sum(p < ALPHA for p in ok) / len(rec.raw)


@pytest.fixture(scope="module")
def normality():
    spec = CampaignSpec("normality", 200, SimSpec("iid", 500, seed=0), master_seed=20240,
                        norms=("l2",), emit_raw=True)
    t0 = time.perf_counter()
    rep = run_campaign(spec, WORKERS)
    return rep, time.perf_counter() - t0


@pytest.fixture(scope="module")
def power():
    spec = CampaignSpec("power", 200, SimSpec("far1", 500, seed=0, rho=0.1), master_seed=20241,
                        norms=("l2",))
    return run_campaign(spec, WORKERS)


def test_criterion_01_oracle_equivalence(capsys):
    rng = np.random.default_rng(101)
    t0 = time.perf_counter()
    mismatches = 0
    for _ in range(100):
        n = int(rng.integers(8, 41))
        p = int(rng.integers(1, 12))
        s = FunctionalSeries(Grid.uniform(p), rng.standard_normal((n, p)))
        for norm in ALL_NORMS:
            dm = distance_matrix(s, norm)
            r = float(np.quantile(dm[np.triu_indices(n, 1)], rng.uniform(0.1, 0.9)))
            mismatches += k_estimate(dm, r) != literal_k(dm, r)
            for m in (2, 3, 4):
                mismatches += correlation_integral(dm, m, r) != literal_correlation_integral(dm, m, r)
                mismatches += correlation_integral(dm, 1, r) != literal_correlation_integral(dm, 1, r)
    elapsed = time.perf_counter() - t0
    verdict(capsys, 1, mismatches == 0 and elapsed < 60,
            f"{mismatches} mismatches over 100 series x 3 norms, {elapsed:.1f}s (< 60s)")


def test_criterion_02_scalar_reduction(capsys):
    rng = np.random.default_rng(202)
    t0 = time.perf_counter()
    worst = 0.0
    for i in range(50):
        n = int(rng.integers(30, 200))
        x = rng.standard_normal(n) * rng.uniform(0.5, 3)
        m = 2 + i % 3
        eps_sd = float(rng.choice([0.75, 1.0, 1.5]))
        res = bds_test(FunctionalSeries.from_scalar(x), BdsParams(m, eps_sd, "l2"))
        stat, p = scalar_bds(x, m, eps_sd * np.std(x, ddof=1))
        worst = max(worst, abs(res.statistic - stat), abs(res.p_value - p))
    elapsed = time.perf_counter() - t0
    verdict(capsys, 2, worst <= 1e-9 and elapsed < 10,
            f"max abs difference {worst:.2e} (<= 1e-9), {elapsed:.1f}s (< 10s)")


def test_criterion_03_size_and_normality(capsys, normality):
    rep, _ = normality
    lines, ok = [], True
    for m in (2, 3):
        for r in (1.0, 1.25, 1.5):
            rec = rep.cell("l2", m, r)
            freq = rejection_frequency(rec)
            good = rec.value > 0.025 and 0.01 <= freq <= 0.10
            ok &= good
            lines.append(f"m={m} r={r}: KS p={rec.value:.3f} rej={freq:.3f}")
    verdict(capsys, 3, ok, "; ".join(lines))


def test_criterion_04_degenerate_radius(capsys, normality):
    rep, _ = normality
    vals = {m: rep.cell("l2", m, 0.25).value for m in range(5, 11)}
    ok = all(v <= 0.025 for v in vals.values())
    verdict(capsys, 4, ok, "r=0.25 KS p: " + ", ".join(f"m={m}:{v:.2g}" for m, v in vals.items()))


def test_criterion_05_power(capsys, power):
    hi = power.cell("l2", 3, 1.0).value
    lo = power.cell("l2", 10, 0.25).value
    verdict(capsys, 5, hi >= 0.95 and lo <= 0.10,
            f"m=3 r=1.0 rate={hi:.3f} (>= 0.95); m=10 r=0.25 rate={lo:.3f} (<= 0.10)")


def test_criterion_06_length_study(capsys):
    spec = CampaignSpec("length", 200, SimSpec("far1", 100, seed=0, rho=0.1), master_seed=20242,
                        m_values=(3,), r_multipliers=(1.0,), norms=ALL_NORMS,
                        lengths=(100, 250, 500, 750, 1000), length_power_rho=0.1)
    rep = run_campaign(spec, WORKERS)
    ok, parts = True, []
    for norm in ALL_NORMS:
        for n in spec.lengths:
            rate = rep.cell(norm, 3, 1.0, n=n, metric="rejection_rate").value
            good = 0.75 <= rate <= 0.97 if n == 100 else rate >= 0.95
            ok &= good
            parts.append(f"{norm} N={n}:{rate:.2f}")
    verdict(capsys, 6, ok, "power " + ", ".join(parts))


def test_criterion_07_robustness(capsys):
    spec = CampaignSpec("robustness", 200, SimSpec("iid", 500, seed=0), master_seed=20243,
                        m_values=tuple(range(2, 11)), r_multipliers=(1.0,), norms=ALL_NORMS,
                        outlier_fraction=0.01, shift_sds=5.0)
    rep = run_campaign(spec, WORKERS)
    keep = {n: rep.cell(n, 2, 1.0).value for n in ("l2", "l1")}
    fail = {m: rep.cell("linf", m, 1.0).value for m in range(4, 11)}
    ok = all(v > 0.025 for v in keep.values()) and all(v <= 0.025 for v in fail.values())
    verdict(capsys, 7, ok,
            f"m=2 KS p L2={keep['l2']:.3f} L1={keep['l1']:.3f} (> 0.025); "
            f"Linf m>=4 max KS p={max(fail.values()):.2g} (<= 0.025)")


def test_criterion_08_variance_and_centering(capsys):
    n, m = 500, 2
    devs, cs, ks = [], [], []
    for seed in range(500):
        s = gen_iid(SimSpec("iid", n, seed=30_000 + seed))
        res = bds_test(s, BdsParams(m, 1.0, "l2"))
        devs.append(math.sqrt(n) * (res.c_m - res.c_1**m))
        cs.append(res.c_1)
        ks.append(res.k_hat)
    emp = float(np.var(devs, ddof=1))
    theory = bds_variance(float(np.mean(cs)), float(np.mean(ks)), m)
    rel = abs(emp - theory) / theory

    big = 1000
    gaps = []
    for seed in range(50):
        res = bds_test(gen_iid(SimSpec("iid", big, seed=40_000 + seed)), BdsParams(m, 1.0, "l2"))
        gaps.append(abs(res.c_m - res.c_1**m))
    mean_gap = float(np.mean(gaps))
    ok = rel <= 0.25 and mean_gap <= 5 / math.sqrt(big)
    verdict(capsys, 8, ok,
            f"variance {emp:.4g} vs {theory:.4g} (rel err {rel:.3f} <= 0.25); "
            f"mean |C(m)-C(1)^m| {mean_gap:.4f} <= {5 / math.sqrt(big):.4f}")


def test_criterion_09_far1_recovery(capsys):
    worst_diag = worst_off = 0.0
    for seed in range(20):
        op = fit_far1(gen_far1(SimSpec("far1", 2000, seed=50_000 + seed, rho=0.5)), 5).operator_matrix
        worst_diag = max(worst_diag, float(np.max(np.abs(np.diag(op) - 0.5))))
        worst_off = max(worst_off, float(np.max(np.abs(op - np.diag(np.diag(op))))))
    verdict(capsys, 9, worst_diag <= 0.07 and worst_off <= 0.07,
            f"max |diag - 0.5| {worst_diag:.3f}, max |off-diag| {worst_off:.3f} (<= 0.07)")


def test_criterion_10_fgarch_pipeline(capsys):
    params = BdsParams(3, 1.0, "l2")
    keep = reject = 0
    for seed in range(100):
        returns, sigma = gen_fgarch11(SimSpec("fgarch11", 500, seed=60_000 + seed, fgarch=FgarchParams()))
        try:
            keep += bds_test(log_squared_standardized(returns, sigma), params).p_value >= ALPHA
        except DegenerateVarianceError:
            pass
        try:
            reject += bds_test(returns, params).p_value < ALPHA
        except DegenerateVarianceError:
            pass
    verdict(capsys, 10, keep / 100 >= 0.90 and reject / 100 >= 0.80,
            f"log-squared standardized non-rejection {keep / 100:.2f} (>= 0.90); "
            f"raw returns rejection {reject / 100:.2f} (>= 0.80)")


def test_criterion_11_performance(capsys, normality):
    s = gen_iid(SimSpec("iid", 500, seed=7))
    t0 = time.perf_counter()
    bds_grid(s, range(2, 8), [1.0, 1.25, 1.5], "l2")
    grid_time = time.perf_counter() - t0
    _, campaign_time = normality
    verdict(capsys, 11, grid_time < 5 and campaign_time < 600,
            f"bds_grid {grid_time:.2f}s (< 5s); 200-path calibration campaign "
            f"{campaign_time:.0f}s with {WORKERS} worker(s) (< 600s)")


def test_criterion_12_determinism(capsys):
    spec = CampaignSpec("normality", 24, SimSpec("iid", 200, seed=0), master_seed=77,
                        norms=ALL_NORMS, emit_raw=True)
    a = run_campaign(spec, 1)
    b = run_campaign(spec, 3)
    same = a.to_csv() == b.to_csv() and a.to_json(include_raw=True) == b.to_json(include_raw=True)
    verdict(capsys, 12, same, "reports byte-identical across 1 and 3 workers" if same else "reports differ")
