"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -s`` to see the summary lines.
"""

import math
import time

import numpy as np
import pytest

from partition_trees.bounds import (brute_force_knn, growth_ratio_lower_bound,
                                    hamming_distance_distribution, poisson_binomial_pmf,
                                    bernoulli_ratio_lower_bound, summation_lemma_bound, xlog_term)
from partition_trees.evaluation import (adversarial_summary, betweenness_frequency,
                                        doubling_phi_trial, fit_loglog_slope, log_grid)
from partition_trees.experiment import ExperimentConfig, make_data, run_experiment
from partition_trees.generators import expected_lengths, random_topic_model, sample_topic_queries
from partition_trees.linalg import derive_seed, rng_for
from partition_trees.potential import three_point_bounds, three_point_probability
from partition_trees.trees import build_spill_tree, build_tree, tree_stats

pytestmark = pytest.mark.slow

SEED = 20240601


def report(number, passed, detail, started):
    status = "PASS" if passed else "FAIL"
    print(f"\ncriterion {number:>2}: {status}  {detail}  ({time.perf_counter() - started:.1f}s)")


@pytest.fixture(scope="module")
def triples():
    rng = rng_for(SEED, (1,))
    out = []
    for i in range(100):
        d = (2, 5, 20)[i % 3]
        while True:
            q, x, y = rng.standard_normal((3, d))
            if np.linalg.norm(q - x) > np.linalg.norm(q - y):
                x, y = y, x
            if np.linalg.norm(q - x) > 1e-6 and np.linalg.norm(y - x) > 1e-6:
                break
        out.append((q, x, y))
    return out


def test_criterion_01_three_point_probability(triples):
    t0 = time.perf_counter()
    n_dirs = 1_000_000
    hits = 0
    for i, (q, x, y) in enumerate(triples):
        p = three_point_probability(q, x, y)
        freq = betweenness_frequency(q, x, y, n_dirs, rng_for(SEED, (2, i)))
        se = math.sqrt(max(p * (1 - p), 1e-12) / n_dirs)
        hits += abs(freq - p) <= 3 * se
    ok = hits >= 97
    report(1, ok, f"{hits}/100 triples within 3 SE (need >= 97)", t0)
    assert ok


def test_criterion_02_sandwich(triples):
    t0 = time.perf_counter()
    worst = math.inf
    for q, x, y in triples:
        p = three_point_probability(q, x, y)
        lo, hi = three_point_bounds(q, x, y)
        worst = min(worst, p - lo, hi - p)
    ok = worst >= -1e-12
    report(2, ok, f"smallest margin {worst:.3g} (need >= -1e-12)", t0)
    assert ok


def _doubling_failure(kind):
    config = ExperimentConfig(generator="doubling", tree_kind=kind, n=10_000, d=10,
                              intrinsic_dim=2, leaf_size=100, alpha=0.1, k=1, trials=100,
                              queries=50, seed=SEED)
    rep = run_experiment(config)
    covered = sum(f <= b for f, b in zip(rep.per_query_failure, rep.per_query_bound))
    return rep, covered


def test_criterion_03_spill_bound_on_doubling_data():
    t0 = time.perf_counter()
    rep, covered = _doubling_failure("spill")
    ok = covered >= 48  # 95% of 50
    report(3, ok, f"{covered}/50 queries with failure <= bound; mean rate "
                  f"{rep.failure_rate:.4f}, mean bound {rep.bound:.4f}", t0)
    assert ok


def test_criterion_04_rp_bound_on_doubling_data():
    t0 = time.perf_counter()
    rep, covered = _doubling_failure("rp")
    ok = covered >= 48
    report(4, ok, f"{covered}/50 queries with failure <= bound; mean rate "
                  f"{rep.failure_rate:.4f}, mean bound {rep.bound:.4f}", t0)
    assert ok


def test_criterion_05_doubling_phi_bound():
    t0 = time.perf_counter()
    n = 100_000
    grid = log_grid(2, n, 20)
    assert grid.size == 20
    counts = {}
    for d_o in (2, 3):
        counts[d_o] = sum(doubling_phi_trial(d_o, n, 0.05, grid, derive_seed(SEED, (5, d_o, r))).holds
                          for r in range(100))
    ok = all(c >= 85 for c in counts.values())
    report(5, ok, "draws with the bound holding on the whole grid: "
                  + ", ".join(f"d_o={d}: {c}/100" for d, c in counts.items()) + " (need >= 85)", t0)
    assert ok


def test_criterion_06_growth_ratios():
    t0 = time.perf_counter()
    rng = rng_for(SEED, (6,))
    bad = 0
    for _ in range(1000):
        N = int(rng.integers(1, 51))
        probs = rng.uniform(1e-3, 1 - 1e-3, N)
        pmf = poisson_binomial_pmf(probs).pmf
        lower = bernoulli_ratio_lower_bound(probs)
        bad += int(np.sum(pmf[1:] < lower * pmf[:-1] * (1 - 1e-9)))

    four_checked = 0
    for trial in range(100):
        N = int(rng.integers(40, 201))
        L = float(rng.uniform(4.0, N / 4))
        params = random_topic_model(int(rng.integers(1, 6)), N, L,
                                    seed=derive_seed(SEED, (6, trial)))
        Lmin = expected_lengths(params).min
        q = sample_topic_queries(params, 1)[0]
        pmf = hamming_distance_distribution(q, params)
        ell = np.arange(N)
        lower = growth_ratio_lower_bound(Lmin, ell)
        pos = (lower > 0) & (pmf[:-1] > 0)
        bad += int(np.sum(pmf[1:][pos] < lower[pos] * pmf[:-1][pos] * (1 - 1e-9)))
        if Lmin >= 16:
            for e in range(int(math.floor(Lmin / 8)) + 1):
                four_checked += 1
                bad += int(pmf[e + 1] < 4 * pmf[e] * (1 - 1e-9))
    ok = bad == 0 and four_checked > 0
    report(6, ok, f"{bad} violated ratio inequalities; {four_checked} '>= 4' checks at L >= 16", t0)
    assert ok


def test_criterion_07_spill_size_exponent():
    t0 = time.perf_counter()
    ns = [1_000, 10_000, 100_000]
    data = rng_for(SEED, (7,)).standard_normal((ns[-1], 10))
    slopes = {}
    for alpha, target in ((0.05, 1.159), (0.1, 1.357)):
        sizes = [tree_stats(build_spill_tree(data[:n], 20, alpha, seed=SEED)).stored_indices
                 for n in ns]
        slopes[alpha] = (fit_loglog_slope(ns, sizes), target)
    ok = all(abs(s - t) <= 0.05 for s, t in slopes.values())
    report(7, ok, ", ".join(f"alpha={a}: slope {s:.4f} (target {t} +/- 0.05)"
                            for a, (s, t) in slopes.items()), t0)
    assert ok


def test_criterion_08_adversarial():
    t0 = time.perf_counter()
    s = adversarial_summary(n=1000, d=20, M=1e6, trees=100, leaf_size=100, seed=SEED)
    ok = abs(s.coordinate_between - 0.95) <= 0.02 and s.phi <= 0.01 and s.rp_failure_rate <= 0.05
    report(8, ok, f"between fraction {s.coordinate_between:.4f}, phi {s.phi:.3g}, "
                  f"rp failure {s.rp_failure_rate:.3f}", t0)
    assert ok


def _lemma_direct_sum(A, B, d_o, beta, n, leaf, with_log):
    total = []
    m = float(n)
    while m >= leaf * (1 - 1e-12):
        f = A * (B / m) ** (1 / d_o)
        total.append(xlog_term(f) if with_log else f)
        m *= beta
    return math.fsum(total)


def test_criterion_09_summation_lemma():
    t0 = time.perf_counter()
    rng = rng_for(SEED, (9,))
    violations = 0
    for _ in range(100):
        A = float(rng.uniform(0.1, 6))
        B = float(rng.uniform(0.1, 50))
        d_o = float(rng.uniform(1, 8))
        beta = float(rng.uniform(0.05, 0.95))
        leaf = max(1, math.ceil(B * (A / 2) ** d_o), int(rng.integers(1, 500)))
        n = leaf * float(rng.uniform(1, 1e5))
        for with_log in (False, True):
            closed = summation_lemma_bound(A, B, d_o, beta, leaf, with_log=with_log)
            direct = _lemma_direct_sum(A, B, d_o, beta, n, leaf, with_log)
            violations += direct > closed * (1 + 1e-12)
    ok = violations == 0
    report(9, ok, f"{violations} violations over 100 draws x (plain, log)", t0)
    assert ok


def test_criterion_10_oracle_equivalence():
    t0 = time.perf_counter()
    rng = rng_for(SEED, (10,))
    mismatched = {"full-leaf": 0, "virtual-spill alpha=0.49": 0}
    for inst in range(50):
        n = int(rng.integers(20, 301))
        d = int(rng.integers(1, 11))
        data = rng.standard_normal((n, d))
        queries = rng.standard_normal((10, d))
        seed = derive_seed(SEED, (10, inst))
        trees = {("full-leaf", kind): build_tree(kind, data, n, 0.1, seed)
                 for kind in ("rp", "spill", "virtual-spill")}
        trees[("virtual-spill alpha=0.49", "virtual-spill")] = build_tree(
            "virtual-spill", data, 10, 0.49, seed)
        wrong = set()
        for q in queries:
            for k in (1, 3):
                exact = set(brute_force_knn(data, q, k).indices.tolist())
                for (group, _), tree in trees.items():
                    if set(tree.query(q, k).indices.tolist()) != exact:
                        wrong.add(group)
        for group in wrong:
            mismatched[group] += 1
    ok = all(v == 0 for v in mismatched.values())
    report(10, ok, "instances with a mismatch: "
                   + ", ".join(f"{g}: {c}/50" for g, c in mismatched.items()), t0)
    assert ok


def test_trend_failure_decreases_with_length():
    """Non-gating: virtual-spill failure on topic data as L grows."""
    t0 = time.perf_counter()
    rows = []
    for L in (8.0, 16.0, 32.0, 64.0):
        config = ExperimentConfig(generator="topic", tree_kind="virtual-spill", n=2000, d=500,
                                  doc_length=L, topics=5, leaf_size=50, alpha=0.1, trials=10,
                                  queries=20, seed=SEED)
        data, queries = make_data(config)
        rows.append((L, run_experiment(config, data, queries).failure_rate))
    print(f"\ntrend (non-gating): failure rate by L: "
          + ", ".join(f"L={L:g}: {r:.3f}" for L, r in rows)
          + f"  ({time.perf_counter() - t0:.1f}s)")
