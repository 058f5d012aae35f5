"""End-to-end acceptance checks, one test per criterion.

Each test prints a single PASS/FAIL line (also collected in the terminal
summary). The synthetic runs (criteria 1-3) take a few minutes per level
and are shared through a module-scoped fixture.
"""

import itertools
import json
import time

import numpy as np
import pytest
from scipy.stats import chisquare

from aflite.afopt import afopt_search, exact_representation_bias
from aflite.classifiers import logistic_loss_and_grad
from aflite.cli import main
from aflite.core import EmbeddedDataset, random_partition
from aflite.evaluation import evaluate
from aflite.filtering import FilterConfig, gumbel_topk, run_filter, score_phase
from aflite.synthetic import SyntheticSpec, bias_noise_toy, generate
from test_classifiers import finite_difference

SYNTHETIC_CONFIG = FilterConfig(n=101, m=128, t=100, k=1, tau=0.75, seed=0)
# small-data filter settings used against the exact search
ORACLE_CONFIG = dict(n=5, m=256, t=2, k=1, tau=0.0, single_class_splits="constant")


@pytest.fixture(scope="module")
def synthetic_runs():
    spec = SyntheticSpec()
    runs = []
    for level in range(len(spec.separations)):
        start = time.perf_counter()
        data = generate(spec, level)
        result = run_filter(data.dataset, SYNTHETIC_CONFIG)
        elapsed = time.perf_counter() - start
        rng = np.random.default_rng(np.random.SeedSequence(0, spawn_key=(2,)))
        report = evaluate(data.dataset, result, 0.2, rng, data.bias_mask, data.flip_mask)
        kept = np.zeros(len(data.dataset), dtype=bool)
        kept[data.dataset.index_of(result.retained_ids)] = True
        clean_removed = float(np.mean(~kept[~data.bias_mask]))
        runs.append((level, report, clean_removed, elapsed))
    return runs


@pytest.mark.slow
def test_criterion_1_bias_removal(synthetic_runs, acceptance_log):
    ok, parts = True, []
    for level, report, clean_removed, elapsed in synthetic_runs:
        ok &= report.bias_removal >= 0.70 and clean_removed <= 0.30 and elapsed <= 300
        parts.append(f"L{level}: biased {report.bias_removal:.3f} clean {clean_removed:.3f} "
                     f"{elapsed:.0f}s")
    acceptance_log(1, ok, "synthetic bias removal | " + "; ".join(parts))
    assert ok


@pytest.mark.slow
def test_criterion_2_linear_hard_rbf_solvable(synthetic_runs, acceptance_log):
    ok, parts = True, []
    for level, report, _, _ in synthetic_runs:
        lin_before, lin_after, _ = report.linear_accuracy
        rbf_after = report.rbf_accuracy[1]
        ok &= lin_before - lin_after >= 0.15 and rbf_after >= 0.80
        parts.append(f"L{level}: linear {lin_before:.3f}->{lin_after:.3f} rbf {rbf_after:.3f}")
    acceptance_log(2, ok, "linear-hard / rbf-solvable | " + "; ".join(parts))
    assert ok


@pytest.mark.slow
def test_criterion_3_flip_removal(synthetic_runs, acceptance_log):
    largest = SyntheticSpec().largest_separation_index
    report = synthetic_runs[largest][1]
    ok = report.flip_removal >= 0.5
    acceptance_log(3, ok, f"flip removal at largest gap {report.flip_removal:.3f} (>= 0.5)")
    assert ok


def test_criterion_4_refactoring_identity(acceptance_log):
    start = time.perf_counter()
    worst, cases = 0.0, 0
    for size in range(2, 11):
        for t in range(1, min(5, size - 1) + 1):
            for seed, classes in ((size, 2), (size + 100, 3)):
                r = np.random.default_rng([seed, t])
                y = r.integers(0, classes, size)
                X = r.normal(size=(size, 2)) + y[:, None]
                ds = EmbeddedDataset(tuple(map(str, range(size))), X, y)
                rep = exact_representation_bias(ds, t)
                rel = abs(rep.bias - rep.factored_bias) / max(abs(rep.bias), 1e-300)
                worst = max(worst, rel)
                cases += 1
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-9
    acceptance_log(4, ok, f"direct vs factored bias, {cases} instances, "
                          f"max rel diff {worst:.2e}, {elapsed:.1f}s")
    assert ok


def test_criterion_5_oracle_proximity(acceptance_log):
    start = time.perf_counter()
    cfg = FilterConfig(**ORACLE_CONFIG)
    gaps = []
    for seed in range(20):
        ds = bias_noise_toy(seed).dataset
        best = afopt_search(ds, cfg.n, cfg.t)
        kept = sorted(ds.index_of(run_filter(ds, cfg).retained_ids).tolist())
        gaps.append(exact_representation_bias(ds, cfg.t, subset=kept).bias - best.bias)
    canonical = afopt_search(bias_noise_toy().dataset, cfg.n, cfg.t)
    elapsed = time.perf_counter() - start
    ok = max(gaps) <= 0.15 and canonical.subset == (5, 6, 7, 8, 9) and elapsed <= 120
    acceptance_log(5, ok, f"max bias gap {max(gaps):.3f} (<= 0.15), canonical subset "
                          f"{canonical.subset}, {elapsed:.0f}s")
    assert ok


def test_criterion_6_monte_carlo_convergence(acceptance_log):
    t = 4
    errors = {16: [], 64: [], 256: []}
    for seed in range(10):
        r = np.random.default_rng(seed)
        y = r.permutation(np.repeat([0, 1], 6))
        X = np.column_stack([2.0 * y - 1 + r.normal(size=12), r.normal(size=12)])
        ds = EmbeddedDataset(tuple(f"i{j}" for j in range(12)), X, y)
        exact = np.array(exact_representation_bias(ds, t).instance_scores)
        for m in errors:
            cfg = FilterConfig(n=t + 1, m=m, t=t, seed=seed, single_class_splits="constant")
            errors[m].append(np.abs(score_phase(ds, cfg).score - exact).max())
    med = [float(np.median(errors[m])) for m in (16, 64, 256)]
    ok = med[0] > med[1] > med[2] and med[2] <= 0.1
    acceptance_log(6, ok, "median max |estimate - exact| at m=16/64/256: "
                          + " / ".join(f"{v:.3f}" for v in med))
    assert ok


def test_criterion_7_gumbel_distribution(acceptance_log):
    draws = 100_000
    scores = np.array([0.9, 0.7, 0.5, 0.3, 0.1])
    p = scores / scores.sum()
    r = np.random.default_rng(2024)

    counts = np.zeros(5)
    for _ in range(draws):
        counts[gumbel_topk(scores, 1, r)[0]] += 1
    pvalue = chisquare(counts, p * draws).pvalue

    first = np.zeros(5)
    included = np.zeros(5)
    for _ in range(draws):
        pair = gumbel_topk(scores, 2, r)
        first[pair[0]] += 1
        included[pair] += 1
    # sequential draw without replacement: pick i, then j from the rest
    exact_incl = np.array([
        p[i] + sum(p[j] * p[i] / (1 - p[j]) for j in range(5) if j != i) for i in range(5)
    ])
    first_err = np.abs(first / draws - p).max()
    incl_err = np.abs(included / draws - exact_incl).max()
    ok = pvalue > 0.01 and first_err <= 0.01 and incl_err <= 0.01
    acceptance_log(7, ok, f"k=1 chi-square p={pvalue:.3f}; k=2 first-pick max err "
                          f"{first_err:.4f}, inclusion max err {incl_err:.4f}")
    assert ok


def test_criterion_8_partition_marginal(acceptance_log):
    r = np.random.default_rng(8)
    draws = 100_000
    hits = np.zeros(10)
    for _ in range(draws):
        hits[random_partition(10, 6, r).test_indices] += 1
    err = np.abs(hits / draws - 0.4).max()
    ok = err <= 0.01
    acceptance_log(8, ok, f"test-inclusion frequency max |f - 0.4| = {err:.4f}")
    assert ok


def test_criterion_9_gradient_check(acceptance_log):
    worst = 0.0
    for seed in range(50):
        r = np.random.default_rng(seed)
        n, d, c = int(r.integers(2, 20)), int(r.integers(1, 6)), int(r.integers(2, 5))
        X = r.normal(size=(n, d))
        y = r.integers(0, c, n)
        W = r.normal(size=(c, d))
        b = r.normal(size=c)
        l2 = float(r.choice([0.0, 1e-4, 1e-2]))
        _, gW, gb = logistic_loss_and_grad(W, b, X, y, l2)
        fW, fb = finite_difference(W, b, X, y, l2, h=1e-5)
        analytic = np.concatenate([gW.ravel(), gb])
        numeric = np.concatenate([fW.ravel(), fb])
        scale = max(np.linalg.norm(analytic), np.linalg.norm(numeric), 1e-8)
        worst = max(worst, np.linalg.norm(analytic - numeric) / scale)
    ok = worst <= 1e-4
    acceptance_log(9, ok, f"50 instances, max relative gradient error {worst:.2e}")
    assert ok


def test_criterion_10_determinism(tmp_path, acceptance_log):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"synthetic": {"n_points": 100},
                               "filter": {"m": 64, "t": 50, "k": 2, "seed": 3}}))
    data = tmp_path / "data"
    assert main(["--config", str(cfg), "--mode", "generate", "--separation", "1",
                 "--out-dir", str(data)]) == 0
    outputs = []
    for i, threads in enumerate(itertools.chain.from_iterable(itertools.repeat(("1", "4"), 2))):
        out = tmp_path / f"run{i}"
        assert main(["--config", str(cfg), "--mode", "filter",
                     "--embeddings", str(data / "embeddings.csv"),
                     "--out-dir", str(out), "--threads", threads]) == 0
        outputs.append(tuple((out / f).read_bytes() for f in ("retained_ids.txt", "history.csv")))
    phases = len(outputs[0][1].splitlines()) - 1
    ok = len(set(outputs)) == 1 and phases > 0
    acceptance_log(10, ok, f"4 runs (threads 1,4,1,4) byte-identical, {phases} phases")
    assert ok
