"""End-to-end acceptance checks for the whole toolkit.

Each test is one criterion; the heavyweight detection experiments reuse
module-scoped fixtures so the suite stays within its runtime budget.
"""

import math
import os
import time
from fractions import Fraction

import numpy as np
import pytest

from snapchain.classifier import evaluate, run_experiment, train
from snapchain.dataset import ExperimentConfig, generate_dataset, load_corpus
from snapchain.features import binomial_sf
from snapchain.simulate import HiddenVolumeConfig, estimate_survival
from snapchain.snapshot import SnapshotConfig, diff_snapshots, take_snapshot
from snapchain.theory import (UniformChangeModel, bruteforce_distribution,
                              chain_probability_exact,
                              chain_probability_montecarlo)

BUNDLED_CORPUS = os.path.join(os.path.dirname(__file__), os.pardir,
                              "src", "snapchain", "data", "corpus")
PUBLISHED_CORPUS_ENV = "SNAPCHAIN_PUBLISHED_CORPUS"

GIB = 1 << 30
DESK_SIZES = tuple(int(0.25 * i * GIB) for i in range(1, 6))


def desk_config(**kw):
    """Criterion-scale variant of the default experiment configuration."""
    defaults = dict(train_size=2000, test_size=500, repetitions=10,
                    master_seed=1701)
    defaults.update(kw)
    return ExperimentConfig(**defaults)


def test_criterion_01_exact_worked_example():
    t0 = time.monotonic()
    p = chain_probability_exact(UniformChangeModel(7, 4), 2)
    assert p == Fraction(2, 7)
    assert time.monotonic() - t0 < 1.0


def test_criterion_02_exact_equals_bruteforce_to_n14():
    t0 = time.monotonic()
    for n in range(1, 15):
        for k in range(1, n + 1):
            model = UniformChangeModel(n, k)
            brute = bruteforce_distribution(model)
            for c in range(1, k + 1):
                assert chain_probability_exact(model, c) == brute[c], (n, k, c)
    assert time.monotonic() - t0 < 300.0


def test_criterion_03_normalization_grid():
    rng = np.random.default_rng(0)
    seen = set()
    while len(seen) < 50:
        k = int(rng.integers(1, 26))
        n = int(rng.integers(k, 201))
        seen.add((n, k))
    for n, k in sorted(seen):
        model = UniformChangeModel(n, k)
        total = sum(chain_probability_exact(model, c) for c in range(1, k + 1))
        assert total == 1, (n, k)


def test_criterion_04_singleton_probability_growth():
    ns = (40, 100, 400, 2000)
    exact = [float(chain_probability_exact(UniformChangeModel(n, 20), 1))
             for n in ns]
    assert exact == sorted(exact)
    assert exact[-1] >= 0.98
    for n, want in zip(ns, exact):
        est, _ = chain_probability_montecarlo(UniformChangeModel(n, 20), 1,
                                              trials=10**6, seed=n)
        se = math.sqrt(want * (1 - want) / 10**6)
        assert abs(est - want) <= 3 * se + 1e-12, (n, est, want)


def test_criterion_05_diff_matches_mutation_ground_truth():
    import io
    cfg = SnapshotConfig(block_size=512)
    rng = np.random.default_rng(99)
    for case in range(1000):
        n_blocks = int(rng.integers(1, 33))
        img = bytearray(rng.bytes(512 * n_blocks))
        n_mut = int(rng.integers(0, n_blocks + 1))
        mutated = set(rng.choice(n_blocks, size=n_mut, replace=False).tolist())
        img2 = bytearray(img)
        for b in mutated:
            off = b * 512 + int(rng.integers(512))
            img2[off] ^= int(rng.integers(1, 256))
        rec = diff_snapshots(take_snapshot(io.BytesIO(bytes(img)), cfg),
                             take_snapshot(io.BytesIO(bytes(img2)), cfg))
        bits = np.unpackbits(rec.packed(), bitorder="little")[:n_blocks]
        assert set(np.flatnonzero(bits).tolist()) == mutated, case


def test_criterion_06_binomial_tail_numerics():
    def sf_exact(k, n, p):
        q = 1 - p
        return sum(Fraction(math.comb(n, i)) * p**i * q**(n - i)
                   for i in range(k + 1, n + 1))

    rng = np.random.default_rng(7)
    for _ in range(200):
        n = int(rng.integers(1, 1001))
        k = int(rng.integers(0, n + 1))
        num = int(rng.integers(0, 1001))
        p = Fraction(num, 1000)
        got = binomial_sf(k, n, num / 1000)
        want = sf_exact(k, n, p)
        if want == 0:
            assert got == 0.0, (k, n, num)
        else:
            assert abs(got - float(want)) <= 1e-9 * float(want), (k, n, num)
    # the scale where linear-space term summation underflows to zero
    v = binomial_sf(2000, 10**6, 1e-3)
    assert math.isfinite(v) and 0.0 < v < 1.0


@pytest.fixture(scope="module")
def bundled_corpus():
    return load_corpus(BUNDLED_CORPUS)


def test_criterion_07_detection_trend(bundled_corpus):
    t0 = time.monotonic()
    report = run_experiment(bundled_corpus, desk_config())
    elapsed = time.monotonic() - t0
    fnr = [report.mean(s, "fnr") for s in DESK_SIZES]
    fpr = [report.mean(s, "fpr") for s in DESK_SIZES]
    assert all(v is not None for v in fnr + fpr)
    assert all(a >= b - 1e-12 for a, b in zip(fnr, fnr[1:])), fnr
    for size, v in zip(DESK_SIZES, fnr):
        if size >= int(0.75 * GIB):
            assert v <= 0.02, (size, v)
    assert all(v <= 0.02 for v in fpr), fpr
    assert elapsed < 1800.0, f"experiment took {elapsed:.0f}s"


def test_criterion_07_published_corpus_full_scale():
    path = os.environ.get(PUBLISHED_CORPUS_ENV)
    if not path or not os.path.isdir(path):
        pytest.skip("published corpus not available offline; set "
                    f"{PUBLISHED_CORPUS_ENV} to run the full-scale check")
    corpus = load_corpus(path)
    report = run_experiment(corpus, ExperimentConfig(master_seed=1701))
    assert abs(report.mean(DESK_SIZES[0], "fnr") - 0.320) <= 0.10
    for s in DESK_SIZES:
        assert abs(report.mean(s, "fpr") - 0.004) <= 0.01


def test_criterion_08_experiment_determinism(bundled_corpus):
    cfg = desk_config(train_size=100, test_size=40, repetitions=2,
                      hidden_sizes=DESK_SIZES[:2])
    a = run_experiment(bundled_corpus, cfg)
    b = run_experiment(bundled_corpus, cfg)
    assert a.to_json().encode() == b.to_json().encode()


@pytest.fixture(scope="module")
def paired_write_recalls(bundled_corpus):
    """Mean test recall at 0.75 GiB under paired hidden writes.

    Datasets are generated once per run with two feature columns; the
    single-feature detector trains on the first column only, which is
    identical to generating with one feature column (raw feature c is
    count_c / total regardless of the configured width).
    """
    size = int(0.75 * GIB)
    cfg = desk_config(chain_group=2, n_features=2, hidden_sizes=(size,))
    recalls_1, recalls_2 = [], []
    for run in range(cfg.repetitions):
        train_ds, test_ds = generate_dataset(bundled_corpus, cfg, run,
                                             hidden_bytes=size)
        Xtr, ytr = train_ds.features.rows, train_ds.labels
        Xte, yte = test_ds.features.rows, test_ds.labels
        m1 = train(Xtr[:, :1], ytr)
        recalls_1.append(evaluate(m1, Xte[:, :1], yte).recall)
        m2 = train(Xtr, ytr)
        recalls_2.append(evaluate(m2, Xte, yte).recall)
    return float(np.mean(recalls_1)), float(np.mean(recalls_2))


def test_criterion_09_paired_writes_evade_single_feature(paired_write_recalls):
    # Known shortfall: grouping hidden writes in pairs removes the
    # singleton surplus, but it still shifts the observed singleton
    # probability (every added 2-chain dilutes the denominator), so a
    # single-feature detector keeps finding dirty disks instead of
    # dropping below 0.2 recall.  Kept failing rather than weakened; see
    # the repository notes for the analysis.
    recall_single, _ = paired_write_recalls
    assert recall_single < 0.2, recall_single


def test_criterion_09_second_feature_restores_detection(paired_write_recalls):
    _, recall_pair = paired_write_recalls
    assert recall_pair >= 0.9, recall_pair


def test_criterion_10_survival_closed_form_and_simulation():
    cfg = HiddenVolumeConfig(4096, copies=6, reconstruct_threshold=1)
    assert estimate_survival(cfg, 0.25, 1) == 0.999755859375
    trials = 10**5
    rng = np.random.default_rng(31)
    hits = int(((rng.random((trials, 6)) >= 0.25).any(axis=1)).sum())
    p_hat = hits / trials
    p = estimate_survival(cfg, 0.25, 1)
    se = math.sqrt(p * (1 - p) / trials)
    assert abs(p_hat - p) <= 3 * se
