"""Classifier features from chain lists.

Two feature modes over the first n chain lengths:

* raw: row entry c is the observed probability of c-chains on that disk,
  count_c / total_chains.
* tail: row entry c is the binomial tail probability P(X > count_c) with
  X ~ Binomial(total_chains, p_c), where p_c comes from a held-out clean
  reference set — how surprising the observed c-chain count would be on
  a clean disk.

The binomial survival function is evaluated in log space so it never
underflows at disk scale (millions of chains).
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .chains import empirical_distribution

MODE_TAIL = "tail"
MODE_RAW = "raw"


def binomial_sf(k: int, n: int, p: float) -> float:
    """P(X > k) for X ~ Binomial(n, p), evaluated in log space.

    Sums whichever tail of the pmf has monotonically decreasing terms,
    scaling every term by the first so nothing underflows; for k below
    the mode the CDF is summed instead and subtracted from 1.
    """
    if not 0 <= k <= n:
        raise ValueError(f"need 0 <= k <= n, got k={k}, n={n}")
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"need 0 <= p <= 1, got p={p}")
    if k == n:
        return 0.0
    if p == 0.0:
        return 0.0
    if p == 1.0:
        return 1.0
    log_p = math.log(p)
    log_q = math.log1p(-p)
    mode = int((n + 1) * p)

    def log_pmf(i: int) -> float:
        return (math.lgamma(n + 1) - math.lgamma(i + 1) - math.lgamma(n - i + 1)
                + i * log_p + (n - i) * log_q)

    if k + 1 >= mode:
        # right tail: terms decrease from i = k+1 upward
        total = _sum_ratio_terms(log_pmf(k + 1), _right_ratios(n, k + 1, p), n - k)
        return min(total, 1.0)
    # left side: terms decrease from i = k downward; SF = 1 - CDF
    cdf = _sum_ratio_terms(log_pmf(k), _left_ratios(n, k, p), k + 1)
    return min(max(1.0 - cdf, 0.0), 1.0)


def _right_ratios(n: int, start: int, p: float):
    """term(i+1)/term(i) for i = start, start+1, ..."""
    odds = p / (1.0 - p)
    i = start
    while True:
        yield (n - i) / (i + 1) * odds
        i += 1


def _left_ratios(n: int, start: int, p: float):
    """term(i-1)/term(i) for i = start, start-1, ..."""
    inv_odds = (1.0 - p) / p
    i = start
    while True:
        yield i / (n - i + 1) * inv_odds
        i -= 1


def _sum_ratio_terms(log_first: float, ratios, max_terms: int) -> float:
    """exp(log_first) * (1 + r1 + r1*r2 + ...), truncated when converged."""
    total = 1.0
    term = 1.0
    for _, ratio in zip(range(max_terms - 1), ratios):
        term *= ratio
        total += term
        if term <= total * 1e-17:
            break
    if log_first + math.log(total) < -745.0:  # exp underflows to 0 anyway
        return 0.0
    return math.exp(log_first + math.log(total))


@dataclass(frozen=True)
class ReferenceProbs:
    """Clean-disk chain-length probabilities p_1..p_n from a held-out set."""

    probs: np.ndarray  # index c-1 holds p_c
    n_features: int

    def __post_init__(self):
        if len(self.probs) != self.n_features:
            raise ValueError("probs length must equal n_features")


def estimate_reference_probs(clean_chain_lists, n_features: int) -> ReferenceProbs:
    """p_c for c = 1..n_features from the pooled clean chain lists."""
    if n_features < 1:
        raise ValueError("n_features must be >= 1")
    dist = empirical_distribution(list(clean_chain_lists))
    probs = np.array([dist.prob(c) for c in range(1, n_features + 1)])
    return ReferenceProbs(probs, n_features)


def _chain_counts(chains: np.ndarray, n_features: int) -> np.ndarray:
    """counts[c-1] = number of c-chains, for c = 1..n_features."""
    chains = np.asarray(chains, dtype=np.int64)
    if chains.size == 0:
        return np.zeros(n_features, dtype=np.int64)
    clipped = chains[chains <= n_features]
    return np.bincount(clipped, minlength=n_features + 1)[1:]


@dataclass
class FeatureMatrix:
    """Per-disk feature rows, optionally labeled (1 dirty, 0 clean, -1 unknown)."""

    rows: np.ndarray  # (n_disks, n_features) float64
    mode: str
    labels: np.ndarray | None = None

    def __post_init__(self):
        self.rows = np.atleast_2d(np.asarray(self.rows, dtype=np.float64))
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if self.labels.shape[0] != self.rows.shape[0]:
                raise ValueError("labels length must equal row count")

    @property
    def n_features(self) -> int:
        return self.rows.shape[1]

    def save(self, path) -> None:
        labels = self.labels
        if labels is None:
            labels = np.full(self.rows.shape[0], -1, dtype=np.int64)
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["label"] + [f"f{i}" for i in range(1, self.n_features + 1)])
            for lab, row in zip(labels, self.rows):
                w.writerow([int(lab)] + [repr(float(v)) for v in row])

    @classmethod
    def load(cls, path, mode: str = MODE_RAW) -> "FeatureMatrix":
        labels, rows = [], []
        with open(path, newline="") as f:
            reader = csv.reader(f)
            header = next(reader, None)
            if header is None or header[0].strip() != "label":
                raise ValueError(f"{path}: expected header 'label,f1,...'")
            width = len(header) - 1
            for lineno, row in enumerate(reader, start=2):
                if not row:
                    continue
                if len(row) != width + 1:
                    raise ValueError(f"{path}:{lineno}: expected {width + 1} columns")
                try:
                    labels.append(int(row[0]))
                    rows.append([float(v) for v in row[1:]])
                except ValueError as e:
                    raise ValueError(f"{path}:{lineno}: malformed row") from e
        if not rows:
            raise ValueError(f"{path}: no feature rows")
        labels = np.array(labels, dtype=np.int64)
        return cls(np.array(rows), mode, None if (labels == -1).all() else labels)


def build_features_raw(chain_lists, n_features: int, labels=None) -> FeatureMatrix:
    """Row i, column c = (count of c-chains in disk i) / (total chains)."""
    if n_features < 1:
        raise ValueError("n_features must be >= 1")
    rows = np.zeros((len(chain_lists), n_features))
    for i, chains in enumerate(chain_lists):
        total = len(chains)
        if total:
            rows[i] = _chain_counts(chains, n_features) / total
    return FeatureMatrix(rows, MODE_RAW, labels)


def build_features_tail(chain_lists, ref: ReferenceProbs, labels=None) -> FeatureMatrix:
    """Row i, column c = P(X > count_c) with X ~ Binomial(N_i, p_c).

    N_i is the number of chains on disk i.  An empty disk yields an
    all-zero row (and a warning): with no chains there is no evidence of
    a surplus, and P(X > 0) at N = 0 is 0 by convention.
    """
    nf = ref.n_features
    rows = np.zeros((len(chain_lists), nf))
    for i, chains in enumerate(chain_lists):
        total = len(chains)
        if total == 0:
            warnings.warn(f"disk {i} has no chains; emitting a zero feature row")
            continue
        counts = _chain_counts(chains, nf)
        for c in range(nf):
            k = min(int(counts[c]), total)
            rows[i, c] = binomial_sf(k, total, float(ref.probs[c]))
    return FeatureMatrix(rows, MODE_TAIL, labels)
