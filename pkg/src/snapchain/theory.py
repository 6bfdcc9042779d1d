"""Exact distribution of chain lengths under uniform random changes.

With k changed positions placed uniformly at random in an array of n
blocks, a chain drawn uniformly from the resulting maximal runs has
length c with probability

    Pr(C = c) = sum over unordered partitions q of k of
        orderings(q) * C(n-k+1, |q|) / C(n, k) * mult_c(q) / |q|

where orderings(q) counts the distinct orderings of q's parts and
mult_c(q) how many parts equal c.  Arrays with m runs correspond to
ordered compositions of k into m parts combined with C(n-k+1, m) gap
placements, so summing over unordered partitions with ordering
multiplicities enumerates every array exactly once.

Everything here is exact rational arithmetic; a seeded Monte Carlo
estimator covers k beyond the partition budget.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction
from math import comb, factorial, prod, sqrt

import numpy as np

from .chains import ChainDistribution

DEFAULT_PARTITION_BUDGET = 40  # p(40) = 37338 partitions
DEFAULT_ENUMERATION_LIMIT = 10**7


@dataclass(frozen=True)
class UniformChangeModel:
    n: int  # array length (blocks of free space)
    k: int  # number of changes

    def __post_init__(self):
        if not 0 < self.k <= self.n:
            raise ValueError(f"need 0 < k <= n, got n={self.n}, k={self.k}")


class BudgetExceededError(ValueError):
    """Exact computation would exceed the configured work budget."""


def _partitions(k: int):
    """Unordered partitions of k, parts in non-increasing order."""
    # iterative algorithm over descending part lists
    part = [k]
    while True:
        yield part
        # find rightmost part > 1
        i = len(part) - 1
        ones = 0
        while i >= 0 and part[i] == 1:
            ones += 1
            i -= 1
        if i < 0:
            return
        part[i] -= 1
        rem = ones + 1
        part = part[: i + 1]
        while rem > part[i]:
            part.append(part[i])
            rem -= part[i]
        part.append(rem)


def _orderings(partition) -> int:
    """Number of distinct ordered arrangements of the partition's parts."""
    mults = {}
    for p in partition:
        mults[p] = mults.get(p, 0) + 1
    return factorial(len(partition)) // prod(factorial(m) for m in mults.values())


def _check_budget(k: int, budget: int):
    if k > budget:
        raise BudgetExceededError(
            f"k={k} exceeds the partition budget ({budget}); use Monte Carlo")


def chain_probability_exact(model: UniformChangeModel, c: int,
                            partition_budget: int = DEFAULT_PARTITION_BUDGET) -> Fraction:
    """Exact Pr(C = c) for the uniform-change model, as a Fraction."""
    n, k = model.n, model.k
    if not 1 <= c <= k:
        raise ValueError(f"need 1 <= c <= k, got c={c}, k={k}")
    _check_budget(k, partition_budget)
    total_arrays = comb(n, k)
    acc = Fraction(0)
    for part in _partitions(k):
        mult_c = part.count(c)
        if not mult_c:
            continue
        m = len(part)
        weight = _orderings(part) * comb(n - k + 1, m)
        if weight:
            acc += Fraction(weight * mult_c, m)
    return acc / total_arrays


def theoretical_distribution(model: UniformChangeModel, c_max: int | None = None,
                             partition_budget: int = DEFAULT_PARTITION_BUDGET,
                             mc_trials: int = 10**6, seed: int = 0) -> ChainDistribution:
    """Tabulate Pr(C = c) for c = 1..c_max.

    Uses the exact partition sum in a single pass; falls back to Monte
    Carlo when k exceeds the partition budget.
    """
    n, k = model.n, model.k
    if c_max is None:
        c_max = k
    c_max = min(c_max, k)
    if k <= partition_budget:
        acc = [Fraction(0)] * (k + 1)
        for part in _partitions(k):
            m = len(part)
            weight = _orderings(part) * comb(n - k + 1, m)
            if not weight:
                continue
            mults = {}
            for p in part:
                mults[p] = mults.get(p, 0) + 1
            for c, mult_c in mults.items():
                acc[c] += Fraction(weight * mult_c, m)
        total = comb(n, k)
        probs = {c: float(acc[c] / total) for c in range(1, c_max + 1) if acc[c]}
        return ChainDistribution.from_probs(probs)
    est = {}
    for c in range(1, c_max + 1):
        p, _ = chain_probability_montecarlo(model, c, trials=mc_trials, seed=seed)
        if p > 0:
            est[c] = p
    return ChainDistribution.from_probs(est)


def chain_probability_bruteforce(model: UniformChangeModel, c: int,
                                 limit: int = DEFAULT_ENUMERATION_LIMIT) -> Fraction:
    """Pr(C = c) by enumerating every C(n, k) array; exact rational."""
    n, k = model.n, model.k
    if not 1 <= c <= k:
        raise ValueError(f"need 1 <= c <= k, got c={c}, k={k}")
    total_arrays = comb(n, k)
    if total_arrays > limit:
        raise BudgetExceededError(
            f"C({n},{k}) = {total_arrays} exceeds the enumeration limit ({limit})")
    acc = Fraction(0)
    for combo in itertools.combinations(range(n), k):
        runs = _run_lengths(combo)
        hits = runs.count(c)
        if hits:
            acc += Fraction(hits, len(runs))
    return acc / total_arrays


def bruteforce_distribution(model: UniformChangeModel,
                            limit: int = DEFAULT_ENUMERATION_LIMIT) -> list:
    """All Pr(C = c), c = 1..k, from one enumeration pass. Index 0 unused."""
    n, k = model.n, model.k
    total_arrays = comb(n, k)
    if total_arrays > limit:
        raise BudgetExceededError(
            f"C({n},{k}) = {total_arrays} exceeds the enumeration limit ({limit})")
    acc = [Fraction(0)] * (k + 1)
    for combo in itertools.combinations(range(n), k):
        runs = _run_lengths(combo)
        m = len(runs)
        for r in runs:
            acc[r] += Fraction(1, m)
    return [a / total_arrays for a in acc]


def _run_lengths(sorted_positions) -> list:
    runs = []
    run = 1
    for prev, cur in zip(sorted_positions, sorted_positions[1:]):
        if cur == prev + 1:
            run += 1
        else:
            runs.append(run)
            run = 1
    runs.append(run)
    return runs


def chain_probability_montecarlo(model: UniformChangeModel, c: int,
                                 trials: int, seed: int = 0,
                                 batch: int = 65536):
    """Monte Carlo estimate of Pr(C = c) with a 95% confidence half-width.

    Each trial places k changes uniformly without replacement, then draws
    one chain uniformly from the resulting runs.  Deterministic for a
    given (seed, trials, batch): trials are consumed in fixed-size blocks.
    """
    n, k = model.n, model.k
    if not 1 <= c <= k:
        raise ValueError(f"need 1 <= c <= k, got c={c}, k={k}")
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    hits = 0
    done = 0
    while done < trials:
        b = min(batch, trials - done)
        if k == n:
            # only one array: a single k-chain
            hits += b if c == k else 0
            done += b
            continue
        pos = rng.integers(0, n, size=(b, k), dtype=np.int64)
        pos.sort(axis=1)
        # redraw rows containing duplicate positions
        while True:
            dup = (np.diff(pos, axis=1) == 0).any(axis=1)
            bad = np.flatnonzero(dup)
            if bad.size == 0:
                break
            repl = rng.integers(0, n, size=(bad.size, k), dtype=np.int64)
            repl.sort(axis=1)
            pos[bad] = repl
        boundary = np.diff(pos, axis=1) > 1  # (b, k-1)
        nchains = 1 + boundary.sum(axis=1)
        chain_id = np.concatenate(
            [np.zeros((b, 1), dtype=np.int64), np.cumsum(boundary, axis=1)], axis=1)
        pick = (rng.random(b) * nchains).astype(np.int64)
        lengths = (chain_id == pick[:, None]).sum(axis=1)
        hits += int((lengths == c).sum())
        done += b
    p = hits / trials
    half_width = 1.96 * sqrt(max(p * (1 - p), 0.0) / trials)
    return p, half_width
