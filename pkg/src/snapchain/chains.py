"""Chain statistics: run lengths of consecutive changed blocks.

A chain list is the ordered sequence of maximal-run lengths in a change
record; pooling chain lists and counting occurrences of each length c
gives the empirical chain-length distribution p_c.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .snapshot import ChangeRecord

# A ChainList is a 1-D int64 array of run lengths, in on-disk order.
ChainList = np.ndarray


class EmptyDistributionError(ValueError):
    """No chains available to estimate a distribution from."""


def extract_chains(record: ChangeRecord) -> ChainList:
    """Lengths of maximal runs of 1s, left to right; empty iff all zeros."""
    _, lens = record.intervals()
    return lens.astype(np.int64, copy=True)


@dataclass(frozen=True)
class ChainDistribution:
    """Empirical (or theoretical) pmf over chain lengths."""

    probs: dict  # c -> probability
    total_chains: int
    max_c: int

    @classmethod
    def from_counts(cls, counts: dict) -> "ChainDistribution":
        total = sum(counts.values())
        if total <= 0:
            raise EmptyDistributionError("no chains observed; distribution undefined")
        probs = {int(c): n / total for c, n in sorted(counts.items()) if n > 0}
        return cls(probs, int(total), max(probs))

    @classmethod
    def from_probs(cls, probs: dict, total_chains: int = 0) -> "ChainDistribution":
        probs = {int(c): float(p) for c, p in sorted(probs.items()) if p > 0}
        if not probs:
            raise EmptyDistributionError("empty probability table")
        return cls(probs, total_chains, max(probs))

    def prob(self, c: int) -> float:
        return self.probs.get(c, 0.0)

    def support(self) -> np.ndarray:
        return np.array(sorted(self.probs), dtype=np.int64)

    def prob_array(self) -> np.ndarray:
        cs = self.support()
        return np.array([self.probs[int(c)] for c in cs])

    def mean(self) -> float:
        return float(sum(c * p for c, p in self.probs.items()))

    def save(self, path) -> None:
        total = self.total_chains
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["c", "probability", "count"])
            for c in sorted(self.probs):
                p = self.probs[c]
                w.writerow([c, repr(p), round(p * total) if total else 0])

    @classmethod
    def load(cls, path) -> "ChainDistribution":
        probs, counts = {}, {}
        with open(path, newline="") as f:
            reader = csv.reader(f)
            header = next(reader, None)
            if header is None or [h.strip() for h in header[:2]] != ["c", "probability"]:
                raise ValueError(f"{path}: expected header 'c,probability,count'")
            for lineno, row in enumerate(reader, start=2):
                if not row:
                    continue
                try:
                    c = int(row[0])
                    probs[c] = float(row[1])
                    if len(row) > 2:
                        counts[c] = int(row[2])
                except ValueError as e:
                    raise ValueError(f"{path}:{lineno}: malformed row {row!r}") from e
        total = sum(counts.values())
        dist = cls.from_probs(probs, total)
        return dist


def empirical_distribution(chain_lists) -> ChainDistribution:
    """Pool one or more chain lists and normalize the length counts.

    Counts are pooled across all inputs (not averaged per record), so a
    single estimate p_c is produced for the whole collection.
    """
    if isinstance(chain_lists, np.ndarray):
        chain_lists = [chain_lists]
    pooled = [np.asarray(cl, dtype=np.int64) for cl in chain_lists]
    if not pooled:
        raise EmptyDistributionError("no chain lists given")
    lengths = np.concatenate(pooled) if len(pooled) > 1 else pooled[0]
    if lengths.size == 0:
        raise EmptyDistributionError("all chain lists are empty; distribution undefined")
    values, counts = np.unique(lengths, return_counts=True)
    return ChainDistribution.from_counts(dict(zip(values.tolist(), counts.tolist())))


# -- chain-list CSV files (one record per line, blank line = empty list) --

def save_chain_lists(chain_lists, path) -> None:
    with open(path, "w") as f:
        for cl in chain_lists:
            f.write(",".join(str(int(c)) for c in cl))
            f.write("\n")


def load_chain_lists(path) -> list:
    out = []
    with open(path) as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                out.append(np.empty(0, dtype=np.int64))
                continue
            try:
                lengths = np.array([int(tok) for tok in line.split(",")], dtype=np.int64)
            except ValueError as e:
                raise ValueError(f"{path}:{lineno}: malformed chain list") from e
            if np.any(lengths < 1):
                raise ValueError(f"{path}:{lineno}: chain lengths must be >= 1")
            out.append(lengths)
    return out
