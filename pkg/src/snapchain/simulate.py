"""Simulated block-level changes from hidden volumes and public filesystems.

Hidden-volume writes land uniformly at random in the free-space region
(the first ``free_blocks`` blocks of the record); public-filesystem
writes are chains drawn from an empirical length distribution and placed
at uniform start positions anywhere on the disk, rejecting placements
that overlap or abut an existing chain so the drawn length multiset is
preserved exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .chains import ChainDistribution
from .snapshot import ChangeRecord, ShapeMismatchError


class CapacityError(ValueError):
    """Hidden payload does not fit in free space."""


class PlacementSaturationError(RuntimeError):
    """Public-chain placement kept colliding; disk too full for the target."""


@dataclass(frozen=True)
class DiskModel:
    total_blocks: int
    free_blocks: int
    block_size: int = 4096

    def __post_init__(self):
        if not 0 < self.free_blocks <= self.total_blocks:
            raise ValueError("need 0 < free_blocks <= total_blocks")
        if self.block_size <= 0:
            raise ValueError("block_size must be positive")


@dataclass(frozen=True)
class HiddenVolumeConfig:
    data_bytes: int
    copies: int = 6
    reconstruct_threshold: int = 1
    chain_group: int = 1  # g > 1 writes carriers in runs of g (paired-write countermeasure)

    def __post_init__(self):
        if self.data_bytes < 0:
            raise ValueError("data_bytes must be >= 0")
        if not 1 <= self.reconstruct_threshold <= self.copies:
            raise ValueError("need 1 <= reconstruct_threshold <= copies")
        if self.chain_group < 1:
            raise ValueError("chain_group must be >= 1")

    def carrier_blocks(self, block_size: int) -> int:
        return -(-self.data_bytes // block_size) * self.copies


@dataclass(frozen=True)
class PublicChangeConfig:
    target_bytes: int
    source_distribution: ChainDistribution | None = None

    def __post_init__(self):
        if self.target_bytes < 0:
            raise ValueError("target_bytes must be >= 0")


def _uniform_subset_sorted(rng: np.random.Generator, n: int, k: int) -> np.ndarray:
    """Sorted uniform k-subset of range(n), without replacement.

    Draws with replacement and dedupes: conditioned on its size, the set
    of distinct values of an i.i.d. uniform sample is a uniform subset,
    and removing uniformly chosen elements keeps it uniform.  Avoids the
    O(n) cost of permutation-based sampling for k much smaller than n.
    """
    if k > n:
        raise ValueError("cannot sample more positions than exist")
    if k == 0:
        return np.empty(0, dtype=np.int64)
    if 3 * k > n:
        return np.sort(rng.choice(n, size=k, replace=False)).astype(np.int64)
    dtype = np.int32 if n <= np.iinfo(np.int32).max else np.int64
    over = k + (k * k) // (2 * (n - k)) + int(4 * math.sqrt(k)) + 16
    vals = np.unique(rng.integers(0, n, size=over, dtype=dtype))
    while vals.size < k:
        extra = rng.integers(0, n, size=2 * (k - vals.size) + 32, dtype=dtype)
        vals = np.unique(np.concatenate([vals, extra]))
    if vals.size > k:
        drop = rng.choice(vals.size, size=vals.size - k, replace=False)
        vals = np.delete(vals, drop)
    return vals.astype(np.int64)


def simulate_hidden_writes(disk: DiskModel, cfg: HiddenVolumeConfig, seed,
                           free_map: np.ndarray | None = None) -> np.ndarray:
    """Free-space block indices changed by writing the hidden payload.

    Emits ceil(data_bytes / block_size) * copies carrier blocks.  With
    chain_group = 1 the positions are a uniform subset of free space;
    with g > 1 carriers are runs of g at uniform non-overlapping (but
    possibly abutting) run starts.  Returns a sorted index array.
    """
    count = cfg.carrier_blocks(disk.block_size)
    if count == 0:
        return np.empty(0, dtype=np.int64)
    free = disk.free_blocks if free_map is None else len(free_map)
    if count > free:
        raise CapacityError(
            f"{count} carrier blocks exceed {free} free blocks")
    rng = np.random.default_rng(seed)
    g = cfg.chain_group
    if g == 1:
        idx = _uniform_subset_sorted(rng, free, count)
    else:
        if count % g:
            raise ValueError(
                f"carrier count {count} is not a multiple of chain_group {g}")
        r = count // g
        # stars-and-bars: sorted choice from the contracted range maps
        # bijectively onto non-overlapping run starts
        x = _uniform_subset_sorted(rng, free - r * (g - 1), r)
        starts = x + (g - 1) * np.arange(r, dtype=np.int64)
        idx = (starts[:, None] + np.arange(g, dtype=np.int64)).ravel()
    if free_map is not None:
        idx = np.sort(np.asarray(free_map, dtype=np.int64)[idx])
    return idx


def _draw_lengths(rng: np.random.Generator, dist: ChainDistribution,
                  target_blocks: int) -> np.ndarray:
    """Chain lengths drawn i.i.d. until their sum first reaches the target."""
    cs = dist.support().astype(np.int64)
    cdf = np.cumsum(dist.prob_array())
    cdf[-1] = 1.0
    mean = dist.mean()
    out = []
    total = 0
    while total < target_blocks:
        need = max(int((target_blocks - total) / mean * 1.05) + 16, 64)
        draw = cs[np.searchsorted(cdf, rng.random(need), side="right")]
        csum = total + np.cumsum(draw)
        stop = int(np.searchsorted(csum, target_blocks, side="left"))
        if stop < draw.size:
            out.append(draw[: stop + 1])
            total = int(csum[stop])
        else:
            out.append(draw)
            total = int(csum[-1])
    return np.concatenate(out) if len(out) > 1 else out[0]


def _place_chains(rng: np.random.Generator, n: int, lengths: np.ndarray,
                  max_rounds: int):
    """Uniform start positions for every chain, rejecting overlap/abutment.

    Round-based: all unplaced chains propose a start; proposals touching
    an accepted chain or a preceding proposal are redrawn next round.
    The length multiset is never altered, only positions.
    """
    from ._kernels import accept_placements
    if lengths.size and int(lengths.max()) > n:
        raise ValueError("drawn chain longer than the record")
    # (start, length) pairs ride in one int64 key so sorting stays radix-fast
    len_bits = max(int(lengths.max()).bit_length(), 1) if lengths.size else 1
    if n.bit_length() + len_bits > 62:
        raise ValueError("record too long for packed placement keys")
    acc_starts = np.empty(0, dtype=np.int64)
    acc_ends = np.empty(0, dtype=np.int64)
    pending = lengths.astype(np.int64)
    mask = (1 << len_bits) - 1
    for _ in range(max_rounds):
        if pending.size == 0:
            return acc_starts, acc_ends - acc_starts + 1
        starts = rng.integers(0, n - pending + 1)
        keys = np.sort((starts << len_bits) | pending)
        acc_starts, acc_ends, pending = accept_placements(
            keys >> len_bits, keys & mask, acc_starts, acc_ends)
    raise PlacementSaturationError(
        f"could not place {pending.size} chains after {max_rounds} rounds")


def simulate_public_changes(disk: DiskModel, cfg: PublicChangeConfig, seed,
                            max_rounds: int = 10000) -> ChangeRecord:
    """ChangeRecord of public-filesystem chains totalling >= target_bytes.

    Chain lengths are drawn i.i.d. from the source distribution until
    their cumulative block count reaches the target; each is placed at a
    uniform start position, rejected and redrawn while it overlaps or
    abuts a previously placed chain.  extract_chains of the result
    reproduces the drawn multiset exactly.
    """
    n = disk.total_blocks
    target = -(-cfg.target_bytes // disk.block_size)
    if target == 0:
        return ChangeRecord(n, starts=np.empty(0, dtype=np.int64),
                            lens=np.empty(0, dtype=np.int64))
    if cfg.source_distribution is None:
        raise ValueError("public-change simulation requires a source distribution")
    rng = np.random.default_rng(seed)
    lengths = _draw_lengths(rng, cfg.source_distribution, target)
    starts, lens = _place_chains(rng, n, lengths, max_rounds)
    return ChangeRecord(n, starts=starts, lens=lens)


def merge_change_records(a: ChangeRecord, b) -> ChangeRecord:
    """Bitwise OR of two change records (or a record and an index set)."""
    from ._kernels import union_sorted_intervals
    if isinstance(b, ChangeRecord):
        if a.length != b.length:
            raise ShapeMismatchError(
                f"record lengths differ: {a.length} vs {b.length}")
        b_starts, b_lens = b.intervals()
    else:
        idx = np.asarray(b, dtype=np.int64)
        if idx.size and not (np.diff(idx) > 0).all():
            idx = np.unique(idx)
        if idx.size and (idx[0] < 0 or idx[-1] >= a.length):
            raise ShapeMismatchError("merge index out of record range")
        b_starts, b_lens = idx, np.ones(idx.size, dtype=np.int64)
    a_starts, a_lens = a.intervals()
    starts, lens = union_sorted_intervals(
        np.ascontiguousarray(a_starts), np.ascontiguousarray(a_lens),
        np.ascontiguousarray(b_starts), np.ascontiguousarray(b_lens))
    return ChangeRecord(a.length, starts=starts, lens=lens)


def estimate_survival(cfg: HiddenVolumeConfig, overwrite_fraction: float,
                      data_block_count: int) -> float:
    """P(every data block keeps >= threshold surviving copies).

    Each of the m copies is independently overwritten with probability
    q; a data block survives when at least `reconstruct_threshold`
    copies escape, and the volume survives when all B blocks do.
    """
    q = overwrite_fraction
    if not 0.0 <= q <= 1.0:
        raise ValueError("overwrite_fraction must be in [0, 1]")
    if data_block_count < 0:
        raise ValueError("data_block_count must be >= 0")
    m, t = cfg.copies, cfg.reconstruct_threshold
    if t == 1:
        per_block = 1.0 - q ** m
    else:
        per_block = sum(math.comb(m, j) * (1 - q) ** j * q ** (m - j)
                        for j in range(t, m + 1))
    return per_block ** data_block_count
