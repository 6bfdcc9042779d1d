"""Block-level disk snapshots: per-block hashing, Merkle roots, and diffs.

A snapshot stores one digest per fixed-size block plus a Merkle root over
those digests.  Two snapshots of the same disk diff into a ChangeRecord,
a bit vector with 1 wherever the block's bytes differ.
"""

from __future__ import annotations

import hashlib
import struct
import time
from dataclasses import dataclass

import numpy as np

SNAPSHOT_MAGIC = b"SNAPCHN1"
RECORD_MAGIC = b"CHGREC01"

# Domain-separation tags: leaves and interior nodes never share a preimage.
_LEAF_TAG = b"\x00"
_INTERIOR_TAG = b"\x01"

#: hash_algorithm_id -> (constructor, digest size in bytes)
HASH_ALGORITHMS = {
    1: (hashlib.sha256, 32),
    2: (lambda: hashlib.blake2b(digest_size=32), 32),
}


class FormatError(ValueError):
    """Malformed snapshot or change-record file."""


class ShapeMismatchError(ValueError):
    """Operands disagree on block size, hash algorithm, or block count."""


def _hash(algorithm_id: int, data: bytes) -> bytes:
    ctor, _ = HASH_ALGORITHMS[algorithm_id]
    h = ctor()
    h.update(data)
    return h.digest()


def digest_size(algorithm_id: int) -> int:
    if algorithm_id not in HASH_ALGORITHMS:
        raise FormatError(f"unknown hash algorithm id {algorithm_id}")
    return HASH_ALGORITHMS[algorithm_id][1]


@dataclass(frozen=True)
class SnapshotConfig:
    block_size: int = 4096
    hash_algorithm_id: int = 1

    def __post_init__(self):
        if self.block_size < 512 or self.block_size & (self.block_size - 1):
            raise ValueError(f"block_size must be a power of two >= 512, got {self.block_size}")
        digest_size(self.hash_algorithm_id)


def merkle_root(leaf_hashes, hash_algorithm_id: int = 1) -> bytes:
    """Root of a binary Merkle tree over leaf digests.

    Pairs are hashed left||right under an interior-node tag; an odd
    trailing node is promoted unchanged to the next level.  A single
    leaf is hashed once under the interior tag so the root never equals
    a leaf digest.
    """
    level = list(leaf_hashes)
    if not level:
        raise ValueError("merkle_root requires at least one leaf")
    if len(level) == 1:
        return _hash(hash_algorithm_id, _INTERIOR_TAG + level[0])
    while len(level) > 1:
        nxt = [
            _hash(hash_algorithm_id, _INTERIOR_TAG + level[i] + level[i + 1])
            for i in range(0, len(level) - 1, 2)
        ]
        if len(level) % 2:
            nxt.append(level[-1])
        level = nxt
    return level[0]


@dataclass(frozen=True)
class Snapshot:
    config: SnapshotConfig
    num_blocks: int
    leaf_hashes: bytes  # num_blocks digests, concatenated
    root: bytes
    source_id: str = ""
    captured_at: int = 0

    @property
    def digest_size(self) -> int:
        return digest_size(self.config.hash_algorithm_id)

    def leaf(self, i: int) -> bytes:
        d = self.digest_size
        return self.leaf_hashes[i * d : (i + 1) * d]

    def save(self, path) -> None:
        src = self.source_id.encode("utf-8")
        with open(path, "wb") as f:
            f.write(SNAPSHOT_MAGIC)
            f.write(struct.pack("<IBQ", self.config.block_size,
                                self.config.hash_algorithm_id, self.num_blocks))
            f.write(struct.pack("<I", len(src)))
            f.write(src)
            f.write(struct.pack("<Q", self.captured_at))
            f.write(self.leaf_hashes)
            f.write(self.root)

    @classmethod
    def load(cls, path) -> "Snapshot":
        with open(path, "rb") as f:
            data = f.read()
        if data[:8] != SNAPSHOT_MAGIC:
            raise FormatError(f"{path}: bad magic, not a snapshot file")
        try:
            block_size, algo, num_blocks = struct.unpack_from("<IBQ", data, 8)
            off = 8 + 13
            (src_len,) = struct.unpack_from("<I", data, off)
            off += 4
            src = data[off : off + src_len].decode("utf-8")
            off += src_len
            (ts,) = struct.unpack_from("<Q", data, off)
            off += 8
            d = digest_size(algo)
            leaves = data[off : off + num_blocks * d]
            off += num_blocks * d
            root = data[off : off + d]
        except struct.error as e:
            raise FormatError(f"{path}: truncated snapshot file") from e
        if len(leaves) != num_blocks * d or len(root) != d:
            raise FormatError(f"{path}: truncated snapshot file")
        return cls(SnapshotConfig(block_size, algo), num_blocks, leaves, root, src, ts)


def take_snapshot(image, config: SnapshotConfig = SnapshotConfig(),
                  source_id: str = "", captured_at: int | None = None) -> Snapshot:
    """Hash a disk image block by block and build the Merkle tree.

    ``image`` is a readable binary stream.  The final partial block, if
    any, is zero-padded to block_size before hashing.
    """
    bs = config.block_size
    leaves = []
    while True:
        block = image.read(bs)
        if not block:
            break
        if len(block) < bs:
            block = block + b"\x00" * (bs - len(block))
        leaves.append(_hash(config.hash_algorithm_id, _LEAF_TAG + block))
    if not leaves:
        raise ValueError("cannot snapshot a zero-length image")
    root = merkle_root(leaves, config.hash_algorithm_id)
    if captured_at is None:
        captured_at = int(time.time())
    return Snapshot(config, len(leaves), b"".join(leaves), root, source_id, captured_at)


def snapshot_file(path, config: SnapshotConfig = SnapshotConfig(),
                  source_id: str | None = None) -> Snapshot:
    with open(path, "rb") as f:
        return take_snapshot(f, config, source_id if source_id is not None else str(path))


class ChangeRecord:
    """Bit vector over blocks; bit i = 1 iff block i changed.

    Backed either by packed bits (LSB-first) or by sorted, disjoint,
    non-abutting (start, length) intervals; each view is derived from
    the other on demand.  Immutable once constructed.
    """

    __slots__ = ("length", "_packed", "_starts", "_lens")

    def __init__(self, length: int, *, packed=None, starts=None, lens=None):
        if length <= 0:
            raise ValueError("ChangeRecord length must be positive")
        self.length = int(length)
        self._packed = packed
        self._starts = starts
        self._lens = lens

    # -- constructors -------------------------------------------------

    @classmethod
    def from_bits(cls, bits) -> "ChangeRecord":
        bits = np.asarray(bits, dtype=np.uint8)
        return cls(len(bits), packed=np.packbits(bits, bitorder="little"))

    @classmethod
    def from_indices(cls, indices, length: int) -> "ChangeRecord":
        idx = np.unique(np.asarray(indices, dtype=np.int64))
        if idx.size and (idx[0] < 0 or idx[-1] >= length):
            raise ValueError("changed-block index out of range")
        starts, lens = _runs_from_sorted(idx)
        return cls(length, starts=starts, lens=lens)

    @classmethod
    def from_intervals(cls, starts, lens, length: int) -> "ChangeRecord":
        starts = np.asarray(starts, dtype=np.int64)
        lens = np.asarray(lens, dtype=np.int64)
        if starts.size:
            order = np.argsort(starts, kind="stable")
            starts, lens = starts[order], lens[order]
            if np.any(lens <= 0):
                raise ValueError("interval lengths must be positive")
            if starts[0] < 0 or np.any(starts + lens > length):
                raise ValueError("interval out of range")
            starts, lens = _merge_intervals(starts, lens)
        return cls(length, starts=starts.astype(np.int64), lens=lens.astype(np.int64))

    # -- views --------------------------------------------------------

    def intervals(self):
        """Sorted maximal runs of 1s as (starts, lengths)."""
        if self._starts is None:
            idx = self._changed_indices_from_packed()
            self._starts, self._lens = _runs_from_sorted(idx)
        return self._starts, self._lens

    def packed(self) -> np.ndarray:
        """Bits packed LSB-first into uint8, zero-padded to a byte."""
        if self._packed is None:
            buf = np.zeros((self.length + 7) // 8, dtype=np.uint8)
            starts, lens = self._starts, self._lens
            if starts.size:
                pos = np.repeat(starts, lens)
                pos = pos + np.arange(pos.size) - np.repeat(np.cumsum(lens) - lens, lens)
                np.bitwise_or.at(buf, pos >> 3, np.uint8(1) << (pos & 7).astype(np.uint8))
            self._packed = buf
        return self._packed

    def _changed_indices_from_packed(self) -> np.ndarray:
        bits = np.unpackbits(self._packed, bitorder="little")[: self.length]
        return np.flatnonzero(bits).astype(np.int64)

    def popcount(self) -> int:
        if self._lens is not None:
            return int(self._lens.sum())
        return int(np.unpackbits(self._packed, bitorder="little")[: self.length].sum())

    def __eq__(self, other):
        if not isinstance(other, ChangeRecord) or self.length != other.length:
            return NotImplemented if not isinstance(other, ChangeRecord) else False
        a_s, a_l = self.intervals()
        b_s, b_l = other.intervals()
        return np.array_equal(a_s, b_s) and np.array_equal(a_l, b_l)

    def __repr__(self):
        return f"ChangeRecord(length={self.length}, changed={self.popcount()})"

    # -- file format --------------------------------------------------

    def save(self, path) -> None:
        with open(path, "wb") as f:
            f.write(RECORD_MAGIC)
            f.write(struct.pack("<Q", self.length))
            f.write(self.packed().tobytes())

    @classmethod
    def load(cls, path) -> "ChangeRecord":
        with open(path, "rb") as f:
            data = f.read()
        if data[:8] != RECORD_MAGIC:
            raise FormatError(f"{path}: bad magic, not a change-record file")
        (length,) = struct.unpack_from("<Q", data, 8)
        packed = np.frombuffer(data, dtype=np.uint8, offset=16)
        if packed.size != (length + 7) // 8:
            raise FormatError(f"{path}: payload does not match declared length")
        return cls(length, packed=packed.copy())


def _runs_from_sorted(idx: np.ndarray):
    """Maximal runs (starts, lengths) of a sorted index array."""
    if idx.size == 0:
        return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)
    breaks = np.flatnonzero(np.diff(idx) > 1)
    starts = idx[np.concatenate(([0], breaks + 1))]
    ends = idx[np.concatenate((breaks, [idx.size - 1]))]
    return starts, ends - starts + 1


def _merge_intervals(starts: np.ndarray, lens: np.ndarray):
    """Union of sorted intervals, merging overlap and abutment."""
    ends = starts + lens - 1
    ends_cummax = np.maximum.accumulate(ends)
    new = np.empty(starts.size, dtype=bool)
    new[0] = True
    new[1:] = starts[1:] > ends_cummax[:-1] + 1
    group_starts = starts[new]
    group_ids = np.cumsum(new) - 1
    group_ends = np.maximum.reduceat(ends_cummax, np.flatnonzero(new))
    return group_starts, group_ends - group_starts + 1


def diff_snapshots(a: Snapshot, b: Snapshot) -> ChangeRecord:
    """Bit i = 1 iff the snapshots' leaf digests differ at block i."""
    if a.config != b.config:
        raise ShapeMismatchError("snapshots use different block size or hash algorithm")
    if a.num_blocks != b.num_blocks:
        raise ShapeMismatchError(
            f"snapshots cover different block counts: {a.num_blocks} vs {b.num_blocks}")
    d = a.digest_size
    la = np.frombuffer(a.leaf_hashes, dtype=np.uint8).reshape(a.num_blocks, d)
    lb = np.frombuffer(b.leaf_hashes, dtype=np.uint8).reshape(b.num_blocks, d)
    bits = (la != lb).any(axis=1)
    return ChangeRecord.from_bits(bits)
