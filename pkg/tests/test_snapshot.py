import hashlib
import io

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from snapchain.snapshot import (ChangeRecord, FormatError, ShapeMismatchError,
                                Snapshot, SnapshotConfig, diff_snapshots,
                                merkle_root, take_snapshot)

BS = 512  # smallest legal block size keeps test images tiny
CFG = SnapshotConfig(block_size=BS)


def snap(data: bytes, cfg=CFG) -> Snapshot:
    return take_snapshot(io.BytesIO(data), cfg)


def test_config_validation():
    with pytest.raises(ValueError):
        SnapshotConfig(block_size=511)
    with pytest.raises(ValueError):
        SnapshotConfig(block_size=768)
    with pytest.raises(FormatError):
        SnapshotConfig(hash_algorithm_id=99)
    SnapshotConfig(block_size=4096, hash_algorithm_id=2)


def test_snapshot_determinism():
    data = np.random.default_rng(0).bytes(BS * 7)
    a, b = snap(data), snap(data)
    assert a.leaf_hashes == b.leaf_hashes
    assert a.root == b.root


def test_single_block_image():
    s = snap(b"\xaa" * BS)
    assert s.num_blocks == 1
    # root = interior-tag hash of the single leaf
    leaf = hashlib.sha256(b"\x00" + b"\xaa" * BS).digest()
    assert s.leaf_hashes == leaf
    assert s.root == hashlib.sha256(b"\x01" + leaf).digest()


def test_partial_block_zero_padded():
    # a partial trailing block hashes identically to its zero-padded form
    s1 = snap(b"\xbb" * (BS + 10))
    s2 = snap(b"\xbb" * BS + b"\xbb" * 10 + b"\x00" * (BS - 10))
    assert s1.num_blocks == 2
    assert s1.leaf_hashes == s2.leaf_hashes


def test_empty_image_rejected():
    with pytest.raises(ValueError):
        snap(b"")


def test_merkle_tree_shapes():
    l = [hashlib.sha256(bytes([i])).digest() for i in range(5)]
    h = lambda *parts: hashlib.sha256(b"\x01" + b"".join(parts)).digest()
    assert merkle_root(l[:1]) == h(l[0])
    assert merkle_root(l[:2]) == h(l[0], l[1])
    # odd node promoted unchanged
    assert merkle_root(l[:3]) == h(h(l[0], l[1]), l[2])
    assert merkle_root(l[:5]) == h(h(h(l[0], l[1]), h(l[2], l[3])), l[4])
    with pytest.raises(ValueError):
        merkle_root([])


def test_single_byte_mutation():
    rng = np.random.default_rng(1)
    data = bytearray(rng.bytes(BS * 64))
    mutated = bytearray(data)
    mutated[5 * BS + 17] ^= 0xFF
    a, b = snap(bytes(data)), snap(bytes(mutated))
    differing = [i for i in range(64) if a.leaf(i) != b.leaf(i)]
    assert differing == [5]
    assert a.root != b.root
    rec = diff_snapshots(a, b)
    assert rec.popcount() == 1
    starts, lens = rec.intervals()
    assert starts.tolist() == [5] and lens.tolist() == [1]


def test_diff_identity():
    s = snap(np.random.default_rng(2).bytes(BS * 9))
    rec = diff_snapshots(s, s)
    assert rec.length == 9 and rec.popcount() == 0


def test_diff_shape_mismatch():
    a = snap(b"\x01" * BS * 2)
    b = snap(b"\x01" * BS * 3)
    with pytest.raises(ShapeMismatchError):
        diff_snapshots(a, b)
    c = snap(b"\x01" * BS * 2, SnapshotConfig(block_size=BS, hash_algorithm_id=2))
    with pytest.raises(ShapeMismatchError):
        diff_snapshots(a, c)


@settings(max_examples=50, deadline=None)
@given(st.data())
def test_diff_matches_mutation_set(data):
    n_blocks = data.draw(st.integers(1, 40))
    mutated_blocks = data.draw(st.sets(st.integers(0, n_blocks - 1)))
    rng = np.random.default_rng(data.draw(st.integers(0, 2**32 - 1)))
    img = bytearray(rng.bytes(BS * n_blocks))
    img2 = bytearray(img)
    for b in mutated_blocks:
        off = b * BS + int(rng.integers(BS))
        img2[off] = (img2[off] + 1) % 256
    rec = diff_snapshots(snap(bytes(img)), snap(bytes(img2)))
    bits = np.unpackbits(rec.packed(), bitorder="little")[: rec.length]
    assert set(np.flatnonzero(bits).tolist()) == mutated_blocks


def test_snapshot_file_roundtrip(tmp_path):
    s = take_snapshot(io.BytesIO(b"\x07" * BS * 3), CFG, source_id="disk-α",
                      captured_at=1234567890)
    path = tmp_path / "a.snap"
    s.save(path)
    t = Snapshot.load(path)
    assert t == s
    with pytest.raises(FormatError):
        (tmp_path / "junk").write_bytes(b"NOTASNAP" + b"\x00" * 30)
        Snapshot.load(tmp_path / "junk")


def test_change_record_roundtrip(tmp_path):
    bits = np.zeros(37, dtype=np.uint8)
    bits[[0, 5, 6, 7, 36]] = 1
    rec = ChangeRecord.from_bits(bits)
    path = tmp_path / "r.chgrec"
    rec.save(path)
    back = ChangeRecord.load(path)
    assert back == rec
    assert back.popcount() == 5
    starts, lens = back.intervals()
    assert starts.tolist() == [0, 5, 36]
    assert lens.tolist() == [1, 3, 1]


def test_change_record_constructors_agree():
    bits = np.array([1, 0, 1, 1, 0, 0, 1], dtype=np.uint8)
    a = ChangeRecord.from_bits(bits)
    b = ChangeRecord.from_indices([0, 2, 3, 6], 7)
    c = ChangeRecord.from_intervals([0, 2, 6], [1, 2, 1], 7)
    assert a == b == c
    assert np.array_equal(a.packed(), c.packed())


def test_change_record_validation():
    with pytest.raises(ValueError):
        ChangeRecord.from_indices([7], 7)
    with pytest.raises(ValueError):
        ChangeRecord.from_intervals([5], [3], 7)
    with pytest.raises(ValueError):
        ChangeRecord.from_intervals([0], [0], 7)


def test_intervals_merge_overlap_and_abutment():
    rec = ChangeRecord.from_intervals([0, 2, 10, 4], [2, 3, 1, 2], 20)
    starts, lens = rec.intervals()
    assert starts.tolist() == [0, 10]
    assert lens.tolist() == [6, 1]
