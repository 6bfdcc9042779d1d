"""Corpus ingestion and labeled synthetic dataset generation.

A corpus is a directory of empirical chain data (chain-list CSVs and/or
change-record files), one chain distribution per record.  Datasets mix
simulated public-filesystem changes (chains drawn from a corpus entry)
with optional hidden-volume writes, label each row clean/dirty, and
build classifier features.

All randomness is derived from (master_seed, run_index, row), so any
row — and therefore any dataset — is reproducible in isolation.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass

import numpy as np

from .chains import ChainDistribution, ChainList, empirical_distribution, \
    extract_chains, load_chain_lists
from .features import FeatureMatrix, MODE_RAW, MODE_TAIL, ReferenceProbs, binomial_sf
from .simulate import DiskModel, HiddenVolumeConfig, PublicChangeConfig, \
    merge_change_records, simulate_hidden_writes, simulate_public_changes, \
    _draw_lengths
from .snapshot import ChangeRecord


class CorpusError(ValueError):
    """Missing, empty, or malformed corpus directory."""


GIB = 1 << 30
DEFAULT_HIDDEN_SIZES = tuple(int(0.25 * i * GIB) for i in range(1, 6))


@dataclass(frozen=True)
class Corpus:
    """Chain distributions extracted from a set of change records."""

    entries: tuple  # of ChainDistribution
    names: tuple  # one per entry, for provenance/diagnostics
    provenance: str = ""

    def __len__(self):
        return len(self.entries)


def load_corpus(path) -> Corpus:
    """Read a corpus directory into one ChainDistribution per record.

    ``*.chains.csv`` files contribute one entry per line (each line is
    one record's chain list); ``*.chgrec`` files contribute one entry
    each.  Entries are ordered by filename, then line.  An optional
    ``manifest.json`` with a "provenance" key is carried along.
    """
    if not os.path.isdir(path):
        raise CorpusError(f"{path}: not a directory")
    entries, names = [], []
    for fname in sorted(os.listdir(path)):
        fpath = os.path.join(path, fname)
        if fname.endswith(".chains.csv"):
            for i, cl in enumerate(load_chain_lists(fpath), start=1):
                if cl.size == 0:
                    raise CorpusError(f"{fpath}:{i}: empty record in corpus")
                entries.append(empirical_distribution(cl))
                names.append(f"{fname}:{i}")
        elif fname.endswith(".chgrec"):
            chains = extract_chains(ChangeRecord.load(fpath))
            if chains.size == 0:
                raise CorpusError(f"{fpath}: record has no changes")
            entries.append(empirical_distribution(chains))
            names.append(fname)
    if len(entries) < 2:
        raise CorpusError(
            f"{path}: found {len(entries)} corpus entries, need at least 2 "
            "(one reference holdout plus one generation entry)")
    provenance = ""
    manifest = os.path.join(path, "manifest.json")
    if os.path.exists(manifest):
        with open(manifest) as f:
            provenance = json.load(f).get("provenance", "")
    return Corpus(tuple(entries), tuple(names), provenance)


@dataclass(frozen=True)
class ExperimentConfig:
    """Full parameterization of synthetic dataset generation."""

    disk: DiskModel = DiskModel(total_blocks=268_435_456,   # 1 TiB
                                free_blocks=26_214_400,     # 100 GiB
                                block_size=4096)
    cover_bytes: int = 25 * GIB
    hidden_sizes: tuple = DEFAULT_HIDDEN_SIZES
    copies: int = 6
    reconstruct_threshold: int = 1
    chain_group: int = 1
    train_size: int = 10_000
    train_dirty_fraction: float = 0.5
    test_size: int = 2_500
    test_dirty_fraction: float = 0.05
    n_features: int = 1
    feature_mode: str = MODE_RAW
    reference_fraction: float = 0.2
    repetitions: int = 100
    master_seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.train_dirty_fraction <= 1.0:
            raise ValueError("train_dirty_fraction must be in [0, 1]")
        if not 0.0 <= self.test_dirty_fraction <= 1.0:
            raise ValueError("test_dirty_fraction must be in [0, 1]")
        if not 0.0 < self.reference_fraction < 1.0:
            raise ValueError("reference_fraction must be in (0, 1)")
        if any(s <= 0 for s in self.hidden_sizes):
            raise ValueError("hidden sizes must be positive")
        if self.feature_mode not in (MODE_RAW, MODE_TAIL):
            raise ValueError(f"unknown feature_mode {self.feature_mode!r}")
        if self.n_features < 1 or self.repetitions < 1:
            raise ValueError("n_features and repetitions must be >= 1")

    def hidden_config(self, hidden_bytes: int) -> HiddenVolumeConfig:
        return HiddenVolumeConfig(hidden_bytes, self.copies,
                                  self.reconstruct_threshold, self.chain_group)

    def to_json(self) -> str:
        d = asdict(self)
        d["hidden_sizes"] = list(self.hidden_sizes)
        return json.dumps(d, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        d = json.loads(text)
        if "disk" in d:
            d["disk"] = DiskModel(**d["disk"])
        if "hidden_sizes" in d:
            d["hidden_sizes"] = tuple(d["hidden_sizes"])
        return cls(**d)


def split_reference_holdout(corpus: Corpus, cfg: ExperimentConfig):
    """(reference entry indices, usable entry indices), by seeded shuffle.

    The reference holdout estimates clean-disk chain probabilities and
    is never used to generate samples.
    """
    n = len(corpus)
    n_ref = max(1, round(cfg.reference_fraction * n))
    if n - n_ref < 1:
        raise CorpusError(f"corpus of {n} entries is too small for a "
                          f"{n_ref}-entry reference holdout")
    perm = np.random.default_rng([cfg.master_seed, 0x5EED]).permutation(n)
    return sorted(int(i) for i in perm[:n_ref]), \
        sorted(int(i) for i in perm[n_ref:])


def reference_probs_from_corpus(corpus: Corpus, indices,
                                n_features: int) -> ReferenceProbs:
    """Pool the holdout entries' chain counts into p_1..p_n."""
    num = np.zeros(n_features)
    den = 0.0
    for i in indices:
        e = corpus.entries[i]
        w = e.total_chains if e.total_chains > 0 else 1.0
        num += w * np.array([e.prob(c) for c in range(1, n_features + 1)])
        den += w
    return ReferenceProbs(num / den, n_features)


def generate_sample(corpus_entry: ChainDistribution, cfg: ExperimentConfig,
                    hidden_bytes, seed) -> ChainList:
    """Chain list of one synthetic disk: public cover plus optional hidden volume.

    Simulates cover_bytes of public chains drawn from the corpus entry,
    then (when hidden_bytes is set) hidden-volume carrier writes into
    the free-space region, ORs the two change records, and extracts the
    chains of the union.
    """
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    ss_pub, ss_hid = ss.spawn(2)
    public = simulate_public_changes(
        cfg.disk, PublicChangeConfig(cfg.cover_bytes, corpus_entry), ss_pub)
    if not hidden_bytes:
        return extract_chains(public)
    hidden = simulate_hidden_writes(cfg.disk, cfg.hidden_config(hidden_bytes), ss_hid)
    return extract_chains(merge_change_records(public, hidden))


@dataclass
class LabeledDataset:
    """Feature rows with ground-truth labels and per-row provenance."""

    features: FeatureMatrix
    entry_ids: np.ndarray    # corpus entry index per row
    hidden_bytes: np.ndarray  # 0 for clean rows
    run_index: int
    master_seed: int

    @property
    def labels(self) -> np.ndarray:
        return self.features.labels


def _row_seed_sequences(master_seed: int, run_index: int, row: int):
    """(metadata, public, hidden) seed sequences for one dataset row."""
    ss_meta, ss_sample = np.random.SeedSequence(
        (master_seed, run_index, row)).spawn(2)
    ss_pub, ss_hid = ss_sample.spawn(2)
    return ss_meta, ss_pub, ss_hid


def _row_chain_counts(corpus: Corpus, cfg: ExperimentConfig, usable,
                      run_index: int, row: int, hidden_bytes, fixed_size: bool,
                      cache: dict):
    """(entry_id, hidden_bytes, total_chains, counts[0..n_features+1]) for one row.

    counts[c] is the number of c-chains for c <= n_features; the last
    slot pools longer chains.  Clean rows skip chain placement entirely
    (placement provably preserves the drawn length multiset), and dirty
    rows reuse their placed public record across hidden sizes; both
    shortcuts yield counts identical to generate_sample's.
    """
    from ._kernels import merged_chain_counts
    cap = cfg.n_features + 1
    ss_meta, ss_pub, ss_hid = _row_seed_sequences(cfg.master_seed, run_index, row)
    rng_meta = np.random.default_rng(ss_meta)
    entry_id = usable[int(rng_meta.integers(len(usable)))]
    if hidden_bytes and not fixed_size:
        hidden_bytes = int(cfg.hidden_sizes[int(rng_meta.integers(len(cfg.hidden_sizes)))])
    if not hidden_bytes:
        hit = cache.get(("clean", row))
        if hit is None:
            rng_pub = np.random.default_rng(ss_pub)
            target = -(-cfg.cover_bytes // cfg.disk.block_size)
            lengths = _draw_lengths(rng_pub, corpus.entries[entry_id], target)
            counts = np.bincount(np.minimum(lengths, cap), minlength=cap + 1)
            hit = (entry_id, int(lengths.size), counts)
            cache[("clean", row)] = hit
        entry_id, total, counts = hit
        return entry_id, 0, total, counts
    hit = cache.get(("public", row))
    if hit is None:
        public = simulate_public_changes(
            cfg.disk, PublicChangeConfig(cfg.cover_bytes, corpus.entries[entry_id]),
            ss_pub)
        hit = (entry_id, public.intervals())
        cache[("public", row)] = hit
    entry_id, (pub_starts, pub_lens) = hit
    hidden = simulate_hidden_writes(cfg.disk, cfg.hidden_config(hidden_bytes), ss_hid)
    counts = merged_chain_counts(pub_starts, pub_lens, hidden, cap)
    return entry_id, int(hidden_bytes), int(counts.sum()), counts


def _assemble(corpus: Corpus, cfg: ExperimentConfig, usable, run_index: int,
              rows, n_dirty: int, hidden_bytes, fixed_size: bool,
              ref: ReferenceProbs | None, cache: dict) -> LabeledDataset:
    nf = cfg.n_features
    n_rows = len(rows)
    feat = np.zeros((n_rows, nf))
    labels = np.zeros(n_rows, dtype=np.int64)
    labels[:n_dirty] = 1
    entry_ids = np.zeros(n_rows, dtype=np.int64)
    sizes = np.zeros(n_rows, dtype=np.int64)
    for i, row in enumerate(rows):
        hb = hidden_bytes if i < n_dirty else 0
        entry_id, size, total, counts = _row_chain_counts(
            corpus, cfg, usable, run_index, row, hb, fixed_size, cache)
        entry_ids[i] = entry_id
        sizes[i] = size
        if cfg.feature_mode == MODE_RAW:
            if total:
                feat[i] = counts[1 : nf + 1] / total
        else:
            for c in range(nf):
                k = min(int(counts[c + 1]), total)
                feat[i, c] = binomial_sf(k, total, float(ref.probs[c])) if total else 0.0
    fm = FeatureMatrix(feat, cfg.feature_mode, labels)
    return LabeledDataset(fm, entry_ids, sizes, run_index, cfg.master_seed)


def generate_dataset(corpus: Corpus, cfg: ExperimentConfig, run_index: int,
                     hidden_bytes: int | None = None, _cache: dict | None = None):
    """(train, test) labeled datasets for one run.

    Dirty counts are exact (first rows of each split are the dirty
    ones): round(train_size * train_dirty_fraction) dirty training rows
    and round(test_size * test_dirty_fraction) dirty test rows.  Dirty
    rows use ``hidden_bytes`` when given (per-size mode) or draw a size
    uniformly from cfg.hidden_sizes.  Reference-holdout corpus entries
    never generate samples.  Deterministic in (corpus, cfg, run_index,
    hidden_bytes).
    """
    ref_idx, usable = split_reference_holdout(corpus, cfg)
    ref = None
    if cfg.feature_mode == MODE_TAIL:
        ref = reference_probs_from_corpus(corpus, ref_idx, cfg.n_features)
    fixed = hidden_bytes is not None
    hb = int(hidden_bytes) if fixed else 1  # sentinel: per-row draw when mixed
    cache = _cache if _cache is not None else {}
    n_train_dirty = round(cfg.train_size * cfg.train_dirty_fraction)
    n_test_dirty = round(cfg.test_size * cfg.test_dirty_fraction)
    train = _assemble(corpus, cfg, usable, run_index,
                      range(cfg.train_size), n_train_dirty, hb, fixed, ref, cache)
    test = _assemble(corpus, cfg, usable, run_index,
                     range(cfg.train_size, cfg.train_size + cfg.test_size),
                     n_test_dirty, hb, fixed, ref, cache)
    return train, test
