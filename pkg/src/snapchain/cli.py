"""Command-line entry point: one subcommand per pipeline stage.

Exit codes: 0 success, 1 usage error, 2 data/processing error.
Relative output paths are resolved against $SNAPCHAIN_OUTPUT_DIR when it
is set.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

OUTPUT_DIR_ENV = "SNAPCHAIN_OUTPUT_DIR"


class _UsageError(SystemExit):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _out_path(path: str) -> str:
    base = os.environ.get(OUTPUT_DIR_ENV)
    if base and not os.path.isabs(path):
        return os.path.join(base, path)
    return path


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="snapchain",
                description="Multiple-snapshot chain-statistics analysis of "
                            "disk images: snapshot, diff, model, detect.")
    p.add_argument("--seed", type=int, default=0,
                   help="master seed for randomized subcommands (default 0)")
    p.add_argument("-v", "--verbose", action="count", default=0,
                   help="increase diagnostic output")
    # --seed/-v are also accepted after the subcommand name
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS,
                        help="master seed for randomized subcommands (default 0)")
    common.add_argument("-v", "--verbose", action="count",
                        default=argparse.SUPPRESS,
                        help="increase diagnostic output")
    sub = p.add_subparsers(dest="command", metavar="command",
                           parser_class=lambda **kw: _Parser(parents=[common], **kw))

    sp = sub.add_parser("snapshot", help="hash a disk image into a snapshot")
    sp.add_argument("image", help="disk image file")
    sp.add_argument("-o", "--output", required=True, help="snapshot file to write")
    sp.add_argument("--block-size", type=int, default=4096,
                    help="block size in bytes, power of two >= 512 (default 4096)")
    sp.add_argument("--hash-id", type=int, default=1,
                    help="hash algorithm id: 1=sha256, 2=blake2b-256 (default 1)")

    sp = sub.add_parser("diff", help="diff two snapshots into a change record")
    sp.add_argument("snap_a")
    sp.add_argument("snap_b")
    sp.add_argument("-o", "--output", required=True, help="change-record file to write")

    sp = sub.add_parser("chains", help="extract chain lengths from a change record")
    sp.add_argument("record", help="change-record file")
    sp.add_argument("-o", "--output", required=True, help="chain-list CSV to write")

    sp = sub.add_parser("dist", help="pool chain lists into an empirical distribution")
    sp.add_argument("chains", nargs="+", help="chain-list CSV files")
    sp.add_argument("-o", "--output", required=True, help="distribution CSV to write")

    sp = sub.add_parser("theory",
                        help="theoretical chain-length distribution for uniform changes")
    sp.add_argument("--n", type=int, required=True, help="array length (free blocks)")
    sp.add_argument("--k", type=int, required=True, help="number of changes")
    sp.add_argument("--c-max", type=int, default=None, help="largest chain length to tabulate")
    sp.add_argument("--method", choices=["exact", "brute", "mc"], default="exact")
    sp.add_argument("--trials", type=int, default=10**6, help="Monte Carlo trials")
    sp.add_argument("-o", "--output", required=True, help="CSV of c,probability rows")

    sp = sub.add_parser("simulate", help="simulate public and/or hidden-volume changes")
    sp.add_argument("--disk-blocks", type=int, required=True)
    sp.add_argument("--free-blocks", type=int, required=True)
    sp.add_argument("--block-size", type=int, default=4096)
    sp.add_argument("--hidden-bytes", type=int, default=0)
    sp.add_argument("--copies", type=int, default=6)
    sp.add_argument("--chain-group", type=int, default=1)
    sp.add_argument("--cover-bytes", type=int, default=0)
    sp.add_argument("--dist", help="source chain distribution CSV (required with --cover-bytes)")
    sp.add_argument("-o", "--output", required=True, help="change-record file to write")

    sp = sub.add_parser("features", help="build classifier features from chain lists")
    sp.add_argument("--mode", choices=["raw", "tail"], default="raw")
    sp.add_argument("--n", type=int, default=1, help="number of chain-length features")
    sp.add_argument("--ref", help="reference distribution CSV (required for tail mode)")
    sp.add_argument("chains", nargs="+", help="chain-list CSV files, one row per record")
    sp.add_argument("-o", "--output", required=True, help="feature CSV to write")

    sp = sub.add_parser("synth", help="generate one run's labeled train/test datasets")
    sp.add_argument("--corpus", required=True, help="corpus directory")
    sp.add_argument("--config", help="ExperimentConfig JSON file (defaults used if omitted)")
    sp.add_argument("--run", type=int, default=0, help="run index (default 0)")
    sp.add_argument("--size", type=int, default=None,
                    help="fixed hidden size in bytes (default: mixed sizes)")
    sp.add_argument("-o", "--output", nargs=2, required=True,
                    metavar=("TRAIN", "TEST"), help="train and test feature CSVs")

    sp = sub.add_parser("experiment", help="run the full repeated detection experiment")
    sp.add_argument("--corpus", required=True, help="corpus directory")
    sp.add_argument("--config", help="ExperimentConfig JSON file (defaults used if omitted)")
    sp.add_argument("-o", "--output", required=True, help="report JSON to write")

    sp = sub.add_parser("report", help="render an experiment report")
    sp.add_argument("report", help="report JSON file")
    sp.add_argument("--format", choices=["csv", "md"], default="csv")
    sp.add_argument("-o", "--output", help="output file (default: stdout)")
    return p


def _load_config(path, seed):
    from .dataset import ExperimentConfig
    if path:
        with open(path) as f:
            cfg = ExperimentConfig.from_json(f.read())
    else:
        cfg = ExperimentConfig()
    if seed and cfg.master_seed == 0:
        cfg = ExperimentConfig(**{**cfg.__dict__, "master_seed": seed})
    return cfg


def _cmd_snapshot(args):
    from .snapshot import SnapshotConfig, snapshot_file
    snap = snapshot_file(args.image, SnapshotConfig(args.block_size, args.hash_id))
    snap.save(_out_path(args.output))
    return 0


def _cmd_diff(args):
    from .snapshot import Snapshot, diff_snapshots
    rec = diff_snapshots(Snapshot.load(args.snap_a), Snapshot.load(args.snap_b))
    rec.save(_out_path(args.output))
    return 0


def _cmd_chains(args):
    from .chains import extract_chains, save_chain_lists
    from .snapshot import ChangeRecord
    chains = extract_chains(ChangeRecord.load(args.record))
    save_chain_lists([chains], _out_path(args.output))
    return 0


def _cmd_dist(args):
    from .chains import empirical_distribution, load_chain_lists
    pooled = []
    for path in args.chains:
        pooled.extend(load_chain_lists(path))
    empirical_distribution(pooled).save(_out_path(args.output))
    return 0


def _cmd_theory(args):
    from .chains import ChainDistribution
    from .theory import (UniformChangeModel, bruteforce_distribution,
                         theoretical_distribution)
    model = UniformChangeModel(args.n, args.k)
    c_max = args.c_max if args.c_max is not None else args.k
    if args.method == "brute":
        probs = bruteforce_distribution(model)
        dist = ChainDistribution.from_probs(
            {c: float(probs[c]) for c in range(1, min(c_max, args.k) + 1)
             if probs[c] > 0})
    elif args.method == "mc":
        dist = theoretical_distribution(model, c_max, partition_budget=0,
                                        mc_trials=args.trials, seed=args.seed)
    else:
        dist = theoretical_distribution(model, c_max)
    with open(_out_path(args.output), "w") as f:
        f.write("c,probability\n")
        for c in dist.support():
            f.write(f"{int(c)},{dist.prob(int(c))!r}\n")
    return 0


def _cmd_simulate(args):
    from .chains import ChainDistribution
    from .simulate import (DiskModel, HiddenVolumeConfig, PublicChangeConfig,
                           merge_change_records, simulate_hidden_writes,
                           simulate_public_changes)
    from .snapshot import ChangeRecord
    disk = DiskModel(args.disk_blocks, args.free_blocks, args.block_size)
    ss = np.random.SeedSequence(args.seed)
    ss_pub, ss_hid = ss.spawn(2)
    if args.cover_bytes:
        if not args.dist:
            raise ValueError("--cover-bytes requires --dist")
        dist = ChainDistribution.load(args.dist)
        record = simulate_public_changes(
            disk, PublicChangeConfig(args.cover_bytes, dist), ss_pub)
    else:
        record = ChangeRecord(disk.total_blocks,
                              starts=np.empty(0, dtype=np.int64),
                              lens=np.empty(0, dtype=np.int64))
    if args.hidden_bytes:
        hidden = simulate_hidden_writes(
            disk, HiddenVolumeConfig(args.hidden_bytes, args.copies,
                                     chain_group=args.chain_group), ss_hid)
        record = merge_change_records(record, hidden)
    record.save(_out_path(args.output))
    return 0


def _cmd_features(args):
    from .chains import ChainDistribution, load_chain_lists
    from .features import (ReferenceProbs, build_features_raw, build_features_tail)
    records = []
    for path in args.chains:
        records.extend(load_chain_lists(path))
    if args.mode == "tail":
        if not args.ref:
            raise ValueError("tail mode requires --ref")
        dist = ChainDistribution.load(args.ref)
        ref = ReferenceProbs(
            np.array([dist.prob(c) for c in range(1, args.n + 1)]), args.n)
        fm = build_features_tail(records, ref)
    else:
        fm = build_features_raw(records, args.n)
    fm.save(_out_path(args.output))
    return 0


def _cmd_synth(args):
    from .dataset import generate_dataset, load_corpus
    corpus = load_corpus(args.corpus)
    cfg = _load_config(args.config, args.seed)
    train_ds, test_ds = generate_dataset(corpus, cfg, args.run,
                                         hidden_bytes=args.size)
    train_ds.features.save(_out_path(args.output[0]))
    test_ds.features.save(_out_path(args.output[1]))
    return 0


def _cmd_experiment(args):
    from .classifier import run_experiment
    from .dataset import load_corpus
    corpus = load_corpus(args.corpus)
    cfg = _load_config(args.config, args.seed)
    report = run_experiment(corpus, cfg)
    with open(_out_path(args.output), "w") as f:
        f.write(report.to_json())
    return 0


def _cmd_report(args):
    from .classifier import ExperimentReport, render_csv, render_markdown
    with open(args.report) as f:
        report = ExperimentReport.from_json(f.read())
    text = render_csv(report) if args.format == "csv" else render_markdown(report)
    if args.output:
        with open(_out_path(args.output), "w") as f:
            f.write(text)
    else:
        sys.stdout.write(text)
    return 0


_COMMANDS = {
    "snapshot": _cmd_snapshot,
    "diff": _cmd_diff,
    "chains": _cmd_chains,
    "dist": _cmd_dist,
    "theory": _cmd_theory,
    "simulate": _cmd_simulate,
    "features": _cmd_features,
    "synth": _cmd_synth,
    "experiment": _cmd_experiment,
    "report": _cmd_report,
}


def dispatch(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else 1
    if not args.command:
        parser.print_usage(sys.stderr)
        return 1
    try:
        return _COMMANDS[args.command](args)
    except (OSError, ValueError, KeyError) as e:
        print(f"snapchain {args.command}: {e}", file=sys.stderr)
        if args.verbose:
            raise
        return 2


def main() -> None:
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
