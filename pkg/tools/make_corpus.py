#!/usr/bin/env python3
"""Regenerate the bundled synthetic corpus (src/snapchain/data/corpus).

Each corpus entry models one observed clean change record: a chain list
whose empirical distribution has a dominant singleton probability
(0.25-0.55), a small 2-chain probability (~0.1), and a heavy geometric
tail giving mean chain lengths around 20-35 blocks — the qualitative
shape of real filesystem write traces.  Deterministic: rerunning this
script reproduces the shipped files byte for byte.
"""

import json
import os

import numpy as np

N_ENTRIES = 40
CHAINS_PER_ENTRY = 4000
SEED = 20240917

OUT_DIR = os.path.join(os.path.dirname(__file__), os.pardir,
                       "src", "snapchain", "data", "corpus")


def entry_distribution(rng):
    """(lengths, probs) for one synthetic clean-disk chain distribution."""
    p1 = rng.uniform(0.25, 0.55)
    p2 = rng.uniform(0.07, 0.13)
    target_mean = rng.uniform(20.0, 35.0)
    tail_mass = 1.0 - p1 - p2
    tail_mean = (target_mean - p1 - 2.0 * p2) / tail_mass
    # geometric tail on lengths >= 3 with the required conditional mean
    lengths = np.arange(3, 500)
    ratio = 1.0 - 1.0 / (tail_mean - 2.0)
    tail = ratio ** (lengths - 3)
    tail *= tail_mass / tail.sum()
    return (np.concatenate([[1, 2], lengths]),
            np.concatenate([[p1, p2], tail]))


def main():
    os.makedirs(OUT_DIR, exist_ok=True)
    rng = np.random.default_rng(SEED)
    names = []
    for i in range(N_ENTRIES):
        lengths, probs = entry_distribution(rng)
        chains = rng.choice(lengths, size=CHAINS_PER_ENTRY, p=probs)
        name = f"entry_{i:02d}.chains.csv"
        with open(os.path.join(OUT_DIR, name), "w") as f:
            f.write(",".join(str(int(c)) for c in chains))
            f.write("\n")
        names.append(name)
    manifest = {
        "provenance": "synthetic clean-disk chain records generated by "
                      "tools/make_corpus.py (seed %d)" % SEED,
        "entries": names,
    }
    with open(os.path.join(OUT_DIR, "manifest.json"), "w") as f:
        json.dump(manifest, f, indent=2)
        f.write("\n")
    print(f"wrote {len(names)} entries to {os.path.abspath(OUT_DIR)}")


if __name__ == "__main__":
    main()
