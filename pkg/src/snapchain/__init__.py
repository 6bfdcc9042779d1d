"""snapchain: multiple-snapshot chain-statistics analysis of disk images.

Pipeline: snapshot disk images (Merkle-hashed blocks) -> diff into
change records -> extract run-length chain statistics -> compare against
the exact uniform-change model -> build features and train a detector
for hidden-volume writes in free space.
"""

from .snapshot import (ChangeRecord, FormatError, ShapeMismatchError, Snapshot,
                       SnapshotConfig, diff_snapshots, merkle_root,
                       snapshot_file, take_snapshot)
from .chains import (ChainDistribution, EmptyDistributionError, empirical_distribution,
                     extract_chains, load_chain_lists, save_chain_lists)
from .theory import (BudgetExceededError, UniformChangeModel,
                     chain_probability_bruteforce, chain_probability_exact,
                     chain_probability_montecarlo, theoretical_distribution)
from .simulate import (CapacityError, DiskModel, HiddenVolumeConfig,
                       PlacementSaturationError, PublicChangeConfig,
                       estimate_survival, merge_change_records,
                       simulate_hidden_writes, simulate_public_changes)
from .features import (FeatureMatrix, ReferenceProbs, binomial_sf,
                       build_features_raw, build_features_tail,
                       estimate_reference_probs)
from .dataset import (Corpus, CorpusError, ExperimentConfig, LabeledDataset,
                      generate_dataset, generate_sample, load_corpus,
                      split_reference_holdout)
from .classifier import (ExperimentReport, LogisticModel, Metrics, TrainingError,
                         evaluate, run_experiment, train)

__version__ = "0.1.0"
