"""Similarity learning under label noise: pair graphs, noise models, DIBS bounds,
a numpy Siamese MLP, and desk-scale experiment drivers."""
from .datasets import (DatasetError, IdxFormatError, LabeledDataset, SyntheticSpec,
                       generate_synthetic, load_idx)
from .dibs import (ConsistencyReport, DibsBounds, OracleSizeError, collapse_positive,
                   consistency_report, count_inconsistent_2paths, dibs_bounds, e_diff, e_sim,
                   estimate_error_dibs, min_violation_oracle)
from .noise import (NoiseSpec, apply_pln, apply_sln, calibrate_q, effective_noise_pln,
                    effective_noise_sln, empirical_effective_noise)
from .pairgraph import (PairDataset, ScenarioConfig, SimilarityGraph, build_scenario,
                        create_balanced_pairs, graph_of, reduce_dataset)
from .snn import (LossSpec, MlpConfig, RunRecord, SiameseMLP, TrainConfig, adam_step,
                  gradient_check, train)

__version__ = "0.1.0"
