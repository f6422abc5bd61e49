"""Dual-server Byzantine-resilient federated aggregation with group scoring."""

from .errors import ConfigError, InvalidInputError, ShapeError, UnderQuorumError
from .model_core import SharePair, l2_dist_sq, mean_vectors, reconstruct, split_update
from .grouping import (Cpg, Pcm, SelectionResult, build_cpg, build_pcm, choose_k, group_count,
                       group_distances, group_share_sums, select_participants)
from .tasks import Task, evaluate, loss_and_grad, make_task
from .clients import AdversarySpec, corrupt_update, flip_labels, local_train
from .protocol import (CreditLedger, RoundConfig, RoundTranscript, credit_update, dsfl_round,
                       run_training)
from .baselines import coord_median, fedavg, krum, lsfl_round, trimmed_mean
from .analysis import lsfl_reconstruct, pcm_rank, recovery_audit
from .harness import ExperimentConfig, MetricsRow, compare_matrix, overhead_report, run_experiment

__version__ = "0.1.0"
