"""Adversarial filtering of instances whose labels are spuriously predictable."""

from .afopt import ExactBiasReport, afopt_search, exact_representation_bias
from .classifiers import (
    LinearModel,
    RbfModel,
    TrainConfig,
    accuracy,
    predict,
    train_linear,
    train_rbf,
)
from .core import (
    EmbeddedDataset,
    FilterResult,
    Partition,
    PhaseRecord,
    PredictabilityTable,
    random_partition,
    update_table,
)
from .evaluation import EvaluationReport, evaluate
from .filtering import FilterConfig, gumbel_topk, run_filter, score_phase, select_removals
from .synthetic import SyntheticDataset, SyntheticSpec, bias_noise_toy, generate

__version__ = "0.1.0"
