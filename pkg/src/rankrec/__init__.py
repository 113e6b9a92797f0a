"""Learning-to-rank recommendation toolkit.

Trains latent-factor recommenders by direct optimization of ranking
metrics (pairwise lambda gradients and listwise smoothed-rank losses)
or weighted binary cross-entropy, mitigates mainstream bias through
cost-sensitive per-user weights, and ships the experiment tooling:
per-user splits, negative sampling, group-wise evaluation and bias
reports.
"""

from .data import (
    Interaction,
    InteractionSet,
    PartitionedData,
    SplitSpec,
    binarize,
    filter_min_relevant,
    load_interactions,
    read_partitions,
    sample_negatives,
    split,
    write_partitions,
)
from .errors import (
    BinningError,
    ConfigurationError,
    DataFormatError,
    DivergenceError,
    EmptyDatasetError,
    ProtocolError,
    RankrecError,
    SamplingInfeasibleError,
    UndefinedMetricError,
)
from .estimators import CostSensitiveRanker, MetricRanker
from .listwise import listwise_grad, listwise_loss, smooth_ranks
from .mainstream import (
    CostProfile,
    MainstreamnessScores,
    cost_weights,
    dis_scores,
    sim_scores,
    util_scores,
)
from .metrics import (
    MetricSpec,
    RankedJudgments,
    ecdf,
    eval_metric,
    hard_ranks,
    rmse,
)
from .models import (
    FactorModel,
    TrainConfig,
    apply_gradients,
    bce_loss,
    init_model,
    load_model,
    predict,
    save_model,
)
from .pairwise import PairContext, lambda_gradient, pair_cost, swap_delta
from .report import (
    EvalReport,
    bin_users,
    gain_delta,
    improvement_table,
    per_user_eval,
    reliability,
    val_test_correlation,
)
from .trainer import LossSpec, TrainHistory, evaluate_model, select_best_epoch, train_ranking

__version__ = "0.1.0"

__all__ = [
    "BinningError",
    "ConfigurationError",
    "CostProfile",
    "CostSensitiveRanker",
    "DataFormatError",
    "DivergenceError",
    "EmptyDatasetError",
    "EvalReport",
    "FactorModel",
    "Interaction",
    "InteractionSet",
    "LossSpec",
    "MainstreamnessScores",
    "MetricRanker",
    "MetricSpec",
    "PairContext",
    "PartitionedData",
    "ProtocolError",
    "RankedJudgments",
    "RankrecError",
    "SamplingInfeasibleError",
    "SplitSpec",
    "TrainConfig",
    "TrainHistory",
    "UndefinedMetricError",
    "apply_gradients",
    "bce_loss",
    "bin_users",
    "binarize",
    "cost_weights",
    "dis_scores",
    "ecdf",
    "eval_metric",
    "evaluate_model",
    "filter_min_relevant",
    "gain_delta",
    "hard_ranks",
    "improvement_table",
    "init_model",
    "lambda_gradient",
    "listwise_grad",
    "listwise_loss",
    "load_interactions",
    "load_model",
    "pair_cost",
    "per_user_eval",
    "predict",
    "read_partitions",
    "reliability",
    "rmse",
    "sample_negatives",
    "save_model",
    "select_best_epoch",
    "sim_scores",
    "smooth_ranks",
    "split",
    "swap_delta",
    "train_ranking",
    "util_scores",
    "val_test_correlation",
    "write_partitions",
]
