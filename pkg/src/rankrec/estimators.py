"""Scikit-learn style estimators wrapping the training loops.

Both estimators follow the usual conventions: constructor arguments are
stored verbatim and validated at fit time, fitted state lives in
trailing-underscore attributes, and ``get_params``/``set_params`` come
from ``BaseEstimator`` so the models compose with the wider ecosystem.
``fit`` takes a ``PartitionedData`` produced by the data module.
"""

import numpy as np
from sklearn.base import BaseEstimator

from .errors import ConfigurationError
from .mainstream import (
    CostProfile,
    cost_weights,
    dis_scores,
    sim_scores,
    util_scores,
)
from .metrics import MetricSpec
from .models import TrainConfig, init_model, predict, predict_pairs
from .trainer import (
    LossSpec,
    evaluate_model,
    select_best_epoch,
    train_ranking,
)
from .validation import check_fitted


class MetricRanker(BaseEstimator):
    """Matrix-factorization recommender trained by direct metric optimization.

    Parameters
    ----------
    loss : str
        "<metric>-<paradigm>" such as "nrbp-listwise" or "ndcg-pairwise".
    p : float
        Persistence for RBP-family metrics.
    select_metric : str or None
        When set, per-epoch validation values of this metric are tracked
        and the model from the best epoch is kept.
    user_weights : dict, array or None
        Optional per-user importance weights for cost-sensitive training.
    """

    def __init__(
        self,
        loss="nrbp-listwise",
        p=0.95,
        n_factors=32,
        learning_rate=0.05,
        epochs=200,
        l2=0.0,
        optimizer="sgd",
        seed=0,
        eval_split="validation",
        select_metric=None,
        nrbp_delta="paper",
        user_weights=None,
    ):
        self.loss = loss
        self.p = p
        self.n_factors = n_factors
        self.learning_rate = learning_rate
        self.epochs = epochs
        self.l2 = l2
        self.optimizer = optimizer
        self.seed = seed
        self.eval_split = eval_split
        self.select_metric = select_metric
        self.nrbp_delta = nrbp_delta
        self.user_weights = user_weights

    def _loss_spec(self):
        return LossSpec.parse(self.loss, p=self.p, nrbp_delta=self.nrbp_delta)

    def _train_config(self):
        return TrainConfig(
            learning_rate=self.learning_rate,
            epochs=self.epochs,
            l2=self.l2,
            seed=self.seed,
            optimizer=self.optimizer,
            latent_dim=self.n_factors,
        )

    def fit(self, partitions, y=None):
        loss = self._loss_spec()
        config = self._train_config()
        snapshot = None
        tracked = None
        if self.select_metric is not None:
            snapshot = MetricSpec(
                self.select_metric,
                self.p if self.select_metric in ("rbp", "nrbp") else None,
            )
            tracked = [snapshot]
        model = init_model(
            partitions.num_users,
            partitions.num_items,
            self.n_factors,
            self.seed,
            variant="mf",
        )
        self.model_, self.history_ = train_ranking(
            model,
            partitions,
            loss,
            config,
            weights=self.user_weights,
            tracked_metrics=tracked,
            eval_split=self.eval_split,
            snapshot_metric=snapshot,
        )
        if snapshot is not None:
            self.best_epoch_ = select_best_epoch(self.history_, snapshot)
        self.partitions_ = partitions
        return self

    def predict(self, X):
        """Scores for an (n, 2) array of (user, item) index pairs."""
        check_fitted(self)
        pairs = np.asarray(X, dtype=np.int64)
        if pairs.ndim != 2 or pairs.shape[1] != 2:
            raise ValueError("X must be an (n, 2) array of (user, item) pairs")
        return predict_pairs(self.model_, pairs[:, 0], pairs[:, 1])

    def score_items(self, user, items):
        """Scores for one user over a list of item indices."""
        check_fitted(self)
        return predict(self.model_, user, items)

    def score(self, partitions=None, metric=None, split="test"):
        """Mean metric over the given partition's candidate sets."""
        check_fitted(self)
        parts = partitions if partitions is not None else self.partitions_
        spec = metric or MetricSpec("ndcg")
        means, _ = evaluate_model(self.model_, getattr(parts, split), [spec])
        return means[spec.label]


class CostSensitiveRanker(BaseEstimator):
    """Biased-factor recommender trained on weighted binary cross-entropy.

    With ``mainstreamness="none"`` this is the unweighted baseline.
    Otherwise per-user weights are derived from the chosen mainstreamness
    definition through an ecdf-composed truncated-Normal cost with the
    given contrast; "util" measures mainstreamness implicitly as the
    baseline model's per-user validation utility, so fitting trains the
    baseline first and then the weighted model.
    """

    def __init__(
        self,
        contrast=10.0,
        mainstreamness="util",
        util_metric="ndcg",
        n_factors=32,
        learning_rate=1e-4,
        epochs=300,
        l2=1e-3,
        batch_size=512,
        seed=0,
    ):
        self.contrast = contrast
        self.mainstreamness = mainstreamness
        self.util_metric = util_metric
        self.n_factors = n_factors
        self.learning_rate = learning_rate
        self.epochs = epochs
        self.l2 = l2
        self.batch_size = batch_size
        self.seed = seed

    def _train_config(self):
        return TrainConfig(
            learning_rate=self.learning_rate,
            epochs=self.epochs,
            batch_size=self.batch_size,
            l2=self.l2,
            seed=self.seed,
            optimizer="adam",
            latent_dim=self.n_factors,
        )

    def _train_once(self, partitions, weights):
        model = init_model(
            partitions.num_users,
            partitions.num_items,
            self.n_factors,
            self.seed,
            variant="fm",
        )
        return train_ranking(
            model,
            partitions,
            LossSpec("bce"),
            self._train_config(),
            weights=weights,
            tracked_metrics=[],
        )

    def fit(self, partitions, y=None):
        if self.mainstreamness not in ("none", "sim", "dis", "util"):
            raise ConfigurationError(
                f"unknown mainstreamness definition {self.mainstreamness!r}"
            )
        baseline, baseline_history = self._train_once(partitions, None)
        self.baseline_model_ = baseline
        self.baseline_history_ = baseline_history
        if self.mainstreamness == "none":
            self.model_, self.history_ = baseline, baseline_history
            self.weights_ = None
            self.partitions_ = partitions
            return self
        if self.mainstreamness == "sim":
            scores = sim_scores(partitions.train)
        elif self.mainstreamness == "dis":
            scores = dis_scores(partitions.train)
        else:
            spec = MetricSpec(self.util_metric)
            _, per_user = evaluate_model(baseline, partitions.validation, [spec])
            scores = util_scores(per_user[spec.label], partitions.num_users)
        self.mainstreamness_scores_ = scores
        self.weights_ = cost_weights(scores, CostProfile(self.contrast))
        self.model_, self.history_ = self._train_once(partitions, self.weights_)
        self.partitions_ = partitions
        return self

    def predict(self, X):
        """Scores for an (n, 2) array of (user, item) index pairs."""
        check_fitted(self)
        pairs = np.asarray(X, dtype=np.int64)
        if pairs.ndim != 2 or pairs.shape[1] != 2:
            raise ValueError("X must be an (n, 2) array of (user, item) pairs")
        return predict_pairs(self.model_, pairs[:, 0], pairs[:, 1])

    def score_items(self, user, items):
        check_fitted(self)
        return predict(self.model_, user, items)

    def score(self, partitions=None, metric=None, split="test"):
        check_fitted(self)
        parts = partitions if partitions is not None else self.partitions_
        spec = metric or MetricSpec("ndcg")
        means, _ = evaluate_model(self.model_, getattr(parts, split), [spec])
        return means[spec.label]
