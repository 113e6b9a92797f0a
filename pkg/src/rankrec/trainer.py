"""Epoch-driven training loops binding data, models, losses and weights.

Ranking losses iterate users in a per-epoch shuffled order and apply one
optimizer step per user; the pointwise BCE loss iterates shuffled
minibatches of interactions. Per-user weights scale each user's
contribution, so the epoch-summed objective equals the weighted global
loss. Runs are bit-reproducible given the seed.
"""

import time
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, DivergenceError, ProtocolError
from .listwise import LISTWISE_KINDS, listwise_grad, listwise_loss
from .metrics import MetricSpec, RankedJudgments, eval_metric
from .models import STAGE_SHUFFLE, Optimizer, predict, predict_pairs, stage_rng
from .pairwise import PAIRWISE_KINDS, user_lambda_gradients

PARADIGMS = ("pairwise", "listwise", "bce")

NRBP_P_GRID = (0.8, 0.9, 0.95)


@dataclass(frozen=True)
class LossSpec:
    """Training objective: paradigm plus target metric where applicable."""

    paradigm: str
    metric: MetricSpec | None = None
    nrbp_delta: str = "paper"
    temperature: float = 1.0

    def __post_init__(self):
        if self.paradigm not in PARADIGMS:
            raise ConfigurationError(f"unknown paradigm {self.paradigm!r}")
        if self.paradigm == "bce":
            if self.metric is not None:
                raise ConfigurationError("bce loss does not take a target metric")
        else:
            kinds = PAIRWISE_KINDS if self.paradigm == "pairwise" else LISTWISE_KINDS
            if self.metric is None or self.metric.kind not in kinds:
                raise ConfigurationError(
                    f"{self.paradigm} loss requires a target metric among {kinds}"
                )
        if self.nrbp_delta not in ("paper", "swap"):
            raise ConfigurationError("nrbp_delta must be 'paper' or 'swap'")

    @property
    def name(self):
        if self.paradigm == "bce":
            return "bce"
        return f"{self.metric.label}-{self.paradigm}"

    @classmethod
    def parse(cls, name, p=0.95, nrbp_delta="paper"):
        """Build from a CLI-style name: 'bce' or '<metric>-<paradigm>'."""
        if name == "bce":
            return cls("bce")
        try:
            kind, paradigm = name.rsplit("-", 1)
        except ValueError:
            raise ConfigurationError(f"cannot parse loss name {name!r}") from None
        metric = MetricSpec(kind, p if kind in ("rbp", "nrbp") else None)
        return cls(paradigm, metric, nrbp_delta)


@dataclass
class TrainHistory:
    """Per-epoch training loss and validation metric trajectories."""

    losses: list = field(default_factory=list)
    metrics: dict = field(default_factory=dict)
    wall_time: float = 0.0

    @property
    def epochs_run(self):
        return len(self.losses)

    def to_dict(self):
        return {
            "losses": self.losses,
            "metrics": self.metrics,
            "wall_time": self.wall_time,
        }


def select_best_epoch(history, target):
    """Index of the epoch with the best validation value; ties go earliest."""
    values = history.metrics.get(target.label)
    if not values:
        raise ConfigurationError(f"history does not track metric {target.label}")
    return int(np.argmax(values))


def default_tracked_metrics(loss):
    """Metrics worth recording per epoch for the given loss."""
    if loss.paradigm == "bce":
        return [MetricSpec("ndcg")]
    if loss.metric.kind == "nrbp" and loss.paradigm == "listwise":
        # one p-independent run serves every persistence level
        return [MetricSpec("nrbp", p) for p in NRBP_P_GRID]
    return [loss.metric]


def _as_weight_array(weights, num_users):
    if weights is None:
        return None
    arr = np.ones(num_users, dtype=np.float64)
    if isinstance(weights, dict):
        for user, w in weights.items():
            arr[user] = w
    else:
        arr = np.asarray(weights, dtype=np.float64).copy()
        if len(arr) != num_users:
            raise ValueError("weights length does not match user count")
    if not np.all(np.isfinite(arr)) or np.any(arr < 0):
        raise ValueError("weights must be finite and non-negative")
    return arr


def _eval_judgments(partition):
    """Per-user (items, labels) for every user with at least one positive."""
    out = {}
    for user in range(partition.num_users):
        items, labels = partition.user_candidates(user)
        if len(items) and labels.sum() >= 1:
            out[user] = (items, labels)
    return out


def evaluate_model(model, partition, specs):
    """Mean and per-user metric values over a partition's candidate sets."""
    judgments = _eval_judgments(partition)
    per_user = {spec.label: {} for spec in specs}
    for user, (items, labels) in judgments.items():
        scores = predict(model, user, items)
        judged = RankedJudgments(labels, scores)
        for spec in specs:
            per_user[spec.label][user] = eval_metric(spec, judged)
    means = {
        label: float(np.mean(list(vals.values()))) if vals else float("nan")
        for label, vals in per_user.items()
    }
    return means, per_user


def train_ranking(
    model,
    parts,
    loss,
    config,
    weights=None,
    tracked_metrics=None,
    eval_split="validation",
    snapshot_metric=None,
):
    """Train ``model`` in place; returns (model, history).

    ``weights`` maps users to importance factors (absent means all 1).
    ``tracked_metrics`` are evaluated on ``eval_split`` after each epoch;
    when ``snapshot_metric`` is among them the returned model is the
    copy from its best epoch instead of the final state.
    """
    if eval_split not in ("validation", "test"):
        raise ConfigurationError("eval_split must be 'validation' or 'test'")
    eval_part = getattr(parts, eval_split)
    if tracked_metrics is None:
        tracked_metrics = default_tracked_metrics(loss) if len(eval_part) else []
    if tracked_metrics and len(eval_part) == 0:
        raise ProtocolError(
            f"cannot track metrics on an empty {eval_split} partition; "
            "split with val_fraction > 0 or pass eval_split='test'"
        )
    if snapshot_metric is not None and snapshot_metric.label not in {
        m.label for m in tracked_metrics
    }:
        raise ConfigurationError("snapshot_metric must be among tracked_metrics")

    w = _as_weight_array(weights, parts.num_users)
    optimizer = Optimizer(config, model)
    history = TrainHistory(metrics={m.label: [] for m in tracked_metrics})
    eval_judged = _eval_judgments(eval_part) if tracked_metrics else {}
    best_value = -np.inf
    best_model = None
    started = time.perf_counter()

    if loss.paradigm == "bce":
        epoch_fn = _bce_epoch_runner(model, parts, config, w, optimizer)
    else:
        epoch_fn = _ranking_epoch_runner(model, parts, loss, config, w, optimizer)

    for epoch in range(config.epochs):
        try:
            epoch_loss = epoch_fn(epoch)
        except DivergenceError as exc:
            raise DivergenceError("training diverged", epoch) from exc
        if not np.isfinite(epoch_loss):
            raise DivergenceError("non-finite training loss", epoch)
        history.losses.append(float(epoch_loss))
        for spec in tracked_metrics:
            values = [
                eval_metric(
                    spec, RankedJudgments(labels, predict(model, user, items))
                )
                for user, (items, labels) in eval_judged.items()
            ]
            mean = float(np.mean(values))
            history.metrics[spec.label].append(mean)
            if (
                snapshot_metric is not None
                and spec.label == snapshot_metric.label
                and mean > best_value
            ):
                best_value = mean
                best_model = model.copy()
    history.wall_time = time.perf_counter() - started
    if best_model is not None:
        return best_model, history
    return model, history


def _ranking_epoch_runner(model, parts, loss, config, w, optimizer):
    train = parts.train
    metric = loss.metric
    candidates = [train.user_candidates(u) for u in range(train.num_users)]
    active = np.array(
        [
            u
            for u, (items, labels) in enumerate(candidates)
            if labels.sum() >= 1 and labels.sum() < len(labels)
        ],
        dtype=np.int64,
    )
    sum_loss = loss.paradigm == "listwise" and metric.kind == "nrbp"

    def run(epoch):
        order = stage_rng(config.seed, STAGE_SHUFFLE, epoch).permutation(active)
        total = 0.0
        for user in order:
            items, labels = candidates[user]
            scores = predict(model, user, items)
            if not np.all(np.isfinite(scores)):
                raise DivergenceError("non-finite predictions", epoch)
            weight = 1.0 if w is None else w[user]
            if loss.paradigm == "pairwise":
                ascent = user_lambda_gradients(
                    metric, labels, scores, loss.nrbp_delta
                )
                grad = -weight * ascent
                total += weight * _pair_cost_total(labels, scores)
            else:
                judged = RankedJudgments(labels, scores)
                grad = weight * listwise_grad(metric, judged, loss.temperature)
                total += weight * listwise_loss(metric, judged, loss.temperature)
            optimizer.apply_user_gradients(model, user, items, grad)
        # bounded per-user losses are averaged for reporting; the
        # rank-sum loss is kept as a sum since its per-user magnitude
        # is the point
        return total if sum_loss else total / max(len(active), 1)

    return run


def _pair_cost_total(labels, scores):
    y = np.asarray(labels)
    f = np.asarray(scores)
    pos = f[y == 1]
    neg = f[y == 0]
    o = pos[:, None] - neg[None, :]
    # cost for S=+1 pairs: softplus(-o)
    return float(np.logaddexp(0.0, -o).sum())


def _bce_epoch_runner(model, parts, config, w, optimizer):
    train = parts.train
    users = train.users
    items = train.items
    targets = train.relevance.astype(np.float64)
    counts = np.zeros(train.num_users, dtype=np.float64)
    np.add.at(counts, users, 1.0)
    per_user_weight = np.ones(train.num_users) if w is None else w
    # per-interaction weight omega(u)/n_u makes the epoch-summed loss
    # equal the weighted sum of per-user mean BCE losses
    int_weight = per_user_weight[users] / counts[users]

    def run(epoch):
        order = stage_rng(config.seed, STAGE_SHUFFLE, epoch).permutation(len(users))
        total = 0.0
        for start in range(0, len(order), config.batch_size):
            batch = order[start : start + config.batch_size]
            bu, bi, by, bw = users[batch], items[batch], targets[batch], int_weight[batch]
            f = predict_pairs(model, bu, bi)
            if not np.all(np.isfinite(f)):
                raise DivergenceError("non-finite predictions", epoch)
            total += float(
                np.sum(
                    bw
                    * (by * np.logaddexp(0.0, -f) + (1.0 - by) * np.logaddexp(0.0, f))
                )
            )
            grad = bw * (1.0 / (1.0 + np.exp(-f)) - by)
            optimizer.step_interactions(model, bu, bi, grad)
        return total

    return run
