"""Rank computation and ranking-quality metrics over binary relevance.

Ranks follow the pairwise-comparison convention: an item's rank is one
plus the number of items scored strictly higher, so tied scores share a
rank. All metric formulas are evaluated literally under that convention;
``hard_ranks(..., tie_break="index")`` gives the strict variant used by
sorting-based paths, and both agree whenever scores are distinct.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, UndefinedMetricError
from .validation import as_binary_labels, as_score_vector, check_same_length

RANKING_KINDS = ("ndcg", "ap", "rr", "rbp", "nrbp")
PERSISTENCE_KINDS = ("rbp", "nrbp")
METRIC_KINDS = RANKING_KINDS + ("urmse",)


@dataclass(frozen=True)
class MetricSpec:
    """Which metric to evaluate, with persistence p for RBP-family kinds."""

    kind: str
    p: float | None = None

    def __post_init__(self):
        if self.kind not in METRIC_KINDS:
            raise ConfigurationError(f"unknown metric kind {self.kind!r}")
        if self.kind in PERSISTENCE_KINDS:
            if self.p is None or not 0.0 < self.p < 1.0:
                raise ConfigurationError(
                    f"{self.kind} requires a persistence p in (0, 1), got {self.p!r}"
                )
        elif self.p is not None:
            raise ConfigurationError(f"{self.kind} does not take a persistence p")

    @property
    def label(self):
        if self.kind in PERSISTENCE_KINDS:
            return f"{self.kind}@{self.p:g}"
        return self.kind


@dataclass(frozen=True)
class RankedJudgments:
    """A user's candidate list: binary labels, predicted scores, positive count."""

    labels: np.ndarray
    scores: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "labels", as_binary_labels(self.labels))
        object.__setattr__(self, "scores", as_score_vector(self.scores))
        check_same_length(self.labels, self.scores, "labels", "scores")

    @property
    def positives(self):
        return int(self.labels.sum())

    def __len__(self):
        return len(self.labels)


def hard_ranks(scores, tie_break="shared"):
    """Integer ranks from pairwise comparison: R_i = 1 + #{j : f_j > f_i}.

    ``tie_break="index"`` instead assigns distinct ranks 1..N, breaking
    score ties by lower item index first.
    """
    f = as_score_vector(scores)
    n = len(f)
    if tie_break == "shared":
        ordered = np.sort(f)
        greater = n - np.searchsorted(ordered, f, side="right")
        return (greater + 1).astype(np.int64)
    if tie_break == "index":
        order = np.lexsort((np.arange(n), -f))
        ranks = np.empty(n, dtype=np.int64)
        ranks[order] = np.arange(1, n + 1)
        return ranks
    raise ConfigurationError(f"unknown tie_break {tie_break!r}")


def ideal_dcg(positives):
    """Normalizer for nDCG with the given number of relevant items."""
    return float(np.sum(1.0 / np.log2(np.arange(1, positives + 1) + 1.0)))


def ideal_rbp(positives, p):
    """Maximum unnormalized RBP mass: (1 - p) * sum_{i<=m} p^(i-1) = 1 - p^m."""
    return 1.0 - p**positives


def metric_from_ranks(kind, labels, ranks, p=None):
    """Evaluate a ranking metric given labels and (possibly shared) ranks."""
    y = np.asarray(labels, dtype=np.float64)
    r = np.asarray(ranks, dtype=np.float64)
    m = int(y.sum())
    if m < 1:
        raise UndefinedMetricError(f"{kind} undefined with zero relevant items")
    rel_ranks = r[y == 1.0]
    if kind == "ndcg":
        dcg = float(np.sum(1.0 / np.log2(rel_ranks + 1.0)))
        return dcg / ideal_dcg(m)
    if kind == "ap":
        ordered = np.sort(rel_ranks)
        at_or_above = np.searchsorted(ordered, rel_ranks, side="right")
        return float(np.sum(at_or_above / rel_ranks)) / m
    if kind == "rr":
        # Only relevant items with no relevant item strictly above them
        # survive the product; under shared ranks several may.
        best = rel_ranks.min()
        return float(np.sum(rel_ranks == best)) / best
    if kind == "rbp":
        return (1.0 - p) * float(np.sum(p ** (rel_ranks - 1.0)))
    if kind == "nrbp":
        rbp = (1.0 - p) * float(np.sum(p ** (rel_ranks - 1.0)))
        return rbp / ideal_rbp(m, p)
    raise ConfigurationError(f"unknown ranking metric kind {kind!r}")


def eval_metric(spec, judged):
    """Score one user's ranked judgments under the given metric spec."""
    if spec.kind == "urmse":
        return rmse(judged.scores, judged.labels.astype(np.float64))
    ranks = hard_ranks(judged.scores)
    return metric_from_ranks(spec.kind, judged.labels, ranks, spec.p)


def rmse(predicted, actual):
    """Root-mean-square error between two equal-length vectors."""
    pred = np.asarray(predicted, dtype=np.float64)
    act = np.asarray(actual, dtype=np.float64)
    check_same_length(pred, act, "predicted", "actual")
    if len(pred) == 0:
        raise ValueError("rmse undefined on empty vectors")
    return float(np.sqrt(np.mean((act - pred) ** 2)))


def ecdf(values):
    """Empirical CDF evaluated at each input: out_i = #{j : v_j <= v_i} / n."""
    v = as_score_vector(values, "values")
    if len(v) == 0:
        raise ValueError("ecdf undefined on empty input")
    ordered = np.sort(v)
    return np.searchsorted(ordered, v, side="right") / len(v)
