"""User mainstreamness measures and cost-sensitive weight construction.

Mainstreamness is quantified explicitly from interaction overlap (mean
Jaccard to all other users, or cosine to the average profile) or
implicitly from the validation utility of an unweighted baseline model.
Raw scores are passed through their empirical CDF and mapped by a
truncated-Normal cost curve whose variance realizes a chosen contrast
between the least and most mainstream user; weights are rescaled to
mean 1 so the effective learning rate is comparable across contrasts.
"""

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigurationError
from .metrics import ecdf

DEFINITIONS = ("sim", "dis", "util")


@dataclass(frozen=True)
class MainstreamnessScores:
    """Per-user mainstreamness values under one definition."""

    definition: str
    values: np.ndarray

    def __post_init__(self):
        if self.definition not in DEFINITIONS:
            raise ConfigurationError(f"unknown mainstreamness definition {self.definition!r}")
        vals = np.asarray(self.values, dtype=np.float64)
        if not np.all(np.isfinite(vals)):
            raise ValueError("mainstreamness values must be finite")
        object.__setattr__(self, "values", vals)


@dataclass(frozen=True)
class CostProfile:
    """Truncated-Normal cost curve parameterized by its 0-vs-1 contrast.

    The density of N(0, sigma^2) restricted to [0, 1] with
    sigma = 1 / sqrt(2 ln c) satisfies cost(0) / cost(1) = c exactly;
    the truncation normalizer cancels in the ratio, so the curve is kept
    unnormalized here and rescaled to mean weight 1 downstream.
    """

    contrast: float
    sigma: float = field(init=False)

    def __post_init__(self):
        if self.contrast < 1.0:
            raise ConfigurationError("contrast must be >= 1")
        sigma = (
            np.inf
            if self.contrast == 1.0
            else 1.0 / np.sqrt(2.0 * np.log(self.contrast))
        )
        object.__setattr__(self, "sigma", float(sigma))

    def cost(self, x):
        """Unnormalized cost at normalized mainstreamness x in [0, 1]."""
        x = np.asarray(x, dtype=np.float64)
        if np.isinf(self.sigma):
            return np.ones_like(x)
        return np.exp(-(x**2) / (2.0 * self.sigma**2))


def sim_scores(train):
    """Mean Jaccard similarity of each user's relevant items to all others."""
    if train.num_users < 2:
        raise ValueError("mainstreamness needs at least two users")
    sets = [train.relevant_items(u) for u in range(train.num_users)]
    sizes = np.array([len(s) for s in sets], dtype=np.float64)
    if np.any(sizes == 0):
        raise ValueError("every user needs at least one relevant item")
    binary = _binary_matrix(train)
    inter = binary @ binary.T
    union = sizes[:, None] + sizes[None, :] - inter
    jac = inter / union
    np.fill_diagonal(jac, 0.0)
    values = jac.sum(axis=1) / (train.num_users - 1)
    return MainstreamnessScores("sim", values)


def dis_scores(train):
    """Cosine similarity of each user's relevance vector to the mean vector."""
    if train.num_users < 2:
        raise ValueError("mainstreamness needs at least two users")
    binary = _binary_matrix(train)
    norms = np.linalg.norm(binary, axis=1)
    mean_vec = binary.mean(axis=0)
    mean_norm = np.linalg.norm(mean_vec)
    if mean_norm == 0 or np.any(norms == 0):
        raise ValueError("cosine mainstreamness undefined for empty profiles")
    values = (binary @ mean_vec) / (norms * mean_norm)
    return MainstreamnessScores("dis", values)


def util_scores(per_user_metric, num_users):
    """Wrap baseline validation utility as implicit mainstreamness."""
    values = np.empty(num_users, dtype=np.float64)
    for user in range(num_users):
        if user not in per_user_metric:
            raise ValueError(f"missing validation utility for user {user}")
        values[user] = per_user_metric[user]
    return MainstreamnessScores("util", values)


def _binary_matrix(train):
    mat = np.zeros((train.num_users, train.num_items))
    rel = train.relevance == 1
    mat[train.users[rel], train.items[rel]] = 1.0
    return mat


def cost_weights(scores, profile):
    """Per-user weights: cost of the ecdf-normalized mainstreamness, mean 1.

    Ranks (not raw values) feed the cost curve, so any strictly
    increasing transform of the scores yields identical weights and the
    full co-domain of the curve is used. Ties share an ecdf value and
    therefore a weight.
    """
    normalized = ecdf(scores.values)
    weights = profile.cost(normalized)
    weights = weights / weights.mean()
    return {user: float(w) for user, w in enumerate(weights)}


def write_user_values(path, values, header=("user", "value")):
    """Export per-user values (weights, mainstreamness) as two-column text."""
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        if isinstance(values, dict):
            rows = sorted(values.items())
        else:
            rows = enumerate(np.asarray(values).tolist())
        for user, value in rows:
            writer.writerow([user, value])
