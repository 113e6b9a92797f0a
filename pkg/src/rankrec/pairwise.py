"""Lambda gradients for pairwise metric optimization.

A pair's gradient is the RankNet cost derivative scaled by the change in
the target metric caused by swapping the two items' ranks. For the
RBP-family metric the published closed form keeps only the relevant
item's geometric term; ``nrbp_delta="swap"`` selects the literal
before/after difference instead (the two disagree; see swap_delta).
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError
from .metrics import hard_ranks, ideal_dcg, metric_from_ranks

PAIRWISE_KINDS = ("ndcg", "ap", "rr", "nrbp")


@dataclass(frozen=True)
class PairContext:
    """One (item_i, item_j) training pair within a user's candidate list.

    ``labels`` and ``ranks`` are the full per-user snapshot the pair was
    drawn from; ``item_i``/``item_j`` index into them. Pairs require
    unlike labels, so S = sign(y_i - y_j) is +1 or -1.
    """

    labels: np.ndarray
    ranks: np.ndarray
    item_i: int
    item_j: int
    o: float

    def __post_init__(self):
        if self.labels[self.item_i] == self.labels[self.item_j]:
            raise ValueError("pair items must have unlike labels")

    @property
    def s(self):
        return 1.0 if self.labels[self.item_i] > self.labels[self.item_j] else -1.0

    @property
    def positives(self):
        return int(np.asarray(self.labels).sum())


def pair_cost(s, o):
    """RankNet pair cost and its derivative with respect to o = f_i - f_j.

    cost = -s*o + ln(1 + e^(s*o)) = softplus(-s*o), stable for large |o|.
    """
    z = s * o
    cost = np.logaddexp(0.0, -z)
    d_cost = -s / (1.0 + np.exp(np.minimum(z, 700.0)))
    return float(cost), float(d_cost)


def swap_delta(spec, ctx, nrbp_delta="paper"):
    """|change in the user's metric| when the two items exchange ranks.

    All other items keep their ranks. For nrbp the default is the
    published closed form Z(p,m)(1-p)(y_i p^(R_i-1) - y_j p^(R_j-1));
    ``nrbp_delta="swap"`` recomputes the metric before and after the
    rank exchange, which is what the other kinds always do.
    """
    kind = spec.kind
    if kind not in PAIRWISE_KINDS:
        raise ConfigurationError(f"no pairwise loss for metric kind {kind!r}")
    if kind == "nrbp" and nrbp_delta == "paper":
        p = spec.p
        m = ctx.positives
        z = 1.0 / (1.0 - p**m)
        y_i = float(ctx.labels[ctx.item_i])
        y_j = float(ctx.labels[ctx.item_j])
        r_i = float(ctx.ranks[ctx.item_i])
        r_j = float(ctx.ranks[ctx.item_j])
        return abs(z * (1.0 - p) * (y_i * p ** (r_i - 1) - y_j * p ** (r_j - 1)))
    before = metric_from_ranks(kind, ctx.labels, ctx.ranks, spec.p)
    swapped = np.array(ctx.ranks, copy=True)
    swapped[ctx.item_i], swapped[ctx.item_j] = (
        ctx.ranks[ctx.item_j],
        ctx.ranks[ctx.item_i],
    )
    after = metric_from_ranks(kind, ctx.labels, swapped, spec.p)
    return abs(after - before)


def lambda_gradient(spec, ctx, nrbp_delta="paper"):
    """Signed pair gradient: S * |delta_metric * dC/do|.

    Positive values push item_i's score up and item_j's down by the same
    amount; the trainer accumulates +lambda on i and -lambda on j.
    """
    delta = swap_delta(spec, ctx, nrbp_delta)
    _, d_cost = pair_cost(ctx.s, ctx.o)
    return ctx.s * abs(delta * d_cost)


def user_lambda_gradients(spec, labels, scores, nrbp_delta="paper"):
    """Accumulated per-item lambda for every (positive, negative) pair.

    Vectorized over the full pair grid of one user's candidate list.
    Returns the score-space ascent direction (add to scores to improve
    the metric); equals summing ``lambda_gradient`` over all pairs.
    """
    y = np.asarray(labels, dtype=np.float64)
    f = np.asarray(scores, dtype=np.float64)
    ranks = hard_ranks(f)
    pos = np.flatnonzero(y == 1.0)
    neg = np.flatnonzero(y == 0.0)
    out = np.zeros_like(f)
    if len(pos) == 0 or len(neg) == 0:
        return out
    # The AP/RR grid formulas assume distinct ranks; fall back to the
    # literal per-pair swap when scores tie.
    if spec.kind in ("ap", "rr") and len(np.unique(f)) < len(f):
        for i in pos:
            for j in neg:
                ctx = PairContext(y, ranks, int(i), int(j), float(f[i] - f[j]))
                lam = lambda_gradient(spec, ctx, nrbp_delta)
                out[i] += lam
                out[j] -= lam
        return out
    o = f[pos][:, None] - f[neg][None, :]
    # S = +1 for every (positive, negative) pair
    d_cost_mag = 1.0 / (1.0 + np.exp(np.minimum(o, 700.0)))
    delta = _swap_delta_grid(spec, y, ranks, pos, neg, nrbp_delta)
    lam = delta * d_cost_mag
    out[pos] += lam.sum(axis=1)
    out[neg] -= lam.sum(axis=0)
    return out


def _swap_delta_grid(spec, y, ranks, pos, neg, nrbp_delta):
    """|delta metric| for the full positive x negative rank-swap grid."""
    kind = spec.kind
    p = spec.p
    m = len(pos)
    r_pos = ranks[pos].astype(np.float64)
    r_neg = ranks[neg].astype(np.float64)
    if kind == "nrbp":
        z1p = (1.0 - p) / (1.0 - p**m)
        decay_pos = p ** (r_pos - 1.0)
        if nrbp_delta == "paper":
            # published closed form: the irrelevant item's term vanishes
            return np.broadcast_to(
                z1p * decay_pos[:, None], (len(pos), len(neg))
            ).copy()
        decay_neg = p ** (r_neg - 1.0)
        return z1p * np.abs(decay_pos[:, None] - decay_neg[None, :])
    if kind == "ndcg":
        gain = 1.0 / np.log2(ranks.astype(np.float64) + 1.0)
        return np.abs(gain[pos][:, None] - gain[neg][None, :]) / ideal_dcg(m)
    if kind == "rr":
        return _rr_delta_grid(r_pos, r_neg)
    if kind == "ap":
        return _ap_delta_grid(r_pos, r_neg, m)
    raise ConfigurationError(f"no pairwise loss for metric kind {kind!r}")


def _rr_delta_grid(r_pos, r_neg):
    """Exact RR change per swapped pair, assuming distinct ranks.

    Moving relevant item i from rank a to rank b changes the metric only
    through the rank of the first relevant item.
    """
    order = np.sort(r_pos)
    best = order[0]
    second = order[1] if len(order) > 1 else np.inf
    # first-relevant rank once item i is removed
    rest_best = np.where(r_pos == best, second, best)
    new_best = np.minimum(rest_best[:, None], r_neg[None, :])
    return np.abs(1.0 / best - 1.0 / new_best)


def _ap_delta_grid(r_pos, r_neg, m):
    """Exact AP change per swapped pair, assuming distinct ranks.

    Moving relevant item i from rank a to rank b changes its own
    precision term, and every other relevant item ranked strictly
    between a and b gains or loses one relevant item above it.
    """
    order = np.sort(r_pos)
    inv_prefix = np.concatenate(([0.0], np.cumsum(1.0 / order)))
    a = r_pos[:, None]
    b = r_neg[None, :]
    # own term before: relevant items at rank <= a, including i itself
    own_before = np.searchsorted(order, r_pos, side="right")[:, None] / a
    # own term after: relevant items other than i at rank <= b, plus i
    moved_down = b > a
    own_after = (np.searchsorted(order, b, side="right") - moved_down + 1.0) / b
    # relevant items strictly inside (min(a,b), max(a,b)); endpoints are
    # i itself and the irrelevant item, so the open interval excludes i
    lo = np.minimum(a, b)
    hi = np.maximum(a, b)
    between = inv_prefix[np.searchsorted(order, hi, side="left")] - inv_prefix[
        np.searchsorted(order, lo, side="right")
    ]
    sign = np.where(moved_down, -1.0, 1.0)
    return np.abs(own_after - own_before + sign * between) / m
