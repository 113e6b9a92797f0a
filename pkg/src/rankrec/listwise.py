"""Listwise losses built on sigmoid-smoothed ranks, with closed-form gradients.

Each loss is the additive inverse of a smoothed metric over the whole
candidate list (no cutoff). The RBP-family loss reduces to pushing the
smoothed ranks of relevant items toward the top and is independent of
the persistence parameter; its user-dependent magnitude is intentional
and left unnormalized.
"""

import numpy as np

from .errors import ConfigurationError, UndefinedMetricError
from .metrics import ideal_dcg
from .validation import as_score_vector

LISTWISE_KINDS = ("ndcg", "ap", "rr", "nrbp")

LN2 = np.log(2.0)


def sigmoid(x):
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _pairwise_sigmoid(scores, temperature=1.0):
    """Matrix S[i, j] = sigma((f_j - f_i) / temperature), zero diagonal."""
    diff = (scores[None, :] - scores[:, None]) / temperature
    mat = sigmoid(diff)
    np.fill_diagonal(mat, 0.0)
    return mat


def _pairwise_sigmoid_grad(scores, temperature=1.0):
    """Matrix S'[i, j] = sigma'((f_j - f_i) / temperature), zero diagonal."""
    diff = (scores[None, :] - scores[:, None]) / temperature
    s = sigmoid(diff)
    mat = s * (1.0 - s) / temperature
    np.fill_diagonal(mat, 0.0)
    return mat


def smooth_ranks(scores, temperature=1.0):
    """Differentiable rank surrogate: R~_i = 1 + sum_{j != i} sigma(f_j - f_i)."""
    f = as_score_vector(scores)
    if len(f) == 0:
        return np.empty(0, dtype=np.float64)
    return 1.0 + _pairwise_sigmoid(f, temperature).sum(axis=1)


def _check_inputs(judged):
    if judged.positives < 1:
        raise UndefinedMetricError("listwise loss undefined with zero relevant items")


def listwise_loss(spec, judged, temperature=1.0):
    """Per-user listwise loss value for the metric named by ``spec``."""
    _check_inputs(judged)
    kind = spec.kind
    if kind not in LISTWISE_KINDS:
        raise ConfigurationError(f"no listwise loss for metric kind {kind!r}")
    y = judged.labels.astype(np.float64)
    f = judged.scores
    m = judged.positives
    rt = smooth_ranks(f, temperature)
    if kind == "nrbp":
        # sum_i y_i (R~_i - 1) minus its ideal-ranking value, so the
        # infimum is 0 for every user regardless of persistence.
        return float(np.sum(y * (rt - 1.0))) - m * (m - 1) / 2.0
    if kind == "ndcg":
        return -float(np.sum(y / np.log2(rt + 1.0))) / ideal_dcg(m)
    sig = _pairwise_sigmoid(f, temperature)
    if kind == "ap":
        inner = 1.0 + sig @ y
        return -float(np.sum(y * inner / rt)) / m
    # rr: product over relevant j != i of (1 - sigma(f_j - f_i)); the
    # zeroed diagonal makes the j = i factor exactly 1.
    rel = np.flatnonzero(y == 1.0)
    total = 0.0
    for i in rel:
        total += np.prod(1.0 - sig[i, rel]) / rt[i]
    return -total


def listwise_grad(spec, judged, temperature=1.0):
    """Analytic gradient of ``listwise_loss`` with respect to the scores."""
    _check_inputs(judged)
    kind = spec.kind
    if kind not in LISTWISE_KINDS:
        raise ConfigurationError(f"no listwise loss for metric kind {kind!r}")
    y = judged.labels.astype(np.float64)
    f = judged.scores
    m = judged.positives
    sp = _pairwise_sigmoid_grad(f, temperature)
    row = sp.sum(axis=1)
    if kind == "nrbp":
        return sp @ y - y * row
    rt = smooth_ranks(f, temperature)
    if kind == "ndcg":
        # d/dR of 1/log2(R+1) = -ln2 / ((R+1) ln(R+1)^2)
        hprime = -LN2 / ((rt + 1.0) * np.log(rt + 1.0) ** 2)
        c = y * hprime
        return -(sp @ c - c * row) / ideal_dcg(m)
    if kind == "ap":
        sig = _pairwise_sigmoid(f, temperature)
        inner = 1.0 + sig @ y
        term_a = y * (sp @ (y / rt) - (sp @ y) / rt)
        b = y * inner / rt**2
        term_b = sp @ b - b * row
        return -(term_a - term_b) / m
    return _rr_grad(y, f, sp, row, rt, temperature)


def _rr_grad(y, f, sp, row, rt, temperature):
    rel = np.flatnonzero(y == 1.0)
    sig = _pairwise_sigmoid(f, temperature)
    grad = np.zeros_like(f)
    for i in rel:
        others = rel[rel != i]
        factors = 1.0 - sig[i, others]
        # Leave-one-out products keep the gradient exact even when a
        # factor underflows to zero.
        prefix = np.concatenate(([1.0], np.cumprod(factors)))
        suffix = np.concatenate((np.cumprod(factors[::-1])[::-1], [1.0]))
        q = prefix[-1]
        loo = prefix[:-1] * suffix[1:]
        dq = sp[i, others]
        # L contribution: -q / rt_i
        grad[others] += dq * loo / rt[i]
        grad[i] -= np.sum(dq * loo) / rt[i]
        # rank term: +q * d(rt_i)/df / rt_i^2
        grad[i] -= q * row[i] / rt[i] ** 2
        mask = np.ones(len(f), dtype=bool)
        mask[i] = False
        grad[mask] += q * sp[i, mask] / rt[i] ** 2
    return grad
