"""Per-user evaluation, user-group binning, gains and improvement tables."""

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .errors import BinningError, UndefinedMetricError
from .metrics import RankedJudgments, eval_metric, rmse
from .models import init_model, predict
from .trainer import train_ranking

QUINTILE_NAMES = ("low", "med-low", "med", "med-high", "high")
P10_50_90_NAMES = ("bottom10", "mid-low40", "mid-high40", "top10")

GAIN_WEIGHTS = (0.1, 0.4, 0.4, 0.1)


@dataclass
class EvalReport:
    """Per-user metric values with optional group structure."""

    metric_label: str
    per_user: dict
    groups: dict | None = None

    @property
    def overall(self):
        return float(np.mean(list(self.per_user.values())))

    def group_means(self):
        if self.groups is None:
            return {}
        return {
            name: float(np.mean([self.per_user[u] for u in members]))
            for name, members in self.groups.items()
        }

    def to_dict(self):
        out = {
            "metric": self.metric_label,
            "overall": self.overall,
            "per_user": {str(u): v for u, v in sorted(self.per_user.items())},
        }
        if self.groups is not None:
            out["groups"] = {name: list(map(int, m)) for name, m in self.groups.items()}
            out["group_means"] = self.group_means()
        return out


def per_user_eval(model, candidates, spec, exclude_users=None):
    """Evaluate the metric per user on predicted scores.

    ``candidates`` maps users to (items, labels) pairs, as produced by
    the data module's candidate sets. Users with zero positives are
    skipped with a warning; ``exclude_users`` drops further users (e.g.
    those below a minimum training-interaction count).
    """
    exclude = set(exclude_users or ())
    out = {}
    skipped = 0
    for user, (items, labels) in candidates.items():
        if user in exclude:
            continue
        if np.sum(labels) < 1:
            skipped += 1
            continue
        scores = predict(model, user, items)
        out[user] = eval_metric(spec, RankedJudgments(labels, scores))
    if skipped:
        warnings.warn(
            f"excluded {skipped} user(s) with no relevant items from evaluation",
            stacklevel=2,
        )
    if not out:
        raise UndefinedMetricError("no user could be evaluated")
    return out


def candidates_of(partition):
    """Per-user candidate (items, labels) for every user with records."""
    out = {}
    for user in range(partition.num_users):
        items, labels = partition.user_candidates(user)
        if len(items):
            out[user] = (items, labels)
    return out


def bin_users(values, scheme="quintiles"):
    """Partition users into named bins by ascending value.

    "quintiles" gives five equal-share bins; "p10-50-90" gives four bins
    holding 10/40/40/10% of users. Ties at a boundary put the
    lower-index user into the lower bin.
    """
    users = sorted(values, key=lambda u: (values[u], u))
    n = len(users)
    if scheme == "quintiles":
        if n < 5:
            raise BinningError(f"quintiles need at least 5 users, got {n}")
        edges = [int(np.floor(n * k / 5 + 0.5)) for k in range(6)]
        names = QUINTILE_NAMES
    elif scheme == "p10-50-90":
        if n < 10:
            raise BinningError(f"p10-50-90 needs at least 10 users, got {n}")
        edges = [0] + [int(np.floor(n * q + 0.5)) for q in (0.1, 0.5, 0.9)] + [n]
        names = P10_50_90_NAMES
    else:
        raise BinningError(f"unknown binning scheme {scheme!r}")
    return {
        name: users[lo:hi] for name, lo, hi in zip(names, edges[:-1], edges[1:])
    }


def gain_delta(bin_deltas):
    """Weighted mean of four per-bin deltas with weights 0.1/0.4/0.4/0.1."""
    deltas = list(bin_deltas)
    if len(deltas) != 4:
        raise ValueError(f"gain takes exactly 4 bin deltas, got {len(deltas)}")
    return float(sum(w * d for w, d in zip(GAIN_WEIGHTS, deltas)))


def improvement_table(baseline, treated, groups=None):
    """Relative percentage improvement of ``treated`` over ``baseline``.

    Rows cover each group plus "overall". Cells carry both means, the
    relative improvement in percent, and a Bonferroni-corrected paired
    t-test p-value over the per-user deltas (nan where undefined).
    """
    if set(baseline.per_user) != set(treated.per_user):
        raise ValueError("reports cover different user sets")
    if groups is None:
        groups = baseline.groups or {}
    rows = {}
    named = list(groups.items()) + [("overall", sorted(baseline.per_user))]
    corrections = len(named)
    for name, members in named:
        base = np.array([baseline.per_user[u] for u in members])
        treat = np.array([treated.per_user[u] for u in members])
        base_mean = float(base.mean())
        treat_mean = float(treat.mean())
        if base_mean == 0.0:
            pct = float("nan")
        else:
            pct = 100.0 * (treat_mean - base_mean) / base_mean
        if len(members) >= 2 and np.ptp(treat - base) > 0:
            p_value = float(stats.ttest_rel(treat, base).pvalue)
            p_value = min(1.0, p_value * corrections)
        else:
            p_value = float("nan")
        rows[name] = {
            "users": len(members),
            "baseline_mean": base_mean,
            "treated_mean": treat_mean,
            "improvement_pct": pct,
            "p_value": p_value,
        }
    return rows


def reliability(validation_scores, test_scores):
    """(RMSE, Spearman rho) between per-user validation and test values."""
    users = sorted(set(validation_scores) & set(test_scores))
    if len(users) < 3:
        raise ValueError("reliability statistics need at least 3 users")
    val = np.array([validation_scores[u] for u in users])
    test = np.array([test_scores[u] for u in users])
    rho = float(stats.spearmanr(val, test).statistic)
    return rmse(val, test), rho


def val_test_correlation(grid, loss, config, metric, variant="fm"):
    """Train a fresh baseline per grid point and measure val-test reliability.

    ``grid`` is a list of PartitionedData, typically produced with
    varying per-partition minimum counts. Returns one dict per grid
    point with the RMSE and Spearman rho of per-user metric values.
    """
    results = []
    for parts in grid:
        model = init_model(
            parts.num_users, parts.num_items, config.latent_dim, config.seed, variant
        )
        model, _ = train_ranking(model, parts, loss, config, tracked_metrics=[])
        val_scores = per_user_eval(model, candidates_of(parts.validation), metric)
        test_scores = per_user_eval(model, candidates_of(parts.test), metric)
        score_rmse, rho = reliability(val_scores, test_scores)
        results.append(
            {
                "min_relevant_per_partition": parts.spec.min_relevant_per_partition,
                "rmse": score_rmse,
                "spearman": rho,
            }
        )
    return results


def format_table(rows, float_fmt="{:+.2f}"):
    """Aligned-column text rendering of an improvement table."""
    header = ["group", "users", "baseline", "treated", "improvement%", "p-value"]
    lines = []
    for name, cells in rows.items():
        lines.append(
            [
                name,
                str(cells["users"]),
                f"{cells['baseline_mean']:.4f}",
                f"{cells['treated_mean']:.4f}",
                float_fmt.format(cells["improvement_pct"]),
                f"{cells['p_value']:.4g}",
            ]
        )
    widths = [max(len(h), *(len(row[i]) for row in lines)) for i, h in enumerate(header)]
    out = ["  ".join(h.ljust(w) for h, w in zip(header, widths))]
    for row in lines:
        out.append("  ".join(cell.ljust(w) for cell, w in zip(row, widths)))
    return "\n".join(out)
