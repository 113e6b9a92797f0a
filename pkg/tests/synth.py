"""Synthetic dataset generators shared by trainer, report and acceptance tests."""

import numpy as np

from rankrec.data import InteractionSet, binarize


def _as_set(num_users, num_items, users, items):
    ds = InteractionSet(
        num_users,
        num_items,
        users,
        items,
        np.full(len(users), 5.0),
        np.zeros(len(users)),
    )
    return binarize(ds, 4.0)


def planted_two_block(num_users=40, num_items=60, per_user=20, seed=7):
    """Two user clusters, each preferring its own half of the item space."""
    rng = np.random.default_rng(seed)
    users, items = [], []
    half_u, half_i = num_users // 2, num_items // 2
    for u in range(num_users):
        block = np.arange(half_i) if u < half_u else np.arange(half_i, num_items)
        pos = rng.choice(block, size=per_user, replace=False)
        users.extend([u] * per_user)
        items.extend(int(i) for i in pos)
    return _as_set(num_users, num_items, users, items)


def bimodal_population(
    num_mainstream=80,
    num_niche=20,
    mainstream_items=40,
    niche_items=30,
    per_mainstream=24,
    per_niche=15,
    niche_mix=0.4,
    seed=5,
):
    """A mainstream majority plus a smaller niche cluster.

    Niche users interact less and their profiles mix a distinct item
    block with some mainstream items, which leaves their block items
    outnumbered by global negative sampling; the baseline model serves
    them visibly worse.
    """
    rng = np.random.default_rng(seed)
    num_users = num_mainstream + num_niche
    num_items = mainstream_items + niche_items
    users, items = [], []
    for u in range(num_users):
        if u < num_mainstream:
            pos = rng.choice(np.arange(mainstream_items), size=per_mainstream, replace=False)
        else:
            n_mix = int(round(niche_mix * per_niche))
            own = rng.choice(
                np.arange(mainstream_items, num_items),
                size=per_niche - n_mix,
                replace=False,
            )
            other = rng.choice(np.arange(mainstream_items), size=n_mix, replace=False)
            pos = np.concatenate([own, other])
        users.extend([u] * len(pos))
        items.extend(int(i) for i in pos)
    return _as_set(num_users, num_items, users, items)


def graded_popularity(
    num_users=60, common_items=30, rare_items=150, per_user=18, seed=5
):
    """Users mixing commonly-liked and rarely-liked items in varying shares.

    The share of common items drives persistent per-user utility while
    individual positives vary widely in difficulty, so few-item utility
    estimates are noisy.
    """
    rng = np.random.default_rng(seed)
    num_items = common_items + rare_items
    users, items = [], []
    for u in range(num_users):
        share = rng.uniform(0.0, 1.0)
        n_common = int(round(share * per_user))
        common = rng.choice(np.arange(common_items), size=n_common, replace=False)
        rare = rng.choice(
            np.arange(common_items, num_items), size=per_user - n_common, replace=False
        )
        pos = np.concatenate([common, rare])
        users.extend([u] * per_user)
        items.extend(int(i) for i in pos)
    return _as_set(num_users, num_items, users, items)
