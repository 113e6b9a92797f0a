import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(42)


def random_judgments(rng, max_n=8, require_negative=False):
    """Random binary labels (>= 1 positive) with continuous scores."""
    n = int(rng.integers(2, max_n + 1))
    upper = n if require_negative else n + 1
    m = int(rng.integers(1, upper))
    labels = np.zeros(n, dtype=int)
    labels[rng.choice(n, size=m, replace=False)] = 1
    scores = rng.uniform(-3.0, 3.0, size=n)
    return labels, scores
