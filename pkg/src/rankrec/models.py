"""Latent-factor scorers and their optimizers.

Two variants share one container: plain matrix factorization (dot
product of user and item factors) and a biased variant where the
second-order factorization-machine interaction collapses to the single
user-item cross term, leaving global/user/item biases plus the dot
product.
"""

import json
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DivergenceError

INIT_SCALE = 0.01

STAGE_SPLIT = 1
STAGE_NEGATIVES = 2
STAGE_INIT = 3
STAGE_SHUFFLE = 4


def stage_rng(seed, stage, *keys):
    """Deterministic generator for one stage of a seeded pipeline."""
    return np.random.default_rng([seed, stage, *keys])


@dataclass
class FactorModel:
    """User/item latent factors with optional bias terms."""

    user_factors: np.ndarray
    item_factors: np.ndarray
    variant: str = "mf"
    global_bias: float = 0.0
    user_bias: np.ndarray | None = None
    item_bias: np.ndarray | None = None

    @property
    def num_users(self):
        return self.user_factors.shape[0]

    @property
    def num_items(self):
        return self.item_factors.shape[0]

    @property
    def latent_dim(self):
        return self.user_factors.shape[1]

    def copy(self):
        return FactorModel(
            self.user_factors.copy(),
            self.item_factors.copy(),
            self.variant,
            self.global_bias,
            None if self.user_bias is None else self.user_bias.copy(),
            None if self.item_bias is None else self.item_bias.copy(),
        )


@dataclass
class TrainConfig:
    """Hyper-parameters for one training run."""

    learning_rate: float = 0.05
    epochs: int = 200
    batch_size: int = 512
    l2: float = 0.0
    seed: int = 0
    optimizer: str = "sgd"
    latent_dim: int = 32

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ConfigurationError("learning_rate must be positive")
        if self.epochs < 1 or self.batch_size < 1 or self.latent_dim < 1:
            raise ConfigurationError("epochs, batch_size and latent_dim must be >= 1")
        if self.l2 < 0:
            raise ConfigurationError("l2 must be non-negative")
        if self.optimizer not in ("sgd", "adam"):
            raise ConfigurationError(f"unknown optimizer {self.optimizer!r}")


def init_model(num_users, num_items, latent_dim=32, seed=0, variant="mf"):
    """Fresh model with factors ~ Uniform(-0.01, 0.01) and zero biases."""
    if num_users < 1 or num_items < 1 or latent_dim < 1:
        raise ConfigurationError("model dimensions must be >= 1")
    if variant not in ("mf", "fm"):
        raise ConfigurationError(f"unknown model variant {variant!r}")
    rng = stage_rng(seed, STAGE_INIT)
    u = rng.uniform(-INIT_SCALE, INIT_SCALE, size=(num_users, latent_dim))
    v = rng.uniform(-INIT_SCALE, INIT_SCALE, size=(num_items, latent_dim))
    if variant == "mf":
        return FactorModel(u, v, "mf")
    return FactorModel(
        u,
        v,
        "fm",
        0.0,
        np.zeros(num_users),
        np.zeros(num_items),
    )


def predict(model, user, items):
    """Predicted relevance of the given items for one user."""
    items = np.asarray(items, dtype=np.int64)
    if not 0 <= user < model.num_users:
        raise ValueError(f"user index {user} out of range")
    if items.size and (items.min() < 0 or items.max() >= model.num_items):
        raise ValueError("item index out of range")
    scores = model.item_factors[items] @ model.user_factors[user]
    if model.variant == "fm":
        scores = scores + model.global_bias + model.user_bias[user] + model.item_bias[items]
    return scores


def predict_pairs(model, users, items):
    """Scores for parallel (user, item) index arrays."""
    users = np.asarray(users, dtype=np.int64)
    items = np.asarray(items, dtype=np.int64)
    scores = np.einsum(
        "ij,ij->i", model.user_factors[users], model.item_factors[items]
    )
    if model.variant == "fm":
        scores = scores + model.global_bias + model.user_bias[users] + model.item_bias[items]
    return scores


def bce_loss(scores, labels):
    """Mean binary cross-entropy of sigmoid(scores) against 0/1 labels."""
    f = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if f.shape != y.shape:
        raise ValueError(f"scores and labels differ in shape ({f.shape} vs {y.shape})")
    # y*softplus(-f) + (1-y)*softplus(f), stable at large |f|
    return float(np.mean(y * np.logaddexp(0.0, -f) + (1.0 - y) * np.logaddexp(0.0, f)))


def bce_grad(scores, labels):
    """d(bce)/d(score) per item, without the 1/N normalization."""
    f = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    return 1.0 / (1.0 + np.exp(-f)) - y


class Optimizer:
    """Applies score-space gradients to a model, chaining to the factors.

    ``apply_user_gradients`` handles the per-user update used by the
    ranking losses; ``step_interactions`` handles minibatches of
    (user, item) pairs for the pointwise loss. Adam keeps dense moment
    estimates, so state must persist across steps.
    """

    def __init__(self, config, model):
        self.lr = config.learning_rate
        self.l2 = config.l2
        self.kind = config.optimizer
        if self.kind == "adam":
            self.beta1, self.beta2, self.eps = 0.9, 0.999, 1e-8
            self.t = 0
            self._m = self._zeros_like_params(model)
            self._v = self._zeros_like_params(model)

    @staticmethod
    def _zeros_like_params(model):
        slots = {
            "u": np.zeros_like(model.user_factors),
            "v": np.zeros_like(model.item_factors),
        }
        if model.variant == "fm":
            slots["bu"] = np.zeros_like(model.user_bias)
            slots["bi"] = np.zeros_like(model.item_bias)
            slots["b0"] = np.zeros(1)
        return slots

    def apply_user_gradients(self, model, user, items, score_grads):
        """One update from d(loss)/d(score) over a user's candidate items.

        ``items`` must be unique within the call (one gradient per
        candidate item), which every loss in this package produces.
        Both factor gradients are formed before either side is updated.
        """
        items = np.asarray(items, dtype=np.int64)
        g = np.asarray(score_grads, dtype=np.float64)
        if not np.all(np.isfinite(g)):
            raise DivergenceError("non-finite gradient", epoch=-1)
        grad_u = g @ model.item_factors[items]
        grad_v = g[:, None] * model.user_factors[user]
        if self.l2:
            grad_u = grad_u + self.l2 * model.user_factors[user]
            grad_v += self.l2 * model.item_factors[items]
        if self.kind == "sgd":
            model.user_factors[user] -= self.lr * grad_u
            model.item_factors[items] -= self.lr * grad_v
            if model.variant == "fm":
                g_sum = g.sum()
                model.user_bias[user] -= self.lr * (
                    g_sum + self.l2 * model.user_bias[user]
                )
                model.item_bias[items] -= self.lr * (
                    g + self.l2 * model.item_bias[items]
                )
                model.global_bias -= self.lr * g_sum
            return
        grads = {"u": np.zeros_like(model.user_factors), "v": np.zeros_like(model.item_factors)}
        grads["u"][user] = grad_u
        grads["v"][items] = grad_v
        if model.variant == "fm":
            grads["bu"] = np.zeros_like(model.user_bias)
            grads["bu"][user] = g.sum()
            grads["bi"] = np.zeros_like(model.item_bias)
            grads["bi"][items] = g
            grads["b0"] = np.array([g.sum()])
        self._adam_step(model, grads)

    def step_interactions(self, model, users, items, score_grads):
        """One minibatch update from per-interaction score gradients."""
        users = np.asarray(users, dtype=np.int64)
        items = np.asarray(items, dtype=np.int64)
        g = np.asarray(score_grads, dtype=np.float64)
        if not np.all(np.isfinite(g)):
            raise DivergenceError("non-finite gradient", epoch=-1)
        grads = {
            "u": np.zeros_like(model.user_factors),
            "v": np.zeros_like(model.item_factors),
        }
        np.add.at(grads["u"], users, g[:, None] * model.item_factors[items])
        np.add.at(grads["v"], items, g[:, None] * model.user_factors[users])
        touched_u = np.unique(users)
        touched_i = np.unique(items)
        if self.l2:
            grads["u"][touched_u] += self.l2 * model.user_factors[touched_u]
            grads["v"][touched_i] += self.l2 * model.item_factors[touched_i]
        if model.variant == "fm":
            grads["bu"] = np.zeros_like(model.user_bias)
            np.add.at(grads["bu"], users, g)
            grads["bi"] = np.zeros_like(model.item_bias)
            np.add.at(grads["bi"], items, g)
            grads["b0"] = np.array([g.sum()])
        if self.kind == "sgd":
            model.user_factors[touched_u] -= self.lr * grads["u"][touched_u]
            model.item_factors[touched_i] -= self.lr * grads["v"][touched_i]
            if model.variant == "fm":
                model.user_bias[touched_u] -= self.lr * grads["bu"][touched_u]
                model.item_bias[touched_i] -= self.lr * grads["bi"][touched_i]
                model.global_bias -= self.lr * float(grads["b0"][0])
            return
        self._adam_step(model, grads)

    def _adam_step(self, model, grads):
        self.t += 1
        params = {"u": model.user_factors, "v": model.item_factors}
        if model.variant == "fm":
            params["bu"] = model.user_bias
            params["bi"] = model.item_bias
        for key, theta in params.items():
            g = grads.get(key)
            if g is None:
                continue
            m = self._m[key]
            v = self._v[key]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            m_hat = m / (1.0 - self.beta1**self.t)
            v_hat = v / (1.0 - self.beta2**self.t)
            theta -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
        if model.variant == "fm" and "b0" in grads:
            m = self._m["b0"]
            v = self._v["b0"]
            m *= self.beta1
            m += (1.0 - self.beta1) * grads["b0"]
            v *= self.beta2
            v += (1.0 - self.beta2) * grads["b0"] ** 2
            m_hat = m / (1.0 - self.beta1**self.t)
            v_hat = v / (1.0 - self.beta2**self.t)
            model.global_bias -= float(self.lr * m_hat[0] / (np.sqrt(v_hat[0]) + self.eps))


def apply_gradients(model, user, item_grads, config, state=None):
    """Apply one optimizer step from (item, score-gradient) pairs.

    ``state`` carries the optimizer across steps (required for Adam
    moment estimates); a fresh one is created when omitted. Returns the
    state so callers can thread it through.
    """
    if state is None:
        state = Optimizer(config, model)
    items = np.asarray([i for i, _ in item_grads], dtype=np.int64)
    grads = np.asarray([g for _, g in item_grads], dtype=np.float64)
    if items.size:
        state.apply_user_gradients(model, user, items, grads)
    if not np.all(np.isfinite(model.user_factors[user])):
        raise DivergenceError("non-finite parameters after update", epoch=-1)
    return state


def save_model(path, model, seed=None, extra=None):
    """Write a model checkpoint (.npz with a JSON metadata record)."""
    meta = {
        "format_version": 1,
        "variant": model.variant,
        "num_users": model.num_users,
        "num_items": model.num_items,
        "latent_dim": model.latent_dim,
        "seed": seed,
        "global_bias": model.global_bias,
    }
    if extra:
        meta["extra"] = extra
    arrays = {
        "user_factors": model.user_factors,
        "item_factors": model.item_factors,
        "meta": np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8),
    }
    if model.variant == "fm":
        arrays["user_bias"] = model.user_bias
        arrays["item_bias"] = model.item_bias
    np.savez(path, **arrays)


def load_model(path):
    """Read a checkpoint written by ``save_model``; values round-trip exactly."""
    with np.load(path) as data:
        meta = json.loads(bytes(data["meta"]).decode())
        if meta.get("format_version") != 1:
            raise ConfigurationError("unsupported checkpoint format version")
        model = FactorModel(
            data["user_factors"].astype(np.float64),
            data["item_factors"].astype(np.float64),
            meta["variant"],
            float(meta["global_bias"]),
            data["user_bias"] if "user_bias" in data else None,
            data["item_bias"] if "item_bias" in data else None,
        )
    return model, meta
