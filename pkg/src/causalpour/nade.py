"""Per-node neural density estimators.

Each graph node gets its own small feed-forward network mapping the values
of its parents to the parameters of a univariate distribution: mean and
standard deviation of a Gaussian for continuous nodes, success probability
of a Bernoulli for binary nodes. Root nodes take a constant 1.0 as input.
The networks are trained by minimizing the average negative log-likelihood
with RMSProp; forward, backward and the update loop are all plain numpy so
the whole estimator is dependency-light and bit-reproducible.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

SIGMA_FLOOR = 1e-3
LOGIT_CLAMP = 15.0
HIDDEN = (16, 16)

GAUSSIAN = "gaussian"
BERNOULLI = "bernoulli"

_HALF_LOG_2PI = 0.5 * np.log(2.0 * np.pi)


class NadeError(ValueError):
    pass


class DimensionMismatch(NadeError):
    pass


class NonFiniteLoss(NadeError):
    pass


class NonFiniteGradient(NadeError):
    pass


class Diverged(NadeError):
    pass


class InsufficientData(NadeError):
    pass


@dataclass
class TrainConfig:
    """Optimizer settings for fitting one mechanism.

    learning_rate and the 2x16 tanh architecture follow the reference
    setup; decay/epsilon/epochs/batch_size are conventional RMSProp
    defaults exposed here so experiments can override them.
    """

    learning_rate: float = 0.01
    decay: float = 0.9
    epsilon: float = 1e-8
    epochs: int = 300
    batch_size: int = 128
    seed: int = 0
    hidden: tuple[int, int] = HIDDEN

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise NadeError("learning_rate must be positive")
        if self.epochs < 1:
            raise NadeError("epochs must be >= 1")
        if self.batch_size < 1:
            raise NadeError("batch_size must be >= 1")
        if not 0 <= self.decay < 1:
            raise NadeError("decay must be in [0, 1)")


def _softplus(x):
    return np.logaddexp(0.0, x)


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


class Mechanism:
    """One trained conditional estimator: node <- parents.

    Attributes
    ----------
    node : str
    parents : tuple of str
        Input order, fixed at construction and preserved by serialization.
    head : str
        ``"gaussian"`` or ``"bernoulli"``.
    weights, biases : lists of float64 arrays
        ``weights[i]`` has shape (fan_in, fan_out); inputs flow left to
        right through tanh nonlinearities, the head layer is affine.
    input_mean, input_std : (d,) arrays
        Per-column standardization applied before the first layer.
    """

    def __init__(self, node, parents, head, weights, biases,
                 input_mean=None, input_std=None):
        self.node = str(node)
        self.parents = tuple(parents)
        if head not in (GAUSSIAN, BERNOULLI):
            raise NadeError(f"unknown head {head!r}")
        self.head = head
        self.weights = [np.asarray(w, dtype=float) for w in weights]
        self.biases = [np.asarray(b, dtype=float) for b in biases]
        d = self.input_dim
        self.input_mean = (np.zeros(d) if input_mean is None
                           else np.asarray(input_mean, dtype=float))
        self.input_std = (np.ones(d) if input_std is None
                          else np.asarray(input_std, dtype=float))
        self._check_shapes()
        self.train_history: list[float] = []

    @property
    def input_dim(self) -> int:
        return max(len(self.parents), 1)

    @property
    def head_dim(self) -> int:
        return 2 if self.head == GAUSSIAN else 1

    def _check_shapes(self):
        if len(self.weights) != len(self.biases):
            raise NadeError("weights/biases length mismatch")
        expect = self.input_dim
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or w.shape[0] != expect or b.shape != (w.shape[1],):
                raise NadeError(f"layer {i} has inconsistent shape {w.shape}")
            expect = w.shape[1]
        if expect != self.head_dim:
            raise NadeError(f"head expects {self.head_dim} outputs, got {expect}")
        for arr in self.weights + self.biases + [self.input_mean, self.input_std]:
            if not np.all(np.isfinite(arr)):
                raise NadeError("non-finite parameter value")
        if self.input_mean.shape != (self.input_dim,):
            raise NadeError("standardization shape mismatch")

    # -- forward ---------------------------------------------------------

    def _as_matrix(self, parent_values) -> np.ndarray:
        x = np.asarray(parent_values, dtype=float)
        if x.ndim == 1:
            # a 1-d argument is a single input row
            x = x.reshape(1, -1)
        if x.ndim != 2 or x.shape[1] != self.input_dim:
            raise DimensionMismatch(
                f"{self.node}: expected {self.input_dim} inputs, got shape {x.shape}")
        return x

    def _activations(self, x: np.ndarray):
        acts = [(x - self.input_mean) / self.input_std]
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = acts[-1] @ w + b
            acts.append(z if i == last else np.tanh(z))
        return acts

    def forward(self, parent_values):
        """Distribution parameters for each input row.

        Returns ``(mu, sigma)`` arrays for a Gaussian head or ``p`` for a
        Bernoulli head; scalar inputs give scalar outputs.
        """
        x = self._as_matrix(parent_values)
        out = self._activations(x)[-1]
        scalar = np.asarray(parent_values).ndim == 1
        if self.head == GAUSSIAN:
            mu = out[:, 0]
            sigma = _softplus(out[:, 1]) + SIGMA_FLOOR
            return (mu[0], sigma[0]) if scalar else (mu, sigma)
        logit = np.clip(out[:, 0], -LOGIT_CLAMP, LOGIT_CLAMP)
        p = _sigmoid(logit)
        return p[0] if scalar else p

    # -- loss and gradients ----------------------------------------------

    def negative_log_likelihood(self, parent_values, targets) -> float:
        """Mean NLL of the batch under the head distribution."""
        x = self._as_matrix(parent_values)
        y = np.asarray(targets, dtype=float).reshape(-1)
        if len(y) != x.shape[0]:
            raise DimensionMismatch("targets do not match batch size")
        if len(y) == 0:
            raise NadeError("empty batch")
        out = self._activations(x)[-1]
        if self.head == GAUSSIAN:
            mu = out[:, 0]
            sigma = _softplus(out[:, 1]) + SIGMA_FLOOR
            nll = 0.5 * ((y - mu) / sigma) ** 2 + np.log(sigma) + _HALF_LOG_2PI
        else:
            logit = np.clip(out[:, 0], -LOGIT_CLAMP, LOGIT_CLAMP)
            # -[y log p + (1-y) log(1-p)] written in logit form for stability
            nll = _softplus(logit) - y * logit
        loss = float(np.mean(nll))
        if not np.isfinite(loss):
            raise NonFiniteLoss(f"{self.node}: NLL is not finite")
        return loss

    def gradients(self, parent_values, targets):
        """Exact reverse-mode gradients of the mean NLL.

        Returns ``(grad_weights, grad_biases, loss)`` with arrays shaped
        like the parameters.
        """
        x = self._as_matrix(parent_values)
        y = np.asarray(targets, dtype=float).reshape(-1)
        if len(y) != x.shape[0]:
            raise DimensionMismatch("targets do not match batch size")
        n = len(y)
        acts = self._activations(x)
        out = acts[-1]
        if self.head == GAUSSIAN:
            mu = out[:, 0]
            raw = out[:, 1]
            sigma = _softplus(raw) + SIGMA_FLOOR
            z = (mu - y) / sigma
            nll = 0.5 * z ** 2 + np.log(sigma) + _HALF_LOG_2PI
            d_mu = z / sigma
            d_sigma = (1.0 - z ** 2) / sigma
            d_out = np.column_stack([d_mu, d_sigma * _sigmoid(raw)]) / n
        else:
            logit = np.clip(out[:, 0], -LOGIT_CLAMP, LOGIT_CLAMP)
            p = _sigmoid(logit)
            nll = _softplus(logit) - y * logit
            inside = np.abs(out[:, 0]) < LOGIT_CLAMP
            d_out = ((p - y) * inside / n).reshape(-1, 1)
        loss = float(np.mean(nll))
        if not np.isfinite(loss):
            raise NonFiniteLoss(f"{self.node}: NLL is not finite")

        grad_w = [np.empty_like(w) for w in self.weights]
        grad_b = [np.empty_like(b) for b in self.biases]
        delta = d_out
        for i in range(len(self.weights) - 1, -1, -1):
            grad_w[i] = acts[i].T @ delta
            grad_b[i] = delta.sum(axis=0)
            if i > 0:
                delta = (delta @ self.weights[i].T) * (1.0 - acts[i] ** 2)
        for g in grad_w + grad_b:
            if not np.all(np.isfinite(g)):
                raise NonFiniteGradient(f"{self.node}: gradient is not finite")
        return grad_w, grad_b, loss

    # -- sampling ----------------------------------------------------------

    def sample(self, parent_values, rng: np.random.Generator):
        """Draw from the head distribution at the given parent values."""
        params = self.forward(parent_values)
        if self.head == GAUSSIAN:
            mu, sigma = params
            return rng.normal(mu, sigma)
        p = params
        return rng.random(np.shape(p)) < p if np.ndim(p) else rng.random() < p

    # -- serialization -----------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "node": self.node,
            "parents": list(self.parents),
            "head": self.head,
            "standardization": {
                "mean": self.input_mean.tolist(),
                "std": self.input_std.tolist(),
            },
            "layers": [{"w": w.tolist(), "b": b.tolist()}
                       for w, b in zip(self.weights, self.biases)],
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "Mechanism":
        try:
            std = payload["standardization"]
            return cls(
                payload["node"], payload["parents"], payload["head"],
                [layer["w"] for layer in payload["layers"]],
                [layer["b"] for layer in payload["layers"]],
                input_mean=std["mean"], input_std=std["std"],
            )
        except (KeyError, TypeError) as exc:
            raise NadeError(f"malformed mechanism payload: {exc}") from exc

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "Mechanism":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def init_mechanism(node, parents, head, seed=0, hidden=HIDDEN,
                   input_mean=None, input_std=None) -> Mechanism:
    """Fresh mechanism with uniform +-1/sqrt(fan_in) weights."""
    rng = np.random.default_rng(seed)
    dims = [max(len(tuple(parents)), 1), *hidden, 2 if head == GAUSSIAN else 1]
    weights, biases = [], []
    for fan_in, fan_out in zip(dims, dims[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return Mechanism(node, parents, head, weights, biases,
                     input_mean=input_mean, input_std=input_std)


def fit(dataset, node, head, parents, config: TrainConfig | None = None) -> Mechanism:
    """Train one mechanism on named data columns.

    Parameters
    ----------
    dataset : mapping of column name -> 1-d array
        Must contain the node column and every parent column.
    node, parents : str, sequence of str
    head : str
        ``"gaussian"`` or ``"bernoulli"``.
    config : TrainConfig

    The returned mechanism carries the parameters of the epoch with the
    lowest full-dataset NLL, so its final training loss never exceeds the
    initial one; ``train_history`` records the full-data NLL per epoch
    (entry 0 is the untrained loss).
    """
    config = config or TrainConfig()
    parents = tuple(parents)
    for col in (node, *parents):
        if col not in dataset:
            raise NadeError(f"dataset is missing column {col!r}")
    y = np.asarray(dataset[node], dtype=float).reshape(-1)
    n = len(y)
    if n < 100:
        raise InsufficientData(f"need >= 100 rows to fit {node!r}, got {n}")
    if parents:
        x = np.column_stack([np.asarray(dataset[p], dtype=float) for p in parents])
        mean = x.mean(axis=0)
        std = x.std(axis=0)
        std[std < 1e-12] = 1.0
    else:
        x = np.ones((n, 1))
        mean, std = np.zeros(1), np.ones(1)

    rng = np.random.default_rng(config.seed)
    mech = init_mechanism(node, parents, head,
                          seed=rng.integers(2 ** 31), hidden=config.hidden,
                          input_mean=mean, input_std=std)
    cache_w = [np.zeros_like(w) for w in mech.weights]
    cache_b = [np.zeros_like(b) for b in mech.biases]

    def full_nll():
        try:
            return mech.negative_log_likelihood(x, y)
        except NonFiniteLoss as exc:
            raise Diverged(str(exc)) from exc

    best_loss = full_nll()
    best = ([w.copy() for w in mech.weights], [b.copy() for b in mech.biases])
    mech.train_history = [best_loss]

    for _ in range(config.epochs):
        order = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            try:
                grad_w, grad_b, _ = mech.gradients(x[idx], y[idx])
            except (NonFiniteLoss, NonFiniteGradient) as exc:
                raise Diverged(f"{node}: {exc}") from exc
            for w, g, c in zip(mech.weights, grad_w, cache_w):
                c *= config.decay
                c += (1.0 - config.decay) * g ** 2
                w -= config.learning_rate * g / (np.sqrt(c) + config.epsilon)
            for b, g, c in zip(mech.biases, grad_b, cache_b):
                c *= config.decay
                c += (1.0 - config.decay) * g ** 2
                b -= config.learning_rate * g / (np.sqrt(c) + config.epsilon)
        loss = full_nll()
        mech.train_history.append(loss)
        if loss < best_loss:
            best_loss = loss
            best = ([w.copy() for w in mech.weights], [b.copy() for b in mech.biases])

    mech.weights, mech.biases = best
    return mech
