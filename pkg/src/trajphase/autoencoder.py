"""Fully connected autoencoder with a two-dimensional bottleneck.

Layers ``D -> H -> 2 -> H -> D``; ReLU after the two width-``H`` layers and
identity on the bottleneck and the output. Trained on the mean squared
reconstruction error with mini-batch Adam.
"""

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .errors import DatasetError, ParameterError, TrainingError

LATENT_DIM = 2
_RELU_LAYERS = (0, 2)

CHECKPOINT_MAGIC = b"QAEM"
CHECKPOINT_VERSION = 1


@dataclass
class AutoencoderModel:
    layer_dims: tuple
    weights: list
    biases: list
    seed: int = 0

    @property
    def params(self):
        out = []
        for W, b in zip(self.weights, self.biases):
            out.extend([W, b])
        return out

    def copy(self):
        return AutoencoderModel(
            tuple(self.layer_dims),
            [W.copy() for W in self.weights],
            [b.copy() for b in self.biases],
            self.seed,
        )


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    epochs: int = 20
    batch_size: int = 10
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    shuffle_seed: int = 0

    def __post_init__(self):
        for name in ("learning_rate", "epochs", "batch_size", "epsilon"):
            if not getattr(self, name) > 0:
                raise ParameterError(f"{name} must be positive")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ParameterError("Adam decay rates must lie in (0, 1)")


@dataclass
class AdamState:
    m: list
    v: list
    t: int = 0

    @classmethod
    def zeros_like(cls, model):
        return cls([np.zeros_like(p) for p in model.params], [np.zeros_like(p) for p in model.params])


def init_model(layer_dims, seed=0):
    """Gaussian weights with standard deviation ``1/sqrt(fan_in)``, zero biases."""
    dims = tuple(int(d) for d in layer_dims)
    if len(dims) != 5:
        raise ParameterError(f"expected 5 layer sizes, got {len(dims)}")
    if min(dims) < 1:
        raise ParameterError(f"zero-sized layer in {dims}")
    if dims[2] != LATENT_DIM:
        raise ParameterError(f"latent layer must have width {LATENT_DIM}")
    if dims[0] != dims[4] or dims[1] != dims[3]:
        raise ParameterError(f"layer sizes {dims} are not symmetric")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        weights.append(rng.normal(0.0, 1.0 / np.sqrt(fan_in), size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return AutoencoderModel(dims, weights, biases, seed)


def _check_input(model, x):
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != model.layer_dims[0]:
        raise ParameterError(f"input has {x.shape[-1]} features, model expects {model.layer_dims[0]}")
    return x


def _forward_cache(model, x):
    acts = [x]
    pre = []
    a = x
    for i, (W, b) in enumerate(zip(model.weights, model.biases)):
        z = a @ W.T + b
        pre.append(z)
        a = np.maximum(z, 0.0) if i in _RELU_LAYERS else z
        acts.append(a)
    return pre, acts


def forward(model, x):
    """Return ``(latent, reconstruction)`` for one row or a batch of rows."""
    x = _check_input(model, x)
    _, acts = _forward_cache(model, x)
    return acts[2], acts[4]


def encode(model, x):
    x = _check_input(model, x)
    a = x
    for i in (0, 1):
        z = a @ model.weights[i].T + model.biases[i]
        a = np.maximum(z, 0.0) if i in _RELU_LAYERS else z
    return a


def decode(model, z):
    a = np.asarray(z, dtype=float)
    for i in (2, 3):
        h = a @ model.weights[i].T + model.biases[i]
        a = np.maximum(h, 0.0) if i in _RELU_LAYERS else h
    return a


def loss_and_gradients(model, batch, batch_index=0):
    """Mean squared error over batch and features, and its gradients.

    Gradients come back as ``[dW1, db1, ..., dW4, db4]`` in the order of
    ``model.params``.
    """
    x = _check_input(model, np.atleast_2d(batch))
    if x.shape[0] == 0:
        raise DatasetError("empty batch")
    pre, acts = _forward_cache(model, x)
    diff = acts[4] - x
    loss = float(np.mean(diff**2))
    if not np.isfinite(loss):
        raise TrainingError(batch_index)
    delta = 2.0 * diff / diff.size
    grads = [None] * 8
    for i in range(3, -1, -1):
        if i in _RELU_LAYERS:
            delta = delta * (pre[i] > 0)
        grads[2 * i] = delta.T @ acts[i]
        grads[2 * i + 1] = delta.sum(axis=0)
        if i > 0:
            delta = delta @ model.weights[i]
    return loss, grads


def adam_step(model, state, grads, config):
    """Bias-corrected Adam update, applied in place; returns ``model``."""
    params = model.params
    if len(grads) != len(params) or len(state.m) != len(params):
        raise ParameterError("gradient / optimizer state does not match the model")
    state.t += 1
    b1, b2 = config.beta1, config.beta2
    c1 = 1.0 - b1**state.t
    c2 = 1.0 - b2**state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if g.shape != p.shape or m.shape != p.shape:
            raise ParameterError(f"shape mismatch {g.shape} vs {p.shape}")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= config.learning_rate * (m / c1) / (np.sqrt(v / c2) + config.epsilon)
    return model


def train(model, X, config, state=None):
    """Mini-batch training; returns ``(model, per-epoch mean loss, state)``.

    The model is updated in place. Rows are reshuffled every epoch with a
    permutation drawn from ``config.shuffle_seed``; the last batch may be
    smaller than ``config.batch_size``.
    """
    X = _check_input(model, np.atleast_2d(X))
    n = X.shape[0]
    if n == 0:
        raise DatasetError("empty training set")
    if config.batch_size > n:
        raise ParameterError(f"batch size {config.batch_size} exceeds dataset size {n}")
    if state is None:
        state = AdamState.zeros_like(model)
    rng = np.random.default_rng(config.shuffle_seed)
    history = []
    batch_index = 0
    for _ in range(config.epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            loss, grads = loss_and_gradients(model, X[idx], batch_index)
            adam_step(model, state, grads, config)
            total += loss * len(idx)
            batch_index += 1
        history.append(total / n)
    return model, history, state


def save_checkpoint(path, model):
    """Header (magic, version, layer sizes) then f64 blocks W1, b1, ..., W4, b4."""
    dims = model.layer_dims
    with open(path, "wb") as fh:
        fh.write(struct.pack("<4sHB", CHECKPOINT_MAGIC, CHECKPOINT_VERSION, len(dims)))
        fh.write(struct.pack(f"<{len(dims)}I", *dims))
        fh.write(struct.pack("<Q", int(model.seed)))
        for p in model.params:
            fh.write(np.ascontiguousarray(p, dtype="<f8").tobytes())


def load_checkpoint(path):
    from .errors import BadMagicError, TruncatedPayloadError, VersionMismatchError

    data = Path(path).read_bytes()
    if data[:4] != CHECKPOINT_MAGIC:
        raise BadMagicError(f"{path}: not an autoencoder checkpoint")
    _, version, n = struct.unpack_from("<4sHB", data)
    if version != CHECKPOINT_VERSION:
        raise VersionMismatchError(f"{path}: checkpoint version {version}")
    off = struct.calcsize("<4sHB")
    dims = struct.unpack_from(f"<{n}I", data, off)
    off += 4 * n
    (seed,) = struct.unpack_from("<Q", data, off)
    off += 8
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        for shape in ((fan_out, fan_in), (fan_out,)):
            size = int(np.prod(shape))
            if len(data) < off + 8 * size:
                raise TruncatedPayloadError(f"{path}: truncated parameter block")
            block = np.frombuffer(data, dtype="<f8", count=size, offset=off).astype(float)
            off += 8 * size
            (weights if len(shape) == 2 else biases).append(block.reshape(shape))
    return AutoencoderModel(tuple(dims), weights, biases, seed)


def save_loss_history(path, history):
    lines = ["epoch,loss"] + [f"{i + 1},{loss:.17g}" for i, loss in enumerate(history)]
    Path(path).write_text("\n".join(lines) + "\n")


class Autoencoder(TransformerMixin, BaseEstimator):
    """Scikit-learn wrapper: ``fit`` trains, ``transform`` returns the 2-d codes.

    Parameters
    ----------
    hidden_dim : int
        Width of the two hidden ReLU layers.
    learning_rate, epochs, batch_size : training schedule.
    beta1, beta2, epsilon : Adam constants.
    random_state : int
        Seed for the weight initialization.
    shuffle_seed : int or None
        Seed of the per-epoch permutations; ``None`` uses ``random_state + 1``.
    """

    def __init__(
        self,
        hidden_dim=1000,
        learning_rate=1e-3,
        epochs=20,
        batch_size=10,
        beta1=0.9,
        beta2=0.999,
        epsilon=1e-8,
        random_state=0,
        shuffle_seed=None,
    ):
        self.hidden_dim = hidden_dim
        self.learning_rate = learning_rate
        self.epochs = epochs
        self.batch_size = batch_size
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.random_state = random_state
        self.shuffle_seed = shuffle_seed

    def _config(self):
        seed = self.random_state + 1 if self.shuffle_seed is None else self.shuffle_seed
        return TrainConfig(
            self.learning_rate, self.epochs, self.batch_size, self.beta1, self.beta2, self.epsilon, seed
        )

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64)
        d = X.shape[1]
        self.model_ = init_model((d, self.hidden_dim, LATENT_DIM, self.hidden_dim, d), self.random_state)
        _, self.loss_history_, self.optimizer_state_ = train(self.model_, X, self._config())
        self.n_features_in_ = d
        return self

    def transform(self, X):
        check_is_fitted(self, "model_")
        return encode(self.model_, check_array(X, dtype=np.float64))

    def inverse_transform(self, Z):
        check_is_fitted(self, "model_")
        return decode(self.model_, check_array(Z, dtype=np.float64))

    def reconstruct(self, X):
        check_is_fitted(self, "model_")
        return forward(self.model_, check_array(X, dtype=np.float64))[1]

    def score(self, X, y=None):
        """Negative mean squared reconstruction error."""
        X = check_array(X, dtype=np.float64)
        return -float(np.mean((self.reconstruct(X) - X) ** 2))

    @classmethod
    def from_model(cls, model, **params):
        est = cls(hidden_dim=model.layer_dims[1], random_state=model.seed, **params)
        est.model_ = model
        est.n_features_in_ = model.layer_dims[0]
        return est
