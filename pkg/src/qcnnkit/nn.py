"""Classical trainable pieces: projection head, latent rescaling, MLP
classifier, class-weighted cross-entropy, and Adam.

All parameters live in plain dicts of float64 arrays so the optimizer and
checkpoint code can treat them uniformly. Weight matrices are stored as
(out_features, in_features); forward passes accept a single vector or a
batch with a leading axis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError

DEFAULT_FEATURE_DIM = 2048
DEFAULT_PROJ_HIDDEN = 256
DEFAULT_MLP_HIDDEN = (16, 8)
N_CLASSES = 4


@dataclass
class HeadParams:
    """Projection head (feature -> latent) and post-readout MLP classifier."""

    proj_w1: np.ndarray
    proj_b1: np.ndarray
    proj_w2: np.ndarray
    proj_b2: np.ndarray
    mlp_w1: np.ndarray
    mlp_b1: np.ndarray
    mlp_w2: np.ndarray
    mlp_b2: np.ndarray
    mlp_w3: np.ndarray
    mlp_b3: np.ndarray

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    @classmethod
    def from_dict(cls, d: dict) -> "HeadParams":
        return cls(**{k: np.asarray(d[k], dtype=float) for k in cls.__dataclass_fields__})

    @property
    def latent_dim(self) -> int:
        return self.proj_w2.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.proj_w1.shape[1]

    def validate(self) -> None:
        for k, v in self.to_dict().items():
            if not np.all(np.isfinite(v)):
                raise ConfigurationError(f"non-finite values in head parameter {k}")
        if self.proj_w1.shape[0] != self.proj_b1.size:
            raise ConfigurationError("proj_w1 / proj_b1 shape mismatch")
        if self.proj_w2.shape[1] != self.proj_w1.shape[0]:
            raise ConfigurationError("proj_w2 input dim must match proj_w1 output dim")
        if self.mlp_w1.shape[1] != N_CLASSES or self.mlp_w3.shape[0] != N_CLASSES:
            raise ConfigurationError("classifier MLP must map 4 readouts to 4 logits")


def _init_linear(rng: np.random.Generator, n_out: int, n_in: int):
    # uniform in +-1/sqrt(fan_in) for both weights and biases
    bound = 1.0 / math.sqrt(n_in)
    return (rng.uniform(-bound, bound, (n_out, n_in)),
            rng.uniform(-bound, bound, n_out))


def init_head(rng: np.random.Generator, latent_dim: int,
              feature_dim: int = DEFAULT_FEATURE_DIM,
              proj_hidden: int = DEFAULT_PROJ_HIDDEN,
              mlp_hidden: tuple = DEFAULT_MLP_HIDDEN) -> HeadParams:
    h1, h2 = mlp_hidden
    pw1, pb1 = _init_linear(rng, proj_hidden, feature_dim)
    pw2, pb2 = _init_linear(rng, latent_dim, proj_hidden)
    mw1, mb1 = _init_linear(rng, h1, N_CLASSES)
    mw2, mb2 = _init_linear(rng, h2, h1)
    mw3, mb3 = _init_linear(rng, N_CLASSES, h2)
    return HeadParams(pw1, pb1, pw2, pb2, mw1, mb1, mw2, mb2, mw3, mb3)


def _linear(x, w, b):
    return x @ w.T + b


def relu(x):
    return np.maximum(x, 0.0)


def sigmoid(x):
    out = np.empty_like(x, dtype=float)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


# ---------------------------------------------------------------------------
# Forward passes (with optional activation caches for the backward pass)
# ---------------------------------------------------------------------------

def project(feature: np.ndarray, head: HeadParams, cache: dict = None) -> np.ndarray:
    """linear(feature_dim -> proj_hidden) -> ReLU -> linear(-> latent_dim)."""
    x = np.asarray(feature, dtype=float)
    if x.shape[-1] != head.feature_dim:
        raise ConfigurationError(
            f"feature dim {x.shape[-1]} does not match head ({head.feature_dim})"
        )
    pre1 = _linear(x, head.proj_w1, head.proj_b1)
    h = relu(pre1)
    raw = _linear(h, head.proj_w2, head.proj_b2)
    if cache is not None:
        cache.update(feature=x, proj_pre1=pre1, proj_h=h)
    return raw


def rescale_latent(raw: np.ndarray) -> np.ndarray:
    """z = pi * sigmoid(raw): smooth, monotone, range (0, pi)."""
    return math.pi * sigmoid(np.asarray(raw, dtype=float))


def rescale_grad(raw: np.ndarray) -> np.ndarray:
    """d z / d raw = pi * sigmoid(raw) * (1 - sigmoid(raw))."""
    s = sigmoid(np.asarray(raw, dtype=float))
    return math.pi * s * (1.0 - s)


def mlp_forward(readout: np.ndarray, head: HeadParams, cache: dict = None) -> np.ndarray:
    """3 linear layers with ReLU in between; returns unbounded logits."""
    q = np.asarray(readout, dtype=float)
    if q.shape[-1] != N_CLASSES:
        raise ConfigurationError(f"readout must have length 4, got {q.shape[-1]}")
    pre1 = _linear(q, head.mlp_w1, head.mlp_b1)
    h1 = relu(pre1)
    pre2 = _linear(h1, head.mlp_w2, head.mlp_b2)
    h2 = relu(pre2)
    logits = _linear(h2, head.mlp_w3, head.mlp_b3)
    if cache is not None:
        cache.update(mlp_q=q, mlp_pre1=pre1, mlp_h1=h1, mlp_pre2=pre2, mlp_h2=h2)
    return logits


def softmax(logits: np.ndarray) -> np.ndarray:
    x = np.asarray(logits, dtype=float)
    x = x - x.max(axis=-1, keepdims=True)
    e = np.exp(x)
    return e / e.sum(axis=-1, keepdims=True)


def weighted_cross_entropy(logits: np.ndarray, label, class_weights: np.ndarray):
    """Per-sample weighted CE loss and its gradient w.r.t. the logits.

    Works on a single logits vector with an int label, or on a batch with
    a label array; batched losses come back as an array.
    """
    x = np.asarray(logits, dtype=float)
    if not np.all(np.isfinite(x)):
        raise FloatingPointError("non-finite logits in cross-entropy")
    w = np.asarray(class_weights, dtype=float)
    if np.any(w <= 0):
        raise ConfigurationError("class weights must be positive")
    labels = np.asarray(label)
    p = softmax(x)
    onehot = np.eye(N_CLASSES)[labels]
    wl = w[labels]
    logp = x - x.max(axis=-1, keepdims=True)
    logp = logp - np.log(np.exp(logp).sum(axis=-1, keepdims=True))
    loss = -wl * np.take_along_axis(
        logp, labels.reshape(labels.shape + (1,)), axis=-1
    )[..., 0]
    d_logits = wl[..., None] * (p - onehot)
    if labels.ndim == 0:
        return float(loss), d_logits
    return loss, d_logits


# ---------------------------------------------------------------------------
# Backward passes
# ---------------------------------------------------------------------------

def _linear_backward(x, d_out, w):
    """Returns (d_w, d_b, d_x) for out = x @ w.T + b, batched or single."""
    if x.ndim == 1:
        d_w = np.outer(d_out, x)
        d_b = d_out.copy()
    else:
        d_w = d_out.T @ x
        d_b = d_out.sum(axis=0)
    d_x = d_out @ w
    return d_w, d_b, d_x


def mlp_backward(cache: dict, d_logits: np.ndarray, head: HeadParams):
    """Gradients of the classifier MLP; returns (grads dict, d_readout)."""
    if "mlp_h2" not in cache:
        raise ConfigurationError("mlp_backward requires a cache from mlp_forward")
    d_w3, d_b3, d_h2 = _linear_backward(cache["mlp_h2"], d_logits, head.mlp_w3)
    d_pre2 = d_h2 * (cache["mlp_pre2"] > 0)
    d_w2, d_b2, d_h1 = _linear_backward(cache["mlp_h1"], d_pre2, head.mlp_w2)
    d_pre1 = d_h1 * (cache["mlp_pre1"] > 0)
    d_w1, d_b1, d_q = _linear_backward(cache["mlp_q"], d_pre1, head.mlp_w1)
    grads = {"mlp_w1": d_w1, "mlp_b1": d_b1, "mlp_w2": d_w2, "mlp_b2": d_b2,
             "mlp_w3": d_w3, "mlp_b3": d_b3}
    return grads, d_q


def project_backward(cache: dict, d_raw: np.ndarray, head: HeadParams) -> dict:
    """Gradients of the projection head given d(loss)/d(raw latent)."""
    if "proj_h" not in cache:
        raise ConfigurationError("project_backward requires a cache from project")
    d_w2, d_b2, d_h = _linear_backward(cache["proj_h"], d_raw, head.proj_w2)
    d_pre1 = d_h * (cache["proj_pre1"] > 0)
    d_w1, d_b1, _ = _linear_backward(cache["feature"], d_pre1, head.proj_w1)
    return {"proj_w1": d_w1, "proj_b1": d_b1, "proj_w2": d_w2, "proj_b2": d_b2}


def backward_head(feature, head: HeadParams, cache: dict, d_raw, d_logits) -> dict:
    """All HeadParams gradients from cached activations and upstream terms."""
    grads, _ = mlp_backward(cache, d_logits, head)
    grads.update(project_backward(cache, d_raw, head))
    return grads


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------

@dataclass
class AdamState:
    """Standard Adam with bias correction over a dict of parameter arrays."""

    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def step(self, params: dict, grads: dict) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for k, p in params.items():
            g = grads[k]
            if g.shape != p.shape:
                raise ConfigurationError(
                    f"gradient shape {g.shape} does not match parameter {k} {p.shape}"
                )
            if k not in self.m:
                self.m[k] = np.zeros_like(p)
                self.v[k] = np.zeros_like(p)
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * (g * g)
            m_hat = self.m[k] / bc1
            v_hat = self.v[k] / bc2
            p -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def adam_step(params: dict, grads: dict, state: AdamState) -> None:
    state.step(params, grads)
