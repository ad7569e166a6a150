"""Deep MLP for binary classification, written directly in numpy.

The layer ladder is [d_in, 1024, 512, 128, 64, 32, 16, 8, 1]: a LeakyReLU
input layer, ReLU hidden layers, and a single sigmoid output neuron trained
with binary cross-entropy. Backpropagation is hand-coded; the optimizer is
Adam with the AMSGrad running-maximum of the second moment.

Parameters live in one flat float64 buffer; the per-layer weight and bias
matrices are views into it, which keeps the optimizer update a single
vector pass.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .errors import (
    CorruptModel,
    InvalidLayerLadder,
    LengthMismatch,
    NonFiniteGradient,
    SchemaMismatch,
    ShapeMismatch,
)

MODEL_SCHEMA_VERSION = 1
DEFAULT_HIDDEN = (1024, 512, 128, 64, 32, 16, 8)
BCE_CLIP = 1e-7


def leaky_relu(x, alpha: float = 0.01):
    """max(alpha*x, x) elementwise."""
    return np.maximum(np.multiply(alpha, x), x)


def relu(x):
    """max(0, x) elementwise."""
    return np.maximum(x, 0.0)


def sigmoid(x):
    """Logistic 1/(1+e^-x), stable for large |x|."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    if out.ndim == 0:
        return float(out)
    return out


def _validate_ladder(layer_sizes) -> list[int]:
    sizes = [int(s) for s in layer_sizes]
    if len(sizes) < 2:
        raise InvalidLayerLadder("need at least an input and an output layer")
    if any(s < 1 for s in sizes):
        raise InvalidLayerLadder(f"layer sizes must be positive: {sizes}")
    if sizes[-1] != 1:
        raise InvalidLayerLadder("output layer must have exactly 1 neuron")
    return sizes


def _param_count(sizes: list[int]) -> int:
    return sum(a * b + b for a, b in zip(sizes, sizes[1:]))


def _carve(theta: np.ndarray, sizes: list[int]) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Slice the flat buffer into per-layer weight/bias views."""
    weights, biases, offset = [], [], 0
    for a, b in zip(sizes, sizes[1:]):
        weights.append(theta[offset:offset + a * b].reshape(a, b))
        offset += a * b
        biases.append(theta[offset:offset + b])
        offset += b
    return weights, biases


@dataclass
class Mlp:
    layer_sizes: list[int]
    alpha: float = 0.01
    theta: np.ndarray = None  # flat parameter buffer
    weights: list[np.ndarray] = field(default_factory=list)  # views into theta
    biases: list[np.ndarray] = field(default_factory=list)

    @property
    def activation_names(self) -> list[str]:
        n = len(self.layer_sizes) - 1
        names = ["leaky_relu"] + ["relu"] * (n - 2) + ["sigmoid"] if n >= 2 else ["sigmoid"]
        return names

    def copy(self) -> "Mlp":
        clone = Mlp(layer_sizes=list(self.layer_sizes), alpha=self.alpha,
                    theta=self.theta.copy())
        clone.weights, clone.biases = _carve(clone.theta, clone.layer_sizes)
        return clone


def init_mlp(layer_sizes, alpha: float = 0.01, seed: int = 0) -> Mlp:
    """Glorot-uniform weights from a seeded generator; zero biases."""
    sizes = _validate_ladder(layer_sizes)
    rng = np.random.default_rng(seed)
    theta = np.zeros(_param_count(sizes))
    mlp = Mlp(layer_sizes=sizes, alpha=alpha, theta=theta)
    mlp.weights, mlp.biases = _carve(theta, sizes)
    for w in mlp.weights:
        limit = math.sqrt(6.0 / (w.shape[0] + w.shape[1]))
        w[...] = rng.uniform(-limit, limit, size=w.shape)
    return mlp


@dataclass
class ForwardTrace:
    """All intermediates of one forward pass, retained for backprop."""

    x: np.ndarray
    pre_activations: list[np.ndarray]
    activations: list[np.ndarray]  # last entry is the sigmoid output

    @property
    def y_hat(self) -> np.ndarray:
        return self.activations[-1][:, 0]


def forward(mlp: Mlp, x: np.ndarray) -> ForwardTrace:
    """Full forward pass retaining every layer's pre-activation and output."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != mlp.layer_sizes[0]:
        raise ShapeMismatch(
            f"input shape {x.shape} incompatible with d_in={mlp.layer_sizes[0]}"
        )
    n_layers = len(mlp.weights)
    zs, acts = [], []
    a = x
    for i, (w, b) in enumerate(zip(mlp.weights, mlp.biases)):
        z = a @ w + b
        zs.append(z)
        if i == n_layers - 1:
            a = sigmoid(z)
        elif i == 0:
            a = leaky_relu(z, mlp.alpha)
        else:
            a = relu(z)
        acts.append(a)
    return ForwardTrace(x=x, pre_activations=zs, activations=acts)


def forward_probs(mlp: Mlp, x: np.ndarray, chunk: int = 4096) -> np.ndarray:
    """Output probabilities only, chunked to bound peak memory."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != mlp.layer_sizes[0]:
        raise ShapeMismatch(
            f"input shape {x.shape} incompatible with d_in={mlp.layer_sizes[0]}"
        )
    if x.shape[0] <= chunk:
        return forward(mlp, x).y_hat
    parts = [forward(mlp, x[i:i + chunk]).y_hat for i in range(0, x.shape[0], chunk)]
    return np.concatenate(parts)


def bce_loss(y_hat: np.ndarray, y: np.ndarray) -> float:
    """Mean binary cross-entropy with predictions clipped away from {0, 1}."""
    y_hat = np.asarray(y_hat, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if y_hat.shape != y.shape:
        raise LengthMismatch(f"{y_hat.shape} vs {y.shape}")
    p = np.clip(y_hat, BCE_CLIP, 1.0 - BCE_CLIP)
    return float(-np.mean(y * np.log(p) + (1.0 - y) * np.log(1.0 - p)))


@dataclass
class Gradients:
    theta: np.ndarray  # flat, same layout as Mlp.theta
    weights: list[np.ndarray]
    biases: list[np.ndarray]


def backward(mlp: Mlp, trace: ForwardTrace, y: np.ndarray) -> Gradients:
    """Exact gradients of the mean BCE loss w.r.t. every weight and bias.

    Uses dL/dz_out = (y_hat - y)/n for the fused sigmoid+BCE head. The
    LeakyReLU subgradient at 0 is alpha; the ReLU subgradient at 0 is 0.
    """
    y = np.asarray(y, dtype=np.float64)
    batch = trace.x.shape[0]
    if y.shape != (batch,):
        raise ShapeMismatch(f"labels shape {y.shape}, expected ({batch},)")
    gtheta = np.empty_like(mlp.theta)  # every slot is written below
    gws, gbs = _carve(gtheta, mlp.layer_sizes)

    dz = (trace.activations[-1] - y[:, None]) / batch
    for i in range(len(mlp.weights) - 1, -1, -1):
        a_prev = trace.x if i == 0 else trace.activations[i - 1]
        gws[i][...] = a_prev.T @ dz
        gbs[i][...] = dz.sum(axis=0)
        if i > 0:
            da = dz @ mlp.weights[i].T
            z = trace.pre_activations[i - 1]
            if i - 1 == 0:
                dz = da * np.where(z > 0, 1.0, mlp.alpha)
            else:
                dz = da * (z > 0)
    return Gradients(theta=gtheta, weights=gws, biases=gbs)


@dataclass
class OptimizerState:
    """AMSGrad moments over the flat parameter buffer."""

    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-7
    bias_correction: bool = True
    t: int = 0
    m: np.ndarray = None
    v: np.ndarray = None
    v_hat: np.ndarray = None


def init_optimizer(
    mlp: Mlp,
    lr: float = 0.001,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-7,
    bias_correction: bool = True,
) -> OptimizerState:
    n = mlp.theta.size
    return OptimizerState(
        lr=lr, beta1=beta1, beta2=beta2, eps=eps, bias_correction=bias_correction,
        t=0, m=np.zeros(n), v=np.zeros(n), v_hat=np.zeros(n),
    )


@njit(cache=True)
def _amsgrad_kernel(theta, g, m, v, v_hat, step_size, beta1, beta2, eps):
    for i in range(theta.size):
        gi = g[i]
        mi = beta1 * m[i] + (1.0 - beta1) * gi
        vi = beta2 * v[i] + (1.0 - beta2) * gi * gi
        m[i] = mi
        v[i] = vi
        vhi = max(v_hat[i], vi)
        v_hat[i] = vhi
        theta[i] -= step_size * mi / (math.sqrt(vhi) + eps)


def amsgrad_step(mlp: Mlp, grads: Gradients, state: OptimizerState) -> None:
    """One in-place AMSGrad update of the model parameters.

    With bias correction the effective step is
    lr * sqrt(1 - beta2^t) / (1 - beta1^t); without it, plain lr.
    """
    g = grads.theta
    if g.shape != mlp.theta.shape:
        raise ShapeMismatch(f"gradient size {g.shape} vs parameters {mlp.theta.shape}")
    if not np.isfinite(g).all():
        raise NonFiniteGradient("gradient contains non-finite values")
    state.t += 1
    if state.bias_correction:
        step_size = state.lr * math.sqrt(1.0 - state.beta2 ** state.t) / (
            1.0 - state.beta1 ** state.t
        )
    else:
        step_size = state.lr
    _amsgrad_kernel(
        mlp.theta, g, state.m, state.v, state.v_hat,
        step_size, state.beta1, state.beta2, state.eps,
    )


# --- serialization --------------------------------------------------------

def save_model(mlp: Mlp, feature_spec: dict | None = None,
               standardization: dict | None = None, extra: dict | None = None) -> str:
    """Model, encoding spec, and standardization as JSON text.

    Number rendering is full-precision repr, so load(save(m)) reproduces
    the weights bit-exactly.
    """
    doc = {
        "schema_version": MODEL_SCHEMA_VERSION,
        "layer_sizes": list(mlp.layer_sizes),
        "alpha": mlp.alpha,
        "activations": mlp.activation_names,
        "weights": [w.tolist() for w in mlp.weights],
        "biases": [b.tolist() for b in mlp.biases],
        "feature_spec": feature_spec,
        "standardization": standardization,
    }
    if extra:
        doc.update(extra)
    return json.dumps(doc)


def load_model(text: str) -> tuple[Mlp, dict | None, dict | None]:
    """Parse a model file back into (Mlp, feature_spec, standardization)."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CorruptModel(f"invalid JSON: {exc}") from None
    if not isinstance(doc, dict) or "schema_version" not in doc:
        raise CorruptModel("missing schema_version")
    if doc["schema_version"] != MODEL_SCHEMA_VERSION:
        raise SchemaMismatch(
            f"schema_version {doc['schema_version']}, expected {MODEL_SCHEMA_VERSION}"
        )
    try:
        sizes = _validate_ladder(doc["layer_sizes"])
        mlp = Mlp(layer_sizes=sizes, alpha=float(doc["alpha"]),
                  theta=np.zeros(_param_count(sizes)))
        mlp.weights, mlp.biases = _carve(mlp.theta, sizes)
        for w, raw in zip(mlp.weights, doc["weights"], strict=True):
            arr = np.asarray(raw, dtype=np.float64)
            if arr.shape != w.shape:
                raise CorruptModel(f"weight shape {arr.shape}, expected {w.shape}")
            w[...] = arr
        for b, raw in zip(mlp.biases, doc["biases"], strict=True):
            arr = np.asarray(raw, dtype=np.float64)
            if arr.shape != b.shape:
                raise CorruptModel(f"bias shape {arr.shape}, expected {b.shape}")
            b[...] = arr
    except CorruptModel:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise CorruptModel(f"malformed model document: {exc}") from None
    return mlp, doc.get("feature_spec"), doc.get("standardization")
