"""Minimal feed-forward network engine with reverse-mode gradients.

Everything numeric lives here: dense/batch-norm/dropout/activation layers,
the two losses (MSE for coordinates, logit BCE for the environment bit),
the Adam optimizer, and a central-difference gradient oracle used by the
test suite to certify the analytic backward passes.

All layers operate on float64 batches shaped (N, features).  A layer owns
its parameter arrays and writes gradients into same-shaped buffers during
``backward``; the optimizer consumes the aligned ``parameters()`` /
``gradients()`` lists of the enclosing :class:`Network`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError, NumericError, ShapeError, StateError

BN_MOMENTUM = 0.9
BN_EPS = 1e-5


def sigmoid(z):
    """Numerically stable logistic function."""
    z = np.asarray(z, dtype=np.float64)
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def he_uniform(rng: np.random.Generator, out_dim: int, in_dim: int) -> np.ndarray:
    """Uniform init with ReLU-appropriate scale, shape (out, in)."""
    limit = np.sqrt(6.0 / in_dim)
    return rng.uniform(-limit, limit, size=(out_dim, in_dim))


def glorot_uniform(rng: np.random.Generator, out_dim: int, in_dim: int) -> np.ndarray:
    """Uniform init balancing fan-in and fan-out, for linear outputs."""
    limit = np.sqrt(6.0 / (in_dim + out_dim))
    return rng.uniform(-limit, limit, size=(out_dim, in_dim))


class DenseLayer:
    """Affine map y = x W^T + b with an optional fused activation."""

    def __init__(self, weight: np.ndarray, bias: np.ndarray, activation: str = "linear"):
        weight = np.asarray(weight, dtype=np.float64)
        bias = np.asarray(bias, dtype=np.float64)
        if weight.ndim != 2 or bias.shape != (weight.shape[0],):
            raise ShapeError(
                f"weight {weight.shape} and bias {bias.shape} are inconsistent"
            )
        if activation not in ("linear", "relu"):
            raise ConfigError(f"unknown activation {activation!r}")
        self.weight = weight
        self.bias = bias
        self.activation = activation
        self.grad_weight = np.zeros_like(weight)
        self.grad_bias = np.zeros_like(bias)
        self._cache = None

    @property
    def in_dim(self) -> int:
        return self.weight.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weight.shape[0]

    def forward(self, x: np.ndarray, training: bool) -> np.ndarray:
        if x.ndim != 2 or x.shape[1] != self.in_dim:
            raise ShapeError(f"expected (N, {self.in_dim}) input, got {x.shape}")
        z = x @ self.weight.T + self.bias
        self._cache = (x, z)
        return np.maximum(z, 0.0) if self.activation == "relu" else z

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        if self._cache is None:
            raise StateError("backward called before forward on DenseLayer")
        x, z = self._cache
        grad_z = grad_out * (z > 0.0) if self.activation == "relu" else grad_out
        self.grad_weight[...] = grad_z.T @ x
        self.grad_bias[...] = grad_z.sum(axis=0)
        self._cache = None
        return grad_z @ self.weight

    def parameters(self):
        return [self.weight, self.bias]

    def gradients(self):
        return [self.grad_weight, self.grad_bias]

    def state_arrays(self):
        return [self.weight, self.bias]


class BatchNormLayer:
    """Per-feature batch normalization with learned scale and shift.

    Training mode normalizes by the biased batch variance and updates the
    running statistics as ``running = m * running + (1 - m) * batch``;
    inference mode normalizes by the running statistics.
    """

    def __init__(self, dim: int, momentum: float = BN_MOMENTUM, eps: float = BN_EPS):
        if dim < 1:
            raise ConfigError("BatchNormLayer needs dim >= 1")
        if not (0.0 <= momentum < 1.0):
            raise ConfigError(f"momentum must lie in [0, 1), got {momentum}")
        self.gamma = np.ones(dim, dtype=np.float64)
        self.beta = np.zeros(dim, dtype=np.float64)
        self.running_mean = np.zeros(dim, dtype=np.float64)
        self.running_var = np.ones(dim, dtype=np.float64)
        self.momentum = momentum
        self.eps = eps
        self.grad_gamma = np.zeros(dim, dtype=np.float64)
        self.grad_beta = np.zeros(dim, dtype=np.float64)
        self._cache = None

    def forward(self, x: np.ndarray, training: bool) -> np.ndarray:
        if x.ndim != 2 or x.shape[1] != self.gamma.shape[0]:
            raise ShapeError(
                f"expected (N, {self.gamma.shape[0]}) input, got {x.shape}"
            )
        if training:
            if x.shape[0] < 2:
                raise DataError("batch norm in training mode needs batch size >= 2")
            mean = x.mean(axis=0)
            var = x.var(axis=0)  # biased, matches the backward pass
            m = self.momentum
            self.running_mean[...] = m * self.running_mean + (1.0 - m) * mean
            self.running_var[...] = m * self.running_var + (1.0 - m) * var
        else:
            mean, var = self.running_mean, self.running_var
        inv_std = 1.0 / np.sqrt(var + self.eps)
        x_hat = (x - mean) * inv_std
        self._cache = (x_hat, inv_std, training)
        return self.gamma * x_hat + self.beta

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        if self._cache is None:
            raise StateError("backward called before forward on BatchNormLayer")
        x_hat, inv_std, training = self._cache
        self._cache = None
        self.grad_gamma[...] = (grad_out * x_hat).sum(axis=0)
        self.grad_beta[...] = grad_out.sum(axis=0)
        grad_hat = grad_out * self.gamma
        if not training:
            # running stats are constants in inference mode
            return grad_hat * inv_std
        n = grad_hat.shape[0]
        return (inv_std / n) * (
            n * grad_hat
            - grad_hat.sum(axis=0)
            - x_hat * (grad_hat * x_hat).sum(axis=0)
        )

    def parameters(self):
        return [self.gamma, self.beta]

    def gradients(self):
        return [self.grad_gamma, self.grad_beta]

    def state_arrays(self):
        return [self.gamma, self.beta, self.running_mean, self.running_var]


class ActivationLayer:
    """Standalone elementwise nonlinearity (used after batch norm)."""

    def __init__(self, kind: str = "relu"):
        if kind != "relu":
            raise ConfigError(f"unknown activation {kind!r}")
        self.kind = kind
        self._cache = None

    def forward(self, x: np.ndarray, training: bool) -> np.ndarray:
        self._cache = x
        return np.maximum(x, 0.0)

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        if self._cache is None:
            raise StateError("backward called before forward on ActivationLayer")
        x = self._cache
        self._cache = None
        return grad_out * (x > 0.0)

    def parameters(self):
        return []

    def gradients(self):
        return []

    def state_arrays(self):
        return []


class DropoutLayer:
    """Inverted dropout: active in training mode, identity at inference."""

    def __init__(self, rate: float, rng: np.random.Generator | None = None):
        if not (0.0 <= rate < 1.0):
            raise ConfigError(f"dropout rate must lie in [0, 1), got {rate}")
        self.rate = rate
        self.rng = rng if rng is not None else np.random.default_rng()
        self._cache = None

    def forward(self, x: np.ndarray, training: bool) -> np.ndarray:
        if not training or self.rate == 0.0:
            self._cache = 1.0
            return x
        keep = 1.0 - self.rate
        mask = (self.rng.random(x.shape) < keep) / keep
        self._cache = mask
        return x * mask

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        if self._cache is None:
            raise StateError("backward called before forward on DropoutLayer")
        mask = self._cache
        self._cache = None
        return grad_out * mask

    def parameters(self):
        return []

    def gradients(self):
        return []

    def state_arrays(self):
        return []


class Network:
    """Ordered layer stack with a single training/inference switch."""

    def __init__(self, layers):
        self.layers = list(layers)
        self.training = True

    def set_mode(self, mode: str) -> None:
        if mode not in ("train", "infer"):
            raise ConfigError(f"mode must be 'train' or 'infer', got {mode!r}")
        self.training = mode == "train"

    def forward(self, x: np.ndarray) -> np.ndarray:
        out = np.asarray(x, dtype=np.float64)
        for layer in self.layers:
            out = layer.forward(out, self.training)
        return out

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        grad = grad_out
        for layer in reversed(self.layers):
            grad = layer.backward(grad)
        return grad

    def parameters(self):
        return [p for layer in self.layers for p in layer.parameters()]

    def gradients(self):
        return [g for layer in self.layers for g in layer.gradients()]

    def state_arrays(self):
        return [a for layer in self.layers for a in layer.state_arrays()]


def mse_loss(pred: np.ndarray, target: np.ndarray):
    """Mean squared error over all elements; returns (loss, grad wrt pred)."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ShapeError(f"pred {pred.shape} vs target {target.shape}")
    diff = pred - target
    loss = float(np.mean(diff * diff))
    return loss, 2.0 * diff / diff.size


def bce_loss(logits: np.ndarray, target: np.ndarray):
    """Binary cross-entropy on raw logits; returns (loss, grad wrt logits).

    Uses log(1 + e^z) - y z via logaddexp, which is stable for large |z|.
    Targets must be exactly 0 or 1.
    """
    logits = np.asarray(logits, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if logits.shape != target.shape:
        raise ShapeError(f"logits {logits.shape} vs target {target.shape}")
    if not np.all((target == 0.0) | (target == 1.0)):
        raise DataError("BCE targets must be exactly 0 or 1")
    loss = float(np.mean(np.logaddexp(0.0, logits) - target * logits))
    return loss, (sigmoid(logits) - target) / logits.size


@dataclass
class AdamState:
    """First and second moment buffers plus the step counter."""

    m: list = field(default_factory=list)
    v: list = field(default_factory=list)
    t: int = 0

    @classmethod
    def for_parameters(cls, params) -> "AdamState":
        return cls(
            m=[np.zeros_like(p) for p in params],
            v=[np.zeros_like(p) for p in params],
        )


def adam_step(
    params,
    grads,
    state: AdamState,
    lr: float = 5e-4,
    beta1: float = 0.1,
    beta2: float = 0.99,
    eps: float = 1e-8,
) -> None:
    """One in-place Adam update with bias correction.

    ``beta2 == 0`` switches the adaptive denominator off entirely, so the
    update degenerates to (momentum) SGD; with ``beta1 == 0`` as well it
    is exactly ``p -= lr * g``.
    """
    if lr <= 0.0:
        raise ConfigError(f"lr must be positive, got {lr}")
    if not (0.0 <= beta1 < 1.0) or not (0.0 <= beta2 < 1.0):
        raise ConfigError(f"betas must lie in [0, 1), got {beta1}, {beta2}")
    if eps <= 0.0:
        raise ConfigError(f"eps must be positive, got {eps}")
    if len(params) != len(state.m):
        raise ShapeError("optimizer state does not match the parameter list")
    state.t += 1
    t = state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if not np.all(np.isfinite(g)):
            raise NumericError("non-finite gradient in adam_step")
        m[...] = beta1 * m + (1.0 - beta1) * g
        m_hat = m / (1.0 - beta1**t)
        if beta2 == 0.0:
            p -= lr * m_hat
        else:
            v[...] = beta2 * v + (1.0 - beta2) * g * g
            v_hat = v / (1.0 - beta2**t)
            p -= lr * m_hat / (np.sqrt(v_hat) + eps)
        if not np.all(np.isfinite(p)):
            raise NumericError("non-finite parameter after adam_step")


def _loss_with_stats_restored(net: Network, loss_fn, x, target) -> float:
    # training-mode forward mutates BN running stats; undo that so the
    # oracle's many probe evaluations leave the network untouched
    saved = [
        (layer, layer.running_mean.copy(), layer.running_var.copy())
        for layer in net.layers
        if isinstance(layer, BatchNormLayer)
    ]
    loss, _ = loss_fn(net.forward(x), target)
    for layer, mean, var in saved:
        layer.running_mean[...] = mean
        layer.running_var[...] = var
    return loss


def finite_difference_grad(net: Network, loss_fn, x, target, h: float = 1e-3):
    """Central-difference gradient of the loss wrt every network parameter.

    Independent oracle for the analytic backward passes.  Requires all
    dropout rates to be zero (a random mask would change between probes)
    and must be called in training mode so batch norm uses batch
    statistics, matching what ``backward`` differentiates.
    """
    if not net.training:
        raise StateError("gradient oracle requires training mode")
    for layer in net.layers:
        if isinstance(layer, DropoutLayer) and layer.rate != 0.0:
            raise ConfigError("gradient oracle requires all dropout rates = 0")
    numeric = []
    for p in net.parameters():
        grad = np.zeros_like(p)
        it = np.nditer(p, flags=["multi_index"])
        while not it.finished:
            idx = it.multi_index
            orig = p[idx]
            p[idx] = orig + h
            loss_plus = _loss_with_stats_restored(net, loss_fn, x, target)
            p[idx] = orig - h
            loss_minus = _loss_with_stats_restored(net, loss_fn, x, target)
            p[idx] = orig
            grad[idx] = (loss_plus - loss_minus) / (2.0 * h)
            it.iternext()
        numeric.append(grad)
    return numeric


def gradient_relative_error(analytic, numeric) -> float:
    """Norm-based relative error between two aligned gradient lists."""
    a = np.concatenate([np.asarray(g, dtype=np.float64).ravel() for g in analytic])
    n = np.concatenate([np.asarray(g, dtype=np.float64).ravel() for g in numeric])
    if a.shape != n.shape:
        raise ShapeError("gradient lists have different total sizes")
    denom = np.linalg.norm(a) + np.linalg.norm(n)
    if denom == 0.0:
        return 0.0
    return float(np.linalg.norm(a - n) / denom)
