"""Minimal neural-network engine with hand-derived gradients.

Layers cache their forward inputs and accumulate parameter gradients on the
backward pass; an Adam optimizer updates the flat parameter list in place.
Everything is float64 so the finite-difference check can resolve 1e-4
relative agreement.
"""

from __future__ import annotations

import numpy as np

from .errors import DataError, NumericalError, TrainingError

_UNDERFLOW_FLOOR = 1e-300


class DenseLayer:
    """Affine map with optional ReLU: y = act(x W^T + b)."""

    def __init__(self, weights: np.ndarray, biases: np.ndarray, activation: str = "identity"):
        if activation not in ("relu", "identity"):
            raise ValueError(f"unsupported activation: {activation!r}")
        self.w = np.asarray(weights, dtype=float)
        self.b = np.asarray(biases, dtype=float)
        self.activation = activation
        self.dw = np.zeros_like(self.w)
        self.db = np.zeros_like(self.b)
        self._x = None
        self._pre = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._x = x
        self._pre = x @ self.w.T + self.b
        if self.activation == "relu":
            return np.maximum(self._pre, 0.0)
        return self._pre

    def infer(self, x: np.ndarray) -> np.ndarray:
        """Forward pass without caching; for evaluation-only calls."""
        pre = x @ self.w.T + self.b
        return np.maximum(pre, 0.0) if self.activation == "relu" else pre

    def backward(self, grad: np.ndarray) -> np.ndarray:
        if self.activation == "relu":
            grad = grad * (self._pre > 0.0)
        self.dw += grad.T @ self._x
        self.db += grad.sum(axis=0)
        return grad @ self.w

    def params(self):
        return [self.w, self.b]

    def grads(self):
        return [self.dw, self.db]

    def astype(self, dtype) -> "DenseLayer":
        return DenseLayer(self.w.astype(dtype), self.b.astype(dtype), self.activation)


class RbfLayer:
    """Gaussian units phi_i = exp(-||x - c_i||^2 / sigma_i^2).

    Spreads are trained in log space (sigma = exp(rho)) so positivity is
    structural rather than a constraint.
    """

    def __init__(self, centers: np.ndarray, log_spreads: np.ndarray):
        self.c = np.asarray(centers, dtype=float)
        self.rho = np.asarray(log_spreads, dtype=float)
        self.dc = np.zeros_like(self.c)
        self.drho = np.zeros_like(self.rho)
        self._x = None
        self._diff = None
        self._d2 = None
        self._phi = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._x = x
        self._diff = x[:, None, :] - self.c[None, :, :]          # (B, k, n)
        self._d2 = np.einsum("bkn,bkn->bk", self._diff, self._diff)
        sigma2 = np.exp(2.0 * self.rho)
        self._phi = np.exp(-self._d2 / sigma2)
        return self._phi

    def infer(self, x: np.ndarray) -> np.ndarray:
        """Cache-free forward; the expansion of ||x - c||^2 avoids the big
        (batch, k, n) temporary on large evaluation batches."""
        d2 = ((x * x).sum(axis=1)[:, None] - 2.0 * (x @ self.c.T)
              + (self.c * self.c).sum(axis=1))
        return np.exp(-np.maximum(d2, 0.0) * np.exp(-2.0 * self.rho))

    def backward(self, grad: np.ndarray) -> np.ndarray:
        sigma2 = np.exp(2.0 * self.rho)
        g_phi = grad * self._phi                                  # (B, k)
        scale = 2.0 * g_phi / sigma2
        # d phi / d c_i = phi * 2 (x - c_i) / sigma_i^2
        self.dc += np.einsum("bk,bkn->kn", scale, self._diff)
        # d phi / d rho_i = phi * 2 ||x - c_i||^2 / sigma_i^2
        self.drho += (scale * self._d2).sum(axis=0)
        return -np.einsum("bk,bkn->bn", scale, self._diff)

    def params(self):
        return [self.c, self.rho]

    def grads(self):
        return [self.dc, self.drho]

    def astype(self, dtype) -> "RbfLayer":
        return RbfLayer(self.c.astype(dtype), self.rho.astype(dtype))

    @property
    def spreads(self) -> np.ndarray:
        return np.exp(self.rho)


class NormalizedSumLayer:
    """GRNN summarization: y = W p with p = phi / sum(phi).

    The normalized activations form a probability vector, so each output
    component is a convex combination of that row of W.
    """

    def __init__(self, weights: np.ndarray):
        self.w = np.asarray(weights, dtype=float)
        self.dw = np.zeros_like(self.w)
        self._p = None
        self._total = None

    def forward(self, phi: np.ndarray) -> np.ndarray:
        self._total = phi.sum(axis=1)
        if np.any(self._total < _UNDERFLOW_FLOOR):
            raise NumericalError(
                "all radial activations underflowed; input far from every center")
        self._p = phi / self._total[:, None]
        return self._p @ self.w.T

    def infer(self, phi: np.ndarray) -> np.ndarray:
        total = phi.sum(axis=1)
        if np.any(total < _UNDERFLOW_FLOOR):
            raise NumericalError(
                "all radial activations underflowed; input far from every center")
        return (phi / total[:, None]) @ self.w.T

    def backward(self, grad: np.ndarray) -> np.ndarray:
        self.dw += grad.T @ self._p
        dp = grad @ self.w                                        # (B, k)
        inner = (dp * self._p).sum(axis=1, keepdims=True)
        return (dp - inner) / self._total[:, None]

    def params(self):
        return [self.w]

    def grads(self):
        return [self.dw]

    def astype(self, dtype) -> "NormalizedSumLayer":
        return NormalizedSumLayer(self.w.astype(dtype))


class Network:
    """A plain stack of layers sharing the engine's forward/backward protocol."""

    def __init__(self, layers: list):
        self.layers = layers

    def forward(self, x: np.ndarray) -> np.ndarray:
        for layer in self.layers:
            x = layer.forward(x)
        return x

    def infer(self, x: np.ndarray) -> np.ndarray:
        """Evaluation-only forward: no caches, light on memory."""
        for layer in self.layers:
            x = layer.infer(x)
        return x

    def backward(self, grad: np.ndarray) -> np.ndarray:
        for layer in reversed(self.layers):
            grad = layer.backward(grad)
        return grad

    def params(self) -> list[np.ndarray]:
        return [p for layer in self.layers for p in layer.params()]

    def grads(self) -> list[np.ndarray]:
        return [g for layer in self.layers for g in layer.grads()]

    def zero_grads(self) -> None:
        for g in self.grads():
            g[...] = 0.0

    def num_params(self) -> int:
        return sum(p.size for p in self.params())

    def astype(self, dtype) -> "Network":
        return Network([layer.astype(dtype) for layer in self.layers])


def mse_loss(predictions: np.ndarray, targets: np.ndarray):
    """Mean squared error over batch x dim, plus its gradient."""
    predictions = np.asarray(predictions, dtype=float)
    targets = np.asarray(targets, dtype=float)
    if predictions.size == 0:
        raise DataError("empty batch in mse_loss")
    if predictions.shape != targets.shape:
        raise DataError(f"shape mismatch: {predictions.shape} vs {targets.shape}")
    diff = predictions - targets
    loss = float((diff * diff).mean())
    grad = 2.0 * diff / diff.size
    return loss, grad


class Adam:
    """Bias-corrected Adam over a flat parameter list, updating in place."""

    def __init__(self, params: list[np.ndarray], learning_rate: float = 1e-2,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, grads: list[np.ndarray]) -> None:
        self.step_count += 1
        t = self.step_count
        for i, (p, g) in enumerate(zip(self.params, grads)):
            if not np.isfinite(g).all():
                raise TrainingError(f"non-finite gradient at optimizer step {t}")
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g
            m_hat = self.m[i] / (1.0 - self.beta1 ** t)
            v_hat = self.v[i] / (1.0 - self.beta2 ** t)
            p -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def init_normal(shape, seed_or_rng, scale: float) -> np.ndarray:
    """Zero-mean normal draws with the given standard deviation."""
    if isinstance(seed_or_rng, np.random.Generator):
        rng = seed_or_rng
    else:
        rng = np.random.default_rng(seed_or_rng)
    return rng.normal(0.0, scale, shape)


def gradient_check(network: Network, x: np.ndarray, y: np.ndarray,
                   h: float = 1e-5) -> float:
    """Max relative disagreement between backprop and central differences.

    Relative error per component is |g_bp - g_fd| / max(|g_bp|, |g_fd|, 1e-8).
    The difference quotients are evaluated in extended precision so that
    roundoff in the oracle stays far below the comparison floor; backprop
    itself runs in ordinary float64.
    """
    network.zero_grads()
    pred = network.forward(x)
    _, grad = mse_loss(pred, y)
    network.backward(grad)
    analytic = [g.copy() for g in network.grads()]

    wide = np.longdouble
    net_fd = network.astype(wide)
    x_fd = x.astype(wide)
    y_fd = y.astype(wide)

    def loss_at():
        diff = net_fd.forward(x_fd) - y_fd
        return (diff * diff).mean()

    h_wide = wide(h)
    worst = 0.0
    for p, g_bp in zip(net_fd.params(), analytic):
        flat = p.reshape(-1)
        g_flat = g_bp.reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + h_wide
            up = loss_at()
            flat[j] = orig - h_wide
            down = loss_at()
            flat[j] = orig
            g_fd = float((up - down) / (2.0 * h_wide))
            denom = max(abs(g_flat[j]), abs(g_fd), 1e-8)
            worst = max(worst, abs(g_flat[j] - g_fd) / denom)
    return worst
