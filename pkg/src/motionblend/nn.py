"""Minimal fully connected network with hand-rolled backprop and Adam.

Shared by the movement classifier (sigmoid head, binary cross entropy) and
the correction agent (linear head, squared error on the chosen action).
Everything is plain numpy; no autograd.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError, DatasetParseError


def sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


class Mlp:
    """ReLU hidden layers, configurable head, Xavier-uniform init.

    Weights are (fan_in, fan_out) matrices applied as x @ W + b.
    """

    def __init__(self, dims, output="sigmoid", rng=None):
        if len(dims) < 2 or any(int(d) != d or d < 1 for d in dims):
            raise ConfigError(f"bad layer dims {dims}")
        if output not in ("sigmoid", "linear"):
            raise ConfigError(f"unknown output activation {output!r}")
        self.dims = [int(d) for d in dims]
        self.output = output
        if rng is None:
            rng = np.random.default_rng()
        self.weights = []
        self.biases = []
        for d_in, d_out in zip(self.dims[:-1], self.dims[1:]):
            limit = np.sqrt(6.0 / (d_in + d_out))
            self.weights.append(rng.uniform(-limit, limit, (d_in, d_out)))
            self.biases.append(np.zeros(d_out))

    def copy(self) -> "Mlp":
        clone = Mlp.__new__(Mlp)
        clone.dims = list(self.dims)
        clone.output = self.output
        clone.weights = [w.copy() for w in self.weights]
        clone.biases = [b.copy() for b in self.biases]
        return clone

    def _apply_head(self, z: np.ndarray) -> np.ndarray:
        return sigmoid(z) if self.output == "sigmoid" else z

    def forward(self, x: np.ndarray) -> np.ndarray:
        """Inference pass on a (n, d_in) batch; dropout never applies here."""
        a = np.asarray(x, dtype=float)
        squeeze = a.ndim == 1
        if squeeze:
            a = a[None, :]
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            a = np.maximum(a @ w + b, 0.0)
        out = self._apply_head(a @ self.weights[-1] + self.biases[-1])
        return out[0] if squeeze else out

    def _forward_train(self, x, dropout_rate, rng):
        """Forward pass keeping activations and inverted-dropout masks."""
        acts = [np.asarray(x, dtype=float)]
        masks = []
        a = acts[0]
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            a = np.maximum(a @ w + b, 0.0)
            if dropout_rate > 0.0:
                keep = 1.0 - dropout_rate
                mask = (rng.random(a.shape) < keep) / keep
                a = a * mask
            else:
                mask = None
            masks.append(mask)
            acts.append(a)
        z_out = a @ self.weights[-1] + self.biases[-1]
        return acts, masks, z_out

    def _backprop(self, acts, masks, dz_out):
        """Given d(loss)/d(output pre-activation), return weight/bias grads."""
        grads_w = [None] * len(self.weights)
        grads_b = [None] * len(self.biases)
        delta = dz_out
        for layer in range(len(self.weights) - 1, -1, -1):
            grads_w[layer] = acts[layer].T @ delta
            grads_b[layer] = delta.sum(axis=0)
            if layer > 0:
                delta = delta @ self.weights[layer].T
                if masks[layer - 1] is not None:
                    delta = delta * masks[layer - 1]
                delta = delta * (acts[layer] > 0.0)
        return grads_w, grads_b


def bce_loss(scores: np.ndarray, y: np.ndarray) -> float:
    """Binary cross entropy from probabilities (evaluation helper)."""
    eps = 1e-12
    s = np.clip(scores.reshape(-1), eps, 1.0 - eps)
    y = np.asarray(y, dtype=float).reshape(-1)
    return float(-np.mean(y * np.log(s) + (1.0 - y) * np.log(1.0 - s)))


def bce_gradients(net: Mlp, x, y, dropout_rate=0.0, rng=None):
    """Mean BCE loss and its gradients for a sigmoid-headed network."""
    if net.output != "sigmoid":
        raise ConfigError("bce_gradients needs a sigmoid head")
    y = np.asarray(y, dtype=float).reshape(-1, 1)
    acts, masks, z = net._forward_train(x, dropout_rate, rng)
    n = z.shape[0]
    # softplus(-z) + (1 - y) * z, computed from logits for stability
    loss = float(np.mean(np.logaddexp(0.0, -z) + (1.0 - y) * z))
    dz = (sigmoid(z) - y) / n
    grads_w, grads_b = net._backprop(acts, masks, dz)
    return loss, grads_w, grads_b


def q_gradients(net: Mlp, x, actions, targets):
    """Mean squared error on the chosen action's output, with gradients."""
    if net.output != "linear":
        raise ConfigError("q_gradients needs a linear head")
    actions = np.asarray(actions, dtype=int).reshape(-1)
    targets = np.asarray(targets, dtype=float).reshape(-1)
    acts, masks, z = net._forward_train(x, 0.0, None)
    n = z.shape[0]
    picked = z[np.arange(n), actions]
    err = picked - targets
    loss = float(np.mean(err**2))
    dz = np.zeros_like(z)
    dz[np.arange(n), actions] = 2.0 * err / n
    grads_w, grads_b = net._backprop(acts, masks, dz)
    return loss, grads_w, grads_b


class Adam:
    """Adam optimizer over an Mlp's parameter list."""

    def __init__(self, net: Mlp, lr=0.001, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self._m = [np.zeros_like(w) for w in net.weights] + [
            np.zeros_like(b) for b in net.biases
        ]
        self._v = [np.zeros_like(m) for m in self._m]

    def step(self, net: Mlp, grads_w, grads_b) -> None:
        self.t += 1
        params = net.weights + net.biases
        grads = list(grads_w) + list(grads_b)
        correct1 = 1.0 - self.beta1**self.t
        correct2 = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(params, grads, self._m, self._v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g**2
            p -= self.lr * (m / correct1) / (np.sqrt(v / correct2) + self.eps)


def params_to_lines(net: Mlp) -> list:
    """Weights and biases as text lines, row major, exact decimal floats."""
    lines = []
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        lines.append(f"layer {i} {w.shape[0]} {w.shape[1]}")
        for row in w:
            lines.append(" ".join(repr(float(x)) for x in row))
        lines.append(f"bias {i} {b.shape[0]}")
        lines.append(" ".join(repr(float(x)) for x in b))
    return lines


def params_from_lines(lines, dims, output) -> Mlp:
    """Rebuild an Mlp from params_to_lines output; validates every shape."""
    net = Mlp.__new__(Mlp)
    net.dims = [int(d) for d in dims]
    net.output = output
    net.weights = []
    net.biases = []
    pos = 0

    def take():
        nonlocal pos
        if pos >= len(lines):
            raise DatasetParseError("model text ended early")
        line = lines[pos]
        pos += 1
        return line

    for i, (d_in, d_out) in enumerate(zip(net.dims[:-1], net.dims[1:])):
        head = take().split()
        if head[:2] != ["layer", str(i)] or [int(head[2]), int(head[3])] != [d_in, d_out]:
            raise DatasetParseError(f"bad layer header {' '.join(head)!r}")
        w = np.array([[float(x) for x in take().split()] for _ in range(d_in)])
        if w.shape != (d_in, d_out):
            raise DatasetParseError(f"layer {i}: expected {(d_in, d_out)} weights")
        head = take().split()
        if head[:2] != ["bias", str(i)] or int(head[2]) != d_out:
            raise DatasetParseError(f"bad bias header {' '.join(head)!r}")
        b = np.array([float(x) for x in take().split()])
        if b.shape != (d_out,):
            raise DatasetParseError(f"bias {i}: expected {d_out} values")
        net.weights.append(w)
        net.biases.append(b)
    if pos != len(lines):
        raise DatasetParseError(f"{len(lines) - pos} trailing lines after parameters")
    return net
