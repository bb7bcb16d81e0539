"""Small tanh MLP with softmax output, hand-derived gradients, and SGD.

Hidden layers use tanh, the output layer is a softmax; all parameters are
float64.  Batch forward/backward run through the selected kernel backend.
"""

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import ContractViolation, TrainingDiverged

PROB_FLOOR = 1e-12


@dataclass
class ModelState:
    """Per-layer weights and biases; weights[l] has shape (d_in, d_out)."""

    weights: list
    biases: list

    @property
    def n_classes(self):
        return self.weights[-1].shape[1]

    @property
    def input_dim(self):
        return self.weights[0].shape[0]

    def n_params(self):
        return sum(a.size for a in self.weights) + sum(a.size for a in self.biases)

    def copy(self):
        return ModelState([w.copy() for w in self.weights],
                          [b.copy() for b in self.biases])

    def get_flat(self):
        parts = []
        for W, b in zip(self.weights, self.biases):
            parts.append(W.ravel())
            parts.append(b.ravel())
        if not parts:
            return np.empty(0)
        return np.concatenate(parts)

    def set_flat(self, vec):
        pos = 0
        for W, b in zip(self.weights, self.biases):
            W[...] = vec[pos:pos + W.size].reshape(W.shape)
            pos += W.size
            b[...] = vec[pos:pos + b.size]
            pos += b.size
        if pos != vec.size:
            raise ContractViolation(f"flat vector has {vec.size} entries, model needs {pos}")


@dataclass
class GradientSet:
    """Gradients congruent in shape to a ModelState."""

    gWs: list
    gbs: list

    def l1(self):
        return float(sum(np.abs(a).sum() for a in self.gWs)
                     + sum(np.abs(a).sum() for a in self.gbs))

    def get_flat(self):
        parts = []
        for gW, gb in zip(self.gWs, self.gbs):
            parts.append(gW.ravel())
            parts.append(gb.ravel())
        if not parts:
            return np.empty(0)
        return np.concatenate(parts)

    def all_finite(self):
        return all(np.isfinite(a).all() for a in self.gWs + self.gbs)


def init_model(layer_sizes, rng):
    """He-style random init; layer_sizes is (d, hidden..., K)."""
    if len(layer_sizes) < 2:
        raise ContractViolation("need at least input and output widths")
    weights, biases = [], []
    for d_in, d_out in zip(layer_sizes[:-1], layer_sizes[1:]):
        weights.append(rng.normal(0.0, np.sqrt(2.0 / d_in), size=(d_in, d_out)))
        biases.append(np.zeros(d_out))
    return ModelState(weights, biases)


def forward_batch(model, X):
    """Full forward pass; returns (hiddens, probs) for reuse in backward."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.input_dim:
        raise ContractViolation(
            f"expected batch of shape (n, {model.input_dim}), got {X.shape}")
    return _kernels.forward(X, model.weights, model.biases)


def forward(x, model):
    """Class probabilities for one input vector (or a batch of them)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        _, probs = forward_batch(model, x[None, :])
        return probs[0]
    _, probs = forward_batch(model, x)
    return probs


def backward_batch(model, X, hiddens, g_logits):
    """Gradient of a batch loss w.r.t. all parameters, given d(loss)/d(logits)."""
    gWs, gbs = _kernels.backward(np.asarray(X, dtype=np.float64), hiddens,
                                 model.weights, g_logits)
    return GradientSet(gWs, gbs)


def logits_grad_from_probs(probs, g_probs):
    """Chain a gradient w.r.t. softmax outputs back through the softmax."""
    return _kernels.softmax_backward(probs, g_probs)


def predict(model, X):
    """Predicted labels; argmax ties resolve to the lowest index."""
    probs = forward(X, model)
    if probs.ndim == 1:
        return int(np.argmax(probs))
    return np.argmax(probs, axis=1)


def _check_onehot(y):
    y = np.asarray(y, dtype=np.float64)
    if not (np.all((y == 0.0) | (y == 1.0)) and np.sum(y) == 1.0):
        raise ContractViolation("label vector is not one-hot")
    return y


def ce_loss(p, y):
    """Cross-entropy −Σ y_k log p_k with p clamped to [1e-12, 1]."""
    p = np.asarray(p, dtype=np.float64)
    y = _check_onehot(y)
    if p.shape != y.shape:
        raise ContractViolation(f"shape mismatch: p {p.shape} vs y {y.shape}")
    return float(-np.log(np.clip(p, PROB_FLOOR, 1.0))[y == 1.0][0])


def mse_loss(p, y):
    """Squared error summed over classes (no averaging)."""
    p = np.asarray(p, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if p.shape != y.shape:
        raise ContractViolation(f"shape mismatch: p {p.shape} vs y {y.shape}")
    return float(np.sum((p - y) ** 2))


def sgd_step(model, grads, lr, weight_decay=0.0):
    """In-place w ← w − lr·(g + weight_decay·w); returns the same state."""
    if lr < 0.0 or weight_decay < 0.0:
        raise ContractViolation("lr and weight_decay must be nonnegative")
    if not grads.all_finite():
        raise TrainingDiverged("non-finite model gradient")
    for W, b, gW, gb in zip(model.weights, model.biases, grads.gWs, grads.gbs):
        W -= lr * (gW + weight_decay * W)
        b -= lr * (gb + weight_decay * b)
    return model


def grad_check(model, batch, loss_fn, eps=1e-6):
    """Central finite differences against loss_fn's analytic gradient.

    loss_fn(model, batch) must return (loss, GradientSet).  Returns the max
    over parameters of |analytic − numeric| / max(1, |analytic|, |numeric|).
    """
    if not 1e-7 <= eps <= 1e-4:
        raise ContractViolation(f"eps {eps} outside [1e-7, 1e-4]")
    _, grads = loss_fn(model, batch)
    analytic = grads.get_flat()
    if analytic.size == 0:
        return 0.0
    theta = model.get_flat()
    worst = 0.0
    for k in range(theta.size):
        saved = theta[k]
        theta[k] = saved + eps
        model.set_flat(theta)
        lo_hi, _ = loss_fn(model, batch)
        theta[k] = saved - eps
        model.set_flat(theta)
        lo_lo, _ = loss_fn(model, batch)
        theta[k] = saved
        model.set_flat(theta)
        numeric = (lo_hi - lo_lo) / (2.0 * eps)
        rel = abs(analytic[k] - numeric) / max(1.0, abs(analytic[k]), abs(numeric))
        worst = max(worst, rel)
    return worst
