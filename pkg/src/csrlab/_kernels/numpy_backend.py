"""Vectorized reference implementation of the hot kernels.

The compiled backend in ``_core.pyx`` mirrors these four functions; either one
can serve the rest of the package.  Everything is float64 in, float64 out.
"""

import numpy as np

name = "numpy"


def forward(X, weights, biases):
    """Run the MLP: tanh hidden layers, softmax output.

    Returns (hiddens, probs) where hiddens is the list of post-tanh hidden
    activations (one array per hidden layer) and probs are the softmax outputs.
    """
    a = X
    hiddens = []
    for W, b in zip(weights[:-1], biases[:-1]):
        a = np.tanh(a @ W + b)
        hiddens.append(a)
    z = a @ weights[-1] + biases[-1]
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    probs = e / e.sum(axis=1, keepdims=True)
    return hiddens, probs


def backward(X, hiddens, weights, g_logits):
    """Backpropagate a gradient w.r.t. the output-layer pre-activations.

    Returns (gWs, gbs) matching the layout of weights/biases.  The tanh
    derivative is taken from the stored activations (1 - a**2).
    """
    acts = [X] + list(hiddens)
    gWs = [None] * len(weights)
    gbs = [None] * len(weights)
    delta = g_logits
    for layer in range(len(weights) - 1, -1, -1):
        gWs[layer] = acts[layer].T @ delta
        gbs[layer] = delta.sum(axis=0)
        if layer > 0:
            delta = (delta @ weights[layer].T) * (1.0 - hiddens[layer - 1] ** 2)
    return gWs, gbs


def collab_ce(F, m_bar, S, y_idx, eps):
    """Cross-entropy of the corrected prediction t = F @ m_bar + S.

    Entries of t at or below eps are clamped to eps and drop out of the
    gradient.  Returns per-sample losses, the per-sample gradient w.r.t. t,
    and the number of rows where every entry was clamped.
    """
    t = F @ m_bar + S
    alive = t > eps
    c = np.where(alive, t, eps)
    Z = c.sum(axis=1)
    rows = np.arange(F.shape[0])
    c_y = c[rows, y_idx]
    losses = np.log(Z) - np.log(c_y)
    g_t = np.empty_like(c)
    g_t[:] = (1.0 / Z)[:, None]
    g_t[rows, y_idx] -= 1.0 / c_y
    g_t[~alive] = 0.0
    n_degenerate = int(np.sum(~alive.any(axis=1)))
    return losses, g_t, n_degenerate


def softmax_backward(F, gF):
    """Pull a gradient w.r.t. softmax outputs back to the logits."""
    return F * (gF - (gF * F).sum(axis=1, keepdims=True))
