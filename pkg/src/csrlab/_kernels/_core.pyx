# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled implementation of the hot kernels.

Same four entry points as numpy_backend; results agree to rounding error.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, log, tanh

name = "cython"

ctypedef cnp.int64_t i64


cdef void _affine(double[:, ::1] A, double[:, ::1] W, double[::1] b,
                  double[:, ::1] out) nogil:
    cdef Py_ssize_t n = A.shape[0], d = A.shape[1], m = W.shape[1]
    cdef Py_ssize_t i, j, k
    cdef double acc
    for i in range(n):
        for j in range(m):
            acc = 0.0
            for k in range(d):
                acc += A[i, k] * W[k, j]
            out[i, j] = acc + b[j]


cdef void _tanh_rows(double[:, ::1] a) nogil:
    cdef Py_ssize_t i, j
    for i in range(a.shape[0]):
        for j in range(a.shape[1]):
            a[i, j] = tanh(a[i, j])


cdef void _softmax_rows(double[:, ::1] z) nogil:
    cdef Py_ssize_t i, j
    cdef double m, s
    for i in range(z.shape[0]):
        m = z[i, 0]
        for j in range(1, z.shape[1]):
            if z[i, j] > m:
                m = z[i, j]
        s = 0.0
        for j in range(z.shape[1]):
            z[i, j] = exp(z[i, j] - m)
            s += z[i, j]
        for j in range(z.shape[1]):
            z[i, j] /= s


def forward(X, weights, biases):
    """Run the MLP: tanh hidden layers, softmax output."""
    cdef double[:, ::1] a = np.ascontiguousarray(X, dtype=np.float64)
    cdef double[:, ::1] W, out
    cdef double[::1] b
    cdef Py_ssize_t layer, n_layers = len(weights)
    hiddens = []
    for layer in range(n_layers - 1):
        W = np.ascontiguousarray(weights[layer], dtype=np.float64)
        b = np.ascontiguousarray(biases[layer], dtype=np.float64)
        out_arr = np.empty((a.shape[0], W.shape[1]))
        out = out_arr
        _affine(a, W, b, out)
        _tanh_rows(out)
        hiddens.append(out_arr)
        a = out
    W = np.ascontiguousarray(weights[n_layers - 1], dtype=np.float64)
    b = np.ascontiguousarray(biases[n_layers - 1], dtype=np.float64)
    probs_arr = np.empty((a.shape[0], W.shape[1]))
    out = probs_arr
    _affine(a, W, b, out)
    _softmax_rows(out)
    return hiddens, probs_arr


cdef void _grad_wb(double[:, ::1] act, double[:, ::1] delta,
                   double[:, ::1] gW, double[::1] gb) nogil:
    cdef Py_ssize_t n = act.shape[0], d = act.shape[1], m = delta.shape[1]
    cdef Py_ssize_t i, j, k
    cdef double acc
    for k in range(d):
        for j in range(m):
            acc = 0.0
            for i in range(n):
                acc += act[i, k] * delta[i, j]
            gW[k, j] = acc
    for j in range(m):
        acc = 0.0
        for i in range(n):
            acc += delta[i, j]
        gb[j] = acc


cdef void _prev_delta(double[:, ::1] delta, double[:, ::1] W,
                      double[:, ::1] h, double[:, ::1] out) nogil:
    cdef Py_ssize_t n = delta.shape[0], m = delta.shape[1], d = W.shape[0]
    cdef Py_ssize_t i, j, k
    cdef double acc
    for i in range(n):
        for j in range(d):
            acc = 0.0
            for k in range(m):
                acc += delta[i, k] * W[j, k]
            out[i, j] = acc * (1.0 - h[i, j] * h[i, j])


def backward(X, hiddens, weights, g_logits):
    """Backpropagate a gradient w.r.t. the output-layer pre-activations."""
    cdef Py_ssize_t n_layers = len(weights)
    cdef Py_ssize_t layer
    cdef double[:, ::1] delta = np.ascontiguousarray(g_logits, dtype=np.float64)
    cdef double[:, ::1] act, W, gW, nxt
    cdef double[::1] gb
    acts = [np.ascontiguousarray(X, dtype=np.float64)]
    acts.extend(np.ascontiguousarray(h, dtype=np.float64) for h in hiddens)
    gWs = [None] * n_layers
    gbs = [None] * n_layers
    for layer in range(n_layers - 1, -1, -1):
        act = acts[layer]
        gW_arr = np.empty((act.shape[1], delta.shape[1]))
        gb_arr = np.empty(delta.shape[1])
        gW = gW_arr
        gb = gb_arr
        _grad_wb(act, delta, gW, gb)
        gWs[layer] = gW_arr
        gbs[layer] = gb_arr
        if layer > 0:
            W = np.ascontiguousarray(weights[layer], dtype=np.float64)
            nxt_arr = np.empty((delta.shape[0], W.shape[0]))
            nxt = nxt_arr
            _prev_delta(delta, W, acts[layer], nxt)
            delta = nxt
    return gWs, gbs


def collab_ce(F, m_bar, S, y_idx, eps):
    """Cross-entropy of the corrected prediction t = F @ m_bar + S."""
    cdef double[:, ::1] Fv = np.ascontiguousarray(F, dtype=np.float64)
    cdef double[:, ::1] Mv = np.ascontiguousarray(m_bar, dtype=np.float64)
    cdef double[:, ::1] Sv = np.ascontiguousarray(S, dtype=np.float64)
    cdef i64[::1] yv = np.ascontiguousarray(y_idx, dtype=np.int64)
    cdef double eps_c = eps
    cdef Py_ssize_t n = Fv.shape[0], K = Mv.shape[1]
    cdef Py_ssize_t i, j, k, y
    cdef double acc, tj, Z, cy
    cdef int alive_any, n_degenerate = 0
    losses_arr = np.empty(n)
    g_t_arr = np.empty((n, K))
    cdef double[::1] losses = losses_arr
    cdef double[:, ::1] g_t = g_t_arr
    c_arr = np.empty(K)
    alive_arr = np.empty(K, dtype=np.uint8)
    cdef double[::1] c = c_arr
    cdef cnp.uint8_t[::1] alive = alive_arr
    for i in range(n):
        alive_any = 0
        for j in range(K):
            acc = 0.0
            for k in range(K):
                acc += Fv[i, k] * Mv[k, j]
            tj = acc + Sv[i, j]
            if tj > eps_c:
                c[j] = tj
                alive[j] = 1
                alive_any = 1
            else:
                c[j] = eps_c
                alive[j] = 0
        Z = 0.0
        for j in range(K):
            Z += c[j]
        y = yv[i]
        cy = c[y]
        losses[i] = log(Z) - log(cy)
        for j in range(K):
            if alive[j]:
                g_t[i, j] = 1.0 / Z - (1.0 / cy if j == y else 0.0)
            else:
                g_t[i, j] = 0.0
        if not alive_any:
            n_degenerate += 1
    return losses_arr, g_t_arr, n_degenerate


def softmax_backward(F, gF):
    """Pull a gradient w.r.t. softmax outputs back to the logits."""
    cdef double[:, ::1] Fv = np.ascontiguousarray(F, dtype=np.float64)
    cdef double[:, ::1] gv = np.ascontiguousarray(gF, dtype=np.float64)
    cdef Py_ssize_t n = Fv.shape[0], K = Fv.shape[1]
    cdef Py_ssize_t i, j
    cdef double s
    out_arr = np.empty((n, K))
    cdef double[:, ::1] out = out_arr
    for i in range(n):
        s = 0.0
        for j in range(K):
            s += gv[i, j] * Fv[i, j]
        for j in range(K):
            out[i, j] = Fv[i, j] * (gv[i, j] - s)
    return out_arr
