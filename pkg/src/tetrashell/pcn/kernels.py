"""Numba gather-scatter kernels for partially connected and dense layers.

Features are (batch, nodes, channels) float64 arrays. Every kernel is
parallel over an output axis whose slots are written by exactly one
iteration, and each inner sum runs in a fixed index order, so results are
bitwise independent of the worker count.
"""

import numpy as np
from numba import njit, prange


@njit(parallel=True, cache=True)
def pcn_forward_kernel(f_in, indptr, indices, weights):
    """pre[b, n, co] = sum_e sum_ci W[e, ci, co] * f_in[b, indices[e], ci] over edges e of n."""
    nb = f_in.shape[0]
    c_in = weights.shape[1]
    c_out = weights.shape[2]
    n_out = indptr.shape[0] - 1
    pre = np.zeros((nb, n_out, c_out))
    for n in prange(n_out):
        for b in range(nb):
            for co in range(c_out):
                acc = 0.0
                for e in range(indptr[n], indptr[n + 1]):
                    j = indices[e]
                    for ci in range(c_in):
                        acc += weights[e, ci, co] * f_in[b, j, ci]
                pre[b, n, co] = acc
    return pre


@njit(parallel=True, cache=True)
def pcn_weight_grad_kernel(f_in, g, indptr, indices, c_in):
    """grad_W[e, ci, co] = sum_b f_in[b, indices[e], ci] * g[b, n(e), co]."""
    nb = f_in.shape[0]
    c_out = g.shape[2]
    n_out = indptr.shape[0] - 1
    grad = np.zeros((indices.shape[0], c_in, c_out))
    for n in prange(n_out):
        for e in range(indptr[n], indptr[n + 1]):
            j = indices[e]
            for ci in range(c_in):
                for co in range(c_out):
                    acc = 0.0
                    for b in range(nb):
                        acc += f_in[b, j, ci] * g[b, n, co]
                    grad[e, ci, co] = acc
    return grad


@njit(parallel=True, cache=True)
def pcn_input_grad_kernel(g, weights, rows, t_indptr, t_edges, n_in):
    """grad_f[b, j, ci] = sum over edges e reading j of sum_co W[e, ci, co] * g[b, n(e), co]."""
    nb = g.shape[0]
    c_in = weights.shape[1]
    c_out = weights.shape[2]
    grad = np.zeros((nb, n_in, c_in))
    for j in prange(n_in):
        for b in range(nb):
            for ci in range(c_in):
                acc = 0.0
                for t in range(t_indptr[j], t_indptr[j + 1]):
                    e = t_edges[t]
                    n = rows[e]
                    for co in range(c_out):
                        acc += weights[e, ci, co] * g[b, n, co]
                grad[b, j, ci] = acc
    return grad


@njit(parallel=True, cache=True)
def dense_forward_kernel(x, weights, bias):
    """pre[b, o] = bias[o] + sum_d x[b, d] * W[d, o]."""
    nb, n_d = x.shape
    n_o = weights.shape[1]
    pre = np.empty((nb, n_o))
    for o in prange(n_o):
        for b in range(nb):
            acc = bias[o]
            for d in range(n_d):
                acc += x[b, d] * weights[d, o]
            pre[b, o] = acc
    return pre


@njit(parallel=True, cache=True)
def dense_weight_grad_kernel(x, g):
    nb, n_d = x.shape
    n_o = g.shape[1]
    grad_w = np.empty((n_d, n_o))
    for d in prange(n_d):
        for o in range(n_o):
            acc = 0.0
            for b in range(nb):
                acc += x[b, d] * g[b, o]
            grad_w[d, o] = acc
    return grad_w


@njit(parallel=True, cache=True)
def dense_input_grad_kernel(g, weights):
    nb, n_o = g.shape
    n_d = weights.shape[0]
    grad_x = np.empty((nb, n_d))
    for d in prange(n_d):
        for b in range(nb):
            acc = 0.0
            for o in range(n_o):
                acc += weights[d, o] * g[b, o]
            grad_x[b, d] = acc
    return grad_x


@njit(cache=True)
def column_sum(g):
    nb, n_o = g.shape
    out = np.zeros(n_o)
    for b in range(nb):
        for o in range(n_o):
            out[o] += g[b, o]
    return out
