"""Fused batch-norm and ELU loops: numba-compiled, with NumPy equivalents."""

from __future__ import annotations

import math

import numpy as np

from .._accel import njit, use_compiled


@njit
def _bn_forward_numba(x, gamma, beta, eps):
    n, c = x.shape
    mean = np.zeros(c)
    var = np.zeros(c)
    for i in range(n):
        for j in range(c):
            mean[j] += x[i, j]
    for j in range(c):
        mean[j] /= n
    for i in range(n):
        for j in range(c):
            d = x[i, j] - mean[j]
            var[j] += d * d
    invstd = np.empty(c)
    for j in range(c):
        var[j] /= n
        invstd[j] = 1.0 / math.sqrt(var[j] + eps)
    xhat = np.empty_like(x)
    out = np.empty_like(x)
    for i in range(n):
        for j in range(c):
            h = (x[i, j] - mean[j]) * invstd[j]
            xhat[i, j] = h
            out[i, j] = h * gamma[j] + beta[j]
    return out, xhat, mean, var, invstd


def _bn_forward_numpy(x, gamma, beta, eps):
    n = x.shape[0]
    mean = x.mean(axis=0)
    centered = x - mean
    var = np.einsum("ij,ij->j", centered, centered) / n
    invstd = 1.0 / np.sqrt(var + eps)
    xhat = centered * invstd
    return xhat * gamma + beta, xhat, mean, var, invstd


@njit
def _bn_backward_numba(g, xhat, gamma, invstd):
    n, c = g.shape
    s1 = np.zeros(c)
    s2 = np.zeros(c)
    for i in range(n):
        for j in range(c):
            s1[j] += g[i, j]
            s2[j] += g[i, j] * xhat[i, j]
    dx = np.empty_like(g)
    for i in range(n):
        for j in range(c):
            k = gamma[j] * invstd[j] / n
            dx[i, j] = k * (n * g[i, j] - s1[j] - xhat[i, j] * s2[j])
    return dx, s1, s2


def _bn_backward_numpy(g, xhat, gamma, invstd):
    n = g.shape[0]
    s1 = g.sum(axis=0)
    s2 = np.einsum("ij,ij->j", g, xhat)
    k = gamma * invstd / n
    dx = g * (n * k)
    dx -= k * s1
    dx -= xhat * (k * s2)
    return dx, s1, s2


@njit
def _elu_forward_numba(x, alpha):
    flat = x.ravel()
    out = np.empty_like(flat)
    ex = np.empty_like(flat)
    for i in range(flat.size):
        v = flat[i]
        if v > 0:
            out[i] = v
            ex[i] = 1.0
        else:
            e = math.exp(v)
            out[i] = alpha * (e - 1.0)
            ex[i] = e
    return out.reshape(x.shape), ex.reshape(x.shape)


def _elu_forward_numpy(x, alpha):
    ex = np.exp(np.minimum(x, 0.0))
    out = np.maximum(x, 0.0)
    out += alpha * (ex - 1.0)
    return out, ex


if use_compiled():
    bn_forward, bn_backward = _bn_forward_numba, _bn_backward_numba
else:
    bn_forward, bn_backward = _bn_forward_numpy, _bn_backward_numpy
elu_forward = _elu_forward_numba if use_compiled(transcendental=True) else _elu_forward_numpy
