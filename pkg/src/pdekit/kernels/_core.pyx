# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: selective scan and depthwise 2D convolution."""

import numpy as np

cimport cython
from libc.math cimport exp

ctypedef fused real:
    float
    double


def scan_forward(u, delta, A, B, C, D):
    u = np.ascontiguousarray(u)
    y = np.empty_like(u)
    h = np.empty(u.shape + (A.shape[1],), dtype=u.dtype)
    if u.dtype == np.float32:
        _scan_forward[float](u, np.ascontiguousarray(delta), np.ascontiguousarray(A),
                             np.ascontiguousarray(B), np.ascontiguousarray(C),
                             np.ascontiguousarray(D), y, h)
    else:
        _scan_forward[double](u, np.ascontiguousarray(delta), np.ascontiguousarray(A),
                              np.ascontiguousarray(B), np.ascontiguousarray(C),
                              np.ascontiguousarray(D), y, h)
    return y, h


@cython.boundscheck(False)
@cython.wraparound(False)
cdef void _scan_forward(real[:, :, ::1] u, real[:, :, ::1] delta, real[:, ::1] A,
                        real[:, :, ::1] B, real[:, :, ::1] C, real[::1] D,
                        real[:, :, ::1] y, real[:, :, :, ::1] h) noexcept nogil:
    cdef Py_ssize_t nb = u.shape[0], L = u.shape[1], nd = u.shape[2], ns = A.shape[1]
    cdef Py_ssize_t b, t, d, n
    cdef real acc, hv, dt, ut
    for b in range(nb):
        for t in range(L):
            for d in range(nd):
                dt = delta[b, t, d]
                ut = u[b, t, d]
                acc = 0
                for n in range(ns):
                    if t == 0:
                        hv = dt * B[b, t, n] * ut
                    else:
                        hv = <real> exp(dt * A[d, n]) * h[b, t - 1, d, n] + dt * B[b, t, n] * ut
                    h[b, t, d, n] = hv
                    acc += C[b, t, n] * hv
                y[b, t, d] = acc + D[d] * ut


def scan_backward(dy, u, delta, A, B, C, D, h):
    dy = np.ascontiguousarray(dy)
    du = np.empty_like(u)
    ddelta = np.empty_like(delta)
    dA = np.zeros_like(A)
    dB = np.empty_like(B)
    dC = np.empty_like(C)
    dD = np.zeros_like(D)
    dh_next = np.zeros((u.shape[0], u.shape[2], A.shape[1]), dtype=u.dtype)
    if u.dtype == np.float32:
        _scan_backward[float](dy, np.ascontiguousarray(u), np.ascontiguousarray(delta),
                              np.ascontiguousarray(A), np.ascontiguousarray(B),
                              np.ascontiguousarray(C), np.ascontiguousarray(D),
                              np.ascontiguousarray(h), du, ddelta, dA, dB, dC, dD, dh_next)
    else:
        _scan_backward[double](dy, np.ascontiguousarray(u), np.ascontiguousarray(delta),
                               np.ascontiguousarray(A), np.ascontiguousarray(B),
                               np.ascontiguousarray(C), np.ascontiguousarray(D),
                               np.ascontiguousarray(h), du, ddelta, dA, dB, dC, dD, dh_next)
    return du, ddelta, dA, dB, dC, dD


@cython.boundscheck(False)
@cython.wraparound(False)
cdef void _scan_backward(real[:, :, ::1] dy, real[:, :, ::1] u, real[:, :, ::1] delta,
                         real[:, ::1] A, real[:, :, ::1] B, real[:, :, ::1] C,
                         real[::1] D, real[:, :, :, ::1] h,
                         real[:, :, ::1] du, real[:, :, ::1] ddelta, real[:, ::1] dA,
                         real[:, :, ::1] dB, real[:, :, ::1] dC, real[::1] dD,
                         real[:, :, ::1] dh_next) noexcept nogil:
    cdef Py_ssize_t nb = u.shape[0], L = u.shape[1], nd = u.shape[2], ns = A.shape[1]
    cdef Py_ssize_t b, t, d, n
    cdef real dyv, dt, ut, hprev, ab, dh, da_ab, s, dd_t, dc_acc
    for b in range(nb):
        for t in range(L - 1, -1, -1):
            for n in range(ns):
                dc_acc = 0
                for d in range(nd):
                    dc_acc += dy[b, t, d] * h[b, t, d, n]
                dC[b, t, n] = dc_acc
            for d in range(nd):
                dyv = dy[b, t, d]
                dt = delta[b, t, d]
                ut = u[b, t, d]
                dD[d] += dyv * ut
                dd_t = 0
                s = 0
                for n in range(ns):
                    dh = dh_next[b, d, n] + dyv * C[b, t, n]
                    hprev = h[b, t - 1, d, n] if t > 0 else 0
                    ab = <real> exp(dt * A[d, n])
                    da_ab = dh * hprev * ab
                    dd_t += da_ab * A[d, n]
                    dA[d, n] += da_ab * dt
                    s += dh * B[b, t, n]
                    dB[b, t, n] += dh * dt * ut
                    dh_next[b, d, n] = dh * ab
                ddelta[b, t, d] = dd_t + s * ut
                du[b, t, d] = dyv * D[d] + s * dt


def depthwise_conv2d_forward(x, w):
    x = np.ascontiguousarray(x)
    w = np.ascontiguousarray(w)
    y = np.zeros_like(x)
    if x.dtype == np.float32:
        _dwconv_forward[float](x, w, y)
    else:
        _dwconv_forward[double](x, w, y)
    return y


@cython.boundscheck(False)
@cython.wraparound(False)
cdef void _dwconv_forward(real[:, :, :, ::1] x, real[:, :, ::1] w,
                          real[:, :, :, ::1] y) noexcept nogil:
    cdef Py_ssize_t nb = x.shape[0], nc = x.shape[1], H = x.shape[2], W = x.shape[3]
    cdef Py_ssize_t kh = w.shape[1], kw = w.shape[2], ph = kh // 2, pw = kw // 2
    cdef Py_ssize_t b, c, i, j, oi, oj, si, sj
    cdef real acc
    for b in range(nb):
        for c in range(nc):
            for oi in range(H):
                for oj in range(W):
                    acc = 0
                    for i in range(kh):
                        si = oi + i - ph
                        if si < 0 or si >= H:
                            continue
                        for j in range(kw):
                            sj = oj + j - pw
                            if sj < 0 or sj >= W:
                                continue
                            acc += w[c, i, j] * x[b, c, si, sj]
                    y[b, c, oi, oj] = acc


def depthwise_conv2d_backward(dy, x, w):
    dy = np.ascontiguousarray(dy)
    x = np.ascontiguousarray(x)
    w = np.ascontiguousarray(w)
    dx = np.zeros_like(x)
    dw = np.zeros_like(w)
    if x.dtype == np.float32:
        _dwconv_backward[float](dy, x, w, dx, dw)
    else:
        _dwconv_backward[double](dy, x, w, dx, dw)
    return dx, dw


@cython.boundscheck(False)
@cython.wraparound(False)
cdef void _dwconv_backward(real[:, :, :, ::1] dy, real[:, :, :, ::1] x,
                           real[:, :, ::1] w, real[:, :, :, ::1] dx,
                           real[:, :, ::1] dw) noexcept nogil:
    cdef Py_ssize_t nb = x.shape[0], nc = x.shape[1], H = x.shape[2], W = x.shape[3]
    cdef Py_ssize_t kh = w.shape[1], kw = w.shape[2], ph = kh // 2, pw = kw // 2
    cdef Py_ssize_t b, c, i, j, oi, oj, si, sj
    cdef real g
    for b in range(nb):
        for c in range(nc):
            for oi in range(H):
                for oj in range(W):
                    g = dy[b, c, oi, oj]
                    for i in range(kh):
                        si = oi + i - ph
                        if si < 0 or si >= H:
                            continue
                        for j in range(kw):
                            sj = oj + j - pw
                            if sj < 0 or sj >= W:
                                continue
                            dx[b, c, si, sj] += w[c, i, j] * g
                            dw[c, i, j] += x[b, c, si, sj] * g
