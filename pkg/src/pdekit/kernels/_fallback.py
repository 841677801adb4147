"""Pure numpy implementations of the hot kernels.

Used when the compiled extension is unavailable or explicitly disabled.
The scan keeps total work linear in sequence length: chunks of fixed size
are combined with a vectorized inclusive scan, and a short Python loop
carries state across chunks.
"""
from __future__ import annotations

import numpy as np

_CHUNK = 64


def _chunked_linear_scan(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Inclusive scan of h[t] = a[t] * h[t-1] + b[t] along axis 1, h[-1] = 0."""
    batch, length = a.shape[0], a.shape[1]
    k = min(_CHUNK, length)
    pad = (-length) % k
    if pad:
        ident_a = np.ones((batch, pad) + a.shape[2:], dtype=a.dtype)
        ident_b = np.zeros((batch, pad) + b.shape[2:], dtype=b.dtype)
        a = np.concatenate([a, ident_a], axis=1)
        b = np.concatenate([b, ident_b], axis=1)
    chunks = a.shape[1] // k
    a = a.reshape((batch, chunks, k) + a.shape[2:]).copy()
    b = b.reshape((batch, chunks, k) + b.shape[2:]).copy()
    shift = 1
    while shift < k:
        b[:, :, shift:] += a[:, :, shift:] * b[:, :, :-shift]
        a[:, :, shift:] = a[:, :, shift:] * a[:, :, :-shift]
        shift *= 2
    # a now holds within-chunk cumulative products, b the zero-state scans
    carry = np.zeros((batch,) + a.shape[3:], dtype=a.dtype)
    out = np.empty_like(b)
    for c in range(chunks):
        out[:, c] = b[:, c] + a[:, c] * carry[:, None]
        carry = out[:, c, -1]
    out = out.reshape((batch, chunks * k) + a.shape[3:])
    return out[:, :length]


def scan_forward(u, delta, A, B, C, D):
    """Selective-scan forward pass.

    u, delta: (batch, L, dim); A: (dim, state); B, C: (batch, L, state);
    D: (dim,). Returns (y, h) with y: (batch, L, dim), h: (batch, L, dim, state).
    Internally runs in float64 and casts back to the input dtype.
    """
    dtype = u.dtype
    u64 = u.astype(np.float64, copy=False)
    d64 = delta.astype(np.float64, copy=False)
    a = np.exp(d64[..., None] * A.astype(np.float64, copy=False))
    b = d64[..., None] * B.astype(np.float64, copy=False)[:, :, None, :] * u64[..., None]
    h = _chunked_linear_scan(a, b)
    y = np.einsum("bldn,bln->bld", h, C.astype(np.float64, copy=False))
    y += u64 * D.astype(np.float64, copy=False)
    return y.astype(dtype, copy=False), h.astype(dtype, copy=False)


def scan_backward(dy, u, delta, A, B, C, D, h):
    """Gradients of the selective scan w.r.t. every input.

    Reversed recurrence over the sequence; vectorized across batch, channel
    and state axes so the Python loop runs once per step.
    """
    batch, length, dim = u.shape
    abar = np.exp(delta[..., None] * A)
    du = np.empty_like(u)
    ddelta = np.empty_like(delta)
    dA = np.zeros_like(A)
    dB = np.empty_like(B)
    dC = np.empty_like(C)
    dD = np.zeros_like(D)
    dh_next = np.zeros((batch, dim, A.shape[1]), dtype=u.dtype)
    for t in range(length - 1, -1, -1):
        dy_t = dy[:, t]
        h_t = h[:, t]
        dC[:, t] = np.einsum("bd,bdn->bn", dy_t, h_t)
        dh = dh_next + dy_t[:, :, None] * C[:, t, None, :]
        dD += np.einsum("bd,bd->d", dy_t, u[:, t])
        hprev = h[:, t - 1] if t > 0 else 0.0
        da = dh * hprev
        da_ab = da * abar[:, t]
        ddelta_t = np.einsum("bdn,dn->bd", da_ab, A)
        dA += np.einsum("bdn,bd->dn", da_ab, delta[:, t])
        s = np.einsum("bdn,bn->bd", dh, B[:, t])
        ddelta[:, t] = ddelta_t + s * u[:, t]
        du[:, t] = dy_t * D + s * delta[:, t]
        dB[:, t] = np.einsum("bdn,bd->bn", dh, delta[:, t] * u[:, t])
        dh_next = dh * abar[:, t]
    return du, ddelta, dA, dB, dC, dD


def depthwise_conv2d_forward(x, w):
    """Per-channel 2D convolution, zero-padded to 'same' size.

    x: (batch, C, H, W); w: (C, kh, kw) with odd kernel extents.
    """
    batch, ch, height, width = x.shape
    kh, kw = w.shape[1], w.shape[2]
    ph, pw = kh // 2, kw // 2
    xp = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    y = np.zeros_like(x)
    for i in range(kh):
        for j in range(kw):
            y += w[:, i, j][None, :, None, None] * xp[:, :, i : i + height, j : j + width]
    return y


def depthwise_conv2d_backward(dy, x, w):
    batch, ch, height, width = x.shape
    kh, kw = w.shape[1], w.shape[2]
    ph, pw = kh // 2, kw // 2
    xp = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    dxp = np.zeros_like(xp)
    dw = np.zeros_like(w)
    for i in range(kh):
        for j in range(kw):
            dxp[:, :, i : i + height, j : j + width] += (
                w[:, i, j][None, :, None, None] * dy
            )
            dw[:, i, j] = np.einsum(
                "bchw,bchw->c", dy, xp[:, :, i : i + height, j : j + width]
            )
    dx = dxp[:, :, ph : ph + height, pw : pw + width]
    return np.ascontiguousarray(dx), dw
