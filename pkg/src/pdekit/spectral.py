"""Real 2D Fourier transforms with mode truncation and spectral convolution.

Conventions, fixed for oracle equivalence:
- forward transform is unnormalized (plain DFT sums), inverse carries 1/(H*W);
- complex coefficients are stored as real arrays with a trailing axis of
  size 2 (real, imag), so a truncated spectrum of a (..., C, H, W) field has
  shape (..., C, modes_x, modes_y, 2);
- along x the lowest ``modes_x`` frequencies are kept in wrapped order
  (ceil(m/2) nonnegative rows, then floor(m/2) negative rows), along y the
  first ``modes_y`` columns of the half spectrum.
"""
from __future__ import annotations

import numpy as np

from .autodiff import DimensionError, Op, Tensor


class ModeError(ValueError):
    """Requested spectral modes do not fit the grid."""


def mode_rows(modes_x: int, height: int) -> np.ndarray:
    """Row indices of the kept x-frequencies in wrapped FFT order."""
    if modes_x > height:
        raise ModeError(f"modes_x={modes_x} exceeds grid height {height}")
    n_pos = (modes_x + 1) // 2
    n_neg = modes_x // 2
    return np.concatenate([np.arange(n_pos), np.arange(height - n_neg, height)])


def mode_freqs_x(modes_x: int) -> np.ndarray:
    """Signed integer x-frequencies matching :func:`mode_rows` order."""
    n_pos = (modes_x + 1) // 2
    n_neg = modes_x // 2
    return np.concatenate([np.arange(n_pos), np.arange(-n_neg, 0)])


def _check_grid(height: int, width: int, modes_x: int, modes_y: int) -> None:
    if modes_x < 1 or modes_y < 1:
        raise ModeError("mode counts must be >= 1")
    if modes_x > height:
        raise ModeError(f"modes_x={modes_x} exceeds height {height}")
    if modes_y > width // 2 + 1:
        raise ModeError(f"modes_y={modes_y} exceeds half-spectrum width {width // 2 + 1}")


def _rfft2_take(u: np.ndarray, modes_x: int, modes_y: int) -> np.ndarray:
    spec = np.fft.rfft2(u)
    rows = mode_rows(modes_x, u.shape[-2])
    kept = spec[..., rows, :modes_y]
    out = np.empty(kept.shape + (2,), dtype=u.dtype)
    out[..., 0] = kept.real
    out[..., 1] = kept.imag
    return out


def _irfft2_embed(s: np.ndarray, height: int, width: int) -> np.ndarray:
    modes_x, modes_y = s.shape[-3], s.shape[-2]
    rows = mode_rows(modes_x, height)
    full = np.zeros(s.shape[:-3] + (height, width // 2 + 1), dtype=np.complex128)
    full[..., rows, :modes_y] = s[..., 0] + 1j * s[..., 1]
    return np.fft.irfft2(full, s=(height, width)).astype(s.dtype, copy=False)


class Rfft2Modes(Op):
    """Forward real FFT keeping a truncated block of low frequencies."""

    name = "rfft2_modes"

    def __init__(self, u: Tensor, modes_x: int, modes_y: int):
        if u.ndim < 2:
            raise DimensionError("field must have at least 2 dims")
        h, w = u.shape[-2], u.shape[-1]
        if h < 2 or w < 2:
            raise ModeError("grid extents must be >= 2")
        _check_grid(h, w, modes_x, modes_y)
        super().__init__(u)
        self.mx, self.my = modes_x, modes_y

    def forward(self):
        return _rfft2_take(self.inputs[0].data, self.mx, self.my)

    def backward(self, grad):
        u = self.inputs[0].data
        h, w = u.shape[-2], u.shape[-1]
        rows = mode_rows(self.mx, h)
        full = np.zeros(u.shape[:-2] + (h, w), dtype=np.complex128)
        full[..., rows, : self.my] = grad[..., 0] + 1j * grad[..., 1]
        du = np.fft.ifft2(full).real * (h * w)
        return (du.astype(u.dtype, copy=False),)


class Irfft2(Op):
    """Zero-pad truncated modes onto a full grid and inverse transform."""

    name = "irfft2"

    def __init__(self, s: Tensor, height: int, width: int):
        if s.ndim < 4 or s.shape[-1] != 2:
            raise DimensionError("spectrum must have shape (..., mx, my, 2)")
        _check_grid(height, width, s.shape[-3], s.shape[-2])
        super().__init__(s)
        self.h, self.w = height, width

    def forward(self):
        return _irfft2_embed(self.inputs[0].data, self.h, self.w)

    def backward(self, grad):
        s = self.inputs[0]
        mx, my = s.shape[-3], s.shape[-2]
        g = np.fft.rfft2(grad) / (self.h * self.w)
        rows = mode_rows(mx, self.h)
        kept = g[..., rows, :my]
        scale = np.full(my, 2.0)
        scale[0] = 1.0
        if self.w % 2 == 0 and my - 1 == self.w // 2:
            scale[-1] = 1.0
        out = np.empty(kept.shape + (2,), dtype=s.dtype)
        out[..., 0] = kept.real * scale
        out[..., 1] = kept.imag * scale
        return (out,)


class ComplexModeMix(Op):
    """Per-mode complex channel mixing: out_o = sum_i w_oi * s_i."""

    name = "complex_mode_mix"

    def __init__(self, s: Tensor, w: Tensor):
        if s.shape[-4] != w.shape[1]:
            raise DimensionError(
                f"channel mismatch: spectrum has {s.shape[-4]}, weights expect {w.shape[1]}"
            )
        if s.shape[-3:-1] != w.shape[2:4]:
            raise DimensionError("mode-count mismatch between spectrum and weights")
        super().__init__(s, w)

    @staticmethod
    def _mix(s, w):
        sr, si = s[..., 0], s[..., 1]
        wr, wi = w[..., 0], w[..., 1]
        out_r = np.einsum("oixy,...ixy->...oxy", wr, sr) - np.einsum(
            "oixy,...ixy->...oxy", wi, si
        )
        out_i = np.einsum("oixy,...ixy->...oxy", wr, si) + np.einsum(
            "oixy,...ixy->...oxy", wi, sr
        )
        return np.stack([out_r, out_i], axis=-1)

    def forward(self):
        return self._mix(self.inputs[0].data, self.inputs[1].data)

    def backward(self, grad):
        s, w = self.inputs[0].data, self.inputs[1].data
        gr, gi = grad[..., 0], grad[..., 1]
        sr, si = s[..., 0], s[..., 1]
        wr, wi = w[..., 0], w[..., 1]
        # conjugate-transpose mixing for the spectrum gradient
        ds_r = np.einsum("oixy,...oxy->...ixy", wr, gr) + np.einsum(
            "oixy,...oxy->...ixy", wi, gi
        )
        ds_i = np.einsum("oixy,...oxy->...ixy", wr, gi) - np.einsum(
            "oixy,...oxy->...ixy", wi, gr
        )
        dw_r = np.einsum("...oxy,...ixy->oixy", gr, sr) + np.einsum(
            "...oxy,...ixy->oixy", gi, si
        )
        dw_i = np.einsum("...oxy,...ixy->oixy", gi, sr) - np.einsum(
            "...oxy,...ixy->oixy", gr, si
        )
        return np.stack([ds_r, ds_i], axis=-1), np.stack([dw_r, dw_i], axis=-1)


def rfft2_modes(u: Tensor, modes_x: int, modes_y: int) -> Tensor:
    return Rfft2Modes(u, modes_x, modes_y).make()


def truncated_rfft2(u: Tensor, m: int) -> Tensor:
    """Square truncation: the lowest m x (m/2+1) frequencies per channel."""
    h, w = u.shape[-2], u.shape[-1]
    if m > min(h, w):
        raise ModeError(f"m={m} exceeds min grid extent {min(h, w)}")
    return rfft2_modes(u, m, m // 2 + 1)


def inverse_rfft2(s: Tensor, height: int, width: int) -> Tensor:
    return Irfft2(s, height, width).make()


def complex_mode_mix(s: Tensor, w: Tensor) -> Tensor:
    return ComplexModeMix(s, w).make()


def spectral_conv(z: Tensor, weights: Tensor) -> Tensor:
    """Fourier-space channel mixing: transform, mix kept modes, invert.

    z: (..., C_in, H, W); weights: (C_out, C_in, modes_x, modes_y, 2).
    """
    h, w = z.shape[-2], z.shape[-1]
    s = rfft2_modes(z, weights.shape[2], weights.shape[3])
    mixed = complex_mode_mix(s, weights)
    return inverse_rfft2(mixed, h, w)


def frequency_weight(k, gamma: float) -> float:
    """Monotone frequency weight w(k) = (1 + |k|)^gamma."""
    if gamma < 0:
        raise ValueError("gamma must be >= 0")
    kx, ky = k
    return float((1.0 + np.hypot(kx, ky)) ** gamma)


def frequency_weight_grid(modes_x: int, modes_y: int, gamma: float) -> np.ndarray:
    """Weight array over the kept (modes_x, modes_y) frequency block."""
    if gamma < 0:
        raise ValueError("gamma must be >= 0")
    kx = mode_freqs_x(modes_x)[:, None]
    ky = np.arange(modes_y)[None, :]
    return (1.0 + np.hypot(kx, ky)) ** gamma


def parseval_energy(spectrum: np.ndarray, width: int) -> float:
    """Spectral energy with half-spectrum doubling, for Parseval checks.

    ``spectrum`` is a full half-spectrum as real pairs (..., H, W//2+1, 2).
    """
    mag2 = spectrum[..., 0] ** 2 + spectrum[..., 1] ** 2
    scale = np.full(mag2.shape[-1], 2.0)
    scale[0] = 1.0
    if width % 2 == 0:
        scale[-1] = 1.0
    return float(np.sum(mag2 * scale))
