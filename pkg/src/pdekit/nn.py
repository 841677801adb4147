"""Minimal parameter-module system and shared layers on the autodiff core."""
from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import DimensionError, Op, Tensor


class Module:
    """Container of parameters and submodules with dotted-path naming."""

    def named_parameters(self, prefix: str = "") -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        for key, value in vars(self).items():
            path = f"{prefix}{key}"
            if isinstance(value, Tensor) and value.requires_grad:
                out[path] = value
            elif isinstance(value, Module):
                out.update(value.named_parameters(f"{path}."))
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        out.update(item.named_parameters(f"{path}.{i}."))
                    elif isinstance(item, Tensor) and item.requires_grad:
                        out[f"{path}.{i}"] = item
            elif isinstance(value, dict):
                for k, item in value.items():
                    if isinstance(item, Module):
                        out.update(item.named_parameters(f"{path}.{k}."))
                    elif isinstance(item, Tensor) and item.requires_grad:
                        out[f"{path}.{k}"] = item
        return out

    def parameters(self) -> list[Tensor]:
        return list(self.named_parameters().values())

    def param_count(self) -> int:
        return sum(p.size for p in self.parameters())

    def to_double(self) -> None:
        """Cast all parameters to float64 in place (for gradient checks)."""
        for p in self.parameters():
            p.data = p.data.astype(np.float64)

    def zero_init(self, substring: str) -> int:
        """Zero every parameter whose dotted name contains ``substring``."""
        n = 0
        for name, p in self.named_parameters().items():
            if substring in name:
                p.data = np.zeros_like(p.data)
                n += 1
        return n


def _uniform(rng: np.random.Generator, shape, bound: float, dtype) -> np.ndarray:
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


class Linear(Module):
    """Affine map on the last axis: y = x @ weight + bias."""

    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator,
                 bias: bool = True, zero: bool = False, dtype=np.float32):
        bound = 1.0 / np.sqrt(d_in)
        if zero:
            self.weight = ad.parameter(np.zeros((d_in, d_out)), dtype=dtype)
        else:
            self.weight = ad.parameter(_uniform(rng, (d_in, d_out), bound, dtype))
        self.bias = None
        if bias:
            init = np.zeros(d_out) if zero else _uniform(rng, (d_out,), bound, dtype)
            self.bias = ad.parameter(init, dtype=dtype)

    def __call__(self, x: Tensor) -> Tensor:
        y = ad.matmul(x, self.weight)
        if self.bias is not None:
            y = y + self.bias
        return y


class Conv2dOp(Op):
    """Strided 2D convolution via im2col; optional symmetric zero padding."""

    name = "conv2d"

    def __init__(self, x: Tensor, w: Tensor, stride: int, padding: int):
        if x.ndim != 4 or w.ndim != 4:
            raise DimensionError("conv2d expects x (B,C,H,W) and w (O,C,kh,kw)")
        if x.shape[1] != w.shape[1]:
            raise DimensionError(
                f"conv2d channel mismatch: input {x.shape[1]} vs weight {w.shape[1]}"
            )
        h = x.shape[2] + 2 * padding
        wd = x.shape[3] + 2 * padding
        if (h - w.shape[2]) % stride or (wd - w.shape[3]) % stride:
            raise DimensionError("conv2d extents not divisible by stride")
        super().__init__(x, w)
        self.stride = stride
        self.padding = padding

    def _cols(self, xd: np.ndarray) -> np.ndarray:
        p, s = self.padding, self.stride
        kh, kw = self.inputs[1].shape[2], self.inputs[1].shape[3]
        if p:
            xd = np.pad(xd, ((0, 0), (0, 0), (p, p), (p, p)))
        win = np.lib.stride_tricks.sliding_window_view(xd, (kh, kw), axis=(2, 3))
        return win[:, :, ::s, ::s]  # (B, C, Ho, Wo, kh, kw)

    def forward(self):
        cols = self._cols(self.inputs[0].data)
        self.cols = cols
        return np.einsum("bchwij,ocij->bohw", cols, self.inputs[1].data)

    def backward(self, grad):
        x, w = self.inputs[0].data, self.inputs[1].data
        dw = np.einsum("bchwij,bohw->ocij", self.cols, grad)
        p, s = self.padding, self.stride
        kh, kw = w.shape[2], w.shape[3]
        ho, wo = grad.shape[2], grad.shape[3]
        dxp = np.zeros(
            (x.shape[0], x.shape[1], x.shape[2] + 2 * p, x.shape[3] + 2 * p),
            dtype=grad.dtype,
        )
        for i in range(kh):
            for j in range(kw):
                dxp[:, :, i : i + ho * s : s, j : j + wo * s : s] += np.einsum(
                    "bohw,oc->bchw", grad, w[:, :, i, j]
                )
        dx = dxp[:, :, p : p + x.shape[2], p : p + x.shape[3]] if p else dxp
        return np.ascontiguousarray(dx), dw


class Conv2d(Module):
    """2D convolution layer with bias."""

    def __init__(self, c_in: int, c_out: int, kernel: int, rng: np.random.Generator,
                 stride: int = 1, padding: int = 0, zero: bool = False,
                 dtype=np.float32):
        bound = 1.0 / np.sqrt(c_in * kernel * kernel)
        shape = (c_out, c_in, kernel, kernel)
        if zero:
            self.weight = ad.parameter(np.zeros(shape), dtype=dtype)
            self.bias = ad.parameter(np.zeros(c_out), dtype=dtype)
        else:
            self.weight = ad.parameter(_uniform(rng, shape, bound, dtype))
            self.bias = ad.parameter(_uniform(rng, (c_out,), bound, dtype))
        self.stride = stride
        self.padding = padding

    def __call__(self, x: Tensor) -> Tensor:
        y = Conv2dOp(x, self.weight, self.stride, self.padding).make()
        return y + ad.reshape(self.bias, (1, -1, 1, 1))


class DepthwiseConv2dOp(Op):
    """Per-channel 'same' convolution backed by the kernel backend."""

    name = "depthwise_conv2d"

    def __init__(self, x: Tensor, w: Tensor):
        if x.ndim != 4 or w.ndim != 3 or x.shape[1] != w.shape[0]:
            raise DimensionError("depthwise conv expects x (B,C,H,W), w (C,kh,kw)")
        super().__init__(x, w)

    def forward(self):
        from . import kernels

        return kernels.depthwise_conv2d_forward(
            np.ascontiguousarray(self.inputs[0].data),
            np.ascontiguousarray(self.inputs[1].data),
        )

    def backward(self, grad):
        from . import kernels

        return kernels.depthwise_conv2d_backward(
            np.ascontiguousarray(grad),
            np.ascontiguousarray(self.inputs[0].data),
            np.ascontiguousarray(self.inputs[1].data),
        )


def depthwise_conv2d(x: Tensor, w: Tensor) -> Tensor:
    return DepthwiseConv2dOp(x, w).make()


class LayerNorm(Module):
    def __init__(self, dim: int, eps: float = 1e-5, dtype=np.float32):
        self.gain = ad.parameter(np.ones(dim), dtype=dtype)
        self.bias = ad.parameter(np.zeros(dim), dtype=dtype)
        self.eps = eps

    def __call__(self, x: Tensor) -> Tensor:
        return ad.layer_norm(x, self.gain, self.bias, self.eps)


class Identity(Module):
    def __call__(self, x: Tensor) -> Tensor:
        return x


def make_norm(kind: str, dim: int, dtype=np.float32) -> Module:
    """'layer' -> LayerNorm, 'none' -> Identity."""
    if kind == "layer":
        return LayerNorm(dim, dtype=dtype)
    if kind == "none":
        return Identity()
    raise ValueError(f"unknown norm kind: {kind!r}")


class Mlp(Module):
    """Two-layer perceptron with SiLU, no residual."""

    def __init__(self, d_in: int, d_hidden: int, d_out: int, rng,
                 zero_last: bool = False, dtype=np.float32):
        self.fc1 = Linear(d_in, d_hidden, rng, dtype=dtype)
        self.fc2 = Linear(d_hidden, d_out, rng, zero=zero_last, dtype=dtype)

    def __call__(self, x: Tensor) -> Tensor:
        return self.fc2(ad.silu(self.fc1(x)))


class CausalConv1dOp(Op):
    """Depthwise causal convolution along the sequence axis.

    x: (B, L, D); w: (D, k). Output position t sees inputs t-k+1 .. t
    (zero padded at the left edge).
    """

    name = "causal_conv1d"

    def __init__(self, x: Tensor, w: Tensor):
        if x.ndim != 3 or w.ndim != 2 or x.shape[2] != w.shape[0]:
            raise DimensionError("causal conv expects x (B,L,D), w (D,k)")
        super().__init__(x, w)

    def forward(self):
        x, w = self.inputs[0].data, self.inputs[1].data
        k = w.shape[1]
        y = np.zeros_like(x)
        for i in range(k):
            shift = k - 1 - i
            if shift == 0:
                y += x * w[:, i]
            else:
                y[:, shift:] += x[:, :-shift] * w[:, i]
        return y

    def backward(self, grad):
        x, w = self.inputs[0].data, self.inputs[1].data
        k = w.shape[1]
        dx = np.zeros_like(x)
        dw = np.zeros_like(w)
        for i in range(k):
            shift = k - 1 - i
            if shift == 0:
                dx += grad * w[:, i]
                dw[:, i] = np.einsum("bld,bld->d", grad, x)
            else:
                dx[:, :-shift] += grad[:, shift:] * w[:, i]
                dw[:, i] = np.einsum("bld,bld->d", grad[:, shift:], x[:, :-shift])
        return dx, dw


def causal_conv1d(x: Tensor, w: Tensor) -> Tensor:
    return CausalConv1dOp(x, w).make()


class BilinearUpsampleOp(Op):
    """Corner-aligned bilinear upsampling of a (B, C, h, w) grid."""

    name = "bilinear_upsample"

    def __init__(self, z: Tensor, height: int, width: int):
        if z.ndim != 4:
            raise DimensionError("upsample expects (B, C, h, w)")
        h_in, w_in = z.shape[2], z.shape[3]
        if height % h_in or width % w_in:
            raise DimensionError(
                f"target ({height},{width}) not a multiple of grid ({h_in},{w_in})"
            )
        super().__init__(z)
        self.h, self.w = height, width
        self.mat_h = self._interp_matrix(h_in, height)
        self.mat_w = self._interp_matrix(w_in, width)

    @staticmethod
    def _interp_matrix(n_in: int, n_out: int) -> np.ndarray:
        mat = np.zeros((n_out, n_in))
        if n_in == 1:
            mat[:, 0] = 1.0
            return mat
        pos = np.arange(n_out) * (n_in - 1) / (n_out - 1)
        lo = np.minimum(pos.astype(int), n_in - 2)
        frac = pos - lo
        mat[np.arange(n_out), lo] = 1.0 - frac
        mat[np.arange(n_out), lo + 1] = frac
        return mat

    def forward(self):
        z = self.inputs[0].data
        mh = self.mat_h.astype(z.dtype)
        mw = self.mat_w.astype(z.dtype)
        return np.einsum("ha,bcaq,wq->bchw", mh, z, mw)

    def backward(self, grad):
        mh = self.mat_h.astype(grad.dtype)
        mw = self.mat_w.astype(grad.dtype)
        return (np.einsum("ha,bchw,wq->bcaq", mh, grad, mw),)


def bilinear_upsample(z: Tensor, height: int, width: int) -> Tensor:
    return BilinearUpsampleOp(z, height, width).make()
