"""Dense float64 tensors and the numerical kernels the network engine uses.

Tensors are plain ``numpy.ndarray`` objects of dtype float64.  Images use the
channel-first layout ``[C, H, W]``; batched images ``[N, C, H, W]``.  Every
spatial kernel accepts either form.
"""

from __future__ import annotations

import math
from typing import Callable, Sequence, Union

import numpy as np

Tensor = np.ndarray
Scalar = Union[int, float]

_TWO_POW_53 = float(2**53)


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible."""


def as_tensor(values, shape: Sequence[int] | None = None) -> Tensor:
    out = np.array(values, dtype=np.float64)
    if shape is not None:
        out = out.reshape(tuple(shape))
    if out.ndim > 4:
        raise ShapeError(f"tensors of rank > 4 are not supported, got shape {out.shape}")
    return out


class Rng:
    """Seedable deterministic generator.

    The bit stream is numpy's PCG64 seeded through ``SeedSequence([seed,
    stream])``; both are frozen by numpy's stream-compatibility policy.
    Uniform doubles take the top 53 bits of each raw 64-bit draw.  Normal
    draws use the Box-Muller transform on pairs of uniforms, so no
    version-dependent numpy sampler is involved.
    """

    def __init__(self, seed: int = 0, stream: int = 0) -> None:
        if seed < 0 or seed >= 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        self.seed = int(seed)
        self.stream = int(stream)
        self._bits = np.random.PCG64(np.random.SeedSequence([self.seed, self.stream]))

    def child(self, stream: int) -> "Rng":
        """Independent generator for another purpose under the same seed."""
        return Rng(self.seed, stream)

    def uniform(self, shape=(), low: float = 0.0, high: float = 1.0) -> Tensor:
        """Uniform draws on ``[low, high)``."""
        n = int(np.prod(shape, dtype=np.int64))
        raw = self._bits.random_raw(n) if n else np.zeros(0, dtype=np.uint64)
        u = (raw >> np.uint64(11)).astype(np.float64) / _TWO_POW_53
        return (low + (high - low) * u).reshape(shape)

    def normal(self, shape=(), mean: float = 0.0, sd: float = 1.0) -> Tensor:
        if sd < 0:
            raise ValueError(f"standard deviation must be non-negative, got {sd}")
        n = int(np.prod(shape, dtype=np.int64))
        pairs = (n + 1) // 2
        u = self.uniform((pairs, 2))
        radius = np.sqrt(-2.0 * np.log1p(-u[:, 0]))
        angle = 2.0 * math.pi * u[:, 1]
        z = np.empty(2 * pairs)
        z[0::2] = radius * np.cos(angle)
        z[1::2] = radius * np.sin(angle)
        return (mean + sd * z[:n]).reshape(shape)

    def permutation(self, n: int) -> np.ndarray:
        """Fisher-Yates shuffle of ``range(n)``."""
        order = np.arange(n)
        if n < 2:
            return order
        u = self.uniform(n - 1)
        for k, i in enumerate(range(n - 1, 0, -1)):
            j = min(int(u[k] * (i + 1)), i)
            order[i], order[j] = order[j], order[i]
        return order

    def integers(self, high: int, size: int) -> np.ndarray:
        """Integers uniform on ``[0, high)``."""
        u = self.uniform(size)
        return np.minimum((u * high).astype(np.int64), high - 1)


def gaussian_sample(shape, mean: float, sd: float, rng: Rng) -> Tensor:
    """I.i.d. normal draws of the given shape; advances ``rng``."""
    if sd < 0:
        raise ValueError(f"standard deviation must be non-negative, got {sd}")
    return rng.normal(tuple(shape), mean, sd)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply shapes {a.shape} and {b.shape}")
    return a @ b


_EW_OPS: dict[str, Callable] = {
    "add": np.add,
    "sub": np.subtract,
    "mul": np.multiply,
    "div": np.divide,
    "max": np.maximum,
    "min": np.minimum,
}


def ew(op: str | Callable, a: Tensor, b: Tensor | Scalar | None = None) -> Tensor:
    """Elementwise operation on equal shapes or with a scalar operand.

    ``op`` is one of the tags in ``_EW_OPS`` or a unary callable mapped over
    ``a`` (``b`` must then be omitted).
    """
    if callable(op):
        if b is not None:
            raise TypeError("unary map takes a single operand")
        return np.asarray(op(a), dtype=np.float64)
    try:
        fn = _EW_OPS[op]
    except KeyError:
        raise ValueError(f"unknown elementwise op {op!r}") from None
    if np.isscalar(b):
        return fn(a, float(b))
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"elementwise {op}: shapes {a.shape} and {b.shape} differ")
    return fn(a, b)


def _batched(x: Tensor) -> tuple[Tensor, bool]:
    if x.ndim == 3:
        return x[None], True
    if x.ndim == 4:
        return x, False
    raise ShapeError(f"expected [C,H,W] or [N,C,H,W], got shape {x.shape}")


def _patches(x: Tensor, kh: int, kw: int) -> Tensor:
    """Zero-padded sliding windows: [N, C, H, W, kh, kw] view."""
    ph, pw = (kh - 1) // 2, (kw - 1) // 2
    padded = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    return np.lib.stride_tricks.sliding_window_view(padded, (kh, kw), axis=(2, 3))


def conv2d_same(x: Tensor, kernels: Tensor, bias: Tensor) -> Tensor:
    """Stride-1 cross-correlation with zero "same" padding.

    ``kernels`` is ``[C_out, C_in, kH, kW]`` with odd kernel extents.
    """
    xb, single = _batched(x)
    if kernels.ndim != 4:
        raise ShapeError(f"kernels must be [C_out, C_in, kH, kW], got {kernels.shape}")
    c_out, c_in, kh, kw = kernels.shape
    if kh % 2 == 0 or kw % 2 == 0:
        raise ShapeError(f"kernel extents must be odd, got {kh}x{kw}")
    if xb.shape[1] != c_in:
        raise ShapeError(f"input has {xb.shape[1]} channels, kernels expect {c_in}")
    if bias.shape != (c_out,):
        raise ShapeError(f"bias shape {bias.shape} does not match {c_out} output channels")
    n, _, h, w = xb.shape
    cols = _patches(xb, kh, kw).transpose(0, 2, 3, 1, 4, 5).reshape(n * h * w, c_in * kh * kw)
    out = cols @ kernels.reshape(c_out, -1).T + bias
    out = out.reshape(n, h, w, c_out).transpose(0, 3, 1, 2)
    out = np.ascontiguousarray(out)
    return out[0] if single else out


def conv2d_same_backward(
    x: Tensor, kernels: Tensor, grad_out: Tensor
) -> tuple[Tensor, Tensor, Tensor]:
    """Gradients of ``conv2d_same`` w.r.t. input, kernels and bias."""
    xb, single = _batched(x)
    gb, _ = _batched(grad_out)
    c_out, c_in, kh, kw = kernels.shape
    n, _, h, w = xb.shape
    cols = _patches(xb, kh, kw).transpose(0, 2, 3, 1, 4, 5).reshape(n * h * w, c_in * kh * kw)
    g2 = gb.transpose(0, 2, 3, 1).reshape(n * h * w, c_out)
    grad_k = (g2.T @ cols).reshape(kernels.shape)
    grad_b = g2.sum(axis=0)
    # input gradient: same-padded correlation with the rotated, channel-swapped kernels
    flipped = np.ascontiguousarray(kernels[:, :, ::-1, ::-1].transpose(1, 0, 2, 3))
    grad_x = conv2d_same(gb, flipped, np.zeros(c_in))
    return (grad_x[0] if single else grad_x), grad_k, grad_b


def max_pool2(x: Tensor) -> tuple[Tensor, np.ndarray]:
    """Non-overlapping 2x2 max pooling, stride 2.

    Odd extents are handled by treating cells past the edge as -inf.  The
    returned index map holds, per output cell, the position (0..3, row-major
    within the window) of the selected maximum; ties pick the first.
    """
    xb, single = _batched(x)
    n, c, h, w = xb.shape
    oh, ow = -(-h // 2), -(-w // 2)
    padded = np.full((n, c, 2 * oh, 2 * ow), -np.inf, dtype=xb.dtype)
    padded[:, :, :h, :w] = xb
    windows = padded.reshape(n, c, oh, 2, ow, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, oh, ow, 4)
    idx = windows.argmax(axis=-1)
    out = np.take_along_axis(windows, idx[..., None], axis=-1)[..., 0]
    if single:
        return out[0], idx[0]
    return out, idx


def max_pool2_backward(grad_out: Tensor, idx: np.ndarray, in_shape: Sequence[int]) -> Tensor:
    """Route pooled gradients back to the argmax positions."""
    gb, single = _batched(grad_out)
    ib = idx[None] if single else idx
    n, c, oh, ow = gb.shape
    windows = np.zeros((n, c, oh, ow, 4), dtype=gb.dtype)
    np.put_along_axis(windows, ib[..., None], gb[..., None], axis=-1)
    full = windows.reshape(n, c, oh, ow, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, 2 * oh, 2 * ow)
    h, w = in_shape[-2], in_shape[-1]
    out = np.ascontiguousarray(full[:, :, :h, :w])
    return out[0] if single else out


def upsample2(x: Tensor) -> Tensor:
    """Nearest-neighbour upsampling: each cell becomes a 2x2 block."""
    _batched(x)
    return x.repeat(2, axis=-2).repeat(2, axis=-1)


def upsample2_backward(grad_out: Tensor) -> Tensor:
    gb, single = _batched(grad_out)
    n, c, h2, w2 = gb.shape
    out = gb.reshape(n, c, h2 // 2, 2, w2 // 2, 2).sum(axis=(3, 5))
    return out[0] if single else out
