"""3D network primitives with explicit forward and backward passes.

Everything is float64 numpy.  Convolutions loop over the kernel offsets and
contract channel dimensions with tensordot, which keeps memory flat and
makes the adjoint easy to follow.  Each helper returns (output, cache) and
the matching *_backward consumes the cache.
"""

from __future__ import annotations

from math import ceil

import numpy as np


class LayerError(RuntimeError):
    """Non-finite intermediate inside a named layer."""


def check_finite(name: str, arr: np.ndarray) -> None:
    if not np.all(np.isfinite(arr)):
        raise LayerError(f"non-finite values in layer {name!r}")


def down_pads(n: int, kernel: int) -> tuple[int, int]:
    """Asymmetric zero-padding so a stride-2 conv outputs ceil(n/2)."""
    half = kernel // 2
    out = ceil(n / 2)
    right = max(2 * (out - 1) + kernel - n - half, 0)
    return half, right


def same_pads(n: int, kernel: int) -> tuple[int, int]:
    """Symmetric padding for a stride-1 conv with odd kernel."""
    half = kernel // 2
    return half, half


def conv3d_forward(
    x: np.ndarray,
    w: np.ndarray,
    b: np.ndarray,
    stride: int,
    pads: tuple[tuple[int, int], tuple[int, int], tuple[int, int]],
) -> tuple[np.ndarray, tuple]:
    """x is (Cin, nx, ny, nz), w is (Cout, Cin, k, k, k), b is (Cout,)."""
    cout, cin, k = w.shape[0], w.shape[1], w.shape[2]
    if x.shape[0] != cin:
        raise ValueError(f"conv expects {cin} input channels, got {x.shape[0]}")
    xp = np.pad(x, ((0, 0),) + tuple(pads))
    out_dims = tuple(
        (x.shape[1 + ax] + pads[ax][0] + pads[ax][1] - k) // stride + 1 for ax in range(3)
    )
    y = np.broadcast_to(b[:, None, None, None], (cout,) + out_dims).copy()
    for dx in range(k):
        sx = slice(dx, dx + stride * (out_dims[0] - 1) + 1, stride)
        for dy in range(k):
            sy = slice(dy, dy + stride * (out_dims[1] - 1) + 1, stride)
            for dz in range(k):
                sz = slice(dz, dz + stride * (out_dims[2] - 1) + 1, stride)
                y += np.tensordot(w[:, :, dx, dy, dz], xp[:, sx, sy, sz], axes=(1, 0))
    cache = (xp, w, stride, pads, x.shape, out_dims)
    return y, cache


def conv3d_backward(gy: np.ndarray, cache: tuple) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    xp, w, stride, pads, x_shape, out_dims = cache
    k = w.shape[2]
    gw = np.zeros_like(w)
    gxp = np.zeros_like(xp)
    gb = gy.sum(axis=(1, 2, 3))
    for dx in range(k):
        sx = slice(dx, dx + stride * (out_dims[0] - 1) + 1, stride)
        for dy in range(k):
            sy = slice(dy, dy + stride * (out_dims[1] - 1) + 1, stride)
            for dz in range(k):
                sz = slice(dz, dz + stride * (out_dims[2] - 1) + 1, stride)
                patch = xp[:, sx, sy, sz]
                gw[:, :, dx, dy, dz] = np.tensordot(gy, patch, axes=([1, 2, 3], [1, 2, 3]))
                gxp[:, sx, sy, sz] += np.tensordot(w[:, :, dx, dy, dz], gy, axes=(0, 0))
    gx = gxp[
        :,
        pads[0][0] : pads[0][0] + x_shape[1],
        pads[1][0] : pads[1][0] + x_shape[2],
        pads[2][0] : pads[2][0] + x_shape[3],
    ]
    return gx, gw, gb


def instnorm_forward(
    x: np.ndarray, gamma: np.ndarray, beta: np.ndarray, eps: float = 1e-5
) -> tuple[np.ndarray, tuple]:
    """Per-channel normalization over the spatial extent, learned affine."""
    mu = x.mean(axis=(1, 2, 3), keepdims=True)
    var = x.var(axis=(1, 2, 3), keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x - mu) * inv
    y = gamma[:, None, None, None] * xhat + beta[:, None, None, None]
    return y, (xhat, inv, gamma)


def instnorm_backward(gy: np.ndarray, cache: tuple) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    xhat, inv, gamma = cache
    n = xhat[0].size
    dbeta = gy.sum(axis=(1, 2, 3))
    dgamma = (gy * xhat).sum(axis=(1, 2, 3))
    dxhat = gy * gamma[:, None, None, None]
    s1 = dxhat.sum(axis=(1, 2, 3), keepdims=True)
    s2 = (dxhat * xhat).sum(axis=(1, 2, 3), keepdims=True)
    dx = inv / n * (n * dxhat - s1 - xhat * s2)
    return dx, dgamma, dbeta


def leaky_relu_forward(x: np.ndarray, slope: float) -> tuple[np.ndarray, tuple]:
    pos = x > 0
    return np.where(pos, x, slope * x), (pos, slope)


def leaky_relu_backward(gy: np.ndarray, cache: tuple) -> np.ndarray:
    pos, slope = cache
    return np.where(pos, gy, slope * gy)


def relu_forward(x: np.ndarray) -> tuple[np.ndarray, tuple]:
    pos = x > 0
    return np.where(pos, x, 0.0), (pos,)


def relu_backward(gy: np.ndarray, cache: tuple) -> np.ndarray:
    (pos,) = cache
    return np.where(pos, gy, 0.0)


def _nearest_sources(n_in: int, n_out: int) -> np.ndarray:
    return (np.arange(n_out) * n_in) // n_out


def upsample_nearest_forward(
    x: np.ndarray, out_dims: tuple[int, int, int]
) -> tuple[np.ndarray, tuple]:
    """Nearest-neighbor resize of (C, nx, ny, nz) to the exact target dims."""
    in_dims = x.shape[1:]
    if any(o < i for o, i in zip(out_dims, in_dims)):
        raise ValueError(f"upsample target {out_dims} smaller than input {in_dims}")
    srcs = [_nearest_sources(i, o) for i, o in zip(in_dims, out_dims)]
    y = x[:, srcs[0], :, :][:, :, srcs[1], :][:, :, :, srcs[2]]
    return y, (in_dims, srcs)


def upsample_nearest_backward(gy: np.ndarray, cache: tuple) -> np.ndarray:
    in_dims, srcs = cache
    g = gy
    # Each source index appears contiguously, so the adjoint is a segment sum.
    for ax, (n_in, src) in enumerate(zip(in_dims, srcs), start=1):
        starts = np.searchsorted(src, np.arange(n_in))
        g = np.add.reduceat(g, starts, axis=ax)
    return g
