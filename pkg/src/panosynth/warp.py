"""Differentiable 2D affine warping of feature maps.

Coordinates are normalized with pixel centers at the +-1 extremes
(align-corners), which makes 90-degree rotations of square maps exact.
Sampling outside [-1,1] blends toward zero (zero padding), so warped
features develop black borders that downstream convolutions learn to fill.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .tensor import ShapeError, Tensor, _as_tensor, _make


@dataclass
class AffineParams:
    """2x3 planar transform [[a,b,tx],[c,d,ty]] in normalized coordinates."""

    m: np.ndarray
    translation_locked: bool = True

    def __post_init__(self):
        self.m = np.asarray(self.m, dtype=np.float64)
        if self.m.shape != (2, 3):
            raise ShapeError(f"affine matrix must be 2x3, got {self.m.shape}")
        if not np.all(np.isfinite(self.m)):
            raise ValueError("affine matrix entries must be finite")
        if self.translation_locked and (self.m[0, 2] != 0.0 or self.m[1, 2] != 0.0):
            raise ValueError("translation_locked requires tx = ty = 0")

    @classmethod
    def identity(cls, translation_locked: bool = True) -> "AffineParams":
        return cls(np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]), translation_locked)

    def compose(self, other: "AffineParams") -> "AffineParams":
        """Transform equivalent to warping by ``self`` then by ``other``.

        warp(warp(F, A), B) samples F at A applied to B's grid, i.e. the
        matrix product A @ [B; 0 0 1].
        """
        b3 = np.vstack([other.m, [0.0, 0.0, 1.0]])
        m = self.m @ b3
        return AffineParams(m, translation_locked=False)


def _normalized_axis(n: int, dtype) -> np.ndarray:
    # extent-1 axes collapse to the center coordinate
    if n == 1:
        return np.zeros(1, dtype=dtype)
    return np.linspace(-1.0, 1.0, n, dtype=dtype)


def _base_grid(h: int, w: int, dtype) -> np.ndarray:
    xs = _normalized_axis(w, dtype)
    ys = _normalized_axis(h, dtype)
    b = np.empty((h, w, 3), dtype=dtype)
    b[..., 0] = xs[None, :]
    b[..., 1] = ys[:, None]
    b[..., 2] = 1.0
    return b


def _theta_tensor(t) -> Tensor:
    if isinstance(t, AffineParams):
        return Tensor(t.m)
    return _as_tensor(t)


def affine_grid(theta, h: int, w: int) -> Tensor:
    """Sampling grid for an affine transform.

    ``theta`` is an AffineParams, a [2,3] tensor, or a batched [N,2,3]
    tensor. Output is [h,w,2] (or [N,h,w,2]): grid[y,x] = theta @ (x̂,ŷ,1)ᵀ
    with (x̂,ŷ) the normalized coordinates of output pixel (x,y).
    """
    if h < 1 or w < 1:
        raise ShapeError("grid extents must be >= 1")
    t = _theta_tensor(theta)
    batched = t.ndim == 3
    if t.shape[-2:] != (2, 3):
        raise ShapeError(f"affine matrix must be ...x2x3, got {t.shape}")
    base = _base_grid(h, w, t.dtype)
    if batched:
        data = np.einsum("hwk,nik->nhwi", base, t.data)
    else:
        data = np.einsum("hwk,ik->hwi", base, t.data)

    def backward(g):
        if batched:
            dt = np.einsum("nhwi,hwk->nik", g, base)
        else:
            dt = np.einsum("hwi,hwk->ik", g, base)
        return ((t, dt),)

    return _make(data, (t,), backward)


def grid_sample_bilinear(f, grid) -> Tensor:
    """Bilinearly sample NCHW features at normalized grid locations.

    ``grid`` is [Ho,Wo,2] (shared across the batch) or [N,Ho,Wo,2]. Taps
    falling outside the image contribute zero, so coordinates beyond [-1,1]
    fade to zero. Differentiable w.r.t. both features and grid.
    """
    f, grid = _as_tensor(f), _as_tensor(grid)
    if f.ndim != 4:
        raise ShapeError("grid_sample expects NCHW features")
    if not np.all(np.isfinite(grid.data)):
        raise ValueError("grid must be finite")
    n, c, h, w = f.shape
    shared = grid.ndim == 3
    gd = grid.data[None] if shared else grid.data
    if gd.shape[0] != n and not shared:
        raise ShapeError(f"grid batch {gd.shape[0]} != feature batch {n}")
    ho, wo = gd.shape[1], gd.shape[2]
    L = ho * wo
    dtype = f.dtype

    px = (gd[..., 0].reshape(gd.shape[0], L) + 1.0) * 0.5 * (w - 1)
    py = (gd[..., 1].reshape(gd.shape[0], L) + 1.0) * 0.5 * (h - 1)
    if shared and gd.shape[0] == 1 and n > 1:
        px = np.broadcast_to(px, (n, L))
        py = np.broadcast_to(py, (n, L))
    x0 = np.floor(px)
    y0 = np.floor(py)
    fx = (px - x0).astype(dtype)
    fy = (py - y0).astype(dtype)
    x0i, y0i = x0.astype(np.int64), y0.astype(np.int64)

    ff = f.data.reshape(n, c, h * w)
    taps = []
    for dy in (0, 1):
        for dx in (0, 1):
            xi, yi = x0i + dx, y0i + dy
            inside = (xi >= 0) & (xi < w) & (yi >= 0) & (yi < h)
            flat = np.clip(yi, 0, h - 1) * w + np.clip(xi, 0, w - 1)
            v = np.take_along_axis(ff, flat[:, None, :], axis=2)
            v = v * inside[:, None, :].astype(dtype)
            wx = fx if dx else (1.0 - fx)
            wy = fy if dy else (1.0 - fy)
            taps.append((flat, inside, v, (wx * wy)[:, None, :]))
    out = taps[0][2] * taps[0][3]
    for flat, inside, v, wgt in taps[1:]:
        out = out + v * wgt
    data = out.reshape(n, c, ho, wo)

    def backward(g):
        gm = g.reshape(n, c, L)
        # one bincount over (batch, channel, pixel)-combined indices is far
        # faster than ufunc.at scatter
        plane = np.arange(n * c, dtype=np.int64).reshape(n, c, 1) * (h * w)
        idx_parts, val_parts = [], []
        for flat, inside, _, wgt in taps:
            contrib = gm * wgt * inside[:, None, :].astype(dtype)
            idx_parts.append((plane + flat[:, None, :]).reshape(-1))
            val_parts.append(contrib.reshape(-1))
        df = np.bincount(np.concatenate(idx_parts), weights=np.concatenate(val_parts),
                         minlength=n * c * h * w).astype(dtype)
        grads = [(f, df.reshape(f.shape))]
        if grid.requires_grad or grid._backward is not None:
            v00, v10, v01, v11 = taps[0][2], taps[1][2], taps[2][2], taps[3][2]
            dfx = ((1.0 - fy)[:, None, :] * (v10 - v00)
                   + fy[:, None, :] * (v11 - v01))
            dfy = ((1.0 - fx)[:, None, :] * (v01 - v00)
                   + fx[:, None, :] * (v11 - v10))
            dpx = (gm * dfx).sum(axis=1) * (0.5 * (w - 1))
            dpy = (gm * dfy).sum(axis=1) * (0.5 * (h - 1))
            dgrid = np.stack([dpx, dpy], axis=-1).reshape(n, ho, wo, 2)
            if shared:
                dgrid = dgrid.sum(axis=0)
            grads.append((grid, dgrid))
        return grads

    return _make(data, (f, grid), backward)


def warp_affine(f, theta) -> Tensor:
    """Shape-preserving affine warp: sample f along theta's grid."""
    f = _as_tensor(f)
    _, _, h, w = f.shape
    return grid_sample_bilinear(f, affine_grid(theta, h, w))
