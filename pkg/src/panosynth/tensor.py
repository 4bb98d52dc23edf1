"""Dense N-d tensors with reverse-mode automatic differentiation.

A Tensor wraps a numpy array plus an optional gradient buffer. Ops build a
DAG of closures; calling ``backward()`` on a scalar walks the graph in
reverse topological order and accumulates dLoss/dLeaf into every leaf that
has ``requires_grad``. Values are immutable after creation (every op returns
a fresh tensor); only ``grad`` buffers and optimizer updates mutate state.

float32 is the training dtype; gradient checks are run at float64 where
finite differences have enough headroom.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Iterable, Sequence

import numpy as np


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible."""


_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable graph construction inside the block (inference fast path)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def grad_enabled() -> bool:
    return _grad_enabled


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        if isinstance(data, Tensor):
            data = data.data
        self.data = np.asarray(data, dtype=dtype)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], None] | None = None

    # -- basic properties ---------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, requires_grad={self.requires_grad})"

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        """Same data, cut from the graph."""
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def _accumulate(self, g: np.ndarray) -> None:
        # requires_grad=False tensors never accumulate gradient
        if not self.requires_grad:
            return
        if self.grad is None:
            self.grad = np.array(g, dtype=self.data.dtype, copy=True)
        else:
            self.grad += g

    # -- autodiff -----------------------------------------------------------

    def backward(self) -> None:
        """Accumulate dSelf/dLeaf into every requires_grad leaf.

        Only defined for scalar (single-element) tensors. Repeated calls
        accumulate into existing grad buffers unless they are zeroed.
        """
        if self.data.size != 1:
            raise ShapeError(f"backward() needs a scalar loss, got shape {self.shape}")
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        grads: dict[int, np.ndarray] = {id(self): np.ones_like(self.data)}
        for node in reversed(topo):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            node._accumulate(g)
            if node._backward is not None:
                for parent, pg in node._backward(g):
                    if parent.requires_grad or parent._backward is not None:
                        pid = id(parent)
                        # a + b allocates: stored arrays may be views and
                        # must never be mutated in place
                        grads[pid] = grads[pid] + pg if pid in grads else pg

    # -- operator sugar -----------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __sub__(self, other):
        return add(self, mul(_as_tensor(other, self.dtype), -1.0))

    def __rsub__(self, other):
        return add(_as_tensor(other, self.dtype), mul(self, -1.0))

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(_as_tensor(other, self.dtype), self)

    def __pow__(self, p):
        return power(self, p)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def reshape(self, *shape):
        return reshape(self, *shape)

    def transpose(self, *axes):
        return transpose(self, axes if axes else None)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis=axis, keepdims=keepdims)

    def abs(self):
        return tabs(self)


def _as_tensor(x, dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=dtype))


def _make(data: np.ndarray, parents: Sequence[Tensor],
          backward: Callable[[np.ndarray], Iterable[tuple[Tensor, np.ndarray]]]) -> Tensor:
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad or p._backward is not None for p in parents):
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum g down to ``shape`` (inverse of numpy broadcasting)."""
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    axes = tuple(i for i, (a, b) in enumerate(zip(g.shape, shape)) if b == 1 and a != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# -- elementwise arithmetic ---------------------------------------------------


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    data = a.data + b.data

    def backward(g):
        return ((a, _unbroadcast(g, a.shape)), (b, _unbroadcast(g, b.shape)))

    return _make(data, (a, b), backward)


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    data = a.data * b.data

    def backward(g):
        return ((a, _unbroadcast(g * b.data, a.shape)),
                (b, _unbroadcast(g * a.data, b.shape)))

    return _make(data, (a, b), backward)


def div(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    data = a.data / b.data

    def backward(g):
        return ((a, _unbroadcast(g / b.data, a.shape)),
                (b, _unbroadcast(-g * a.data / (b.data * b.data), b.shape)))

    return _make(data, (a, b), backward)


def power(a, p: float) -> Tensor:
    a = _as_tensor(a)
    p = float(p)
    data = a.data ** p

    def backward(g):
        return ((a, g * p * a.data ** (p - 1.0)),)

    return _make(data, (a,), backward)


def tabs(a) -> Tensor:
    a = _as_tensor(a)
    data = np.abs(a.data)

    def backward(g):
        return ((a, g * np.sign(a.data)),)

    return _make(data, (a,), backward)


def sqrt(a) -> Tensor:
    return power(a, 0.5)


# -- reductions ---------------------------------------------------------------


def tsum(a, axis=None, keepdims=False) -> Tensor:
    a = _as_tensor(a)
    data = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        gg = g
        if not keepdims and axis is not None:
            gg = np.expand_dims(g, axis)
        return ((a, np.broadcast_to(gg, a.shape)),)

    return _make(data, (a,), backward)


def tmean(a, axis=None, keepdims=False) -> Tensor:
    a = _as_tensor(a)
    if axis is None:
        count = a.size
    else:
        ax = (axis,) if isinstance(axis, int) else tuple(axis)
        count = int(np.prod([a.shape[i] for i in ax]))
    return mul(tsum(a, axis=axis, keepdims=keepdims), 1.0 / count)


# -- shape manipulation -------------------------------------------------------


def reshape(a, *shape) -> Tensor:
    a = _as_tensor(a)
    if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
        shape = tuple(shape[0])
    data = a.data.reshape(shape)

    def backward(g):
        return ((a, g.reshape(a.shape)),)

    return _make(data, (a,), backward)


def transpose(a, axes=None) -> Tensor:
    a = _as_tensor(a)
    data = a.data.transpose(axes)
    inv = None if axes is None else np.argsort(axes)

    def backward(g):
        return ((a, g.transpose(inv)),)

    return _make(data, (a,), backward)


def getitem(a, idx) -> Tensor:
    """Basic slicing/indexing only (no integer-array indexing)."""
    a = _as_tensor(a)
    data = a.data[idx]

    def backward(g):
        full = np.zeros_like(a.data)
        full[idx] = g
        return ((a, full),)

    return _make(data, (a,), backward)


def concat(tensors: Sequence, axis: int = 1) -> Tensor:
    ts = [_as_tensor(t) for t in tensors]
    data = np.concatenate([t.data for t in ts], axis=axis)
    sizes = [t.shape[axis] for t in ts]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        out = []
        for t, lo, hi in zip(ts, offsets[:-1], offsets[1:]):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(lo, hi)
            out.append((t, g[tuple(sl)]))
        return out

    return _make(data, ts, backward)


def concat_channels(a, b) -> Tensor:
    """Stack two NCHW feature maps along the channel axis."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.shape[0] != b.shape[0] or a.shape[2:] != b.shape[2:]:
        raise ShapeError(f"channel concat needs matching N,H,W: {a.shape} vs {b.shape}")
    return concat([a, b], axis=1)


def stack(tensors: Sequence, axis: int = 0) -> Tensor:
    ts = [_as_tensor(t) for t in tensors]
    data = np.stack([t.data for t in ts], axis=axis)

    def backward(g):
        parts = np.split(g, len(ts), axis=axis)
        return [(t, np.squeeze(p, axis=axis)) for t, p in zip(ts, parts)]

    return _make(data, ts, backward)


# -- nonlinearities -----------------------------------------------------------


def leaky_relu(x, slope: float = 0.2) -> Tensor:
    """max(x, slope*x); the kink at 0 takes the positive-branch derivative."""
    if not 0.0 <= slope < 1.0:
        raise ValueError(f"slope must be in [0,1), got {slope}")
    x = _as_tensor(x)
    pos = x.data >= 0
    data = np.where(pos, x.data, slope * x.data)

    def backward(g):
        return ((x, g * np.where(pos, 1.0, slope).astype(x.dtype)),)

    return _make(data, (x,), backward)


def relu(x) -> Tensor:
    return leaky_relu(x, 0.0)


def sigmoid(x) -> Tensor:
    x = _as_tensor(x)
    d = x.data
    data = np.where(d >= 0, 1.0 / (1.0 + np.exp(-np.abs(d))),
                    np.exp(-np.abs(d)) / (1.0 + np.exp(-np.abs(d)))).astype(d.dtype)

    def backward(g):
        return ((x, g * data * (1.0 - data)),)

    return _make(data, (x,), backward)


def softplus(x) -> Tensor:
    """log(1 + exp(x)), computed stably."""
    x = _as_tensor(x)
    d = x.data
    data = np.maximum(d, 0) + np.log1p(np.exp(-np.abs(d)))

    def backward(g):
        s = np.where(d >= 0, 1.0 / (1.0 + np.exp(-np.abs(d))),
                     np.exp(-np.abs(d)) / (1.0 + np.exp(-np.abs(d))))
        return ((x, g * s.astype(d.dtype)),)

    return _make(data, (x,), backward)


def sort_last_axis(x) -> Tensor:
    """Ascending sort along the last axis; gradient routes through the permutation."""
    x = _as_tensor(x)
    idx = np.argsort(x.data, axis=-1, kind="stable")
    data = np.take_along_axis(x.data, idx, axis=-1)

    def backward(g):
        full = np.empty_like(x.data)
        np.put_along_axis(full, idx, g, axis=-1)
        return ((x, full),)

    return _make(data, (x,), backward)


# -- linear algebra -----------------------------------------------------------


def matmul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    data = a.data @ b.data

    def backward(g):
        return ((a, g @ b.data.swapaxes(-1, -2)), (b, a.data.swapaxes(-1, -2) @ g))

    return _make(data, (a, b), backward)


def linear(x, weight, bias=None) -> Tensor:
    """Affine map ``x @ weight.T + bias`` for x:[N,Din], weight:[Dout,Din]."""
    x, weight = _as_tensor(x), _as_tensor(weight)
    if x.shape[-1] != weight.shape[1]:
        raise ShapeError(f"linear: input width {x.shape[-1]} != weight width {weight.shape[1]}")
    data = x.data @ weight.data.T
    if bias is not None:
        bias = _as_tensor(bias)
        if bias.shape != (weight.shape[0],):
            raise ShapeError(f"linear: bias shape {bias.shape} != ({weight.shape[0]},)")
        data = data + bias.data

    def backward(g):
        grads = [(x, g @ weight.data), (weight, g.T @ x.data)]
        if bias is not None:
            grads.append((bias, g.sum(axis=0)))
        return grads

    parents = (x, weight) if bias is None else (x, weight, bias)
    return _make(data, parents, backward)


# -- convolution and friends ----------------------------------------------


def _pair(v) -> tuple[int, int]:
    if isinstance(v, (tuple, list)):
        return int(v[0]), int(v[1])
    return int(v), int(v)


def _im2col(xp: np.ndarray, kh: int, kw: int, sh: int, sw: int, ho: int, wo: int) -> np.ndarray:
    n, c, _, _ = xp.shape
    s0, s1, s2, s3 = xp.strides
    win = np.lib.stride_tricks.as_strided(
        xp, (n, c, kh, kw, ho, wo), (s0, s1, s2, s3, s2 * sh, s3 * sw))
    return win.reshape(n, c * kh * kw, ho * wo)


def _col2im(cols: np.ndarray, xp_shape, kh, kw, sh, sw, ho, wo) -> np.ndarray:
    n, c, hp, wp = xp_shape
    dxp = np.zeros(xp_shape, dtype=cols.dtype)
    dc = cols.reshape(n, c, kh, kw, ho, wo)
    for a in range(kh):
        for b in range(kw):
            dxp[:, :, a:a + sh * ho:sh, b:b + sw * wo:sw] += dc[:, :, a, b]
    return dxp


def conv2d(x, kernel, bias=None, stride=1, pad=0) -> Tensor:
    """2D cross-correlation of NCHW input with an [Cout,Cin,kh,kw] kernel.

    ``stride`` and ``pad`` are ints or (vertical, horizontal) pairs.
    Output H' = floor((H + 2*pad - kh)/stride) + 1 and likewise for W'.
    """
    x, kernel = _as_tensor(x), _as_tensor(kernel)
    if x.ndim != 4 or kernel.ndim != 4:
        raise ShapeError("conv2d expects 4-d input and kernel")
    n, cin, h, w = x.shape
    cout, cin_k, kh, kw = kernel.shape
    if cin != cin_k:
        raise ShapeError(f"conv2d: input has {cin} channels, kernel expects {cin_k}")
    sh, sw = _pair(stride)
    ph, pw = _pair(pad)
    if sh < 1 or sw < 1:
        raise ValueError("stride must be >= 1")
    if ph < 0 or pw < 0:
        raise ValueError("pad must be >= 0")
    if kh > h + 2 * ph or kw > w + 2 * pw:
        raise ShapeError(f"kernel {kh}x{kw} larger than padded input {h + 2 * ph}x{w + 2 * pw}")
    ho = (h + 2 * ph - kh) // sh + 1
    wo = (w + 2 * pw - kw) // sw + 1
    xp = np.pad(x.data, ((0, 0), (0, 0), (ph, ph), (pw, pw))) if ph or pw else x.data
    cols = _im2col(xp, kh, kw, sh, sw, ho, wo)
    wm = kernel.data.reshape(cout, -1)
    out = np.matmul(wm, cols)
    if bias is not None:
        bias = _as_tensor(bias)
        out = out + bias.data.reshape(1, cout, 1)
    data = out.reshape(n, cout, ho, wo)

    def backward(g):
        gm = g.reshape(n, cout, ho * wo)
        # batched matmul over transposed views avoids tensordot's copies
        dw = np.matmul(gm, cols.transpose(0, 2, 1)).sum(axis=0).reshape(kernel.shape)
        dcols = np.matmul(wm.T, gm)
        dxp = _col2im(dcols, xp.shape, kh, kw, sh, sw, ho, wo)
        dx = dxp[:, :, ph:ph + h, pw:pw + w] if ph or pw else dxp
        grads = [(x, dx), (kernel, dw)]
        if bias is not None:
            grads.append((bias, g.sum(axis=(0, 2, 3))))
        return grads

    parents = (x, kernel) if bias is None else (x, kernel, bias)
    return _make(data, parents, backward)


def instance_norm(x, eps: float = 1e-5) -> Tensor:
    """Normalize each (sample, channel) plane to zero mean / unit variance."""
    x = _as_tensor(x)
    if x.ndim != 4:
        raise ShapeError("instance_norm expects NCHW input")
    if x.shape[2] * x.shape[3] < 2:
        raise ShapeError("instance_norm needs H*W >= 2")
    mu = x.data.mean(axis=(2, 3), keepdims=True)
    var = x.data.var(axis=(2, 3), keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    y = (x.data - mu) * inv

    def backward(g):
        gm = g.mean(axis=(2, 3), keepdims=True)
        gym = (g * y).mean(axis=(2, 3), keepdims=True)
        return ((x, inv * (g - gm - y * gym)),)

    return _make(y, (x,), backward)


_UP2_CACHE: dict[tuple[int, str], np.ndarray] = {}


def _up2_matrix(n: int, dtype) -> np.ndarray:
    """[2n, n] row-interpolation matrix: half-pixel centers, clamped edges."""
    key = (n, np.dtype(dtype).str)
    m = _UP2_CACHE.get(key)
    if m is None:
        src = (np.arange(2 * n) + 0.5) / 2.0 - 0.5
        i0 = np.floor(src)
        f = src - i0
        i0c = np.clip(i0, 0, n - 1).astype(int)
        i1c = np.clip(i0 + 1, 0, n - 1).astype(int)
        m = np.zeros((2 * n, n), dtype=dtype)
        rows = np.arange(2 * n)
        np.add.at(m, (rows, i0c), (1.0 - f).astype(dtype))
        np.add.at(m, (rows, i1c), f.astype(dtype))
        _UP2_CACHE[key] = m
    return m


def upsample_bilinear_x2(x) -> Tensor:
    """Double H and W by bilinear interpolation (half-pixel convention)."""
    x = _as_tensor(x)
    if x.ndim != 4:
        raise ShapeError("upsample expects NCHW input")
    _, _, h, w = x.shape
    wy = _up2_matrix(h, x.dtype)
    wx = _up2_matrix(w, x.dtype)
    data = np.matmul(np.matmul(wy, x.data), wx.T)

    def backward(g):
        return ((x, np.matmul(np.matmul(wy.T, g), wx)),)

    return _make(data, (x,), backward)


def downsample_bilinear_x2(x) -> Tensor:
    """Halve H and W by 2x2 averaging (the adjoint-free bilinear half-scale)."""
    x = _as_tensor(x)
    n, c, h, w = x.shape
    if h % 2 or w % 2:
        raise ShapeError(f"downsample needs even dims, got {h}x{w}")
    flat = reshape(x, (n * c, 1, h, w))
    k = Tensor(np.full((1, 1, 2, 2), 0.25, dtype=x.dtype))
    return reshape(conv2d(flat, k, stride=2), (n, c, h // 2, w // 2))
