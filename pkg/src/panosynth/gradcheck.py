"""Finite-difference gradient checking.

The numeric side only ever calls the forward path (twice per probed entry,
central differences), so it stays independent of the backward code it
validates. Run at float64: h=1e-5 leaves ~9 significant digits of headroom.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor


def numeric_gradient(f: Callable[..., Tensor], inputs: Sequence[Tensor], index: int,
                     h: float = 1e-5, entries: np.ndarray | None = None) -> np.ndarray:
    """Central-difference gradient of scalar f w.r.t. inputs[index].

    ``entries`` optionally restricts probing to a flat-index subset; the
    returned array is zero elsewhere.
    """
    x = inputs[index]
    grad = np.zeros_like(x.data)
    flat = x.data.reshape(-1)
    gflat = grad.reshape(-1)
    probe = range(flat.size) if entries is None else entries
    for i in probe:
        orig = flat[i]
        flat[i] = orig + h
        fp = float(f(*inputs).data)
        flat[i] = orig - h
        fm = float(f(*inputs).data)
        flat[i] = orig
        gflat[i] = (fp - fm) / (2.0 * h)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray,
                   entries: np.ndarray | None = None) -> float:
    """max over entries of |a-n| / max(|a|, |n|, 1)."""
    a, n = analytic.reshape(-1), numeric.reshape(-1)
    if entries is not None:
        a, n = a[entries], n[entries]
    scale = np.maximum(np.maximum(np.abs(a), np.abs(n)), 1.0)
    return float(np.max(np.abs(a - n) / scale)) if a.size else 0.0


def check_gradients(f: Callable[..., Tensor], inputs: Sequence[Tensor],
                    h: float = 1e-5, tol: float = 1e-4,
                    entries_per_input: int | None = None,
                    rng: np.random.Generator | None = None) -> float:
    """Compare analytic and central-difference gradients of scalar ``f``.

    Every input with requires_grad is checked; ``entries_per_input`` caps the
    number of probed entries per tensor (sampled with ``rng``). Returns the
    worst relative error seen and raises AssertionError above ``tol``.
    """
    for x in inputs:
        if x.data.dtype != np.float64:
            raise ValueError("gradient checks must run at float64")
        x.zero_grad()
    out = f(*inputs)
    if out.size != 1:
        raise ValueError("f must return a scalar tensor")
    out.backward()
    worst = 0.0
    for i, x in enumerate(inputs):
        if not x.requires_grad:
            continue
        entries = None
        if entries_per_input is not None and x.size > entries_per_input:
            rng = rng or np.random.default_rng(0)
            entries = rng.choice(x.size, size=entries_per_input, replace=False)
        num = numeric_gradient(f, inputs, i, h=h, entries=entries)
        ana = x.grad if x.grad is not None else np.zeros_like(x.data)
        err = relative_error(ana, num, entries)
        worst = max(worst, err)
        if err > tol:
            raise AssertionError(
                f"gradient mismatch on input {i}: rel. error {err:.3e} > {tol:.1e}")
    return worst
