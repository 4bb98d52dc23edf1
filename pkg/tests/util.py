"""Shared helpers for the test suite."""

import numpy as np

from panosynth.tensor import Tensor


def rand_tensor(shape, seed=0, requires_grad=False, dtype=np.float64, lo=None, hi=None):
    rng = np.random.default_rng(seed)
    if lo is None:
        data = rng.normal(size=shape)
    else:
        data = rng.uniform(lo, hi, size=shape)
    return Tensor(data.astype(dtype), requires_grad=requires_grad)


def rand_image(shape, seed=0, dtype=np.float32):
    rng = np.random.default_rng(seed)
    return rng.uniform(0.0, 1.0, size=shape).astype(dtype)
