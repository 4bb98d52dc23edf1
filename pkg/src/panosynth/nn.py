"""Parameterized layers on top of the tensor ops.

Weights come from a zero-mean normal with std 0.02 (the usual GAN setup),
biases start at zero. Layers expose ``named_params`` so models can be
flattened into checkpoints.
"""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .tensor import Tensor

WEIGHT_STD = 0.02


def _param(rng: np.random.Generator, shape, std: float, dtype) -> Tensor:
    return Tensor(rng.normal(0.0, std, size=shape).astype(dtype), requires_grad=True)


class Conv2d:
    def __init__(self, cin: int, cout: int, k: int, stride: int = 1, pad: int = 0,
                 rng: np.random.Generator | None = None, dtype=np.float32,
                 std: float = WEIGHT_STD):
        rng = rng or np.random.default_rng(0)
        self.stride, self.pad = stride, pad
        self.w = _param(rng, (cout, cin, k, k), std, dtype)
        self.b = Tensor(np.zeros(cout, dtype=dtype), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        return T.conv2d(x, self.w, self.b, stride=self.stride, pad=self.pad)

    def named_params(self, prefix: str) -> dict[str, Tensor]:
        return {f"{prefix}.w": self.w, f"{prefix}.b": self.b}


class Linear:
    def __init__(self, din: int, dout: int, rng: np.random.Generator | None = None,
                 dtype=np.float32, std: float = WEIGHT_STD):
        rng = rng or np.random.default_rng(0)
        self.w = _param(rng, (dout, din), std, dtype)
        self.b = Tensor(np.zeros(dout, dtype=dtype), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        return T.linear(x, self.w, self.b)

    def named_params(self, prefix: str) -> dict[str, Tensor]:
        return {f"{prefix}.w": self.w, f"{prefix}.b": self.b}


def load_named_params(params: dict[str, Tensor], values: dict[str, np.ndarray]) -> None:
    """Assign checkpoint arrays into live parameters; names must match exactly."""
    missing = set(params) - set(values)
    if missing:
        raise KeyError(f"checkpoint missing parameters: {sorted(missing)}")
    for name, p in params.items():
        v = values[name]
        if v.shape != p.shape:
            raise ValueError(f"shape mismatch for {name}: {v.shape} vs {p.shape}")
        p.data = np.array(v, dtype=p.dtype)
