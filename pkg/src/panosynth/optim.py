"""Adam optimizer with bias correction."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import Tensor


@dataclass
class AdamState:
    """Per-parameter first/second moment buffers and shared step counter."""

    m: np.ndarray
    v: np.ndarray
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if not (0.0 < self.beta1 < 1.0 and 0.0 < self.beta2 < 1.0):
            raise ValueError("beta1, beta2 must lie in (0,1)")
        if self.t < 0:
            raise ValueError("step counter must be >= 0")

    @classmethod
    def for_param(cls, param: Tensor, beta1: float = 0.9, beta2: float = 0.999,
                  eps: float = 1e-8) -> "AdamState":
        z = np.zeros_like(param.data)
        return cls(m=z.copy(), v=z.copy(), beta1=beta1, beta2=beta2, eps=eps)


def adam_step(param: Tensor, state: AdamState, lr: float) -> None:
    """Apply one bias-corrected Adam update in place; increments ``state.t``."""
    if param.grad is None:
        raise ValueError("adam_step: parameter has no gradient")
    g = param.grad
    state.t += 1
    state.m = state.beta1 * state.m + (1.0 - state.beta1) * g
    state.v = state.beta2 * state.v + (1.0 - state.beta2) * (g * g)
    m_hat = state.m / (1.0 - state.beta1 ** state.t)
    v_hat = state.v / (1.0 - state.beta2 ** state.t)
    param.data -= (lr * m_hat / (np.sqrt(v_hat) + state.eps)).astype(param.dtype)


class Adam:
    """Adam over a named parameter set."""

    def __init__(self, params: dict[str, Tensor], beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params = dict(params)
        self.states = {name: AdamState.for_param(p, beta1, beta2, eps)
                       for name, p in self.params.items()}

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()

    def step(self, lr: float) -> None:
        for name, p in self.params.items():
            if p.grad is not None:
                adam_step(p, self.states[name], lr)

    def state_tensors(self, prefix: str) -> dict[str, np.ndarray]:
        """Flatten moment buffers and step counters for checkpointing."""
        out: dict[str, np.ndarray] = {}
        for name, st in self.states.items():
            out[f"{prefix}/{name}/m"] = st.m
            out[f"{prefix}/{name}/v"] = st.v
            out[f"{prefix}/{name}/t"] = np.asarray(st.t, dtype=np.int64)
        return out

    def load_state_tensors(self, prefix: str, tensors: dict[str, np.ndarray]) -> None:
        for name, st in self.states.items():
            st.m = np.array(tensors[f"{prefix}/{name}/m"])
            st.v = np.array(tensors[f"{prefix}/{name}/v"])
            st.t = int(tensors[f"{prefix}/{name}/t"])
