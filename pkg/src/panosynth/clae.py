"""Pose conditioning: angle digitization, cross-patch correlation between the
two reference feature maps, latent modulation, and affine-matrix prediction.

The correlation step splits one view's bottleneck features into PxP patches,
correlates every patch (summed over channels) against the other view's full
feature map with same-size zero padding, and sums the responses into a
single correspondence map per direction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .nn import Linear
from .tensor import ShapeError, Tensor

# entries of a flattened 2x3 matrix that hold tx, ty
_TRANSLATION_SLOTS = (2, 5)


@dataclass(frozen=True)
class AngleCode:
    """Target yaw digitized against the reference interval into a one-hot code."""

    theta_deg: float
    tau_deg: float
    delta: int
    index: int
    onehot: np.ndarray

    def __post_init__(self):
        if self.onehot.sum() != 1 or self.onehot[self.index] != 1:
            raise ValueError("onehot must have a single 1 at the digitized index")


def digitize_angle(theta_deg: float, tau_deg: float, delta: int) -> AngleCode:
    """Map theta in [0, tau) to bin floor(theta/tau * delta) and its one-hot.

    The multiplication is ordered theta*delta/tau and near-integer results
    are snapped upward so exact rational angles (e.g. 25/60*12 = 5) do not
    fall into the lower bin through float rounding.
    """
    if delta < 1:
        raise ValueError("delta must be >= 1")
    if not 0.0 <= theta_deg < tau_deg:
        raise ValueError(f"theta {theta_deg} outside [0, {tau_deg})")
    x = theta_deg * delta / tau_deg
    index = int(np.floor(x))
    if x - index > 1.0 - 1e-9:
        index += 1
    index = min(index, delta - 1)
    onehot = np.zeros(delta, dtype=np.float32)
    onehot[index] = 1.0
    return AngleCode(theta_deg, tau_deg, delta, index, onehot)


@dataclass
class CorrespondenceMap:
    """Summed patch-correlation responses, tagged with the match direction."""

    s: Tensor
    direction: str  # "left_to_right" or "right_to_left"

    def __post_init__(self):
        if self.direction not in ("left_to_right", "right_to_left"):
            raise ValueError(f"unknown direction {self.direction!r}")
        if not np.all(np.isfinite(self.s.data)):
            raise ValueError("correspondence map must be finite")


def cross_patch_corr(x: Tensor, y: Tensor, patch: int = 4,
                     direction: str = "left_to_right") -> CorrespondenceMap:
    """Correlate PxP patches of x (the kernel side) against all of y.

    Both inputs are [C,H,W] with patch dividing H and W. Each of the
    N = (H/P)(W/P) patches acts as a P-x-P kernel summed over channels; the
    N same-padded response maps are summed into a single [H,W] map. Calling
    with (y, x) and the opposite direction gives the symmetric map.
    """
    x, y = T._as_tensor(x), T._as_tensor(y)
    if x.shape != y.shape or x.ndim != 3:
        raise ShapeError(f"cross_patch_corr expects matching [C,H,W], got {x.shape} vs {y.shape}")
    c, h, w = x.shape
    if h % patch or w % patch:
        raise ShapeError(f"patch {patch} must divide feature dims {h}x{w}")
    nh, nw = h // patch, w // patch
    kernels = T.reshape(x, (c, nh, patch, nw, patch))
    kernels = T.transpose(kernels, (1, 3, 0, 2, 4))
    kernels = T.reshape(kernels, (nh * nw, c, patch, patch))
    pad = patch // 2
    resp = T.conv2d(T.reshape(y, (1, c, h, w)), kernels, stride=1, pad=pad)
    # even patches overshoot same-size output by one row/col
    resp = resp[:, :, :h, :w]
    s = T.reshape(T.tsum(resp, axis=1), (h, w))
    return CorrespondenceMap(s=s, direction=direction)


def modulate(g: Tensor, mu: Tensor, sigma: Tensor) -> Tensor:
    """Style modulation h = g * (1 + sigma) + mu, elementwise."""
    g = T._as_tensor(g)
    if g.shape != mu.shape or g.shape != sigma.shape:
        raise ShapeError(f"modulate dims differ: {g.shape}, {mu.shape}, {sigma.shape}")
    return g * (1.0 + sigma) + mu


@dataclass
class ConditionVector:
    """Latent z with its modulation heads mu(z), sigma(z)."""

    z: Tensor
    mu: Tensor
    sigma: Tensor


class ConditionEncoder:
    """Three FC+ReLU layers from the one-hot pose, then parallel mu/sigma heads."""

    def __init__(self, delta: int, latent: int, rng: np.random.Generator,
                 dtype=np.float32):
        self.delta = delta
        self.fc1 = Linear(delta, latent, rng, dtype)
        self.fc2 = Linear(latent, latent, rng, dtype)
        self.fc3 = Linear(latent, latent, rng, dtype)
        self.mu_head = Linear(latent, latent, rng, dtype)
        self.sigma_head = Linear(latent, latent, rng, dtype)

    def __call__(self, onehot: Tensor) -> ConditionVector:
        if onehot.shape[-1] != self.delta:
            raise ShapeError(f"one-hot length {onehot.shape[-1]} != delta {self.delta}")
        z = T.relu(self.fc1(onehot))
        z = T.relu(self.fc2(z))
        z = T.relu(self.fc3(z))
        return ConditionVector(z=z, mu=self.mu_head(z), sigma=self.sigma_head(z))

    def named_params(self, prefix: str) -> dict[str, Tensor]:
        out = {}
        for name, layer in (("fc1", self.fc1), ("fc2", self.fc2), ("fc3", self.fc3),
                            ("mu", self.mu_head), ("sigma", self.sigma_head)):
            out.update(layer.named_params(f"{prefix}.{name}"))
        return out


class AffineHead:
    """Two FC layers mapping a modulated latent to per-scale 2x3 matrices.

    The raw output is a residual added onto the identity transform, so an
    untrained (zero-output) head warps by exactly the identity. With
    translations locked the tx/ty residuals are masked to zero.
    """

    def __init__(self, latent: int, n_scales: int, rng: np.random.Generator,
                 translation_locked: bool = True, dtype=np.float32):
        self.n_scales = n_scales
        self.translation_locked = translation_locked
        hidden = max(latent // 2, 8)
        self.fc1 = Linear(latent, hidden, rng, dtype)
        self.fc2 = Linear(hidden, 6 * n_scales, rng, dtype)
        mask = np.ones(6 * n_scales, dtype=dtype)
        if translation_locked:
            for k in range(n_scales):
                for slot in _TRANSLATION_SLOTS:
                    mask[6 * k + slot] = 0.0
        self._mask = Tensor(mask)
        ident = np.tile(np.array([1, 0, 0, 0, 1, 0], dtype=dtype), n_scales)
        self._identity = Tensor(ident)

    def __call__(self, h: Tensor) -> Tensor:
        """[N,latent] -> [N,n_scales,2,3] affine matrices."""
        raw = self.fc2(T.relu(self.fc1(h)))
        out = self._identity + raw * self._mask
        return T.reshape(out, (h.shape[0], self.n_scales, 2, 3))

    def named_params(self, prefix: str) -> dict[str, Tensor]:
        out = self.fc1.named_params(f"{prefix}.fc1")
        out.update(self.fc2.named_params(f"{prefix}.fc2"))
        return out
