"""Training losses and evaluation metrics.

All loss functions take [N,C,H,W] tensors with values in [0,1] and return
scalar tensors that are differentiable through the prediction path. The
metric variants (psnr / ssim with border exclusion) work on plain arrays
and return floats.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .tensor import ShapeError, Tensor

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_C1 = 0.01 ** 2  # unit dynamic range
SSIM_C2 = 0.03 ** 2

ADV_CONVENTIONS = ("log-one-minus", "one-minus-log")


@dataclass
class LossWeights:
    lambda_ssim: float = 1.0
    lambda_pd: float = 1.0
    lambda_feat: float = 10.0
    lambda_lap: float = 1.0

    def __post_init__(self):
        for name in ("lambda_ssim", "lambda_pd", "lambda_feat", "lambda_lap"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0:
                raise ValueError(f"{name} must be finite and >= 0, got {v}")


def _gaussian_1d(size: int, sigma: float, dtype) -> np.ndarray:
    ax = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(ax ** 2) / (2.0 * sigma ** 2))
    return (g / g.sum()).astype(dtype)


def _depthwise(x: Tensor, kernel1d: np.ndarray, stride: int = 1, pad: int = 0) -> Tensor:
    """Separable filtering of every channel with outer(kernel1d, kernel1d)."""
    n, c, h, w = x.shape
    k = kernel1d.astype(x.dtype)
    flat = T.reshape(x, (n * c, 1, h, w))
    kv = Tensor(k.reshape(1, 1, -1, 1))
    kh = Tensor(k.reshape(1, 1, 1, -1))
    out = T.conv2d(flat, kv, stride=(stride, 1), pad=(pad, 0))
    out = T.conv2d(out, kh, stride=(1, stride), pad=(0, pad))
    _, _, ho, wo = out.shape
    return T.reshape(out, (n, c, ho, wo))


def ssim(a, b) -> Tensor:
    """Mean SSIM over valid 11x11 Gaussian windows and channels."""
    a, b = T._as_tensor(a), T._as_tensor(b)
    if a.shape != b.shape:
        raise ShapeError(f"ssim shapes differ: {a.shape} vs {b.shape}")
    if a.shape[2] < SSIM_WINDOW or a.shape[3] < SSIM_WINDOW:
        raise ShapeError(f"ssim needs H,W >= {SSIM_WINDOW}")
    win = _gaussian_1d(SSIM_WINDOW, SSIM_SIGMA, a.dtype)
    mu_a = _depthwise(a, win)
    mu_b = _depthwise(b, win)
    var_a = _depthwise(a * a, win) - mu_a * mu_a
    var_b = _depthwise(b * b, win) - mu_b * mu_b
    cov = _depthwise(a * b, win) - mu_a * mu_b
    num = (2.0 * mu_a * mu_b + SSIM_C1) * (2.0 * cov + SSIM_C2)
    den = (mu_a * mu_a + mu_b * mu_b + SSIM_C1) * (var_a + var_b + SSIM_C2)
    return T.tmean(num / den)


_BINOMIAL5 = np.array([1, 4, 6, 4, 1], dtype=np.float64) / 16.0


def _gaussian_pyramid(x: Tensor, levels: int) -> list[Tensor]:
    pyr = [x]
    for _ in range(levels):
        pyr.append(_depthwise(pyr[-1], _BINOMIAL5, stride=2, pad=2))
    return pyr


def _laplacian_bands(x: Tensor, levels: int) -> list[Tensor]:
    """levels band-pass images plus the residual low-pass as the last entry."""
    pyr = _gaussian_pyramid(x, levels)
    bands = [pyr[k] - T.upsample_bilinear_x2(pyr[k + 1]) for k in range(levels)]
    bands.append(pyr[levels])
    return bands


def laplacian_loss(a, b, levels: int = 3) -> Tensor:
    """Level-weighted (2^k) L1 between Laplacian bands of a and b.

    The pyramid's low-pass top level participates with weight 2^levels so
    the loss also sees DC/low-frequency error.
    """
    a, b = T._as_tensor(a), T._as_tensor(b)
    if a.shape != b.shape:
        raise ShapeError(f"laplacian shapes differ: {a.shape} vs {b.shape}")
    div = 2 ** levels
    if a.shape[2] % div or a.shape[3] % div:
        raise ShapeError(f"dims {a.shape[2]}x{a.shape[3]} not divisible by 2^{levels}")
    bands_a = _laplacian_bands(a, levels)
    bands_b = _laplacian_bands(b, levels)
    total = None
    for k, (ba, bb) in enumerate(zip(bands_a, bands_b)):
        term = (2.0 ** k) * T.tmean(T.tabs(ba - bb))
        total = term if total is None else total + term
    return total


class FeatureExtractor:
    """Frozen random conv stack standing in for a pretrained deep feature net.

    Four 3x3/stride-2 conv stages with LeakyReLU; weights are He-scaled
    draws from a seeded generator and never trained, so the same seed always
    yields the same feature space. ``tap`` selects after which stage the
    features are taken (default: the last).
    """

    def __init__(self, seed: int = 0, in_channels: int = 3,
                 widths: tuple[int, ...] = (16, 24, 32, 32), tap: int = 4,
                 dtype=np.float32):
        if not 1 <= tap <= len(widths):
            raise ValueError(f"tap must be in 1..{len(widths)}")
        self.seed = seed
        self.tap = tap
        rng = np.random.default_rng(seed)
        self.kernels: list[Tensor] = []
        cin = in_channels
        for cout in widths:
            std = np.sqrt(2.0 / (cin * 9))
            k = rng.normal(0.0, std, size=(cout, cin, 3, 3)).astype(dtype)
            self.kernels.append(Tensor(k))
            cin = cout

    def __call__(self, x: Tensor) -> Tensor:
        h = T._as_tensor(x)
        for k in self.kernels[:self.tap]:
            h = T.leaky_relu(T.conv2d(h, k, stride=2, pad=1), 0.2)
        return h


def sliced_w1(a: Tensor, b: Tensor) -> Tensor:
    """Per-channel 1D Wasserstein-1 (sorted L1), summed over channels.

    Each channel's activations form an empirical distribution; sorting both
    and averaging absolute differences is exactly W1 between them.
    """
    a, b = T._as_tensor(a), T._as_tensor(b)
    if a.shape != b.shape:
        raise ShapeError(f"sliced_w1 shapes differ: {a.shape} vs {b.shape}")
    n, c = a.shape[0], a.shape[1]
    fa = T.sort_last_axis(T.reshape(a, (n, c, -1)))
    fb = T.sort_last_axis(T.reshape(b, (n, c, -1)))
    per_channel = T.tmean(T.tabs(fa - fb), axis=2)  # [n, c]
    return T.tmean(T.tsum(per_channel, axis=1))


def pd_loss(pre, gt, extractor: FeatureExtractor | None = None) -> Tensor:
    """Distribution divergence between deep features of prediction and truth.

    With ``extractor=None`` the images themselves are treated as the feature
    maps (useful for closed-form checks).
    """
    pre, gt = T._as_tensor(pre), T._as_tensor(gt)
    if extractor is not None:
        pre, gt = extractor(pre), extractor(gt)
    return sliced_w1(pre, gt)


def feat_match_loss(feats_real: list[Tensor], feats_fake: list[Tensor]) -> Tensor:
    """Mean over layers of the mean L1 between discriminator activations."""
    if len(feats_real) != len(feats_fake) or not feats_real:
        raise ShapeError("feature lists must be non-empty and equally long")
    total = None
    for fr, ff in zip(feats_real, feats_fake):
        if fr.shape != ff.shape:
            raise ShapeError(f"feature shapes differ: {fr.shape} vs {ff.shape}")
        term = T.tmean(T.tabs(T._as_tensor(fr) - T._as_tensor(ff)))
        total = term if total is None else total + term
    return total * (1.0 / len(feats_real))


def adv_losses(score_real, score_fake, convention: str = "log-one-minus") -> tuple[Tensor, Tensor]:
    """Logistic GAN objectives from raw patch-score maps.

    Scores are squashed to (0,1) internally. Under the default convention
    loss_D = -1/2 mean[log D(real) + log(1 - D(fake))] and the generator
    uses the non-saturating loss_G = -mean[log D(fake)]. The alternative
    "one-minus-log" convention keeps the published (1 - log D) form.
    """
    if convention not in ADV_CONVENTIONS:
        raise ValueError(f"unknown adversarial convention {convention!r}")
    r, f = T._as_tensor(score_real), T._as_tensor(score_fake)
    if r.shape != f.shape:
        raise ShapeError(f"score shapes differ: {r.shape} vs {f.shape}")
    # -log sigmoid(x) = softplus(-x); -log(1 - sigmoid(x)) = softplus(x)
    if convention == "log-one-minus":
        loss_d = 0.5 * (T.tmean(T.softplus(-r)) + T.tmean(T.softplus(f)))
    else:
        loss_d = T.tmean(T.softplus(-r)) - T.tmean(T.softplus(-f)) - 1.0
    loss_g = T.tmean(T.softplus(-f))
    return loss_d, loss_g


@dataclass
class GeneratorLossParts:
    """Scalar loss tensors entering the total generator objective."""

    adv: Tensor
    ssim: Tensor | None = None
    pd: Tensor | None = None
    feat: Tensor | None = None
    lap: Tensor | None = None


def total_generator_loss(parts: GeneratorLossParts, weights: LossWeights) -> Tensor:
    """adv + w_ssim*(1-ssim) + w_pd*pd + w_feat*feat + w_lap*lap.

    Terms whose weight is zero may be omitted (None) entirely; a missing
    term with a nonzero weight is an error.
    """
    total = parts.adv
    terms = (
        (parts.ssim, weights.lambda_ssim, True),
        (parts.pd, weights.lambda_pd, False),
        (parts.feat, weights.lambda_feat, False),
        (parts.lap, weights.lambda_lap, False),
    )
    for term, lam, is_similarity in terms:
        if term is None:
            if lam != 0.0:
                raise ValueError("loss term missing but its weight is nonzero")
            continue
        total = total + lam * ((1.0 - term) if is_similarity else term)
    return total


# -- metrics ------------------------------------------------------------------


def _as_array(x) -> np.ndarray:
    return x.data if isinstance(x, Tensor) else np.asarray(x)


def _interior(a: np.ndarray, border: int) -> np.ndarray:
    if border == 0:
        return a
    if a.shape[-2] <= 2 * border or a.shape[-1] <= 2 * border:
        raise ValueError(f"border {border} leaves no interior for shape {a.shape}")
    return a[..., border:a.shape[-2] - border, border:a.shape[-1] - border]


def psnr(a, b, border: int = 8) -> float:
    """PSNR in dB on [0,1] images, excluding a border band; +inf if identical."""
    a, b = _as_array(a), _as_array(b)
    if a.shape != b.shape:
        raise ShapeError(f"psnr shapes differ: {a.shape} vs {b.shape}")
    ia, ib = _interior(a, border), _interior(b, border)
    mse = float(np.mean((ia.astype(np.float64) - ib.astype(np.float64)) ** 2))
    if mse == 0.0:
        return float("inf")
    return 10.0 * np.log10(1.0 / mse)


def ssim_metric(a, b, border: int = 8) -> float:
    """SSIM as a float, on the same border-excluded interior as psnr."""
    a, b = _as_array(a), _as_array(b)
    ia, ib = _interior(a, border), _interior(b, border)
    if ia.ndim == 3:
        ia, ib = ia[None], ib[None]
    from .tensor import no_grad
    with no_grad():
        return float(ssim(Tensor(ia), Tensor(ib)).data)
