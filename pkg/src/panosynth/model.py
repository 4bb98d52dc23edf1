"""Generator and multi-scale conditional discriminators.

The generator is U-shaped: a shared 3-stage encoder (conv 4x4/stride 2 +
instance norm + leaky ReLU) feeds both reference views, the conditioning
network turns the correspondence maps plus the one-hot pose into per-scale
affine matrices, and the decoder warps, fuses and upsamples coarse-to-fine
back to image resolution. Output pixels live in [0,1] via a sigmoid.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from . import tensor as T
from .clae import AffineHead, AngleCode, ConditionEncoder, cross_patch_corr, modulate
from .nn import Conv2d, Linear
from .tensor import ShapeError, Tensor
from .warp import AffineParams, warp_affine

N_SCALES = 3


@dataclass
class ModelConfig:
    """Architecture hyperparameters; stored verbatim inside checkpoints."""

    image_size: tuple[int, int] = (64, 48)  # (width, height)
    channels: tuple[int, int, int] = (32, 64, 128)
    dec_channels: int = 32
    disc_channels: tuple[int, int, int] = (16, 32, 64)
    latent: int = 256
    delta: int = 12
    tau_deg: float = 60.0
    cpc_patch: int = 2
    translation_locked: bool = True
    use_cpc: bool = True
    use_msat_multiscale: bool = True
    use_seg_condition: bool = True
    leaky_slope: float = 0.2

    def __post_init__(self):
        w, h = self.image_size
        if w % 8 or h % 8:
            raise ValueError(f"image size {w}x{h} must be divisible by 8")
        bh, bw = h // 8, w // 8
        if bh % self.cpc_patch or bw % self.cpc_patch:
            raise ValueError(
                f"cpc_patch {self.cpc_patch} must divide bottleneck {bh}x{bw}")

    @property
    def bottleneck(self) -> tuple[int, int]:
        """(H, W) of the coarsest encoder level."""
        w, h = self.image_size
        return h // 8, w // 8

    def to_dict(self) -> dict:
        d = asdict(self)
        for key in ("image_size", "channels", "disc_channels"):
            d[key] = list(d[key])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        for key in ("image_size", "channels", "disc_channels"):
            d[key] = tuple(d[key])
        return cls(**d)


@dataclass
class FeaturePyramid:
    """Encoder features at 1/2, 1/4 and 1/8 resolution."""

    levels: list[Tensor]

    def __post_init__(self):
        if len(self.levels) != N_SCALES:
            raise ShapeError(f"pyramid needs {N_SCALES} levels")
        for a, b in zip(self.levels, self.levels[1:]):
            if a.shape[2] != 2 * b.shape[2] or a.shape[3] != 2 * b.shape[3]:
                raise ShapeError("each pyramid level must halve the previous one")


def _theta_at(theta, j: int):
    """Scale-j transform from a [N,K,2,3] tensor or list of AffineParams."""
    if isinstance(theta, Tensor):
        return theta[:, j]
    return theta[j]


class Generator:
    def __init__(self, cfg: ModelConfig, rng: np.random.Generator | None = None,
                 dtype=np.float32):
        rng = rng or np.random.default_rng(0)
        self.cfg = cfg
        self.dtype = dtype
        c1, c2, c3 = cfg.channels
        self.enc = [
            Conv2d(3, c1, 4, stride=2, pad=1, rng=rng, dtype=dtype),
            Conv2d(c1, c2, 4, stride=2, pad=1, rng=rng, dtype=dtype),
            Conv2d(c2, c3, 4, stride=2, pad=1, rng=rng, dtype=dtype),
        ]
        bh, bw = cfg.bottleneck
        self.g_fc = Linear(bh * bw, cfg.latent, rng, dtype)
        self.cond = ConditionEncoder(cfg.delta, cfg.latent, rng, dtype)
        n_mats = N_SCALES if cfg.use_msat_multiscale else 1
        self.head = AffineHead(cfg.latent, n_mats, rng, cfg.translation_locked, dtype)
        dc = cfg.dec_channels
        self.dec = [
            Conv2d(2 * c1, dc, 3, stride=1, pad=1, rng=rng, dtype=dtype),
            Conv2d(2 * c2, dc, 3, stride=1, pad=1, rng=rng, dtype=dtype),
            Conv2d(2 * c3, dc, 3, stride=1, pad=1, rng=rng, dtype=dtype),
        ]
        self.fuse1 = Conv2d(dc, dc, 3, stride=1, pad=1, rng=rng, dtype=dtype)
        self.fuse2 = Conv2d(dc, 3, 3, stride=1, pad=1, rng=rng, dtype=dtype)

    # -- submodules ---------------------------------------------------------

    def _unit(self, conv: Conv2d, x: Tensor) -> Tensor:
        return T.leaky_relu(T.instance_norm(conv(x)), self.cfg.leaky_slope)

    def encode(self, image: Tensor) -> FeaturePyramid:
        """Shared-weight 3-stage downsampling encoder (both views use it)."""
        if image.shape[2] % 8 or image.shape[3] % 8:
            raise ShapeError(f"encoder input dims {image.shape} must divide by 8")
        f1 = self._unit(self.enc[0], image)
        f2 = self._unit(self.enc[1], f1)
        f3 = self._unit(self.enc[2], f2)
        return FeaturePyramid([f1, f2, f3])

    def _latent_summary(self, own: FeaturePyramid, other: FeaturePyramid,
                        direction: str) -> Tensor:
        """Flattened correspondence evidence for one matching direction."""
        fa, fb = own.levels[2], other.levels[2]
        n = fa.shape[0]
        bh, bw = fa.shape[2], fa.shape[3]
        if self.cfg.use_cpc:
            rows = [T.reshape(cross_patch_corr(fa[i], fb[i], self.cfg.cpc_patch,
                                               direction).s, (1, bh * bw))
                    for i in range(n)]
            flat = T.concat(rows, axis=0) if n > 1 else rows[0]
        else:
            # ablation: pooled (channel-mean) bottleneck features, no matching
            flat = T.reshape(T.tmean(fa, axis=1), (n, bh * bw))
        return self.g_fc(flat)

    def predict_affines(self, pyr_l: FeaturePyramid, pyr_r: FeaturePyramid,
                        onehot: Tensor) -> tuple[Tensor, Tensor, dict]:
        """Per-scale affine matrices for both sides, [N,K,2,3] each."""
        g_l = self._latent_summary(pyr_l, pyr_r, "left_to_right")
        g_r = self._latent_summary(pyr_r, pyr_l, "right_to_left")
        cond = self.cond(onehot)
        h_l = modulate(g_l, cond.mu, cond.sigma)
        h_r = modulate(g_r, cond.mu, cond.sigma)
        t_l = self.head(h_l)
        t_r = self.head(h_r)
        internals = {"g_left": g_l, "g_right": g_r, "cond": cond,
                     "theta_left": t_l, "theta_right": t_r}
        return t_l, t_r, internals

    def msat_fuse(self, pyr_l: FeaturePyramid, pyr_r: FeaturePyramid,
                  theta_l, theta_r) -> Tensor:
        """Warp both pyramids per scale, fuse coarse-to-fine, map to [0,1].

        ``theta_*`` are [N,K,2,3] tensors or K-long AffineParams lists with
        K=3 (or K=1 in single-scale mode, where only the coarsest level is
        warped and finer levels pass through unwarped).
        """
        multiscale = self.cfg.use_msat_multiscale

        def warped(pyr: FeaturePyramid, theta, j: int) -> Tensor:
            f = pyr.levels[j]
            if multiscale:
                return warp_affine(f, _theta_at(theta, j))
            if j == N_SCALES - 1:
                return warp_affine(f, _theta_at(theta, 0))
            return f

        state = None
        for j in (2, 1, 0):
            pair = T.concat_channels(warped(pyr_l, theta_l, j),
                                     warped(pyr_r, theta_r, j))
            c = self._unit(self.dec[j], pair)
            state = c if state is None else state + c
            state = T.upsample_bilinear_x2(state)
        out = T.leaky_relu(self.fuse1(state), self.cfg.leaky_slope)
        return T.sigmoid(self.fuse2(out))

    def forward(self, left: Tensor, right: Tensor, onehot: Tensor,
                return_internals: bool = False):
        if left.shape != right.shape:
            raise ShapeError(f"reference shapes differ: {left.shape} vs {right.shape}")
        pyr_l = self.encode(left)
        pyr_r = self.encode(right)
        t_l, t_r, internals = self.predict_affines(pyr_l, pyr_r, onehot)
        out = self.msat_fuse(pyr_l, pyr_r, t_l, t_r)
        if return_internals:
            internals.update({"pyr_left": pyr_l, "pyr_right": pyr_r})
            return out, internals
        return out

    __call__ = forward

    def generate(self, left: np.ndarray, right: np.ndarray,
                 code: AngleCode | np.ndarray) -> np.ndarray:
        """Single-view inference: [3,H,W] arrays in, [3,H,W] array in [0,1] out."""
        onehot = code.onehot if isinstance(code, AngleCode) else np.asarray(code)
        if onehot.ndim != 1 or int(round(float(onehot.sum()))) != 1:
            raise ValueError("code must be a one-hot vector")
        with T.no_grad():
            out = self.forward(
                Tensor(left[None].astype(self.dtype)),
                Tensor(right[None].astype(self.dtype)),
                Tensor(onehot[None].astype(self.dtype)))
        return out.data[0]

    def named_params(self, prefix: str = "G") -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        for i, c in enumerate(self.enc):
            out.update(c.named_params(f"{prefix}.enc{i + 1}"))
        out.update(self.g_fc.named_params(f"{prefix}.gfc"))
        out.update(self.cond.named_params(f"{prefix}.cond"))
        out.update(self.head.named_params(f"{prefix}.head"))
        for i, c in enumerate(self.dec):
            out.update(c.named_params(f"{prefix}.dec{i + 1}"))
        out.update(self.fuse1.named_params(f"{prefix}.fuse1"))
        out.update(self.fuse2.named_params(f"{prefix}.fuse2"))
        return out


class Discriminator:
    """Conditional patch discriminator: 3 strided conv units + 1-channel head.

    Inputs (image, left ref, right ref, optional seg map) are concatenated
    along channels; the per-unit activations are exposed for the feature
    matching loss.
    """

    def __init__(self, cfg: ModelConfig, rng: np.random.Generator | None = None,
                 dtype=np.float32):
        rng = rng or np.random.default_rng(0)
        self.cfg = cfg
        in_ch = 9 + (1 if cfg.use_seg_condition else 0)
        c1, c2, c3 = cfg.disc_channels
        self.units = [
            Conv2d(in_ch, c1, 4, stride=2, pad=1, rng=rng, dtype=dtype),
            Conv2d(c1, c2, 4, stride=2, pad=1, rng=rng, dtype=dtype),
            Conv2d(c2, c3, 4, stride=2, pad=1, rng=rng, dtype=dtype),
        ]
        self.proj = Conv2d(c3, 1, 3, stride=1, pad=1, rng=rng, dtype=dtype)

    def __call__(self, img: Tensor, left: Tensor, right: Tensor,
                 seg: Tensor | None = None) -> tuple[Tensor, list[Tensor]]:
        parts = [img, left, right]
        if self.cfg.use_seg_condition:
            if seg is None:
                raise ShapeError("segmentation condition required but not given")
            parts.append(seg)
        for p in parts[1:]:
            if p.shape[0] != img.shape[0] or p.shape[2:] != img.shape[2:]:
                raise ShapeError("discriminator conditions must be spatially aligned")
        x = T.concat(parts, axis=1)
        feats = []
        for unit in self.units:
            x = T.leaky_relu(T.instance_norm(unit(x)), self.cfg.leaky_slope)
            feats.append(x)
        return self.proj(x), feats

    def named_params(self, prefix: str) -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        for i, c in enumerate(self.units):
            out.update(c.named_params(f"{prefix}.unit{i + 1}"))
        out.update(self.proj.named_params(f"{prefix}.proj"))
        return out


def discriminate(disc: Discriminator, img: Tensor, left: Tensor, right: Tensor,
                 seg: Tensor | None = None, scale: int = 1):
    """Score at full or half resolution; scale-2 inputs are pooled first."""
    if scale not in (1, 2):
        raise ValueError("scale must be 1 or 2")
    if scale == 2:
        img = T.downsample_bilinear_x2(img)
        left = T.downsample_bilinear_x2(left)
        right = T.downsample_bilinear_x2(right)
        if seg is not None:
            seg = T.downsample_bilinear_x2(seg)
    return disc(img, left, right, seg)


def build_models(cfg: ModelConfig, seed: int = 0, dtype=np.float32):
    """Generator plus the two scale discriminators, seeded deterministically."""
    rng = np.random.default_rng(seed)
    gen = Generator(cfg, rng, dtype)
    d1 = Discriminator(cfg, rng, dtype)
    d2 = Discriminator(cfg, rng, dtype)
    return gen, d1, d2


def identity_affines(n_scales: int = N_SCALES) -> list[AffineParams]:
    return [AffineParams.identity() for _ in range(n_scales)]
