"""Adversarial training loop, evaluation, and the reference-spacing sweep."""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import tensor as T
from .checkpoint import Checkpoint, ConfigConflictError, save_checkpoint
from .clae import digitize_angle
from .dataset import ViewStore, load_manifest, make_batches
from .losses import (FeatureExtractor, GeneratorLossParts, LossWeights, adv_losses,
                     feat_match_loss, laplacian_loss, pd_loss, psnr, ssim,
                     ssim_metric, total_generator_loss)
from .model import Discriminator, Generator, ModelConfig, build_models, discriminate
from .nn import load_named_params
from .optim import Adam
from .tensor import Tensor


class TrainingDivergedError(RuntimeError):
    """Raised when a loss goes non-finite; the offending batch is dumped."""


@dataclass
class TrainConfig:
    dataset: str
    out_dir: str = "run"
    tau_deg: float = 60.0
    delta: int = 12
    batch: int = 4
    lr: float = 1e-4
    iterations: int = 2000
    seed: int = 0
    lambda_ssim: float = 1.0
    lambda_pd: float = 1.0
    lambda_feat: float = 10.0
    lambda_lap: float = 1.0
    use_cpc: bool = True
    use_msat_multiscale: bool = True
    use_seg_condition: bool = True
    lap_loss: bool = True
    pd_loss: bool = True
    vgg_feat_loss: bool = True
    adv_convention: str = "log-one-minus"
    ckpt_every: int = 1000
    train_locations: list[int] | None = None
    channels: tuple[int, int, int] = (32, 64, 128)
    dec_channels: int = 32
    disc_channels: tuple[int, int, int] = (16, 32, 64)
    latent: int = 256
    cpc_patch: int = 2
    translation_locked: bool = True
    feature_seed: int = 7
    lap_levels: int = 3
    # diagnostics: stop adversarial gradient at the G step (D still trains)
    detach_adv: bool = False

    def effective_weights(self) -> LossWeights:
        """Loss-term flags zero out the corresponding weight."""
        return LossWeights(
            lambda_ssim=self.lambda_ssim,
            lambda_pd=self.lambda_pd if self.pd_loss else 0.0,
            lambda_feat=self.lambda_feat if self.vgg_feat_loss else 0.0,
            lambda_lap=self.lambda_lap if self.lap_loss else 0.0)

    def model_config(self, image_size: tuple[int, int]) -> ModelConfig:
        return ModelConfig(
            image_size=image_size, channels=self.channels,
            dec_channels=self.dec_channels, disc_channels=self.disc_channels,
            latent=self.latent, delta=self.delta,
            tau_deg=self.tau_deg, cpc_patch=self.cpc_patch,
            translation_locked=self.translation_locked, use_cpc=self.use_cpc,
            use_msat_multiscale=self.use_msat_multiscale,
            use_seg_condition=self.use_seg_condition)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["channels"] = list(self.channels)
        d["disc_channels"] = list(self.disc_channels)
        return d


def make_training_checkpoint(cfg: ModelConfig, gen: Generator, d1: Discriminator,
                             d2: Discriminator, opt_g: Adam, opt_d: Adam,
                             iteration: int, train_meta: dict | None = None) -> Checkpoint:
    tensors: dict[str, np.ndarray] = {}
    for name, p in gen.named_params("G").items():
        tensors[name] = p.data
    for name, p in d1.named_params("D1").items():
        tensors[name] = p.data
    for name, p in d2.named_params("D2").items():
        tensors[name] = p.data
    tensors.update(opt_g.state_tensors("optG"))
    tensors.update(opt_d.state_tensors("optD"))
    config = {"model": cfg.to_dict(), "iteration": iteration,
              "train": train_meta or {}}
    return Checkpoint(config=config, tensors=tensors)


def restore_models(ckpt: Checkpoint, with_optimizers: bool = True):
    """Rebuild generator/discriminators (and optimizers) from a checkpoint."""
    cfg = ModelConfig.from_dict(ckpt.config["model"])
    gen, d1, d2 = build_models(cfg, seed=0)
    load_named_params(gen.named_params("G"), ckpt.tensors)
    load_named_params(d1.named_params("D1"), ckpt.tensors)
    load_named_params(d2.named_params("D2"), ckpt.tensors)
    if not with_optimizers:
        return gen, d1, d2, None, None
    opt_g = Adam(gen.named_params("G"))
    opt_d = Adam({**d1.named_params("D1"), **d2.named_params("D2")})
    if any(k.startswith("optG/") for k in ckpt.tensors):
        opt_g.load_state_tensors("optG", ckpt.tensors)
        opt_d.load_state_tensors("optD", ckpt.tensors)
    return gen, d1, d2, opt_g, opt_d


def check_image_size(ckpt: Checkpoint, image_size: tuple[int, int]) -> None:
    got = tuple(ckpt.config["model"]["image_size"])
    if got != tuple(image_size):
        raise ConfigConflictError(
            f"checkpoint image size {got} != requested {tuple(image_size)}")


def _to_tensors(batch, dtype=np.float32):
    return (Tensor(batch.left.astype(dtype)), Tensor(batch.right.astype(dtype)),
            Tensor(batch.onehot.astype(dtype)), Tensor(batch.gt.astype(dtype)),
            Tensor(batch.gt_seg.astype(dtype)))


def train(config: TrainConfig) -> Checkpoint:
    """Alternating D/G optimization; returns (and writes) the final checkpoint.

    Per iteration: one D step on both scales with (left, right, seg)
    conditions, then one G step on the adversarial + similarity objectives.
    Loss curves land in out_dir/losses.csv; checkpoints on the configured
    cadence plus a final checkpoint.s360.
    """
    manifest = load_manifest(config.dataset)
    if config.tau_deg % manifest.step_deg:
        raise ValueError(f"tau {config.tau_deg} incompatible with dataset step "
                         f"{manifest.step_deg}")
    store = ViewStore(manifest)
    cfg = config.model_config(tuple(manifest.image_size))
    gen, d1, d2 = build_models(cfg, seed=config.seed)
    opt_g = Adam(gen.named_params("G"))
    opt_d = Adam({**d1.named_params("D1"), **d2.named_params("D2")})
    weights = config.effective_weights()
    extractor = FeatureExtractor(seed=config.feature_seed) if weights.lambda_pd else None
    batches = make_batches(store, config.tau_deg, config.delta, config.batch,
                           config.seed, config.train_locations)
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    meta = config.to_dict()

    csv_path = out_dir / "losses.csv"
    columns = ["iteration", "loss_d", "loss_g", "adv_g", "ssim", "pd", "feat",
               "lap", "recon_l1"]
    with open(csv_path, "w", newline="") as fcsv:
        writer = csv.writer(fcsv)
        writer.writerow(columns)
        for it in range(1, config.iterations + 1):
            batch = next(batches)
            left, right, onehot, gt, seg_t = _to_tensors(batch)
            seg = seg_t if config.use_seg_condition else None

            fake = gen(left, right, onehot)
            fake_detached = fake.detach()

            # -- D step: only discriminator weights move -----------------
            opt_d.zero_grad()
            opt_g.zero_grad()
            loss_d = None
            for scale, d in ((1, d1), (2, d2)):
                s_real, _ = discriminate(d, gt, left, right, seg, scale)
                s_fake, _ = discriminate(d, fake_detached, left, right, seg, scale)
                ld, _ = adv_losses(s_real, s_fake, config.adv_convention)
                loss_d = ld if loss_d is None else loss_d + ld
            loss_d = 0.5 * loss_d
            loss_d.backward()
            opt_d.step(config.lr)

            # -- G step: only generator weights move ---------------------
            opt_d.zero_grad()
            opt_g.zero_grad()
            adv_g = None
            feat = None
            for scale, d in ((1, d1), (2, d2)):
                with T.no_grad():
                    s_real, feats_real = discriminate(d, gt, left, right, seg, scale)
                s_fake, feats_fake = discriminate(d, fake, left, right, seg, scale)
                _, lg = adv_losses(s_real.detach(),
                                   s_fake.detach() if config.detach_adv else s_fake,
                                   config.adv_convention)
                adv_g = lg if adv_g is None else adv_g + lg
                if weights.lambda_feat:
                    fm = feat_match_loss([f.detach() for f in feats_real], feats_fake)
                    feat = fm if feat is None else feat + fm
            parts = GeneratorLossParts(
                adv=0.5 * adv_g,
                ssim=ssim(fake, gt) if weights.lambda_ssim else None,
                pd=pd_loss(fake, gt, extractor) if weights.lambda_pd else None,
                feat=0.5 * feat if feat is not None else None,
                lap=laplacian_loss(fake, gt, config.lap_levels) if weights.lambda_lap else None)
            loss_g = total_generator_loss(parts, weights)
            loss_g.backward()
            opt_g.step(config.lr)

            ld_v, lg_v = float(loss_d.data), float(loss_g.data)
            recon = float(np.mean(np.abs(fake.data - gt.data)))
            row = [it, ld_v, lg_v, float(parts.adv.data),
                   float(parts.ssim.data) if parts.ssim is not None else "",
                   float(parts.pd.data) if parts.pd is not None else "",
                   float(parts.feat.data) if parts.feat is not None else "",
                   float(parts.lap.data) if parts.lap is not None else "",
                   recon]
            writer.writerow(row)

            if not (np.isfinite(ld_v) and np.isfinite(lg_v)):
                dump = out_dir / f"diverged_iter{it:06d}.npz"
                np.savez(dump, left=batch.left, right=batch.right, gt=batch.gt,
                         gt_seg=batch.gt_seg, onehot=batch.onehot)
                raise TrainingDivergedError(
                    f"non-finite loss at iteration {it} (D={ld_v}, G={lg_v}); "
                    f"batch dumped to {dump}")

            if config.ckpt_every and it % config.ckpt_every == 0 and it < config.iterations:
                ck = make_training_checkpoint(cfg, gen, d1, d2, opt_g, opt_d, it, meta)
                save_checkpoint(ck, out_dir / f"ckpt_{it:06d}.s360")

    final = make_training_checkpoint(cfg, gen, d1, d2, opt_g, opt_d,
                                     config.iterations, meta)
    save_checkpoint(final, out_dir / "checkpoint.s360")
    return final


# -- evaluation ---------------------------------------------------------------


@dataclass
class EvalRow:
    location: int
    left_yaw: int
    theta_abs: int
    offset: int
    psnr: float
    ssim: float
    baseline_psnr: float


@dataclass
class EvalReport:
    tau_deg: float
    border: int
    rows: list[EvalRow] = field(default_factory=list)

    @property
    def mean_psnr(self) -> float:
        return float(np.mean([r.psnr for r in self.rows]))

    @property
    def mean_ssim(self) -> float:
        return float(np.mean([r.ssim for r in self.rows]))

    @property
    def mean_baseline_psnr(self) -> float:
        return float(np.mean([r.baseline_psnr for r in self.rows]))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["location", "left_yaw", "theta_abs", "offset", "psnr",
                        "ssim", "baseline_psnr"])
            for r in self.rows:
                w.writerow([r.location, r.left_yaw, r.theta_abs, r.offset,
                            r.psnr, r.ssim, r.baseline_psnr])

    def to_json(self, path) -> None:
        d = {"tau_deg": self.tau_deg, "border": self.border,
             "mean_psnr": self.mean_psnr, "mean_ssim": self.mean_ssim,
             "mean_baseline_psnr": self.mean_baseline_psnr,
             "rows": [asdict(r) for r in self.rows]}
        Path(path).write_text(json.dumps(d, indent=1, sort_keys=True))


def renderer_from_generator(gen: Generator):
    def render(left: np.ndarray, right: np.ndarray, code) -> np.ndarray:
        return gen.generate(left, right, code)
    return render


def evaluate(render_fn, store: ViewStore, tau_deg: float, delta: int,
             locations: list[int] | None = None, border: int = 8) -> EvalReport:
    """Score every intermediate view at every location against ground truth.

    The reference yaws themselves are never scored. The naive baseline
    (pixel average of the two references) is recorded alongside for
    comparison.
    """
    m = store.manifest
    step = m.step_deg
    tau = int(round(tau_deg))
    if tau % step or 360 % tau:
        raise ValueError(f"tau {tau} incompatible with step {step}")
    locs = list(m.locations) if locations is None else list(locations)
    report = EvalReport(tau_deg=tau_deg, border=border)
    for loc in locs:
        for base in range(0, 360, tau):
            left = store.rgb(loc, base)
            right = store.rgb(loc, (base + tau) % 360)
            blend = 0.5 * (left + right)
            for off in range(step, tau, step):
                theta_abs = (base + off) % 360
                if not store.has_view(loc, theta_abs):
                    raise KeyError(f"missing ground truth: loc {loc} yaw {theta_abs}")
                gt = store.rgb(loc, theta_abs)
                code = digitize_angle(off, tau_deg, delta)
                pred = render_fn(left, right, code)
                report.rows.append(EvalRow(
                    location=loc, left_yaw=base, theta_abs=theta_abs, offset=off,
                    psnr=psnr(pred, gt, border), ssim=ssim_metric(pred, gt, border),
                    baseline_psnr=psnr(blend, gt, border)))
    return report


def sweep_tau(render_fn, store: ViewStore, taus: list[float], delta: int,
              locations: list[int] | None = None, border: int = 8) -> list[dict]:
    """Mean PSNR for each reference spacing, reusing the trained pose code.

    Offsets are digitized proportionally (floor(theta/tau * delta)) so a
    model trained at one spacing can be probed at wider ones.
    """
    out = []
    for tau in taus:
        rep = evaluate(render_fn, store, tau, delta, locations, border)
        out.append({"tau_deg": float(tau), "mean_psnr": rep.mean_psnr,
                    "mean_ssim": rep.mean_ssim, "views": len(rep.rows)})
    return out
