"""Command-line entry points for the full workflow.

Subcommands: gen-data, train, render, eval, sweep-tau, serve. The train
config file is a flat key = value document mirroring TrainConfig; values
are parsed as JSON scalars/lists with plain-string fallback, and lines
starting with '#' are comments.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import scenegen
from .checkpoint import load_checkpoint
from .clae import digitize_angle
from .dataset import ViewStore, load_manifest
from .service import serve
from .trainer import (TrainConfig, check_image_size, evaluate,
                      renderer_from_generator, restore_models, sweep_tau, train)


def parse_config_file(path) -> dict:
    """Flat 'key = value' document -> dict with JSON-decoded values."""
    out: dict = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        try:
            out[key] = json.loads(value)
        except json.JSONDecodeError:
            out[key] = value
    return out


def train_config_from_file(path) -> TrainConfig:
    raw = parse_config_file(path)
    known = {f.name for f in fields(TrainConfig)}
    unknown = set(raw) - known
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    if "dataset" not in raw:
        raise ValueError("config must set 'dataset'")
    for key in ("channels", "disc_channels"):
        if key in raw:
            raw[key] = tuple(raw[key])
    return TrainConfig(**raw)


def _parse_size(s: str) -> tuple[int, int]:
    try:
        w, h = s.lower().split("x")
        return int(w), int(h)
    except ValueError:
        raise argparse.ArgumentTypeError(f"size must look like 64x48, got {s!r}")


def _load_generator(ckpt_path, dataset_path):
    ckpt = load_checkpoint(ckpt_path)
    manifest = load_manifest(dataset_path)
    check_image_size(ckpt, tuple(manifest.image_size))
    gen, _, _, _, _ = restore_models(ckpt, with_optimizers=False)
    return gen, ViewStore(manifest)


def _cmd_gen_data(args) -> int:
    scene = scenegen.build_scene(args.seed, args.complexity)
    locations = scenegen.default_locations(args.locations)
    w, h = args.size
    manifest = scenegen.emit_dataset(scene, locations, args.step, w, h, args.out)
    n = len(manifest.records)
    print(f"wrote {n} views ({len(manifest.locations)} locations x "
          f"{manifest.views_per_location()} yaws) to {args.out}")
    return 0


def _cmd_train(args) -> int:
    config = train_config_from_file(args.config)
    ckpt = train(config)
    print(f"trained {ckpt.iteration} iterations; checkpoint in {config.out_dir}")
    return 0


def _cmd_render(args) -> int:
    gen, store = _load_generator(args.ckpt, args.dataset)
    tau = gen.cfg.tau_deg
    yaw = args.yaw % 360.0
    base = float(int(yaw // tau) * tau)
    offset = yaw - base
    if offset == 0.0:
        # a reference yaw is not an interpolation target; digitize rejects it
        base = (base - tau) % 360.0
        offset = tau
    code = digitize_angle(offset, tau, gen.cfg.delta)
    left = store.rgb(args.loc, int(base) % 360)
    right = store.rgb(args.loc, int(base + tau) % 360)
    img = gen.generate(left, right, code)
    scenegen.save_rgb_png(img, args.out)
    print(f"rendered loc {args.loc} yaw {yaw:g} (bin {code.index}) -> {args.out}")
    return 0


def _cmd_eval(args) -> int:
    gen, store = _load_generator(args.ckpt, args.dataset)
    locations = args.locations if args.locations else None
    report = evaluate(renderer_from_generator(gen), store, gen.cfg.tau_deg,
                      gen.cfg.delta, locations)
    report.to_csv(args.out + ".csv")
    report.to_json(args.out + ".json")
    print(f"mean PSNR {report.mean_psnr:.3f} dB  mean SSIM {report.mean_ssim:.4f}  "
          f"baseline PSNR {report.mean_baseline_psnr:.3f} dB "
          f"({len(report.rows)} views) -> {args.out}.csv/.json")
    return 0


def _cmd_sweep_tau(args) -> int:
    gen, store = _load_generator(args.ckpt, args.dataset)
    taus = [float(t) for t in args.taus.split(",")]
    locations = args.locations if args.locations else None
    table = sweep_tau(renderer_from_generator(gen), store, taus, gen.cfg.delta,
                      locations)
    Path(args.out).write_text(json.dumps(table, indent=1))
    for row in table:
        print(f"tau {row['tau_deg']:6.1f}  mean PSNR {row['mean_psnr']:.3f} dB  "
              f"({row['views']} views)")
    return 0


def _cmd_serve(args) -> int:
    serve(args.ckpt, args.dataset, args.port, args.static)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="panosynth",
                                description="panoramic view interpolation toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="emit a procedural dataset")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--complexity", type=int, default=1)
    g.add_argument("--locations", type=int, default=5)
    g.add_argument("--step", type=int, default=5)
    g.add_argument("--size", type=_parse_size, default=(64, 48))
    g.add_argument("--out", required=True)
    g.set_defaults(fn=_cmd_gen_data)

    t = sub.add_parser("train", help="run adversarial training")
    t.add_argument("--config", required=True)
    t.set_defaults(fn=_cmd_train)

    r = sub.add_parser("render", help="render one view from a checkpoint")
    r.add_argument("--ckpt", required=True)
    r.add_argument("--dataset", required=True)
    r.add_argument("--loc", type=int, required=True)
    r.add_argument("--yaw", type=float, required=True)
    r.add_argument("--out", required=True)
    r.set_defaults(fn=_cmd_render)

    e = sub.add_parser("eval", help="score interpolated views against GT")
    e.add_argument("--ckpt", required=True)
    e.add_argument("--dataset", required=True)
    e.add_argument("--locations", type=int, nargs="*")
    e.add_argument("--out", default="eval_report")
    e.set_defaults(fn=_cmd_eval)

    s = sub.add_parser("sweep-tau", help="mean PSNR vs reference spacing")
    s.add_argument("--ckpt", required=True)
    s.add_argument("--dataset", required=True)
    s.add_argument("--taus", default="60,90,120")
    s.add_argument("--locations", type=int, nargs="*")
    s.add_argument("--out", default="sweep_tau.json")
    s.set_defaults(fn=_cmd_sweep_tau)

    v = sub.add_parser("serve", help="start the HTTP render service")
    v.add_argument("--ckpt", required=True)
    v.add_argument("--dataset", required=True)
    v.add_argument("--port", type=int, default=8360)
    v.add_argument("--static", help="directory of viewer assets to serve at /")
    v.set_defaults(fn=_cmd_serve)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        return args.fn(args)
    except (OSError, ValueError, KeyError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
