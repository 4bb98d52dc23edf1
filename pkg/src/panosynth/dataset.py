"""Manifest loading, cached view access, and training batch sampling."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .clae import digitize_angle
from .scenegen import DatasetManifest


def load_manifest(path) -> DatasetManifest:
    path = Path(path)
    if path.is_dir():
        path = path / "manifest.json"
    d = json.loads(path.read_text())
    return DatasetManifest(
        name=d["name"], image_size=tuple(d["image_size"]), step_deg=d["step_deg"],
        tau_deg=d["tau_deg"], delta=d["delta"], scene_seed=d.get("scene_seed", 0),
        locations=d["locations"], records=d["records"], root=path.parent)


class ViewStore:
    """Lazy image cache over a dataset manifest.

    RGB and segmentation views come back as float32 arrays in [0,1]; the
    seg map is the 8-bit id plane scaled by 1/255 so it can feed the
    discriminator directly. Raw ids are available via ``seg_ids``.
    """

    def __init__(self, manifest: DatasetManifest):
        if manifest.root is None:
            raise ValueError("manifest has no root directory")
        self.manifest = manifest
        self._index: dict[tuple[int, int], dict] = {
            (r["location"], r["yaw_deg"]): r for r in manifest.records}
        self._rgb: dict[tuple[int, int], np.ndarray] = {}
        self._seg: dict[tuple[int, int], np.ndarray] = {}

    def has_view(self, loc: int, yaw_deg: int) -> bool:
        return (loc, int(yaw_deg) % 360) in self._index

    def _record(self, loc: int, yaw_deg: int) -> dict:
        key = (loc, int(yaw_deg) % 360)
        if key not in self._index:
            raise KeyError(f"no view for location {loc} at yaw {yaw_deg}")
        return self._index[key]

    def rgb(self, loc: int, yaw_deg: int) -> np.ndarray:
        key = (loc, int(yaw_deg) % 360)
        if key not in self._rgb:
            rec = self._record(*key)
            img = Image.open(self.manifest.root / rec["rgb"]).convert("RGB")
            arr = np.asarray(img, dtype=np.float32) / 255.0
            self._rgb[key] = arr.transpose(2, 0, 1)
        return self._rgb[key]

    def seg(self, loc: int, yaw_deg: int) -> np.ndarray:
        key = (loc, int(yaw_deg) % 360)
        if key not in self._seg:
            rec = self._record(*key)
            img = Image.open(self.manifest.root / rec["seg"])
            self._seg[key] = (np.asarray(img, dtype=np.float32) / 255.0)[None]
        return self._seg[key]

    def seg_ids(self, loc: int, yaw_deg: int) -> np.ndarray:
        return np.rint(self.seg(loc, yaw_deg) * 255.0).astype(np.int32)


@dataclass
class Batch:
    left: np.ndarray      # [B,3,H,W]
    right: np.ndarray     # [B,3,H,W]
    onehot: np.ndarray    # [B,delta]
    gt: np.ndarray        # [B,3,H,W]
    gt_seg: np.ndarray    # [B,1,H,W]
    locations: np.ndarray
    base_yaws: np.ndarray
    offsets: np.ndarray


def make_batches(store: ViewStore, tau_deg: float, delta: int, batch: int,
                 seed: int, locations: list[int] | None = None):
    """Infinite deterministic stream of training batches.

    Each sample picks a location, a left reference on the tau grid, and a
    target offset strictly between the references (never 0 or tau), so the
    references themselves are never interpolation targets.
    """
    m = store.manifest
    step = m.step_deg
    tau = int(round(tau_deg))
    if tau % step:
        raise ValueError(f"tau {tau} must be a multiple of the dataset step {step}")
    if 360 % tau:
        raise ValueError(f"tau {tau} must divide 360")
    locs = list(m.locations) if locations is None else list(locations)
    offsets = list(range(step, tau, step))
    bases = list(range(0, 360, tau))
    rng = np.random.default_rng(seed)
    while True:
        items = []
        for _ in range(batch):
            loc = locs[int(rng.integers(0, len(locs)))]
            base = bases[int(rng.integers(0, len(bases)))]
            off = offsets[int(rng.integers(0, len(offsets)))]
            code = digitize_angle(off, tau_deg, delta)
            items.append((
                store.rgb(loc, base),
                store.rgb(loc, (base + tau) % 360),
                code.onehot,
                store.rgb(loc, (base + off) % 360),
                store.seg(loc, (base + off) % 360),
                loc, base, off))
        yield Batch(
            left=np.stack([it[0] for it in items]),
            right=np.stack([it[1] for it in items]),
            onehot=np.stack([it[2] for it in items]),
            gt=np.stack([it[3] for it in items]),
            gt_seg=np.stack([it[4] for it in items]),
            locations=np.array([it[5] for it in items]),
            base_yaws=np.array([it[6] for it in items]),
            offsets=np.array([it[7] for it in items]))
