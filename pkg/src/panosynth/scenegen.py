"""Procedural scenes and ground-truth rendering.

Scenes are textured vertical billboards standing on a ground plane, placed
on a ring 5-30 m from the origin so that every 60-degree sector has
content. A pinhole camera with z-buffered ray casting renders RGB plus a
per-pixel object-id segmentation map; yaw sweeps around a location emit a
dataset of 360/step views.

Conventions: world y is up, the camera at yaw 0 looks along +z, and yaw
increases clockwise seen from above (an object at azimuth a deg is centered
in the view when yaw = a). Pixel (row, col) covers the continuous image
coordinates [col, col+1) x [row, row+1) and is sampled at its center.
"""

from __future__ import annotations

import colorsys
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

PATTERNS = ("solid", "stripes", "checker")
NEAR_PLANE = 0.05
BACKGROUND_ID = 0


@dataclass(frozen=True)
class Billboard:
    center: tuple[float, float, float]  # meters; y is the vertical center
    width: float
    height: float
    object_id: int
    color: tuple[float, float, float]
    pattern: str

    def __post_init__(self):
        if self.object_id <= 0:
            raise ValueError("object ids must be > 0 (0 is background)")
        if self.pattern not in PATTERNS:
            raise ValueError(f"unknown pattern {self.pattern!r}")


@dataclass(frozen=True)
class SceneSpec:
    seed: int
    billboards: tuple[Billboard, ...]
    background_color: tuple[float, float, float] = (0.55, 0.72, 0.92)
    ground_color: tuple[float, float, float] = (0.34, 0.32, 0.29)

    def __post_init__(self):
        ids = [b.object_id for b in self.billboards]
        if len(set(ids)) != len(ids):
            raise ValueError("object ids must be unique")


@dataclass(frozen=True)
class CameraPose:
    position: tuple[float, float, float] = (0.0, 1.6, 0.0)
    yaw_deg: float = 0.0
    fov_deg: float = 60.0

    def __post_init__(self):
        object.__setattr__(self, "yaw_deg", float(self.yaw_deg) % 360.0)

    @property
    def basis(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(right, up, forward) unit vectors in world space."""
        a = np.deg2rad(self.yaw_deg)
        fwd = np.array([np.sin(a), 0.0, np.cos(a)])
        right = np.array([np.cos(a), 0.0, -np.sin(a)])
        up = np.array([0.0, 1.0, 0.0])
        return right, up, fwd


def build_scene(seed: int, complexity: int = 1) -> SceneSpec:
    """Deterministic ring of 6*complexity billboards, one batch per sector."""
    if complexity < 1:
        raise ValueError("complexity must be >= 1")
    rng = np.random.default_rng(seed)
    billboards = []
    oid = 1
    for sector in range(6):
        for _ in range(complexity):
            azimuth = sector * 60.0 + rng.uniform(8.0, 52.0)
            dist = rng.uniform(5.0, 30.0)
            width = rng.uniform(2.5, 7.0)
            height = rng.uniform(2.5, 8.0)
            a = np.deg2rad(azimuth)
            center = (dist * np.sin(a), height / 2.0, dist * np.cos(a))
            hue, sat, val = rng.uniform(0, 1), rng.uniform(0.55, 1.0), rng.uniform(0.55, 0.95)
            color = colorsys.hsv_to_rgb(hue, sat, val)
            pattern = PATTERNS[int(rng.integers(0, len(PATTERNS)))]
            billboards.append(Billboard(
                center=tuple(float(v) for v in center),
                width=float(width), height=float(height), object_id=oid,
                color=tuple(float(v) for v in color), pattern=pattern))
            oid += 1
    return SceneSpec(seed=seed, billboards=tuple(billboards))


def project_point(pose: CameraPose, point, width: int, height: int):
    """Continuous pixel coordinates (u, v) and camera depth of a world point."""
    right, up, fwd = pose.basis
    rel = np.asarray(point, dtype=np.float64) - np.asarray(pose.position)
    xc, yc, zc = rel @ right, rel @ up, rel @ fwd
    fx = (width / 2.0) / np.tan(np.deg2rad(pose.fov_deg) / 2.0)
    u = fx * xc / zc + width / 2.0
    v = -fx * yc / zc + height / 2.0
    return float(u), float(v), float(zc)


def _pattern_colors(bb: Billboard, sw: np.ndarray, sh: np.ndarray) -> np.ndarray:
    base = np.array(bb.color)
    dark = base * 0.45
    if bb.pattern == "solid":
        k = np.zeros(sw.shape, dtype=bool)
    elif bb.pattern == "stripes":
        period = bb.width / 5.0
        k = (np.floor((sw + bb.width / 2.0) / period).astype(np.int64) % 2) == 1
    else:  # checker
        cell = max(min(bb.width, bb.height) / 4.0, 0.25)
        k = ((np.floor((sw + bb.width / 2.0) / cell)
              + np.floor((sh + bb.height / 2.0) / cell)).astype(np.int64) % 2) == 1
    return np.where(k[..., None], dark, base)


def render_view(scene: SceneSpec, pose: CameraPose, width: int = 64,
                height: int = 48) -> tuple[np.ndarray, np.ndarray]:
    """Z-buffered ray cast: returns (rgb [3,H,W] in [0,1], seg [1,H,W] ids)."""
    right, up, fwd = pose.basis
    p = np.asarray(pose.position, dtype=np.float64)
    fx = (width / 2.0) / np.tan(np.deg2rad(pose.fov_deg) / 2.0)
    us = (np.arange(width) + 0.5 - width / 2.0) / fx
    vs = -(np.arange(height) + 0.5 - height / 2.0) / fx
    xc, yc = np.meshgrid(us, vs)
    # forward component is 1, so the ray parameter t equals camera depth
    dirs = xc[..., None] * right + yc[..., None] * up + fwd

    rgb = np.empty((height, width, 3))
    rgb[:] = scene.background_color
    seg = np.full((height, width), BACKGROUND_ID, dtype=np.int32)
    zbuf = np.full((height, width), np.inf)

    dy = dirs[..., 1]
    descending = dy < -1e-12
    with np.errstate(divide="ignore", invalid="ignore"):
        t_ground = np.where(descending, -p[1] / dy, np.inf)
    hit = descending & (t_ground > NEAR_PLANE) & (t_ground < zbuf)
    rgb[hit] = scene.ground_color
    zbuf[hit] = t_ground[hit]

    for bb in scene.billboards:
        c = np.asarray(bb.center, dtype=np.float64)
        flat = np.array([c[0], 0.0, c[2]])
        norm = -flat / np.linalg.norm(flat)  # faces the origin
        w_axis = np.array([norm[2], 0.0, -norm[0]])
        denom = dirs @ norm
        with np.errstate(divide="ignore", invalid="ignore"):
            t = np.where(np.abs(denom) > 1e-12, (c - p) @ norm / denom, np.inf)
        q = p + t[..., None] * dirs
        sw = (q - c) @ w_axis
        sh = q[..., 1] - c[1]
        hit = ((t > NEAR_PLANE) & (np.abs(sw) <= bb.width / 2.0)
               & (np.abs(sh) <= bb.height / 2.0) & (t < zbuf))
        if not hit.any():
            continue
        colors = _pattern_colors(bb, sw, sh)
        rgb[hit] = colors[hit]
        seg[hit] = bb.object_id
        zbuf[hit] = t[hit]

    return rgb.transpose(2, 0, 1).astype(np.float32), seg[None]


@dataclass
class DatasetManifest:
    name: str
    image_size: tuple[int, int]  # (width, height)
    step_deg: int
    tau_deg: float
    delta: int
    scene_seed: int
    locations: list[int]
    records: list[dict]
    root: Path | None = None

    def views_per_location(self) -> int:
        return 360 // self.step_deg

    def to_json(self) -> str:
        d = {"name": self.name, "image_size": list(self.image_size),
             "step_deg": self.step_deg, "tau_deg": self.tau_deg, "delta": self.delta,
             "scene_seed": self.scene_seed, "locations": self.locations,
             "records": self.records}
        return json.dumps(d, indent=1, sort_keys=True)


def save_rgb_png(rgb: np.ndarray, path) -> None:
    arr = np.clip(np.rint(rgb.transpose(1, 2, 0) * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(arr, "RGB").save(path, format="PNG")


def save_seg_png(seg: np.ndarray, path) -> None:
    ids = seg[0]
    if ids.max() > 255:
        raise ValueError("segmentation ids exceed 8-bit range")
    Image.fromarray(ids.astype(np.uint8), "L").save(path, format="PNG")


def emit_dataset(scene: SceneSpec, locations, step_deg: int, width: int, height: int,
                 out_dir, name: str = "procedural", tau_deg: float = 60.0,
                 delta: int = 12) -> DatasetManifest:
    """Render and write all yaw-sweep views plus manifest.json.

    ``locations`` is a list of camera positions (x, y, z). Layout on disk:
    out_dir/loc{L}/yaw{DDD}.png and yaw{DDD}_seg.png, manifest.json last.
    Re-emitting with identical arguments reproduces identical bytes.
    """
    if 360 % step_deg:
        raise ValueError(f"step {step_deg} must divide 360")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    records = []
    for loc, pos in enumerate(locations):
        loc_dir = out / f"loc{loc}"
        loc_dir.mkdir(exist_ok=True)
        for yaw in range(0, 360, step_deg):
            rgb, seg = render_view(scene, CameraPose(tuple(pos), yaw), width, height)
            rgb_rel = f"loc{loc}/yaw{yaw:03d}.png"
            seg_rel = f"loc{loc}/yaw{yaw:03d}_seg.png"
            save_rgb_png(rgb, out / rgb_rel)
            save_seg_png(seg, out / seg_rel)
            records.append({"location": loc, "yaw_deg": yaw,
                            "rgb": rgb_rel, "seg": seg_rel})
    manifest = DatasetManifest(
        name=name, image_size=(width, height), step_deg=step_deg, tau_deg=tau_deg,
        delta=delta, scene_seed=scene.seed, locations=list(range(len(locations))),
        records=records, root=out)
    (out / "manifest.json").write_text(manifest.to_json())
    return manifest


def default_locations(count: int, radius: float = 1.5, cam_height: float = 1.6):
    """Camera layout: four ring corners first, then the center, then extras."""
    corners = [(radius, cam_height, radius), (-radius, cam_height, radius),
               (-radius, cam_height, -radius), (radius, cam_height, -radius)]
    out = []
    rng = np.random.default_rng(99)
    for i in range(count):
        if i < 4:
            out.append(corners[i])
        elif i == 4:
            out.append((0.0, cam_height, 0.0))
        else:
            ang = rng.uniform(0, 2 * np.pi)
            r = rng.uniform(0.3, radius)
            out.append((float(r * np.cos(ang)), cam_height, float(r * np.sin(ang))))
    return out
