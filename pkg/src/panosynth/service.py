"""HTTP render service backing the interactive viewer.

Endpoints (all GET, PNG responses unless noted):

    /meta                     JSON: tau, delta, image_size, locations,
                              reference_yaws, step_deg
    /render?loc=L&yaw=F       generated view; yaw snaps to the tau/delta
                              grid (snap reported in X-Snapped-Yaw)
    /gt?loc=L&yaw=F           ground-truth view, 404 if not captured
    /residue?loc=L&yaw=F      |prediction - GT| amplified x5, clamped

400 malformed parameters, 404 unknown location/view, 422 when the snapped
yaw collides with a reference. Model weights are immutable once loaded, so
identical requests produce byte-identical PNGs.
"""

from __future__ import annotations

import io
import json
import mimetypes
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from urllib.parse import parse_qs, urlparse

import numpy as np
from PIL import Image

from .clae import digitize_angle
from .dataset import ViewStore, load_manifest
from .model import Generator


class ServiceError(Exception):
    def __init__(self, status: int, message: str):
        super().__init__(message)
        self.status = status
        self.message = message


def _png_bytes(img: np.ndarray) -> bytes:
    arr = np.clip(np.rint(img.transpose(1, 2, 0) * 255.0), 0, 255).astype(np.uint8)
    buf = io.BytesIO()
    Image.fromarray(arr, "RGB").save(buf, format="PNG")
    return buf.getvalue()


class RenderService:
    """Pure request logic, independent of the HTTP plumbing (testable directly)."""

    def __init__(self, gen: Generator, store: ViewStore):
        self.gen = gen
        self.store = store
        self.tau = float(gen.cfg.tau_deg)
        self.delta = int(gen.cfg.delta)
        self.snap_deg = self.tau / self.delta
        self._cache: dict[tuple[int, float], np.ndarray] = {}
        self._lock = threading.Lock()

    def meta(self) -> dict:
        m = self.store.manifest
        return {
            "tau": self.tau,
            "delta": self.delta,
            "image_size": list(m.image_size),
            "locations": list(m.locations),
            "reference_yaws": list(range(0, 360, int(self.tau))),
            "step_deg": m.step_deg,
        }

    def _check_location(self, loc: int) -> None:
        if loc not in self.store.manifest.locations:
            raise ServiceError(404, f"unknown location {loc}")

    def snap(self, yaw: float) -> float:
        return (round(yaw / self.snap_deg) * self.snap_deg) % 360.0

    def predict(self, loc: int, yaw: float,
                left_yaw: float | None = None,
                right_yaw: float | None = None) -> tuple[np.ndarray, dict]:
        """Snapped render. Returns (image, info with snap/refs/code index)."""
        self._check_location(loc)
        snapped = self.snap(yaw)
        if left_yaw is None or right_yaw is None:
            if snapped % self.tau == 0:
                raise ServiceError(422, f"yaw {yaw} snaps to reference {snapped}")
            base = float(int(snapped // self.tau) * self.tau)
            left_yaw, right_yaw = base, base + self.tau
        else:
            if not left_yaw < snapped < right_yaw:
                raise ServiceError(422, f"snapped yaw {snapped} not strictly inside "
                                        f"({left_yaw}, {right_yaw})")
        span = right_yaw - left_yaw
        offset = snapped - left_yaw
        code = digitize_angle(offset, span, self.delta)
        key = (loc, snapped, left_yaw, right_yaw)
        with self._lock:
            img = self._cache.get(key)
        if img is None:
            left = self.store.rgb(loc, int(round(left_yaw)) % 360)
            right = self.store.rgb(loc, int(round(right_yaw)) % 360)
            img = self.gen.generate(left, right, code)
            with self._lock:
                self._cache[key] = img
        info = {"snapped_yaw": snapped, "left_ref": left_yaw,
                "right_ref": right_yaw, "angle_index": code.index}
        return img, info

    def ground_truth(self, loc: int, yaw: float) -> np.ndarray:
        self._check_location(loc)
        snapped = self.snap(yaw)
        if snapped != int(snapped) or not self.store.has_view(loc, int(snapped)):
            raise ServiceError(404, f"no ground truth at loc {loc} yaw {snapped}")
        return self.store.rgb(loc, int(snapped))

    def residue(self, loc: int, yaw: float) -> tuple[np.ndarray, dict]:
        gt = self.ground_truth(loc, yaw)
        pred, info = self.predict(loc, yaw)
        res = np.clip(np.abs(pred - gt) * 5.0, 0.0, 1.0)
        return res.astype(np.float32), info


def _make_handler(service: RenderService, static_dir: Path | None):
    class Handler(BaseHTTPRequestHandler):
        def log_message(self, fmt, *args):  # quiet by default
            pass

        def _send(self, status: int, body: bytes, content_type: str,
                  extra: dict | None = None):
            self.send_response(status)
            self.send_header("Content-Type", content_type)
            self.send_header("Content-Length", str(len(body)))
            self.send_header("Access-Control-Allow-Origin", "*")
            self.send_header("Access-Control-Expose-Headers",
                             "X-Snapped-Yaw, X-Angle-Index, X-Left-Ref, X-Right-Ref")
            for k, v in (extra or {}).items():
                self.send_header(k, v)
            self.end_headers()
            self.wfile.write(body)

        def _send_json(self, status: int, obj: dict):
            self._send(status, json.dumps(obj).encode(), "application/json")

        def _params(self, query: dict) -> tuple[int, float]:
            try:
                loc = int(query["loc"][0])
                yaw = float(query["yaw"][0]) % 360.0
            except (KeyError, ValueError, IndexError):
                raise ServiceError(400, "need integer 'loc' and numeric 'yaw'")
            if not np.isfinite(yaw):
                raise ServiceError(400, "yaw must be finite")
            return loc, yaw

        def do_GET(self):
            url = urlparse(self.path)
            query = parse_qs(url.query)
            try:
                if url.path == "/meta":
                    self._send_json(200, service.meta())
                elif url.path == "/render":
                    loc, yaw = self._params(query)
                    img, info = service.predict(loc, yaw)
                    self._send(200, _png_bytes(img), "image/png", {
                        "X-Snapped-Yaw": f"{info['snapped_yaw']:g}",
                        "X-Angle-Index": str(info["angle_index"]),
                        "X-Left-Ref": f"{info['left_ref']:g}",
                        "X-Right-Ref": f"{info['right_ref']:g}"})
                elif url.path == "/gt":
                    loc, yaw = self._params(query)
                    img = service.ground_truth(loc, yaw)
                    self._send(200, _png_bytes(img), "image/png")
                elif url.path == "/residue":
                    loc, yaw = self._params(query)
                    img, info = service.residue(loc, yaw)
                    self._send(200, _png_bytes(img), "image/png", {
                        "X-Snapped-Yaw": f"{info['snapped_yaw']:g}"})
                elif static_dir is not None:
                    self._static(url.path)
                else:
                    raise ServiceError(404, f"unknown endpoint {url.path}")
            except ServiceError as e:
                self._send_json(e.status, {"error": e.message})
            except BrokenPipeError:
                pass

        def _static(self, path: str):
            rel = "index.html" if path == "/" else path.lstrip("/")
            target = (static_dir / rel).resolve()
            if not str(target).startswith(str(static_dir.resolve())) or not target.is_file():
                raise ServiceError(404, f"not found: {path}")
            ctype = mimetypes.guess_type(str(target))[0] or "application/octet-stream"
            self._send(200, target.read_bytes(), ctype)

    return Handler


def make_server(gen: Generator, store: ViewStore, port: int = 0,
                static_dir: str | None = None) -> tuple[ThreadingHTTPServer, RenderService]:
    service = RenderService(gen, store)
    sdir = Path(static_dir) if static_dir else None
    handler = _make_handler(service, sdir)
    server = ThreadingHTTPServer(("127.0.0.1", port), handler)
    return server, service


def serve(ckpt_path, dataset_path, port: int, static_dir: str | None = None) -> None:
    """Load checkpoint + dataset and serve until interrupted."""
    from .checkpoint import load_checkpoint
    from .trainer import check_image_size, restore_models

    ckpt = load_checkpoint(ckpt_path)
    manifest = load_manifest(dataset_path)
    check_image_size(ckpt, tuple(manifest.image_size))
    gen, _, _, _, _ = restore_models(ckpt, with_optimizers=False)
    store = ViewStore(manifest)
    server, _ = make_server(gen, store, port, static_dir)
    host, bound_port = server.server_address
    print(f"serving on http://{host}:{bound_port}  (ctrl-c to stop)")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        server.shutdown()
