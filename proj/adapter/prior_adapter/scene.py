"""Scene directory writer matching the engine's layout."""

import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import raster

DESCRIPTOR_GRID = 16
MIN_DEPTH = 1e-4


def _indexed(prefix: str, t: int) -> str:
    return f"{prefix}{t:06d}.gcvdr"


@dataclass
class Intrinsics:
    width: int
    height: int
    fx: float
    fy: float
    cx: float
    cy: float

    @staticmethod
    def ideal(width: int, height: int) -> "Intrinsics":
        f = float(max(width, height))
        return Intrinsics(width, height, f, f, 0.5 * (width - 1), 0.5 * (height - 1))


class SceneWriter:
    def __init__(self, root):
        self.root = Path(root)

    def frame_path(self, t):
        return self.root / "frames" / _indexed("frame_", t)

    def depth_path(self, t):
        return self.root / "priors" / _indexed("depth_", t)

    def mask_path(self, t):
        return self.root / "priors" / _indexed("mask_", t)

    def descriptor_path(self, t):
        return self.root / "priors" / _indexed("desc_", t)

    def flow_forward_path(self, t):
        return self.root / "priors" / _indexed("flow_fwd_", t)

    def flow_backward_path(self, t):
        return self.root / "priors" / _indexed("flow_bwd_", t)

    def pair_flow_path(self, i, j):
        return self.root / "pairs" / f"flow_{i:06d}_{j:06d}.gcvdr"

    def create(self):
        for sub in ("frames", "priors", "pairs"):
            (self.root / sub).mkdir(parents=True, exist_ok=True)

    def write_meta(self, frame_count: int, k: Intrinsics, fps: float = 30.0, source: str = "adapter"):
        lines = [
            f"cx = {k.cx!r}",
            f"cy = {k.cy!r}",
            f"fps = {float(fps)!r}",
            f"frame_count = {frame_count}",
            f"fx = {k.fx!r}",
            f"fy = {k.fy!r}",
            f"height = {k.height}",
            f"source = {source}",
            f"width = {k.width}",
        ]
        path = self.root / "frames.meta"
        tmp = path.with_name(path.name + f".tmp{os.getpid()}")
        tmp.write_text("\n".join(lines) + "\n")
        os.replace(tmp, path)

    def write_frame(self, t, gray):
        raster.write(self.frame_path(t), np.clip(gray, 0.0, 1.0))

    def write_depth(self, t, depth):
        raster.write(self.depth_path(t), np.maximum(np.nan_to_num(depth, nan=MIN_DEPTH), MIN_DEPTH))

    def write_mask(self, t, static):
        raster.write(self.mask_path(t), np.asarray(static, dtype=bool).astype(np.float32))

    def write_descriptor(self, t, descriptor):
        d = np.asarray(descriptor, dtype=np.float64).reshape(1, -1)
        raster.write(self.descriptor_path(t), d)

    def write_flow_forward(self, t, flow):
        raster.write(self.flow_forward_path(t), flow)

    def write_flow_backward(self, t, flow):
        raster.write(self.flow_backward_path(t), flow)

    def write_pair_flow(self, i, j, flow):
        raster.write(self.pair_flow_path(i, j), flow)

    def read_meta(self) -> dict:
        path = self.root / "frames.meta"
        if not path.exists():
            raise FileNotFoundError(f"missing scene metadata: {path}")
        out = {}
        for line in path.read_text().splitlines():
            if "=" in line and not line.lstrip().startswith("#"):
                key, value = line.split("=", 1)
                out[key.strip()] = value.strip()
        return out


def disparity_to_depth(disparity):
    d = np.asarray(disparity, dtype=np.float64)
    with np.errstate(divide="ignore"):
        depth = np.where(d > 0.0, 1.0 / np.maximum(d, 1e-300), np.inf)
    return np.clip(depth, MIN_DEPTH, 1.0 / MIN_DEPTH)


def thumbnail_descriptor(gray) -> np.ndarray:
    """Area-averaged 16x16 thumbnail, zero mean, unit norm (same as the engine fallback)."""
    img = np.asarray(gray, dtype=np.float64)
    h, w = img.shape
    g = DESCRIPTOR_GRID

    def weights(n):
        # rows: cells, cols: pixels; overlap length of pixel [p, p+1) with each cell
        edges = np.arange(g + 1) * (n / g)
        p = np.arange(n)
        lo = np.maximum(edges[:-1, None], p[None, :])
        hi = np.minimum(edges[1:, None], p[None, :] + 1.0)
        return np.clip(hi - lo, 0.0, None)

    wy, wx = weights(h), weights(w)
    sums = wy @ img @ wx.T
    area = wy.sum(axis=1)[:, None] * wx.sum(axis=1)[None, :]
    d = (sums / area).reshape(-1)
    d -= d.mean()
    norm = np.linalg.norm(d)
    if norm < 1e-12:
        d = np.zeros(g * g)
        d[0] = 1.0
        return d
    return d / norm
