import shutil
from pathlib import Path

import cv2
import numpy as np

from . import raster
from .models import Backends
from .scene import Intrinsics, SceneWriter, thumbnail_descriptor


class CodecError(RuntimeError):
    pass


class SceneError(RuntimeError):
    pass


def decode_video(video_path, long_side: int):
    """Grayscale float frames in [0, 1], resized so the long side equals long_side."""
    if not Path(video_path).is_file():
        raise CodecError(f"video not found: {video_path}")
    cap = cv2.VideoCapture(str(video_path))
    if not cap.isOpened():
        raise CodecError(f"cannot decode {video_path}")
    fps = cap.get(cv2.CAP_PROP_FPS) or 30.0
    frames = []
    try:
        while True:
            ok, bgr = cap.read()
            if not ok:
                break
            gray = bgr if bgr.ndim == 2 else cv2.cvtColor(bgr, cv2.COLOR_BGR2GRAY)
            h, w = gray.shape
            s = long_side / max(w, h)
            if s != 1.0:
                size = (max(1, round(w * s)), max(1, round(h * s)))
                gray = cv2.resize(gray, size, interpolation=cv2.INTER_AREA if s < 1 else cv2.INTER_LINEAR)
            # models see exactly what lands in frames/ (float32)
            frames.append((gray.astype(np.float32) / np.float32(255.0)).astype(np.float64))
    finally:
        cap.release()
    if not frames:
        raise CodecError(f"no frames decoded from {video_path}")
    return frames, fps


def _check_shape(name, array, shape):
    if array.shape != shape:
        raise SceneError(f"{name}: model output shape {array.shape}, expected {shape}")
    if not np.all(np.isfinite(array)):
        raise SceneError(f"{name}: model output not finite")


def extract(video_path, out_dir, backends: Backends, long_side: int = 384, force: bool = False) -> Path:
    frames, fps = decode_video(video_path, long_side)
    out = Path(out_dir)
    if out.exists() and any(out.iterdir()):
        if not force:
            raise SceneError(f"output directory not empty: {out}")
        shutil.rmtree(out)
    writer = SceneWriter(out)
    writer.create()
    h, w = frames[0].shape
    n = len(frames)
    for t, gray in enumerate(frames):
        writer.write_frame(t, gray)
        depth = np.asarray(backends.depth(t, gray), dtype=np.float64)
        _check_shape(f"depth {t}", np.nan_to_num(depth, posinf=0.0), (h, w))
        writer.write_depth(t, depth)
        writer.write_mask(t, np.asarray(backends.mask(t, gray)).reshape(h, w))
        desc = backends.descriptor(t, gray) if backends.descriptor else None
        writer.write_descriptor(t, thumbnail_descriptor(gray) if desc is None else desc)
        if t + 1 < n:
            fwd = np.asarray(backends.flow(t, t + 1, gray, frames[t + 1]), dtype=np.float64)
            bwd = np.asarray(backends.flow(t + 1, t, frames[t + 1], gray), dtype=np.float64)
            _check_shape(f"flow {t}->{t + 1}", fwd, (h, w, 2))
            _check_shape(f"flow {t + 1}->{t}", bwd, (h, w, 2))
            writer.write_flow_forward(t, fwd)
            writer.write_flow_backward(t + 1, bwd)
    writer.write_meta(n, Intrinsics.ideal(w, h), fps=fps, source=Path(video_path).name)
    return out


def fetch_pair_flow(scene_dir, i: int, j: int, backends: Backends):
    writer = SceneWriter(scene_dir)
    meta = writer.read_meta()
    n = int(meta["frame_count"])
    for t in (i, j):
        if t < 0 or t >= n or not writer.frame_path(t).is_file():
            raise SceneError(f"frame {t} not in scene ({n} frames)")
    a = raster.read(writer.frame_path(i))[:, :, 0].astype(np.float64)
    b = raster.read(writer.frame_path(j))[:, :, 0].astype(np.float64)
    shape = a.shape + (2,)
    if i == j:
        fij = fji = np.zeros(shape)
    else:
        fij = np.asarray(backends.flow(i, j, a, b), dtype=np.float64)
        fji = np.asarray(backends.flow(j, i, b, a), dtype=np.float64)
        _check_shape(f"flow {i}->{j}", fij, shape)
        _check_shape(f"flow {j}->{i}", fji, shape)
    writer.pair_flow_path(i, j).parent.mkdir(parents=True, exist_ok=True)
    writer.write_pair_flow(i, j, fij)
    writer.write_pair_flow(j, i, fji)
    return writer.pair_flow_path(i, j), writer.pair_flow_path(j, i)
