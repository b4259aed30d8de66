"""Model backends. The extractor only sees these four callables."""

import importlib
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .scene import disparity_to_depth


class ModelLoadError(RuntimeError):
    pass


@dataclass
class Backends:
    # depth(t, gray) -> HxW positive depth
    depth: Callable[[int, np.ndarray], np.ndarray]
    # flow(i, j, gray_i, gray_j) -> HxWx2 displacement from i to j in pixels
    flow: Callable[[int, int, np.ndarray, np.ndarray], np.ndarray]
    # mask(t, gray) -> HxW bool, True on static pixels
    mask: Callable[[int, np.ndarray], np.ndarray]
    # descriptor(t, gray) -> 1-D feature, or None to use the thumbnail fallback
    descriptor: Optional[Callable[[int, np.ndarray], np.ndarray]] = None


def torchscript_backends(weights_dir) -> Backends:
    """Exported TorchScript models in weights_dir: depth.pt (disparity), flow.pt, mask.pt."""
    weights_dir = Path(weights_dir)
    files = {name: weights_dir / f"{name}.pt" for name in ("depth", "flow", "mask")}
    missing = [str(p) for p in files.values() if not p.is_file()]
    if missing:
        raise ModelLoadError("model weights not found: " + ", ".join(missing))
    try:
        import torch
    except ImportError as e:
        raise ModelLoadError(f"torch unavailable: {e}") from e
    try:
        models = {name: torch.jit.load(str(p), map_location="cpu").eval() for name, p in files.items()}
    except Exception as e:  # noqa: BLE001  torch raises a zoo of types here
        raise ModelLoadError(f"cannot load model: {e}") from e

    def as_batch(gray):
        t = torch.from_numpy(np.ascontiguousarray(gray, dtype=np.float32))
        return t[None, None].expand(1, 3, *gray.shape).contiguous()

    @torch.no_grad()
    def depth(_, gray):
        disparity = models["depth"](as_batch(gray)).squeeze().cpu().numpy()
        return disparity_to_depth(disparity)

    @torch.no_grad()
    def flow(_i, _j, a, b):
        f = models["flow"](as_batch(a), as_batch(b)).squeeze(0).cpu().numpy()
        return np.transpose(f, (1, 2, 0))

    @torch.no_grad()
    def mask(_, gray):
        dynamic = models["mask"](as_batch(gray)).squeeze().cpu().numpy()
        return dynamic < 0.5

    return Backends(depth=depth, flow=flow, mask=mask)


def load_backends(spec: str) -> Backends:
    """'torchscript:<dir>' or 'module:function' returning Backends."""
    if spec.startswith("torchscript:"):
        return torchscript_backends(spec.split(":", 1)[1])
    module_name, _, attr = spec.partition(":")
    if not module_name or not attr:
        raise ModelLoadError(f"bad backend spec '{spec}' (want module:function or torchscript:<dir>)")
    try:
        factory = getattr(importlib.import_module(module_name), attr)
        backends = factory()
    except Exception as e:  # noqa: BLE001
        raise ModelLoadError(f"backend '{spec}' failed to load: {e}") from e
    if not isinstance(backends, Backends):
        raise ModelLoadError(f"backend '{spec}' did not return Backends")
    return backends
