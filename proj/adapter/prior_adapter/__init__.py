from .extract import CodecError, SceneError, decode_video, extract, fetch_pair_flow
from .models import Backends, ModelLoadError, load_backends
from .scene import Intrinsics, SceneWriter, disparity_to_depth, thumbnail_descriptor

__all__ = [
    "Backends",
    "CodecError",
    "Intrinsics",
    "ModelLoadError",
    "SceneError",
    "SceneWriter",
    "decode_video",
    "disparity_to_depth",
    "extract",
    "fetch_pair_flow",
    "load_backends",
    "thumbnail_descriptor",
]
