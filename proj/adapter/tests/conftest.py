import os
import shutil
import subprocess
import sys
from pathlib import Path

import cv2
import numpy as np
import pytest

HERE = Path(__file__).parent
sys.path.insert(0, str(HERE.parent))
sys.path.insert(0, str(HERE))


@pytest.fixture
def gcvd_cli():
    cli = os.environ.get("GCVD_CLI") or shutil.which("gcvd")
    if not cli:
        pytest.skip("engine CLI not available (set GCVD_CLI)")
    return cli


def run_cli(*args):
    return subprocess.run(list(map(str, args)), capture_output=True, text=True)


def run_adapter(*args):
    env = dict(os.environ)
    env["PYTHONPATH"] = os.pathsep.join([str(HERE.parent), str(HERE), env.get("PYTHONPATH", "")])
    return subprocess.run([sys.executable, "-m", "prior_adapter", *map(str, args)],
                          capture_output=True, text=True, env=env)


def write_video(path, frames, fps=10.0):
    h, w = frames[0].shape
    vw = cv2.VideoWriter(str(path), cv2.VideoWriter_fourcc(*"FFV1"), fps, (w, h), False)
    assert vw.isOpened()
    for f in frames:
        vw.write(np.clip(np.rint(f * 255.0), 0, 255).astype(np.uint8))
    vw.release()
    return path


@pytest.fixture
def clip(tmp_path):
    rng = np.random.default_rng(3)
    base = rng.random((24, 32))
    frames = [np.roll(base, t, axis=1) for t in range(10)]
    return write_video(tmp_path / "clip.avi", frames)
