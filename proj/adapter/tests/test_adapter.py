import struct

import numpy as np
import pytest
from conftest import run_adapter, run_cli, write_video

import fake_backends
from prior_adapter import (CodecError, SceneError, SceneWriter, disparity_to_depth, extract,
                           fetch_pair_flow, thumbnail_descriptor)
from prior_adapter import raster


def synth_scene(cli, root, frames=12):
    spec = root / "spec.txt"
    spec.write_text(f"frame_count = {frames}\nwidth = 48\nheight = 36\nprior_scale = 1.5\nprior_bias = 0.1\n")
    scene = root / "synth"
    r = run_cli(cli, "synth", scene, "--spec", spec, "--seed", 5)
    assert r.returncode == 0, r.stderr
    return scene


# --- raster container

def test_raster_round_trip_and_layout():
    a = np.arange(2 * 3 * 2, dtype=np.float32).reshape(2, 3, 2) - 4.5
    data = raster.encode(a)
    assert data[:6] == b"GCVDR1"
    assert struct.unpack_from("<III", data, 6) == (3, 2, 2)
    assert len(data) == 18 + a.size * 4
    assert struct.unpack_from("<f", data, 18)[0] == -4.5
    assert np.array_equal(raster.decode(data), a)
    assert raster.decode(raster.encode(np.ones((4, 5)))).shape == (4, 5, 1)


@pytest.mark.parametrize("mutate, message", [
    (lambda d: b"XCVDR1" + d[6:], "bad magic"),
    (lambda d: d[:10], "truncated header"),
    (lambda d: d[:-1], "truncated payload"),
    (lambda d: d + b"\0", "trailing bytes"),
])
def test_raster_errors(mutate, message):
    data = raster.encode(np.zeros((2, 2)))
    with pytest.raises(raster.RasterError, match=message):
        raster.decode(mutate(data))


def test_engine_rasters_reencode_bitwise(gcvd_cli, tmp_path):
    scene = synth_scene(gcvd_cli, tmp_path, frames=3)
    for path in sorted((scene / "priors").glob("*.gcvdr")) + sorted((scene / "frames").glob("*.gcvdr")):
        data = path.read_bytes()
        assert raster.encode(raster.decode(data)) == data, path.name


def test_thumbnail_descriptor_matches_engine(gcvd_cli, tmp_path):
    scene = synth_scene(gcvd_cli, tmp_path, frames=3)
    w = SceneWriter(scene)
    for t in range(3):
        frame = raster.read(w.frame_path(t))[:, :, 0].astype(np.float64)
        engine = raster.read(w.descriptor_path(t)).reshape(-1)
        assert np.max(np.abs(thumbnail_descriptor(frame) - engine)) < 1e-5


def test_thumbnail_descriptor_constant_image():
    d = thumbnail_descriptor(np.full((12, 20), 0.3))
    assert d[0] == 1.0 and np.count_nonzero(d) == 1


def test_disparity_to_depth():
    d = disparity_to_depth(np.array([0.5, 4.0, 1e9, 0.0, -1.0]))
    assert d[0] == 2.0 and d[1] == 0.25
    assert d[2] == 1e-4
    assert np.all(d[3:] == 1e4)


# --- extraction

def test_counting_contract(clip, tmp_path):
    out = extract(clip, tmp_path / "scene", fake_backends.smooth(), long_side=32)
    priors = out / "priors"
    assert len(list((out / "frames").glob("frame_*.gcvdr"))) == 10
    assert len(list(priors.glob("depth_*.gcvdr"))) == 10
    assert len(list(priors.glob("flow_fwd_*.gcvdr"))) == 9
    assert len(list(priors.glob("flow_bwd_*.gcvdr"))) == 9
    assert len(list(priors.glob("mask_*.gcvdr"))) == 10
    assert len(list(priors.glob("desc_*.gcvdr"))) == 10
    assert not (priors / "flow_fwd_000009.gcvdr").exists()
    assert not (priors / "flow_bwd_000000.gcvdr").exists()
    meta = SceneWriter(out).read_meta()
    assert meta["frame_count"] == "10"
    assert (meta["width"], meta["height"]) == ("32", "24")
    assert float(meta["fx"]) == 32.0 and float(meta["cx"]) == 15.5 and float(meta["cy"]) == 11.5


def test_output_passes_engine_validator(gcvd_cli, clip, tmp_path):
    out = extract(clip, tmp_path / "scene", fake_backends.smooth(), long_side=32)
    r = run_cli(gcvd_cli, "validate", out)
    assert r.returncode == 0, r.stdout + r.stderr


def test_depth_clamped_positive(gcvd_cli, clip, tmp_path):
    out = extract(clip, tmp_path / "scene", fake_backends.degenerate_depth(), long_side=32)
    d = raster.read(SceneWriter(out).depth_path(0))
    assert np.all(d == np.float32(1e-4))
    assert run_cli(gcvd_cli, "validate", out).returncode == 0


def test_resize_to_long_side(clip, tmp_path):
    out = extract(clip, tmp_path / "scene", fake_backends.smooth(), long_side=16)
    assert raster.read(SceneWriter(out).frame_path(0)).shape == (12, 16, 1)


def test_refuses_non_empty_output(clip, tmp_path):
    target = tmp_path / "scene"
    target.mkdir()
    (target / "keep").write_text("x")
    with pytest.raises(SceneError, match="not empty"):
        extract(clip, target, fake_backends.smooth(), long_side=32)
    extract(clip, target, fake_backends.smooth(), long_side=32, force=True)
    assert not (target / "keep").exists()


def test_codec_failure(tmp_path):
    bogus = tmp_path / "bogus.avi"
    bogus.write_bytes(b"not a video")
    with pytest.raises(CodecError):
        extract(bogus, tmp_path / "out", fake_backends.smooth())
    r = run_adapter("extract", bogus, tmp_path / "out", "--backend", "fake_backends:smooth")
    assert r.returncode != 0 and "error:" in r.stderr


# --- pair flows

def test_fetch_pair_flow(clip, tmp_path):
    backends = fake_backends.smooth()
    out = extract(clip, tmp_path / "scene", backends, long_side=32)
    w = SceneWriter(out)

    fetch_pair_flow(out, 4, 4, backends)
    assert np.all(raster.read(w.pair_flow_path(4, 4)) == 0.0)

    fetch_pair_flow(out, 2, 3, backends)
    assert np.array_equal(raster.read(w.pair_flow_path(2, 3)), raster.read(w.flow_forward_path(2)))
    assert np.array_equal(raster.read(w.pair_flow_path(3, 2)), raster.read(w.flow_backward_path(3)))

    with pytest.raises(SceneError, match="frame 10"):
        fetch_pair_flow(out, 1, 10, backends)


def test_fetch_pair_flow_cli(clip, tmp_path):
    out = extract(clip, tmp_path / "scene", fake_backends.smooth(), long_side=32)
    ok = run_adapter("fetch-pair-flow", out, 0, 7, "--backend", "fake_backends:smooth")
    assert ok.returncode == 0, ok.stderr
    assert (out / "pairs" / "flow_000000_000007.gcvdr").exists()
    bad = run_adapter("fetch-pair-flow", out, 0, 12, "--backend", "fake_backends:smooth")
    assert bad.returncode != 0 and "frame 12" in bad.stderr


@pytest.mark.parametrize("backend, message", [
    ("torchscript:/nonexistent/weights", "model weights not found"),
    ("fake_backends:broken", "weights corrupt"),
    ("nobackend", "bad backend spec"),
])
def test_model_load_failure_exits_nonzero(clip, tmp_path, backend, message):
    r = run_adapter("extract", clip, tmp_path / "out", "--backend", backend)
    assert r.returncode != 0
    assert message in r.stderr


# --- round trip through the engine

def test_synthetic_clip_reingested_end_to_end(gcvd_cli, tmp_path):
    synth = synth_scene(gcvd_cli, tmp_path)
    sw = SceneWriter(synth)
    n = 12
    frames = [raster.read(sw.frame_path(t))[:, :, 0].astype(np.float64) for t in range(n)]
    video = write_video(tmp_path / "synth.avi", frames)

    from prior_adapter import Backends

    def pair(i, j, a, b):
        if j == i + 1:
            return raster.read(sw.flow_forward_path(i))
        if j == i - 1:
            return raster.read(sw.flow_backward_path(i))
        raise AssertionError("only adjacent flows are extracted")

    oracle = Backends(depth=lambda t, g: raster.read(sw.depth_path(t))[:, :, 0],
                      flow=pair,
                      mask=lambda t, g: raster.read(sw.mask_path(t))[:, :, 0] > 0.5)
    scene = extract(video, tmp_path / "reingested", oracle, long_side=48)
    assert run_cli(gcvd_cli, "validate", scene).returncode == 0

    cfg = tmp_path / "run.cfg"
    cfg.write_text("iterations_sequential = 20\niterations_covisible = 10\niterations_nonkeyframe = 10\n"
                   "keyframe_loss_scale = 2\n")
    run = run_cli(gcvd_cli, "run", scene, "--out", tmp_path / "run", "--config", cfg, "--log-level", "warn")
    assert run.returncode == 0, run.stdout + run.stderr
    lines = [l for l in (tmp_path / "run" / "trajectory.txt").read_text().splitlines()
             if l.strip() and not l.startswith("#")]
    assert len(lines) == n
