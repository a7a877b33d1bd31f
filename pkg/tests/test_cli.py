"""Command-line surface tests: every subcommand plus determinism."""

import hashlib
import json

import numpy as np
import pytest

from evdesnow import io as evio
from evdesnow import synth
from evdesnow.cli import cli, load_scene, worker_count
from evdesnow.events import EventStream
from evdesnow.metrics import occlusion_fraction

from test_events import random_stream


def tree_digest(root):
    """Stable digest over relative paths and file bytes."""
    h = hashlib.sha256()
    for path in sorted(p for p in root.rglob("*") if p.is_file()):
        h.update(str(path.relative_to(root)).encode())
        h.update(path.read_bytes())
    return h.hexdigest()


def write_scene(path, *, width=48, height=48, flakes=None, duration_us=80_000,
                contrast=0.1, background=None):
    doc = {
        "version": 1,
        "width": width,
        "height": height,
        "background": background or {"kind": "uniform", "value": 0.35},
        "background_flow": [0.0, 0.0],
        "duration_us": duration_us,
        "contrast": contrast,
        "step_us": 1000,
        "flakes": flakes
        or [
            {
                "radius": 2.0,
                "intensity": 0.9,
                "position": [8.0, 24.0],
                "velocity": [350.0, 60.0],
                "birth_us": 1000,
            }
        ],
    }
    path.write_text(json.dumps(doc, indent=2))
    return doc


@pytest.fixture
def compose_inputs(tmp_path):
    """Background image/depth/events plus simulated snow events on disk."""
    rng = np.random.default_rng(0)
    width = height = 48
    background = np.tile(np.linspace(0.2, 0.5, width), (height, 1))
    depth = rng.random((height, width)).astype(np.float32) * 5.0

    bg_events = random_stream(rng, width=width, height=height, n=150, t_max=80_000)
    scene = synth.FlakeScene(
        background=background,
        flakes=(
            synth.Flake(2.0, 0.9, (6.0, 12.0), (400.0, 100.0), birth_us=1000),
            synth.Flake(1.5, 0.9, (40.0, 36.0), (-300.0, -80.0), birth_us=1000),
        ),
        duration_us=80_000,
        contrast=0.1,
    )
    snow_events = synth.simulate_flake_scene(scene).events

    paths = {
        "background_image": tmp_path / "bg.png",
        "depth": tmp_path / "depth.pfm",
        "background_events": tmp_path / "bg.evs1",
        "snow_events": tmp_path / "snow.evs1",
    }
    evio.write_image(paths["background_image"], background)
    evio.write_pfm(paths["depth"], depth)
    evio.write_events(bg_events, paths["background_events"])
    evio.write_events(snow_events, paths["snow_events"])
    return paths


def compose_args(paths, out, seed=7, extra=()):
    return [
        "compose",
        "--background-events", str(paths["background_events"]),
        "--background-image", str(paths["background_image"]),
        "--depth", str(paths["depth"]),
        "--snow-events", str(paths["snow_events"]),
        "--out", str(out),
        "--window-ms", "20",
        "--contrast", "0.1",
        "--seed", str(seed),
        *extra,
    ]


class TestCompose:
    def test_emits_complete_dataset(self, tmp_path, compose_inputs):
        out = tmp_path / "ds"
        assert cli(compose_args(compose_inputs, out)) == 0
        layout = evio.DatasetLayout(out)
        indices = layout.frame_indices()
        assert len(indices) == 4  # 80 ms of events / 20 ms windows
        layout.check_complete()
        for i in indices:
            assert layout.mask_path(i).exists()
        manifest = layout.read_manifest()
        assert manifest["geometry"] == {"width": 48, "height": 48}
        assert manifest["frame_count"] == 4
        assert manifest["window_us"] == 20_000

    def test_deterministic_under_seed(self, tmp_path, compose_inputs):
        out1 = tmp_path / "ds1"
        out2 = tmp_path / "ds2"
        extra = ["--density", "3", "--flip", "--speed", "1.5"]
        assert cli(compose_args(compose_inputs, out1, extra=extra)) == 0
        assert cli(compose_args(compose_inputs, out2, extra=extra)) == 0
        assert tree_digest(out1) == tree_digest(out2)

    def test_manifest_reconstructs_composite_config(self, tmp_path, compose_inputs):
        out = tmp_path / "ds"
        extra = ["--density", "2", "--flip", "--homography",
                 "1,0,2,0,1,-1,0,0", "--speed", "2"]
        assert cli(compose_args(compose_inputs, out, extra=extra)) == 0
        manifest = evio.DatasetLayout(out).read_manifest()
        config = synth.CompositeConfig.from_dict(manifest["composite_config"])
        assert isinstance(config.augmentations[0], synth.ScaleTime)
        assert isinstance(config.augmentations[1], synth.Stagger)
        assert isinstance(config.augmentations[2], synth.FlipHorizontal)
        assert isinstance(config.augmentations[3], synth.HomographyWarp)
        assert config.to_dict() == manifest["composite_config"]

    def test_gt_frames_are_snow_free_haze(self, tmp_path, compose_inputs):
        out = tmp_path / "ds"
        assert cli(compose_args(compose_inputs, out)) == 0
        layout = evio.DatasetLayout(out)
        gt0 = evio.read_image(layout.gt_path(0))
        gt1 = evio.read_image(layout.gt_path(1))
        assert np.array_equal(gt0, gt1)  # static background, same haze


class TestRestoreCli:
    def test_zero_event_stream_identity(self, tmp_path):
        rng = np.random.default_rng(1)
        image = rng.random((32, 32))
        image_path = tmp_path / "in.png"
        events_path = tmp_path / "e.evs1"
        out_path = tmp_path / "out.png"
        evio.write_image(image_path, image)
        evio.write_events(EventStream.empty(32, 32), events_path)
        code = cli([
            "restore", "--image", str(image_path), "--events", str(events_path),
            "--out", str(out_path),
        ])
        assert code == 0
        assert np.array_equal(evio.read_image(out_path), evio.read_image(image_path))

    def test_restores_simulated_scene(self, tmp_path):
        scene_path = tmp_path / "scene.json"
        write_scene(scene_path)
        sim_out = tmp_path / "sim"
        assert cli(["simulate", "--scene", str(scene_path), "--out", str(sim_out)]) == 0

        out_path = tmp_path / "restored.png"
        mask_path = tmp_path / "mask.pfm"
        code = cli([
            "restore",
            "--image", str(sim_out / "observed.png"),
            "--events", str(sim_out / "events.evs1"),
            "--out", str(out_path),
            "--contrast", "0.1",
            "--flake-intensity", "0.9",
            "--window-ms", "80",
            "--tol", "3.0",
            "--mask-mode", "instant",
            "--mask-out", str(mask_path),
        ])
        assert code == 0
        gt = evio.read_image(sim_out / "gt.png")
        observed = evio.read_image(sim_out / "observed.png")
        restored = evio.read_image(out_path)
        err_before = np.abs(observed - gt).sum()
        err_after = np.abs(restored - gt).sum()
        assert err_after < err_before
        assert evio.read_image(mask_path).max() <= 1.0

    def test_deterministic_under_seed(self, tmp_path):
        scene_path = tmp_path / "scene.json"
        write_scene(scene_path)
        sim_out = tmp_path / "sim"
        assert cli(["simulate", "--scene", str(scene_path), "--out", str(sim_out)]) == 0
        outputs = []
        for name in ("a.png", "b.png"):
            out_path = tmp_path / name
            code = cli([
                "restore",
                "--image", str(sim_out / "observed.png"),
                "--events", str(sim_out / "events.evs1"),
                "--out", str(out_path),
                "--window-ms", "80", "--tol", "3.0", "--seed", "11",
            ])
            assert code == 0
            outputs.append(out_path.read_bytes())
        assert outputs[0] == outputs[1]


class TestSimulateCli:
    def test_outputs_and_manifest(self, tmp_path):
        scene_path = tmp_path / "scene.json"
        doc = write_scene(scene_path)
        out = tmp_path / "sim"
        assert cli(["simulate", "--scene", str(scene_path), "--out", str(out)]) == 0
        for name in ("events.evs1", "gt.png", "observed.png", "mask.pfm"):
            assert (out / name).exists()
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["scene"] == doc
        assert manifest["t_ref_us"] == doc["duration_us"]
        events = evio.read_events(out / "events.evs1")
        assert manifest["event_count"] == len(events)

    def test_scene_schema_version_checked(self, tmp_path):
        scene_path = tmp_path / "scene.json"
        doc = write_scene(scene_path)
        doc["version"] = 99
        scene_path.write_text(json.dumps(doc))
        assert cli(["simulate", "--scene", str(scene_path), "--out",
                    str(tmp_path / "x")]) == 1

    def test_load_scene_background_kinds(self, tmp_path):
        scene_path = tmp_path / "scene.json"
        write_scene(scene_path, background={"kind": "hgradient", "lo": 0.2, "hi": 0.6})
        scene = load_scene(scene_path)
        assert scene.background[0, 0] == pytest.approx(0.2)
        assert scene.background[0, -1] == pytest.approx(0.6)


class TestMetricsCli:
    def test_identical_directories_perfect_scores(self, tmp_path, capsys):
        rng = np.random.default_rng(2)
        pred = tmp_path / "pred"
        gt = tmp_path / "gt"
        masks = tmp_path / "masks"
        for d in (pred, gt, masks):
            d.mkdir()
        for i in range(3):
            img = rng.random((24, 24))
            evio.write_image(pred / f"frame_{i:06d}.png", img)
            evio.write_image(gt / f"frame_{i:06d}.png", img)
            mask = (rng.random((24, 24)) < 0.15).astype(np.float32)
            evio.write_image(masks / f"frame_{i:06d}.pfm", mask)
        report_path = tmp_path / "report.json"
        code = cli([
            "metrics", "--pred", str(pred), "--gt", str(gt),
            "--masks", str(masks), "--report", str(report_path),
        ])
        assert code == 0
        out = capsys.readouterr().out
        assert "mean_psnr_db: 100.0000" in out
        report = json.loads(report_path.read_text())
        assert all(f["psnr_db"] == 100.0 for f in report["frames"])
        assert all(f["ssim"] == 1.0 for f in report["frames"])
        mask0 = evio.read_image(masks / "frame_000000.pfm")
        assert report["frames"][0]["occlusion_fraction"] == occlusion_fraction(mask0)

    def test_count_mismatch_is_processing_error(self, tmp_path, capsys):
        pred = tmp_path / "pred"
        gt = tmp_path / "gt"
        pred.mkdir(), gt.mkdir()
        evio.write_image(pred / "frame_000000.png", np.zeros((16, 16)))
        assert cli(["metrics", "--pred", str(pred), "--gt", str(gt)]) == 1
        assert "error:" in capsys.readouterr().err


class TestVoxelizeCli:
    def test_pfm_stack_shape_and_mass(self, tmp_path):
        rng = np.random.default_rng(3)
        s = random_stream(rng, width=32, height=24, n=400, t_max=9_999)
        events_path = tmp_path / "e.evs1"
        out_path = tmp_path / "v.pfm"
        evio.write_events(s, events_path)
        code = cli([
            "voxelize", "--events", str(events_path), "--bins", "5",
            "--window-ms", "10", "--out", str(out_path),
        ])
        assert code == 0
        stack = evio.read_pfm(out_path)
        assert stack.shape == (5 * 24, 32)
        assert float(stack.sum()) == pytest.approx(float(s.p.sum()), abs=1e-3)


class TestCliPlumbing:
    def test_bad_arguments_exit_2(self):
        assert cli(["restore", "--image"]) == 2
        assert cli(["unknown-command"]) == 2
        assert cli(["compose"]) == 2

    def test_missing_file_exit_1(self, tmp_path, capsys):
        code = cli([
            "voxelize", "--events", str(tmp_path / "nope.evs1"),
            "--bins", "2", "--out", str(tmp_path / "v.pfm"),
        ])
        assert code == 1
        assert "error:" in capsys.readouterr().err

    def test_worker_count_env(self, monkeypatch):
        monkeypatch.setenv("EVDESNOW_THREADS", "3")
        assert worker_count() == 3
        monkeypatch.setenv("EVDESNOW_THREADS", "0")
        assert worker_count() >= 1
        monkeypatch.setenv("EVDESNOW_THREADS", "junk")
        assert worker_count() >= 1
        monkeypatch.delenv("EVDESNOW_THREADS")
        assert worker_count() >= 1
