"""Command-line surface: compose, restore, simulate, metrics, voxelize.

Exit codes: 0 success, 1 processing error (message on stderr),
2 argument error. All subcommands are deterministic under --seed;
EVDESNOW_THREADS caps frame-level worker parallelism (0 = auto).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import desnow, io, metrics, synth
from .errors import EvdesnowError
from .events import EventStream, Homography, voxelize

DEFAULT_WINDOW_MS = 10.0
DEFAULT_CONTRAST = 0.15
DEFAULT_FLAKE_INTENSITY = 0.9
DEFAULT_ALPHA = 0.7


def worker_count() -> int:
    """Worker cap from EVDESNOW_THREADS; 0 or unset picks automatically."""
    try:
        n = int(os.environ.get("EVDESNOW_THREADS", "0"))
    except ValueError:
        n = 0
    if n <= 0:
        return min(os.cpu_count() or 1, 8)
    return n


def _parse_pair(text: str, name: str) -> tuple[float, float]:
    parts = text.split(",")
    if len(parts) != 2:
        raise argparse.ArgumentTypeError(f"{name} expects 'a,b', got {text!r}")
    return float(parts[0]), float(parts[1])


def _parse_homography(text: str) -> Homography:
    values = [float(v) for v in text.split(",")]
    if len(values) != 8:
        raise argparse.ArgumentTypeError(
            f"--homography expects 8 comma-separated values, got {len(values)}"
        )
    return Homography.from_flat(values)


def _luminance(image: np.ndarray) -> np.ndarray:
    return metrics.to_luminance(image)


# ---------------------------------------------------------------------------
# compose


def _add_compose(subparsers):
    p = subparsers.add_parser(
        "compose", help="composite snow events over a background into a dataset"
    )
    p.add_argument("--background-events", required=True, type=Path)
    p.add_argument("--background-image", required=True, type=Path)
    p.add_argument("--depth", required=True, type=Path)
    p.add_argument("--snow-events", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--alpha", type=float, default=DEFAULT_ALPHA)
    p.add_argument("--atm-light", type=float, default=0.8)
    p.add_argument("--beta", type=float, default=0.05)
    p.add_argument("--contrast", type=float, default=DEFAULT_CONTRAST)
    p.add_argument("--flake-intensity", type=float, default=DEFAULT_FLAKE_INTENSITY)
    p.add_argument("--overlap-us", type=int, default=100)
    p.add_argument("--speed", type=float, default=1.0,
                   help="snowfall speed multiplier (scales timestamps by 1/speed)")
    p.add_argument("--density", type=int, default=1,
                   help="overlay this many staggered, warped copies")
    p.add_argument("--flip", action="store_true", help="mirror snow horizontally")
    p.add_argument("--homography", type=_parse_homography, default=None,
                   metavar="a,b,c,d,e,f,g,h")
    p.add_argument("--window-ms", type=float, default=DEFAULT_WINDOW_MS)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_run_compose)


def _build_augmentations(args, snow: EventStream, rng) -> tuple:
    augmentations = []
    if args.speed != 1.0:
        if args.speed <= 0:
            raise EvdesnowError("--speed must be positive")
        augmentations.append(synth.ScaleTime(1.0 / args.speed))
    if args.density > 1:
        span = int(snow.t.max()) - int(snow.t.min()) + 1 if len(snow) else 1
        offsets, homographies = [], []
        for i in range(args.density):
            offsets.append(i * max(span // args.density, 1))
            if i == 0:
                homographies.append(Homography.identity())
            else:
                dx = float(rng.uniform(-snow.width / 4, snow.width / 4))
                dy = float(rng.uniform(-snow.height / 4, snow.height / 4))
                homographies.append(Homography.translation(dx, dy))
        augmentations.append(synth.Stagger(tuple(offsets), tuple(homographies)))
    if args.flip:
        augmentations.append(synth.FlipHorizontal())
    if args.homography is not None:
        augmentations.append(synth.HomographyWarp(args.homography))
    return tuple(augmentations)


def _run_compose(args) -> int:
    rng = np.random.default_rng(args.seed)
    bg_events = io.read_events(args.background_events)
    snow_events = io.read_events(args.snow_events)
    background = _luminance(io.read_image(args.background_image))
    depth = np.asarray(io.read_image(args.depth), dtype=np.float64)
    if depth.ndim == 3:
        depth = _luminance(depth)

    haze_params = synth.HazeParams(args.atm_light, args.beta)
    hazy = synth.render_haze(background, depth, haze_params)

    config = synth.CompositeConfig(
        alpha=args.alpha,
        contrast=args.contrast,
        flake_intensity=args.flake_intensity,
        overlap_window_us=args.overlap_us,
        augmentations=_build_augmentations(args, snow_events, rng),
    )
    snow_aug = synth.augment_foreground(snow_events, config)
    composite = synth.composite_events(bg_events, snow_aug, hazy, config)

    window_us = int(round(args.window_ms * 1000))
    if window_us <= 0:
        raise EvdesnowError("--window-ms must be positive")
    t_end = 0
    for stream in (composite, snow_aug):
        if len(stream):
            t_end = max(t_end, int(stream.t.max()) + 1)
    n_frames = max(t_end // window_us, 1)

    layout = io.DatasetLayout(args.out)
    layout.create_dirs()

    def build_frame(i: int):
        frame_time = (i + 1) * window_us
        window = (frame_time - window_us, frame_time)
        layer, mask = synth.rasterize_snow_layer(
            snow_aug, window, args.flake_intensity
        )
        snowy = synth.render_snow_image(hazy, layer, mask, args.alpha)
        events = composite.select_window(window)
        return i, snowy, mask, events

    with ThreadPoolExecutor(max_workers=worker_count()) as pool:
        frames = list(pool.map(build_frame, range(n_frames)))
    # write sequentially in frame order so output trees are reproducible
    for i, snowy, mask, events in frames:
        io.write_image(layout.image_path(i), snowy)
        io.write_image(layout.gt_path(i), hazy)
        io.write_image(layout.mask_path(i), mask.astype(np.float32))
        io.write_events(events, layout.events_path(i))

    layout.write_manifest(
        {
            "geometry": {"width": bg_events.width, "height": bg_events.height},
            "frame_count": n_frames,
            "window_us": window_us,
            "seed": args.seed,
            "haze": {
                "atmospheric_light": haze_params.atmospheric_light,
                "beta": haze_params.beta,
            },
            "composite_config": config.to_dict(),
        }
    )
    print(f"wrote {n_frames} frames to {args.out}")
    return 0


# ---------------------------------------------------------------------------
# restore


def _add_restore(subparsers):
    p = subparsers.add_parser("restore", help="de-snow one image from its events")
    p.add_argument("--image", required=True, type=Path)
    p.add_argument("--events", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--contrast", type=float, default=DEFAULT_CONTRAST)
    p.add_argument("--flake-intensity", type=float, default=DEFAULT_FLAKE_INTENSITY)
    p.add_argument("--window-ms", type=float, default=DEFAULT_WINDOW_MS)
    p.add_argument("--vmin", type=float, default=30.0)
    p.add_argument("--vmax", type=float, default=3000.0)
    p.add_argument("--tol", type=float, default=1.5)
    p.add_argument("--min-support", type=int, default=5)
    p.add_argument("--flow", type=lambda s: _parse_pair(s, "--flow"),
                   default=(0.0, 0.0), metavar="vx,vy")
    p.add_argument("--mask-mode", choices=("trail", "instant"), default="trail")
    p.add_argument("--mask-out", type=Path, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_run_restore)


def _run_restore(args) -> int:
    image = _luminance(io.read_image(args.image))
    stream = io.read_events(args.events)
    window_us = int(round(args.window_ms * 1000))
    if window_us <= 0:
        raise EvdesnowError("--window-ms must be positive")
    t_end = int(stream.t.max()) + 1 if len(stream) else window_us
    window = (max(t_end - window_us, 0), t_end)

    model = desnow.ContrastModel(args.contrast, args.flake_intensity)
    prior = desnow.VelocityPrior(
        speed_min=args.vmin, speed_max=args.vmax, spatial_tolerance=args.tol
    )
    restored, mask = desnow.restore_image(
        image,
        stream,
        model,
        prior,
        args.flow,
        window,
        min_support=args.min_support,
        mask_mode=args.mask_mode,
        seed=args.seed,
    )
    io.write_image(args.out, restored)
    if args.mask_out is not None:
        io.write_image(args.mask_out, mask.astype(np.float32))
    print(f"restored {args.image} -> {args.out}")
    return 0


# ---------------------------------------------------------------------------
# simulate

SCENE_SCHEMA_VERSION = 1


def load_scene(path) -> synth.FlakeScene:
    """Parse a versioned scene-description document (JSON)."""
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise EvdesnowError(f"{path}: cannot parse scene document: {exc}") from exc
    if doc.get("version") != SCENE_SCHEMA_VERSION:
        raise EvdesnowError(
            f"{path}: scene schema version {doc.get('version')}, "
            f"expected {SCENE_SCHEMA_VERSION}"
        )
    bg_entry = doc["background"]
    width, height = int(doc["width"]), int(doc["height"])
    kind = bg_entry.get("kind", "uniform")
    if kind == "uniform":
        background = np.full((height, width), float(bg_entry["value"]))
    elif kind == "hgradient":
        row = np.linspace(float(bg_entry["lo"]), float(bg_entry["hi"]), width)
        background = np.tile(row, (height, 1))
    elif kind == "image":
        background = _luminance(io.read_image(Path(path).parent / bg_entry["path"]))
    else:
        raise EvdesnowError(f"{path}: unknown background kind {kind!r}")
    flakes = tuple(
        synth.Flake(
            radius=float(f["radius"]),
            intensity=float(f["intensity"]),
            position=(float(f["position"][0]), float(f["position"][1])),
            velocity=(float(f["velocity"][0]), float(f["velocity"][1])),
            birth_us=int(f.get("birth_us", 0)),
            death_us=None if f.get("death_us") is None else int(f["death_us"]),
        )
        for f in doc.get("flakes", [])
    )
    return synth.FlakeScene(
        background=background,
        flakes=flakes,
        background_flow=tuple(doc.get("background_flow", (0.0, 0.0))),
        duration_us=int(doc["duration_us"]),
        contrast=float(doc.get("contrast", 0.1)),
        step_us=int(doc.get("step_us", 1000)),
    )


def _add_simulate(subparsers):
    p = subparsers.add_parser(
        "simulate", help="run the flake-scene oracle and write its outputs"
    )
    p.add_argument("--scene", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path)
    p.set_defaults(func=_run_simulate)


def _run_simulate(args) -> int:
    scene = load_scene(args.scene)
    result = synth.simulate_flake_scene(scene)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    io.write_events(result.events, out / "events.evs1")
    io.write_image(out / "gt.png", result.clean_background)
    io.write_image(out / "observed.png", result.observed_frame)
    io.write_image(out / "mask.pfm", result.final_mask.astype(np.float32))
    manifest = {
        "scene": json.loads(Path(args.scene).read_text()),
        "t_ref_us": result.t_ref,
        "event_count": len(result.events),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    print(f"simulated {len(result.events)} events to {out}")
    return 0


# ---------------------------------------------------------------------------
# metrics


def _add_metrics(subparsers):
    p = subparsers.add_parser("metrics", help="PSNR/SSIM report for image pairs")
    p.add_argument("--pred", required=True, type=Path)
    p.add_argument("--gt", required=True, type=Path)
    p.add_argument("--masks", type=Path, default=None)
    p.add_argument("--report", type=Path, default=None)
    p.set_defaults(func=_run_metrics)


def _collect_images(path: Path) -> list[Path]:
    if path.is_dir():
        return sorted(path.glob("*.png"))
    return [path]


def _run_metrics(args) -> int:
    preds = _collect_images(args.pred)
    gts = _collect_images(args.gt)
    if len(preds) != len(gts):
        raise EvdesnowError(
            f"{len(preds)} prediction frames vs {len(gts)} ground-truth frames"
        )
    if not preds:
        raise EvdesnowError("no frames to evaluate")
    masks = sorted(args.masks.glob("*.pfm")) if args.masks else [None] * len(preds)
    if args.masks and len(masks) != len(preds):
        raise EvdesnowError(f"{len(masks)} masks vs {len(preds)} frames")

    def evaluate(item):
        i, (pred_path, gt_path, mask_path) = item
        pred = _luminance(io.read_image(pred_path))
        gt = _luminance(io.read_image(gt_path))
        occ = None
        if mask_path is not None:
            occ = metrics.occlusion_fraction(io.read_image(mask_path))
        return i, metrics.psnr(pred, gt), metrics.ssim(pred, gt), occ

    with ThreadPoolExecutor(max_workers=worker_count()) as pool:
        rows = list(pool.map(evaluate, enumerate(zip(preds, gts, masks))))
    report = metrics.MetricReport()
    for i, psnr_db, ssim_value, occ in rows:
        report.add(i, psnr_db, ssim_value, occ)
    print(report.to_text())
    if args.report is not None:
        args.report.write_text(report.to_json() + "\n")
    return 0


# ---------------------------------------------------------------------------
# voxelize


def _add_voxelize(subparsers):
    p = subparsers.add_parser("voxelize", help="bin an event file into a PFM stack")
    p.add_argument("--events", required=True, type=Path)
    p.add_argument("--bins", required=True, type=int)
    p.add_argument("--window-ms", type=float, default=DEFAULT_WINDOW_MS)
    p.add_argument("--out", required=True, type=Path)
    p.set_defaults(func=_run_voxelize)


def _run_voxelize(args) -> int:
    stream = io.read_events(args.events)
    window_us = int(round(args.window_ms * 1000))
    if window_us <= 0:
        raise EvdesnowError("--window-ms must be positive")
    t_end = int(stream.t.max()) + 1 if len(stream) else window_us
    grid = voxelize(stream, args.bins, (max(t_end - window_us, 0), t_end))
    # bins stacked vertically: output is (bins * height, width)
    stacked = grid.data.reshape(-1, stream.width).astype(np.float32)
    io.write_pfm(args.out, stacked)
    print(f"wrote {args.bins}-bin voxel stack to {args.out}")
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="evdesnow",
        description="Event-camera snow occlusion removal and dataset synthesis",
    )
    subparsers = parser.add_subparsers(dest="command", required=True)
    _add_compose(subparsers)
    _add_restore(subparsers)
    _add_simulate(subparsers)
    _add_metrics(subparsers)
    _add_voxelize(subparsers)
    return parser


def cli(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse exits 2 on bad arguments
        return int(exc.code or 0)
    try:
        return args.func(args)
    except EvdesnowError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(cli(sys.argv[1:]))


if __name__ == "__main__":
    main()
