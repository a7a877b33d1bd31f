"""Build a synthetic snow-occluded dataset by chroma-key compositing.

The generation pipeline takes a clean background (image + its events
and a depth map) plus independently recorded snow events, then:

  1. renders haze from the depth map with the scattering model
     I_haze = J * t + A * (1 - t),  t = exp(-beta * depth);
  2. augments the snow foreground (speed, density, direction);
  3. rasterizes snow events into an overlay and blends it with an
     ambient-illumination weight alpha;
  4. merges the event streams with two rules: snow events need contrast
     against the hazy background, and background events yield to
     overlapping snow events.

    python3 demos/03_haze_and_chroma_compositing.py
"""

from pathlib import Path

import numpy as np

import evdesnow as evd

OUT = Path(__file__).parent / "output"
OUT.mkdir(exist_ok=True)

size = 128
rng = np.random.default_rng(7)

# --- background: image, depth, events ---------------------------------------
background = np.clip(
    np.tile(np.linspace(0.15, 0.5, size), (size, 1))
    + np.linspace(0, 0.15, size)[:, None],
    0.0,
    1.0,
)
depth = np.tile(np.linspace(1.0, 8.0, size), (size, 1))  # far right = deep
# sparse sensor noise stands in for real background activity
n_bg = 400
bg_events = evd.canonicalize(
    evd.EventStream(
        size, size,
        rng.integers(0, 80_000, n_bg).astype(np.uint64),
        rng.integers(0, size, n_bg),
        rng.integers(0, size, n_bg),
        rng.choice([-1, 1], n_bg),
    )
)

hazy = evd.render_haze(background, depth, evd.HazeParams(atmospheric_light=0.75, beta=0.12))
print(f"haze rendered: background mean {background.mean():.3f} -> {hazy.mean():.3f}")

# --- snow foreground: simulate a recording, then augment --------------------
flakes = tuple(
    evd.Flake(
        radius=2.5,
        intensity=0.9,
        position=(float(rng.uniform(15, size - 15)), float(rng.uniform(15, size - 15))),
        velocity=(float(rng.uniform(-150, 150)), float(rng.uniform(200, 450))),
        birth_us=1000,
    )
    for _ in range(4)
)
snow_scene = evd.FlakeScene(
    background=np.zeros((size, size)),  # black screen, chroma-key style
    flakes=flakes,
    duration_us=80_000,
    contrast=0.15,
)
snow_events = evd.simulate_flake_scene(snow_scene).events
print(f"foreground recording: {len(snow_events)} snow events")

config = evd.CompositeConfig(
    alpha=0.7,
    contrast=0.15,
    flake_intensity=0.9,
    overlap_window_us=100,
    augmentations=(
        evd.ScaleTime(0.8),  # 25% faster snowfall
        evd.Stagger(         # double the density with a shifted warped copy
            offsets_us=(0, 40_000),
            homographies=(evd.Homography.identity(), evd.Homography.translation(31, 17)),
        ),
        evd.FlipHorizontal(),
    ),
)
snow_aug = evd.augment_foreground(snow_events, config)
print(f"after augmentation: {len(snow_aug)} snow events")

# --- composite image and events ----------------------------------------------
window = (0, 64_001)
layer, mask = evd.rasterize_snow_layer(snow_aug, window, config.flake_intensity)
snowy = evd.render_snow_image(hazy, layer, mask, config.alpha)
composite = evd.composite_events(bg_events, snow_aug, hazy, config)

bg_pool = {tuple(e) for e in bg_events}
from_background = sum(1 for e in composite if tuple(e) in bg_pool)
print(f"composite stream: {len(composite)} events "
      f"(background contributed {from_background})")
print(f"occlusion fraction of the frame: {evd.occlusion_fraction(mask):.1%}")

evd.write_image(OUT / "hazy.png", hazy)
evd.write_image(OUT / "snowy.png", snowy)
evd.write_image(OUT / "snow_mask.pfm", mask.astype(np.float32))
evd.write_events(composite, OUT / "composite.evs1")
print(f"composite written to {OUT}/")

# The `evdesnow compose` subcommand packages this pipeline: it slices
# frames into a dataset directory (images/, events/, gt/, masks/) with a
# manifest recording the exact CompositeConfig.
