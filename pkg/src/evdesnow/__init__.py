"""Event-camera snow occlusion removal and synthetic snow dataset generation."""

from . import errors
from .desnow import (
    ContrastModel,
    Streak,
    VelocityPrior,
    accumulate_polarity,
    build_occlusion_mask,
    detect_streaks,
    estimate_background_motion,
    estimate_background_static,
    fuse,
    restore_image,
    streak_trail_mask,
    warp_events,
)
from .events import (
    Event,
    EventStream,
    Homography,
    VoxelGrid,
    apply_homography,
    canonicalize,
    flip_horizontal,
    merge,
    scale_time,
    shift_time,
    voxelize,
)
from .io import (
    DatasetLayout,
    read_events,
    read_image,
    read_pfm,
    write_events,
    write_image,
    write_pfm,
)
from .metrics import MetricReport, occlusion_fraction, psnr, ssim, to_luminance
from .synth import (
    CompositeConfig,
    Flake,
    FlakeScene,
    FlipHorizontal,
    HazeParams,
    HomographyWarp,
    ScaleTime,
    SimulationResult,
    Stagger,
    augment_foreground,
    composite_events,
    rasterize_snow_layer,
    render_haze,
    render_snow_image,
    simulate_flake_scene,
)

__version__ = "0.1.0"
