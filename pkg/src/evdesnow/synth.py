"""Synthetic snow-occluded data generation.

Covers haze rendering from a depth map, snow-overlay rendering from
foreground events, chroma-key event-stream compositing, foreground
augmentation, and a deterministic flake-scene simulator used as a
ground-truth oracle for the restoration pipeline.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import (
    DimensionMismatch,
    EmptyWindow,
    GeometryMismatch,
    InvalidScene,
    NegativeDepth,
)
from .events import (
    US_PER_S,
    EventStream,
    Homography,
    apply_homography,
    canonicalize,
    flip_horizontal,
    merge,
    scale_time,
    shift_time,
)


@dataclass(frozen=True)
class HazeParams:
    """Atmospheric scattering parameters: light intensity and decay rate."""

    atmospheric_light: float = 0.8  # A, in [0, 1]
    beta: float = 0.05  # scattering per depth unit, >= 0

    def __post_init__(self):
        if not 0.0 <= self.atmospheric_light <= 1.0:
            raise ValueError(f"atmospheric light {self.atmospheric_light} not in [0,1]")
        if self.beta < 0.0:
            raise ValueError(f"beta must be non-negative, got {self.beta}")


def render_haze(clean: np.ndarray, depth: np.ndarray, params: HazeParams) -> np.ndarray:
    """Attenuate a clean image by transmission exp(-beta * depth).

    Output is the pixelwise convex combination
    clean * t + A * (1 - t), which stays inside [0, 1].
    """
    clean = np.asarray(clean, dtype=np.float64)
    depth = np.asarray(depth, dtype=np.float64)
    if clean.shape[:2] != depth.shape:
        raise DimensionMismatch(f"image {clean.shape} vs depth {depth.shape}")
    if (depth < 0).any():
        raise NegativeDepth("depth map has negative entries")
    t = np.exp(-params.beta * depth)
    if clean.ndim == 3:
        t = t[..., None]
    return clean * t + params.atmospheric_light * (1.0 - t)


def rasterize_snow_layer(snow_events: EventStream, window, flake_intensity: float):
    """Paint pixels hit by positive snow events in the window.

    Returns (layer, mask): mask is 1 where a positive-polarity event
    landed, after one 3x3 morphological closing pass that fills thin
    streak interiors; layer is flake_intensity * mask.
    """
    t0, t1 = int(window[0]), int(window[1])
    if t1 <= t0:
        raise EmptyWindow(f"window [{t0}, {t1}) is empty")
    hit = np.zeros((snow_events.height, snow_events.width), dtype=bool)
    sel = (snow_events.t >= t0) & (snow_events.t < t1) & (snow_events.p > 0)
    hit[snow_events.y[sel], snow_events.x[sel]] = True
    if hit.any():
        structure = np.ones((3, 3), dtype=bool)
        dilated = ndimage.binary_dilation(hit, structure=structure, border_value=0)
        hit = ndimage.binary_erosion(dilated, structure=structure, border_value=1)
    mask = hit.astype(np.float64)
    return flake_intensity * mask, mask


def render_snow_image(
    hazy: np.ndarray, layer: np.ndarray, mask: np.ndarray, alpha: float
) -> np.ndarray:
    """Blend an ambient-lit snow layer over a hazy image, clamped to [0,1]."""
    hazy = np.asarray(hazy, dtype=np.float64)
    layer = np.asarray(layer, dtype=np.float64)
    mask = np.asarray(mask, dtype=np.float64)
    if hazy.shape[:2] != layer.shape or layer.shape != mask.shape:
        raise DimensionMismatch(
            f"hazy {hazy.shape}, layer {layer.shape}, mask {mask.shape}"
        )
    overlay = alpha * mask * layer
    if hazy.ndim == 3:
        overlay = overlay[..., None]
    return np.clip(hazy + overlay, 0.0, 1.0)


# ---------------------------------------------------------------------------
# foreground augmentation


@dataclass(frozen=True)
class ScaleTime:
    factor: float

    def to_dict(self):
        return {"type": "scale_time", "factor": self.factor}


@dataclass(frozen=True)
class FlipHorizontal:
    def to_dict(self):
        return {"type": "flip"}


@dataclass(frozen=True)
class HomographyWarp:
    homography: Homography

    def to_dict(self):
        return {"type": "homography", "matrix": self.homography.matrix.tolist()}


@dataclass(frozen=True)
class Stagger:
    """Overlay n copies shifted in time and warped independently."""

    offsets_us: tuple[int, ...]
    homographies: tuple[Homography, ...]

    def __post_init__(self):
        if len(self.offsets_us) != len(self.homographies):
            raise ValueError("stagger offsets and homographies must pair up")
        if any(b <= a for a, b in zip(self.offsets_us, self.offsets_us[1:])):
            raise ValueError("stagger offsets must be strictly increasing")

    def to_dict(self):
        return {
            "type": "stagger",
            "offsets_us": list(self.offsets_us),
            "matrices": [h.matrix.tolist() for h in self.homographies],
        }


def _augmentation_from_dict(data: dict):
    kind = data["type"]
    if kind == "scale_time":
        return ScaleTime(float(data["factor"]))
    if kind == "flip":
        return FlipHorizontal()
    if kind == "homography":
        return HomographyWarp(Homography(np.array(data["matrix"])))
    if kind == "stagger":
        return Stagger(
            tuple(int(v) for v in data["offsets_us"]),
            tuple(Homography(np.array(m)) for m in data["matrices"]),
        )
    raise ValueError(f"unknown augmentation type {kind!r}")


@dataclass(frozen=True)
class CompositeConfig:
    """Knobs for chroma-key compositing and snow rendering."""

    alpha: float = 0.7  # ambient illumination blend
    contrast: float = 0.15  # C, shared with the restoration model
    flake_intensity: float = 0.9  # assumed snow brightness
    overlap_window_us: int = 100  # event-collision window
    augmentations: tuple = ()

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha {self.alpha} not in [0,1]")
        if not 0.0 < self.contrast < 1.0:
            raise ValueError(f"contrast {self.contrast} not in (0,1)")
        if not 0.0 < self.flake_intensity <= 1.0:
            raise ValueError(f"flake intensity {self.flake_intensity} not in (0,1]")
        if self.overlap_window_us <= 0:
            raise ValueError("overlap window must be positive")

    def to_dict(self):
        return {
            "alpha": self.alpha,
            "contrast": self.contrast,
            "flake_intensity": self.flake_intensity,
            "overlap_window_us": self.overlap_window_us,
            "augmentations": [a.to_dict() for a in self.augmentations],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "CompositeConfig":
        return cls(
            alpha=float(data["alpha"]),
            contrast=float(data["contrast"]),
            flake_intensity=float(data["flake_intensity"]),
            overlap_window_us=int(data["overlap_window_us"]),
            augmentations=tuple(
                _augmentation_from_dict(a) for a in data.get("augmentations", [])
            ),
        )


def augment_foreground(snow_events: EventStream, config: CompositeConfig) -> EventStream:
    """Apply the config's ordered augmentation list to foreground events."""
    out = canonicalize(snow_events)
    for aug in config.augmentations:
        if isinstance(aug, ScaleTime):
            out = scale_time(out, aug.factor)
        elif isinstance(aug, FlipHorizontal):
            out = flip_horizontal(out)
        elif isinstance(aug, HomographyWarp):
            out = apply_homography(out, aug.homography)
        elif isinstance(aug, Stagger):
            copies = [
                shift_time(apply_homography(out, h), offset)
                for offset, h in zip(aug.offsets_us, aug.homographies)
            ]
            merged = copies[0]
            for c in copies[1:]:
                merged = merge(merged, c)
            out = merged
        else:
            raise TypeError(f"unknown augmentation {aug!r}")
    return out


def composite_events(
    bg_events: EventStream,
    snow_events: EventStream,
    hazy: np.ndarray,
    config: CompositeConfig,
) -> EventStream:
    """Merge foreground snow events over background events.

    A snow event at (x, y) is admitted iff the hazy background there
    contrasts with the flake: |hazy[y, x] - flake_intensity| > C.
    A background event is admitted iff no admitted snow event shares its
    pixel within overlap_window_us (occlusions win). No event is ever
    fabricated or altered.
    """
    hazy = np.asarray(hazy, dtype=np.float64)
    if (bg_events.width, bg_events.height) != (snow_events.width, snow_events.height):
        raise GeometryMismatch(
            f"background {bg_events.width}x{bg_events.height} vs "
            f"snow {snow_events.width}x{snow_events.height}"
        )
    if hazy.shape[:2] != (bg_events.height, bg_events.width):
        raise GeometryMismatch(
            f"image {hazy.shape} vs events {bg_events.width}x{bg_events.height}"
        )
    lum = hazy if hazy.ndim == 2 else hazy @ np.array([0.299, 0.587, 0.114])

    admit_snow = (
        np.abs(lum[snow_events.y, snow_events.x] - config.flake_intensity)
        > config.contrast
    )
    snow_kept = snow_events.take(admit_snow)

    keep_bg = np.ones(len(bg_events), dtype=bool)
    if len(snow_kept) and len(bg_events):
        w = np.int64(config.overlap_window_us)
        width = bg_events.width
        skey = snow_kept.y.astype(np.int64) * width + snow_kept.x.astype(np.int64)
        st = snow_kept.t.astype(np.int64)
        order = np.lexsort((st, skey))
        skey, st = skey[order], st[order]
        group_keys, group_starts = np.unique(skey, return_index=True)
        group_ends = np.append(group_starts[1:], skey.size)

        bkey = bg_events.y.astype(np.int64) * width + bg_events.x.astype(np.int64)
        bt = bg_events.t.astype(np.int64)
        gi = np.searchsorted(group_keys, bkey)
        has_group = (gi < group_keys.size) & (group_keys[np.minimum(gi, group_keys.size - 1)] == bkey)
        for i in np.nonzero(has_group)[0]:
            lo, hi = group_starts[gi[i]], group_ends[gi[i]]
            times = st[lo:hi]
            pos = np.searchsorted(times, bt[i])
            near = (pos < times.size and times[pos] - bt[i] <= w) or (
                pos > 0 and bt[i] - times[pos - 1] <= w
            )
            if near:
                keep_bg[i] = False
    return merge(snow_kept, bg_events.take(keep_bg))


# ---------------------------------------------------------------------------
# flake scene simulation (ground-truth oracle)


@dataclass(frozen=True)
class Flake:
    """A constant-velocity disc occluder."""

    radius: float  # pixels
    intensity: float  # (0, 1]
    position: tuple[float, float]  # (x, y) at birth
    velocity: tuple[float, float]  # (vx, vy) pixels/second
    birth_us: int = 0
    death_us: int | None = None  # None = outlives the scene

    def center_at(self, t_us: float) -> tuple[float, float]:
        dt = (t_us - self.birth_us) / US_PER_S
        return (
            self.position[0] + self.velocity[0] * dt,
            self.position[1] + self.velocity[1] * dt,
        )

    def alive_at(self, t_us: float) -> bool:
        dead = self.death_us is not None and t_us >= self.death_us
        return t_us >= self.birth_us and not dead


@dataclass(frozen=True)
class FlakeScene:
    """A deterministic scene: a drifting background plus disc flakes."""

    background: np.ndarray  # (H, W) in [0, 1]
    flakes: tuple[Flake, ...] = ()
    background_flow: tuple[float, float] = (0.0, 0.0)  # pixels/second
    duration_us: int = 100_000
    contrast: float = 0.1  # event threshold C
    step_us: int = 1000  # internal sampling period (1 kHz default)

    def __post_init__(self):
        bg = np.asarray(self.background, dtype=np.float64)
        if bg.ndim != 2:
            raise InvalidScene("background must be a 2-D intensity field")
        if bg.min() < 0.0 or bg.max() > 1.0:
            raise InvalidScene("background values must lie in [0, 1]")
        object.__setattr__(self, "background", bg)
        object.__setattr__(self, "flakes", tuple(self.flakes))
        if self.duration_us <= 0:
            raise InvalidScene("scene duration must be positive")
        if not 0.0 < self.contrast < 1.0:
            raise InvalidScene(f"contrast {self.contrast} not in (0,1)")
        if self.step_us <= 0 or self.step_us > self.duration_us:
            raise InvalidScene("step must be positive and at most the duration")
        h, w = bg.shape
        for i, f in enumerate(self.flakes):
            if not 0.0 < f.intensity <= 1.0:
                raise InvalidScene(f"flake {i} intensity {f.intensity} not in (0,1]")
            if f.radius <= 0:
                raise InvalidScene(f"flake {i} radius must be positive")
            x, y = f.position
            if not (0 <= x < w and 0 <= y < h):
                raise InvalidScene(f"flake {i} born out of bounds at {f.position}")
            if f.death_us is not None and f.death_us <= f.birth_us:
                raise InvalidScene(f"flake {i} dies before it is born")

    @property
    def width(self) -> int:
        return self.background.shape[1]

    @property
    def height(self) -> int:
        return self.background.shape[0]


@dataclass
class SimulationResult:
    """Everything the oracle knows about a simulated scene."""

    events: EventStream
    clean_background: np.ndarray  # background at t_ref, no flakes
    observed_frame: np.ndarray  # background at t_ref with flakes painted
    occlusion_masks: np.ndarray  # (n_samples, H, W) bool
    mask_times_us: np.ndarray  # sample times, ascending
    t_ref: int  # final sample time

    @property
    def final_mask(self) -> np.ndarray:
        return self.occlusion_masks[-1].astype(np.float64)

    def mask_at(self, t_us: int) -> np.ndarray:
        i = int(np.argmin(np.abs(self.mask_times_us.astype(np.int64) - int(t_us))))
        return self.occlusion_masks[i].astype(np.float64)


def _background_at(scene: FlakeScene, t_us: float) -> np.ndarray:
    vx, vy = scene.background_flow
    if vx == 0.0 and vy == 0.0:
        return scene.background
    dt = t_us / US_PER_S
    # content translates with the flow; sample source at q - v*t
    return ndimage.shift(
        scene.background, (vy * dt, vx * dt), order=1, mode="nearest", prefilter=False
    )


def _coverage(scene: FlakeScene, t_us: float) -> np.ndarray:
    cover = np.zeros((scene.height, scene.width), dtype=bool)
    for flake in scene.flakes:
        if not flake.alive_at(t_us):
            continue
        cx, cy = flake.center_at(t_us)
        r = flake.radius
        x0 = max(0, int(np.floor(cx - r)))
        x1 = min(scene.width - 1, int(np.ceil(cx + r)))
        y0 = max(0, int(np.floor(cy - r)))
        y1 = min(scene.height - 1, int(np.ceil(cy + r)))
        if x0 > x1 or y0 > y1:
            continue
        ys, xs = np.mgrid[y0 : y1 + 1, x0 : x1 + 1]
        inside = (xs - cx) ** 2 + (ys - cy) ** 2 <= r * r
        cover[y0 : y1 + 1, x0 : x1 + 1] |= inside
    return cover


def _render(scene: FlakeScene, t_us: float) -> tuple[np.ndarray, np.ndarray]:
    frame = _background_at(scene, t_us).copy()
    cover = np.zeros(frame.shape, dtype=bool)
    for flake in scene.flakes:  # later flakes paint on top
        if not flake.alive_at(t_us):
            continue
        cx, cy = flake.center_at(t_us)
        r = flake.radius
        x0 = max(0, int(np.floor(cx - r)))
        x1 = min(scene.width - 1, int(np.ceil(cx + r)))
        y0 = max(0, int(np.floor(cy - r)))
        y1 = min(scene.height - 1, int(np.ceil(cy + r)))
        if x0 > x1 or y0 > y1:
            continue
        ys, xs = np.mgrid[y0 : y1 + 1, x0 : x1 + 1]
        inside = (xs - cx) ** 2 + (ys - cy) ** 2 <= r * r
        patch = frame[y0 : y1 + 1, x0 : x1 + 1]
        patch[inside] = flake.intensity
        cover[y0 : y1 + 1, x0 : x1 + 1] |= inside
    return frame, cover


def simulate_flake_scene(scene: FlakeScene) -> SimulationResult:
    """Run the ideal-sensor simulation.

    The scene is rendered at the internal sampling rate; each pixel
    tracks a reference level and emits floor(|change| / C) events of the
    change's sign whenever the rendered intensity departs from it, then
    moves the reference by the emitted amount. Deterministic.
    """
    n_steps = scene.duration_us // scene.step_us
    if n_steps < 1:
        raise InvalidScene("duration shorter than one simulation step")
    height, width = scene.height, scene.width

    frame0, cover0 = _render(scene, 0.0)
    reference = frame0.copy()
    masks = np.zeros((n_steps + 1, height, width), dtype=bool)
    masks[0] = cover0
    times = np.zeros(n_steps + 1, dtype=np.uint64)

    ts, xs, ys, ps = [], [], [], []
    # guard so |diff|/C landing a float ulp below an integer still counts
    eps = 1e-9
    c = scene.contrast
    for k in range(1, n_steps + 1):
        t = k * scene.step_us
        times[k] = t
        frame, cover = _render(scene, float(t))
        masks[k] = cover
        diff = frame - reference
        counts = np.floor(np.abs(diff) / c + eps).astype(np.int64)
        fire = counts > 0
        if fire.any():
            yy, xx = np.nonzero(fire)
            n = counts[yy, xx]
            sign = np.sign(diff[yy, xx]).astype(np.int8)
            reference[yy, xx] += sign * n * c
            rep = np.repeat(np.arange(yy.size), n)
            ts.append(np.full(rep.size, t, dtype=np.uint64))
            xs.append(xx[rep].astype(np.uint16))
            ys.append(yy[rep].astype(np.uint16))
            ps.append(np.repeat(sign, n))

    if ts:
        events = EventStream(
            width,
            height,
            np.concatenate(ts),
            np.concatenate(xs),
            np.concatenate(ys),
            np.concatenate(ps),
            validate=False,
        )
        events = canonicalize(events)
    else:
        events = EventStream.empty(width, height)

    t_ref = int(n_steps * scene.step_us)
    clean = _background_at(scene, float(t_ref)).copy()
    observed, _ = _render(scene, float(t_ref))
    return SimulationResult(
        events=events,
        clean_background=clean,
        observed_frame=observed,
        occlusion_masks=masks,
        mask_times_us=times,
        t_ref=t_ref,
    )
