"""Model-based background recovery under snow occlusion.

Moving flakes trace constant-velocity streaks in the x-y-t event
volume. Detected streaks tell (a) which pixels are occluded and when,
and (b) which events carry the occlusion contrast. Background intensity
follows from the event-count x contrast-threshold relation: a flake of
intensity I_r covering background I_b fires (I_r - I_b) / C signed
events, so I_b = I_r - C * sum(p).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, EmptyWindow, OutOfBounds
from .events import US_PER_S, EventStream, canonicalize


@dataclass(frozen=True)
class ContrastModel:
    """Sensor threshold C and assumed flake intensity I_r."""

    contrast: float = 0.15
    flake_intensity: float = 0.9

    def __post_init__(self):
        if not 0.0 < self.contrast < 1.0:
            raise ValueError(f"contrast {self.contrast} not in (0,1)")
        if not 0.0 < self.flake_intensity <= 1.0:
            raise ValueError(f"flake intensity {self.flake_intensity} not in (0,1]")


@dataclass(frozen=True)
class VelocityPrior:
    """Admissible flake motion: speed band, direction cone, line tolerance."""

    speed_min: float = 30.0  # pixels/second
    speed_max: float = 3000.0
    direction: tuple[float, float] = (0.0, 1.0)  # cone axis (unit-normalized)
    half_angle: float = np.pi  # radians; pi = any direction
    spatial_tolerance: float = 1.5  # pixels

    def __post_init__(self):
        if not 0.0 <= self.speed_min < self.speed_max:
            raise ValueError("need 0 <= speed_min < speed_max")
        if not 0.0 < self.half_angle <= np.pi:
            raise ValueError("half angle must lie in (0, pi]")
        if self.spatial_tolerance <= 0:
            raise ValueError("spatial tolerance must be positive")
        norm = float(np.hypot(*self.direction))
        if norm == 0.0:
            raise ValueError("direction axis must be a nonzero vector")
        object.__setattr__(
            self, "direction", (self.direction[0] / norm, self.direction[1] / norm)
        )

    def admits(self, vx: float, vy: float) -> bool:
        speed = float(np.hypot(vx, vy))
        if not self.speed_min <= speed <= self.speed_max:
            return False
        if self.half_angle >= np.pi:
            return True
        cos_angle = (vx * self.direction[0] + vy * self.direction[1]) / speed
        return cos_angle >= np.cos(self.half_angle) - 1e-12


@dataclass(frozen=True)
class Streak:
    """A constant-velocity track through the event volume."""

    velocity: tuple[float, float]  # (vx, vy) pixels/second
    anchor: tuple[float, float, float]  # (x0, y0, t0_us)
    span: tuple[int, int]  # [t_start, t_end] microseconds
    support: np.ndarray  # indices of member events
    tolerance: float  # line-fit tolerance the support satisfies

    def position_at(self, t_us: float) -> tuple[float, float]:
        x0, y0, t0 = self.anchor
        dt = (float(t_us) - t0) / US_PER_S
        return (x0 + self.velocity[0] * dt, y0 + self.velocity[1] * dt)

    @property
    def speed(self) -> float:
        return float(np.hypot(*self.velocity))


def accumulate_polarity(stream: EventStream, pixel, window) -> float:
    """Signed polarity sum at one pixel over [t0, t1)."""
    x, y = int(pixel[0]), int(pixel[1])
    if not (0 <= x < stream.width and 0 <= y < stream.height):
        raise OutOfBounds(f"pixel ({x}, {y}) outside {stream.width}x{stream.height}")
    t0, t1 = int(window[0]), int(window[1])
    sel = (stream.x == x) & (stream.y == y) & (stream.t >= t0) & (stream.t < t1)
    return float(stream.p[sel].sum())


def estimate_background_static(model: ContrastModel, polarity_sum: float) -> float:
    """Invert the accumulated contrast: I_b = clamp(I_r - C * E, 0, 1)."""
    value = model.flake_intensity - model.contrast * polarity_sum
    return float(np.clip(value, 0.0, 1.0))


def warp_events(stream: EventStream, velocity, t_ref: int) -> EventStream:
    """Shift each event to its velocity-projected position at t_ref.

    Positions are rounded half-up; events leaving the sensor are
    dropped; timestamps stay untouched.
    """
    if not len(stream):
        return canonicalize(stream)
    vx, vy = float(velocity[0]), float(velocity[1])
    dt_s = (float(t_ref) - stream.t.astype(np.float64)) / US_PER_S
    xw = np.floor(stream.x.astype(np.float64) + vx * dt_s + 0.5)
    yw = np.floor(stream.y.astype(np.float64) + vy * dt_s + 0.5)
    keep = (xw >= 0) & (xw < stream.width) & (yw >= 0) & (yw < stream.height)
    out = EventStream(
        stream.width,
        stream.height,
        stream.t[keep],
        xw[keep].astype(np.uint16),
        yw[keep].astype(np.uint16),
        stream.p[keep],
        validate=False,
    )
    return canonicalize(out)


# ---------------------------------------------------------------------------
# streak detection


def _fit_line(t_s, x, y):
    """Least-squares constant-velocity fit; returns (vx, vy, anchor) or None."""
    t_mean = t_s.mean()
    dt = t_s - t_mean
    var = float(dt @ dt)
    if var <= 1e-12:
        return None
    vx = float(dt @ (x - x.mean())) / var
    vy = float(dt @ (y - y.mean())) / var
    return vx, vy, (float(x.mean()), float(y.mean()), t_mean)


def _line_distances(t_s, x, y, vx, vy, anchor):
    x0, y0, t0 = anchor
    dx = x - (x0 + vx * (t_s - t0))
    dy = y - (y0 + vy * (t_s - t0))
    return np.hypot(dx, dy)


def detect_streaks(
    stream: EventStream,
    prior: VelocityPrior,
    min_support: int = 5,
    *,
    seed: int = 0,
    hypotheses_per_round: int = 64,
    max_failed_rounds: int = 4,
) -> list[Streak]:
    """Greedy seeded RANSAC over the x-y-t volume.

    Each round samples event pairs whose implied velocity the prior
    admits, keeps the hypothesis with the most inliers within the
    spatial tolerance, refines it by least squares, and removes its
    support. Events are assigned to at most one streak. Deterministic
    for a fixed seed.
    """
    if min_support < 2:
        raise ValueError(f"min_support must be at least 2, got {min_support}")
    streaks: list[Streak] = []
    if len(stream) < min_support:
        return streaks

    rng = np.random.default_rng(seed)
    t_s = stream.t.astype(np.float64) / US_PER_S  # seconds for conditioning
    x = stream.x.astype(np.float64)
    y = stream.y.astype(np.float64)
    tol = prior.spatial_tolerance
    min_dt_s = 1e-6

    remaining = np.arange(len(stream))
    failed = 0
    while remaining.size >= min_support and failed < max_failed_rounds:
        rt, rx, ry = t_s[remaining], x[remaining], y[remaining]
        best_count = 0
        best_velocity = None
        for _ in range(hypotheses_per_round):
            i = int(rng.integers(remaining.size))
            dt = rt - rt[i]
            dist = np.hypot(rx - rx[i], ry - ry[i])
            with np.errstate(divide="ignore", invalid="ignore"):
                speed = dist / np.abs(dt)
            candidates = np.nonzero(
                (np.abs(dt) >= min_dt_s)
                & (speed >= prior.speed_min)
                & (speed <= prior.speed_max)
            )[0]
            if candidates.size == 0:
                continue
            j = int(candidates[rng.integers(candidates.size)])
            vx = (rx[j] - rx[i]) / (rt[j] - rt[i])
            vy = (ry[j] - ry[i]) / (rt[j] - rt[i])
            if not prior.admits(vx, vy):
                continue
            d = _line_distances(rt, rx, ry, vx, vy, (rx[i], ry[i], rt[i]))
            count = int((d <= tol).sum())
            if count > best_count:
                best_count = count
                best_velocity = (vx, vy, (rx[i], ry[i], rt[i]))

        accepted = False
        if best_count >= min_support and best_velocity is not None:
            vx, vy, anchor = best_velocity
            inliers = _line_distances(rt, rx, ry, vx, vy, anchor) <= tol
            # refine: refit on inliers, recollect, refit again
            for _ in range(2):
                fit = _fit_line(rt[inliers], rx[inliers], ry[inliers])
                if fit is None:
                    break
                vx, vy, anchor = fit
                inliers = _line_distances(rt, rx, ry, vx, vy, anchor) <= tol
                if int(inliers.sum()) < 2:
                    break
            if (
                int(inliers.sum()) >= min_support
                and prior.admits(vx, vy)
                and _fit_line(rt[inliers], rx[inliers], ry[inliers]) is not None
            ):
                support = remaining[inliers]
                streaks.append(_make_streak(stream, support, (vx, vy), anchor, tol))
                remaining = remaining[~inliers]
                failed = 0
                accepted = True
        if not accepted:
            failed += 1
    return _merge_split_streaks(streaks, t_s, x, y, prior, min_support)


def _make_streak(stream, support, velocity, anchor_s, tol) -> Streak:
    t_support = stream.t[support]
    return Streak(
        velocity=(float(velocity[0]), float(velocity[1])),
        anchor=(anchor_s[0], anchor_s[1], anchor_s[2] * US_PER_S),
        span=(int(t_support.min()), int(t_support.max())),
        support=np.sort(support),
        tolerance=tol,
    )


def _merge_split_streaks(streaks, t_s, x, y, prior, min_support):
    """Fuse detections that split one physical track into parallel parts.

    Two streaks merge when their velocities agree and their lines pass
    close to each other mid-span, provided a joint refit keeps nearly
    all member events within tolerance.
    """
    merged = True
    while merged and len(streaks) > 1:
        merged = False
        for i in range(len(streaks)):
            for j in range(i + 1, len(streaks)):
                a, b = streaks[i], streaks[j]
                dv = np.hypot(
                    a.velocity[0] - b.velocity[0], a.velocity[1] - b.velocity[1]
                )
                if dv > max(0.2 * max(a.speed, b.speed), 30.0):
                    continue
                t_mid = 0.5 * (
                    max(a.span[0], b.span[0]) + min(a.span[1], b.span[1])
                )
                pa = a.position_at(t_mid)
                pb = b.position_at(t_mid)
                gap = np.hypot(pa[0] - pb[0], pa[1] - pb[1])
                if gap > 2.0 * a.tolerance + 2.0:
                    continue
                union = np.concatenate([a.support, b.support])
                fit = _fit_line(t_s[union], x[union], y[union])
                if fit is None:
                    continue
                vx, vy, anchor = fit
                d = _line_distances(t_s[union], x[union], y[union], vx, vy, anchor)
                keep = d <= a.tolerance
                if (
                    int(keep.sum()) < 0.85 * union.size
                    or int(keep.sum()) < min_support
                    or not prior.admits(vx, vy)
                ):
                    continue
                support = union[keep]
                # refit on the kept members so the invariant holds exactly
                fit = _fit_line(t_s[support], x[support], y[support])
                if fit is None:
                    continue
                vx, vy, anchor = fit
                d = _line_distances(t_s[support], x[support], y[support], vx, vy, anchor)
                support = support[d <= a.tolerance]
                if support.size < min_support or not prior.admits(vx, vy):
                    continue
                t_span = t_s[support] * US_PER_S
                streaks[i] = Streak(
                    velocity=(vx, vy),
                    anchor=(anchor[0], anchor[1], anchor[2] * US_PER_S),
                    span=(int(round(t_span.min())), int(round(t_span.max()))),
                    support=np.sort(support),
                    tolerance=a.tolerance,
                )
                del streaks[j]
                merged = True
                break
            if merged:
                break
    return streaks


# ---------------------------------------------------------------------------
# background estimation and blending


def estimate_background_motion(
    model: ContrastModel,
    stream: EventStream,
    streaks: list[Streak],
    background_flow,
    t_ref: int,
    window,
    *,
    t_cut: np.ndarray | None = None,
) -> np.ndarray:
    """Recover background intensity under motion.

    All in-window events are motion-compensated to t_ref along the
    background flow, so each event lands on the pixel its scene point
    occupies at t_ref; the accumulated polarities then invert exactly as
    in the static case. With t_cut (per-pixel cutoff times, from streak
    geometry) only events up to a pixel's occlusion moment contribute,
    which also recovers pixels a streak has passed and uncovered again.

    Pixels never reached by events keep the model's flake intensity;
    streak coverage decides which pixels are meaningful (via the mask).
    """
    t0, t1 = int(window[0]), int(window[1])
    if t1 <= t0:
        raise EmptyWindow(f"window [{t0}, {t1}) is empty")
    sel = stream.select_window((t0, t1))
    accum = np.zeros((stream.height, stream.width), dtype=np.float64)
    if len(sel):
        vx, vy = float(background_flow[0]), float(background_flow[1])
        dt_s = (float(t_ref) - sel.t.astype(np.float64)) / US_PER_S
        xw = np.floor(sel.x.astype(np.float64) + vx * dt_s + 0.5).astype(np.int64)
        yw = np.floor(sel.y.astype(np.float64) + vy * dt_s + 0.5).astype(np.int64)
        keep = (xw >= 0) & (xw < stream.width) & (yw >= 0) & (yw < stream.height)
        xw, yw = xw[keep], yw[keep]
        pol = sel.p[keep].astype(np.float64)
        if t_cut is not None:
            in_time = sel.t[keep].astype(np.float64) <= t_cut[yw, xw]
            xw, yw, pol = xw[in_time], yw[in_time], pol[in_time]
        np.add.at(accum, (yw, xw), pol)
    return np.clip(model.flake_intensity - model.contrast * accum, 0.0, 1.0)


def build_occlusion_mask(streaks, t_ref: int, geometry, radius: float) -> np.ndarray:
    """Soft disc mask around each streak's position at t_ref.

    Fully one within `radius` of a streak whose span contains t_ref,
    ramping linearly to zero over one pixel at the boundary. geometry is
    (width, height).
    """
    if radius < 0:
        raise ValueError("radius must be non-negative")
    width, height = int(geometry[0]), int(geometry[1])
    mask = np.zeros((height, width), dtype=np.float64)
    ys, xs = np.mgrid[0:height, 0:width]
    for streak in streaks:
        if not streak.span[0] <= t_ref <= streak.span[1]:
            continue
        cx, cy = streak.position_at(t_ref)
        d = np.hypot(xs - cx, ys - cy)
        np.maximum(mask, np.clip(radius + 1.0 - d, 0.0, 1.0), out=mask)
    return mask


def streak_trail_mask(
    streaks, window, geometry, radius: float
) -> tuple[np.ndarray, np.ndarray]:
    """Soft mask over each streak's whole track within the window.

    Returns (mask, t_cut). mask generalizes build_occlusion_mask from a
    single instant to the swept segment. t_cut holds, per pixel, the
    time the nearest streak point passed (the occlusion moment); pixels
    no streak covers get the window end.
    """
    if radius < 0:
        raise ValueError("radius must be non-negative")
    t0, t1 = int(window[0]), int(window[1])
    width, height = int(geometry[0]), int(geometry[1])
    mask = np.zeros((height, width), dtype=np.float64)
    tau = np.full((height, width), -1.0)
    ys, xs = np.mgrid[0:height, 0:width]
    for streak in streaks:
        a = max(streak.span[0], t0)
        b = min(streak.span[1], t1)
        if b < a:
            continue
        pa = np.array(streak.position_at(a))
        pb = np.array(streak.position_at(b))
        seg = pb - pa
        seg_len2 = float(seg @ seg)
        px = xs - pa[0]
        py = ys - pa[1]
        if seg_len2 <= 1e-18:
            u = np.zeros_like(mask)
        else:
            u = np.clip((px * seg[0] + py * seg[1]) / seg_len2, 0.0, 1.0)
        d = np.hypot(px - u * seg[0], py - u * seg[1])
        contribution = np.clip(radius + 1.0 - d, 0.0, 1.0)
        covered = contribution > 0.0
        np.maximum(mask, contribution, out=mask)
        times = a + u * float(b - a)
        tau[covered] = np.maximum(tau[covered], times[covered])
    t_cut = np.where(tau >= 0.0, tau, float(t1))
    return mask, t_cut


def fuse(image: np.ndarray, predicted: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Per-pixel convex blend: mask picks the prediction, clamped to [0,1]."""
    image = np.asarray(image, dtype=np.float64)
    predicted = np.asarray(predicted, dtype=np.float64)
    mask = np.asarray(mask, dtype=np.float64)
    if image.shape[:2] != predicted.shape[:2] or image.shape[:2] != mask.shape[:2]:
        raise DimensionMismatch(
            f"image {image.shape}, predicted {predicted.shape}, mask {mask.shape}"
        )
    if image.ndim == 3:
        if predicted.ndim == 2:
            predicted = predicted[..., None]
        if mask.ndim == 2:
            mask = mask[..., None]
    out = mask * predicted + (1.0 - mask) * image
    return np.clip(out, 0.0, 1.0)


def restore_image(
    image: np.ndarray,
    stream: EventStream,
    model: ContrastModel,
    prior: VelocityPrior,
    background_flow,
    window,
    *,
    min_support: int = 5,
    mask_radius: float | None = None,
    mask_mode: str = "trail",
    seed: int = 0,
) -> tuple[np.ndarray, np.ndarray]:
    """End-to-end de-snowing of one frame.

    Detects streaks in the window, recovers background intensity, and
    blends the prediction into the input under an occlusion mask.
    Returns the restored image and the mask actually used. With no
    detectable streaks the input passes through untouched.

    mask_mode picks what the input image is assumed to show: "trail"
    (default) suits exposure-style frames where snow smears along the
    whole streak, and restores each trail pixel from events up to its
    own occlusion moment; "instant" suits frames where flakes appear
    only at their window-end positions, and masks just those discs.
    """
    image = np.asarray(image, dtype=np.float64)
    if image.shape[:2] != (stream.height, stream.width):
        raise DimensionMismatch(
            f"image {image.shape} vs stream {stream.width}x{stream.height}"
        )
    if mask_mode not in ("trail", "instant"):
        raise ValueError(f"mask_mode must be 'trail' or 'instant', got {mask_mode!r}")
    t0, t1 = int(window[0]), int(window[1])
    if t1 <= t0:
        raise EmptyWindow(f"window [{t0}, {t1}) is empty")
    t_ref = t1

    sub = stream.select_window((t0, t1))
    streaks = detect_streaks(sub, prior, min_support, seed=seed)
    zero_mask = np.zeros((stream.height, stream.width), dtype=np.float64)
    if not streaks:
        return image.copy(), zero_mask

    radius = prior.spatial_tolerance + 1.0 if mask_radius is None else mask_radius
    geometry = (stream.width, stream.height)
    trail, t_cut = streak_trail_mask(streaks, (t0, t1), geometry, radius)
    if mask_mode == "trail":
        mask = trail
    else:
        mask = _instant_mask(streaks, t_ref, geometry, radius)
    # blend only where occlusion evidence actually landed: the geometric
    # mask is wider than the flake, and pixels without events would be
    # painted with the bare flake-intensity prior
    evidence, tau_event = _occlusion_evidence(sub, streaks, background_flow, t_ref)
    mask *= evidence
    # a pixel's own last onset marks its occlusion moment more reliably
    # than line geometry, which can be skewed by near-duplicate streaks
    t_cut = np.where(tau_event >= 0.0, tau_event, t_cut)
    predicted = estimate_background_motion(
        model, sub, streaks, background_flow, t_ref, (t0, t1), t_cut=t_cut
    )
    return fuse(image, predicted, mask), mask


def _instant_mask(streaks, t_ref, geometry, radius: float) -> np.ndarray:
    """Disc mask at t_ref, tolerating the gap after a streak's last event.

    A flake still present at t_ref stopped firing at most one
    inter-event gap earlier, so streaks whose span ends within a few
    mean gaps of t_ref count as active and extrapolate to t_ref.
    """
    width, height = int(geometry[0]), int(geometry[1])
    mask = np.zeros((height, width), dtype=np.float64)
    ys, xs = np.mgrid[0:height, 0:width]
    for streak in streaks:
        span_us = max(streak.span[1] - streak.span[0], 1)
        mean_gap_us = span_us / max(streak.support.size, 1)
        slack = min(50.0 * mean_gap_us, 0.2 * span_us) + 1.0
        if t_ref < streak.span[0] or t_ref > streak.span[1] + slack:
            continue
        cx, cy = streak.position_at(t_ref)
        d = np.hypot(xs - cx, ys - cy)
        np.maximum(mask, np.clip(radius + 1.0 - d, 0.0, 1.0), out=mask)
    return mask


def _occlusion_evidence(sub: EventStream, streaks, background_flow, t_ref):
    """Where motion-compensated streak onsets landed, and when.

    Returns (evidence, tau_event): evidence is 1 exactly where a warped
    positive streak event deposited (pixels without one would be painted
    with the bare flake-intensity prior); tau_event holds each pixel's
    latest onset time (-1 where none landed).
    """
    evidence = np.zeros((sub.height, sub.width), dtype=bool)
    tau_event = np.full((sub.height, sub.width), -1.0)
    support = np.unique(np.concatenate([s.support for s in streaks]))
    onsets = sub.take(support)
    onsets = onsets.take(onsets.p > 0)
    if len(onsets):
        vx, vy = float(background_flow[0]), float(background_flow[1])
        dt_s = (float(t_ref) - onsets.t.astype(np.float64)) / US_PER_S
        xw = np.floor(onsets.x.astype(np.float64) + vx * dt_s + 0.5).astype(np.int64)
        yw = np.floor(onsets.y.astype(np.float64) + vy * dt_s + 0.5).astype(np.int64)
        keep = (xw >= 0) & (xw < sub.width) & (yw >= 0) & (yw < sub.height)
        xw, yw = xw[keep], yw[keep]
        evidence[yw, xw] = True
        np.maximum.at(tau_event, (yw, xw), onsets.t[keep].astype(np.float64))
    return evidence.astype(np.float64), tau_event
