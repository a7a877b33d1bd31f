"""Independent reference implementations used to check the fast paths."""

import numpy as np

from evdesnow.events import EventStream, canonicalize, merge


def composite_brute_force(bg_events, snow_events, hazy, config):
    """Apply the two compositing rules by examining every event pair.

    O(n*m) over background x admitted-snow pairs, evaluated in row
    chunks so large streams stay affordable.
    """
    hazy = np.asarray(hazy, dtype=np.float64)
    lum = hazy if hazy.ndim == 2 else hazy @ np.array([0.299, 0.587, 0.114])

    admit = (
        np.abs(lum[snow_events.y, snow_events.x] - config.flake_intensity)
        > config.contrast
    )
    snow_kept = snow_events.take(admit)

    keep = np.ones(len(bg_events), dtype=bool)
    if len(snow_kept) and len(bg_events):
        st = snow_kept.t.astype(np.int64)
        sx = snow_kept.x.astype(np.int64)
        sy = snow_kept.y.astype(np.int64)
        w = np.int64(config.overlap_window_us)
        for lo in range(0, len(bg_events), 256):
            hi = min(lo + 256, len(bg_events))
            bt = bg_events.t[lo:hi].astype(np.int64)[:, None]
            bx = bg_events.x[lo:hi].astype(np.int64)[:, None]
            by = bg_events.y[lo:hi].astype(np.int64)[:, None]
            clash = (
                (bx == sx[None, :])
                & (by == sy[None, :])
                & (np.abs(bt - st[None, :]) <= w)
            )
            keep[lo:hi] = ~clash.any(axis=1)
    return merge(snow_kept, bg_events.take(keep))


def composite_pure_python(bg_events, snow_events, hazy, config):
    """Literal per-event double loop; small inputs only."""
    hazy = np.asarray(hazy, dtype=np.float64)
    lum = hazy if hazy.ndim == 2 else hazy @ np.array([0.299, 0.587, 0.114])
    admitted = [
        e
        for e in snow_events
        if abs(float(lum[e.y, e.x]) - config.flake_intensity) > config.contrast
    ]
    kept_bg = []
    for e in bg_events:
        overlap = any(
            s.x == e.x and s.y == e.y and abs(s.t - e.t) <= config.overlap_window_us
            for s in admitted
        )
        if not overlap:
            kept_bg.append(e)
    out = EventStream.from_events(bg_events.width, bg_events.height, admitted + kept_bg)
    return canonicalize(out)
