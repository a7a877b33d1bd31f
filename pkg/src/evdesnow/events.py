"""Event stream data model and geometric/temporal transforms.

Events are brightness-change records (t, x, y, p) with microsecond
timestamps and polarity +1/-1. Streams carry their sensor geometry and
are kept in canonical order: ascending t, ties broken by (y, x, p).
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .errors import (
    InvalidBins,
    InvalidWindow,
    OutOfBounds,
    SingularHomography,
    TimestampOverflow,
)

T_MAX = np.iinfo(np.uint64).max
US_PER_S = 1_000_000.0  # microseconds per second


class Event(NamedTuple):
    """One brightness-change record."""

    t: int  # microseconds since stream epoch
    x: int  # pixel column
    y: int  # pixel row
    p: int  # polarity, +1 or -1


class EventStream:
    """A bounded sequence of events on a fixed sensor geometry.

    Arrays are stored as t: uint64, x/y: uint16, p: int8. Construction
    validates bounds and polarity; call :func:`canonicalize` to establish
    canonical order.
    """

    __slots__ = ("width", "height", "t", "x", "y", "p")

    def __init__(self, width, height, t=(), x=(), y=(), p=(), *, validate=True):
        self.width = int(width)
        self.height = int(height)
        self.t = np.asarray(t, dtype=np.uint64)
        self.x = np.asarray(x, dtype=np.uint16)
        self.y = np.asarray(y, dtype=np.uint16)
        self.p = np.asarray(p, dtype=np.int8)
        if not (self.t.shape == self.x.shape == self.y.shape == self.p.shape):
            raise ValueError("event field arrays must have equal length")
        if self.width <= 0 or self.height <= 0:
            raise ValueError("sensor geometry must be positive")
        if validate:
            self.validate()

    def validate(self):
        """Check bounds and polarity; raise OutOfBounds / ValueError."""
        bad = (self.x >= self.width) | (self.y >= self.height)
        if bad.any():
            i = int(np.argmax(bad))
            raise OutOfBounds(
                f"event {i} at ({self.x[i]}, {self.y[i]}) outside "
                f"{self.width}x{self.height} sensor",
                index=i,
            )
        if self.p.size and not np.isin(self.p, (-1, 1)).all():
            i = int(np.argmax(~np.isin(self.p, (-1, 1))))
            raise ValueError(f"event {i} has polarity {self.p[i]}, expected +1 or -1")

    @classmethod
    def empty(cls, width, height):
        return cls(width, height)

    @classmethod
    def from_events(cls, width, height, events: Iterable[Event]):
        recs = list(events)
        if not recs:
            return cls(width, height)
        t, x, y, p = zip(*recs)
        return cls(width, height, t, x, y, p)

    def __len__(self):
        return self.t.size

    def __getitem__(self, i) -> Event:
        return Event(int(self.t[i]), int(self.x[i]), int(self.y[i]), int(self.p[i]))

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    def __eq__(self, other):
        if not isinstance(other, EventStream):
            return NotImplemented
        return (
            self.width == other.width
            and self.height == other.height
            and np.array_equal(self.t, other.t)
            and np.array_equal(self.x, other.x)
            and np.array_equal(self.y, other.y)
            and np.array_equal(self.p, other.p)
        )

    def __repr__(self):
        return (
            f"EventStream({self.width}x{self.height}, {len(self)} events"
            + (f", t=[{self.t.min()}, {self.t.max()}]" if len(self) else "")
            + ")"
        )

    def replace(self, **fields) -> "EventStream":
        """Copy with some arrays swapped out (revalidates)."""
        kw = dict(t=self.t, x=self.x, y=self.y, p=self.p)
        kw.update(fields)
        return EventStream(self.width, self.height, **kw)

    def take(self, index) -> "EventStream":
        """Select events by index array or boolean mask."""
        return EventStream(
            self.width,
            self.height,
            self.t[index],
            self.x[index],
            self.y[index],
            self.p[index],
            validate=False,
        )

    def select_window(self, window) -> "EventStream":
        """Events with t in [t0, t1)."""
        t0, t1 = _check_window(window)
        return self.take((self.t >= t0) & (self.t < t1))

    def is_canonical(self) -> bool:
        if len(self) < 2:
            return True
        # lexsort is stable, so a canonically ordered stream maps to arange
        order = np.lexsort((self.p, self.x, self.y, self.t))
        return bool(np.array_equal(order, np.arange(len(self))))


def _check_window(window):
    t0, t1 = int(window[0]), int(window[1])
    if t1 <= t0:
        raise InvalidWindow(f"window [{t0}, {t1}) is empty")
    return t0, t1


def canonicalize(stream: EventStream) -> EventStream:
    """Sort events by (t, y, x, p) ascending.

    Idempotent; preserves the event multiset exactly.
    """
    stream.validate()
    order = np.lexsort((stream.p, stream.x, stream.y, stream.t))
    return stream.take(order)


@dataclass(frozen=True)
class VoxelGrid:
    """B temporal bins of signed polarity over a window [t0, t1)."""

    bins: int
    window: tuple[int, int]
    data: np.ndarray  # (B, H, W) float64

    def __post_init__(self):
        if self.data.shape[0] != self.bins:
            raise ValueError("data leading dimension must equal bin count")

    @property
    def total_mass(self) -> float:
        return float(self.data.sum())


def voxelize(stream: EventStream, bins: int, window) -> VoxelGrid:
    """Bin a stream into B temporal channels with bilinear time weighting.

    Bin k is centred at t0 + (k + 0.5) * (t1 - t0) / B. Each in-window
    event splits its polarity linearly between the two nearest bin
    centres (clamped at the ends so total mass equals the signed
    polarity sum of in-window events). Events outside [t0, t1) are
    dropped.
    """
    if bins < 1:
        raise InvalidBins(f"need at least one bin, got {bins}")
    t0, t1 = _check_window(window)
    data = np.zeros((bins, stream.height, stream.width), dtype=np.float64)
    if len(stream):
        sel = stream.select_window((t0, t1))
        if len(sel):
            span = float(t1 - t0)
            # continuous bin coordinate: 0 at first centre, B-1 at last
            u = (sel.t.astype(np.float64) - float(t0)) / span * bins - 0.5
            k0 = np.floor(u).astype(np.int64)
            w1 = u - k0
            w0 = 1.0 - w1
            lo = np.clip(k0, 0, bins - 1)
            hi = np.clip(k0 + 1, 0, bins - 1)
            pol = sel.p.astype(np.float64)
            ys = sel.y.astype(np.intp)
            xs = sel.x.astype(np.intp)
            np.add.at(data, (lo, ys, xs), pol * w0)
            np.add.at(data, (hi, ys, xs), pol * w1)
    return VoxelGrid(bins=bins, window=(t0, t1), data=data)


def scale_time(stream: EventStream, s: float) -> EventStream:
    """Scale all timestamps by s > 0, rounding half-up to whole microseconds.

    The product is evaluated in exact rational arithmetic so the result
    is independent of timestamp magnitude.
    """
    if not s > 0:
        raise ValueError(f"scale factor must be positive, got {s}")
    if s == 1.0:
        return canonicalize(stream)
    frac = Fraction(s)
    n, d = frac.numerator, frac.denominator
    scaled = [(2 * int(t) * n + d) // (2 * d) for t in stream.t.tolist()]
    if scaled and max(scaled) > T_MAX:
        i = max(range(len(scaled)), key=scaled.__getitem__)
        raise TimestampOverflow(f"t={stream.t[i]} * {s} exceeds 64-bit range")
    out = stream.replace(t=np.array(scaled, dtype=np.uint64))
    return canonicalize(out)


def flip_horizontal(stream: EventStream) -> EventStream:
    """Mirror events along the vertical axis: x -> width - 1 - x."""
    flipped = stream.replace(x=(stream.width - 1 - stream.x).astype(np.uint16))
    return canonicalize(flipped)


class Homography:
    """A 3x3 projective transform with the last entry normalized to 1."""

    __slots__ = ("matrix",)

    def __init__(self, matrix):
        m = np.asarray(matrix, dtype=np.float64).reshape(3, 3)
        if m[2, 2] == 0.0:
            raise SingularHomography("cannot normalize: H[2,2] is zero")
        m = m / m[2, 2]
        if abs(np.linalg.det(m)) <= 1e-12:
            raise SingularHomography("homography is not invertible")
        self.matrix = m

    @classmethod
    def identity(cls) -> "Homography":
        return cls(np.eye(3))

    @classmethod
    def translation(cls, dx, dy) -> "Homography":
        m = np.eye(3)
        m[0, 2] = dx
        m[1, 2] = dy
        return cls(m)

    @classmethod
    def from_flat(cls, values: Sequence[float]) -> "Homography":
        """Build from the 8 free parameters a..h (row-major, H[2,2]=1)."""
        v = list(values)
        if len(v) != 8:
            raise ValueError(f"expected 8 homography parameters, got {len(v)}")
        return cls(np.array(v + [1.0]).reshape(3, 3))

    def inverse(self) -> "Homography":
        return Homography(np.linalg.inv(self.matrix))

    def map_points(self, x, y):
        """Transform point arrays with perspective division (no rounding)."""
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        m = self.matrix
        w = m[2, 0] * x + m[2, 1] * y + m[2, 2]
        xm = (m[0, 0] * x + m[0, 1] * y + m[0, 2]) / w
        ym = (m[1, 0] * x + m[1, 1] * y + m[1, 2]) / w
        return xm, ym

    def __eq__(self, other):
        if not isinstance(other, Homography):
            return NotImplemented
        return np.array_equal(self.matrix, other.matrix)

    def __repr__(self):
        return f"Homography({self.matrix.tolist()})"


def apply_homography(stream: EventStream, h: Homography) -> EventStream:
    """Warp event positions through a homography.

    Positions are rounded half-up to the nearest pixel; events landing
    outside the sensor are dropped. Timestamps and polarities are kept.
    """
    if not len(stream):
        return canonicalize(stream)
    xm, ym = h.map_points(stream.x, stream.y)
    xr = np.floor(xm + 0.5)
    yr = np.floor(ym + 0.5)
    keep = (xr >= 0) & (xr < stream.width) & (yr >= 0) & (yr < stream.height)
    out = EventStream(
        stream.width,
        stream.height,
        stream.t[keep],
        xr[keep].astype(np.uint16),
        yr[keep].astype(np.uint16),
        stream.p[keep],
        validate=False,
    )
    return canonicalize(out)


def shift_time(stream: EventStream, offset_us: int) -> EventStream:
    """Add a non-negative microsecond offset to every timestamp."""
    if offset_us < 0:
        raise ValueError("time offset must be non-negative")
    if len(stream) and int(stream.t.max()) + offset_us > T_MAX:
        raise TimestampOverflow(f"offset {offset_us} overflows 64-bit timestamps")
    return stream.replace(t=stream.t + np.uint64(offset_us))


def merge(a: EventStream, b: EventStream) -> EventStream:
    """Union of two streams on the same geometry, canonically ordered."""
    if (a.width, a.height) != (b.width, b.height):
        raise ValueError("streams must share sensor geometry")
    out = EventStream(
        a.width,
        a.height,
        np.concatenate([a.t, b.t]),
        np.concatenate([a.x, b.x]),
        np.concatenate([a.y, b.y]),
        np.concatenate([a.p, b.p]),
        validate=False,
    )
    return canonicalize(out)
