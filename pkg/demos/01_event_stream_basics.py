"""Event streams, canonical ordering, voxel grids, and transforms.

Walks through the core data model: building a stream, sorting it into
canonical order, binning it into a voxel grid, applying the geometric
and temporal transforms, and round-tripping through the EVS1 file
format. Run from the repository root:

    python3 demos/01_event_stream_basics.py
"""

from pathlib import Path

import numpy as np

import evdesnow as evd

OUT = Path(__file__).parent / "output"
OUT.mkdir(exist_ok=True)

# --- build a small stream ---------------------------------------------------
# Events are (t_us, x, y, p) with p in {-1, +1}. A stream pins the sensor
# geometry; construction validates bounds and polarity.
rng = np.random.default_rng(0)
n = 5000
stream = evd.EventStream(
    width=240,
    height=180,
    t=np.sort(rng.integers(0, 50_000, n)).astype(np.uint64),
    x=rng.integers(0, 240, n),
    y=rng.integers(0, 180, n),
    p=rng.choice([-1, 1], n),
)
print(f"stream: {stream}")

# Canonical order sorts by (t, y, x, p); it is idempotent and preserves
# the event multiset, which makes file outputs byte-reproducible.
stream = evd.canonicalize(stream)
print(f"canonical: {stream.is_canonical()}")

# --- voxel grid ---------------------------------------------------------
# Ten temporal bins over the full window. Each event splits its polarity
# between the two nearest bin centers, so total mass is conserved.
grid = evd.voxelize(stream, bins=10, window=(0, 50_000))
print(f"voxel grid: {grid.data.shape}, total mass {grid.total_mass:+.1f} "
      f"(signed polarity sum {int(stream.p.sum()):+d})")

# --- transforms -------------------------------------------------------------
slowed = evd.scale_time(stream, 2.0)          # timestamps doubled
mirrored = evd.flip_horizontal(stream)        # x -> width-1-x
shifted = evd.apply_homography(stream, evd.Homography.translation(12, -4))
print(f"scale_time x2: span {slowed.t.min()}..{slowed.t.max()} us")
print(f"flip twice == original: {evd.flip_horizontal(mirrored) == stream}")
print(f"translation kept {len(shifted)}/{len(stream)} events in bounds")

# --- file round trip ---------------------------------------------------
evs_path = OUT / "basics.evs1"
csv_path = OUT / "basics.csv"
evd.write_events(stream, evs_path)
evd.write_events(stream, csv_path)
back = evd.read_events(evs_path)
print(f"EVS1 round trip bit-identical: {back == stream}")
print(f"wrote {evs_path} ({evs_path.stat().st_size} bytes) and {csv_path}")
