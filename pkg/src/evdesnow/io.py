"""File formats: EVS1/CSV event files, PNG images, PFM float fields,
and the on-disk dataset layout.

EVS1 layout (little-endian):
    header, 24 bytes: magic 0x45565331 u32 | version u32 | width u32 |
                      height u32 | count u64
    records, 16 bytes each: t_us u64 | x u16 | y u16 | p i8 | 3 pad bytes
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import (
    BadMagic,
    BadVersion,
    CorruptRecord,
    DecodeError,
    TruncatedFile,
    UnsupportedFormat,
)
from .events import EventStream, canonicalize

EVS1_MAGIC = 0x45565331
EVS1_VERSION = 1
_HEADER = struct.Struct("<IIIIQ")
_RECORD_DTYPE = np.dtype(
    {
        "names": ["t", "x", "y", "p"],
        "formats": ["<u8", "<u2", "<u2", "<i1"],
        "offsets": [0, 8, 10, 12],
        "itemsize": 16,
    }
)


def write_events(stream: EventStream, path) -> None:
    """Write a stream in canonical order; format chosen by suffix."""
    path = Path(path)
    if path.suffix.lower() == ".csv":
        _write_events_csv(stream, path)
    else:
        _write_events_evs1(stream, path)


def read_events(path, geometry=None) -> EventStream:
    """Read an event file.

    EVS1 files carry their own geometry. CSV files do not, so pass
    geometry=(width, height); otherwise it is inferred from the maximum
    coordinates present.
    """
    path = Path(path)
    if path.suffix.lower() == ".csv":
        return _read_events_csv(path, geometry)
    return _read_events_evs1(path)


def _write_events_evs1(stream: EventStream, path: Path) -> None:
    stream = canonicalize(stream)
    records = np.zeros(len(stream), dtype=_RECORD_DTYPE)
    records["t"] = stream.t
    records["x"] = stream.x
    records["y"] = stream.y
    records["p"] = stream.p
    header = _HEADER.pack(
        EVS1_MAGIC, EVS1_VERSION, stream.width, stream.height, len(stream)
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(records.tobytes())


def _read_events_evs1(path: Path) -> EventStream:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise TruncatedFile(f"{path}: {len(data)} bytes is shorter than the header")
    magic, version, width, height, count = _HEADER.unpack_from(data)
    if magic != EVS1_MAGIC:
        raise BadMagic(f"{path}: magic 0x{magic:08x}, expected 0x{EVS1_MAGIC:08x}")
    if version != EVS1_VERSION:
        raise BadVersion(f"{path}: version {version}, expected {EVS1_VERSION}")
    expected = _HEADER.size + 16 * count
    if len(data) < expected:
        raise TruncatedFile(
            f"{path}: header promises {count} records ({expected} bytes), "
            f"file has {len(data)}"
        )
    records = np.frombuffer(data, dtype=_RECORD_DTYPE, count=count, offset=_HEADER.size)
    bad_p = ~np.isin(records["p"], (-1, 1))
    if bad_p.any():
        i = int(np.argmax(bad_p))
        raise CorruptRecord(f"{path}: record {i} has polarity {records['p'][i]}", index=i)
    bad_xy = (records["x"] >= width) | (records["y"] >= height)
    if bad_xy.any():
        i = int(np.argmax(bad_xy))
        raise CorruptRecord(
            f"{path}: record {i} at ({records['x'][i]}, {records['y'][i]}) "
            f"outside {width}x{height}",
            index=i,
        )
    return EventStream(
        width, height, records["t"], records["x"], records["y"], records["p"],
        validate=False,
    )


def _write_events_csv(stream: EventStream, path: Path) -> None:
    stream = canonicalize(stream)
    with open(path, "w", newline="") as fh:
        fh.write("t_us,x,y,p\n")
        for t, x, y, p in zip(stream.t, stream.x, stream.y, stream.p):
            fh.write(f"{t},{x},{y},{p}\n")


def _read_events_csv(path: Path, geometry=None) -> EventStream:
    with open(path, "r") as fh:
        header = fh.readline().strip()
        if header != "t_us,x,y,p":
            raise DecodeError(f"{path}: bad CSV header {header!r}")
        rows = [line.strip().split(",") for line in fh if line.strip()]
    if not rows and geometry is None:
        raise DecodeError(f"{path}: empty CSV needs an explicit geometry")
    try:
        t = np.array([int(r[0]) for r in rows], dtype=np.uint64)
        x = np.array([int(r[1]) for r in rows], dtype=np.uint16)
        y = np.array([int(r[2]) for r in rows], dtype=np.uint16)
        p = np.array([int(r[3]) for r in rows], dtype=np.int8)
    except (ValueError, IndexError) as exc:
        raise DecodeError(f"{path}: malformed CSV row") from exc
    if geometry is None:
        geometry = (int(x.max()) + 1, int(y.max()) + 1)
    return EventStream(geometry[0], geometry[1], t, x, y, p)


# ---------------------------------------------------------------------------
# images


def write_image(path, image: np.ndarray) -> None:
    """Write a [0,1] float image: .png as 8-bit, .pfm as float32."""
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix == ".png":
        arr = np.asarray(image, dtype=np.float64)
        quantized = np.rint(np.clip(arr, 0.0, 1.0) * 255.0).astype(np.uint8)
        Image.fromarray(quantized).save(path, format="PNG")
    elif suffix == ".pfm":
        write_pfm(path, np.asarray(image, dtype=np.float32))
    else:
        raise UnsupportedFormat(f"{path}: cannot write {suffix!r} images")


def read_image(path) -> np.ndarray:
    """Read an image as float; PNG is scaled to [0,1], PFM is raw floats."""
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix == ".png":
        try:
            with Image.open(path) as img:
                arr = np.asarray(img)
        except Exception as exc:
            raise DecodeError(f"{path}: {exc}") from exc
        return arr.astype(np.float64) / 255.0
    if suffix == ".pfm":
        return read_pfm(path)
    raise UnsupportedFormat(f"{path}: cannot read {suffix!r} images")


def write_pfm(path, data: np.ndarray) -> None:
    """Grayscale little-endian PFM (negative scale marks byte order)."""
    data = np.asarray(data, dtype="<f4")
    if data.ndim != 2:
        raise UnsupportedFormat("PFM writer handles 2-D fields only")
    h, w = data.shape
    with open(path, "wb") as fh:
        fh.write(b"Pf\n")
        fh.write(f"{w} {h}\n".encode("ascii"))
        fh.write(b"-1.0\n")
        # PFM stores rows bottom-to-top
        fh.write(np.flipud(data).tobytes())


def read_pfm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        kind = fh.readline().strip()
        if kind == b"PF":
            raise UnsupportedFormat(f"{path}: color PFM not supported")
        if kind != b"Pf":
            raise DecodeError(f"{path}: not a PFM file (header {kind!r})")
        try:
            w, h = (int(v) for v in fh.readline().split())
            scale = float(fh.readline())
        except ValueError as exc:
            raise DecodeError(f"{path}: malformed PFM header") from exc
        if scale >= 0:
            raise UnsupportedFormat(f"{path}: big-endian PFM not supported")
        payload = fh.read(4 * w * h)
    if len(payload) != 4 * w * h:
        raise TruncatedFile(f"{path}: expected {4 * w * h} payload bytes")
    data = np.frombuffer(payload, dtype="<f4").reshape(h, w)
    return np.flipud(data).astype(np.float32)


# ---------------------------------------------------------------------------
# dataset layout

MANIFEST_VERSION = 1


@dataclass
class DatasetLayout:
    """A dataset root with images/, events/, gt/, masks/ and a manifest.

    Frame files are named frame_NNNNNN with the extension of their kind;
    every frame present under images/ must pair with events/ and gt/.
    """

    root: Path

    def __post_init__(self):
        self.root = Path(self.root)

    @property
    def images_dir(self) -> Path:
        return self.root / "images"

    @property
    def events_dir(self) -> Path:
        return self.root / "events"

    @property
    def gt_dir(self) -> Path:
        return self.root / "gt"

    @property
    def masks_dir(self) -> Path:
        return self.root / "masks"

    @property
    def manifest_path(self) -> Path:
        return self.root / "manifest.json"

    @staticmethod
    def frame_name(index: int, suffix: str) -> str:
        return f"frame_{index:06d}.{suffix}"

    def create_dirs(self):
        for d in (self.images_dir, self.events_dir, self.gt_dir, self.masks_dir):
            d.mkdir(parents=True, exist_ok=True)

    def image_path(self, index: int) -> Path:
        return self.images_dir / self.frame_name(index, "png")

    def events_path(self, index: int) -> Path:
        return self.events_dir / self.frame_name(index, "evs1")

    def gt_path(self, index: int) -> Path:
        return self.gt_dir / self.frame_name(index, "png")

    def mask_path(self, index: int) -> Path:
        return self.masks_dir / self.frame_name(index, "pfm")

    def frame_indices(self) -> list[int]:
        if not self.images_dir.is_dir():
            return []
        return sorted(
            int(p.stem.split("_")[1]) for p in self.images_dir.glob("frame_*.png")
        )

    def check_complete(self) -> None:
        """Every image frame needs matching events and ground truth."""
        for i in self.frame_indices():
            for path in (self.events_path(i), self.gt_path(i)):
                if not path.exists():
                    raise DecodeError(f"dataset incomplete: missing {path}")

    def write_manifest(self, manifest: dict) -> None:
        payload = {"manifest_version": MANIFEST_VERSION}
        payload.update(manifest)
        self.manifest_path.write_text(json.dumps(payload, indent=2) + "\n")

    def read_manifest(self) -> dict:
        try:
            data = json.loads(self.manifest_path.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise DecodeError(f"{self.manifest_path}: {exc}") from exc
        if data.get("manifest_version") != MANIFEST_VERSION:
            raise BadVersion(
                f"{self.manifest_path}: manifest version "
                f"{data.get('manifest_version')}, expected {MANIFEST_VERSION}"
            )
        return data
