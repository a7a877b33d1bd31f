"""Event file, PNG, and PFM round-trip tests."""

import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from evdesnow import io as evio
from evdesnow.errors import (
    BadMagic,
    BadVersion,
    CorruptRecord,
    DecodeError,
    TruncatedFile,
    UnsupportedFormat,
)
from evdesnow.events import EventStream, canonicalize
from evdesnow.metrics import occlusion_fraction

from test_events import random_stream, stream_strategy


class TestEvs1:
    def test_roundtrip_bit_identical(self, tmp_path):
        rng = np.random.default_rng(1)
        s = random_stream(rng, n=5000)
        path = tmp_path / "events.evs1"
        evio.write_events(s, path)
        back = evio.read_events(path)
        assert back == canonicalize(s)

    def test_write_emits_canonical_order(self, tmp_path):
        s = EventStream(8, 8, [9, 1, 1], [1, 2, 0], [1, 1, 1], [1, -1, 1])
        path = tmp_path / "e.evs1"
        evio.write_events(s, path)
        back = evio.read_events(path)
        assert back.is_canonical()
        assert [e.t for e in back] == [1, 1, 9]

    def test_header_layout(self, tmp_path):
        s = EventStream(640, 480, [7], [3], [2], [-1])
        path = tmp_path / "e.evs1"
        evio.write_events(s, path)
        raw = path.read_bytes()
        assert len(raw) == 24 + 16
        magic, version, w, h, count = struct.unpack_from("<IIIIQ", raw)
        assert (magic, version, w, h, count) == (0x45565331, 1, 640, 480, 1)
        t, x, y, p = struct.unpack_from("<QHHb", raw, 24)
        assert (t, x, y, p) == (7, 3, 2, -1)
        assert raw[24 + 13 : 24 + 16] == b"\x00\x00\x00"

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.evs1"
        path.write_bytes(struct.pack("<IIIIQ", 0, 1, 8, 8, 0))
        with pytest.raises(BadMagic):
            evio.read_events(path)

    def test_bad_version(self, tmp_path):
        path = tmp_path / "bad.evs1"
        path.write_bytes(struct.pack("<IIIIQ", 0x45565331, 99, 8, 8, 0))
        with pytest.raises(BadVersion):
            evio.read_events(path)

    def test_truncated_records(self, tmp_path):
        # oracle: size arithmetic, 24 + 16 * count
        path = tmp_path / "short.evs1"
        path.write_bytes(struct.pack("<IIIIQ", 0x45565331, 1, 8, 8, 1))
        with pytest.raises(TruncatedFile):
            evio.read_events(path)

    def test_truncated_header(self, tmp_path):
        path = tmp_path / "tiny.evs1"
        path.write_bytes(b"\x00" * 10)
        with pytest.raises(TruncatedFile):
            evio.read_events(path)

    def test_corrupt_polarity_record(self, tmp_path):
        path = tmp_path / "corrupt.evs1"
        rec = struct.pack("<QHHb3x", 5, 1, 1, 0)
        path.write_bytes(struct.pack("<IIIIQ", 0x45565331, 1, 8, 8, 1) + rec)
        with pytest.raises(CorruptRecord) as exc:
            evio.read_events(path)
        assert exc.value.index == 0

    def test_corrupt_coordinate_record(self, tmp_path):
        path = tmp_path / "corrupt.evs1"
        rec = struct.pack("<QHHb3x", 5, 200, 1, 1)
        path.write_bytes(struct.pack("<IIIIQ", 0x45565331, 1, 8, 8, 1) + rec)
        with pytest.raises(CorruptRecord):
            evio.read_events(path)

    @settings(max_examples=100, deadline=None)
    @given(s=stream_strategy())
    def test_roundtrip_equals_canonicalize(self, s, tmp_path_factory):
        path = tmp_path_factory.mktemp("evs") / "s.evs1"
        evio.write_events(s, path)
        assert evio.read_events(path) == canonicalize(s)


class TestCsv:
    def test_roundtrip(self, tmp_path):
        rng = np.random.default_rng(2)
        s = random_stream(rng, width=100, height=80, n=200)
        path = tmp_path / "events.csv"
        evio.write_events(s, path)
        back = evio.read_events(path, geometry=(100, 80))
        assert back == canonicalize(s)

    def test_header_line(self, tmp_path):
        s = EventStream(8, 8, [1], [2], [3], [-1])
        path = tmp_path / "e.csv"
        evio.write_events(s, path)
        assert path.read_text().splitlines() == ["t_us,x,y,p", "1,2,3,-1"]

    def test_bad_header_rejected(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("time,x,y,polarity\n")
        with pytest.raises(DecodeError):
            evio.read_events(path)

    def test_empty_csv_needs_geometry(self, tmp_path):
        path = tmp_path / "empty.csv"
        evio.write_events(EventStream.empty(16, 16), path)
        with pytest.raises(DecodeError):
            evio.read_events(path)
        back = evio.read_events(path, geometry=(16, 16))
        assert back == EventStream.empty(16, 16)


class TestImages:
    def test_png_8bit_roundtrip_identical_bytes(self, tmp_path):
        grad = np.tile(np.arange(256, dtype=np.uint8), (16, 1))
        image = grad.astype(np.float64) / 255.0
        p1 = tmp_path / "a.png"
        p2 = tmp_path / "b.png"
        evio.write_image(p1, image)
        evio.write_image(p2, evio.read_image(p1))
        assert p1.read_bytes() == p2.read_bytes()

    def test_pfm_scale_field_negative(self, tmp_path):
        path = tmp_path / "f.pfm"
        evio.write_pfm(path, np.ones((4, 6), dtype=np.float32))
        lines = path.read_bytes().split(b"\n", 3)
        assert lines[0] == b"Pf"
        assert lines[1] == b"6 4"  # width height
        assert float(lines[2]) < 0  # little-endian marker

    def test_pfm_float32_roundtrip_exact(self, tmp_path):
        rng = np.random.default_rng(3)
        field = rng.standard_normal((17, 23)).astype(np.float32)
        path = tmp_path / "f.pfm"
        evio.write_pfm(path, field)
        assert np.array_equal(evio.read_pfm(path), field)

    def test_mask_pfm_preserves_occlusion_fraction(self, tmp_path):
        # oracle: metric recomputation after the round trip
        rng = np.random.default_rng(4)
        mask = (rng.random((32, 32)) < 0.2).astype(np.float32)
        path = tmp_path / "mask.pfm"
        evio.write_image(path, mask)
        assert occlusion_fraction(evio.read_image(path)) == occlusion_fraction(mask)

    def test_unsupported_format(self, tmp_path):
        with pytest.raises(UnsupportedFormat):
            evio.write_image(tmp_path / "x.tiff", np.zeros((4, 4)))
        (tmp_path / "x.bmp").write_bytes(b"")
        with pytest.raises(UnsupportedFormat):
            evio.read_image(tmp_path / "x.bmp")

    def test_decode_error_on_garbage_png(self, tmp_path):
        path = tmp_path / "junk.png"
        path.write_bytes(b"not a png at all")
        with pytest.raises(DecodeError):
            evio.read_image(path)

    def test_big_endian_pfm_rejected(self, tmp_path):
        path = tmp_path / "be.pfm"
        path.write_bytes(b"Pf\n2 2\n1.0\n" + b"\x00" * 16)
        with pytest.raises(UnsupportedFormat):
            evio.read_pfm(path)
