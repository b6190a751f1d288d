"""Configuration parsing and the PGM frame dumps."""

import numpy as np
import pytest

from cake.config import DEFAULT_CONFIG, load_config, parse_config
from cake.errors import ConfigError, FormatError
from cake.pgm import (MAXVAL, export_frames, import_frames, magnitude_frames, read_pgm,
                      write_pgm)


class TestConfig:
    def test_defaults(self):
        cfg = parse_config()
        g = cfg.geometry
        assert (g.n1, g.n2, g.N, g.d1, g.d2, g.B) == (64, 64, 32, 2, 2, 4)
        assert cfg.families == ("rademacher", "dsm")
        assert (cfg.alpha, cfg.beta) == (0.383, 0.924)
        assert (cfg.of.eps1, cfg.of.eps2) == (4.3e-2, 4.3e3)
        assert cfg.discount == 4 and cfg.roi is None
        assert cfg.ripcheck.toy_geometry.n * cfg.ripcheck.toy_geometry.B == 64

    def test_default_text_parses_to_defaults(self):
        assert parse_config(DEFAULT_CONFIG) == parse_config()

    def test_overrides_and_text(self):
        cfg = parse_config("[geometry]\nn1 = 32\n[metrics]\nroi = 2:30,4:28\ndiscount = 1\n",
                           {"run": {"seed": 9}})
        assert cfg.geometry.n1 == 32 and cfg.seed == 9 and cfg.discount == 1
        assert (cfg.roi.row0, cfg.roi.row1, cfg.roi.col0, cfg.roi.col1) == (2, 30, 4, 28)

    def test_inline_comments(self):
        assert parse_config("[tvl1]\nmax_iters = 7  # short\n").tvl1.max_iters == 7

    def test_canonical_text_sorted(self):
        text = parse_config().to_text()
        sections = [line for line in text.splitlines() if line.startswith("[")]
        assert sections == sorted(sections)

    @pytest.mark.parametrize("text, match", [
        ("[bogus]\nx = 1\n", "section"),
        ("[run]\ncolour = red\n", "key"),
        ("[geometry]\nn1 = big\n", "integer"),
        ("[geometry]\nn1 = 63\n", "geometry"),
        ("[masks]\nfamilies = mura\n", "families"),
        ("[masks]\ndownsampler = nearest\n", "downsampler"),
        ("[output]\nframes = maybe\n", "yes or no"),
        ("[metrics]\ndiscount = 16\n", "discount"),
        ("no header line\n", "malformed"),
    ])
    def test_errors(self, text, match):
        with pytest.raises(ConfigError, match=match):
            parse_config(text)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="does not exist"):
            load_config(tmp_path / "absent.ini")

    def test_load_file(self, tmp_path):
        path = tmp_path / "run.ini"
        path.write_text("[run]\nseed = 3\n")
        assert load_config(path).seed == 3


class TestPgm:
    def test_round_trip_quantisation(self, tmp_path, rng):
        frame = rng.random((5, 7))
        write_pgm(tmp_path / "a.pgm", frame)
        back = read_pgm(tmp_path / "a.pgm")
        assert back.shape == (5, 7)
        assert np.abs(back - frame).max() <= 0.5 / MAXVAL + 1e-15

    def test_header_and_size(self, tmp_path):
        write_pgm(tmp_path / "a.pgm", np.zeros((3, 4)))
        raw = (tmp_path / "a.pgm").read_bytes()
        assert raw.startswith(b"P5\n4 3\n65535\n") and len(raw) == 13 + 3 * 4 * 2

    def test_clipping_and_extremes(self, tmp_path):
        write_pgm(tmp_path / "a.pgm", np.array([[-1.0, 0.0, 1.0, 2.0]]))
        assert np.array_equal(read_pgm(tmp_path / "a.pgm"), [[0.0, 0.0, 1.0, 1.0]])

    def test_redump_is_lossless(self, tmp_path, rng):
        cube = rng.random((3, 6, 6))
        first = export_frames(cube, tmp_path / "one", "f")
        second = export_frames(import_frames(first), tmp_path / "two", "f")
        assert [p.name for p in first] == ["f_000.pgm", "f_001.pgm", "f_002.pgm"]
        assert all(a.read_bytes() == b.read_bytes() for a, b in zip(first, second))

    def test_custom_range(self, tmp_path):
        write_pgm(tmp_path / "a.pgm", np.array([[-2.0, 2.0]]), lo=-2, hi=2)
        assert np.allclose(read_pgm(tmp_path / "a.pgm", lo=-2, hi=2), [[-2.0, 2.0]])

    def test_bad_files(self, tmp_path):
        (tmp_path / "x.pgm").write_bytes(b"P2\n1 1\n255\n0\n")
        with pytest.raises(FormatError):
            read_pgm(tmp_path / "x.pgm")
        (tmp_path / "y.pgm").write_bytes(b"P5\n1 1\n255\n\x00")
        with pytest.raises(FormatError, match="16-bit"):
            read_pgm(tmp_path / "y.pgm")
        (tmp_path / "z.pgm").write_bytes(b"P5\n2 2\n65535\n\x00\x00")
        with pytest.raises(FormatError, match="truncated"):
            read_pgm(tmp_path / "z.pgm")

    def test_rejects_non_2d(self, tmp_path):
        with pytest.raises(ValueError):
            write_pgm(tmp_path / "a.pgm", np.zeros((2, 2, 2)))

    def test_magnitude_frames(self):
        mag = magnitude_frames(np.array([[[-2.0, 1.0]], [[0.5, 0.0]]]))
        assert np.allclose(mag, [[[1.0, 0.5]], [[0.25, 0.0]]])
        assert not magnitude_frames(np.zeros((1, 2, 2))).any()
