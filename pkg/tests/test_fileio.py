"""Raw-float files, angle lists, and 16-bit PGM previews."""

import numpy as np
import pytest

from dectsplit import fileio


class TestRaw:
    def test_roundtrip_image(self, tmp_path, rng):
        img = rng.standard_normal((9, 7)).astype(np.float32).astype(float)
        path = tmp_path / "img.raw"
        fileio.write_raw(path, img, "image", 0.1)
        back, header = fileio.read_raw(path)
        np.testing.assert_array_equal(back, img)
        assert back.dtype == np.float64
        assert header["kind"] == "image"
        assert header["rows"] == 9
        assert header["cols"] == 7
        assert header["pitch_cm"] == pytest.approx(0.1)
        assert header["angles_file"] == "-"

    def test_sinogram_records_angles_file(self, tmp_path):
        sino = np.zeros((4, 5))
        path = tmp_path / "sino.raw"
        fileio.write_raw(path, sino, "sinogram", 0.2, angles_file="angles.txt")
        _, header = fileio.read_raw(path)
        assert header["angles_file"] == "angles.txt"

    def test_storage_is_float32(self, tmp_path):
        path = tmp_path / "x.raw"
        fileio.write_raw(path, np.full((2, 3), np.pi), "image", 0.1)
        assert path.stat().st_size == 2 * 3 * 4
        back, _ = fileio.read_raw(path)
        assert back[0, 0] == pytest.approx(np.pi, rel=1e-7)
        assert back[0, 0] != np.pi  # precision dropped on disk

    def test_unknown_kind_rejected(self, tmp_path):
        with pytest.raises(ValueError):
            fileio.write_raw(tmp_path / "x.raw", np.zeros((2, 2)), "volume", 0.1)

    def test_size_mismatch_rejected(self, tmp_path):
        path = tmp_path / "x.raw"
        fileio.write_raw(path, np.zeros((4, 4)), "image", 0.1)
        path.write_bytes(path.read_bytes()[:-4])
        with pytest.raises(ValueError):
            fileio.read_raw(path)

    def test_missing_sidecar_field_rejected(self, tmp_path):
        path = tmp_path / "x.raw"
        fileio.write_raw(path, np.zeros((2, 2)), "image", 0.1)
        sidecar = path.with_suffix(".hdr")
        lines = [ln for ln in sidecar.read_text().splitlines()
                 if not ln.startswith("pitch_cm")]
        sidecar.write_text("\n".join(lines) + "\n")
        with pytest.raises(ValueError):
            fileio.read_raw(path)


class TestAngles:
    def test_roundtrip_is_exact(self, tmp_path):
        angles = np.arange(90) * (np.pi / 90)
        path = tmp_path / "angles.txt"
        fileio.write_angles(path, angles)
        np.testing.assert_array_equal(fileio.read_angles(path), angles)


class TestPgm16:
    def test_roundtrip_window_and_pixels(self, tmp_path):
        img = np.array([[0.0, 0.5], [1.0, 2.0]])
        path = tmp_path / "x.pgm"
        fileio.write_pgm16(path, img, window=(0.0, 2.0))
        pixels, window = fileio.read_pgm16(path)
        assert window == (0.0, 2.0)
        assert pixels.dtype == np.uint16
        np.testing.assert_array_equal(
            pixels, [[0, 16384], [32768, 65535]])

    def test_default_window_is_data_range(self, tmp_path):
        img = np.array([[-1.0, 3.0]])
        path = tmp_path / "x.pgm"
        fileio.write_pgm16(path, img)
        pixels, window = fileio.read_pgm16(path)
        assert window == (-1.0, 3.0)
        np.testing.assert_array_equal(pixels, [[0, 65535]])

    def test_values_outside_window_clip(self, tmp_path):
        img = np.array([[-10.0, 10.0]])
        path = tmp_path / "x.pgm"
        fileio.write_pgm16(path, img, window=(0.0, 1.0))
        pixels, _ = fileio.read_pgm16(path)
        np.testing.assert_array_equal(pixels, [[0, 65535]])

    def test_flat_window_maps_to_zero(self, tmp_path):
        path = tmp_path / "x.pgm"
        fileio.write_pgm16(path, np.full((3, 3), 4.2))
        pixels, _ = fileio.read_pgm16(path)
        assert np.all(pixels == 0)

    def test_header_is_binary_p5(self, tmp_path):
        path = tmp_path / "x.pgm"
        fileio.write_pgm16(path, np.zeros((2, 2)))
        assert path.read_bytes().startswith(b"P5\n")

    def test_inverted_window_rejected(self, tmp_path):
        with pytest.raises(ValueError):
            fileio.write_pgm16(tmp_path / "x.pgm", np.zeros((2, 2)),
                               window=(1.0, 0.0))
