from pathlib import Path
from tempfile import TemporaryDirectory
from unittest import TestCase, main

import numpy as np
from numpy.testing import assert_allclose, assert_array_equal

from crowdlib.data.exceptions import ImageDecodeError
from crowdlib.data.images import decode_pnm, read_pnm, write_pgm, write_ppm


class TestPnm(TestCase):
    def test_pgm_is_replicated_to_three_channels(self):
        image = decode_pnm(b"P5\n2 1\n255\n\x00\xff")
        self.assertEqual(image.shape, (3, 1, 2))
        assert_array_equal(image[:, 0, 1], [1.0, 1.0, 1.0])
        self.assertEqual(image.dtype, np.float32)

    def test_ppm_channel_order(self):
        image = decode_pnm(b"P6 1 1 255\n\xff\x00\x33")
        assert_array_equal(image[:, 0, 0], np.array([255, 0, 51], dtype=np.float32) / 255)

    def test_header_comments(self):
        image = decode_pnm(b"P5\n# made by hand\n1 1\n255\n\x80")
        self.assertEqual(image.shape, (3, 1, 1))

    def test_pgm_round_trip(self):
        gray = np.arange(12, dtype=np.float64).reshape(3, 4) / 11
        with TemporaryDirectory() as root:
            path = Path(root) / "gray.pgm"
            write_pgm(path, gray)
            image = read_pnm(path)
        assert_allclose(image[0], np.rint(gray * 255) / 255, atol=1e-7)

    def test_ppm_round_trip(self):
        rgb = np.random.default_rng(0).integers(0, 256, (3, 4, 5)) / 255
        with TemporaryDirectory() as root:
            path = Path(root) / "color.ppm"
            write_ppm(path, rgb)
            image = read_pnm(path)
        assert_allclose(image, rgb, atol=1e-7)

    def test_rejects_other_formats(self):
        with self.assertRaises(ImageDecodeError):
            decode_pnm(b"\x89PNG\r\n\x1a\n")

    def test_rejects_sixteen_bit(self):
        with self.assertRaises(ImageDecodeError):
            decode_pnm(b"P5\n1 1\n65535\n\x00\x00")

    def test_rejects_truncated_pixels(self):
        with self.assertRaises(ImageDecodeError):
            decode_pnm(b"P5\n4 4\n255\n\x00")


if __name__ == "__main__":
    main()
