import json
from pathlib import Path
from tempfile import TemporaryDirectory
from unittest import TestCase, main

import numpy as np
from numpy.testing import assert_allclose, assert_array_equal

from crowdlib.data.annotations import (
    load_annotations,
    load_scenes,
    write_annotations,
)
from crowdlib.data.exceptions import AnnotationFormatError, MissingImageError
from crowdlib.data.images import write_pgm


class TestAnnotations(TestCase):
    def setUp(self):
        self.directory = TemporaryDirectory()
        self.root = Path(self.directory.name)
        write_pgm(self.root / "a.pgm", np.zeros((3, 4)))

    def tearDown(self):
        self.directory.cleanup()

    def _write(self, *lines: str) -> Path:
        path = self.root / "annotations.jsonl"
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        return path

    def test_empty_points(self):
        path = self._write('{"image": "a.pgm", "points": []}')
        scene = load_annotations(path)[0].load()
        self.assertEqual(scene.count, 0)
        self.assertEqual(scene.image.shape, (3, 3, 4))

    def test_points_on_the_edge_are_clamped_with_one_warning(self):
        path = self._write(
            '{"image": "a.pgm", "points": [[4.0, 1.0], [1.0, 1.0]]}',
            '{"image": "a.pgm", "points": [[2.0, 3.0]]}',
        )
        with self.assertLogs("crowdlib.data.annotations", level="WARNING") as logs:
            scenes = load_scenes(path)
        self.assertEqual(len(logs.records), 1)
        self.assertIn("clamped 2", logs.output[0])
        self.assertEqual(scenes[0].points[0, 0], np.nextafter(4.0, 0))
        self.assertEqual(scenes[0].points[1, 0], 1.0)
        self.assertEqual(scenes[1].points[0, 1], np.nextafter(3.0, 0))

    def test_clamped_count_of_single_point(self):
        path = self._write('{"image": "a.pgm", "points": [[4.0, 1.0]]}')
        scene, clamped = load_annotations(path)[0].read()
        self.assertEqual(clamped, 1)
        self.assertLess(scene.points[0, 0], 4.0)

    def test_round_trip(self):
        points = np.random.default_rng(0).uniform(0, 3, (5, 2))
        path = self.root / "annotations.jsonl"
        write_annotations(path, [("a.pgm", points), ("a.pgm", np.zeros((0, 2)))])
        descriptors = load_annotations(path)
        assert_allclose(np.array(descriptors[0].points), points, atol=1e-6)
        self.assertEqual(descriptors[1].points, ())
        self.assertEqual(descriptors[0].id, "a.pgm")

    def test_blank_lines_are_skipped(self):
        path = self._write('{"image": "a.pgm", "points": []}', "", "")
        self.assertEqual(len(load_annotations(path)), 1)

    def test_malformed_line_reports_line_number(self):
        path = self._write(
            '{"image": "a.pgm", "points": []}', '{"image": "a.pgm", "points": [[1.0]]}'
        )
        with self.assertRaises(AnnotationFormatError) as context:
            load_annotations(path)
        self.assertIn("line 2", context.exception.message)

    def test_invalid_json(self):
        path = self._write("not json")
        with self.assertRaises(AnnotationFormatError) as context:
            load_annotations(path)
        self.assertIn("line 1", context.exception.message)

    def test_missing_image_fails_on_load(self):
        path = self._write(json.dumps({"image": "missing.pgm", "points": [[1, 1]]}))
        descriptor = load_annotations(path)[0]
        with self.assertRaises(MissingImageError):
            descriptor.load()

    def test_load_scenes_limits_shorter_side(self):
        write_pgm(self.root / "big.pgm", np.zeros((40, 80)))
        path = self._write('{"image": "big.pgm", "points": [[60.0, 20.0]]}')
        scene = load_scenes(path, max_shorter_side=20)[0]
        self.assertEqual(scene.image.shape, (3, 20, 40))
        assert_array_equal(scene.points, [[30.0, 10.0]])

    def test_threads_preserve_order(self):
        write_pgm(self.root / "b.pgm", np.ones((2, 2)))
        path = self._write(
            *[json.dumps({"image": name, "points": []}) for name in ["a.pgm", "b.pgm"] * 4]
        )
        ids = [scene.id for scene in load_scenes(path, threads=3)]
        self.assertEqual(ids, ["a.pgm", "b.pgm"] * 4)


if __name__ == "__main__":
    main()
