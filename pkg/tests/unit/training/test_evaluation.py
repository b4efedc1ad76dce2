import json
import math
from unittest import TestCase, main

import numpy as np
from parameterized import parameterized

from crowdlib.data.synthetic import synth_scene
from crowdlib.models.config import PscnetConfig
from crowdlib.models.pscnet import Pscnet, predicted_count
from crowdlib.training.evaluation import EvalReport, evaluate, mean_count_baseline
from crowdlib.training.exceptions import EmptyEvaluationError
from crowdlib.utils.seeding import make_rng


class TestEvalReport(TestCase):
    def test_fixture(self):
        report = EvalReport.from_counts([10, 20], [12, 16])
        self.assertEqual(report.k, 2)
        self.assertEqual(report.mae, 3.0)
        self.assertAlmostEqual(report.rmse, math.sqrt(10), places=12)
        self.assertAlmostEqual(report.rmse, 3.1623, places=4)

    def test_single_scene(self):
        report = EvalReport.from_counts([5.5], [3])
        self.assertEqual((report.k, report.mae, report.rmse), (1, 2.5, 2.5))

    def test_empty_report_raises(self):
        with self.assertRaises(EmptyEvaluationError):
            EvalReport.from_counts([], [])

    def test_perfect_predictions(self):
        report = EvalReport.from_counts([1.0, 7.0, 0.0], [1, 7, 0])
        self.assertEqual((report.mae, report.rmse), (0.0, 0.0))

    @parameterized.expand([(0,), (1,), (2,)])
    def test_order_independent(self, seed):
        rng = np.random.default_rng(seed)
        predicted = rng.uniform(0, 1e6, 40)
        truth = rng.integers(0, 1000, 40)
        order = rng.permutation(40)
        forward = EvalReport.from_counts(predicted, truth)
        shuffled = EvalReport.from_counts(predicted[order], truth[order])
        self.assertEqual(forward.mae, shuffled.mae)
        self.assertEqual(forward.rmse, shuffled.rmse)
        self.assertLessEqual(forward.mae, forward.rmse)

    def test_json(self):
        report = EvalReport.from_counts([10, 20], [12, 16])
        self.assertEqual(
            json.loads(report.to_json()), {"k": 2, "mae": 3.0, "rmse": math.sqrt(10)}
        )

    def test_table(self):
        report = EvalReport.from_counts([10, 20], [12, 16], ids=["a.pgm", "b.pgm"])
        lines = report.table().splitlines()
        self.assertEqual(len(lines), 4)
        self.assertTrue(lines[1].startswith("a.pgm"))
        self.assertEqual(lines[-1], "K=2  MAE=3.0000  RMSE=3.1623")


class TestMeanCountBaseline(TestCase):
    def test_mean_constant(self):
        report = mean_count_baseline([2, 4])
        self.assertEqual((report.mae, report.rmse), (1.0, 1.0))

    def test_explicit_constant(self):
        self.assertEqual(mean_count_baseline([2, 4], constant=0).mae, 3.0)

    def test_empty_raises(self):
        with self.assertRaises(EmptyEvaluationError):
            mean_count_baseline([])


class TestEvaluate(TestCase):
    @classmethod
    def setUpClass(cls):
        cls.model = Pscnet(PscnetConfig.toy(seed=0))
        cls.scenes = [
            synth_scene(make_rng(5, i), 32, 2 + i, scene_id=f"scene{i}") for i in range(3)
        ]

    def test_counts_match_predictions(self):
        report = evaluate(self.scenes, self.model)
        ids = [entry.scene_id for entry in report.entries]
        self.assertEqual(ids, ["scene0", "scene1", "scene2"])
        truths = [entry.ground_truth for entry in report.entries]
        self.assertEqual(truths, [2.0, 3.0, 4.0])
        for entry, scene in zip(report.entries, self.scenes):
            expected = predicted_count(self.model.predict(scene.image))
            self.assertEqual(entry.predicted, expected)

    def test_switches_to_eval_mode(self):
        model = Pscnet(PscnetConfig.toy(seed=0)).train()
        evaluate(self.scenes[:1], model)
        self.assertEqual(model.mode.value, "eval")

    def test_threads_do_not_change_results(self):
        single = evaluate(self.scenes, self.model, threads=1)
        pooled = evaluate(self.scenes, self.model, threads=3)
        self.assertEqual(single.entries, pooled.entries)

    def test_no_scenes_raises(self):
        with self.assertRaises(EmptyEvaluationError):
            evaluate([], self.model)


if __name__ == "__main__":
    main()
