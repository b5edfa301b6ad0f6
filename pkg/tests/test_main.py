import unittest
import sys
import os
import io
import json
import tempfile
from contextlib import redirect_stdout

# Add parent directory to path for imports
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import numpy as np

from main import RSSIForgeCLI, build_parser, generated_windows_path, main


def run_cli(*argv):
    out = io.StringIO()
    with redirect_stdout(out):
        code = main(list(argv))
    return code, out.getvalue()


class TestParser(unittest.TestCase):
    def setUp(self):
        self.parser = build_parser(RSSIForgeCLI())

    def test_preprocess_flags(self):
        args = self.parser.parse_args(["preprocess", "--in", "raw", "--out", "ds", "--max-gap-s", "1.0",
                                       "--window-s", "4", "--overlap", "0.5"])
        self.assertEqual((args.raw, args.out, args.max_gap, args.window, args.overlap), ("raw", "ds", 1.0, 4.0, 0.5))
        legacy = self.parser.parse_args(["preprocess", "--raw", "raw", "--out", "ds", "--max-gap", "2", "--window", "8"])
        self.assertEqual((legacy.raw, legacy.max_gap, legacy.window), ("raw", 2.0, 8.0))

    def test_simulate_flags(self):
        args = self.parser.parse_args(["simulate", "--spec", "builtin:target_b", "--fingerprint-min", "80",
                                       "--free-living-min", "120", "--seed", "7", "--out", "raw"])
        self.assertEqual((args.fingerprint_minutes, args.free_living_minutes, args.seed), (80.0, 120.0, 7))

    def test_congan_and_augment_flags(self):
        args = self.parser.parse_args(["congan", "generate", "--ckpt", "g.ckpt", "--label", "2", "--n", "1000",
                                       "--seed", "3", "--out", "gen"])
        self.assertEqual((args.label, args.n, args.out), (2, 1000, "gen"))
        args = self.parser.parse_args(["augment", "--method", "smote", "--target", "1000", "--seed", "1",
                                       "--in", "ds", "--out", "ds_smote"])
        self.assertEqual(args.dataset, "ds")

    def test_generated_windows_path(self):
        self.assertEqual(generated_windows_path("gen", 3), os.path.join("gen", "label_3.npz"))
        self.assertEqual(generated_windows_path("w.npz", 3), "w.npz")


class TestCLI(unittest.TestCase):
    def test_simulate_preprocess_augment(self):
        with tempfile.TemporaryDirectory() as tmp:
            raw, processed, augmented = (os.path.join(tmp, d) for d in ("raw", "processed", "augmented"))
            code, _ = run_cli("simulate", "--spec", "builtin:target_c", "--fingerprint-minutes", "4",
                              "--free-living-minutes", "2", "--out", raw, "--seed", "1")
            self.assertEqual(code, 0)
            self.assertTrue(os.path.exists(os.path.join(raw, "fingerprint.csv")))

            code, out = run_cli("preprocess", "--raw", raw, "--out", processed, "--json")
            self.assertEqual(code, 0)
            payload = json.loads(out)
            self.assertEqual(payload["violations"], [])
            self.assertGreater(payload["fingerprint_windows"], 0)

            code, out = run_cli("augment", "--dataset", processed, "--method", "oversample",
                                "--target", "40", "--out", augmented, "--json")
            self.assertEqual(code, 0)
            self.assertTrue(all(n >= 40 for n in json.loads(out)["class_counts"].values()))

    def test_congan_train_and_generate(self):
        with tempfile.TemporaryDirectory() as tmp:
            raw, processed = os.path.join(tmp, "raw"), os.path.join(tmp, "processed")
            ckpt, windows = os.path.join(tmp, "g.ckpt"), os.path.join(tmp, "generated")
            run_cli("simulate", "--spec", "builtin:target_c", "--fingerprint-minutes", "4",
                    "--free-living-minutes", "1", "--out", raw)
            run_cli("preprocess", "--in", raw, "--out", processed, "--max-gap-s", "1.0", "--window-s", "4")
            code, _ = run_cli("congan", "train", "--dataset", processed, "--out", ckpt,
                              "--epochs", "1", "--batch-size", "8", "--critic-iters", "1")
            self.assertEqual(code, 0)
            code, _ = run_cli("congan", "generate", "--ckpt", ckpt, "--label", "0", "--n", "3", "--out", windows)
            self.assertEqual(code, 0)
            with np.load(os.path.join(windows, "label_0.npz")) as data:
                self.assertEqual(data["values"].shape, (3, 11, 20))
                self.assertEqual(data["labels"].tolist(), [0, 0, 0])

    def test_missing_dataset_returns_one(self):
        with tempfile.TemporaryDirectory() as tmp:
            code, _ = run_cli("augment", "--dataset", os.path.join(tmp, "nowhere"), "--method", "smote",
                              "--out", os.path.join(tmp, "out"))
            self.assertEqual(code, 1)

    def test_missing_checkpoint_returns_one(self):
        with tempfile.TemporaryDirectory() as tmp:
            code, _ = run_cli("congan", "generate", "--ckpt", os.path.join(tmp, "none.ckpt"),
                              "--label", "0", "--n", "1", "--out", os.path.join(tmp, "w.npz"))
            self.assertEqual(code, 1)

    def test_bad_pipeline_config_returns_one(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "pipeline.json")
            with open(path, "w") as f:
                json.dump({"congan": {"epochs": -5}}, f)
            code, _ = run_cli("pipeline", "--config", path)
            self.assertEqual(code, 1)


if __name__ == '__main__':
    unittest.main()
