import unittest
import sys
import os

# Add parent directory to path for imports
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import numpy as np

from congan_engine import ConGANEngine, GanConfig, discriminator_forward, generate
from exceptions import ShapeMismatchError, TransferError
from localisation_evaluator import average_mivo, mivo_per_class
from tests.helpers import make_dataset, small_gan_config
from transfer_learning import (
    build_transfer_model,
    finetune,
    modified_layers,
    parse_protocol,
    pretrain_multihouse,
    surgery,
)


class TestModifiedLayers(unittest.TestCase):
    def test_same_ap_count_touches_embeddings_only(self):
        layers = modified_layers(11, 11)
        self.assertEqual(layers, {"generator": ["label_embedding.weight"],
                                  "discriminator": ["label_embedding.weight"]})

    def test_ap_change_adds_io_layers(self):
        layers = modified_layers(9, 11)
        self.assertIn("output_layer.weight", layers["generator"])
        self.assertIn("blocks.0.conv.weight", layers["discriminator"])


class TestSurgery(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.pretrained = ConGANEngine(GanConfig(n_classes=3, n_aps=9, seed=1)).to_checkpoint()
        cls.adapted = surgery(cls.pretrained, target_n_classes=11, target_n_aps=11, seed=2)

    def test_unmodified_tensors_are_bit_identical(self):
        replaced = modified_layers(9, 11)
        for net in ("generator", "discriminator"):
            source = getattr(self.pretrained, f"{net}_weights")
            target = getattr(self.adapted, f"{net}_weights")
            for name, tensor in target.items():
                if name in replaced[net]:
                    continue
                np.testing.assert_array_equal(tensor, source[name], err_msg=f"{net}.{name}")

    def test_new_shapes(self):
        self.assertEqual(self.adapted.generator_weights["label_embedding.weight"].shape[0], 11)
        self.assertEqual(self.adapted.discriminator_weights["label_embedding.weight"].shape[0], 11)
        self.assertEqual(self.adapted.n_aps, 11)
        windows = generate(self.adapted, 10, 1, seed=0)
        self.assertEqual(windows[0].values.shape, (11, 20))

    def test_old_window_width_rejected(self):
        engine = ConGANEngine.from_checkpoint(self.adapted)
        with self.assertRaises(ShapeMismatchError):
            discriminator_forward(engine.discriminator, np.zeros((9, 20)), 0)

    def test_surgery_metadata(self):
        meta = self.adapted.train_meta["surgery"]
        self.assertEqual(meta["source_n_classes"], 3)
        self.assertEqual(meta["source_n_aps"], 9)
        self.assertEqual(self.adapted.train_meta["epochs_completed"], 0)

    def test_same_ap_surgery_changes_only_embeddings(self):
        small = ConGANEngine(small_gan_config()).to_checkpoint()
        adapted = surgery(small, target_n_classes=5, seed=3)
        self.assertEqual(adapted.generator_weights["label_embedding.weight"].shape, (5, 80))
        for name in ("output_layer.weight", "blocks.0.conv.weight", "blocks.1.norm.running_mean"):
            np.testing.assert_array_equal(adapted.generator_weights[name], small.generator_weights[name])
        np.testing.assert_array_equal(adapted.discriminator_weights["blocks.0.conv.weight"],
                                      small.discriminator_weights["blocks.0.conv.weight"])

    def test_invalid_class_count(self):
        with self.assertRaises(TransferError):
            surgery(self.pretrained, target_n_classes=0)


class TestPretrainAndFinetune(unittest.TestCase):
    def setUp(self):
        self.sources = {"a": make_dataset(house_id="a", seed=1), "b": make_dataset(house_id="b", seed=2)}
        self.config = small_gan_config(epochs=1)

    def test_pretrain_uses_houses_as_classes(self):
        ckpt = pretrain_multihouse(self.sources, self.config)
        self.assertEqual(ckpt.n_classes, 2)
        self.assertEqual(ckpt.train_meta["pretrained_on"], ["a", "b"])

    def test_pretrain_needs_two_houses(self):
        with self.assertRaises(TransferError):
            pretrain_multihouse({"a": self.sources["a"]}, self.config)

    def test_pretrain_rejects_mixed_ap_counts(self):
        sources = {"a": self.sources["a"], "c": make_dataset(house_id="c", n_aps=3)}
        with self.assertRaises(TransferError):
            pretrain_multihouse(sources, self.config)

    def test_finetune_class_mismatch(self):
        ckpt = surgery(pretrain_multihouse(self.sources, self.config), target_n_classes=4)
        with self.assertRaises(TransferError):
            finetune(ckpt, make_dataset(), self.config)

    def test_finetune_ap_mismatch(self):
        ckpt = surgery(pretrain_multihouse(self.sources, self.config), target_n_classes=3)
        with self.assertRaises(ShapeMismatchError):
            finetune(ckpt, make_dataset(n_aps=5), self.config)

    def test_zero_epochs_returns_surgered_model(self):
        ckpt = surgery(pretrain_multihouse(self.sources, self.config), target_n_classes=3)
        self.assertIs(finetune(ckpt, make_dataset(), epochs=0), ckpt)

    def test_finetune_records_target(self):
        ckpt = surgery(pretrain_multihouse(self.sources, self.config), target_n_classes=3)
        tuned = finetune(ckpt, make_dataset(house_id="target"), self.config)
        self.assertEqual(tuned.train_meta["finetuned_on"], "target")
        self.assertEqual(tuned.train_meta["epochs_completed"], 1)
        self.assertEqual(tuned.train_meta["surgery"]["pretrained_on"], ["a", "b"])


class TestTransferEndToEnd(unittest.TestCase):
    def _class_mivo(self, ckpt, target):
        X, y = target.arrays("fingerprint")
        gen_X = np.concatenate([np.stack([w.values for w in generate(ckpt, c, 40, seed=3)]) for c in range(3)])
        gen_y = np.repeat(np.arange(3), 40)
        return mivo_per_class(X, y, gen_X, gen_y)

    def test_finetuning_moves_generation_towards_target(self):
        config = small_gan_config(gen_channels=[16, 16], disc_channels=[16, 16], epochs=3)
        sources = {"a": make_dataset((24, 24, 24), house_id="a", seed=1),
                   "b": make_dataset((24, 24, 24), house_id="b", seed=2)}
        target = make_dataset((24, 24, 24), house_id="target", seed=3)
        adapted = surgery(pretrain_multihouse(sources, config), target_n_classes=3, seed=4)
        tuned = finetune(adapted, target, config, epochs=30)

        before, after = self._class_mivo(adapted, target), self._class_mivo(tuned, target)
        self.assertEqual(sorted(after), [0, 1, 2])
        self.assertTrue(all(np.isfinite(s.scalar) for s in after.values()))
        self.assertLess(average_mivo(after).scalar, average_mivo(before).scalar)


class TestBuildTransferModel(unittest.TestCase):
    def test_cross_protocol_resizes_aps(self):
        sources = {"a": make_dataset(house_id="a", n_aps=3), "b": make_dataset(house_id="b", n_aps=3, seed=4)}
        target = make_dataset(house_id="t", n_aps=4)
        ckpt = build_transfer_model("protocol:cross", target, sources, small_gan_config(epochs=1), seed=5)
        self.assertEqual((ckpt.n_classes, ckpt.n_aps), (3, 4))

    def test_same_protocol_requires_matching_aps(self):
        sources = {"a": make_dataset(house_id="a", n_aps=3), "b": make_dataset(house_id="b", n_aps=3)}
        with self.assertRaises(TransferError):
            build_transfer_model("same", make_dataset(n_aps=4), sources, small_gan_config(epochs=1))

    def test_parse_protocol(self):
        self.assertEqual(parse_protocol("protocol:same"), "same")
        self.assertEqual(parse_protocol("cross"), "cross")
        with self.assertRaises(TransferError):
            parse_protocol("sideways")


if __name__ == '__main__':
    unittest.main()
