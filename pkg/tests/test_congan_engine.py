import unittest
import sys
import os

# Add parent directory to path for imports
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import numpy as np
import torch

from congan_engine import (
    ConGANEngine,
    Discriminator,
    GanConfig,
    Generator,
    discriminator_forward,
    embed_label,
    generate,
    generator_forward,
    gradient_penalty,
    train,
)
from dataset_manager import deserialize_checkpoint, serialize_checkpoint
from exceptions import InsufficientSamplesError, ShapeMismatchError, TrainingDivergenceError
from tests.helpers import make_dataset, small_gan_config


class TestGanConfig(unittest.TestCase):
    def test_defaults(self):
        cfg = GanConfig()
        self.assertEqual(cfg.learning_rate, 0.002077)
        self.assertEqual(cfg.betas, (0.0, 0.9))
        self.assertEqual(cfg.gp_lambda, 10.0)
        self.assertEqual(cfg.critic_iters, 10)
        self.assertEqual(cfg.batch_size, 48)
        self.assertEqual(cfg.epochs, 300)

    def test_invalid_values(self):
        with self.assertRaises(ValueError):
            GanConfig(batch_size=0)
        with self.assertRaises(ValueError):
            GanConfig(kernel_size=4)


class TestForwardShapes(unittest.TestCase):
    def test_default_architecture_shapes(self):
        cfg = GanConfig(n_classes=11, n_aps=11)
        gen, disc = Generator(cfg).eval(), Discriminator(cfg).eval()
        latent = np.random.default_rng(0).normal(size=(100, 20))
        window = generator_forward(gen, latent, 3)
        self.assertEqual(window.shape, (11, 20))
        self.assertGreaterEqual(window.min(), 0.0)
        self.assertLessEqual(window.max(), 1.0)
        self.assertIsInstance(discriminator_forward(disc, window, 3), float)

    def test_wrong_shapes_are_rejected(self):
        cfg = small_gan_config()
        gen, disc = Generator(cfg).eval(), Discriminator(cfg).eval()
        with self.assertRaises(ShapeMismatchError):
            generator_forward(gen, np.zeros((8, 19)), 0)
        with self.assertRaises(ShapeMismatchError):
            discriminator_forward(disc, np.zeros((5, 20)), 0)
        with self.assertRaises(IndexError):
            generator_forward(gen, np.zeros((8, 20)), 3)

    def test_embed_label_reshapes_row(self):
        table = np.arange(3 * 8).reshape(3, 8).astype(float)
        np.testing.assert_array_equal(embed_label(1, table, embed_size=2), [[8, 9, 10, 11], [12, 13, 14, 15]])
        with self.assertRaises(IndexError):
            embed_label(3, table, embed_size=2)


class TestGradientPenalty(unittest.TestCase):
    def setUp(self):
        rng = np.random.default_rng(1)
        self.real = torch.tensor(rng.uniform(size=(4, 11, 20)), dtype=torch.float64)
        self.fake = torch.tensor(rng.uniform(size=(4, 11, 20)), dtype=torch.float64)
        self.labels = torch.zeros(4, dtype=torch.long)

    def test_linear_critic(self):
        critic = lambda x, labels: x.sum(dim=(1, 2))  # noqa: E731
        gp = gradient_penalty(critic, self.real, self.fake, self.labels)
        self.assertAlmostEqual(gp.item(), (np.sqrt(220) - 1) ** 2, delta=1e-5)

    def test_constant_critic(self):
        critic = lambda x, labels: torch.zeros(x.shape[0], dtype=x.dtype)  # noqa: E731
        gp = gradient_penalty(critic, self.real, self.fake, self.labels)
        self.assertAlmostEqual(gp.item(), 1.0, delta=1e-5)

    def test_mismatched_batches(self):
        with self.assertRaises(ShapeMismatchError):
            gradient_penalty(lambda x, l: x.sum(dim=(1, 2)), self.real, self.fake[:2], self.labels)

    def test_non_finite_gradients_raise(self):
        critic = lambda x, labels: (x * float("inf")).sum(dim=(1, 2))  # noqa: E731
        with self.assertRaises(TrainingDivergenceError):
            gradient_penalty(critic, self.real, self.fake, self.labels)

    def test_critic_gradients_match_finite_differences(self):
        torch.manual_seed(0)
        disc = Discriminator(small_gan_config()).double()
        x = torch.tensor(np.random.default_rng(2).uniform(size=(1, 4, 20)), dtype=torch.float64, requires_grad=True)
        labels = torch.tensor([1])
        grad = torch.autograd.grad(disc(x, labels).sum(), x)[0].numpy()[0]

        h = 1e-6
        base = x.detach().clone()
        rng = np.random.default_rng(3)
        for _ in range(12):
            i, j = int(rng.integers(4)), int(rng.integers(20))
            plus, minus = base.clone(), base.clone()
            plus[0, i, j] += h
            minus[0, i, j] -= h
            with torch.no_grad():
                fd = (disc(plus, labels) - disc(minus, labels)).item() / (2 * h)
            self.assertLessEqual(abs(fd - grad[i, j]), 1e-3 * max(abs(grad[i, j]), 1e-3))


class TestCriticScore(unittest.TestCase):
    def setUp(self):
        torch.manual_seed(5)
        self.disc = Discriminator(small_gan_config()).eval()
        self.window = np.random.default_rng(6).uniform(size=(4, 20))

    def test_label_alone_changes_score(self):
        scores = [discriminator_forward(self.disc, self.window, label) for label in range(3)]
        self.assertEqual(len(set(scores)), 3)

    def test_score_is_linear_in_final_layer(self):
        before = discriminator_forward(self.disc, self.window, 1)
        with torch.no_grad():
            self.disc.score_layer.weight.mul_(2.0)
            self.disc.score_layer.bias.mul_(2.0)
        after = discriminator_forward(self.disc, self.window, 1)
        self.assertAlmostEqual(after, 2.0 * before, delta=1e-6 * max(1.0, abs(before)))


class TestTraining(unittest.TestCase):
    def setUp(self):
        self.X, self.y = make_dataset(n_fingerprint=(12, 12, 8)).arrays("fingerprint")

    def test_history_has_one_entry_per_batch(self):
        engine = ConGANEngine(small_gan_config(epochs=3))
        history = engine.train(self.X, self.y)
        self.assertEqual(len(history["critic_loss"]), 3 * (len(self.X) // 8))
        self.assertEqual(engine.epochs_completed, 3)
        self.assertTrue(np.all(np.isfinite(history["generator_loss"])))

    def test_training_is_deterministic(self):
        a = train(self.X, self.y, small_gan_config())
        b = train(self.X, self.y, small_gan_config())
        self.assertEqual(serialize_checkpoint(a), serialize_checkpoint(b))

    def test_divergence_aborts(self):
        engine = ConGANEngine(small_gan_config(divergence_threshold=1e-12))
        with self.assertRaises(TrainingDivergenceError) as ctx:
            engine.train(self.X, self.y)
        self.assertIn("critic_loss", ctx.exception.diagnostics)

    def test_batch_larger_than_data(self):
        with self.assertRaises(InsufficientSamplesError):
            ConGANEngine(small_gan_config(batch_size=64)).train(self.X, self.y)

    def test_missing_class(self):
        with self.assertRaises(InsufficientSamplesError):
            ConGANEngine(small_gan_config(n_classes=4)).train(self.X, self.y)

    def test_window_shape_mismatch(self):
        with self.assertRaises(ShapeMismatchError):
            ConGANEngine(small_gan_config(n_aps=5)).train(self.X, self.y)

    def test_one_class_of_identical_windows_converges(self):
        t = np.arange(20)
        target = np.stack([0.5 + 0.3 * np.sin(2 * np.pi * t / 20 + ap) for ap in range(11)])
        X = np.repeat(target[None], 96, axis=0)
        y = np.zeros(96, dtype=np.int64)
        cfg = GanConfig(n_classes=1, n_aps=11, embed_size=8, latent_dim=8, gen_channels=[32, 32],
                        disc_channels=[32, 32], batch_size=8, critic_iters=5, seed=1)
        engine = ConGANEngine(cfg)
        errors = [float(np.mean(np.abs(engine.generate(0, 50, seed=2) - target)))]
        # 10 epochs of 12 batches per round
        for _ in range(15):
            engine.train(X, y, epochs=10)
            errors.append(float(np.mean(np.abs(engine.generate(0, 50, seed=2) - target))))
            if errors[-1] < 0.1:
                break
        self.assertGreater(errors[0], 0.1)
        self.assertLess(errors[-1], 0.1, f"mean per-cell error by round: {errors}")


class TestGenerate(unittest.TestCase):
    def setUp(self):
        X, y = make_dataset(n_fingerprint=(8, 8, 8)).arrays("fingerprint")
        self.ckpt = train(X, y, small_gan_config(epochs=1))

    def test_shapes_and_range(self):
        windows = generate(self.ckpt, 2, 5, seed=1)
        self.assertEqual(len(windows), 5)
        for w in windows:
            self.assertEqual(w.values.shape, (4, 20))
            self.assertTrue(np.all((w.values >= 0) & (w.values <= 1)))
            self.assertEqual(w.origin, "synthetic:congan")

    def test_same_seed_same_windows(self):
        a = generate(self.ckpt, 0, 3, seed=4)
        b = generate(self.ckpt, 0, 3, seed=4)
        for wa, wb in zip(a, b):
            np.testing.assert_array_equal(wa.values, wb.values)

    def test_zero_windows(self):
        self.assertEqual(generate(self.ckpt, 1, 0), [])

    def test_unknown_label(self):
        with self.assertRaises(IndexError):
            generate(self.ckpt, 3, 1)


class TestCheckpoint(unittest.TestCase):
    def test_archive_roundtrip_is_byte_identical(self):
        X, y = make_dataset(n_fingerprint=(8, 8, 8)).arrays("fingerprint")
        ckpt = train(X, y, small_gan_config(epochs=1))
        blob = serialize_checkpoint(ckpt)
        restored = deserialize_checkpoint(blob)
        self.assertEqual(serialize_checkpoint(restored), blob)
        again = ConGANEngine.from_checkpoint(restored).to_checkpoint()
        self.assertEqual(serialize_checkpoint(again), blob)

    def test_arch_meta_describes_config(self):
        cfg = small_gan_config()
        ckpt = ConGANEngine(cfg).to_checkpoint()
        self.assertEqual(ckpt.arch_meta, cfg.arch_meta())
        self.assertEqual(ckpt.generator_weights["label_embedding.weight"].shape, (3, 4 * 20))
        self.assertEqual(ckpt.discriminator_weights["blocks.0.conv.weight"].shape, (8, 4 + 4, 5))


if __name__ == '__main__':
    unittest.main()
