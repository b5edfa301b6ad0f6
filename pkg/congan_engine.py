"""Conditional WGAN-GP over RSSI windows.

Generator: latent noise [latent_dim x width] concatenated with an embedded
label [embed_size x width] runs through transposed-conv blocks (batch norm +
ReLU) and a sigmoid output layer emitting [n_aps x width].
Critic: window [n_aps x width] concatenated with its own label embedding runs
through conv blocks (instance norm + LeakyReLU) and a final conv whose kernel
spans the whole width, giving one unbounded score.
"""

import logging
import time
from collections import OrderedDict
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import torch
import torch.nn as nn

from config import Config
from exceptions import (
    CheckpointError,
    InsufficientSamplesError,
    ShapeMismatchError,
    TrainingDivergenceError,
)
from rssi_types import GanCheckpoint, RSSIWindow

logger = logging.getLogger(__name__)

ARCH_FIELDS = ("n_classes", "n_aps", "latent_dim", "embed_size", "input_width",
               "kernel_size", "gen_channels", "disc_channels")
GENERATE_CHUNK = 512


@dataclass
class GanConfig:
    """Architecture and training hyperparameters"""
    n_classes: int = 1
    n_aps: int = 11
    input_width: int = Config.N_TIMESTAMPS
    embed_size: int = 100
    latent_dim: int = 100
    gen_channels: List[int] = field(default_factory=lambda: [64, 256, 512, 128])
    disc_channels: List[int] = field(default_factory=lambda: [1024, 512, 64, 64])
    kernel_size: int = 5
    gp_lambda: float = 10.0
    batch_size: int = 48
    learning_rate: float = 0.002077
    betas: Tuple[float, float] = (0.0, 0.9)
    critic_iters: int = 10
    epochs: int = 300
    seed: int = Config.DEFAULT_SEED
    divergence_threshold: float = 1e6

    def __post_init__(self):
        self.gen_channels = [int(c) for c in self.gen_channels]
        self.disc_channels = [int(c) for c in self.disc_channels]
        self.betas = tuple(float(b) for b in self.betas)
        positive = {
            "n_classes": self.n_classes, "n_aps": self.n_aps, "input_width": self.input_width,
            "embed_size": self.embed_size, "latent_dim": self.latent_dim,
            "kernel_size": self.kernel_size, "batch_size": self.batch_size,
            "learning_rate": self.learning_rate, "critic_iters": self.critic_iters,
        }
        for name, value in positive.items():
            if value <= 0:
                raise ValueError(f"GanConfig.{name} must be positive, got {value}")
        if self.epochs < 0 or self.gp_lambda < 0:
            raise ValueError("GanConfig.epochs and gp_lambda must be >= 0")
        if not self.gen_channels or not self.disc_channels or min(self.gen_channels + self.disc_channels) <= 0:
            raise ValueError("channel lists must be non-empty and positive")
        if self.kernel_size % 2 == 0:
            raise ValueError("kernel_size must be odd so width is preserved")

    def arch_meta(self) -> Dict:
        return {name: getattr(self, name) for name in ARCH_FIELDS}

    def train_params(self) -> Dict:
        meta = asdict(self)
        return {k: v for k, v in meta.items() if k not in ARCH_FIELDS}

    @classmethod
    def from_arch_meta(cls, arch_meta: Dict, **overrides) -> "GanConfig":
        values = {name: arch_meta[name] for name in ARCH_FIELDS if name in arch_meta}
        values.update(overrides)
        return cls(**values)

    def replace(self, **changes) -> "GanConfig":
        return replace(self, **changes)


# --------------------------------------------------------------------------
# networks

class Generator(nn.Module):
    def __init__(self, config: GanConfig):
        super().__init__()
        self.config = config
        k = config.kernel_size
        self.label_embedding = nn.Embedding(config.n_classes, config.embed_size * config.input_width)
        in_ch = config.latent_dim + config.embed_size
        blocks = []
        for ch in config.gen_channels:
            blocks.append(nn.Sequential(OrderedDict([
                ("conv", nn.ConvTranspose1d(in_ch, ch, k, stride=1, padding=k // 2)),
                ("norm", nn.BatchNorm1d(ch)),
                ("act", nn.ReLU()),
            ])))
            in_ch = ch
        self.blocks = nn.Sequential(*blocks)
        self.output_layer = nn.ConvTranspose1d(in_ch, config.n_aps, k, stride=1, padding=k // 2)

    def forward(self, latent: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
        cfg = self.config
        if latent.dim() != 3 or latent.shape[1:] != (cfg.latent_dim, cfg.input_width):
            raise ShapeMismatchError(
                f"latent shape {tuple(latent.shape)} != (B, {cfg.latent_dim}, {cfg.input_width})")
        embedded = self.label_embedding(labels).view(-1, cfg.embed_size, cfg.input_width)
        x = torch.cat([latent, embedded], dim=1)
        return torch.sigmoid(self.output_layer(self.blocks(x)))


class Discriminator(nn.Module):
    def __init__(self, config: GanConfig):
        super().__init__()
        self.config = config
        k = config.kernel_size
        self.label_embedding = nn.Embedding(config.n_classes, config.embed_size * config.input_width)
        in_ch = config.n_aps + config.embed_size
        blocks = []
        for ch in config.disc_channels:
            blocks.append(nn.Sequential(OrderedDict([
                ("conv", nn.Conv1d(in_ch, ch, k, stride=1, padding=k // 2)),
                ("norm", nn.InstanceNorm1d(ch, affine=True)),
                ("act", nn.LeakyReLU(0.2)),
            ])))
            in_ch = ch
        self.blocks = nn.Sequential(*blocks)
        # kernel spans the remaining width -> one value per sample
        self.score_layer = nn.Conv1d(in_ch, 1, kernel_size=config.input_width)

    def forward(self, window: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
        cfg = self.config
        if window.dim() != 3 or window.shape[1:] != (cfg.n_aps, cfg.input_width):
            raise ShapeMismatchError(
                f"window shape {tuple(window.shape)} != (B, {cfg.n_aps}, {cfg.input_width})")
        embedded = self.label_embedding(labels).view(-1, cfg.embed_size, cfg.input_width)
        x = torch.cat([window, embedded.to(window.dtype)], dim=1)
        return self.score_layer(self.blocks(x)).view(-1)


# layers whose shape depends on class count or AP count
EMBEDDING_LAYERS = {"generator": ["label_embedding.weight"], "discriminator": ["label_embedding.weight"]}
AP_LAYERS = {"generator": ["output_layer.weight", "output_layer.bias"],
             "discriminator": ["blocks.0.conv.weight", "blocks.0.conv.bias"]}


# --------------------------------------------------------------------------
# single-step operations

def embed_label(label: int, table: Union[np.ndarray, torch.Tensor],
                embed_size: int = 100) -> np.ndarray:
    """Row `label` of an [n_classes x embed_size*width] table as [embed_size x width]"""
    table = table.detach().cpu().numpy() if isinstance(table, torch.Tensor) else np.asarray(table)
    if not 0 <= int(label) < table.shape[0]:
        raise IndexError(f"label {label} outside [0, {table.shape[0]})")
    if table.shape[1] % embed_size:
        raise ShapeMismatchError(f"table width {table.shape[1]} is not a multiple of embed_size {embed_size}")
    return table[int(label)].reshape(embed_size, table.shape[1] // embed_size).copy()


def _label_tensor(label, n: int, n_classes: int) -> torch.Tensor:
    labels = torch.as_tensor(np.broadcast_to(np.asarray(label, dtype=np.int64), (n,)).copy())
    if labels.numel() and (labels.min() < 0 or labels.max() >= n_classes):
        raise IndexError(f"labels must lie in [0, {n_classes})")
    return labels


def generator_forward(generator: Generator, latent, label) -> np.ndarray:
    """[latent_dim x width] (or a batch of them) + label -> [n_aps x width] in [0, 1]"""
    z = torch.as_tensor(np.asarray(latent), dtype=torch.float32)
    single = z.dim() == 2
    if single:
        z = z.unsqueeze(0)
    if not torch.isfinite(z).all():
        raise ValueError("latent must be finite")
    labels = _label_tensor(label, z.shape[0], generator.config.n_classes)
    with torch.no_grad():
        out = generator(z, labels).cpu().numpy().astype(np.float64)
    return out[0] if single else out


def discriminator_forward(discriminator: Discriminator, window, label) -> Union[float, np.ndarray]:
    """[n_aps x width] window (or batch) + label -> unbounded critic score"""
    x = torch.as_tensor(np.asarray(window), dtype=next(discriminator.parameters()).dtype)
    single = x.dim() == 2
    if single:
        x = x.unsqueeze(0)
    labels = _label_tensor(label, x.shape[0], discriminator.config.n_classes)
    with torch.no_grad():
        scores = discriminator(x, labels).cpu().numpy().astype(np.float64)
    return float(scores[0]) if single else scores


def gradient_penalty(critic: Callable[[torch.Tensor, torch.Tensor], torch.Tensor],
                     real: torch.Tensor, fake: torch.Tensor, labels: torch.Tensor,
                     generator: Optional[torch.Generator] = None) -> torch.Tensor:
    """E[(||grad_x D(x_hat, y)||_2 - 1)^2] at x_hat = eps*real + (1-eps)*fake, eps ~ U(0,1) per sample"""
    if real.shape != fake.shape:
        raise ShapeMismatchError(f"real {tuple(real.shape)} and fake {tuple(fake.shape)} batches differ")
    batch = real.shape[0]
    eps = torch.rand((batch,) + (1,) * (real.dim() - 1), generator=generator, dtype=real.dtype)
    x_hat = (eps * real.detach() + (1.0 - eps) * fake.detach()).requires_grad_(True)
    scores = critic(x_hat, labels)
    if scores.requires_grad:
        grads = torch.autograd.grad(scores.sum(), x_hat, create_graph=True, allow_unused=True)[0]
    else:
        grads = None
    if grads is None:
        grads = torch.zeros_like(x_hat)
    norms = grads.reshape(batch, -1).norm(2, dim=1)
    if not torch.isfinite(norms).all():
        raise TrainingDivergenceError(
            "non-finite critic gradients in gradient penalty",
            {"batch_size": batch,
             "non_finite": int((~torch.isfinite(norms)).sum()),
             "real_range": (float(real.min()), float(real.max())),
             "fake_range": (float(fake.min()), float(fake.max()))})
    return ((norms - 1.0) ** 2).mean()


# --------------------------------------------------------------------------
# engine

class ConGANEngine:
    """Holds a generator/critic pair, trains it with WGAN-GP and samples from it"""

    def __init__(self, config: GanConfig):
        self.config = config
        torch.manual_seed(config.seed)
        self.generator = Generator(config)
        self.discriminator = Discriminator(config)
        self.loss_history: Dict[str, List[float]] = {
            "critic_loss": [], "generator_loss": [], "gradient_penalty": []}
        self.epochs_completed = 0
        self.meta: Dict = {}

    # -- persistence

    @classmethod
    def from_checkpoint(cls, ckpt: GanCheckpoint, **overrides) -> "ConGANEngine":
        params = dict(ckpt.train_meta.get("hyperparameters", {}))
        params.update(overrides)
        config = GanConfig.from_arch_meta(ckpt.arch_meta, **params)
        engine = cls(config)
        try:
            engine.generator.load_state_dict(_to_state_dict(ckpt.generator_weights))
            engine.discriminator.load_state_dict(_to_state_dict(ckpt.discriminator_weights))
        except RuntimeError as e:
            raise CheckpointError(f"checkpoint weights do not fit its arch_meta: {e}") from e
        history = ckpt.train_meta.get("loss_history") or {}
        engine.loss_history = {k: list(history.get(k, [])) for k in engine.loss_history}
        engine.epochs_completed = int(ckpt.train_meta.get("epochs_completed", 0))
        engine.meta = {k: v for k, v in ckpt.train_meta.items()
                       if k not in ("loss_history", "epochs_completed", "hyperparameters", "seed")}
        return engine

    def to_checkpoint(self) -> GanCheckpoint:
        train_meta = dict(self.meta)
        train_meta.update({
            "epochs_completed": self.epochs_completed,
            "seed": self.config.seed,
            "loss_history": {k: list(v) for k, v in self.loss_history.items()},
            "hyperparameters": self.config.train_params(),
        })
        return GanCheckpoint(
            generator_weights=_to_numpy(self.generator.state_dict()),
            discriminator_weights=_to_numpy(self.discriminator.state_dict()),
            arch_meta=self.config.arch_meta(),
            train_meta=train_meta,
        )

    # -- training

    def _check_training_data(self, X: np.ndarray, y: np.ndarray):
        cfg = self.config
        if X.ndim != 3 or X.shape[1:] != (cfg.n_aps, cfg.input_width):
            raise ShapeMismatchError(f"windows {X.shape} != (N, {cfg.n_aps}, {cfg.input_width})")
        if len(X) != len(y):
            raise ShapeMismatchError(f"{len(X)} windows but {len(y)} labels")
        if len(y) and (y.min() < 0 or y.max() >= cfg.n_classes):
            raise ValueError(f"labels must lie in [0, {cfg.n_classes})")
        counts = np.bincount(y, minlength=cfg.n_classes)
        if np.any(counts == 0):
            missing = int(np.flatnonzero(counts == 0)[0])
            raise InsufficientSamplesError(f"class {missing} has no training windows", missing)
        if cfg.batch_size > len(X):
            raise InsufficientSamplesError(
                f"batch_size {cfg.batch_size} exceeds the {len(X)} available windows")

    def train(self, X: np.ndarray, y: np.ndarray, epochs: Optional[int] = None) -> Dict[str, List[float]]:
        """Alternate critic_iters critic steps with one generator step per real batch"""
        cfg = self.config
        X = np.asarray(X, dtype=np.float32)
        y = np.asarray(y, dtype=np.int64)
        self._check_training_data(X, y)
        epochs = cfg.epochs if epochs is None else epochs

        torch.manual_seed(cfg.seed)
        rng = torch.Generator().manual_seed(cfg.seed)
        X_t = torch.from_numpy(X)
        y_t = torch.from_numpy(y)
        opt_d = torch.optim.Adam(self.discriminator.parameters(), lr=cfg.learning_rate, betas=cfg.betas)
        opt_g = torch.optim.Adam(self.generator.parameters(), lr=cfg.learning_rate, betas=cfg.betas)
        batches = len(X) // cfg.batch_size
        latent_shape = (cfg.batch_size, cfg.latent_dim, cfg.input_width)

        self.generator.train()
        self.discriminator.train()
        logger.info(f"🔄 Training ConGAN: {len(X)} windows, {cfg.n_classes} classes, "
                    f"{epochs} epochs x {batches} batches")
        started = time.time()
        step = 0
        for epoch in range(epochs):
            order = torch.randperm(len(X), generator=rng)
            for b in range(batches):
                idx = order[b * cfg.batch_size:(b + 1) * cfg.batch_size]
                real, labels = X_t[idx], y_t[idx]

                for _ in range(cfg.critic_iters):
                    z = torch.randn(latent_shape, generator=rng)
                    with torch.no_grad():
                        fake = self.generator(z, labels)
                    d_real = self.discriminator(real, labels).mean()
                    d_fake = self.discriminator(fake, labels).mean()
                    gp = gradient_penalty(self.discriminator, real, fake, labels, generator=rng)
                    critic_loss = d_fake - d_real + cfg.gp_lambda * gp
                    opt_d.zero_grad()
                    critic_loss.backward()
                    opt_d.step()
                    self._check_divergence(critic_loss, epoch, b, d_real, d_fake, gp)

                gen_labels = torch.randint(0, cfg.n_classes, (cfg.batch_size,), generator=rng)
                z = torch.randn(latent_shape, generator=rng)
                generator_loss = -self.discriminator(self.generator(z, gen_labels), gen_labels).mean()
                opt_g.zero_grad()
                generator_loss.backward()
                opt_g.step()

                self.loss_history["critic_loss"].append(float(critic_loss.item()))
                self.loss_history["generator_loss"].append(float(generator_loss.item()))
                self.loss_history["gradient_penalty"].append(float(gp.item()))
                step += 1
                if step % Config.LOG_EVERY == 0:
                    logger.info(f"📊 epoch {epoch + 1}/{epochs} batch {b + 1}/{batches}: "
                                f"critic {critic_loss.item():.4f}, generator {generator_loss.item():.4f}, "
                                f"gp {gp.item():.4f}")
            self.epochs_completed += 1

        logger.info(f"✅ ConGAN training finished in {time.time() - started:.1f}s")
        return self.loss_history

    def _check_divergence(self, critic_loss, epoch, batch, d_real, d_fake, gp):
        value = float(critic_loss.item())
        if not np.isfinite(value) or abs(value) > self.config.divergence_threshold:
            raise TrainingDivergenceError(
                f"critic loss {value:.4g} diverged at epoch {epoch + 1}, batch {batch + 1}",
                {"epoch": epoch + 1, "batch": batch + 1, "critic_loss": value,
                 "d_real": float(d_real.item()), "d_fake": float(d_fake.item()),
                 "gradient_penalty": float(gp.item())})

    # -- sampling

    def generate(self, label: int, n: int, seed: int = Config.DEFAULT_SEED) -> np.ndarray:
        """n windows for one class with fresh latents; batch norm runs on its running statistics"""
        cfg = self.config
        if not 0 <= int(label) < cfg.n_classes:
            raise IndexError(f"label {label} outside [0, {cfg.n_classes})")
        if n <= 0:
            return np.zeros((0, cfg.n_aps, cfg.input_width))
        rng = torch.Generator().manual_seed(int(seed))
        self.generator.eval()
        chunks = []
        with torch.no_grad():
            for start in range(0, n, GENERATE_CHUNK):
                size = min(GENERATE_CHUNK, n - start)
                z = torch.randn((size, cfg.latent_dim, cfg.input_width), generator=rng)
                labels = torch.full((size,), int(label), dtype=torch.long)
                chunks.append(self.generator(z, labels))
        out = torch.cat(chunks).cpu().numpy().astype(np.float64)
        if not np.isfinite(out).all():
            raise TrainingDivergenceError("generator emitted non-finite values", {"label": int(label)})
        return out


# --------------------------------------------------------------------------
# module-level operations

def train(X: np.ndarray, y: np.ndarray, config: GanConfig,
          class_names: Optional[Sequence[str]] = None) -> GanCheckpoint:
    engine = ConGANEngine(config)
    if class_names is not None:
        engine.meta["class_names"] = list(class_names)
    engine.train(X, y)
    return engine.to_checkpoint()


def generate(checkpoint: GanCheckpoint, label: int, n: int, seed: int = Config.DEFAULT_SEED,
             origin: str = "synthetic:congan") -> List[RSSIWindow]:
    if not 0 <= int(label) < checkpoint.n_classes:
        raise IndexError(f"label {label} outside [0, {checkpoint.n_classes})")
    if n <= 0:
        return []
    values = ConGANEngine.from_checkpoint(checkpoint).generate(label, n, seed)
    return [RSSIWindow(v, origin=origin) for v in values]


def _to_numpy(state: Dict[str, torch.Tensor]) -> Dict[str, np.ndarray]:
    return {name: tensor.detach().cpu().numpy().astype(np.float32) for name, tensor in state.items()}


def _to_state_dict(weights: Dict[str, np.ndarray]) -> Dict[str, torch.Tensor]:
    state = OrderedDict()
    for name, arr in weights.items():
        tensor = torch.from_numpy(np.array(arr, dtype=np.float32))
        if name.endswith("num_batches_tracked"):
            tensor = tensor.round().long()
        state[name] = tensor
    return state
