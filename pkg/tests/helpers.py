"""Small synthetic fixtures shared by the test modules."""

import numpy as np

from congan_engine import GanConfig
from rssi_types import HouseConfig, HouseDataset, NormStats, RoomLabel, RSSIWindow


def make_config(n_classes=3, n_aps=4, house_id="toy"):
    rooms = tuple(RoomLabel(i, f"room {i}") for i in range(n_classes))
    return HouseConfig(house_id, n_aps, rooms)


def make_dataset(n_fingerprint=(10, 10, 10), n_free_living=(6, 6, 6), n_aps=4, seed=0,
                 house_id="toy", spread=0.05):
    """Each room has its own AP peaking near 0.9; the rest sit near 0.2"""
    rng = np.random.default_rng(seed)
    config = make_config(max(len(n_fingerprint), len(n_free_living)), n_aps, house_id)

    def windows(counts, partition):
        out = []
        for room_id, count in enumerate(counts):
            centre = np.full((n_aps, 20), 0.2)
            centre[room_id % n_aps] = 0.9
            for k in range(count):
                values = np.clip(centre + rng.normal(0.0, spread, size=centre.shape), 0.0, 1.0)
                origin = f"{partition}:{house_id}-{partition}-{room_id}:{k * 10}"
                out.append((RSSIWindow(values, origin=origin), config.room(room_id)))
        return out

    stats = NormStats(np.full(n_aps, -100.0), np.full(n_aps, -30.0))
    return HouseDataset(config, windows(n_fingerprint, "fingerprint"), windows(n_free_living, "free_living"), stats)


def small_gan_config(**overrides):
    values = dict(n_classes=3, n_aps=4, input_width=20, embed_size=4, latent_dim=8,
                  gen_channels=[8, 8], disc_channels=[8, 8], batch_size=8, critic_iters=2,
                  epochs=2, seed=11)
    values.update(overrides)
    return GanConfig(**values)


SMALL_GRID = {"n_estimators": [10], "max_depth": [None], "min_samples_leaf": [1]}
