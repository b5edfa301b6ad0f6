import logging
from dataclasses import dataclass
from typing import Dict, Iterable, Optional, Sequence, Tuple

import numpy as np
from imblearn.over_sampling import SMOTE, RandomOverSampler

from config import Config
from exceptions import InsufficientSamplesError
from rssi_types import HouseDataset, RSSIWindow, arrays_to_windows

logger = logging.getLogger(__name__)

CLASSIC_METHODS = ("oversample", "smote", "expert")
DROP_MODES = (None, "random_ap", "periodic")


@dataclass
class ExpertAugmentConfig:
    """Noise and AP-drop settings for the domain-expert augmenter"""
    noise_sigma: float = Config.EXPERT_NOISE_SIGMA
    drop_mode: Optional[str] = "random_ap"
    drop_param: float = Config.EXPERT_DROP_FRACTION

    def __post_init__(self):
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        if self.drop_mode not in DROP_MODES:
            raise ValueError(f"drop_mode must be one of {DROP_MODES}")

    @classmethod
    def variant(cls, name: str) -> "ExpertAugmentConfig":
        """'noise', 'drop' (periodic) or 'noise+drop' (the experiment default)"""
        if name == "noise":
            return cls(drop_mode=None, drop_param=0.0)
        if name == "drop":
            return cls(noise_sigma=0.0, drop_mode="periodic", drop_param=Config.EXPERT_DROP_PERIOD)
        if name == "noise+drop":
            return cls()
        raise ValueError(f"unknown expert variant {name!r}")


def class_shortfall(y: np.ndarray, target_per_class: int,
                    classes: Optional[Iterable[int]] = None) -> Dict[int, int]:
    """Windows each class still needs to reach the target; raises for classes with no windows"""
    y = np.asarray(y, dtype=np.int64)
    classes = sorted(set(int(c) for c in (classes if classes is not None else np.unique(y))))
    counts = {c: int(np.sum(y == c)) for c in classes}
    empty = [c for c, n in counts.items() if n == 0]
    if empty:
        raise InsufficientSamplesError(f"class {empty[0]} has zero samples to augment from", empty[0])
    return {c: max(0, target_per_class - n) for c, n in counts.items()}


def _flatten(X: np.ndarray) -> np.ndarray:
    return np.asarray(X, dtype=np.float64).reshape(len(X), -1)


def random_oversample(X: np.ndarray, y: np.ndarray, target_per_class: int = Config.TARGET_PER_CLASS,
                      seed: int = Config.DEFAULT_SEED,
                      classes: Optional[Iterable[int]] = None) -> Tuple[np.ndarray, np.ndarray]:
    """Duplicate windows uniformly with replacement; the first len(X) rows of the result are the originals"""
    needed = class_shortfall(y, target_per_class, classes)
    strategy = {c: int(np.sum(y == c)) + k for c, k in needed.items() if k > 0}
    if not strategy:
        return np.asarray(X, dtype=np.float64), np.asarray(y, dtype=np.int64)
    sampler = RandomOverSampler(sampling_strategy=strategy, random_state=seed)
    flat, labels = sampler.fit_resample(_flatten(X), np.asarray(y, dtype=np.int64))
    logger.info(f"📊 Random oversampling added {len(labels) - len(y)} windows")
    return flat.reshape((-1,) + X.shape[1:]), labels


def smote(X: np.ndarray, y: np.ndarray, k_neighbors: int = Config.SMOTE_K_NEIGHBORS,
          target_per_class: int = Config.TARGET_PER_CLASS, seed: int = Config.DEFAULT_SEED,
          classes: Optional[Iterable[int]] = None) -> Tuple[np.ndarray, np.ndarray]:
    """Interpolate toward one of the k nearest same-class neighbours; originals come first"""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    needed = class_shortfall(y, target_per_class, classes)
    flat = _flatten(X)
    seeds = np.random.SeedSequence(seed).generate_state(max(1, len(needed)))

    new_X, new_y = [flat], [y]
    for i, (c, k) in enumerate(sorted(needed.items())):
        if k == 0:
            continue
        n_c = int(np.sum(y == c))
        if n_c < 2:
            logger.warning(f"⚠️ Class {c} has a single window; SMOTE falls back to duplication")
            new_X.append(np.repeat(flat[y == c], k, axis=0))
            new_y.append(np.full(k, c, dtype=np.int64))
            continue
        sampler = SMOTE(sampling_strategy={c: n_c + k},
                        k_neighbors=min(k_neighbors, n_c - 1),
                        random_state=int(seeds[i]))
        out_X, out_y = sampler.fit_resample(flat, y)
        new_X.append(out_X[len(y):])
        new_y.append(out_y[len(y):])

    out_X = np.clip(np.vstack(new_X), 0.0, 1.0)
    out_y = np.concatenate(new_y)
    logger.info(f"📊 SMOTE added {len(out_y) - len(y)} windows")
    return out_X.reshape((-1,) + X.shape[1:]), out_y


def expert_augment(window: np.ndarray, noise_sigma: float = Config.EXPERT_NOISE_SIGMA,
                   drop_mode: Optional[str] = "random_ap",
                   drop_param: float = Config.EXPERT_DROP_FRACTION,
                   seed: int = Config.DEFAULT_SEED,
                   sentinel: Optional[np.ndarray] = None,
                   rng: Optional[np.random.Generator] = None) -> RSSIWindow:
    """Gaussian noise clamped to [0, 1], then AP rows or periodic columns set to the normalized sentinel.

    sentinel is the per-AP image of -120 dBm (NormStats.sentinel()); 0.0 when omitted.
    """
    values = np.asarray(window.values if isinstance(window, RSSIWindow) else window, dtype=np.float64)
    n_aps, width = values.shape
    if noise_sigma < 0:
        raise ValueError("noise_sigma must be >= 0")
    rng = rng if rng is not None else np.random.default_rng(seed)
    sentinel = np.zeros(n_aps) if sentinel is None else np.asarray(sentinel, dtype=np.float64)

    out = values.copy()
    if noise_sigma > 0:
        out = np.clip(out + rng.normal(0.0, noise_sigma, size=out.shape), 0.0, 1.0)

    if drop_mode == "random_ap":
        n_drop = int(round(drop_param * n_aps))
        if n_drop < 0 or n_drop >= n_aps:
            raise ValueError(f"drop_param {drop_param} drops {n_drop} of {n_aps} APs; at least one must remain")
        rows = rng.choice(n_aps, size=n_drop, replace=False)
        out[rows, :] = sentinel[rows, None]
    elif drop_mode == "periodic":
        period = int(drop_param)
        if period < 2:
            raise ValueError(f"periodic drop needs a period >= 2, got {drop_param}")
        cols = np.arange(period - 1, width, period)
        out[:, cols] = sentinel[:, None]
    elif drop_mode is not None:
        raise ValueError(f"drop_mode must be one of {DROP_MODES}")
    return RSSIWindow(out, origin="synthetic:expert")


def expert_oversample(X: np.ndarray, y: np.ndarray, target_per_class: int = Config.TARGET_PER_CLASS,
                      seed: int = Config.DEFAULT_SEED,
                      config: Optional[ExpertAugmentConfig] = None,
                      sentinel: Optional[np.ndarray] = None,
                      classes: Optional[Iterable[int]] = None) -> Tuple[np.ndarray, np.ndarray]:
    """Perturbed copies of randomly chosen same-class windows; originals come first"""
    config = config or ExpertAugmentConfig()
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    needed = class_shortfall(y, target_per_class, classes)
    rng = np.random.default_rng(seed)

    new_X, new_y = [X], [y]
    for c, k in sorted(needed.items()):
        if k == 0:
            continue
        sources = X[rng.choice(np.flatnonzero(y == c), size=k, replace=True)]
        new_X.append(np.stack([
            expert_augment(src, config.noise_sigma, config.drop_mode, config.drop_param,
                           sentinel=sentinel, rng=rng).values
            for src in sources
        ]))
        new_y.append(np.full(k, c, dtype=np.int64))
    out_y = np.concatenate(new_y)
    logger.info(f"📊 Domain-expert augmentation added {len(out_y) - len(y)} windows")
    return np.concatenate(new_X, axis=0), out_y


def augment_arrays(X: np.ndarray, y: np.ndarray, method: str,
                   target_per_class: int = Config.TARGET_PER_CLASS,
                   seed: int = Config.DEFAULT_SEED,
                   classes: Optional[Sequence[int]] = None,
                   sentinel: Optional[np.ndarray] = None,
                   expert_config: Optional[ExpertAugmentConfig] = None,
                   k_neighbors: int = Config.SMOTE_K_NEIGHBORS) -> Tuple[np.ndarray, np.ndarray]:
    if method == "oversample":
        return random_oversample(X, y, target_per_class, seed, classes)
    if method == "smote":
        return smote(X, y, k_neighbors, target_per_class, seed, classes)
    if method == "expert":
        return expert_oversample(X, y, target_per_class, seed, expert_config, sentinel, classes)
    raise ValueError(f"unknown augmentation method {method!r}; choose from {CLASSIC_METHODS}")


def augment_dataset(ds: HouseDataset, method: str, target_per_class: int = Config.TARGET_PER_CLASS,
                    seed: int = Config.DEFAULT_SEED,
                    expert_config: Optional[ExpertAugmentConfig] = None) -> HouseDataset:
    """Augment the fingerprint partition only; free-living windows pass through untouched"""
    X, y = ds.arrays("fingerprint")
    sentinel = ds.norm_stats.sentinel() if ds.norm_stats is not None else None
    classes = [room.id for room in ds.config.rooms]
    X_aug, y_aug = augment_arrays(X, y, method, target_per_class, seed, classes, sentinel, expert_config)
    synthetic = arrays_to_windows(X_aug[len(y):], y_aug[len(y):], ds.config, origin=f"synthetic:{method}")
    return HouseDataset(ds.config, list(ds.fingerprint) + synthetic, ds.free_living, ds.norm_stats)
