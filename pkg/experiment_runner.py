import hashlib
import json
import logging
import time
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from augmenters import ExpertAugmentConfig, augment_arrays, class_shortfall
from config import Config
from congan_engine import ConGANEngine
from dataset_manager import DatasetManager
from exceptions import CheckpointError, DatasetError
from localisation_evaluator import (
    average_mivo,
    macro_f1,
    mivo_per_class,
    per_class_accuracy,
    predict_rooms,
    train_localiser,
)
from report_generator import summary_table
from rssi_types import ExperimentResult, GanCheckpoint, HouseDataset

logger = logging.getLogger(__name__)


class ExperimentRunner:
    """Runs the localisation arms over seeded repeats for one house.

    Augmentation touches fingerprint windows only; every repeat is scored on
    the house's free-living windows.
    """

    def __init__(self, target_per_class: int = Config.TARGET_PER_CLASS,
                 n_repeats: int = Config.N_REPEATS,
                 base_seed: Optional[int] = None,
                 checkpoints: Optional[Mapping[str, GanCheckpoint]] = None,
                 expert_config: Optional[ExpertAugmentConfig] = None,
                 param_grid: Optional[Dict[str, List]] = None,
                 cv_folds: int = Config.CV_FOLDS,
                 n_jobs: int = Config.N_JOBS,
                 compute_mivo: bool = True):
        self.target_per_class = target_per_class
        self.n_repeats = n_repeats
        self.base_seed = Config.seed(base_seed)
        self.checkpoints = dict(checkpoints or {})
        self.expert_config = expert_config or ExpertAugmentConfig()
        self.param_grid = param_grid or Config.RF_PARAM_GRID
        self.cv_folds = cv_folds
        self.n_jobs = n_jobs
        self.compute_mivo = compute_mivo
        self._engines: Dict[str, ConGANEngine] = {}

    def repeat_seeds(self) -> List[int]:
        return [self.base_seed + i for i in range(self.n_repeats)]

    def config_hash(self, arm: str) -> str:
        settings = {
            "arm": arm,
            "target_per_class": self.target_per_class,
            "expert": vars(self.expert_config),
            "param_grid": self.param_grid,
            "cv_folds": self.cv_folds,
        }
        return hashlib.sha256(json.dumps(settings, sort_keys=True, default=str).encode()).hexdigest()[:16]

    # ------------------------------------------------------------------

    def _engine(self, arm: str, ds: HouseDataset) -> ConGANEngine:
        if arm not in self.checkpoints:
            raise CheckpointError(f"arm {arm!r} needs a trained checkpoint; none was provided")
        if arm not in self._engines:
            ckpt = self.checkpoints[arm]
            if ckpt.n_classes != ds.config.n_classes or ckpt.n_aps != ds.config.n_aps:
                raise CheckpointError(
                    f"checkpoint for {arm} is {ckpt.n_classes} classes x {ckpt.n_aps} APs; "
                    f"house {ds.config.house_id} is {ds.config.n_classes} x {ds.config.n_aps}")
            self._engines[arm] = ConGANEngine.from_checkpoint(ckpt)
        return self._engines[arm]

    def synthesize(self, ds: HouseDataset, arm: str, seed: int) -> Tuple[np.ndarray, np.ndarray]:
        """Synthetic windows the arm adds to the fingerprint set: max(0, target - n_c) per class"""
        X, y = ds.arrays("fingerprint")
        classes = [room.id for room in ds.config.rooms]
        if arm in ("baseline", "weighted"):
            return X[:0], y[:0]
        if arm in Config.GAN_ARMS:
            engine = self._engine(arm, ds)
            needed = class_shortfall(y, self.target_per_class, classes)
            child_seeds = np.random.SeedSequence(seed).generate_state(len(classes))
            parts = [(engine.generate(c, k, seed=int(s)), np.full(k, c, dtype=np.int64))
                     for (c, k), s in zip(sorted(needed.items()), child_seeds) if k > 0]
            if not parts:
                return X[:0], y[:0]
            return np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts])
        sentinel = ds.norm_stats.sentinel() if ds.norm_stats is not None else None
        X_aug, y_aug = augment_arrays(X, y, arm, self.target_per_class, seed, classes,
                                      sentinel, self.expert_config)
        return X_aug[len(y):], y_aug[len(y):]

    def run_repeat(self, ds: HouseDataset, arm: str, repeat_index: int, seed: int) -> ExperimentResult:
        if arm not in Config.ARMS:
            raise ValueError(f"unknown arm {arm!r}; choose from {Config.ARMS}")
        started = time.time()
        origins = [w.origin for w, _ in ds.fingerprint]
        leaked = [o for o in origins if o.startswith("free_living:")]
        if leaked:
            raise DatasetError(f"free-living window {leaked[0]} found in the training partition")

        X_real, y_real = ds.arrays("fingerprint")
        X_syn, y_syn = self.synthesize(ds, arm, seed)
        X_train = np.concatenate([X_real, X_syn]) if len(X_syn) else X_real
        y_train = np.concatenate([y_real, y_syn]) if len(y_syn) else y_real

        model = train_localiser(X_train, y_train, use_weights=(arm == "weighted"), seed=seed,
                                param_grid=self.param_grid, cv_folds=self.cv_folds, n_jobs=self.n_jobs)
        X_test, y_test = ds.arrays("free_living")
        if len(y_test) == 0:
            raise DatasetError(f"house {ds.config.house_id} has no free-living windows to evaluate on")
        predictions = predict_rooms(model, X_test)

        score = None
        if self.compute_mivo and len(y_syn):
            score = average_mivo(mivo_per_class(X_real, y_real, X_syn, y_syn)).scalar

        result = ExperimentResult(
            house_id=ds.config.house_id,
            method=arm,
            repeat_index=repeat_index,
            macro_f1=macro_f1(predictions, y_test),
            per_class_accuracy=per_class_accuracy(predictions, y_test, ds.config.rooms),
            seed=seed,
            mivo=score,
            wall_time_s=time.time() - started,
            config_hash=self.config_hash(arm),
        )
        logger.info(f"📊 {ds.config.house_id}/{arm} repeat {repeat_index} (seed {seed}): "
                    f"macro F1 {result.macro_f1:.2f}, {len(y_syn)} synthetic windows")
        return result

    def run(self, ds: HouseDataset, arm: str, seeds: Optional[Sequence[int]] = None) -> List[ExperimentResult]:
        seeds = list(seeds) if seeds is not None else self.repeat_seeds()
        logger.info(f"🔄 Running arm {arm} on {ds.config.house_id} for {len(seeds)} repeats")
        return [self.run_repeat(ds, arm, i, seed) for i, seed in enumerate(seeds)]

    def run_arms(self, ds: HouseDataset, arms: Optional[Sequence[str]] = None,
                 seeds: Optional[Sequence[int]] = None) -> List[ExperimentResult]:
        results = []
        for arm in arms or Config.ARMS:
            results.extend(self.run(ds, arm, seeds))
        return results


def run_experiment(ds: HouseDataset, arm: str, seeds: Optional[Sequence[int]] = None,
                   target_per_class: int = Config.TARGET_PER_CLASS,
                   checkpoints: Optional[Mapping[str, GanCheckpoint]] = None,
                   **runner_options) -> Tuple[List[ExperimentResult], pd.DataFrame]:
    """One arm over the given seeds; returns the per-repeat results and the mean±std summary"""
    runner = ExperimentRunner(target_per_class=target_per_class, checkpoints=checkpoints, **runner_options)
    results = runner.run(ds, arm, seeds)
    return results, summary_table(DatasetManager.results_frame(results))
