"""Staged, checksum-aware pipeline: simulate -> preprocess -> pretrain -> adapt -> finetune -> augment -> evaluate -> report."""

import hashlib
import json
import logging
import os
from typing import Callable, Dict, List, Literal, Optional

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from augmenters import ExpertAugmentConfig
from config import Config
from congan_engine import ConGANEngine, GanConfig
from dataset_manager import DatasetManager
from exceptions import PipelineConfigError, RSSIForgeError, StageError
from experiment_runner import ExperimentRunner
from house_simulator import load_spec, synthesize_dataset
from localisation_evaluator import fingerprint_minutes_per_class
from preprocessor import RSSIPreprocessor
from report_generator import ReportGenerator, augmentation_examples, plot_window_grid
from transfer_learning import finetune, pretrain_multihouse, surgery

logger = logging.getLogger(__name__)

STAGES = ("simulate", "preprocess", "pretrain", "adapt", "finetune", "augment", "evaluate", "report")
StageName = Literal["simulate", "preprocess", "pretrain", "adapt", "finetune", "augment", "evaluate", "report"]
PROTOCOL_ARMS = {"same": "t_congan", "cross": "t_congan_sphere"}
MANIFEST_NAME = "manifest.json"


# --------------------------------------------------------------------------
# settings

class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class SimulateSettings(_Section):
    houses: List[str] = Field(default_factory=lambda: Config.TARGET_HOUSES + Config.SOURCE_HOUSES)
    fingerprint_minutes: float = Field(80.0, gt=0)
    free_living_minutes: float = Field(60.0, gt=0)


class PreprocessSettings(_Section):
    max_gap_s: float = Field(Config.MAX_GAP_S, ge=0)
    window_s: float = Field(Config.WINDOW_S, gt=0)
    overlap: float = Field(Config.WINDOW_OVERLAP, ge=0, lt=1)


class CongganSettings(_Section):
    epochs: int = Field(300, ge=0)
    batch_size: int = Field(48, gt=0)
    critic_iters: int = Field(10, gt=0)
    learning_rate: float = Field(0.002077, gt=0)
    gp_lambda: float = Field(10.0, ge=0)
    latent_dim: int = Field(100, gt=0)
    embed_size: int = Field(100, gt=0)

    def gan_config(self, seed: int) -> GanConfig:
        return GanConfig(seed=seed, **self.model_dump())


class TransferSettings(_Section):
    same_sources: List[str] = Field(default_factory=lambda: list(Config.TARGET_HOUSES))
    cross_sources: List[str] = Field(default_factory=lambda: list(Config.SOURCE_HOUSES))
    finetune_epochs: Optional[int] = Field(None, ge=0)

    @field_validator("same_sources", "cross_sources")
    @classmethod
    def _at_least_two(cls, houses: List[str]) -> List[str]:
        if houses and len(houses) < 2:
            raise ValueError("pretraining needs at least 2 houses (or an empty list to skip the protocol)")
        return houses


class AugmentSettings(_Section):
    target_per_class: int = Field(Config.TARGET_PER_CLASS, ge=0)
    expert_variant: Literal["noise", "drop", "noise+drop"] = "noise+drop"


class EvaluateSettings(_Section):
    targets: List[str] = Field(default_factory=lambda: list(Config.TARGET_HOUSES))
    arms: List[str] = Field(default_factory=lambda: list(Config.ARMS))
    repeats: int = Field(Config.N_REPEATS, gt=0)
    cv_folds: int = Field(Config.CV_FOLDS, ge=2)
    param_grid: Dict[str, List[Optional[int]]] = Field(default_factory=lambda: dict(Config.RF_PARAM_GRID))
    minority_rooms: Optional[List[str]] = None

    @field_validator("arms")
    @classmethod
    def _known_arms(cls, arms: List[str]) -> List[str]:
        unknown = [a for a in arms if a not in Config.ARMS]
        if unknown:
            raise ValueError(f"unknown arms {unknown}; choose from {Config.ARMS}")
        return arms


class PipelineSettings(_Section):
    seed: int = Config.DEFAULT_SEED
    data_dir: str = Config.DATA_DIR
    stages: List[StageName] = Field(default_factory=lambda: list(STAGES))
    simulate: SimulateSettings = Field(default_factory=SimulateSettings)
    preprocess: PreprocessSettings = Field(default_factory=PreprocessSettings)
    congan: CongganSettings = Field(default_factory=CongganSettings)
    transfer: TransferSettings = Field(default_factory=TransferSettings)
    augment: AugmentSettings = Field(default_factory=AugmentSettings)
    evaluate: EvaluateSettings = Field(default_factory=EvaluateSettings)


def _format_validation_error(error: ValidationError) -> str:
    return "; ".join(f"{'.'.join(str(p) for p in e['loc'])}: {e['msg']}" for e in error.errors())


def parse_settings(payload: Dict) -> PipelineSettings:
    try:
        return PipelineSettings.model_validate(payload)
    except ValidationError as e:
        raise PipelineConfigError(_format_validation_error(e)) from e


def load_settings(path: str) -> PipelineSettings:
    try:
        with open(path) as f:
            payload = json.load(f)
    except FileNotFoundError as e:
        raise PipelineConfigError(f"pipeline config {path} does not exist") from e
    except json.JSONDecodeError as e:
        raise PipelineConfigError(f"{path}: invalid JSON ({e})") from e
    return parse_settings(payload)


def sha256_file(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()


def _hash_payload(payload) -> str:
    return hashlib.sha256(json.dumps(payload, sort_keys=True, default=str).encode()).hexdigest()


def _house_name(reference: str) -> str:
    if reference.startswith("builtin:"):
        return reference.split(":", 1)[1]
    return os.path.splitext(os.path.basename(reference))[0]


def _spec_reference(house: str) -> str:
    return house if (house.startswith("builtin:") or house.endswith(".json")) else f"builtin:{house}"


# --------------------------------------------------------------------------
# runner

class PipelineRunner:
    def __init__(self, settings: PipelineSettings):
        self.settings = settings
        self.seed = Config.seed(settings.seed)
        self.data = DatasetManager(settings.data_dir)
        self.manifest_path = os.path.join(settings.data_dir, MANIFEST_NAME)
        self.manifest = self._load_manifest()
        self._handlers: Dict[str, Callable[[], List[str]]] = {
            "simulate": self.run_simulate,
            "preprocess": self.run_preprocess,
            "pretrain": self.run_pretrain,
            "adapt": self.run_adapt,
            "finetune": self.run_finetune,
            "augment": self.run_augment,
            "evaluate": self.run_evaluate,
            "report": self.run_report,
        }

    # -- manifest

    def _load_manifest(self) -> Dict:
        if os.path.exists(self.manifest_path):
            try:
                with open(self.manifest_path) as f:
                    return json.load(f)
            except json.JSONDecodeError:
                logger.warning(f"⚠️ Ignoring unreadable manifest {self.manifest_path}")
        return {"stages": {}}

    def _write_manifest(self):
        os.makedirs(self.settings.data_dir, exist_ok=True)
        self.manifest["seed"] = self.seed
        self.manifest["config_hash"] = _hash_payload(self.settings.model_dump())
        self.manifest["seeding"] = self._seeding()
        self.manifest["artifacts"] = sorted(
            {path for entry in self.manifest["stages"].values() for path in entry.get("outputs", {})})
        with open(self.manifest_path, "w") as f:
            json.dump(self.manifest, f, indent=2, sort_keys=True)

    def _seeding(self) -> Dict:
        """GAN weights are trained once per run at the run seed; each repeat reseeds everything downstream"""
        ev = self.settings.evaluate
        return {
            "repeat_seeds": [self.seed + i for i in range(ev.repeats)],
            "per_repeat": ["classic augmentation", "gan generation", "localiser training"],
            "per_run": {"seed": self.seed, "gan_training": [arm for arm in ev.arms if arm in Config.GAN_ARMS]},
        }

    def _rel(self, path: str) -> str:
        return os.path.relpath(path, self.settings.data_dir)

    def _abs(self, rel: str) -> str:
        return os.path.join(self.settings.data_dir, rel)

    def _stage_key(self, stage: str) -> str:
        """Hash of the settings that shape a stage plus the checksums of everything before it"""
        upstream = {}
        for name in STAGES[:STAGES.index(stage)]:
            entry = self.manifest["stages"].get(name)
            if entry:
                upstream[name] = entry.get("outputs", {})
        section = {
            "simulate": ["simulate"],
            "preprocess": ["preprocess"],
            "pretrain": ["congan", "transfer"],
            "adapt": ["transfer", "evaluate"],
            "finetune": ["congan", "transfer", "evaluate"],
            "augment": ["congan", "augment", "evaluate"],
            "evaluate": ["augment", "evaluate"],
            "report": ["evaluate"],
        }[stage]
        settings = {name: getattr(self.settings, name).model_dump() for name in section}
        return _hash_payload({"stage": stage, "seed": self.seed, "settings": settings, "upstream": upstream})

    def is_current(self, stage: str) -> bool:
        entry = self.manifest["stages"].get(stage)
        if not entry or entry.get("key") != self._stage_key(stage):
            return False
        for rel, digest in entry.get("outputs", {}).items():
            path = self._abs(rel)
            if not os.path.exists(path) or sha256_file(path) != digest:
                return False
        return True

    # -- driver

    def run(self) -> Dict:
        declared = [s for s in STAGES if s in set(self.settings.stages)]
        logger.info(f"🔄 Pipeline stages: {declared or 'none'} (seed {self.seed})")
        for stage in declared:
            if self.is_current(stage):
                logger.info(f"✅ Stage {stage} is current; skipping")
                self.manifest["stages"][stage]["skipped"] = True
                continue
            try:
                outputs = self._handlers[stage]()
            except RSSIForgeError as e:
                self._write_manifest()
                raise StageError(stage, str(e)) from e
            except (OSError, ValueError, KeyError, RuntimeError) as e:
                self._write_manifest()
                raise StageError(stage, f"{type(e).__name__}: {e}") from e
            self.manifest["stages"][stage] = {
                "key": self._stage_key(stage),
                "seed": self.seed,
                "outputs": {self._rel(p): sha256_file(p) for p in sorted(set(outputs))},
                "skipped": False,
            }
            logger.info(f"✅ Stage {stage} wrote {len(outputs)} artifacts")
        self._write_manifest()
        logger.info(f"📄 Manifest written to {self.manifest_path}")
        return self.manifest

    # -- stages

    def _houses(self) -> List[str]:
        return [_house_name(h) for h in self.settings.simulate.houses]

    def _dataset(self, house: str):
        return self.data.load_dataset(self.data.dataset_dir(house))

    def _gan_config(self) -> GanConfig:
        return self.settings.congan.gan_config(self.seed)

    def run_simulate(self) -> List[str]:
        cfg = self.settings.simulate
        outputs = []
        for i, reference in enumerate(cfg.houses):
            spec = load_spec(_spec_reference(reference))
            raw = synthesize_dataset(spec, cfg.fingerprint_minutes, cfg.free_living_minutes, seed=self.seed + i)
            outputs.extend(self.data.save_raw_house(raw, self.data.raw_house_dir(_house_name(reference))))
        return outputs

    def run_preprocess(self) -> List[str]:
        cfg = self.settings.preprocess
        preprocessor = RSSIPreprocessor(max_gap_s=cfg.max_gap_s, window_s=cfg.window_s, overlap=cfg.overlap)
        outputs = []
        for house in self._houses():
            raw = self.data.load_raw_house(self.data.raw_house_dir(house))
            outputs.extend(self.data.save_dataset(preprocessor.preprocess_house(raw), self.data.dataset_dir(house)))
        return outputs

    def _protocols(self) -> Dict[str, List[str]]:
        transfer = self.settings.transfer
        arms = set(self.settings.evaluate.arms)
        sources = {"same": transfer.same_sources, "cross": transfer.cross_sources}
        return {p: houses for p, houses in sources.items() if houses and PROTOCOL_ARMS[p] in arms}

    def run_pretrain(self) -> List[str]:
        outputs = []
        for protocol, houses in self._protocols().items():
            ckpt = pretrain_multihouse({h: self._dataset(h) for h in houses}, self._gan_config())
            outputs.append(self.data.save_checkpoint(ckpt, self.data.checkpoint_path(f"pretrain_{protocol}")))
        return outputs

    def run_adapt(self) -> List[str]:
        outputs = []
        for protocol in self._protocols():
            pretrained = self.data.load_checkpoint(self.data.checkpoint_path(f"pretrain_{protocol}"))
            for target in self.settings.evaluate.targets:
                cfg = self._dataset(target).config
                adapted = surgery(pretrained, cfg.n_classes, cfg.n_aps, seed=self.seed)
                name = f"{target}_{PROTOCOL_ARMS[protocol]}_adapted"
                outputs.append(self.data.save_checkpoint(adapted, self.data.checkpoint_path(name)))
        return outputs

    def run_finetune(self) -> List[str]:
        outputs = []
        epochs = self.settings.transfer.finetune_epochs
        for protocol in self._protocols():
            arm = PROTOCOL_ARMS[protocol]
            for target in self.settings.evaluate.targets:
                adapted = self.data.load_checkpoint(self.data.checkpoint_path(f"{target}_{arm}_adapted"))
                tuned = finetune(adapted, self._dataset(target), self._gan_config(), epochs=epochs)
                outputs.append(self.data.save_checkpoint(tuned, self.data.checkpoint_path(f"{target}_{arm}")))
        return outputs

    def run_augment(self) -> List[str]:
        """Train the from-scratch ConGAN per target and keep example windows of every augmenter per room"""
        outputs = []
        for target in self.settings.evaluate.targets:
            ds = self._dataset(target)
            if "congan" in self.settings.evaluate.arms:
                X, y = ds.arrays("fingerprint")
                config = self._gan_config().replace(n_classes=ds.config.n_classes, n_aps=ds.config.n_aps)
                engine = ConGANEngine(config)
                engine.meta["class_names"] = [room.name for room in ds.config.rooms]
                engine.train(X, y)
                outputs.append(self.data.save_checkpoint(
                    engine.to_checkpoint(), self.data.checkpoint_path(f"{target}_congan")))

            checkpoints = self._checkpoints_for(target)
            examples = {}
            for room_id, count in ds.class_counts("fingerprint").items():
                if count == 0:
                    continue
                for name, window in augmentation_examples(ds, room_id, self.seed, checkpoints).items():
                    examples[f"{room_id}__{name}"] = window
            path = self._examples_path(target)
            os.makedirs(os.path.dirname(path), exist_ok=True)
            with open(path, "wb") as f:
                np.savez(f, **dict(sorted(examples.items())))
            outputs.append(path)
        return outputs

    def _checkpoints_for(self, target: str) -> Dict:
        checkpoints = {}
        for arm in Config.GAN_ARMS:
            if arm not in self.settings.evaluate.arms:
                continue
            path = self.data.checkpoint_path(f"{target}_{arm}")
            if os.path.exists(path):
                checkpoints[arm] = self.data.load_checkpoint(path)
        return checkpoints

    def run_evaluate(self) -> List[str]:
        ev = self.settings.evaluate
        results = []
        for target in ev.targets:
            runner = ExperimentRunner(
                target_per_class=self.settings.augment.target_per_class,
                n_repeats=ev.repeats,
                base_seed=self.seed,
                checkpoints=self._checkpoints_for(target),
                expert_config=ExpertAugmentConfig.variant(self.settings.augment.expert_variant),
                param_grid=ev.param_grid,
                cv_folds=ev.cv_folds,
            )
            results.extend(runner.run_arms(self._dataset(target), ev.arms))
        path = os.path.join(self.data.results_dir, "results.csv")
        return [self.data.export_results_to_csv(results, path)]

    def run_report(self) -> List[str]:
        ev = self.settings.evaluate
        results = pd.read_csv(os.path.join(self.data.results_dir, "results.csv"))
        minutes = {}
        for target in ev.targets:
            ds = self._dataset(target)
            minutes[ds.config.house_id] = fingerprint_minutes_per_class(ds)
        reporter = ReportGenerator(self.data.report_dir)
        outputs = list(reporter.generate_report(results, ev.minority_rooms, minutes).values())

        summary_path = os.path.join(self.data.report_dir, "summary.txt")
        with open(summary_path, "w") as f:
            f.write(reporter.format_summary(results) + "\n")
        outputs.append(summary_path)

        for target in ev.targets:
            path = self._examples_path(target)
            if not os.path.exists(path):
                continue
            counts = self._dataset(target).class_counts("fingerprint")
            rarest = min((c for c in counts if counts[c] > 0), key=lambda c: (counts[c], c))
            prefix = f"{rarest}__"
            with np.load(path) as data:
                windows = {k[len(prefix):]: data[k] for k in data.files if k.startswith(prefix)}
            if windows:
                outputs.append(plot_window_grid(windows, os.path.join(self.data.report_dir, f"{target}_windows.png")))
        return outputs

    def _examples_path(self, target: str) -> str:
        return os.path.join(self.data.processed_dir, "augment_examples", f"{target}.npz")


def run_pipeline(config_path: Optional[str] = None, settings: Optional[PipelineSettings] = None) -> Dict:
    """Validate the config, run the declared stages, return the manifest"""
    if settings is None:
        settings = load_settings(config_path) if config_path else PipelineSettings()
    return PipelineRunner(settings).run()
