import argparse
import json
import logging
import os
import sys
from typing import Dict, List, Optional

import numpy as np
import pandas as pd

from augmenters import CLASSIC_METHODS, ExpertAugmentConfig, augment_dataset
from config import Config, setup_logging
from congan_engine import ConGANEngine, GanConfig, generate
from dataset_manager import DatasetManager
from exceptions import PipelineConfigError, RSSIForgeError
from experiment_runner import ExperimentRunner
from house_simulator import load_spec, synthesize_dataset
from localisation_evaluator import fingerprint_minutes_per_class
from pipeline_runner import run_pipeline
from preprocessor import RSSIPreprocessor
from report_generator import ReportGenerator, augmentation_examples, plot_window_grid
from rssi_types import validate_dataset
from transfer_learning import finetune, pretrain_multihouse, surgery

logger = logging.getLogger(__name__)


def _emit(payload: Dict, as_json: bool, text: Optional[str] = None):
    if as_json:
        print(json.dumps(payload, indent=2, sort_keys=True, default=str))
    else:
        print(text if text is not None else "\n".join(f"{k}: {v}" for k, v in payload.items()))


def _gan_config(args, **fields) -> GanConfig:
    """--config JSON, then explicit flags, then dataset-derived fields"""
    overrides = {}
    if getattr(args, "config", None):
        with open(args.config) as f:
            overrides.update(json.load(f))
    overrides.update({name: getattr(args, name) for name in ("epochs", "batch_size", "critic_iters", "learning_rate")
                      if getattr(args, name, None) is not None})
    overrides.update(fields)
    overrides["seed"] = Config.seed(args.seed if args.seed is not None else overrides.get("seed"))
    try:
        return GanConfig(**overrides)
    except TypeError as e:
        raise PipelineConfigError(f"{getattr(args, 'config', None) or 'GAN options'}: {e}") from e


def generated_windows_path(out: str, label: int) -> str:
    """`out` is a directory unless it already names a .npz file"""
    if out.endswith(".npz"):
        return out
    return os.path.join(out, f"label_{label}.npz")


class RSSIForgeCLI:
    """Subcommand handlers; each returns a process exit status"""

    def __init__(self, data_root: Optional[str] = None):
        self.data = DatasetManager(data_root)

    # -- simulate / preprocess / augment

    def simulate(self, args) -> int:
        spec = load_spec(args.spec)
        raw = synthesize_dataset(spec, args.fingerprint_minutes, args.free_living_minutes, seed=Config.seed(args.seed))
        written = self.data.save_raw_house(raw, args.out)
        _emit({"house_id": spec.house_id, "written": written}, args.json)
        return 0

    def preprocess(self, args) -> int:
        raw = self.data.load_raw_house(args.raw)
        preprocessor = RSSIPreprocessor(max_gap_s=args.max_gap, window_s=args.window, overlap=args.overlap)
        ds = preprocessor.preprocess_house(raw)
        violations = validate_dataset(ds)
        for violation in violations:
            logger.warning(f"⚠️ {violation}")
        written = self.data.save_dataset(ds, args.out)
        _emit({"house_id": ds.config.house_id,
               "fingerprint_windows": len(ds.fingerprint),
               "free_living_windows": len(ds.free_living),
               "class_counts": ds.class_counts("fingerprint"),
               "violations": violations,
               "written": written}, args.json)
        return 0 if not violations else 1

    def augment(self, args) -> int:
        ds = self.data.load_dataset(args.dataset)
        expert = ExpertAugmentConfig.variant(args.variant)
        augmented = augment_dataset(ds, args.method, args.target, Config.seed(args.seed), expert)
        written = self.data.save_dataset(augmented, args.out)
        _emit({"house_id": ds.config.house_id, "method": args.method,
               "class_counts": augmented.class_counts("fingerprint"), "written": written}, args.json)
        return 0

    # -- congan

    def congan_train(self, args) -> int:
        ds = self.data.load_dataset(args.dataset)
        X, y = ds.arrays("fingerprint")
        engine = ConGANEngine(_gan_config(args, n_classes=ds.config.n_classes, n_aps=ds.config.n_aps))
        engine.meta["class_names"] = [room.name for room in ds.config.rooms]
        history = engine.train(X, y)
        path = self.data.save_checkpoint(engine.to_checkpoint(), args.out)
        _emit({"checkpoint": path, "batches": len(history["critic_loss"]),
               "final_critic_loss": history["critic_loss"][-1] if history["critic_loss"] else None,
               "final_generator_loss": history["generator_loss"][-1] if history["generator_loss"] else None},
              args.json)
        return 0

    def congan_generate(self, args) -> int:
        ckpt = self.data.load_checkpoint(args.ckpt)
        windows = generate(ckpt, args.label, args.n, seed=Config.seed(args.seed))
        values = np.stack([w.values for w in windows]) if windows else np.zeros((0, ckpt.n_aps, Config.N_TIMESTAMPS))
        path = generated_windows_path(args.out, args.label)
        directory = os.path.dirname(path)
        if directory:
            os.makedirs(directory, exist_ok=True)
        with open(path, "wb") as f:
            np.savez(f, values=values, labels=np.full(len(values), args.label, dtype=np.int64))
        _emit({"written": path, "windows": len(values), "label": args.label}, args.json)
        return 0

    # -- transfer

    def transfer_pretrain(self, args) -> int:
        datasets = {}
        for directory in args.houses.split(","):
            ds = self.data.load_dataset(directory.strip())
            datasets[ds.config.house_id] = ds
        ckpt = pretrain_multihouse(datasets, _gan_config(args))
        path = self.data.save_checkpoint(ckpt, args.out)
        _emit({"checkpoint": path, "houses": list(datasets), "n_aps": ckpt.n_aps}, args.json)
        return 0

    def transfer_adapt(self, args) -> int:
        pretrained = self.data.load_checkpoint(args.ckpt)
        adapted = surgery(pretrained, args.classes, args.aps, seed=Config.seed(args.seed))
        path = self.data.save_checkpoint(adapted, args.out)
        _emit({"checkpoint": path, "modified_layers": adapted.train_meta["surgery"]["modified_layers"]}, args.json)
        return 0

    def transfer_finetune(self, args) -> int:
        adapted = self.data.load_checkpoint(args.ckpt)
        ds = self.data.load_dataset(args.dataset)
        tuned = finetune(adapted, ds, _gan_config(args), epochs=args.epochs)
        path = self.data.save_checkpoint(tuned, args.out)
        _emit({"checkpoint": path, "house_id": ds.config.house_id,
               "epochs_completed": tuned.train_meta.get("epochs_completed", 0)}, args.json)
        return 0

    # -- evaluate

    def evaluate_run(self, args) -> int:
        ds = self.data.load_dataset(args.house)
        checkpoints = {}
        if args.ckpt:
            checkpoints[args.arm] = self.data.load_checkpoint(args.ckpt)
        runner = ExperimentRunner(target_per_class=args.target, n_repeats=args.repeats,
                                  base_seed=args.seed, checkpoints=checkpoints)
        results = runner.run(ds, args.arm)
        if os.path.exists(args.out) and args.append:
            previous = pd.read_csv(args.out)
            frame = pd.concat([previous, DatasetManager.results_frame(results)], ignore_index=True)
            frame.to_csv(args.out, index=False, float_format="%.6f")
        else:
            self.data.export_results_to_csv(results, args.out)
        reporter = ReportGenerator()
        frame = pd.read_csv(args.out)
        _emit(reporter.summary_payload(frame), args.json, reporter.format_summary(frame))
        return 0

    def evaluate_report(self, args) -> int:
        results = pd.read_csv(args.input)
        reporter = ReportGenerator(args.out_dir)
        minutes = None
        rooms = args.minority_rooms.split(",") if args.minority_rooms else None
        paths = {}
        if args.dataset:
            ds = self.data.load_dataset(args.dataset)
            minutes = {ds.config.house_id: fingerprint_minutes_per_class(ds)}
            checkpoints = {os.path.splitext(os.path.basename(p))[0]: self.data.load_checkpoint(p)
                           for p in (args.ckpt or [])}
            room_id = ds.config.room_by_name(args.room).id if args.room else 0
            examples = augmentation_examples(ds, room_id, Config.seed(args.seed), checkpoints)
            paths["windows_plot"] = plot_window_grid(
                examples, os.path.join(reporter.report_dir, f"{ds.config.house_id}_windows.png"))
        paths.update(reporter.generate_report(results, rooms, minutes))
        payload = reporter.summary_payload(results)
        payload["written"] = paths
        _emit(payload, args.json, reporter.format_summary(results))
        return 0

    # -- pipeline

    def pipeline(self, args) -> int:
        manifest = run_pipeline(args.config)
        stages = manifest.get("stages", {})
        _emit({"stages": {name: ("skipped" if entry.get("skipped") else "ran") for name, entry in stages.items()},
               "artifacts": len(manifest.get("artifacts", [])), "seed": manifest.get("seed")}, args.json)
        return 0


def build_parser(cli: RSSIForgeCLI) -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="rssiforge: conditional GAN augmentation for BLE RSSI localisation")
    parser.add_argument("--log-level", default=None, help="Override RSSIFORGE_LOG_LEVEL")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="Seed (RSSIFORGE_SEED wins when set)")
    common.add_argument("--json", action="store_true", help="Machine-readable output")
    gan = argparse.ArgumentParser(add_help=False)
    gan.add_argument("--epochs", type=int, default=None)
    gan.add_argument("--batch-size", type=int, default=None)
    gan.add_argument("--critic-iters", type=int, default=None)
    gan.add_argument("--learning-rate", type=float, default=None)
    gan.add_argument("--config", default=None, help="JSON file of GanConfig fields")

    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="Synthesize a raw house recording")
    p.add_argument("--spec", required=True, help="builtin:<name> or a house spec JSON")
    p.add_argument("--fingerprint-minutes", "--fingerprint-min", dest="fingerprint_minutes", type=float, default=80.0)
    p.add_argument("--free-living-minutes", "--free-living-min", dest="free_living_minutes", type=float, default=60.0)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cli.simulate)

    p = sub.add_parser("preprocess", parents=[common], help="Raw house directory -> windowed dataset")
    p.add_argument("--in", "--raw", dest="raw", required=True, help="Raw house directory")
    p.add_argument("--out", required=True)
    p.add_argument("--max-gap-s", "--max-gap", dest="max_gap", type=float, default=Config.MAX_GAP_S)
    p.add_argument("--window-s", "--window", dest="window", type=float, default=Config.WINDOW_S)
    p.add_argument("--overlap", type=float, default=Config.WINDOW_OVERLAP)
    p.set_defaults(handler=cli.preprocess)

    p = sub.add_parser("augment", parents=[common], help="Classic augmentation of a dataset's fingerprint windows")
    p.add_argument("--dataset", "--in", dest="dataset", required=True)
    p.add_argument("--method", choices=CLASSIC_METHODS, required=True)
    p.add_argument("--variant", choices=["noise", "drop", "noise+drop"], default="noise+drop")
    p.add_argument("--target", type=int, default=Config.TARGET_PER_CLASS)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cli.augment)

    congan = sub.add_parser("congan", help="Train or sample a ConGAN").add_subparsers(dest="action", required=True)
    p = congan.add_parser("train", parents=[common, gan])
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cli.congan_train)
    p = congan.add_parser("generate", parents=[common])
    p.add_argument("--ckpt", required=True)
    p.add_argument("--label", type=int, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--out", required=True, help="Output directory (or a .npz file path)")
    p.set_defaults(handler=cli.congan_generate)

    transfer = sub.add_parser("transfer", help="Pretrain, adapt and fine-tune").add_subparsers(dest="action", required=True)
    p = transfer.add_parser("pretrain", parents=[common, gan])
    p.add_argument("--houses", required=True, help="Comma-separated processed house directories")
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cli.transfer_pretrain)
    p = transfer.add_parser("adapt", parents=[common])
    p.add_argument("--ckpt", required=True)
    p.add_argument("--classes", type=int, required=True)
    p.add_argument("--aps", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cli.transfer_adapt)
    p = transfer.add_parser("finetune", parents=[common, gan])
    p.add_argument("--ckpt", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cli.transfer_finetune)

    evaluate = sub.add_parser("evaluate", help="Localisation experiments and reports").add_subparsers(
        dest="action", required=True)
    p = evaluate.add_parser("run", parents=[common])
    p.add_argument("--house", required=True, help="Processed house directory")
    p.add_argument("--arm", choices=Config.ARMS, required=True)
    p.add_argument("--repeats", type=int, default=Config.N_REPEATS)
    p.add_argument("--target", type=int, default=Config.TARGET_PER_CLASS)
    p.add_argument("--ckpt", default=None, help="Checkpoint for GAN arms")
    p.add_argument("--append", action="store_true", help="Append to an existing results CSV")
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cli.evaluate_run)
    p = evaluate.add_parser("report", parents=[common])
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out-dir", default=None)
    p.add_argument("--dataset", default=None, help="Processed house directory for window plots and minutes")
    p.add_argument("--ckpt", action="append", help="Checkpoint(s) to include in the window plot")
    p.add_argument("--room", default=None, help="Room name to plot")
    p.add_argument("--minority-rooms", default=None, help="Comma-separated room names for the minority table")
    p.set_defaults(handler=cli.evaluate_report)

    p = sub.add_parser("pipeline", parents=[common], help="Run the staged pipeline from a JSON config")
    p.add_argument("--config", default=None)
    p.set_defaults(handler=cli.pipeline)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    cli = RSSIForgeCLI()
    parser = build_parser(cli)
    args = parser.parse_args(argv)
    setup_logging(args.log_level)
    try:
        return args.handler(args)
    except RSSIForgeError as e:
        logger.error(f"❌ {e}")
        return 1
    except (OSError, KeyError, ValueError) as e:
        logger.error(f"❌ {type(e).__name__}: {e}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
