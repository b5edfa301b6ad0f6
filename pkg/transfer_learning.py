"""Pretrain on pooled houses, cut the class/AP dependent layers, fine-tune on one target house."""

import logging
from typing import Dict, List, Mapping, Optional

import numpy as np

from config import Config
from congan_engine import AP_LAYERS, EMBEDDING_LAYERS, ConGANEngine, GanConfig
from exceptions import ShapeMismatchError, TransferError
from rssi_types import GanCheckpoint, HouseDataset

logger = logging.getLogger(__name__)

PROTOCOLS = ("same", "cross")


def modified_layers(source_n_aps: int, target_n_aps: int) -> Dict[str, List[str]]:
    """Layer names surgery replaces; every other tensor is carried over unchanged"""
    layers = {net: list(names) for net, names in EMBEDDING_LAYERS.items()}
    if source_n_aps != target_n_aps:
        for net, names in AP_LAYERS.items():
            layers[net].extend(names)
    return layers


def pretrain_multihouse(datasets: Mapping[str, HouseDataset],
                        config: Optional[GanConfig] = None) -> GanCheckpoint:
    """Train a ConGAN whose classes are the houses; room labels are ignored"""
    if len(datasets) < 2:
        raise TransferError(f"pretraining needs at least 2 houses, got {len(datasets)}")
    house_ids = list(datasets)
    ap_counts = {h: datasets[h].config.n_aps for h in house_ids}
    if len(set(ap_counts.values())) != 1:
        raise TransferError(f"pretraining houses disagree on AP count: {ap_counts}")
    n_aps = ap_counts[house_ids[0]]

    stacks, labels = [], []
    for class_id, house_id in enumerate(house_ids):
        X, _ = datasets[house_id].arrays("fingerprint")
        stacks.append(X)
        labels.append(np.full(len(X), class_id, dtype=np.int64))
    X = np.concatenate(stacks, axis=0)
    y = np.concatenate(labels)

    config = (config or GanConfig()).replace(n_classes=len(house_ids), n_aps=n_aps)
    logger.info(f"🔄 Pretraining on houses {house_ids} ({len(X)} windows, {n_aps} APs)")
    engine = ConGANEngine(config)
    engine.meta["pretrained_on"] = house_ids
    engine.train(X, y)
    return engine.to_checkpoint()


def surgery(pretrained: GanCheckpoint, target_n_classes: int, target_n_aps: Optional[int] = None,
            seed: int = Config.DEFAULT_SEED) -> GanCheckpoint:
    """Fresh label embeddings (and IO layers when the AP count changes); all other weights copied"""
    if target_n_classes < 1:
        raise TransferError(f"target_n_classes must be >= 1, got {target_n_classes}")
    source_n_aps = pretrained.n_aps
    target_n_aps = source_n_aps if target_n_aps is None else int(target_n_aps)
    if target_n_aps < 1:
        raise TransferError(f"target_n_aps must be >= 1, got {target_n_aps}")

    params = dict(pretrained.train_meta.get("hyperparameters", {}))
    params["seed"] = seed
    target_config = GanConfig.from_arch_meta(
        pretrained.arch_meta, n_classes=int(target_n_classes), n_aps=target_n_aps, **params)
    fresh = ConGANEngine(target_config).to_checkpoint()
    replaced = modified_layers(source_n_aps, target_n_aps)

    weights = {}
    for net, source, init in (("generator", pretrained.generator_weights, fresh.generator_weights),
                              ("discriminator", pretrained.discriminator_weights, fresh.discriminator_weights)):
        missing = set(init) - set(source)
        if missing:
            raise TransferError(f"pretrained {net} lacks layers {sorted(missing)}")
        weights[net] = {name: np.array(init[name] if name in replaced[net] else source[name], copy=True)
                        for name in init}

    train_meta = {
        "epochs_completed": 0,
        "seed": seed,
        "loss_history": {"critic_loss": [], "generator_loss": [], "gradient_penalty": []},
        "hyperparameters": target_config.train_params(),
        "surgery": {
            "source_n_classes": pretrained.n_classes,
            "source_n_aps": source_n_aps,
            "modified_layers": replaced,
            "pretrained_on": pretrained.train_meta.get("pretrained_on", []),
        },
    }
    logger.info(f"✅ Surgery: {pretrained.n_classes} -> {target_n_classes} classes, "
                f"{source_n_aps} -> {target_n_aps} APs; replaced {replaced}")
    return GanCheckpoint(weights["generator"], weights["discriminator"],
                         target_config.arch_meta(), train_meta)


def finetune(surgered: GanCheckpoint, dataset: HouseDataset,
             config: Optional[GanConfig] = None, epochs: Optional[int] = None) -> GanCheckpoint:
    """Continue training every weight on the target house's labelled fingerprint windows"""
    if dataset.config.n_classes != surgered.n_classes:
        raise TransferError(f"house {dataset.config.house_id} has {dataset.config.n_classes} rooms, "
                            f"checkpoint has {surgered.n_classes} classes")
    if dataset.config.n_aps != surgered.n_aps:
        raise ShapeMismatchError(f"house {dataset.config.house_id} has {dataset.config.n_aps} APs, "
                                 f"checkpoint has {surgered.n_aps}")
    overrides = config.train_params() if config is not None else {}
    if epochs is not None:
        overrides["epochs"] = epochs
    engine = ConGANEngine.from_checkpoint(surgered, **overrides)
    if engine.config.epochs == 0:
        logger.info("⚠️ Fine-tuning with 0 epochs; checkpoint returned unchanged")
        return surgered

    X, y = dataset.arrays("fingerprint")
    logger.info(f"🔄 Fine-tuning on house {dataset.config.house_id} ({len(X)} windows)")
    engine.meta["finetuned_on"] = dataset.config.house_id
    engine.meta["class_names"] = [room.name for room in dataset.config.rooms]
    engine.train(X, y)
    return engine.to_checkpoint()


def parse_protocol(protocol: str) -> str:
    """Accepts 'same', 'cross' or the CLI form 'protocol:same'"""
    name = protocol.split(":", 1)[1] if protocol.startswith("protocol:") else protocol
    if name not in PROTOCOLS:
        raise TransferError(f"unknown transfer protocol {protocol!r}; choose from {PROTOCOLS}")
    return name


def build_transfer_model(protocol: str, target: HouseDataset, sources: Mapping[str, HouseDataset],
                         config: Optional[GanConfig] = None, seed: int = Config.DEFAULT_SEED,
                         pretrained: Optional[GanCheckpoint] = None) -> GanCheckpoint:
    """Pretrain (unless given) -> surgery -> fine-tune for one target house.

    'same' requires the source houses to share the target's AP count; 'cross'
    accepts any AP count and resizes the IO layers.
    """
    protocol = parse_protocol(protocol)
    if protocol == "same":
        mismatched = {h: ds.config.n_aps for h, ds in sources.items() if ds.config.n_aps != target.config.n_aps}
        if mismatched:
            raise TransferError(f"same-protocol sources must have {target.config.n_aps} APs: {mismatched}")
    config = (config or GanConfig()).replace(seed=seed)
    if pretrained is None:
        pretrained = pretrain_multihouse(sources, config)
    adapted = surgery(pretrained, target.config.n_classes, target.config.n_aps, seed)
    return finetune(adapted, target, config)
