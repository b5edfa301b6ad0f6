import io
import json
import logging
import os
import zipfile
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from config import Config
from exceptions import CheckpointError, DatasetError
from rssi_types import (
    ExperimentResult,
    GanCheckpoint,
    HouseConfig,
    HouseDataset,
    NormStats,
    RawHouseData,
    RawStream,
    RSSIWindow,
)

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT_VERSION = 1
_ZIP_EPOCH = (1980, 1, 1, 0, 0, 0)


class DatasetManager:
    """Reads and writes house directories, checkpoint archives and result tables"""

    def __init__(self, root: Optional[str] = None):
        self.root = root or Config.DATA_DIR
        self.raw_dir = os.path.join(self.root, "raw")
        self.processed_dir = os.path.join(self.root, "processed")
        self.checkpoint_dir = os.path.join(self.root, "checkpoints")
        self.results_dir = os.path.join(self.root, "results")
        self.report_dir = os.path.join(self.root, "reports")

    def init_directories(self):
        for path in (self.raw_dir, self.processed_dir, self.checkpoint_dir, self.results_dir, self.report_dir):
            os.makedirs(path, exist_ok=True)
        logger.info(f"✅ Data directories ready under {self.root}")

    def raw_house_dir(self, house_id: str) -> str:
        return os.path.join(self.raw_dir, house_id)

    def dataset_dir(self, house_id: str) -> str:
        return os.path.join(self.processed_dir, house_id)

    def checkpoint_path(self, name: str) -> str:
        return os.path.join(self.checkpoint_dir, f"{name}.ckpt")

    # ------------------------------------------------------------------ raw

    @staticmethod
    def save_raw_house(raw: RawHouseData, house_dir: str) -> List[str]:
        os.makedirs(house_dir, exist_ok=True)
        written = [_write_json(os.path.join(house_dir, "config.json"), raw.config.to_dict())]
        for part in ("fingerprint", "free_living"):
            path = os.path.join(house_dir, f"{part}.csv")
            streams_to_frame(getattr(raw, part), raw.config.n_aps).to_csv(path, index=False)
            written.append(path)
        logger.info(f"📄 Raw house {raw.config.house_id} written to {house_dir}")
        return written

    @staticmethod
    def load_raw_house(house_dir: str) -> RawHouseData:
        config_path = os.path.join(house_dir, "config.json")
        if not os.path.exists(config_path):
            raise DatasetError(f"{house_dir} has no config.json")
        with open(config_path) as f:
            config = HouseConfig.from_dict(json.load(f))
        parts = {}
        for part in ("fingerprint", "free_living"):
            path = os.path.join(house_dir, f"{part}.csv")
            if not os.path.exists(path):
                raise DatasetError(f"{house_dir} has no {part}.csv")
            parts[part] = frame_to_streams(pd.read_csv(path), config.n_aps, part)
        return RawHouseData(config, parts["fingerprint"], parts["free_living"])

    # ------------------------------------------------------------ processed

    @staticmethod
    def save_dataset(ds: HouseDataset, dataset_dir: str) -> List[str]:
        os.makedirs(dataset_dir, exist_ok=True)
        meta = {"config": ds.config.to_dict(),
                "norm_stats": ds.norm_stats.to_dict() if ds.norm_stats is not None else None}
        written = [_write_json(os.path.join(dataset_dir, "config.json"), meta)]
        for part in ("fingerprint", "free_living"):
            X, y = ds.arrays(part)
            origins = np.array([w.origin for w, _ in ds.partition(part)], dtype=str)
            path = os.path.join(dataset_dir, f"{part}.npz")
            with open(path, "wb") as f:
                np.savez(f, values=X, labels=y, origins=origins)
            written.append(path)
        logger.info(f"📄 Dataset {ds.config.house_id} written to {dataset_dir} "
                    f"({len(ds.fingerprint)} fingerprint / {len(ds.free_living)} free-living windows)")
        return written

    @staticmethod
    def load_dataset(dataset_dir: str) -> HouseDataset:
        config_path = os.path.join(dataset_dir, "config.json")
        if not os.path.exists(config_path):
            raise DatasetError(f"{dataset_dir} has no config.json")
        with open(config_path) as f:
            meta = json.load(f)
        config = HouseConfig.from_dict(meta["config"])
        norm_stats = NormStats.from_dict(meta["norm_stats"]) if meta.get("norm_stats") else None
        rooms = {room.id: room for room in config.rooms}
        parts = {}
        for part in ("fingerprint", "free_living"):
            path = os.path.join(dataset_dir, f"{part}.npz")
            if not os.path.exists(path):
                raise DatasetError(f"{dataset_dir} has no {part}.npz")
            with np.load(path, allow_pickle=False) as data:
                X, y, origins = data["values"], data["labels"], data["origins"]
            parts[part] = [(RSSIWindow(X[i], origin=str(origins[i])), rooms[int(y[i])])
                           for i in range(len(y))]
        return HouseDataset(config, parts["fingerprint"], parts["free_living"], norm_stats)

    # ----------------------------------------------------------- checkpoint

    @staticmethod
    def save_checkpoint(ckpt: GanCheckpoint, path: str) -> str:
        directory = os.path.dirname(path)
        if directory:
            os.makedirs(directory, exist_ok=True)
        with open(path, "wb") as f:
            f.write(serialize_checkpoint(ckpt))
        logger.info(f"📄 Checkpoint written to {path}")
        return path

    @staticmethod
    def load_checkpoint(path: str) -> GanCheckpoint:
        if not os.path.exists(path):
            raise CheckpointError(f"checkpoint {path} does not exist")
        with open(path, "rb") as f:
            return deserialize_checkpoint(f.read())

    # -------------------------------------------------------------- results

    @staticmethod
    def results_frame(results: Sequence[ExperimentResult]) -> pd.DataFrame:
        rows = [r.to_row() for r in results]
        df = pd.DataFrame(rows)
        if df.empty:
            return pd.DataFrame(columns=["house_id", "arm", "repeat", "seed", "macro_f1", "mivo_scalar"])
        fixed = ["house_id", "arm", "repeat", "seed", "macro_f1", "mivo_scalar"]
        acc_cols = [c for c in df.columns if c.startswith("acc_")]
        return df[fixed + acc_cols]

    def export_results_to_csv(self, results: Sequence[ExperimentResult], filename: str) -> str:
        """Write results; rows are sorted so reruns are byte-identical"""
        df = self.results_frame(results)
        if not df.empty:
            order = {arm: i for i, arm in enumerate(Config.ARMS)}
            df = (df.assign(_arm_order=df["arm"].map(order))
                    .sort_values(["house_id", "_arm_order", "repeat"], kind="mergesort")
                    .drop(columns="_arm_order"))
        directory = os.path.dirname(filename)
        if directory:
            os.makedirs(directory, exist_ok=True)
        df.to_csv(filename, index=False, float_format="%.6f")
        logger.info(f"📄 Results exported to {filename}")
        return filename


# --------------------------------------------------------------------------
# CSV <-> stream conversion

def streams_to_frame(streams: Sequence[RawStream], n_aps: int) -> pd.DataFrame:
    frames = []
    for stream in streams:
        frame = pd.DataFrame(stream.readings, columns=[f"ap_{i}" for i in range(n_aps)])
        frame.insert(0, "t_unix_s", stream.timestamps)
        frame["room_id"] = pd.Series(stream.labels).astype("Int64").mask(lambda s: s < 0)
        frame["segment_id"] = stream.segment_id
        frames.append(frame)
    if not frames:
        return pd.DataFrame(columns=["t_unix_s"] + [f"ap_{i}" for i in range(n_aps)] + ["room_id", "segment_id"])
    return pd.concat(frames, ignore_index=True)


def frame_to_streams(df: pd.DataFrame, n_aps: int, default_segment: str = "segment") -> List[RawStream]:
    ap_cols = [f"ap_{i}" for i in range(n_aps)]
    missing = [c for c in ["t_unix_s"] + ap_cols + ["room_id"] if c not in df.columns]
    if missing:
        raise DatasetError(f"CSV is missing columns {missing}")
    if "segment_id" not in df.columns:
        df = df.assign(segment_id=default_segment)
    streams = []
    for segment_id, group in df.groupby("segment_id", sort=False):
        labels = pd.to_numeric(group["room_id"], errors="coerce").fillna(-1).astype(np.int64).to_numpy()
        streams.append(RawStream(
            timestamps=group["t_unix_s"].to_numpy(dtype=np.float64),
            readings=group[ap_cols].to_numpy(dtype=np.float64),
            labels=labels,
            segment_id=str(segment_id),
        ))
    return streams


# --------------------------------------------------------------------------
# checkpoint archive

def serialize_checkpoint(ckpt: GanCheckpoint) -> bytes:
    """Zip of meta.json + little-endian float32 tensors; identical input gives identical bytes"""
    index = {}
    payloads: List[Tuple[str, bytes]] = []
    for net, weights in (("generator", ckpt.generator_weights), ("discriminator", ckpt.discriminator_weights)):
        index[net] = {}
        for name in sorted(weights):
            arr = np.asarray(weights[name], dtype="<f4")
            member = f"tensors/{net}/{name}.bin"
            index[net][name] = {"file": member, "shape": list(arr.shape), "dtype": "<f4"}
            payloads.append((member, np.ascontiguousarray(arr).tobytes()))
    meta = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "arch_meta": ckpt.arch_meta,
        "train_meta": ckpt.train_meta,
        "tensors": index,
    }
    meta_bytes = json.dumps(meta, sort_keys=True, indent=2, default=_json_default).encode("utf-8")

    buffer = io.BytesIO()
    with zipfile.ZipFile(buffer, "w", compression=zipfile.ZIP_STORED) as archive:
        for member, data in [("meta.json", meta_bytes)] + payloads:
            info = zipfile.ZipInfo(member, date_time=_ZIP_EPOCH)
            info.compress_type = zipfile.ZIP_STORED
            info.external_attr = 0o644 << 16
            archive.writestr(info, data)
    return buffer.getvalue()


def deserialize_checkpoint(blob: bytes) -> GanCheckpoint:
    try:
        with zipfile.ZipFile(io.BytesIO(blob)) as archive:
            meta = json.loads(archive.read("meta.json").decode("utf-8"))
            if meta.get("format_version") != CHECKPOINT_FORMAT_VERSION:
                raise CheckpointError(f"unsupported checkpoint format {meta.get('format_version')}")
            nets: Dict[str, Dict[str, np.ndarray]] = {}
            for net, entries in meta["tensors"].items():
                nets[net] = {}
                for name, entry in entries.items():
                    raw = archive.read(entry["file"])
                    arr = np.frombuffer(raw, dtype="<f4").reshape(entry["shape"]).astype(np.float32)
                    nets[net][name] = arr
    except (zipfile.BadZipFile, KeyError, ValueError) as e:
        raise CheckpointError(f"corrupt checkpoint archive: {e}") from e
    return GanCheckpoint(
        generator_weights=nets.get("generator", {}),
        discriminator_weights=nets.get("discriminator", {}),
        arch_meta=meta["arch_meta"],
        train_meta=meta["train_meta"],
    )


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, tuple):
        return list(obj)
    raise TypeError(f"{type(obj).__name__} is not JSON serializable")


def _write_json(path: str, payload: Dict) -> str:
    with open(path, "w") as f:
        json.dump(payload, f, indent=2, sort_keys=True, default=_json_default)
    return path
