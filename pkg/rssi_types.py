import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from config import Config

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RoomLabel:
    """Room-level class; ids are dense per house"""
    id: int
    name: str


@dataclass(frozen=True)
class HouseConfig:
    house_id: str
    n_aps: int
    rooms: Tuple[RoomLabel, ...]
    sample_rate_hz: float = Config.SAMPLE_RATE_HZ

    def __post_init__(self):
        object.__setattr__(self, "rooms", tuple(self.rooms))

    @property
    def n_classes(self) -> int:
        return len(self.rooms)

    def room(self, room_id: int) -> RoomLabel:
        for room in self.rooms:
            if room.id == room_id:
                return room
        raise KeyError(f"house {self.house_id} has no room id {room_id}")

    def room_by_name(self, name: str) -> RoomLabel:
        for room in self.rooms:
            if room.name == name:
                return room
        raise KeyError(f"house {self.house_id} has no room named {name!r}")

    def to_dict(self) -> Dict:
        return {
            "house_id": self.house_id,
            "n_aps": self.n_aps,
            "sample_rate_hz": self.sample_rate_hz,
            "rooms": [{"id": r.id, "name": r.name} for r in self.rooms],
        }

    @classmethod
    def from_dict(cls, data: Dict) -> "HouseConfig":
        return cls(
            house_id=str(data["house_id"]),
            n_aps=int(data["n_aps"]),
            sample_rate_hz=float(data.get("sample_rate_hz", Config.SAMPLE_RATE_HZ)),
            rooms=tuple(RoomLabel(int(r["id"]), str(r["name"])) for r in data["rooms"]),
        )


@dataclass(frozen=True, eq=False)
class NormStats:
    """Per-AP (min_dbm, max_dbm) fitted on fingerprint data"""
    min_dbm: np.ndarray
    max_dbm: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.min_dbm, dtype=np.float64).copy()
        hi = np.asarray(self.max_dbm, dtype=np.float64).copy()
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "min_dbm", lo)
        object.__setattr__(self, "max_dbm", hi)

    @property
    def n_aps(self) -> int:
        return int(self.min_dbm.shape[0])

    @property
    def degenerate(self) -> np.ndarray:
        return self.max_dbm == self.min_dbm

    def normalize(self, values: np.ndarray) -> np.ndarray:
        """values: (..., n_aps) in dBm -> clamped [0, 1]; degenerate APs map to 0"""
        values = np.asarray(values, dtype=np.float64)
        span = self.max_dbm - self.min_dbm
        safe_span = np.where(span == 0, 1.0, span)
        out = (values - self.min_dbm) / safe_span
        out = np.where(self.degenerate, 0.0, out)
        return np.clip(out, 0.0, 1.0)

    def denormalize(self, values: np.ndarray) -> np.ndarray:
        values = np.asarray(values, dtype=np.float64)
        return values * (self.max_dbm - self.min_dbm) + self.min_dbm

    def sentinel(self, sentinel_dbm: float = Config.SENTINEL_DBM) -> np.ndarray:
        """Image of the missing-signal sentinel in normalized space, one value per AP"""
        return self.normalize(np.full(self.n_aps, sentinel_dbm))

    def to_dict(self) -> Dict:
        return {"min_dbm": self.min_dbm.tolist(), "max_dbm": self.max_dbm.tolist()}

    @classmethod
    def from_dict(cls, data: Dict) -> "NormStats":
        return cls(np.array(data["min_dbm"], dtype=np.float64),
                   np.array(data["max_dbm"], dtype=np.float64))


@dataclass(frozen=True, eq=False)
class RawStream:
    """One contiguous recording: readings are dBm with NaN for missing, labels -1 when unannotated"""
    timestamps: np.ndarray
    readings: np.ndarray
    labels: np.ndarray
    segment_id: str = "segment"

    def __post_init__(self):
        ts = np.asarray(self.timestamps, dtype=np.float64)
        rd = np.asarray(self.readings, dtype=np.float64)
        lb = np.asarray(self.labels, dtype=np.int64)
        if rd.ndim != 2 or rd.shape[0] != ts.shape[0] or lb.shape[0] != ts.shape[0]:
            raise ValueError(
                f"stream {self.segment_id}: timestamps {ts.shape}, readings {rd.shape}, labels {lb.shape} disagree"
            )
        if ts.size > 1 and np.any(np.diff(ts) < 0):
            raise ValueError(f"stream {self.segment_id}: timestamps must be nondecreasing")
        for arr in (ts, rd, lb):
            arr.setflags(write=False)
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "readings", rd)
        object.__setattr__(self, "labels", lb)

    @property
    def n_aps(self) -> int:
        return int(self.readings.shape[1])

    def __len__(self) -> int:
        return int(self.timestamps.shape[0])

    def with_readings(self, readings: np.ndarray) -> "RawStream":
        return RawStream(self.timestamps, readings, self.labels, self.segment_id)


@dataclass(frozen=True, eq=False)
class RSSIWindow:
    """[n_aps x n_timestamps] matrix; origin tags where the window came from"""
    values: np.ndarray
    origin: str = ""

    def __post_init__(self):
        arr = np.array(self.values, dtype=np.float64)
        if arr.ndim != 2:
            raise ValueError(f"RSSIWindow expects a 2-D matrix, got shape {arr.shape}")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @property
    def n_aps(self) -> int:
        return int(self.values.shape[0])

    @property
    def n_timestamps(self) -> int:
        return int(self.values.shape[1])

    def flat(self) -> np.ndarray:
        return self.values.reshape(-1)

    @property
    def is_synthetic(self) -> bool:
        return self.origin.startswith("synthetic:")


LabelledWindow = Tuple[RSSIWindow, RoomLabel]


@dataclass(frozen=True, eq=False)
class HouseDataset:
    config: HouseConfig
    fingerprint: Tuple[LabelledWindow, ...]
    free_living: Tuple[LabelledWindow, ...]
    norm_stats: Optional[NormStats] = None

    def __post_init__(self):
        object.__setattr__(self, "fingerprint", tuple(self.fingerprint))
        object.__setattr__(self, "free_living", tuple(self.free_living))

    def partition(self, name: str) -> Tuple[LabelledWindow, ...]:
        if name not in ("fingerprint", "free_living"):
            raise KeyError(f"unknown partition {name!r}")
        return getattr(self, name)

    def arrays(self, name: str) -> Tuple[np.ndarray, np.ndarray]:
        """Stack a partition into X (N, n_aps, n_timestamps) and y (N,)"""
        return windows_to_arrays(self.partition(name), self.config.n_aps)

    def class_counts(self, name: str = "fingerprint") -> Dict[int, int]:
        counts = {room.id: 0 for room in self.config.rooms}
        for _, label in self.partition(name):
            counts[label.id] = counts.get(label.id, 0) + 1
        return counts


@dataclass(frozen=True, eq=False)
class RawHouseData:
    """Pre-preprocessing house recordings, as the simulator emits and the raw directory stores"""
    config: HouseConfig
    fingerprint: Tuple[RawStream, ...]
    free_living: Tuple[RawStream, ...]

    def __post_init__(self):
        object.__setattr__(self, "fingerprint", tuple(self.fingerprint))
        object.__setattr__(self, "free_living", tuple(self.free_living))


@dataclass(frozen=True, eq=False)
class GanCheckpoint:
    """Generator + critic weights keyed by layer name, plus architecture and training metadata"""
    generator_weights: Dict[str, np.ndarray]
    discriminator_weights: Dict[str, np.ndarray]
    arch_meta: Dict
    train_meta: Dict = field(default_factory=dict)

    @property
    def n_classes(self) -> int:
        return int(self.arch_meta["n_classes"])

    @property
    def n_aps(self) -> int:
        return int(self.arch_meta["n_aps"])


@dataclass
class ExperimentResult:
    house_id: str
    method: str
    repeat_index: int
    macro_f1: float
    per_class_accuracy: Dict[str, float]
    seed: int
    mivo: Optional[float] = None
    wall_time_s: float = 0.0
    config_hash: str = ""

    def __post_init__(self):
        if not 0.0 <= self.macro_f1 <= 100.0:
            raise ValueError(f"macro_f1 {self.macro_f1} outside [0, 100]")
        for room, acc in self.per_class_accuracy.items():
            if not 0.0 <= acc <= 100.0:
                raise ValueError(f"accuracy for {room} ({acc}) outside [0, 100]")

    def to_row(self) -> Dict:
        row = {
            "house_id": self.house_id,
            "arm": self.method,
            "repeat": self.repeat_index,
            "seed": self.seed,
            "macro_f1": round(self.macro_f1, 6),
            "mivo_scalar": None if self.mivo is None else round(self.mivo, 6),
        }
        for room, acc in self.per_class_accuracy.items():
            row[f"acc_{room}"] = round(acc, 6)
        return row


def windows_to_arrays(windows: Sequence[LabelledWindow], n_aps: Optional[int] = None,
                      n_timestamps: int = Config.N_TIMESTAMPS) -> Tuple[np.ndarray, np.ndarray]:
    if not windows:
        width = n_aps if n_aps is not None else 0
        return np.zeros((0, width, n_timestamps)), np.zeros(0, dtype=np.int64)
    X = np.stack([w.values for w, _ in windows]).astype(np.float64)
    y = np.array([label.id for _, label in windows], dtype=np.int64)
    return X, y


def arrays_to_windows(X: np.ndarray, y: Sequence[int], config: HouseConfig,
                      origin: str = "") -> List[LabelledWindow]:
    rooms = {room.id: room for room in config.rooms}
    return [(RSSIWindow(X[i], origin=origin), rooms[int(y[i])]) for i in range(len(y))]


def validate_dataset(ds: HouseDataset, n_timestamps: int = Config.N_TIMESTAMPS) -> List[str]:
    """Report every broken invariant; never raises"""
    violations: List[str] = []
    try:
        cfg = ds.config
        if cfg.n_aps < 1:
            violations.append(f"config: n_aps must be >= 1, got {cfg.n_aps}")
        if not cfg.rooms:
            violations.append("config: rooms must be non-empty")
        ids = [room.id for room in cfg.rooms]
        if len(set(ids)) != len(ids):
            violations.append(f"config: room ids are not unique: {ids}")
        if ids and sorted(ids) != list(range(len(ids))):
            violations.append(f"config: room ids are not dense in [0, {len(ids)}): {sorted(ids)}")
        known = set(ids)

        origins = {}
        for part in ("fingerprint", "free_living"):
            for idx, (window, label) in enumerate(ds.partition(part)):
                where = f"{part}[{idx}]"
                shape = np.shape(window.values)
                if shape != (cfg.n_aps, n_timestamps):
                    violations.append(
                        f"{where}: shape {shape} != ({cfg.n_aps}, {n_timestamps})")
                values = np.asarray(window.values, dtype=np.float64)
                if np.isnan(values).any():
                    violations.append(f"{where}: contains missing entries")
                finite = values[np.isfinite(values)]
                if finite.size and (finite.min() < 0.0 or finite.max() > 1.0):
                    violations.append(
                        f"{where}: normalized values outside [0, 1] (min {finite.min():.4g}, max {finite.max():.4g})")
                if np.isinf(values).any():
                    violations.append(f"{where}: contains non-finite values")
                if label.id not in known:
                    violations.append(f"{where}: label id {label.id} not in house rooms")
                segment = _origin_segment(window.origin)
                if segment is not None:
                    origins.setdefault(segment, set()).add(part)

        for segment, parts in origins.items():
            if len(parts) > 1:
                violations.append(f"partitions share raw segment {segment!r}")

        if ds.norm_stats is not None:
            ns = ds.norm_stats
            if ns.n_aps != cfg.n_aps:
                violations.append(f"norm_stats: {ns.n_aps} APs != config {cfg.n_aps}")
            if np.any(ns.min_dbm > ns.max_dbm):
                violations.append("norm_stats: min_dbm > max_dbm for some AP")
            if np.any(ns.min_dbm < Config.SENTINEL_DBM):
                violations.append(f"norm_stats: min_dbm below {Config.SENTINEL_DBM}")
    except Exception as e:
        violations.append(f"dataset could not be inspected: {e}")
    return violations


def _origin_segment(origin: str) -> Optional[str]:
    # "<partition>:<segment>:<offset>"
    parts = origin.split(":")
    if len(parts) == 3 and parts[0] in ("fingerprint", "free_living"):
        return parts[1]
    return None
