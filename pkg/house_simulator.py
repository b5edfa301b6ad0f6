"""Synthetic multi-house BLE RSSI recordings.

Houses are made of rectangular rooms on one or more floors plus an outside
region. Signal strength follows a log-distance path-loss model with per-wall
attenuation and log-normal shadowing; readings are dropped at random to mimic
lost packets. Fingerprint recordings follow a scripted tour of every room,
free-living recordings a room-level Markov walk with heavy-tailed dwell times.
"""

import json
import logging
import math
import os
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from config import Config
from rssi_types import HouseConfig, RawHouseData, RawStream, RoomLabel

logger = logging.getLogger(__name__)

FLOOR_HEIGHT_M = 3.0
AP_HEIGHT_M = 2.0
WEARABLE_HEIGHT_M = 1.0
SIM_EPOCH_S = 1_600_000_000.0
FREE_LIVING_OFFSET_S = 86_400.0
WALL_SAMPLES = 24
HOLD_S = 2.0          # a position is held this long before the wearer moves
BASE_DWELL_S = 30.0   # mean free-living dwell before rarity correction
DWELL_SIGMA = 0.8     # log-normal shape of free-living dwell times
RARE_WEIGHT = 0.02


@dataclass
class PropagationParams:
    tx_power_dbm: float = -40.0
    path_loss_exponent: float = 2.7
    reference_distance_m: float = 1.0
    shadowing_sigma_db: float = 4.0
    wall_attenuation_db: float = 6.0

    def __post_init__(self):
        if self.reference_distance_m <= 0:
            raise ValueError("reference_distance_m must be positive")
        if self.shadowing_sigma_db < 0:
            raise ValueError("shadowing_sigma_db must be >= 0")


@dataclass(frozen=True)
class RoomRegion:
    label: RoomLabel
    floor: int
    x0: float
    y0: float
    x1: float
    y1: float

    def contains(self, points: np.ndarray) -> np.ndarray:
        """points: (..., 3) -> bool (...)"""
        floor = np.floor(points[..., 2] / FLOOR_HEIGHT_M + 1e-9).astype(int)
        return ((points[..., 0] >= self.x0) & (points[..., 0] <= self.x1)
                & (points[..., 1] >= self.y0) & (points[..., 1] <= self.y1)
                & (floor == self.floor))

    def sample(self, rng: np.random.Generator, n: int = 1) -> np.ndarray:
        x = rng.uniform(self.x0, self.x1, n)
        y = rng.uniform(self.y0, self.y1, n)
        z = np.full(n, self.floor * FLOOR_HEIGHT_M + WEARABLE_HEIGHT_M)
        return np.stack([x, y, z], axis=1)

    def centre(self) -> Tuple[float, float]:
        return (self.x0 + self.x1) / 2, (self.y0 + self.y1) / 2


@dataclass
class HouseSpec:
    house_id: str
    regions: List[RoomRegion]
    ap_positions: List[Tuple[float, float, float]]
    propagation: PropagationParams = field(default_factory=PropagationParams)
    drop_prob: float = 0.15
    sample_rate_hz: float = Config.SAMPLE_RATE_HZ
    room_weights: Dict[str, float] = field(default_factory=dict)
    scripted_minutes: Dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if len(self.ap_positions) < 1:
            raise ValueError(f"{self.house_id}: at least one AP is required")
        if len(self.regions) < 2:
            raise ValueError(f"{self.house_id}: at least two rooms are required")
        if not 0.0 <= self.drop_prob < 1.0:
            raise ValueError(f"{self.house_id}: drop_prob must lie in [0, 1)")
        ids = sorted(r.label.id for r in self.regions)
        if ids != list(range(len(ids))):
            raise ValueError(f"{self.house_id}: room ids must be dense and unique, got {ids}")
        self.regions = sorted(self.regions, key=lambda r: r.label.id)
        self.ap_positions = [tuple(float(c) for c in p) for p in self.ap_positions]

    @property
    def n_aps(self) -> int:
        return len(self.ap_positions)

    @property
    def rooms(self) -> Tuple[RoomLabel, ...]:
        return tuple(r.label for r in self.regions)

    def house_config(self) -> HouseConfig:
        return HouseConfig(self.house_id, self.n_aps, self.rooms, self.sample_rate_hz)

    def stationary_weights(self) -> np.ndarray:
        """Free-living room weights; rare rooms default to RARE_WEIGHT, the rest share the remainder"""
        explicit = dict(self.room_weights)
        for region in self.regions:
            if region.label.name not in explicit and is_rare_room(region.label.name):
                explicit[region.label.name] = RARE_WEIGHT
        fixed = sum(explicit.get(r.label.name, 0.0) for r in self.regions)
        free = [r for r in self.regions if r.label.name not in explicit]
        share = max(0.0, 1.0 - fixed) / len(free) if free else 0.0
        weights = np.array([explicit.get(r.label.name, share) for r in self.regions], dtype=np.float64)
        return weights / weights.sum()

    def to_dict(self) -> Dict:
        return {
            "house_id": self.house_id,
            "regions": [{"id": r.label.id, "name": r.label.name, "floor": r.floor,
                         "x0": r.x0, "y0": r.y0, "x1": r.x1, "y1": r.y1} for r in self.regions],
            "ap_positions": [list(p) for p in self.ap_positions],
            "propagation": vars(self.propagation).copy(),
            "drop_prob": self.drop_prob,
            "sample_rate_hz": self.sample_rate_hz,
            "room_weights": dict(self.room_weights),
            "scripted_minutes": dict(self.scripted_minutes),
        }

    @classmethod
    def from_dict(cls, data: Dict) -> "HouseSpec":
        regions = [RoomRegion(RoomLabel(int(r["id"]), str(r["name"])), int(r["floor"]),
                              float(r["x0"]), float(r["y0"]), float(r["x1"]), float(r["y1"]))
                   for r in data["regions"]]
        return cls(
            house_id=str(data["house_id"]),
            regions=regions,
            ap_positions=[tuple(p) for p in data["ap_positions"]],
            propagation=PropagationParams(**data.get("propagation", {})),
            drop_prob=float(data.get("drop_prob", 0.15)),
            sample_rate_hz=float(data.get("sample_rate_hz", Config.SAMPLE_RATE_HZ)),
            room_weights={k: float(v) for k, v in data.get("room_weights", {}).items()},
            scripted_minutes={k: float(v) for k, v in data.get("scripted_minutes", {}).items()},
        )


TrajectorySample = Tuple[float, np.ndarray, RoomLabel]


def is_rare_room(name: str) -> bool:
    lowered = name.lower()
    return "stairs" in lowered or "outside" in lowered


# --------------------------------------------------------------------------
# propagation

def _region_index(spec: HouseSpec, points: np.ndarray) -> np.ndarray:
    """Index of the region containing each point, -1 for walls/void"""
    index = np.full(points.shape[:-1], -1, dtype=np.int64)
    for i, region in enumerate(spec.regions):
        index = np.where((index < 0) & region.contains(points), i, index)
    return index


def _wall_counts(spec: HouseSpec, positions: np.ndarray) -> np.ndarray:
    """Region-boundary crossings on the straight line from each position to each AP -> (N, n_aps)"""
    aps = np.asarray(spec.ap_positions, dtype=np.float64)
    frac = np.linspace(0.0, 1.0, WALL_SAMPLES)[None, None, :, None]
    points = positions[:, None, None, :] + frac * (aps[None, :, None, :] - positions[:, None, None, :])
    regions = _region_index(spec, points)
    return np.sum(regions[..., 1:] != regions[..., :-1], axis=-1)


def _mean_rssi(spec: HouseSpec, positions: np.ndarray) -> np.ndarray:
    """Noise-free dBm for (N, 3) positions -> (N, n_aps)"""
    prop = spec.propagation
    aps = np.asarray(spec.ap_positions, dtype=np.float64)
    d = np.linalg.norm(positions[:, None, :] - aps[None, :, :], axis=-1)
    d0 = prop.reference_distance_m
    loss = 10.0 * prop.path_loss_exponent * np.log10(np.maximum(d, d0) / d0)
    walls = _wall_counts(spec, positions)
    return prop.tx_power_dbm - loss - walls * prop.wall_attenuation_db


def _clamp_dbm(values: np.ndarray) -> np.ndarray:
    return np.clip(values, Config.MIN_OBSERVED_DBM, 0.0)


def rssi_at(spec: HouseSpec, position: Sequence[float], ap_index: int,
            seed: Optional[int] = None, rng: Optional[np.random.Generator] = None) -> float:
    """Received strength (dBm) at one position from one AP; never reaches the -120 sentinel"""
    if not 0 <= int(ap_index) < spec.n_aps:
        raise IndexError(f"{spec.house_id} has {spec.n_aps} APs, got ap_index {ap_index}")
    rng = rng if rng is not None else np.random.default_rng(seed)
    mean = _mean_rssi(spec, np.asarray(position, dtype=np.float64).reshape(1, 3))[0, int(ap_index)]
    sigma = spec.propagation.shadowing_sigma_db
    noise = rng.normal(0.0, sigma) if sigma > 0 else 0.0
    return float(_clamp_dbm(mean + noise))


def rssi_matrix(spec: HouseSpec, positions: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Vectorized rssi_at over (N, 3) positions and every AP -> (N, n_aps) dBm"""
    positions = np.asarray(positions, dtype=np.float64)
    unique, inverse = np.unique(positions, axis=0, return_inverse=True)
    mean = _mean_rssi(spec, unique)[inverse.reshape(-1)]
    sigma = spec.propagation.shadowing_sigma_db
    if sigma > 0:
        mean = mean + rng.normal(0.0, sigma, size=mean.shape)
    return _clamp_dbm(mean)


# --------------------------------------------------------------------------
# trajectories

def _n_samples(duration_s: float, rate_hz: float) -> int:
    return max(1, int(math.floor(duration_s * rate_hz + 1e-9)))


def _fill_positions(region: RoomRegion, n: int, rate_hz: float, rng: np.random.Generator) -> np.ndarray:
    hold = max(1, int(round(HOLD_S * rate_hz)))
    stops = region.sample(rng, int(math.ceil(n / hold)))
    return np.repeat(stops, hold, axis=0)[:n]


def _scripted_plan(spec: HouseSpec, n: int, rng: np.random.Generator) -> List[Tuple[int, int]]:
    """(region index, samples) per scripted visit, every room once"""
    order = rng.permutation(len(spec.regions))
    rate = spec.sample_rate_hz
    fixed = {i: _n_samples(spec.scripted_minutes[r.label.name] * 60.0, rate)
             for i, r in enumerate(spec.regions) if r.label.name in spec.scripted_minutes}
    free = [i for i in range(len(spec.regions)) if i not in fixed]
    remaining = max(0, n - sum(fixed.values()))
    counts = dict(fixed)
    if free:
        base, extra = divmod(remaining, len(free))
        for k, i in enumerate(free):
            counts[i] = base + (1 if k < extra else 0)
    if n < len(spec.regions):
        logger.warning(f"⚠️ {spec.house_id}: {n} samples cannot cover {len(spec.regions)} rooms")
    return [(int(i), max(1, counts[int(i)])) for i in order]


def _free_living_plan(spec: HouseSpec, n: int, rng: np.random.Generator) -> List[Tuple[int, int]]:
    weights = spec.stationary_weights()
    rate = spec.sample_rate_hz
    # next room excludes the current one, so dwell means are scaled by 1/(1 - w)
    # to make long-run time fractions follow the weights
    mean_dwell = BASE_DWELL_S / np.maximum(1.0 - weights, 1e-6)
    plan: List[Tuple[int, int]] = []
    current = int(rng.choice(len(weights), p=weights))
    total = 0
    while total < n:
        mu = math.log(mean_dwell[current]) - DWELL_SIGMA ** 2 / 2
        dwell = max(1, int(round(rng.lognormal(mu, DWELL_SIGMA) * rate)))
        dwell = min(dwell, n - total)
        plan.append((current, dwell))
        total += dwell
        p = weights.copy()
        p[current] = 0.0
        if p.sum() <= 0:
            break
        current = int(rng.choice(len(p), p=p / p.sum()))
    return plan


def generate_trajectory(spec: HouseSpec, duration_s: float, mode: str = "scripted",
                        seed: int = Config.DEFAULT_SEED) -> List[TrajectorySample]:
    """(t, position, room) samples at the house sample rate"""
    if duration_s <= 0:
        raise ValueError("duration_s must be positive")
    if mode not in ("scripted", "free_living"):
        raise ValueError(f"unknown trajectory mode {mode!r}")
    rng = np.random.default_rng(seed)
    rate = spec.sample_rate_hz
    n = _n_samples(duration_s, rate)
    plan = _scripted_plan(spec, n, rng) if mode == "scripted" else _free_living_plan(spec, n, rng)

    samples: List[TrajectorySample] = []
    k = 0
    for region_idx, count in plan:
        region = spec.regions[region_idx]
        for pos in _fill_positions(region, count, rate, rng):
            samples.append((k / rate, pos, region.label))
            k += 1
    return samples[:n]


# --------------------------------------------------------------------------
# datasets

def _record(spec: HouseSpec, trajectory: List[TrajectorySample], start_s: float,
            segment_id: str, rng: np.random.Generator) -> RawStream:
    times = np.array([t for t, _, _ in trajectory]) + start_s
    positions = np.stack([p for _, p, _ in trajectory])
    labels = np.array([room.id for _, _, room in trajectory], dtype=np.int64)
    readings = rssi_matrix(spec, positions, rng)
    if spec.drop_prob > 0:
        readings = np.where(rng.random(readings.shape) < spec.drop_prob, np.nan, readings)
    return RawStream(times, readings, labels, segment_id)


def synthesize_dataset(spec: HouseSpec, fingerprint_minutes: float, free_living_minutes: float,
                       seed: int = Config.DEFAULT_SEED) -> RawHouseData:
    """Raw fingerprint + free-living streams; missing readings are NaN"""
    if fingerprint_minutes <= 0 or free_living_minutes <= 0:
        raise ValueError("durations must be positive")
    fp_seed, fl_seed, fp_noise, fl_noise = np.random.SeedSequence(seed).generate_state(4)
    scripted = generate_trajectory(spec, fingerprint_minutes * 60.0, "scripted", int(fp_seed))
    free = generate_trajectory(spec, free_living_minutes * 60.0, "free_living", int(fl_seed))

    fingerprint = _record(spec, scripted, SIM_EPOCH_S, f"{spec.house_id}-fingerprint-0",
                          np.random.default_rng(int(fp_noise)))
    free_living = _record(spec, free, SIM_EPOCH_S + FREE_LIVING_OFFSET_S, f"{spec.house_id}-free_living-0",
                          np.random.default_rng(int(fl_noise)))
    logger.info(f"✅ Simulated {spec.house_id}: {len(fingerprint)} fingerprint / "
                f"{len(free_living)} free-living samples, {spec.n_aps} APs, {len(spec.regions)} rooms")
    return RawHouseData(spec.house_config(), [fingerprint], [free_living])


# --------------------------------------------------------------------------
# builtin houses

def _layout(house_id: str, floors: Sequence[Sequence[Tuple[str, float]]], n_aps: int,
            outside: bool = True, **kwargs) -> HouseSpec:
    """Rooms laid side by side per floor (name, width m), 4 m deep; APs at room centres, extras in big rooms"""
    regions: List[RoomRegion] = []
    next_id = 0
    for floor, rooms in enumerate(floors):
        x = 0.0
        for name, width in rooms:
            regions.append(RoomRegion(RoomLabel(next_id, name), floor, x, 0.0, x + width, 4.0))
            next_id += 1
            x += width
    if outside:
        length = max(r.x1 for r in regions)
        regions.append(RoomRegion(RoomLabel(next_id, "outside"), 0, 0.0, -7.0, length, -1.0))

    hosts = [r for r in regions if not is_rare_room(r.label.name)]
    aps: List[Tuple[float, float, float]] = []
    for region in hosts:
        if len(aps) == n_aps:
            break
        cx, cy = region.centre()
        aps.append((cx, cy, region.floor * FLOOR_HEIGHT_M + AP_HEIGHT_M))
    by_size = sorted(hosts, key=lambda r: -(r.x1 - r.x0))
    k = 0
    while len(aps) < n_aps:
        region = by_size[k % len(by_size)]
        cx, _ = region.centre()
        offset = (region.x1 - region.x0) / 4 * (1 if (k // len(by_size)) % 2 == 0 else -1)
        aps.append((cx + offset, 3.0, region.floor * FLOOR_HEIGHT_M + AP_HEIGHT_M))
        k += 1
    return HouseSpec(house_id=house_id, regions=regions, ap_positions=aps, **kwargs)


def builtin_specs() -> Dict[str, HouseSpec]:
    """Three 11-AP target houses, three 9-AP source houses and a minority-class house"""
    specs = {
        # two floors, bathroom on the landing splits the stairs, no AP on the stairs
        "target_b": _layout("target_b", [
            [("living room", 5.0), ("kitchen", 4.0), ("dining room", 4.0), ("hall", 3.0), ("lower stairs", 1.5)],
            [("bedroom 1", 4.5), ("bedroom 2", 4.0), ("bathroom", 3.0), ("study", 3.5), ("upper stairs", 1.5)],
        ], n_aps=11),
        "target_c": _layout("target_c", [
            [("living room", 5.0), ("kitchen", 4.5), ("hall", 3.0), ("stairs", 1.5)],
            [("bedroom 1", 4.5), ("bedroom 2", 4.0), ("bathroom", 3.0), ("study", 4.0)],
        ], n_aps=11),
        "target_d": _layout("target_d", [
            [("living room", 5.5), ("kitchen", 4.0), ("dining room", 3.5), ("hall", 3.0), ("stairs", 1.5)],
            [("bedroom 1", 4.5), ("bedroom 2", 4.0), ("bathroom", 3.0), ("landing", 3.0)],
        ], n_aps=11),
        "source_1": _layout("source_1", [
            [("lounge", 5.0), ("kitchen", 4.0), ("hall", 3.0), ("stairs", 1.5)],
            [("bedroom", 4.5), ("bathroom", 3.0), ("office", 3.5)],
        ], n_aps=9, sample_rate_hz=4.0),
        "source_2": _layout("source_2", [
            [("lounge", 6.0), ("kitchen", 4.5), ("toilet", 2.0)],
            [("bedroom 1", 4.0), ("bedroom 2", 4.0), ("bathroom", 3.0)],
        ], n_aps=9, sample_rate_hz=4.0, outside=False),
        "source_3": _layout("source_3", [
            [("lounge", 5.0), ("dining room", 4.0), ("kitchen", 4.0), ("stairs", 1.5)],
            [("bedroom", 5.0), ("bathroom", 3.0), ("study", 3.0)],
        ], n_aps=9, sample_rate_hz=4.0),
    }
    minority = _layout("minority_house", [
        [("living room", 5.0), ("kitchen", 4.0), ("hall", 3.0), ("lower stairs", 1.5)],
        [("bedroom", 4.5), ("bathroom", 3.0), ("study", 3.5)],
    ], n_aps=11, scripted_minutes={"lower stairs": 3.0, "outside": 6.07})
    specs[minority.house_id] = minority
    return specs


def load_spec(reference: str) -> HouseSpec:
    """'builtin:<name>' or a path to a HouseSpec JSON file"""
    if reference.startswith("builtin:"):
        name = reference.split(":", 1)[1]
        specs = builtin_specs()
        if name not in specs:
            raise KeyError(f"unknown builtin house {name!r}; choose from {sorted(specs)}")
        return specs[name]
    with open(reference) as f:
        return HouseSpec.from_dict(json.load(f))


def save_spec(spec: HouseSpec, path: str) -> str:
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, "w") as f:
        json.dump(spec.to_dict(), f, indent=2, sort_keys=True)
    return path
