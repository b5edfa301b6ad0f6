import logging
from typing import Iterable, List, Optional, Sequence

import numpy as np
import pandas as pd

from config import Config
from rssi_types import (
    HouseConfig,
    HouseDataset,
    LabelledWindow,
    NormStats,
    RawHouseData,
    RawStream,
    RSSIWindow,
)

logger = logging.getLogger(__name__)

_TIME_TOL = 1e-9


def resample_to_grid(stream: RawStream, rate_hz: float = Config.SAMPLE_RATE_HZ) -> RawStream:
    """Snap samples onto a regular grid by nearest neighbour; empty grid cells stay missing"""
    if len(stream) == 0:
        return stream
    step = 1.0 / rate_hz
    t0 = float(stream.timestamps[0])
    offsets = (stream.timestamps - t0) / step
    if np.allclose(offsets, np.arange(len(stream)), atol=1e-6):
        return stream

    cell = np.rint(offsets).astype(np.int64)
    n_cells = int(cell[-1]) + 1
    grid_t = t0 + np.arange(n_cells) * step
    distance = np.abs(stream.timestamps - grid_t[cell])

    readings = np.full((n_cells, stream.n_aps), np.nan)
    frame = pd.DataFrame(stream.readings)
    frame["cell"] = cell
    frame["distance"] = distance
    for ap in range(stream.n_aps):
        observed = (frame[["cell", "distance", ap]].dropna()
                    .sort_values(["cell", "distance"], kind="mergesort")
                    .drop_duplicates("cell"))
        readings[observed["cell"].to_numpy(), ap] = observed[ap].to_numpy()

    # labels follow the nearest original sample, observed or not
    ts = stream.timestamps
    right = np.clip(np.searchsorted(ts, grid_t), 0, len(ts) - 1)
    left = np.clip(right - 1, 0, len(ts) - 1)
    nearest = np.where(np.abs(grid_t - ts[left]) <= np.abs(ts[right] - grid_t), left, right)
    labels = stream.labels[nearest]

    logger.debug(f"🔄 Resampled {stream.segment_id}: {len(stream)} samples -> {n_cells} grid points at {rate_hz} Hz")
    return RawStream(grid_t, readings, labels, stream.segment_id)


def forward_fill(stream: RawStream, max_gap_s: float = Config.MAX_GAP_S) -> RawStream:
    """Fill each AP's gaps from its last observed value while that value is at most max_gap_s old"""
    readings = pd.DataFrame(stream.readings)
    observed = readings.notna()
    times = pd.DataFrame(np.repeat(stream.timestamps[:, None], stream.n_aps, axis=1))
    last_seen = times.where(observed).ffill()
    last_value = readings.ffill()
    age = times - last_seen
    fill = (~observed) & (age <= max_gap_s + _TIME_TOL)
    filled = readings.where(~fill, last_value)
    return stream.with_readings(filled.to_numpy(dtype=np.float64))


def sentinel_fill(stream: RawStream, sentinel_dbm: float = Config.SENTINEL_DBM) -> RawStream:
    readings = np.where(np.isnan(stream.readings), sentinel_dbm, stream.readings)
    return stream.with_readings(readings)


def fit_normalizer(streams: Iterable[RawStream]) -> NormStats:
    """Per-AP min/max over fingerprint streams only"""
    stacked = [s.readings for s in streams if len(s)]
    if not stacked:
        raise ValueError("fit_normalizer needs at least one non-empty stream")
    values = np.concatenate(stacked, axis=0)
    if np.isnan(values).any():
        raise ValueError("fit_normalizer expects sentinel-filled streams (found missing readings)")
    stats = NormStats(values.min(axis=0), values.max(axis=0))
    _warn_degenerate(stats)
    return stats


def apply_normalizer(stream: RawStream, stats: NormStats) -> RawStream:
    if stream.n_aps != stats.n_aps:
        raise ValueError(f"stream has {stream.n_aps} APs, normalizer has {stats.n_aps}")
    _warn_degenerate(stats)
    return stream.with_readings(stats.normalize(stream.readings))


def denormalize(values: np.ndarray, stats: NormStats) -> np.ndarray:
    """Inverse of apply_normalizer for values that were not clamped; values are (..., n_aps)"""
    return stats.denormalize(values)


def segment_windows(stream: RawStream, config: HouseConfig,
                    window_s: float = Config.WINDOW_S,
                    overlap: float = Config.WINDOW_OVERLAP,
                    partition: str = "fingerprint") -> List[LabelledWindow]:
    """Cut fixed windows; label is the strict majority room, unlabeled or tied windows are dropped"""
    width = int(round(window_s * config.sample_rate_hz))
    stride = max(1, int(round(width * (1.0 - overlap))))
    n = len(stream)
    if n < width:
        return []

    rooms = {room.id: room for room in config.rooms}
    windows: List[LabelledWindow] = []
    dropped = 0
    for offset in range(0, n - width + 1, stride):
        labels = stream.labels[offset:offset + width]
        if np.any(labels < 0):
            dropped += 1
            continue
        ids, counts = np.unique(labels, return_counts=True)
        top = counts.max()
        if np.sum(counts == top) > 1:
            dropped += 1
            continue
        room_id = int(ids[np.argmax(counts)])
        values = stream.readings[offset:offset + width].T
        origin = f"{partition}:{stream.segment_id}:{offset}"
        windows.append((RSSIWindow(values, origin=origin), rooms[room_id]))
    if dropped:
        logger.debug(f"⚠️ {stream.segment_id}: dropped {dropped} unlabeled or tied windows")
    return windows


class RSSIPreprocessor:
    """Raw house recordings -> normalized, labelled windows"""

    def __init__(self, max_gap_s: float = Config.MAX_GAP_S,
                 window_s: float = Config.WINDOW_S,
                 overlap: float = Config.WINDOW_OVERLAP,
                 sentinel_dbm: float = Config.SENTINEL_DBM,
                 rate_hz: float = Config.SAMPLE_RATE_HZ):
        self.max_gap_s = max_gap_s
        self.window_s = window_s
        self.overlap = overlap
        self.sentinel_dbm = sentinel_dbm
        self.rate_hz = rate_hz

    def clean(self, stream: RawStream, source_rate_hz: Optional[float] = None) -> RawStream:
        if source_rate_hz is not None and source_rate_hz != self.rate_hz:
            stream = resample_to_grid(stream, self.rate_hz)
        return sentinel_fill(forward_fill(stream, self.max_gap_s), self.sentinel_dbm)

    def preprocess_house(self, raw: RawHouseData) -> HouseDataset:
        cfg = raw.config
        logger.info(f"🔄 Preprocessing house {cfg.house_id} ({len(raw.fingerprint)} fingerprint, "
                    f"{len(raw.free_living)} free-living streams)")
        fingerprint = [self.clean(s, cfg.sample_rate_hz) for s in raw.fingerprint]
        free_living = [self.clean(s, cfg.sample_rate_hz) for s in raw.free_living]

        stats = fit_normalizer(fingerprint)
        out_cfg = HouseConfig(cfg.house_id, cfg.n_aps, cfg.rooms, self.rate_hz)

        parts = {}
        for name, streams in (("fingerprint", fingerprint), ("free_living", free_living)):
            windows: List[LabelledWindow] = []
            for stream in streams:
                normalized = apply_normalizer(stream, stats)
                windows.extend(segment_windows(normalized, out_cfg, self.window_s, self.overlap, name))
            parts[name] = windows

        ds = HouseDataset(out_cfg, parts["fingerprint"], parts["free_living"], stats)
        logger.info(f"✅ House {cfg.house_id}: {len(ds.fingerprint)} fingerprint / "
                    f"{len(ds.free_living)} free-living windows")
        return ds


def preprocess_house(raw: RawHouseData, max_gap_s: float = Config.MAX_GAP_S,
                     window_s: float = Config.WINDOW_S,
                     overlap: float = Config.WINDOW_OVERLAP) -> HouseDataset:
    return RSSIPreprocessor(max_gap_s=max_gap_s, window_s=window_s, overlap=overlap).preprocess_house(raw)


def _warn_degenerate(stats: NormStats):
    degenerate = np.flatnonzero(stats.degenerate)
    if degenerate.size:
        logger.warning(f"⚠️ Degenerate APs {degenerate.tolist()} (min == max); they normalize to 0")
