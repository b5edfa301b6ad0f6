"""Generation quality (MiVo) and Random-Forest room localisation metrics."""

import logging
from dataclasses import dataclass
from typing import Dict, Hashable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.spatial.distance import cdist
from sklearn.ensemble import RandomForestClassifier
from sklearn.metrics import confusion_matrix, recall_score
from sklearn.model_selection import GridSearchCV, StratifiedKFold
from sklearn.utils.class_weight import compute_class_weight

from config import Config
from exceptions import InsufficientSamplesError, ShapeMismatchError
from rssi_types import HouseDataset, RoomLabel, RSSIWindow

logger = logging.getLogger(__name__)

WindowSet = Union[np.ndarray, Sequence[RSSIWindow], Sequence[np.ndarray]]


@dataclass(frozen=True)
class MiVoScore:
    mean_incoming: float
    var_outgoing: float

    @property
    def scalar(self) -> float:
        return self.mean_incoming + self.var_outgoing

    def to_dict(self) -> Dict[str, float]:
        return {"mean_incoming": self.mean_incoming, "var_outgoing": self.var_outgoing, "scalar": self.scalar}


def _as_matrix(windows: WindowSet) -> np.ndarray:
    if isinstance(windows, np.ndarray):
        arr = windows
    else:
        arr = np.stack([w.values if isinstance(w, RSSIWindow) else np.asarray(w) for w in windows]) \
            if len(windows) else np.zeros((0, 0))
    return np.asarray(arr, dtype=np.float64).reshape(len(arr), -1)


def nearest_distances(real: WindowSet, generated: WindowSet) -> Tuple[np.ndarray, np.ndarray]:
    """(incoming, outgoing): generated-to-nearest-real and real-to-nearest-generated Euclidean distances"""
    R, G = _as_matrix(real), _as_matrix(generated)
    if len(R) == 0 or len(G) == 0:
        raise InsufficientSamplesError("mivo needs non-empty real and generated sets")
    if R.shape[1] != G.shape[1]:
        raise ShapeMismatchError(f"real windows have {R.shape[1]} cells, generated have {G.shape[1]}")
    distances = cdist(G, R, metric="euclidean")
    return distances.min(axis=1), distances.min(axis=0)


def mivo(real: WindowSet, generated: WindowSet) -> MiVoScore:
    """Mean of the incoming distances plus variance of the outgoing ones"""
    incoming, outgoing = nearest_distances(real, generated)
    return MiVoScore(float(incoming.mean()), float(outgoing.var()))


def mivo_per_class(real_X: np.ndarray, real_y: np.ndarray,
                   gen_X: np.ndarray, gen_y: np.ndarray) -> Dict[int, MiVoScore]:
    """MiVo within each class present in both sets"""
    real_y, gen_y = np.asarray(real_y), np.asarray(gen_y)
    shared = sorted(set(real_y.tolist()) & set(gen_y.tolist()))
    return {int(c): mivo(real_X[real_y == c], gen_X[gen_y == c]) for c in shared}


def average_mivo(scores: Mapping[int, MiVoScore]) -> MiVoScore:
    if not scores:
        raise InsufficientSamplesError("no classes to average MiVo over")
    values = list(scores.values())
    return MiVoScore(float(np.mean([s.mean_incoming for s in values])),
                     float(np.mean([s.var_outgoing for s in values])))


def class_weights(labels: Sequence[Hashable]) -> Dict[Hashable, float]:
    """Balanced inverse-frequency weights: N / (n_classes * N_c)"""
    labels = list(labels)
    if not labels:
        raise ValueError("class_weights needs at least one label")
    keys = list(dict.fromkeys(labels))
    codes = np.array([keys.index(label) for label in labels])
    classes = np.arange(len(keys))
    weights = compute_class_weight("balanced", classes=classes, y=codes)
    return {key: float(w) for key, w in zip(keys, weights)}


def train_localiser(X: np.ndarray, y: np.ndarray, use_weights: bool = False,
                    seed: int = Config.DEFAULT_SEED,
                    param_grid: Optional[Dict[str, List]] = None,
                    cv_folds: int = Config.CV_FOLDS,
                    n_jobs: int = Config.N_JOBS) -> GridSearchCV:
    """Grid-searched Random Forest on flattened windows, scored by cross-validated macro F1"""
    X = np.asarray(X, dtype=np.float64).reshape(len(X), -1)
    y = np.asarray(y, dtype=np.int64)
    classes, counts = np.unique(y, return_counts=True)
    short = classes[counts < cv_folds]
    if short.size:
        raise InsufficientSamplesError(
            f"class {int(short[0])} has {int(counts[counts < cv_folds][0])} windows; "
            f"{cv_folds}-fold cross-validation needs {cv_folds}", int(short[0]))

    weights = None
    if use_weights:
        weights = {int(c): w for c, w in class_weights(y.tolist()).items()}
    forest = RandomForestClassifier(random_state=seed, class_weight=weights, n_jobs=n_jobs)
    search = GridSearchCV(
        forest,
        param_grid or Config.RF_PARAM_GRID,
        scoring="f1_macro",
        cv=StratifiedKFold(n_splits=cv_folds, shuffle=True, random_state=seed),
        n_jobs=1,
        refit=True,
    )
    search.fit(X, y)
    logger.info(f"📊 Localiser grid search best {search.best_params_} (cv macro F1 {search.best_score_ * 100:.2f})")
    return search


def predict_rooms(model, X: np.ndarray) -> np.ndarray:
    return model.predict(np.asarray(X, dtype=np.float64).reshape(len(X), -1))


def macro_f1(predictions: Sequence[int], truths: Sequence[int]) -> float:
    """Unweighted mean of per-class F1 over every class seen in either vector, as a percentage"""
    predictions, truths = np.asarray(predictions), np.asarray(truths)
    if len(predictions) != len(truths):
        raise ShapeMismatchError(f"{len(predictions)} predictions for {len(truths)} truths")
    if len(truths) == 0:
        raise ValueError("macro_f1 needs at least one prediction")
    labels = np.union1d(truths, predictions)
    cm = confusion_matrix(truths, predictions, labels=labels)
    tp = np.diag(cm)
    fp = cm.sum(axis=0) - tp
    fn = cm.sum(axis=1) - tp
    denominator = 2 * tp + fp + fn
    f1 = np.where(denominator > 0, 2 * tp / np.maximum(denominator, 1), 0.0)
    return float(np.mean(f1) * 100.0)


def per_class_accuracy(predictions: Sequence[int], truths: Sequence[int],
                       rooms: Optional[Sequence[RoomLabel]] = None) -> Dict[str, float]:
    """Recall per class present in the truths, as a percentage; keyed by room name when rooms are given"""
    predictions, truths = np.asarray(predictions), np.asarray(truths)
    if len(predictions) != len(truths):
        raise ShapeMismatchError(f"{len(predictions)} predictions for {len(truths)} truths")
    present = np.unique(truths)
    recalls = recall_score(truths, predictions, labels=present, average=None, zero_division=0)
    names = {room.id: room.name for room in rooms} if rooms is not None else {}
    return {names.get(int(c), str(int(c))): float(r * 100.0) for c, r in zip(present, recalls)}


def fingerprint_minutes_per_class(ds: HouseDataset, window_s: float = Config.WINDOW_S,
                                  overlap: float = Config.WINDOW_OVERLAP) -> Dict[str, float]:
    """Labelled fingerprint minutes per room, counting each window's non-overlapping stride"""
    stride_s = window_s * (1.0 - overlap)
    counts = ds.class_counts("fingerprint")
    return {ds.config.room(room_id).name: n * stride_s / 60.0 for room_id, n in counts.items()}
