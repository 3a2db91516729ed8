"""Grip decoding: time-domain EMG features, cue-based data collection,
shrinkage LDA, cross-validation, and the per-class accuracy gate.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Sequence

import numpy as np

N_CHANNELS = 8
FEATURES_PER_CHANNEL = 4  # MAV, WL, ZC, SSC
DEADBAND = 0.01

DEFAULT_WINDOW_S = 0.200
DEFAULT_INCREMENT_S = 0.050
EMG_RATE_HZ = 200.0

MODEL_SCHEMA_VERSION = 1


class GripClass(Enum):
    Rest = "Rest"
    Open = "Open"
    Power = "Power"
    Key = "Key"
    Tripod = "Tripod"
    Pinch = "Pinch"
    Pronate = "Pronate"
    Supinate = "Supinate"


FULL_CLASS_SET = [
    GripClass.Rest, GripClass.Open, GripClass.Power, GripClass.Key,
    GripClass.Tripod, GripClass.Pinch, GripClass.Pronate, GripClass.Supinate,
]
WRIST_CLASS_SET = [
    GripClass.Rest, GripClass.Open, GripClass.Power,
    GripClass.Pronate, GripClass.Supinate,
]


@dataclass(frozen=True)
class EmgFrame:
    t: float
    channels: tuple[float, ...]

    def __post_init__(self):
        if len(self.channels) != N_CHANNELS:
            raise ValueError(f"expected {N_CHANNELS} channels, got {len(self.channels)}")
        if self.t < 0:
            raise ValueError("frame time must be non-negative")
        if not all(np.isfinite(self.channels)):
            raise ValueError("non-finite EMG sample")


@dataclass(frozen=True)
class CueProtocol:
    cue_duration: float = 5.0
    record_tail: float = 3.0
    repetitions: int = 3
    arm_positions: int = 3
    class_set: tuple[GripClass, ...] = tuple(FULL_CLASS_SET)
    window_s: float = DEFAULT_WINDOW_S
    increment_s: float = DEFAULT_INCREMENT_S

    def __post_init__(self):
        if not (0 < self.record_tail <= self.cue_duration):
            raise ValueError("record_tail must satisfy 0 < record_tail <= cue_duration")
        if self.repetitions < 1 or self.arm_positions < 1:
            raise ValueError("repetitions and arm_positions must be >= 1")


@dataclass(frozen=True)
class FeatureVector:
    values: tuple[float, ...]
    window_start: float
    window_end: float


@dataclass(frozen=True)
class LabeledRow:
    features: FeatureVector
    label: GripClass
    arm_position: int
    repetition: int


@dataclass(frozen=True)
class LabeledDataset:
    rows: tuple[LabeledRow, ...]

    def __post_init__(self):
        if len({r.label for r in self.rows}) < 2:
            raise ValueError("dataset needs at least 2 distinct classes")

    def matrix(self) -> np.ndarray:
        return np.array([r.features.values for r in self.rows], dtype=float)

    def labels(self) -> list[GripClass]:
        return [r.label for r in self.rows]


def extract_features(window: Sequence[EmgFrame], deadband: float = DEADBAND) -> FeatureVector:
    """Hudgins time-domain set per channel, concatenated channel-major.

    Per channel: mean absolute value, waveform length, zero crossings
    (dead-band gated), slope-sign changes (dead-band gated).
    """
    if len(window) == 0:
        raise ValueError("empty window")
    x = np.array([f.channels for f in window], dtype=float)  # (n, 8)
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite sample in window")
    mav = np.mean(np.abs(x), axis=0)
    diffs = np.diff(x, axis=0)
    wl = np.sum(np.abs(diffs), axis=0) if len(x) > 1 else np.zeros(N_CHANNELS)
    if len(x) > 1:
        sign_change = (x[:-1] * x[1:] < 0) & (np.abs(diffs) >= deadband)
        zc = np.sum(sign_change, axis=0).astype(float)
    else:
        zc = np.zeros(N_CHANNELS)
    if len(x) > 2:
        d1 = diffs[:-1]
        d2 = diffs[1:]
        ssc_hit = (d1 * -d2 > 0) & (
            (np.abs(d1) >= deadband) | (np.abs(d2) >= deadband)
        )
        ssc = np.sum(ssc_hit, axis=0).astype(float)
    else:
        ssc = np.zeros(N_CHANNELS)
    per_channel = np.stack([mav, wl, zc, ssc], axis=1)  # (8, 4)
    return FeatureVector(
        values=tuple(per_channel.reshape(-1)),
        window_start=window[0].t,
        window_end=window[-1].t,
    )


def slide_windows(frames: Sequence[EmgFrame], window_s: float,
                  increment_s: float) -> list[list[EmgFrame]]:
    """Fixed-rate sliding windows by sample count at the nominal EMG rate."""
    n_win = int(round(window_s * EMG_RATE_HZ))
    n_inc = int(round(increment_s * EMG_RATE_HZ))
    out = []
    start = 0
    while start + n_win <= len(frames):
        out.append(list(frames[start:start + n_win]))
        start += n_inc
    return out


CueSupplier = Callable[[GripClass, int, int], Sequence[EmgFrame]]


def run_cue_protocol(protocol: CueProtocol, supplier: CueSupplier) -> LabeledDataset:
    """Collect labeled windows: for each class x repetition x arm position cue,
    keep the trailing `record_tail` seconds and slice into feature windows.

    `supplier(grip, repetition, arm_position)` yields the full cue's frames.
    """
    rows: list[LabeledRow] = []
    for pos in range(protocol.arm_positions):
        for rep in range(protocol.repetitions):
            for grip in protocol.class_set:
                frames = list(supplier(grip, rep, pos))
                needed = int(round(protocol.cue_duration * EMG_RATE_HZ))
                if len(frames) < needed:
                    raise ValueError(
                        f"supplier underrun for cue {grip.value} rep={rep} pos={pos}: "
                        f"{len(frames)} < {needed} frames"
                    )
                tail_n = int(round(protocol.record_tail * EMG_RATE_HZ))
                tail = frames[len(frames) - tail_n:]
                for w in slide_windows(tail, protocol.window_s, protocol.increment_s):
                    rows.append(LabeledRow(extract_features(w), grip, pos, rep))
    return LabeledDataset(tuple(rows))


@dataclass(frozen=True)
class LdaModel:
    class_set: tuple[GripClass, ...]
    class_means: np.ndarray          # (C, d)
    pooled_precision: np.ndarray     # (d, d)
    shrinkage: float
    priors: np.ndarray               # (C,)
    cv_accuracy: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return self.class_means.shape[1]

    def scores(self, x: np.ndarray) -> np.ndarray:
        """Linear discriminant scores w_k.x + b_k for each class."""
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.dim:
            raise ValueError(f"feature dimension {x.shape[-1]} != model dim {self.dim}")
        w = self.class_means @ self.pooled_precision          # (C, d)
        b = -0.5 * np.sum(w * self.class_means, axis=1) + np.log(self.priors)
        return x @ w.T + b

    def to_json(self) -> str:
        doc = {
            "schema_version": MODEL_SCHEMA_VERSION,
            "class_set": [c.value for c in self.class_set],
            "class_means": self.class_means.tolist(),
            "pooled_precision": self.pooled_precision.reshape(-1).tolist(),
            "shrinkage": self.shrinkage,
            "priors": self.priors.tolist(),
            "cv_accuracy": {c.value: a for c, a in self.cv_accuracy.items()},
        }
        return json.dumps(doc)

    @staticmethod
    def from_json(text: str) -> "LdaModel":
        doc = json.loads(text)
        if doc.get("schema_version") != MODEL_SCHEMA_VERSION:
            raise ValueError(f"unsupported model schema_version {doc.get('schema_version')}")
        classes = tuple(GripClass(c) for c in doc["class_set"])
        means = np.array(doc["class_means"], dtype=float)
        d = means.shape[1]
        prec = np.array(doc["pooled_precision"], dtype=float).reshape(d, d)
        return LdaModel(
            class_set=classes,
            class_means=means,
            pooled_precision=prec,
            shrinkage=float(doc["shrinkage"]),
            priors=np.array(doc["priors"], dtype=float),
            cv_accuracy={GripClass(c): float(a) for c, a in doc["cv_accuracy"].items()},
        )


def fit_lda(data: LabeledDataset, shrinkage: float = 0.1) -> LdaModel:
    """Equal-covariance Gaussian linear classifier with trace-normalized
    shrinkage of the pooled within-class covariance.
    """
    if not (0.0 <= shrinkage <= 1.0):
        raise ValueError("shrinkage must lie in [0, 1]")
    x = data.matrix()
    y = data.labels()
    classes = sorted(set(y), key=lambda c: FULL_CLASS_SET.index(c))
    if len(classes) < 2:
        raise ValueError("need at least 2 classes")
    n, d = x.shape
    means = np.zeros((len(classes), d))
    priors = np.zeros(len(classes))
    scatter = np.zeros((d, d))
    for i, c in enumerate(classes):
        xi = x[[j for j, lab in enumerate(y) if lab == c]]
        means[i] = xi.mean(axis=0)
        priors[i] = len(xi) / n
        centered = xi - means[i]
        scatter += centered.T @ centered
    denom = max(n - len(classes), 1)
    pooled = scatter / denom
    tr = np.trace(pooled)
    # Unit-variance floor keeps the shrinkage target positive-definite even
    # for exactly duplicated rows (zero pooled covariance).
    scale = tr / d if tr > 0 else 1.0
    reg = (1.0 - shrinkage) * pooled + shrinkage * scale * np.eye(d)
    try:
        # Cholesky both checks positive-definiteness and feeds a stable inverse.
        chol = np.linalg.cholesky(reg)
    except np.linalg.LinAlgError as exc:
        raise ValueError("regularized covariance is singular; increase shrinkage") from exc
    inv_chol = np.linalg.inv(chol)
    precision = inv_chol.T @ inv_chol
    return LdaModel(
        class_set=tuple(classes),
        class_means=means,
        pooled_precision=precision,
        shrinkage=shrinkage,
        priors=priors,
    )


def classify(model: LdaModel, f: FeatureVector | np.ndarray) -> GripClass:
    """Argmax discriminant; ties break to the lowest class-set index."""
    x = np.asarray(f.values if isinstance(f, FeatureVector) else f, dtype=float)
    s = model.scores(x)
    return model.class_set[int(np.argmax(s))]


def cross_validate(data: LabeledDataset, k: int = 4, shrinkage: float = 0.1,
                   seed: int = 0, shuffle: bool = True) -> dict[GripClass, float]:
    """Stratified k-fold per-class accuracy with a seeded shuffle."""
    if k < 2:
        raise ValueError("k must be >= 2")
    rng = np.random.default_rng(seed)
    by_class: dict[GripClass, list[int]] = {}
    for i, row in enumerate(data.rows):
        by_class.setdefault(row.label, []).append(i)
    for c, idx in by_class.items():
        if len(idx) < k:
            raise ValueError(f"class {c.value} has {len(idx)} rows, fewer than k={k}")
    folds: list[list[int]] = [[] for _ in range(k)]
    for c in sorted(by_class, key=lambda c: FULL_CLASS_SET.index(c)):
        idx = np.array(by_class[c])
        if shuffle:
            rng.shuffle(idx)
        for j, i in enumerate(idx):
            folds[j % k].append(int(i))
    correct: dict[GripClass, int] = {c: 0 for c in by_class}
    total: dict[GripClass, int] = {c: 0 for c in by_class}
    for fold in folds:
        held = set(fold)
        train_rows = tuple(r for i, r in enumerate(data.rows) if i not in held)
        model = fit_lda(LabeledDataset(train_rows), shrinkage)
        for i in fold:
            row = data.rows[i]
            total[row.label] += 1
            if classify(model, row.features) == row.label:
                correct[row.label] += 1
    return {c: correct[c] / total[c] for c in by_class}


@dataclass(frozen=True)
class GateResult:
    passed: bool
    failing: tuple[GripClass, ...]
    threshold: float


def gate_accuracy(accuracies: dict[GripClass, float], threshold: float = 0.80) -> GateResult:
    """Training passes only if no class accuracy falls below the threshold
    (strictly-less-than rule); failing classes are reported for a retrain.
    """
    if not accuracies:
        raise ValueError("empty accuracy map")
    for c, a in accuracies.items():
        if not (0.0 <= a <= 1.0):
            raise ValueError(f"accuracy for {c.value} outside [0, 1]")
    failing = tuple(sorted((c for c, a in accuracies.items() if a < threshold),
                           key=lambda c: FULL_CLASS_SET.index(c)))
    return GateResult(passed=not failing, failing=failing, threshold=threshold)
