"""Per-trial kinematic metrics, summary statistics, paired comparison, and
trajectory envelopes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .session import MotionSample, Outcome, PhaseSegment, TrialRecord, segment_phases
from .stats import t_sf_two_tailed

SIGNIFICANCE_ALPHA = 0.05
VELOCITY_SMOOTH_SAMPLES = 5


def completion_rate(records: Sequence[TrialRecord]) -> float:
    if not records:
        raise ValueError("no records")
    n_success = sum(1 for r in records if r.outcome is Outcome.Success)
    return n_success / len(records)


def path_trajectory(points: Sequence[Sequence[float]]) -> float:
    """Traveled arc length: sum of Euclidean distances between consecutive
    3-D points.
    """
    if len(points) < 2:
        raise ValueError("need at least 2 points")
    p = np.asarray(points, dtype=float)
    return float(np.sum(np.linalg.norm(np.diff(p, axis=0), axis=1)))


def path_efficiency(points: Sequence[Sequence[float]], straight_distance: float) -> float:
    """100 * straight-line distance / traveled arc length, in percent."""
    if straight_distance <= 0:
        raise ValueError("straight-line distance must be positive")
    pt = path_trajectory(points)
    if pt == 0:
        raise ValueError("degenerate path with zero length")
    return 100.0 * straight_distance / pt


def index_of_difficulty(distance: float, tolerance: float) -> float:
    """log2(D/W + 1), in bits."""
    if tolerance <= 0:
        raise ValueError("tolerance must be positive")
    if distance < 0:
        raise ValueError("distance must be non-negative")
    return math.log2(distance / tolerance + 1.0)


def throughput(difficulty_bits: float, movement_time: float) -> float:
    """ID / MT, in bits per second."""
    if movement_time <= 0:
        raise ValueError("movement time must be positive")
    return difficulty_bits / movement_time


def peak_velocity(samples: Sequence[MotionSample],
                  smooth: int = VELOCITY_SMOOTH_SAMPLES) -> tuple[float, float]:
    """(max speed, time of max) from moving-average-smoothed positions and
    central differences. Ties resolve to the earliest maximum.
    """
    if len(samples) < 3:
        raise ValueError("need at least 3 samples")
    t = np.array([s.t for s in samples])
    p = np.array([s.position for s in samples], dtype=float)
    if smooth > 1 and len(p) >= smooth:
        kernel = np.ones(smooth) / smooth
        p = np.stack([np.convolve(p[:, i], kernel, mode="valid") for i in range(3)], axis=1)
        half = (smooth - 1) // 2
        t = t[half:half + len(p)]
    if len(p) < 3:
        raise ValueError("too few samples after smoothing")
    dt = t[2:] - t[:-2]
    v = np.linalg.norm(p[2:] - p[:-2], axis=1) / dt
    i = int(np.argmax(v))  # argmax returns the first maximum
    return float(v[i]), float(t[1 + i])


@dataclass(frozen=True)
class PhaseMetrics:
    name: str
    movement_time: float
    straight_distance: float
    path_length: float
    path_efficiency: float
    difficulty_bits: float
    throughput: float


@dataclass(frozen=True)
class TrialMetrics:
    trial_id: str
    condition: str
    success: bool
    total_time: float
    phases: tuple[PhaseMetrics, ...]
    peak_speed: Optional[float]
    t_peak: Optional[float]


def _phase_metrics(seg: PhaseSegment, tolerance: float) -> PhaseMetrics:
    pts = [s.position for s in seg.samples]
    # Per-phase straight-line distance runs between the phase's own endpoints.
    d = math.dist(pts[0], pts[-1])
    pt = path_trajectory(pts)
    mt = seg.t_end - seg.t_start
    difficulty = index_of_difficulty(d, tolerance)
    return PhaseMetrics(
        name=seg.name,
        movement_time=mt,
        straight_distance=d,
        path_length=pt,
        path_efficiency=100.0 * d / pt if pt > 0 else 100.0,
        difficulty_bits=difficulty,
        throughput=throughput(difficulty, mt) if mt > 0 else 0.0,
    )


def trial_metrics(record: TrialRecord) -> TrialMetrics:
    """All per-trial quantities. Fitts quantities are computed only for
    successful trials; failures carry just the outcome and total time.
    """
    if record.outcome is not Outcome.Success:
        return TrialMetrics(record.trial_id, record.condition, False,
                            record.total_time, (), None, None)
    segs = segment_phases(record)
    phases = tuple(_phase_metrics(s, record.task.tolerance)
                   for s in segs if s.complete and len(s.samples) >= 2)
    if len(record.trajectory) >= 3:
        speed, t_peak = peak_velocity(record.trajectory)
    else:
        speed, t_peak = None, None
    return TrialMetrics(record.trial_id, record.condition, True,
                        record.total_time, phases, speed, t_peak)


@dataclass(frozen=True)
class SummaryStats:
    n: int
    mean: float
    sd: float
    sem: float


def summarize(values: Sequence[float]) -> SummaryStats:
    """Mean, sample standard deviation (n-1), and standard error."""
    if len(values) == 0:
        raise ValueError("no values")
    v = np.asarray(values, dtype=float)
    mean = float(np.mean(v))
    sd = float(np.std(v, ddof=1)) if len(v) > 1 else 0.0
    return SummaryStats(n=len(v), mean=mean, sd=sd, sem=sd / math.sqrt(len(v)))


@dataclass(frozen=True)
class ComparisonResult:
    delta: float
    percent: float
    t: Optional[float]
    df: int
    p: Optional[float]
    significant: bool
    degenerate: bool
    n_pairs_used: int


def compare_paired(a: Sequence[Optional[float]], b: Sequence[Optional[float]],
                   pair_ids: Optional[Sequence] = None) -> ComparisonResult:
    """Paired t-test of condition a against reference condition b.

    Pairs with a missing side are excluded before testing. `delta` and
    `percent` are taken on the means of the used pairs, with b as the
    percent base. A zero-variance difference is flagged degenerate rather
    than reported as p = 0.
    """
    if pair_ids is not None:
        if not (len(pair_ids) == len(a) == len(b)):
            raise ValueError("pair_ids must align with both value sequences")
    if len(a) != len(b):
        raise ValueError("paired sequences must have equal length")
    pairs = [(x, y) for x, y in zip(a, b)
             if x is not None and y is not None
             and not (math.isnan(x) or math.isnan(y))]
    n = len(pairs)
    if n < 2:
        raise ValueError(f"need at least 2 usable pairs, got {n}")
    ax = np.array([p[0] for p in pairs])
    bx = np.array([p[1] for p in pairs])
    delta = float(np.mean(ax) - np.mean(bx))
    percent = 100.0 * delta / float(np.mean(bx))
    d = ax - bx
    sd = float(np.std(d, ddof=1))
    df = n - 1
    if sd == 0.0:
        return ComparisonResult(delta, percent, None, df, None,
                                significant=False, degenerate=True, n_pairs_used=n)
    t = float(np.mean(d)) / (sd / math.sqrt(n))
    p = t_sf_two_tailed(t, df)
    return ComparisonResult(delta, percent, t, df, p,
                            significant=p < SIGNIFICANCE_ALPHA,
                            degenerate=False, n_pairs_used=n)


@dataclass(frozen=True)
class TrajectoryEnvelope:
    phase: str
    plane: tuple[str, str]
    bins: int
    mean: np.ndarray   # (bins, 2)
    lo: np.ndarray     # (bins, 2)
    hi: np.ndarray     # (bins, 2)
    n_trials: int


_AXIS = {"x": 0, "y": 1, "z": 2}


def _resample_by_arc_length(points: np.ndarray, bins: int) -> np.ndarray:
    seg = np.linalg.norm(np.diff(points, axis=0), axis=1)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    total = s[-1]
    if total == 0:
        return np.repeat(points[:1], bins, axis=0)
    stations = np.linspace(0.0, total, bins)
    out = np.empty((bins, points.shape[1]))
    for i in range(points.shape[1]):
        out[:, i] = np.interp(stations, s, points[:, i])
    return out


def envelope(records: Sequence[TrialRecord], phase: str,
             plane: tuple[str, str] = ("x", "z"), bins: int = 50) -> TrajectoryEnvelope:
    """Mean path and outer range across trials, resampled to equally spaced
    normalized-arc-length stations in the chosen projection plane.
    """
    if bins < 2:
        raise ValueError("bins must be >= 2")
    ai, bi = _AXIS[plane[0]], _AXIS[plane[1]]
    paths = []
    for r in records:
        if r.outcome is not Outcome.Success:
            continue
        for seg in segment_phases(r):
            if seg.name == phase and seg.complete and len(seg.samples) >= 2:
                pts = np.array([s.position for s in seg.samples])[:, [ai, bi]]
                paths.append(_resample_by_arc_length(pts, bins))
    if not paths:
        raise ValueError(f"no successful records contain phase {phase!r}")
    stack = np.stack(paths)  # (n, bins, 2)
    return TrajectoryEnvelope(
        phase=phase, plane=plane, bins=bins,
        mean=stack.mean(axis=0), lo=stack.min(axis=0), hi=stack.max(axis=0),
        n_trials=len(paths),
    )
