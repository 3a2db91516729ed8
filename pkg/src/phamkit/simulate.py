"""Synthetic subject: minimum-jerk reaching with condition-dependent timing
and variability, class-conditional synthetic EMG, and whole-experiment runs.

Every simulated trial is produced by feeding its event stream through the
real session state machine, so simulator output and live sessions share one
code path for outcomes and phase bounds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .session import (EventKind, MotionSample, PhaseScheme, SessionEvent,
                      TrialRecord, finalize, handle_event, new_trial)
from .signals import (EMG_RATE_HZ, FULL_CLASS_SET, N_CHANNELS, EmgFrame,
                      GripClass)
from .task import PhamFrame, TaskSpec, TaskTemplate, chapter4_sequence, generate_task

MOTION_RATE_HZ = 90.0
TICK_INTERVAL_S = 0.5
STALL_UNTIL_S = 30.5


@dataclass(frozen=True)
class SubjectModel:
    base_reach_time: float = 1.2
    grasp_dwell: float = 0.4
    path_noise_sd: float = 0.004
    timing_cv: float = 0.45
    emg_class_separation: float = 6.0
    failure_rate: float = 0.05

    def __post_init__(self):
        if min(self.base_reach_time, self.grasp_dwell, self.path_noise_sd,
               self.timing_cv, self.emg_class_separation) < 0:
            raise ValueError("subject parameters must be non-negative")
        if not (0.0 <= self.failure_rate <= 1.0):
            raise ValueError("failure_rate must lie in [0, 1]")


@dataclass(frozen=True)
class ConditionProfile:
    label: str
    time_scale: float = 1.0
    wobble_amp: float = 0.0
    early_decel: float = 0.0
    extra_failure: float = 0.0

    def __post_init__(self):
        if not self.label:
            raise ValueError("condition label must be non-empty")
        if self.time_scale <= 0:
            raise ValueError("time_scale must be positive")
        if not (0.0 <= self.early_decel < 1.0):
            raise ValueError("early_decel must lie in [0, 1)")


def min_jerk(p0: Sequence[float], p1: Sequence[float], duration: float,
             t: float) -> np.ndarray:
    """Quintic point-to-point position at time t: straight segment with the
    smooth 10t^3 - 15t^4 + 6t^5 profile.
    """
    if duration <= 0:
        raise ValueError("duration must be positive")
    if not (0.0 <= t <= duration):
        raise ValueError("t must lie in [0, duration]")
    tau = t / duration
    s = 10 * tau**3 - 15 * tau**4 + 6 * tau**5
    p0 = np.asarray(p0, dtype=float)
    p1 = np.asarray(p1, dtype=float)
    return p0 + (p1 - p0) * s


def _warp(tau: float, early_decel: float) -> float:
    """Piecewise-linear time warp moving the speed peak to (0.5 - 0.5e)."""
    if early_decel == 0.0:
        return tau
    a = 0.5 - 0.5 * early_decel
    if tau <= a:
        return 0.5 * tau / a
    return 0.5 + 0.5 * (tau - a) / (1.0 - a)


def _smoothed_noise(rng: np.random.Generator, n: int, sd: float) -> np.ndarray:
    if sd == 0.0 or n == 0:
        return np.zeros((n, 3))
    raw = rng.normal(size=(n + 8, 3))
    kernel = np.ones(9) / 9.0
    sm = np.stack([np.convolve(raw[:, i], kernel, mode="valid") for i in range(3)], axis=1)
    scale = sd / max(np.std(sm), 1e-12)
    return sm * scale


def _leg_samples(p0: np.ndarray, p1: np.ndarray, t0: float, duration: float,
                 rng: np.random.Generator, noise_sd: float, wobble_amp: float,
                 early_decel: float) -> list[MotionSample]:
    n = max(int(round(duration * MOTION_RATE_HZ)), 3)
    # linspace pins the final timestamp to exactly `duration`, so the last
    # sample of a leg coincides with the leg-end event time
    ts = np.linspace(0.0, duration, n + 1)
    direction = p1 - p0
    length = np.linalg.norm(direction)
    if length > 0:
        unit = direction / length
        perp = np.cross(unit, np.array([0.0, 1.0, 0.0]))
        if np.linalg.norm(perp) < 1e-9:
            perp = np.cross(unit, np.array([1.0, 0.0, 0.0]))
        perp /= np.linalg.norm(perp)
    else:
        perp = np.array([0.0, 0.0, 1.0])
    noise = _smoothed_noise(rng, len(ts), noise_sd)
    # wobble phase varies trial to trial, like tremor, so repeated trials
    # spread around the straight path instead of tracing one fixed curve
    wobble_phase = rng.uniform(0.0, 2.0 * math.pi) if wobble_amp > 0 else 0.0
    out = []
    for i, t in enumerate(ts):
        tau = min(t / duration, 1.0)
        u = min(_warp(tau, early_decel), 1.0)
        pos = min_jerk(p0, p1, 1.0, u)
        envelope = math.sin(math.pi * tau)
        pos = pos + envelope * noise[i] + \
            wobble_amp * math.sin(2 * math.pi * tau + wobble_phase) * envelope * perp
        out.append(MotionSample(t=t0 + float(t), position=tuple(pos)))
    return out


@dataclass
class SimulatedTrial:
    samples: list[MotionSample]
    events: list[SessionEvent]


def _dwell_samples(p: np.ndarray, t0: float, duration: float) -> list[MotionSample]:
    n = max(int(round(duration * MOTION_RATE_HZ)), 1)
    ts = np.linspace(0.0, duration, n + 1)[1:]
    return [MotionSample(t=t0 + float(dt), position=tuple(p)) for dt in ts]


def synth_trajectory(task: TaskSpec, frame: PhamFrame, subject: SubjectModel,
                     cond: ConditionProfile, seed,
                     scheme: PhaseScheme = PhaseScheme.ThreePhase) -> SimulatedTrial:
    """One trial's motion samples and event stream, deterministic per seed.

    Legs run button -> start holder -> target holder -> button with grasp and
    release dwells; per-leg duration is base_reach_time * time_scale scaled by
    a unit-mean lognormal draw. With probability failure_rate + extra_failure
    the trial instead drops the object or stalls past the time budget.
    """
    rng = np.random.default_rng(seed)
    button = np.array(frame.button_position)
    p_obj = np.array(frame.holder(task.start_holder).position)
    p_tgt = np.array(frame.holder(task.target_holder).position)

    sigma2 = math.log(1.0 + subject.timing_cv**2)
    def leg_time() -> float:
        draw = rng.normal()
        return subject.base_reach_time * cond.time_scale * \
            math.exp(draw * math.sqrt(sigma2) - sigma2 / 2)

    # time_scale multiplies every phase duration, dwells included.
    dwell = subject.grasp_dwell * cond.time_scale
    fail_p = min(subject.failure_rate + cond.extra_failure, 1.0)
    fail_roll = rng.random()
    fail_mode = None
    if fail_roll < fail_p:
        fail_mode = "dropped" if rng.random() < 0.5 else "timeout"
    drop_frac = rng.uniform(0.2, 0.9)

    durations = [leg_time(), leg_time(), leg_time()]
    samples: list[MotionSample] = [MotionSample(t=0.0, position=tuple(button))]
    events: list[SessionEvent] = [SessionEvent(EventKind.StartButton, 0.0),
                                  SessionEvent(EventKind.GripCommand, 0.0,
                                               grip=GripClass.Open)]
    t = 0.0

    def add_leg(p0, p1, dur):
        nonlocal t
        leg = _leg_samples(p0, p1, t, dur, rng, subject.path_noise_sd,
                           cond.wobble_amp, cond.early_decel)
        samples.extend(leg[1:])
        t += dur

    # Reach leg.
    add_leg(button, p_obj, durations[0])
    events.append(SessionEvent(EventKind.HandInTargetSphere, t))
    events.append(SessionEvent(EventKind.GripCommand, t, grip=task.required_grip))
    events.append(SessionEvent(EventKind.ContactOn, t))
    samples.extend(_dwell_samples(p_obj, t, dwell))
    t += dwell
    events.append(SessionEvent(EventKind.ContactOff, t))

    if fail_mode == "dropped":
        # Travel part of the relocation leg, then lose the object.
        partial = durations[1] * drop_frac
        leg = _leg_samples(p_obj, p_tgt, t, durations[1], rng,
                           subject.path_noise_sd, cond.wobble_amp, cond.early_decel)
        cutoff = t + partial
        samples.extend(s for s in leg[1:] if s.t <= cutoff)
        events.append(SessionEvent(EventKind.Dropped, cutoff))
        return _with_ticks(samples, events, cutoff)

    if fail_mode == "timeout":
        # Stall mid-relocation until the budget lapses.
        partial = durations[1] * drop_frac
        leg = _leg_samples(p_obj, p_tgt, t, durations[1], rng,
                           subject.path_noise_sd, cond.wobble_amp, cond.early_decel)
        kept = [s for s in leg[1:] if s.t <= t + partial]
        samples.extend(kept)
        hold = samples[-1].position
        t_stall = samples[-1].t
        stall_until = max(STALL_UNTIL_S, t_stall + 0.6)
        samples.extend(_dwell_samples(np.array(hold), t_stall, stall_until - t_stall))
        return _with_ticks(samples, events, stall_until)

    # Relocation leg.
    add_leg(p_obj, p_tgt, durations[1])
    events.append(SessionEvent(EventKind.PlacedAtTarget, t))
    events.append(SessionEvent(EventKind.GripCommand, t, grip=GripClass.Open))
    samples.extend(_dwell_samples(p_tgt, t, dwell))
    t += dwell
    # Return leg.
    add_leg(p_tgt, button, durations[2])
    events.append(SessionEvent(EventKind.StopButton, t))
    return _with_ticks(samples, events, t)


def _with_ticks(samples: list[MotionSample], events: list[SessionEvent],
                t_end: float) -> SimulatedTrial:
    ticks = [SessionEvent(EventKind.Tick, k * TICK_INTERVAL_S)
             for k in range(1, int(t_end / TICK_INTERVAL_S) + 1)]
    merged = sorted(events + ticks, key=lambda e: e.t)
    return SimulatedTrial(samples=samples, events=merged)


_CLASS_PATTERNS = np.random.default_rng(20240401).normal(
    size=(len(FULL_CLASS_SET), N_CHANNELS))
_CLASS_PATTERNS /= np.linalg.norm(_CLASS_PATTERNS, axis=1, keepdims=True)


def synth_emg(grip: GripClass, duration: float, separation: float,
              seed) -> list[EmgFrame]:
    """Class-conditional 8-channel activation: a fixed per-class mean pattern
    scaled by the separation knob plus unit-variance Gaussian noise at the
    nominal EMG rate.
    """
    if duration <= 0:
        raise ValueError("duration must be positive")
    rng = np.random.default_rng(seed)
    n = int(round(duration * EMG_RATE_HZ))
    idx = FULL_CLASS_SET.index(grip)
    mean = 1.0 + 0.25 * separation * _CLASS_PATTERNS[idx]
    x = mean + rng.normal(size=(n, N_CHANNELS))
    dt = 1.0 / EMG_RATE_HZ
    return [EmgFrame(t=i * dt, channels=tuple(x[i])) for i in range(n)]


@dataclass(frozen=True)
class ProtocolDescriptor:
    kind: str                       # "ch3" | "ch4"
    sessions: int = 5
    trials_per_session: int = 10
    template_trials: int = 30

    def __post_init__(self):
        if self.kind not in ("ch3", "ch4"):
            raise ValueError(f"unknown protocol kind {self.kind!r}")
        if self.sessions < 1 or self.trials_per_session < 1 or self.template_trials < 1:
            raise ValueError("protocol counts must be positive")

    @property
    def scheme(self) -> PhaseScheme:
        return PhaseScheme.TwoPhase if self.kind == "ch3" else PhaseScheme.ThreePhase


def run_trial(task: TaskSpec, frame: PhamFrame, subject: SubjectModel,
              cond: ConditionProfile, scheme: PhaseScheme, seed,
              trial_id: str, subject_id: str = "sim") -> TrialRecord:
    sim = synth_trajectory(task, frame, subject, cond, seed, scheme)
    state = new_trial(task, cond.label, scheme)
    for ev in sim.events:
        state = handle_event(state, ev)
    return finalize(state, trial_id, sim.samples, subject_id)


def run_experiment(descriptor: ProtocolDescriptor, frame: PhamFrame,
                   subject: SubjectModel, conditions: Sequence[ConditionProfile],
                   seed: int, subject_id: str = "sim") -> list[TrialRecord]:
    """Full protocol for every condition, through the session state machine."""
    records: list[TrialRecord] = []
    for ci, cond in enumerate(conditions):
        if descriptor.kind == "ch3":
            n = descriptor.sessions * descriptor.trials_per_session
            task_rng = np.random.default_rng([seed, ci, 0xA5])
            tasks = [generate_task(frame, task_rng) for _ in range(n)]
        else:
            tasks = []
            for template in TaskTemplate:
                tasks.extend(chapter4_sequence(frame, template,
                                               descriptor.template_trials))
        for ti, task in enumerate(tasks):
            records.append(run_trial(
                task, frame, subject, cond, descriptor.scheme,
                seed=[seed, ci, ti], trial_id=f"{cond.label}-{ti:04d}",
                subject_id=subject_id))
    return records
