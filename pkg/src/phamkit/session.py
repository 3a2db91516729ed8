"""Trial state machine, contact-event derivation, and phase segmentation.

The machine is event-sourced: `handle_event` is a pure transition, so
replaying a recorded event log reproduces the identical trial record.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Optional, Sequence

from .signals import GripClass
from .task import TaskSpec

TIME_LIMIT_S = 30.0
REACH_SPHERE_RADIUS = 0.01

CONTACT_ON_THRESHOLD = 0.5
CONTACT_OFF_EPSILON = 0.05


class PhaseScheme(Enum):
    TwoPhase = "TwoPhase"
    ThreePhase = "ThreePhase"


class EventKind(Enum):
    StartButton = "StartButton"
    StopButton = "StopButton"
    HandInTargetSphere = "HandInTargetSphere"
    ContactOn = "ContactOn"
    ContactOff = "ContactOff"
    PlacedAtTarget = "PlacedAtTarget"
    Dropped = "Dropped"
    GripCommand = "GripCommand"
    Tick = "Tick"


@dataclass(frozen=True)
class SessionEvent:
    kind: EventKind
    t: float
    grip: Optional[GripClass] = None


@dataclass(frozen=True)
class MotionSample:
    t: float
    position: tuple[float, float, float]
    orientation: tuple[float, float, float, float] = (1.0, 0.0, 0.0, 0.0)

    def __post_init__(self):
        norm = math.sqrt(sum(q * q for q in self.orientation))
        if abs(norm - 1.0) > 1e-6:
            raise ValueError("orientation quaternion must be unit norm")


class Outcome(Enum):
    Success = "Success"
    Timeout = "Timeout"
    Dropped = "Dropped"


class _Phase(Enum):
    IDLE = "Idle"
    REACH = "Reach"
    GRASPED = "Grasped"          # ThreePhase only: contact made, not yet lifted
    RELOCATION = "Relocation"
    RETURN = "Return"
    PENDING_STOP = "PendingStop"  # TwoPhase: placed, awaiting the stop button
    SUCCESS = "Success"
    TIMEOUT = "Timeout"
    DROPPED = "Dropped"

_TERMINAL = {_Phase.SUCCESS, _Phase.TIMEOUT, _Phase.DROPPED}
_HOLDING = {_Phase.GRASPED, _Phase.RELOCATION}


@dataclass(frozen=True)
class TrialState:
    task: TaskSpec
    condition: str
    scheme: PhaseScheme
    phase: _Phase = _Phase.IDLE
    t_start: Optional[float] = None
    t_last: float = -math.inf
    # Boundary timestamps, keyed by the event that set them.
    marks: dict = field(default_factory=dict)
    events: tuple[SessionEvent, ...] = ()
    grip_commands: tuple[tuple[float, GripClass], ...] = ()
    outcome: Optional[Outcome] = None
    total_time: Optional[float] = None
    ignored: int = 0

    @property
    def terminal(self) -> bool:
        return self.phase in _TERMINAL


def new_trial(task: TaskSpec, condition: str, scheme: PhaseScheme) -> TrialState:
    return TrialState(task=task, condition=condition, scheme=scheme)


def _mark(state: TrialState, key: str, t: float) -> dict:
    marks = dict(state.marks)
    marks[key] = t
    return marks


def handle_event(state: TrialState, event: SessionEvent) -> TrialState:
    """Advance the trial. Illegal events are recorded and ignored so noisy
    live input cannot corrupt a trial; terminal states absorb everything.
    """
    if event.t < state.t_last:
        raise ValueError(f"event time regressed: {event.t} < {state.t_last}")
    base = replace(state, events=state.events + (event,), t_last=event.t)
    if state.terminal:
        return replace(base, ignored=base.ignored + 1)

    k = event.kind
    if k is EventKind.GripCommand:
        # Grip commands are telemetry for diagnostics, never a transition.
        return replace(base, grip_commands=base.grip_commands + ((event.t, event.grip),))
    if k is EventKind.Tick:
        if state.phase is not _Phase.IDLE and event.t - state.t_start > TIME_LIMIT_S:
            return replace(base, phase=_Phase.TIMEOUT, outcome=Outcome.Timeout,
                           total_time=event.t - state.t_start)
        return base
    if k is EventKind.Dropped and state.phase in _HOLDING:
        return replace(base, phase=_Phase.DROPPED, outcome=Outcome.Dropped,
                       total_time=event.t - state.t_start)

    two = state.scheme is PhaseScheme.TwoPhase
    transitions = {
        (_Phase.IDLE, EventKind.StartButton): (_Phase.REACH, "start"),
        (_Phase.RELOCATION, EventKind.PlacedAtTarget): (
            _Phase.PENDING_STOP if two else _Phase.RETURN, "placed"),
        (_Phase.PENDING_STOP, EventKind.StopButton): (_Phase.SUCCESS, "stop"),
        (_Phase.RETURN, EventKind.StopButton): (_Phase.SUCCESS, "stop"),
    }
    if two:
        transitions[(_Phase.REACH, EventKind.HandInTargetSphere)] = (
            _Phase.RELOCATION, "reach_end")
    else:
        transitions[(_Phase.REACH, EventKind.ContactOn)] = (_Phase.GRASPED, "contact_on")
        transitions[(_Phase.GRASPED, EventKind.ContactOff)] = (_Phase.RELOCATION, "lift")

    hit = transitions.get((state.phase, k))
    if hit is None:
        return replace(base, ignored=base.ignored + 1)
    phase, mark_key = hit
    out = replace(base, phase=phase, marks=_mark(base, mark_key, event.t))
    if mark_key == "start":
        out = replace(out, t_start=event.t)
    if phase is _Phase.SUCCESS:
        out = replace(out, outcome=Outcome.Success, total_time=event.t - out.t_start)
    return out


@dataclass(frozen=True)
class PhaseBound:
    name: str
    t_start: float
    t_end: Optional[float]   # None while the phase was still open at failure
    complete: bool


@dataclass(frozen=True)
class TrialRecord:
    trial_id: str
    condition: str
    task: TaskSpec
    scheme: PhaseScheme
    trajectory: tuple[MotionSample, ...]
    grip_commands: tuple[tuple[float, GripClass], ...]
    events: tuple[SessionEvent, ...]
    phase_bounds: tuple[PhaseBound, ...]
    outcome: Outcome
    total_time: float
    subject_id: str = "sim"


def phase_bounds_from_state(state: TrialState) -> tuple[PhaseBound, ...]:
    """Contiguous phase intervals from the boundary marks.

    TwoPhase: Reach [start, reach_end], Relocation [reach_end, stop].
    ThreePhase: Reach [start, contact_on], Relocation [contact_on, placed],
    Return [placed, stop]. The grasp dwell between first contact and lift is
    counted at the head of Relocation so the phases partition the trial.
    """
    m = state.marks
    if "start" not in m:
        return ()
    if state.scheme is PhaseScheme.TwoPhase:
        chain = [("Reach", "start", "reach_end"), ("Relocation", "reach_end", "stop")]
    else:
        chain = [("Reach", "start", "contact_on"),
                 ("Relocation", "contact_on", "placed"),
                 ("Return", "placed", "stop")]
    bounds: list[PhaseBound] = []
    for name, k0, k1 in chain:
        if k0 not in m:
            break
        t0 = m[k0]
        if k1 in m:
            bounds.append(PhaseBound(name, t0, m[k1], True))
        else:
            end = state.t_start + state.total_time if state.total_time is not None else None
            bounds.append(PhaseBound(name, t0, end, False))
            break
    return tuple(bounds)


def finalize(state: TrialState, trial_id: str,
             trajectory: Sequence[MotionSample] = (),
             subject_id: str = "sim") -> TrialRecord:
    if not state.terminal:
        raise ValueError("trial is not in a terminal state")
    return TrialRecord(
        trial_id=trial_id,
        condition=state.condition,
        task=state.task,
        scheme=state.scheme,
        trajectory=tuple(trajectory),
        grip_commands=state.grip_commands,
        events=state.events,
        phase_bounds=phase_bounds_from_state(state),
        outcome=state.outcome,
        total_time=state.total_time,
        subject_id=subject_id,
    )


def replay(task: TaskSpec, condition: str, scheme: PhaseScheme,
           events: Sequence[SessionEvent], trial_id: str,
           trajectory: Sequence[MotionSample] = (),
           subject_id: str = "sim") -> TrialRecord:
    """Re-run a recorded event log through the machine."""
    state = new_trial(task, condition, scheme)
    for ev in events:
        state = handle_event(state, ev)
    return finalize(state, trial_id, trajectory, subject_id)


def detect_reach_end(trajectory: Sequence[MotionSample],
                     target_position: tuple[float, float, float],
                     radius: float = REACH_SPHERE_RADIUS) -> Optional[float]:
    """First sample time within `radius` of the target, if any."""
    if not trajectory:
        raise ValueError("empty trajectory")
    for s in trajectory:
        if math.dist(s.position, target_position) <= radius:
            return s.t
    return None


@dataclass(frozen=True)
class FsrSignal:
    object_sensor: tuple[tuple[float, float], ...]
    target_sensor: tuple[tuple[float, float], ...] = ()

    def __post_init__(self):
        for series in (self.object_sensor, self.target_sensor):
            for t, f in series:
                if not (math.isfinite(f) and f >= 0):
                    raise ValueError("FSR forces must be finite and non-negative")


def detect_contact(fsr: FsrSignal,
                   on_threshold: float = CONTACT_ON_THRESHOLD,
                   off_epsilon: float = CONTACT_OFF_EPSILON) -> list[SessionEvent]:
    """Contact/lift/placement events from FSR traces with hysteresis.

    ContactOn fires at the first rise of the object sensor above
    `on_threshold`; dips that stay above `off_epsilon` do not re-trigger.
    ContactOff (lift) fires when the held object's force falls to or below
    `off_epsilon`; PlacedAtTarget fires when the target holder's sensor rises
    above `on_threshold` after the lift.
    """
    events: list[SessionEvent] = []
    contacted = False
    lifted_at: Optional[float] = None
    for t, f in fsr.object_sensor:
        if not contacted and f > on_threshold:
            contacted = True
            events.append(SessionEvent(EventKind.ContactOn, t))
        elif contacted and lifted_at is None and f <= off_epsilon:
            lifted_at = t
            events.append(SessionEvent(EventKind.ContactOff, t))
    if lifted_at is not None:
        for t, f in fsr.target_sensor:
            if t >= lifted_at and f > on_threshold:
                events.append(SessionEvent(EventKind.PlacedAtTarget, t))
                break
    return events


@dataclass(frozen=True)
class PhaseSegment:
    name: str
    t_start: float
    t_end: Optional[float]
    complete: bool
    samples: tuple[MotionSample, ...]


def segment_phases(record: TrialRecord) -> list[PhaseSegment]:
    """Slice the trajectory by the phase bounds; failure records yield the
    completed prefix with the open phase flagged incomplete.
    """
    if not record.phase_bounds:
        raise ValueError("record has no phase bounds to segment")
    segments: list[PhaseSegment] = []
    for i, b in enumerate(record.phase_bounds):
        t_end = b.t_end
        if t_end is None:
            samples = tuple(s for s in record.trajectory if s.t >= b.t_start)
        else:
            last = i == len(record.phase_bounds) - 1
            samples = tuple(
                s for s in record.trajectory
                if b.t_start <= s.t and (s.t <= t_end if last else s.t < t_end)
            )
            # Keep the boundary sample in both adjacent slices so each phase
            # path starts where the previous one ended.
            if not last:
                samples = samples + tuple(
                    s for s in record.trajectory if s.t == t_end)
        segments.append(PhaseSegment(b.name, b.t_start, t_end, b.complete, samples))
    return segments
