"""Live session server: newline-delimited JSON over TCP, one session per
connection. Pose and grip inputs are mapped to session events server-side,
so live trials and simulated trials share the same state machine and the
same log schema.
"""

from __future__ import annotations

import json
import math
import socket
import socketserver
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import io as pio
from . import metrics as pm
from .session import (EventKind, MotionSample, PhaseScheme, SessionEvent,
                      TrialState, finalize, handle_event, new_trial,
                      REACH_SPHERE_RADIUS, TIME_LIMIT_S)
from .signals import GripClass
from .task import PhamFrame, TaskSpec, TaskTemplate, frame_from_config, \
    generate_task, template_task

PROTOCOL_VERSION = 1
DEFAULT_GRASP_RADIUS = 0.05
DEFAULT_BROADCAST_HZ = 30.0
LIFT_EPSILON = 0.005


@dataclass
class InputMapper:
    """Derives session events from stamped pose/grip/button messages.

    Pure given the stamped message stream: contact requires the hand within
    the grasp radius of the object while commanding the required grip; a lift
    is movement away from the grasp point while holding; placement is the
    held object entering the task tolerance around the target holder.
    """
    frame: PhamFrame
    task: TaskSpec
    grasp_radius: float = DEFAULT_GRASP_RADIUS
    grip: GripClass = GripClass.Rest
    holding: bool = False
    grasp_point: Optional[tuple] = None
    placed: bool = False
    last_t: float = -math.inf
    dropped_messages: int = 0

    def _object_pos(self):
        return self.frame.holder(self.task.start_holder).position

    def _target_pos(self):
        return self.frame.holder(self.task.target_holder).position

    def on_pose(self, t: float, pos: tuple, phase: str) -> list[SessionEvent]:
        if t < self.last_t:
            self.dropped_messages += 1
            return []
        self.last_t = t
        events: list[SessionEvent] = []
        if phase == "Reach":
            if math.dist(pos, self._object_pos()) <= REACH_SPHERE_RADIUS:
                events.append(SessionEvent(EventKind.HandInTargetSphere, t))
            if (not self.holding
                    and self.grip == self.task.required_grip
                    and math.dist(pos, self._object_pos()) <= self.grasp_radius):
                self.holding = True
                self.grasp_point = pos
                events.append(SessionEvent(EventKind.ContactOn, t))
        elif phase == "Grasped" and self.holding:
            if math.dist(pos, self.grasp_point) > LIFT_EPSILON:
                events.append(SessionEvent(EventKind.ContactOff, t))
        elif phase in ("Relocation",) and self.holding and not self.placed:
            if math.dist(pos, self._target_pos()) <= self.task.tolerance:
                self.holding = False
                self.placed = True
                events.append(SessionEvent(EventKind.PlacedAtTarget, t))
        return events

    def on_grip(self, t: float, grip: GripClass) -> list[SessionEvent]:
        if t < self.last_t:
            self.dropped_messages += 1
            return []
        self.last_t = t
        self.grip = grip
        events = [SessionEvent(EventKind.GripCommand, t, grip=grip)]
        if self.holding and grip != self.task.required_grip and not self.placed:
            # Releasing the grip mid-carry loses the object.
            self.holding = False
            events.append(SessionEvent(EventKind.Dropped, t))
        return events

    def on_button(self, t: float, phase: str) -> list[SessionEvent]:
        if t < self.last_t:
            self.dropped_messages += 1
            return []
        self.last_t = t
        if phase == "Idle":
            return [SessionEvent(EventKind.StartButton, t)]
        return [SessionEvent(EventKind.StopButton, t)]


@dataclass
class _LiveTrial:
    state: TrialState
    mapper: InputMapper
    trajectory: list[MotionSample] = field(default_factory=list)


class _Connection(socketserver.StreamRequestHandler):
    def _send(self, msg: dict):
        with self.send_lock:
            msg["seq"] = self.out_seq
            self.out_seq += 1
            self.wfile.write((json.dumps(msg) + "\n").encode("utf-8"))

    def handle(self):
        self.out_seq = 0
        self.send_lock = threading.Lock()
        self.session = None
        self.trial: Optional[_LiveTrial] = None
        self.records = []
        self.tasks = []
        self.task_index = 0
        self.t0 = None
        self.scheme = PhaseScheme.ThreePhase
        self.condition = "live"
        self.stop_broadcast = threading.Event()
        self.lock = threading.Lock()
        try:
            self._handle_messages()
        finally:
            self.stop_broadcast.set()
            self._abort_open_trial()
            self._write_session_log()

    def _elapsed(self) -> float:
        return 0.0 if self.t0 is None else time.monotonic() - self.t0

    def _handle_messages(self):
        hello = self._read()
        if hello is None:
            return
        if hello.get("type") != "Hello" or hello.get("protocol_version") != PROTOCOL_VERSION:
            self._send({"type": "Error", "code": "version",
                        "message": f"expected Hello with protocol_version {PROTOCOL_VERSION}"})
            return
        self._send(self._scene_state())
        while True:
            msg = self._read()
            if msg is None:
                return
            kind = msg.get("type")
            try:
                if kind == "StartSession":
                    self._start_session(msg)
                elif kind == "Abort":
                    self._end_session()
                    return
                elif kind in ("PoseInput", "GripInput", "PressButton"):
                    self._handle_input(kind, msg)
                else:
                    self._send({"type": "Error", "code": "unknown",
                                "message": f"unknown message type {kind!r}"})
            except Exception as exc:  # surface, do not kill the connection
                self._send({"type": "Error", "code": "internal", "message": str(exc)})

    def _read(self) -> Optional[dict]:
        line = self.rfile.readline()
        if not line:
            return None
        try:
            return json.loads(line)
        except json.JSONDecodeError:
            self._send({"type": "Error", "code": "parse", "message": "bad JSON"})
            return self._read()

    def _start_session(self, msg: dict):
        cfg = self.server.cfg
        frame = self.server.frame
        self.condition = msg.get("condition", "live")
        self.scheme = PhaseScheme(msg.get("scheme", "ThreePhase"))
        protocol = msg.get("protocol", "ch4")
        n_trials = int(msg.get("trials", 1))
        seed = int(msg.get("seed", 0))
        if protocol == "ch3":
            rng = np.random.default_rng(seed)
            self.tasks = [generate_task(frame, rng) for _ in range(n_trials)]
        else:
            templates = list(TaskTemplate)
            self.tasks = [template_task(frame, templates[i % len(templates)])
                          for i in range(n_trials)]
        self.task_index = 0
        self.records = []
        self.t0 = time.monotonic()
        self._begin_trial()
        threading.Thread(target=self._broadcast_loop, daemon=True).start()

    def _begin_trial(self):
        task = self.tasks[self.task_index]
        self.trial = _LiveTrial(
            state=new_trial(task, self.condition, self.scheme),
            mapper=InputMapper(self.server.frame, task,
                               grasp_radius=self.server.grasp_radius),
        )
        self._send({"type": "Prompt", "object": task.object.value,
                    "target_holder": task.target_holder,
                    "start_holder": task.start_holder})
        self._send(self._scene_state())

    def _phase_name(self) -> str:
        return self.trial.state.phase.value if self.trial else "Idle"

    def _scene_state(self) -> dict:
        task = (self.tasks[self.task_index]
                if self.tasks and self.task_index < len(self.tasks) else None)
        traj = self.trial.trajectory if self.trial else []
        hand = traj[-1].position if traj else self.server.frame.button_position
        start = self.trial.state.t_start if self.trial else None
        elapsed = (self._elapsed() - start) if start is not None else 0.0
        frame = self.server.frame
        return {
            "type": "SceneState",
            "frame": {
                "button": list(frame.button_position),
                "holders": [{"id": h.holder_id, "position": list(h.position),
                             "orientation": h.orientation.value}
                            for h in frame.holders],
                "workspace": {"min": list(frame.workspace_min),
                              "max": list(frame.workspace_max)},
            },
            "task": None if task is None else {
                "object": task.object.value,
                "required_grip": task.required_grip.value,
                "start_holder": task.start_holder,
                "target_holder": task.target_holder,
                "distance": task.distance,
                "tolerance": task.tolerance,
            },
            "hand": list(hand),
            "held_object": bool(self.trial and self.trial.mapper.holding),
            "phase": self._phase_name(),
            "elapsed": elapsed,
            "remaining": max(TIME_LIMIT_S - elapsed, 0.0),
        }

    def _feed(self, events):
        trial = self.trial
        for ev in events:
            trial.state = handle_event(trial.state, ev)
        if trial.state.terminal:
            self._finish_trial()

    def _handle_input(self, kind: str, msg: dict):
        if self.trial is None:
            self._send({"type": "Error", "code": "no_session",
                        "message": "no active session"})
            return
        t = self._elapsed()
        with self.lock:
            trial = self.trial
            phase = trial.state.phase.value
            if kind == "PoseInput":
                pos = (float(msg["x"]), float(msg["y"]), float(msg["z"]))
                if trial.state.t_start is not None and not trial.state.terminal:
                    trial.trajectory.append(MotionSample(t=t, position=pos))
                self._feed(trial.mapper.on_pose(t, pos, phase))
            elif kind == "GripInput":
                self._feed(trial.mapper.on_grip(t, GripClass(msg["grip"])))
            elif kind == "PressButton":
                self._feed(trial.mapper.on_button(t, phase))

    def _finish_trial(self):
        trial = self.trial
        record = finalize(trial.state, f"{self.condition}-{self.task_index:04d}",
                          trial.trajectory, subject_id="live")
        self.records.append(record)
        m = pm.trial_metrics(record)
        self._send({
            "type": "TrialEnded",
            "outcome": record.outcome.value,
            "metrics": {
                "success": m.success,
                "total_time": m.total_time,
                "phases": [{"name": p.name, "MT": p.movement_time,
                            "PE": p.path_efficiency, "ID": p.difficulty_bits,
                            "TP": p.throughput} for p in m.phases],
            },
        })
        self.task_index += 1
        if self.task_index < len(self.tasks):
            self._begin_trial()
        else:
            self.trial = None
            self._end_session()

    def _end_session(self):
        self.stop_broadcast.set()
        path = self._write_session_log()
        summary = {
            "n_trials": len(self.records),
            "completion_rate": (pm.completion_rate(self.records)
                                if self.records else None),
            "log_path": str(path) if path else None,
        }
        self.records = []
        self._send({"type": "SessionEnded", "summary": summary})

    def _abort_open_trial(self):
        # Client vanished mid-trial: close it out as a timeout-class failure.
        trial = self.trial
        self.trial = None
        if trial is None or trial.state.t_start is None or trial.state.terminal:
            return
        t = max(self._elapsed(), trial.state.t_start + TIME_LIMIT_S + 1e-3)
        trial.state = handle_event(trial.state,
                                   SessionEvent(EventKind.Tick, t))
        record = finalize(trial.state, f"{self.condition}-{self.task_index:04d}",
                          trial.trajectory, subject_id="live")
        self.records.append(record)
        self.server.note_abort(record.trial_id)

    def _write_session_log(self):
        if not self.records or self.server.log_dir is None:
            return None
        path = Path(self.server.log_dir) / f"session-{int(time.time()*1000)}-{id(self):x}.jsonl"
        path.parent.mkdir(parents=True, exist_ok=True)
        pio.write_log(self.records, path)
        return path

    def _broadcast_loop(self):
        interval = 1.0 / self.server.broadcast_hz
        while not self.stop_broadcast.is_set():
            try:
                with self.lock:
                    trial = self.trial
                    if trial is not None and trial.state.t_start is not None \
                            and not trial.state.terminal:
                        self._feed([SessionEvent(EventKind.Tick, self._elapsed())])
                    self._send(self._scene_state())
            except (OSError, ValueError):
                return
            time.sleep(interval)


class _Server(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True


class ServerHandle:
    def __init__(self, server: _Server, thread: threading.Thread):
        self._server = server
        self._thread = thread
        self.address = server.server_address

    def wait(self):
        self._thread.join()

    def close(self):
        self._server.shutdown()
        self._server.server_close()


def serve(host: str, port: int, cfg: dict, log_dir: Optional[str] = None) -> ServerHandle:
    """Start the session server; each connection owns at most one session."""
    server = _Server((host, port), _Connection)
    server.cfg = cfg
    server.frame = frame_from_config(cfg)
    svc = cfg.get("service", {})
    server.grasp_radius = float(svc.get("grasp_radius", DEFAULT_GRASP_RADIUS))
    server.broadcast_hz = float(svc.get("broadcast_hz", DEFAULT_BROADCAST_HZ))
    server.log_dir = log_dir
    server.aborted_trials = []
    server.note_abort = server.aborted_trials.append
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    return ServerHandle(server, thread)
