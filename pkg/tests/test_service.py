import json
import socket
import time

import pytest

from phamkit.io import read_log
from phamkit.service import PROTOCOL_VERSION, InputMapper, serve
from phamkit.session import EventKind
from phamkit.signals import GripClass
from phamkit.task import TaskTemplate, load_config, template_task


@pytest.fixture
def server(tmp_path):
    handle = serve("127.0.0.1", 0, load_config(), log_dir=str(tmp_path))
    yield handle, tmp_path
    handle.close()


class Client:
    def __init__(self, address, hello=True, version=PROTOCOL_VERSION):
        self.sock = socket.create_connection(address, timeout=10)
        self.fh = self.sock.makefile("r", encoding="utf-8")
        if hello:
            self.send({"type": "Hello", "protocol_version": version})

    def send(self, msg):
        self.sock.sendall((json.dumps(msg) + "\n").encode())

    def recv(self):
        line = self.fh.readline()
        if not line:
            return None
        return json.loads(line)

    def wait_for(self, kind, timeout=10.0):
        deadline = time.monotonic() + timeout
        while time.monotonic() < deadline:
            msg = self.recv()
            if msg is None:
                raise AssertionError(f"connection closed waiting for {kind}")
            if msg["type"] == kind:
                return msg
        raise AssertionError(f"timed out waiting for {kind}")

    def close(self):
        self.fh.close()
        self.sock.close()


class TestHandshake:
    def test_hello_yields_scene_state(self, server):
        handle, _ = server
        c = Client(handle.address)
        scene = c.wait_for("SceneState")
        assert len(scene["frame"]["holders"]) == 12
        assert scene["task"] is None
        assert scene["phase"] == "Idle"
        c.close()

    def test_version_mismatch_rejected(self, server):
        handle, _ = server
        c = Client(handle.address, version=99)
        msg = c.wait_for("Error")
        assert msg["code"] == "version"
        assert c.recv() is None  # server hangs up
        c.close()

    def test_input_before_session_errors(self, server):
        handle, _ = server
        c = Client(handle.address)
        c.wait_for("SceneState")
        c.send({"type": "PressButton"})
        assert c.wait_for("Error")["code"] == "no_session"
        c.close()

    def test_messages_carry_monotone_seq(self, server):
        handle, _ = server
        c = Client(handle.address)
        seqs = [c.wait_for("SceneState")["seq"]]
        c.send({"type": "GripInput", "grip": "Power"})
        seqs.append(c.wait_for("Error")["seq"])
        assert seqs[1] > seqs[0]
        c.close()


def drive_successful_trial(c, frame, task):
    """Script one clean pick-and-place through the live input surface."""
    btn = frame.button_position
    obj = frame.holder(task.start_holder).position
    tgt = frame.holder(task.target_holder).position
    c.send({"type": "PressButton"})             # start
    c.send({"type": "GripInput", "grip": task.required_grip.value})
    c.send({"type": "PoseInput", "x": btn[0], "y": btn[1], "z": btn[2]})
    time.sleep(0.05)
    reach_mid = [(a + b) / 2 for a, b in zip(btn, obj)]
    c.send({"type": "PoseInput", "x": reach_mid[0], "y": reach_mid[1],
            "z": reach_mid[2]})
    time.sleep(0.05)
    c.send({"type": "PoseInput", "x": obj[0], "y": obj[1], "z": obj[2]})
    # several poses so the grasp is seen before the lift pose arrives
    time.sleep(0.05)
    c.send({"type": "PoseInput", "x": obj[0], "y": obj[1] + 0.02, "z": obj[2]})
    time.sleep(0.05)
    mid = [(a + b) / 2 for a, b in zip(obj, tgt)]
    c.send({"type": "PoseInput", "x": mid[0], "y": mid[1], "z": mid[2]})
    time.sleep(0.05)
    c.send({"type": "PoseInput", "x": tgt[0], "y": tgt[1], "z": tgt[2]})
    time.sleep(0.05)
    back_mid = [(a + b) / 2 for a, b in zip(tgt, btn)]
    c.send({"type": "PoseInput", "x": back_mid[0], "y": back_mid[1],
            "z": back_mid[2]})
    time.sleep(0.05)
    c.send({"type": "PoseInput", "x": btn[0], "y": btn[1], "z": btn[2]})
    time.sleep(0.05)
    c.send({"type": "PressButton"})             # stop
    return c.wait_for("TrialEnded")


class TestLiveSession:
    def test_scripted_success_and_metrics_card(self, server):
        handle, log_dir = server
        from phamkit.task import frame_from_config
        frame = frame_from_config(load_config())
        c = Client(handle.address)
        c.wait_for("SceneState")
        c.send({"type": "StartSession", "protocol": "ch4", "trials": 1,
                "condition": "live-test", "scheme": "ThreePhase"})
        prompt = c.wait_for("Prompt")
        task = template_task(frame, TaskTemplate.Task1)
        assert prompt["start_holder"] == task.start_holder
        ended = drive_successful_trial(c, frame, task)
        assert ended["outcome"] == "Success"
        card = ended["metrics"]
        assert card["success"] is True
        assert 0 < card["total_time"] < 10
        names = [p["name"] for p in card["phases"]]
        assert names == ["Reach", "Relocation", "Return"]
        for p in card["phases"]:
            assert 0 < p["PE"] <= 100.0 + 1e-6
            assert p["TP"] > 0 and p["ID"] > 0
        summary = c.wait_for("SessionEnded")["summary"]
        assert summary["n_trials"] == 1
        assert summary["completion_rate"] == 1.0
        result = read_log(summary["log_path"])
        assert result.errors == []
        assert result.records[0].outcome.value == "Success"
        assert result.records[0].condition == "live-test"
        c.close()

    def test_wrong_grip_mid_carry_drops(self, server):
        handle, _ = server
        from phamkit.task import frame_from_config
        frame = frame_from_config(load_config())
        c = Client(handle.address)
        c.wait_for("SceneState")
        c.send({"type": "StartSession", "protocol": "ch4", "trials": 1,
                "condition": "t", "scheme": "ThreePhase"})
        c.wait_for("Prompt")
        task = template_task(frame, TaskTemplate.Task1)
        obj = frame.holder(task.start_holder).position
        c.send({"type": "PressButton"})
        c.send({"type": "GripInput", "grip": task.required_grip.value})
        c.send({"type": "PoseInput", "x": obj[0], "y": obj[1], "z": obj[2]})
        time.sleep(0.05)
        c.send({"type": "PoseInput", "x": obj[0], "y": obj[1] + 0.02, "z": obj[2]})
        time.sleep(0.05)
        c.send({"type": "GripInput", "grip": "Open"})   # let go mid-carry
        ended = c.wait_for("TrialEnded")
        assert ended["outcome"] == "Dropped"
        assert ended["metrics"]["success"] is False
        assert ended["metrics"]["phases"] == []
        c.close()

    def test_sessions_are_isolated_per_connection(self, server):
        handle, _ = server
        a = Client(handle.address)
        b = Client(handle.address)
        a.wait_for("SceneState")
        b.wait_for("SceneState")
        a.send({"type": "StartSession", "protocol": "ch4", "trials": 1,
                "condition": "A", "scheme": "ThreePhase"})
        a.wait_for("Prompt")
        # B has no session and sees none of A's state
        b.send({"type": "PressButton"})
        assert b.wait_for("Error")["code"] == "no_session"
        a.close()
        b.close()

    def test_disconnect_mid_trial_logged_as_failure(self, server):
        handle, log_dir = server
        c = Client(handle.address)
        c.wait_for("SceneState")
        c.send({"type": "StartSession", "protocol": "ch4", "trials": 1,
                "condition": "gone", "scheme": "ThreePhase"})
        c.wait_for("Prompt")
        c.send({"type": "PressButton"})
        c.wait_for("SceneState")
        c.close()
        deadline = time.monotonic() + 5
        logs = []
        while time.monotonic() < deadline and not logs:
            logs = list(log_dir.glob("session-*.jsonl"))
            time.sleep(0.05)
        assert logs, "no session log written after disconnect"
        recs = read_log(logs[0]).records
        assert len(recs) == 1
        assert recs[0].outcome.value == "Timeout"
        assert recs[0].condition == "gone"

    def test_broadcast_countdown_decreases(self, server):
        handle, _ = server
        c = Client(handle.address)
        c.wait_for("SceneState")
        c.send({"type": "StartSession", "protocol": "ch4", "trials": 1,
                "condition": "t", "scheme": "ThreePhase"})
        c.wait_for("Prompt")
        c.send({"type": "PressButton"})
        s1 = c.wait_for("SceneState")
        while s1["phase"] != "Reach":
            s1 = c.wait_for("SceneState")
        time.sleep(0.2)
        s2 = c.wait_for("SceneState")
        while s2["elapsed"] <= s1["elapsed"]:
            s2 = c.wait_for("SceneState")
        assert s2["remaining"] < s1["remaining"] <= 30.0
        c.close()


class TestInputMapper:
    def _mapper(self):
        from phamkit.task import frame_from_config
        frame = frame_from_config(load_config())
        task = template_task(frame, TaskTemplate.Task1)
        return InputMapper(frame, task), frame, task

    def test_contact_requires_matching_grip(self):
        # wrong grip: pose at the object produces no ContactOn
        mapper2, frame, task = self._mapper()
        obj = frame.holder(task.start_holder).position
        mapper2.grip = GripClass.Pinch
        events = mapper2.on_pose(0.1, obj, "Reach")
        assert EventKind.ContactOn not in [e.kind for e in events]
        mapper2.grip = task.required_grip
        events = mapper2.on_pose(0.2, obj, "Reach")
        assert EventKind.ContactOn in [e.kind for e in events]

    def test_out_of_order_messages_dropped(self):
        mapper, frame, task = self._mapper()
        obj = frame.holder(task.start_holder).position
        mapper.on_pose(1.0, obj, "Reach")
        assert mapper.on_pose(0.5, obj, "Reach") == []
        assert mapper.on_grip(0.2, GripClass.Power) == []
        assert mapper.dropped_messages == 2

    def test_lift_requires_motion_past_epsilon(self):
        mapper, frame, task = self._mapper()
        obj = frame.holder(task.start_holder).position
        mapper.grip = task.required_grip
        mapper.on_pose(0.1, obj, "Reach")
        assert mapper.holding
        near = (obj[0], obj[1] + 0.001, obj[2])
        assert mapper.on_pose(0.2, near, "Grasped") == []
        away = (obj[0], obj[1] + 0.02, obj[2])
        kinds = [e.kind for e in mapper.on_pose(0.3, away, "Grasped")]
        assert kinds == [EventKind.ContactOff]

    def test_placement_inside_tolerance(self):
        mapper, frame, task = self._mapper()
        obj = frame.holder(task.start_holder).position
        tgt = frame.holder(task.target_holder).position
        mapper.grip = task.required_grip
        mapper.on_pose(0.1, obj, "Reach")
        near_miss = (tgt[0] + 0.02, tgt[1], tgt[2])
        assert mapper.on_pose(0.2, near_miss, "Relocation") == []
        kinds = [e.kind for e in mapper.on_pose(0.3, tgt, "Relocation")]
        assert kinds == [EventKind.PlacedAtTarget]
