"""PHAM frame geometry, the object/grip catalog, and task prompt generation."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from .signals import GripClass


class ObjectKind(Enum):
    Cylinder = "Cylinder"
    Card = "Card"
    Stick = "Stick"
    TriangularPrism = "TriangularPrism"


# Fixed bijection object -> required grasp, kept stable for reproducibility.
OBJECT_GRIP: dict[ObjectKind, GripClass] = {
    ObjectKind.Cylinder: GripClass.Power,
    ObjectKind.Card: GripClass.Key,
    ObjectKind.Stick: GripClass.Tripod,
    ObjectKind.TriangularPrism: GripClass.Pinch,
}
assert len(set(OBJECT_GRIP.values())) == len(OBJECT_GRIP)


class Orientation(Enum):
    Horizontal = "Horizontal"
    Vertical = "Vertical"


@dataclass(frozen=True)
class Holder:
    holder_id: str
    position: tuple[float, float, float]
    orientation: Orientation


@dataclass(frozen=True)
class PhamFrame:
    holders: tuple[Holder, ...]
    button_position: tuple[float, float, float]
    workspace_min: tuple[float, float, float]
    workspace_max: tuple[float, float, float]
    tolerance_w: float = 0.01

    def __post_init__(self):
        if len(self.holders) < 2:
            raise ValueError("frame needs at least 2 holders")
        positions = [h.position for h in self.holders]
        if len(set(positions)) != len(positions):
            raise ValueError("holder positions must be pairwise distinct")
        for h in self.holders:
            if not self.contains(h.position):
                raise ValueError(f"holder {h.holder_id} outside workspace bounds")

    def contains(self, p: tuple[float, float, float]) -> bool:
        return all(lo <= v <= hi for v, lo, hi in
                   zip(p, self.workspace_min, self.workspace_max))

    def holder(self, holder_id: str) -> Holder:
        for h in self.holders:
            if h.holder_id == holder_id:
                return h
        raise KeyError(f"unknown holder {holder_id!r}")


@dataclass(frozen=True)
class TaskSpec:
    object: ObjectKind
    required_grip: GripClass
    start_holder: str
    target_holder: str
    distance: float                 # straight-line start -> target, meters
    tolerance: float                # alignment tolerance W, meters
    requires_vertical_rotation: bool = False

    def __post_init__(self):
        if self.start_holder == self.target_holder:
            raise ValueError("start and target holders must differ")
        if self.distance <= 0 or self.tolerance <= 0:
            raise ValueError("distance and tolerance must be positive")
        if self.required_grip != OBJECT_GRIP[self.object]:
            raise ValueError("required grip must match the object's grip")


class TaskTemplate(Enum):
    Task1 = "Task1"
    Task2 = "Task2"
    Task3 = "Task3"
    Task4 = "Task4"


def _dist(a, b) -> float:
    return math.dist(a, b)


def load_config(path: str | Path | None = None) -> dict:
    """Parse the YAML geometry/profile config; defaults to the packaged one."""
    if path is None:
        text = resources.files("phamkit.data").joinpath("default_config.yaml").read_text()
    else:
        text = Path(path).read_text()
    return yaml.safe_load(text)


def frame_from_config(cfg: dict) -> PhamFrame:
    fc = cfg["frame"]
    holders = tuple(
        Holder(h["id"], tuple(float(v) for v in h["position"]),
               Orientation(h["orientation"]))
        for h in fc["holders"]
    )
    return PhamFrame(
        holders=holders,
        button_position=tuple(float(v) for v in fc["button"]),
        workspace_min=tuple(float(v) for v in fc["workspace"]["min"]),
        workspace_max=tuple(float(v) for v in fc["workspace"]["max"]),
        tolerance_w=float(cfg.get("tolerance_w", 0.01)),
    )


def default_frame() -> PhamFrame:
    return frame_from_config(load_config())


def generate_task(frame: PhamFrame, rng: np.random.Generator) -> TaskSpec:
    """Uniform draw over object kinds and ordered start/target holder pairs."""
    if len(frame.holders) < 2:
        raise ValueError("frame needs at least 2 holders")
    kinds = list(ObjectKind)
    obj = kinds[int(rng.integers(len(kinds)))]
    i = int(rng.integers(len(frame.holders)))
    j = int(rng.integers(len(frame.holders) - 1))
    if j >= i:
        j += 1
    start, target = frame.holders[i], frame.holders[j]
    return TaskSpec(
        object=obj,
        required_grip=OBJECT_GRIP[obj],
        start_holder=start.holder_id,
        target_holder=target.holder_id,
        distance=_dist(start.position, target.position),
        tolerance=frame.tolerance_w,
        requires_vertical_rotation=start.orientation != target.orientation,
    )


def template_task(frame: PhamFrame, template: TaskTemplate,
                  cfg: dict | None = None) -> TaskSpec:
    cfg = cfg if cfg is not None else load_config()
    spec = cfg["templates"][template.value]
    start = frame.holder(spec["start"])
    target = frame.holder(spec["target"])
    obj = ObjectKind(spec["object"])
    return TaskSpec(
        object=obj,
        required_grip=OBJECT_GRIP[obj],
        start_holder=start.holder_id,
        target_holder=target.holder_id,
        distance=_dist(start.position, target.position),
        tolerance=frame.tolerance_w,
        requires_vertical_rotation=start.orientation != target.orientation,
    )


def chapter4_sequence(frame: PhamFrame, template: TaskTemplate, trials: int = 30,
                      cfg: dict | None = None) -> list[TaskSpec]:
    """The fixed-template block: `trials` identical prompts."""
    if trials <= 0:
        raise ValueError("trials must be positive")
    task = template_task(frame, template, cfg)
    return [task] * trials
