"""Trial-log persistence (JSON Lines) and report rendering (CSV / Markdown)."""

from __future__ import annotations

import csv
import io as _io
import json
from dataclasses import dataclass
from pathlib import Path
from typing import IO, Optional, Sequence, Union

from .metrics import ComparisonResult, SummaryStats
from .session import (EventKind, MotionSample, Outcome, PhaseBound,
                      PhaseScheme, SessionEvent, TrialRecord)
from .signals import GripClass
from .task import OBJECT_GRIP, ObjectKind, TaskSpec

LOG_SCHEMA_VERSION = 1


def record_to_dict(r: TrialRecord) -> dict:
    return {
        "schema_version": LOG_SCHEMA_VERSION,
        "trial_id": r.trial_id,
        "subject_id": r.subject_id,
        "condition": r.condition,
        "scheme": r.scheme.value,
        "task": {
            "object": r.task.object.value,
            "start_holder": r.task.start_holder,
            "target_holder": r.task.target_holder,
            "distance": r.task.distance,
            "tolerance": r.task.tolerance,
            "requires_vertical_rotation": r.task.requires_vertical_rotation,
        },
        "trajectory": [[s.t, *s.position, *s.orientation] for s in r.trajectory],
        "grip_commands": [[t, g.value] for t, g in r.grip_commands],
        "events": [
            {"type": e.kind.value, "t": e.t,
             **({"grip": e.grip.value} if e.grip is not None else {})}
            for e in r.events
        ],
        "phase_bounds": [
            {"name": b.name, "t_start": b.t_start, "t_end": b.t_end,
             "complete": b.complete}
            for b in r.phase_bounds
        ],
        "outcome": r.outcome.value,
        "total_time": r.total_time,
    }


def record_from_dict(doc: dict) -> TrialRecord:
    version = doc.get("schema_version")
    if version != LOG_SCHEMA_VERSION:
        raise ValueError(f"unsupported schema_version {version!r}")
    td = doc["task"]
    obj = ObjectKind(td["object"])
    task = TaskSpec(
        object=obj,
        required_grip=OBJECT_GRIP[obj],
        start_holder=td["start_holder"],
        target_holder=td["target_holder"],
        distance=td["distance"],
        tolerance=td["tolerance"],
        requires_vertical_rotation=td["requires_vertical_rotation"],
    )
    return TrialRecord(
        trial_id=doc["trial_id"],
        subject_id=doc["subject_id"],
        condition=doc["condition"],
        task=task,
        scheme=PhaseScheme(doc["scheme"]),
        trajectory=tuple(
            MotionSample(t=row[0], position=tuple(row[1:4]),
                         orientation=tuple(row[4:8]))
            for row in doc["trajectory"]
        ),
        grip_commands=tuple((t, GripClass(g)) for t, g in doc["grip_commands"]),
        events=tuple(
            SessionEvent(EventKind(e["type"]), e["t"],
                         grip=GripClass(e["grip"]) if "grip" in e else None)
            for e in doc["events"]
        ),
        phase_bounds=tuple(
            PhaseBound(b["name"], b["t_start"], b["t_end"], b["complete"])
            for b in doc["phase_bounds"]
        ),
        outcome=Outcome(doc["outcome"]),
        total_time=doc["total_time"],
    )


Sink = Union[str, Path, IO[str]]


def write_log(records: Sequence[TrialRecord], sink: Sink) -> int:
    """One JSON document per line, UTF-8, newline-terminated. Floats use
    Python's shortest round-trip representation, so parse(write(r)) == r.
    """
    if isinstance(sink, (str, Path)):
        with open(sink, "w", encoding="utf-8") as fh:
            return write_log(records, fh)
    n = 0
    for r in records:
        sink.write(json.dumps(record_to_dict(r)) + "\n")
        n += 1
    return n


@dataclass(frozen=True)
class LogError:
    line_number: int
    message: str


@dataclass(frozen=True)
class LogReadResult:
    records: list[TrialRecord]
    errors: list[LogError]


def read_log(source: Sink) -> LogReadResult:
    """Tolerant JSONL reader: bad lines are reported, good lines returned."""
    if isinstance(source, (str, Path)):
        with open(source, "r", encoding="utf-8") as fh:
            return read_log(fh)
    records: list[TrialRecord] = []
    errors: list[LogError] = []
    for i, line in enumerate(source, start=1):
        line = line.strip()
        if not line:
            continue
        try:
            records.append(record_from_dict(json.loads(line)))
        except (json.JSONDecodeError, KeyError, ValueError, TypeError, IndexError) as exc:
            errors.append(LogError(i, str(exc)))
    return LogReadResult(records, errors)


@dataclass(frozen=True)
class ReportTable:
    caption: str
    columns: tuple[str, ...]
    rows: tuple[tuple, ...]   # cells: str | float | SummaryStats | ComparisonResult
    units: tuple[str, ...] = ()


def _fmt(value) -> list[str]:
    if isinstance(value, SummaryStats):
        return [f"{value.mean:.2f}", f"{value.sd:.2f}", str(value.n)]
    if isinstance(value, ComparisonResult):
        p_txt = "degenerate" if value.degenerate else f"{value.p:.4f}"
        return [f"{value.delta:+.3f}", f"{value.percent:+.2f}", p_txt]
    if isinstance(value, float):
        return [f"{value:.2f}"]
    return [str(value)]


def _expand_columns(table: ReportTable) -> tuple[list[str], list[list[str]]]:
    if not table.rows:
        return list(table.columns), []
    header: list[str] = []
    for name, cell in zip(table.columns, table.rows[0]):
        if isinstance(cell, SummaryStats):
            header += [f"{name}_mean", f"{name}_sd", f"{name}_n"]
        elif isinstance(cell, ComparisonResult):
            header += [f"{name}_delta", f"{name}_percent", f"{name}_p"]
        else:
            header.append(name)
    rows = [[part for cell in row for part in _fmt(cell)] for row in table.rows]
    return header, rows


def render_report(tables: Sequence[ReportTable], fmt: str = "csv") -> str:
    """CSV splits mean+/-sd cells into separate columns; Markdown stars
    comparisons significant at the 0.05 level. Ordering is input ordering.
    """
    if fmt == "csv":
        buf = _io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        for table in tables:
            header, rows = _expand_columns(table)
            writer.writerow([f"# {table.caption}"])
            writer.writerow(header)
            writer.writerows(rows)
        return buf.getvalue()
    if fmt == "markdown":
        out: list[str] = []
        for table in tables:
            header, rows = _expand_columns(table)
            starred_rows = []
            for raw, cells in zip(table.rows, rows):
                star = any(isinstance(c, ComparisonResult) and c.significant
                           for c in raw)
                starred_rows.append(cells + (["*"] if star else [""]))
            out.append(f"### {table.caption}")
            out.append("| " + " | ".join(header + ["sig"]) + " |")
            out.append("|" + "---|" * (len(header) + 1))
            for cells in starred_rows:
                out.append("| " + " | ".join(cells) + " |")
            out.append("")
        return "\n".join(out)
    raise ValueError(f"unknown report format {fmt!r}")
