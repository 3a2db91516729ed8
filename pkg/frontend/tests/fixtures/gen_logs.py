"""Writes small trial-log fixtures for the envelope-view tests.

Usage: python3 gen_logs.py OUT_DIR
"""

import sys
from pathlib import Path

import dataclasses

from phamkit.io import write_log
from phamkit.session import PhaseScheme
from phamkit.simulate import ConditionProfile, SubjectModel, run_trial
from phamkit.task import TaskTemplate, default_frame, template_task


def trials(cond, n, label):
    frame = default_frame()
    task = template_task(frame, TaskTemplate.Task1)
    subject = SubjectModel(path_noise_sd=0.002, timing_cv=0.1, failure_rate=0.0)
    return [dataclasses.replace(
        run_trial(task, frame, subject, cond, PhaseScheme.ThreePhase,
                  seed=[17, i], trial_id=f"{label}-{i:03d}"),
        condition=label)
        for i in range(n)]


def main(out_dir):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    narrow = ConditionProfile("narrow", wobble_amp=0.002)
    wide = ConditionProfile("wide", wobble_amp=0.05)
    write_log(trials(narrow, 1, "single"), out / "single.jsonl")
    write_log(trials(narrow, 8, "narrow"), out / "narrow.jsonl")
    write_log(trials(wide, 8, "wide"), out / "wide.jsonl")
    write_log(trials(narrow, 6, "narrow") + trials(wide, 6, "wide"),
              out / "two_conditions.jsonl")


if __name__ == "__main__":
    main(sys.argv[1])
