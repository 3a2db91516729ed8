import numpy as np
import pytest

from phamkit.session import PhaseScheme
from phamkit.simulate import ConditionProfile, SubjectModel, run_trial
from phamkit.task import TaskTemplate, default_frame, generate_task, template_task


@pytest.fixture(scope="session")
def frame():
    return default_frame()


def make_fuzzed_records(frame, n, seed=0, scheme=PhaseScheme.ThreePhase,
                        base_reach_time=0.4, failure_rate=0.2):
    """Short synthetic trials with varied noise, wobble, and failures."""
    rng = np.random.default_rng(seed)
    records = []
    for i in range(n):
        subject = SubjectModel(
            base_reach_time=base_reach_time,
            grasp_dwell=0.15,
            path_noise_sd=float(rng.uniform(0.0, 0.01)),
            timing_cv=float(rng.uniform(0.0, 0.5)),
            failure_rate=failure_rate,
        )
        cond = ConditionProfile(
            label=f"C{i % 2}",
            time_scale=float(rng.uniform(0.8, 1.3)),
            wobble_amp=float(rng.uniform(0.0, 0.05)),
            early_decel=float(rng.uniform(0.0, 0.3)),
        )
        if i % 3 == 0:
            task = template_task(frame, list(TaskTemplate)[i % 4])
        else:
            task = generate_task(frame, rng)
        records.append(run_trial(task, frame, subject, cond, scheme,
                                 seed=[seed, i], trial_id=f"fuzz-{i:04d}"))
    return records
