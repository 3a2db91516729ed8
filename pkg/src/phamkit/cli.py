"""Operator command line: train-classifier, simulate, analyze, compare,
replay, serve.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
from pathlib import Path

import numpy as np

from . import io as pio
from . import metrics as pm
from .session import Outcome, replay as replay_events
from .signals import (FULL_CLASS_SET, WRIST_CLASS_SET, CueProtocol,
                      cross_validate, fit_lda, gate_accuracy, run_cue_protocol)
from .simulate import (ConditionProfile, ProtocolDescriptor, SubjectModel,
                       run_experiment, synth_emg)
from .task import frame_from_config, load_config

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2

BIND_ENV_VAR = "PHAMKIT_BIND"


def _subject_from_config(cfg: dict) -> SubjectModel:
    return SubjectModel(**cfg.get("subject", {}))


def _conditions_from_config(cfg: dict, labels: list[str] | None) -> list[ConditionProfile]:
    profiles = {c["label"]: ConditionProfile(**c) for c in cfg.get("conditions", [])}
    if labels is None:
        return list(profiles.values())
    out = []
    for label in labels:
        out.append(profiles.get(label, ConditionProfile(label=label)))
    return out


def cmd_train_classifier(args) -> int:
    cfg = load_config(args.config)
    dec = cfg.get("decoder", {})
    class_set = tuple(FULL_CLASS_SET if args.classes == "ch3" else WRIST_CLASS_SET)
    protocol = CueProtocol(class_set=class_set)
    separation = args.separation
    if separation is None:
        separation = _subject_from_config(cfg).emg_class_separation
    seed = args.seed

    def supplier(grip, rep, pos):
        sub_seed = [seed, FULL_CLASS_SET.index(grip), rep, pos]
        return synth_emg(grip, protocol.cue_duration, separation, sub_seed)

    data = run_cue_protocol(protocol, supplier)
    shrinkage = float(dec.get("shrinkage", 0.1))
    accuracies = cross_validate(data, k=int(dec.get("cv_folds", 4)),
                                shrinkage=shrinkage, seed=seed)
    import dataclasses
    model = dataclasses.replace(fit_lda(data, shrinkage), cv_accuracy=accuracies)
    verdict = gate_accuracy(accuracies, float(dec.get("gate_threshold", 0.8)))
    Path(args.out).write_text(model.to_json())
    for c in model.class_set:
        print(f"{c.value}: {accuracies[c]:.3f}")
    if verdict.passed:
        print(f"gate: PASS (threshold {verdict.threshold:.2f})")
    else:
        names = ", ".join(c.value for c in verdict.failing)
        print(f"gate: FAIL (below {verdict.threshold:.2f}: {names}) - restart training")
    print(f"model written to {args.out}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    frame = frame_from_config(cfg)
    subject = _subject_from_config(cfg)
    labels = args.conditions.split(",") if args.conditions else None
    conditions = _conditions_from_config(cfg, labels)
    if not conditions:
        print("no conditions configured", file=sys.stderr)
        return EXIT_USAGE
    descriptor = ProtocolDescriptor(kind=args.protocol)
    records = run_experiment(descriptor, frame, subject, conditions, args.seed)
    n = pio.write_log(records, args.out)
    print(f"wrote {n} trials to {args.out}")
    return EXIT_OK


def _load_records(path: str):
    try:
        result = pio.read_log(path)
    except OSError as exc:
        print(f"{path}: {exc}", file=sys.stderr)
        return None
    for err in result.errors:
        print(f"{path}:{err.line_number}: {err.message}", file=sys.stderr)
    return result.records


def _summary_tables(records) -> list[pio.ReportTable]:
    by_cond: dict[str, list] = {}
    for r in records:
        by_cond.setdefault(r.condition, []).append(r)
    # Columns are uniform across conditions: the union of phase names.
    all_phases = sorted({p.name for r in records if r.outcome is Outcome.Success
                         for p in pm.trial_metrics(r).phases})
    columns = ["condition", "completion_rate", "total_time"]
    for name in all_phases:
        columns += [f"{name}_MT", f"{name}_PE", f"{name}_TP"]
    table_rows = []
    for label, recs in sorted(by_cond.items()):
        tms = [pm.trial_metrics(r) for r in recs]
        succ = [m for m in tms if m.success]
        cells: list = [label, f"{pm.completion_rate(recs):.3f}"]
        cells.append(pm.summarize([m.total_time for m in succ]) if succ else "-")
        for name in all_phases:
            mts = [p.movement_time for m in succ for p in m.phases if p.name == name]
            pes = [p.path_efficiency for m in succ for p in m.phases if p.name == name]
            tps = [p.throughput for m in succ for p in m.phases if p.name == name]
            if mts:
                cells += [pm.summarize(mts), pm.summarize(pes), pm.summarize(tps)]
            else:
                cells += ["-", "-", "-"]
        table_rows.append(tuple(cells))
    return [pio.ReportTable(caption="Per-condition summary",
                            columns=tuple(columns), rows=tuple(table_rows))]


def cmd_analyze(args) -> int:
    records = _load_records(args.log)
    if records is None:
        return EXIT_DATA
    if not records:
        print("no valid records in log", file=sys.stderr)
        return EXIT_DATA
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "trials.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["trial_id", "condition", "success", "total_time",
                    "phase", "MT", "D", "PT", "PE", "ID", "TP",
                    "peak_speed", "t_peak"])
        for r in records:
            m = pm.trial_metrics(r)
            if not m.phases:
                w.writerow([m.trial_id, m.condition, m.success, m.total_time,
                            "", "", "", "", "", "", "", "", ""])
            for p in m.phases:
                w.writerow([m.trial_id, m.condition, m.success, m.total_time,
                            p.name, p.movement_time, p.straight_distance,
                            p.path_length, p.path_efficiency, p.difficulty_bits,
                            p.throughput, m.peak_speed, m.t_peak])
    tables = _summary_tables(records)
    (out / f"summary.{ 'md' if args.format == 'md' else 'csv'}").write_text(
        pio.render_report(tables, "markdown" if args.format == "md" else "csv"))
    print(f"wrote {out / 'trials.csv'} and summary for {len(records)} trials")
    return EXIT_OK


def _paired_metric_values(records_a, records_b, extract):
    n = min(len(records_a), len(records_b))
    a_vals, b_vals = [], []
    for i in range(n):
        a_vals.append(extract(records_a[i]))
        b_vals.append(extract(records_b[i]))
    return a_vals, b_vals


def cmd_compare(args) -> int:
    records = []
    for path in args.logs:
        recs = _load_records(path)
        if recs is None:
            return EXIT_DATA
        records.extend(recs)
    by_cond: dict[str, list] = {}
    for r in records:
        by_cond.setdefault(r.condition, []).append(r)
    label_a, label_b = args.a, args.b
    if label_a is None or label_b is None:
        labels = sorted(by_cond)
        if len(labels) != 2:
            print("need exactly two conditions or explicit --a/--b", file=sys.stderr)
            return EXIT_USAGE
        label_a, label_b = labels
    if label_a not in by_cond or label_b not in by_cond:
        print(f"conditions {label_a!r}/{label_b!r} not present", file=sys.stderr)
        return EXIT_DATA
    ra, rb = by_cond[label_a], by_cond[label_b]
    ma = [pm.trial_metrics(r) for r in ra]
    mb = [pm.trial_metrics(r) for r in rb]

    def total_time(m):
        return m.total_time if m.success else None

    def phase_val(m, phase, attr):
        for p in m.phases:
            if p.name == phase:
                return getattr(p, attr)
        return None

    rows = []
    a_tot, b_tot = _paired_metric_values(ma, mb, total_time)
    rows.append(("total_time", pm.compare_paired(a_tot, b_tot)))
    phase_names = sorted({p.name for m in ma + mb for p in m.phases})
    for name in phase_names:
        for attr, label in [("movement_time", "MT"), ("path_efficiency", "PE"),
                            ("throughput", "TP")]:
            av, bv = _paired_metric_values(
                ma, mb, lambda m, n=name, a=attr: phase_val(m, n, a))
            try:
                rows.append((f"{name}_{label}", pm.compare_paired(av, bv)))
            except ValueError:
                continue
    table = pio.ReportTable(
        caption=f"Paired comparison {label_a} vs {label_b} (reference {label_b})",
        columns=("metric", "comparison"),
        rows=tuple((name, res) for name, res in rows),
    )
    text = pio.render_report([table], "markdown" if args.format == "md" else "csv")
    if args.out:
        Path(args.out).write_text(text)
        print(f"wrote {args.out}")
    else:
        print(text)
    return EXIT_OK


def cmd_replay(args) -> int:
    records = _load_records(args.log)
    if records is None:
        return EXIT_DATA
    mismatches = 0
    for r in records:
        again = replay_events(r.task, r.condition, r.scheme, r.events,
                              r.trial_id, r.trajectory, r.subject_id)
        if again != r:
            mismatches += 1
            print(f"replay mismatch for trial {r.trial_id}", file=sys.stderr)
    if mismatches:
        print(f"{mismatches} of {len(records)} trials failed replay", file=sys.stderr)
        return EXIT_DATA
    print(f"replayed {len(records)} trials: all records identical")
    return EXIT_OK


def cmd_serve(args) -> int:
    from .service import serve
    bind = args.bind or os.environ.get(BIND_ENV_VAR, "127.0.0.1:7788")
    host, _, port = bind.rpartition(":")
    cfg = load_config(args.config)
    server = serve(host or "127.0.0.1", int(port), cfg, log_dir=args.out)
    # flush so callers reading a pipe can discover the bound port
    print(f"serving on {server.address[0]}:{server.address[1]}", flush=True)
    try:
        server.wait()
    except KeyboardInterrupt:
        server.close()
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="phamkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train-classifier", help="train and gate the grip decoder")
    p.add_argument("--config")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--classes", choices=["ch3", "ch4"], default="ch3")
    p.add_argument("--separation", type=float, default=None)
    p.add_argument("--out", default="model.json")
    p.set_defaults(func=cmd_train_classifier)

    p = sub.add_parser("simulate", help="run a synthetic-subject experiment")
    p.add_argument("--config")
    p.add_argument("--protocol", choices=["ch3", "ch4"], required=True)
    p.add_argument("--conditions", help="comma-separated condition labels")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="trials.jsonl")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("analyze", help="per-trial metrics and summary tables")
    p.add_argument("--log", required=True)
    p.add_argument("--out", default="analysis")
    p.add_argument("--format", choices=["csv", "md"], default="csv")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("compare", help="paired comparison between two conditions")
    p.add_argument("--logs", nargs="+", required=True)
    p.add_argument("--a", help="condition under test")
    p.add_argument("--b", help="reference condition")
    p.add_argument("--format", choices=["csv", "md"], default="md")
    p.add_argument("--out")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("replay", help="verify event-log replay determinism")
    p.add_argument("--log", required=True)
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("serve", help="start the live session server")
    p.add_argument("--config")
    p.add_argument("--bind", help=f"host:port (or env {BIND_ENV_VAR})")
    p.add_argument("--out", help="directory for session logs")
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else 0
    try:
        return args.func(args)
    except (FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
