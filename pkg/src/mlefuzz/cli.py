"""Command-line front end.

Exit codes: 0 success, 1 bad input or config, 2 a crash was found (fuzz,
epoch, harness) or reproduced (replay), 3 replay did not reproduce.
"""
from __future__ import annotations

import argparse
import json
import logging
import subprocess
import sys
from pathlib import Path

from .config import ConfigError, load_config
from .coordinator import CampaignState, CrashRecord, replay, run_campaign, run_fuzzing_epoch
from .harness import HarnessFixtureError, harness_execute
from .report import (IncompatibleReportsError, aggregate, format_table, load_report,
                     merged_coverage_csv, summary_csv, validate_crash, validate_harness_result)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_CRASH = 2
EXIT_NOT_REPRODUCED = 3

log = logging.getLogger("mlefuzz")


def _fail(msg: str) -> int:
    print(f"error: {msg}", file=sys.stderr)
    return EXIT_ERROR


def cmd_fuzz(args) -> int:
    try:
        cfg = load_config(args.config, seed=args.seed, iterations=args.iterations)
    except ConfigError as exc:
        return _fail(str(exc))
    if args.runs > 1:
        return _fuzz_batch(args, cfg.seed)
    out = Path(args.out)

    def progress(res):
        if res.iteration % 1000 == 0:
            log.info("iteration %d: %d edges", res.iteration, res.cumulative)

    try:
        report = run_campaign(cfg, out, progress=progress)
    except OSError as exc:
        return _fail(f"cannot write artifacts: {exc}")
    print(f"seed {cfg.seed}: {len(report.results)} iterations, coverage "
          f"{report.final_coverage_fraction:.4f}, crashes {len(report.crashes)} -> {out}")
    return EXIT_CRASH if report.crashes else EXIT_OK


def _fuzz_batch(args, base_seed: int) -> int:
    """Independent campaigns, one subprocess each, seeds base_seed .. base_seed+R-1."""
    procs = []
    for j in range(args.runs):
        seed = base_seed + j
        cmd = [sys.executable, "-m", "mlefuzz", "fuzz", "--config", str(args.config), "--seed", str(seed),
               "--out", str(Path(args.out) / f"run_{seed}")]
        if args.iterations is not None:
            cmd += ["--iterations", str(args.iterations)]
        procs.append(subprocess.Popen(cmd))
    codes = [p.wait() for p in procs]
    if any(c not in (EXIT_OK, EXIT_CRASH) for c in codes):
        return EXIT_ERROR
    return EXIT_CRASH if EXIT_CRASH in codes else EXIT_OK


def cmd_epoch(args) -> int:
    try:
        cfg = load_config(args.config, seed=args.seed, mode="epoch", epoch_size=args.epoch_size)
    except ConfigError as exc:
        return _fail(str(exc))
    state = CampaignState(cfg)
    flagged = 0
    n_epochs = -(-cfg.max_iterations // cfg.epoch_size)
    for e in range(n_epochs):
        crashed = run_fuzzing_epoch(cfg, cfg.epoch_size, state)
        c0, cf = state.last_epoch_counts
        flagged += crashed
        print(json.dumps({"epoch": e + 1, "reboot_count_before": c0, "reboot_count_after": cf,
                          "crash_detected": crashed}))
    return EXIT_CRASH if flagged else EXIT_OK


def cmd_harness(args) -> int:
    try:
        data = Path(args.input).read_bytes()
    except OSError as exc:
        return _fail(f"cannot read input: {exc}")
    try:
        res = harness_execute(data, sanitizer=args.sanitizer)
    except HarnessFixtureError as exc:
        return _fail(str(exc))
    doc = res.to_json()
    validate_harness_result(doc)
    print(json.dumps(doc, sort_keys=True))
    return EXIT_CRASH if res.crashed else EXIT_OK


def cmd_replay(args) -> int:
    try:
        text = Path(args.crash).read_text()
        if not text.strip():
            return _fail("empty crash file")
        doc = json.loads(text)
        validate_crash(doc)
        record = CrashRecord.from_json(doc)
    except Exception as exc:  # any parse or schema failure
        return _fail(f"cannot parse crash record: {exc}")
    sanitizer = None if args.sanitizer is None else args.sanitizer == "on"
    res = replay(record, sanitizer=sanitizer)
    got = res.crash.vuln if res.crash else None
    if got == record.vuln:
        print(f"reproduced {record.vuln} ({res.crash.crash_kind})")
        return EXIT_CRASH
    print(f"not reproduced: expected {record.vuln}, got {got or 'no crash'}")
    return EXIT_NOT_REPRODUCED


def cmd_report(args) -> int:
    try:
        reports = [load_report(p) for p in args.reports]
        summary = aggregate(reports)
    except IncompatibleReportsError as exc:
        return _fail(str(exc))
    except Exception as exc:
        return _fail(f"cannot load report: {exc}")
    sys.stdout.write(format_table(summary))
    if args.csv:
        Path(args.csv).write_text(merged_coverage_csv(reports))
    if args.summary_csv:
        Path(args.summary_csv).write_text(summary_csv(summary))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mlefuzz", description="Stateful MLE TLV fuzzer against a simulated node.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    f = sub.add_parser("fuzz", help="run a fuzzing campaign")
    f.add_argument("--config", required=True)
    f.add_argument("--seed", type=int)
    f.add_argument("--iterations", type=int)
    f.add_argument("--runs", type=int, default=1, help="independent campaigns in parallel processes")
    f.add_argument("--out", default="out")
    f.set_defaults(func=cmd_fuzz)

    e = sub.add_parser("epoch", help="fuzz in epochs judged by the reboot counter")
    e.add_argument("--config", required=True)
    e.add_argument("--epoch-size", type=int, required=True)
    e.add_argument("--seed", type=int)
    e.set_defaults(func=cmd_epoch)

    h = sub.add_parser("harness", help="run one harness input file")
    h.add_argument("--input", required=True)
    h.add_argument("--sanitizer", action="store_true")
    h.set_defaults(func=cmd_harness)

    r = sub.add_parser("replay", help="replay a crash record")
    r.add_argument("crash")
    r.add_argument("--sanitizer", choices=("on", "off"), help="override the recorded setting")
    r.set_defaults(func=cmd_replay)

    s = sub.add_parser("report", help="aggregate campaign reports")
    s.add_argument("reports", nargs="+")
    s.add_argument("--csv", help="write the merged coverage curve here")
    s.add_argument("--summary-csv", help="write the first-hit summary here")
    s.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    if getattr(args, "runs", 1) < 1:
        return _fail("--runs must be >= 1")
    if getattr(args, "epoch_size", 1) < 1:
        return _fail("--epoch-size must be >= 1")
    return args.func(args)
