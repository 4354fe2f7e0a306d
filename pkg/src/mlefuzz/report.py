"""Artifact schemas and multi-run aggregation.

Every JSON document the tool writes is validated against one of the
schemas below first. ``aggregate`` folds several campaign reports into a
first-hit table (mean ± population stddev per vulnerability) and a merged
coverage curve.
"""
from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path

import jsonschema

VULN_IDS = ("V1", "V2", "V3", "V4", "V5", "V6")
NOT_OBSERVED = "NO"

_INT = {"type": "integer"}
_NUM = {"type": "number"}
_HIT_MAP_FIRST = {"type": "object", "required": list(VULN_IDS),
                  "properties": {v: {"type": ["integer", "null"], "minimum": 1} for v in VULN_IDS},
                  "additionalProperties": False}
_HIT_MAP_COUNT = {"type": "object", "required": list(VULN_IDS),
                  "properties": {v: {"type": "integer", "minimum": 0} for v in VULN_IDS},
                  "additionalProperties": False}

CONFIG_SCHEMA = {
    "type": "object",
    "required": ["max_iterations", "iteration_budget", "fuzzers", "node_type", "sanitizer", "seed",
                 "mode", "epoch_size", "coverage_source", "leader_data_probability"],
    "properties": {
        "max_iterations": {"type": "integer", "minimum": 0},
        "iteration_budget": {"type": "integer", "minimum": 0},
        "fuzzers": {"type": "array", "items": {"type": "object", "required": ["kind"]}},
        "node_type": {"enum": ["mtd", "ftd"]},
        "sanitizer": {"type": "boolean"},
        "seed": _INT,
        "mode": {"enum": ["simulated", "epoch"]},
        "epoch_size": {"type": "integer", "minimum": 1},
        "coverage_source": {"enum": ["dut_grey", "generator_black"]},
        "leader_data_probability": {"type": "number", "minimum": 0, "maximum": 1},
    },
}

_DRAFT = "https://json-schema.org/draft/2020-12/schema"

REPORT_SCHEMA = {
    "$schema": _DRAFT,
    "type": "object",
    "required": ["config", "iterations", "reachable_edges", "final_cumulative_edges",
                 "final_coverage_fraction", "mean_packets_per_iteration", "first_hit", "hit_count",
                 "crash_files", "row_fields", "rows"],
    "properties": {
        "config": CONFIG_SCHEMA,
        "iterations": {"type": "integer", "minimum": 0},
        "reachable_edges": {"type": "integer", "minimum": 1},
        "final_cumulative_edges": {"type": "integer", "minimum": 0},
        "final_coverage_fraction": {"type": "number", "minimum": 0, "maximum": 1},
        "mean_packets_per_iteration": {"type": "number", "minimum": 0},
        "first_hit": _HIT_MAP_FIRST,
        "hit_count": _HIT_MAP_COUNT,
        "crash_files": {"type": "array", "items": {"type": "string", "pattern": r"^crash_\d+_V[1-6]\.json$"}},
        "row_fields": {"const": ["iteration", "c_i", "cumulative_edges", "packets", "n_i", "final_role",
                                 "crash"]},
        "rows": {"type": "array", "items": {
            "type": "array", "minItems": 7, "maxItems": 7,
            "prefixItems": [{"type": "integer", "minimum": 1}, {"type": "integer", "minimum": 0},
                            {"type": "integer", "minimum": 0}, {"type": "integer", "minimum": 0},
                            {"type": "integer", "minimum": 0}, {"type": "string"},
                            {"enum": [None, *VULN_IDS]}],
        }},
    },
}

CRASH_SCHEMA = {
    "$schema": _DRAFT,
    "type": "object",
    "required": ["iteration", "campaign_seed", "seed", "vuln", "crash_kind", "dut_state", "node_type",
                 "sanitizer", "leader_data_probability", "packets"],
    "properties": {
        "iteration": {"type": "integer", "minimum": 1},
        "campaign_seed": _INT,
        "seed": _INT,
        "vuln": {"enum": list(VULN_IDS)},
        "crash_kind": {"enum": ["AssertionFailure", "BufferOverflowDetected"]},
        "dut_state": {"type": "object"},
        "node_type": {"enum": ["mtd", "ftd"]},
        "sanitizer": {"type": "boolean"},
        "leader_data_probability": _NUM,
        "packets": {"type": "array", "minItems": 1, "items": {
            "type": "object", "required": ["step", "hex"],
            "properties": {"step": {"type": "integer", "minimum": 0},
                           "hex": {"type": "string", "pattern": "^([0-9a-f]{2})*$"}},
            "additionalProperties": False,
        }},
    },
}

HARNESS_RESULT_SCHEMA = {
    "$schema": _DRAFT,
    "type": "object",
    "required": ["reached_state", "crashed", "crash_kind", "vuln", "abort_reason", "target_state",
                 "node_type", "message_type"],
    "properties": {
        "reached_state": {"type": "boolean"},
        "crashed": {"type": "boolean"},
        "crash_kind": {"enum": [None, "AssertionFailure", "BufferOverflowDetected"]},
        "vuln": {"enum": [None, *VULN_IDS]},
        "abort_reason": {"type": ["string", "null"]},
        "target_state": {"type": "integer", "minimum": 0, "maximum": 5},
        "node_type": {"enum": ["mtd", "ftd"]},
        "message_type": _INT,
    },
}

_validators = {}


def _validate(schema: dict, doc) -> None:
    v = _validators.get(id(schema))
    if v is None:
        cls = jsonschema.validators.validator_for(schema)
        v = _validators[id(schema)] = cls(schema)
    v.validate(doc)


def validate_report(doc: dict) -> None:
    _validate(REPORT_SCHEMA, doc)


def validate_crash(doc: dict) -> None:
    _validate(CRASH_SCHEMA, doc)


def validate_harness_result(doc: dict) -> None:
    _validate(HARNESS_RESULT_SCHEMA, doc)


# -- aggregation -----------------------------------------------------------------

class IncompatibleReportsError(ValueError):
    pass


# keys that must agree for runs to be comparable; seeds may differ
_COMPAT_KEYS = ("fuzzers", "node_type", "sanitizer", "iteration_budget", "mode", "coverage_source",
                "leader_data_probability")


def load_report(path) -> dict:
    doc = json.loads(Path(path).read_text())
    validate_report(doc)
    return doc


def mean_std(values) -> tuple:
    """Mean and population standard deviation."""
    vals = [float(v) for v in values]
    if not vals:
        raise ValueError("no values")
    m = sum(vals) / len(vals)
    return m, math.sqrt(sum((v - m) ** 2 for v in vals) / len(vals))


def check_compatible(reports) -> None:
    if not reports:
        raise IncompatibleReportsError("need at least one report")
    ref = reports[0]["config"]
    for r in reports[1:]:
        for k in _COMPAT_KEYS:
            if r["config"][k] != ref[k]:
                raise IncompatibleReportsError(f"reports disagree on config key {k!r}")


def aggregate(reports) -> dict:
    """Summary of compatible runs: first-hit stats per vuln plus coverage and length means.

    A vuln hit in only some runs is averaged over the runs that hit it;
    ``runs_hit`` says how many.
    """
    check_compatible(reports)
    out = {"runs": len(reports), "vulns": {}}
    for v in VULN_IDS:
        hits = [r["first_hit"][v] for r in reports if r["first_hit"][v] is not None]
        if hits:
            m, s = mean_std(hits)
            out["vulns"][v] = {"mean": m, "stddev": s, "runs_hit": len(hits)}
        else:
            out["vulns"][v] = None
    out["mean_packets_per_iteration"] = mean_std(r["mean_packets_per_iteration"] for r in reports)
    out["final_coverage_fraction"] = mean_std(r["final_coverage_fraction"] for r in reports)
    return out


def format_table(summary: dict) -> str:
    lines = [f"runs: {summary['runs']}", f"{'vuln':<6}{'first hit (mean ± stddev)':<30}runs hit"]
    for v in VULN_IDS:
        cell = summary["vulns"][v]
        if cell is None:
            lines.append(f"{v:<6}{NOT_OBSERVED:<30}0/{summary['runs']}")
        else:
            txt = f"{cell['mean']:.1f} ± {cell['stddev']:.1f}"
            lines.append(f"{v:<6}{txt:<30}{cell['runs_hit']}/{summary['runs']}")
    m, s = summary["mean_packets_per_iteration"]
    lines.append(f"packets per iteration: {m:.2f} ± {s:.2f}")
    m, s = summary["final_coverage_fraction"]
    lines.append(f"final coverage fraction: {m:.4f} ± {s:.4f}")
    return "\n".join(lines) + "\n"


def merged_coverage_csv(reports) -> str:
    """One row per iteration: each run's coverage fraction, then the mean."""
    n = min(len(r["rows"]) for r in reports)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["iteration", *(f"run{j}" for j in range(len(reports))), "mean"])
    for i in range(n):
        fr = [r["rows"][i][2] / r["reachable_edges"] for r in reports]
        w.writerow([reports[0]["rows"][i][0], *(f"{x:.6f}" for x in fr), f"{sum(fr) / len(fr):.6f}"])
    return buf.getvalue()


def summary_csv(summary: dict) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["vuln", "mean_first_hit", "stddev", "runs_hit", "runs"])
    for v in VULN_IDS:
        cell = summary["vulns"][v]
        if cell is None:
            w.writerow([v, NOT_OBSERVED, NOT_OBSERVED, 0, summary["runs"]])
        else:
            w.writerow([v, f"{cell['mean']:.3f}", f"{cell['stddev']:.3f}", cell["runs_hit"], summary["runs"]])
    return buf.getvalue()
