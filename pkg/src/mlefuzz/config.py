"""Campaign configuration files (YAML or JSON).

Key tree::

    fuzzers:            # chain, applied in order
      - {kind: random, k: 2}
    dut:
      type: ftd         # mtd | ftd
      sanitizer: true
      leader_data_probability: 0.3
    coverage:
      source: dut_grey  # dut_grey | generator_black
    budget: 40          # ticks per iteration
    iterations: 1000
    seed: 0
    mode: simulated     # simulated | epoch
    epoch_size: 4
"""
from __future__ import annotations

from pathlib import Path

import jsonschema
import yaml

from .coordinator import DEFAULT_BUDGET, CampaignConfig
from .engines import ENGINE_KINDS, make_engine


class ConfigError(ValueError):
    pass


SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "fuzzers": {"type": "array", "items": {
            "type": "object", "required": ["kind"],
            "properties": {"kind": {"enum": list(ENGINE_KINDS)}},
        }},
        "dut": {"type": "object", "additionalProperties": False, "properties": {
            "type": {"enum": ["mtd", "ftd"]},
            "sanitizer": {"type": "boolean"},
            "leader_data_probability": {"type": "number", "minimum": 0, "maximum": 1},
        }},
        "coverage": {"type": "object", "additionalProperties": False, "properties": {
            "source": {"enum": ["dut_grey", "generator_black"]},
        }},
        "budget": {"type": "integer", "minimum": 0},
        "iterations": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer", "minimum": 0},
        "mode": {"enum": ["simulated", "epoch"]},
        "epoch_size": {"type": "integer", "minimum": 1},
    },
}


def parse_config(doc, **overrides) -> CampaignConfig:
    """Validate a config mapping; keyword overrides replace top-level keys when not None."""
    if doc is None:
        doc = {}
    if not isinstance(doc, dict):
        raise ConfigError("config must be a mapping")
    doc = dict(doc)
    doc.update({k: v for k, v in overrides.items() if v is not None})
    try:
        jsonschema.validate(doc, SCHEMA)
    except jsonschema.ValidationError as exc:
        path = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"{path}: {exc.message}") from None
    fuzzers = list(doc.get("fuzzers", []))
    for f in fuzzers:
        try:
            make_engine(f)  # catches bad parameters early
        except (ValueError, KeyError, TypeError) as exc:
            raise ConfigError(f"fuzzer {f!r}: {exc}") from None
    dut = doc.get("dut", {})
    cov = doc.get("coverage", {})
    kw = {}
    if "leader_data_probability" in dut:
        kw["leader_data_probability"] = float(dut["leader_data_probability"])
    try:
        return CampaignConfig(
            max_iterations=doc.get("iterations", 1000),
            iteration_budget=doc.get("budget", DEFAULT_BUDGET),
            fuzzers=fuzzers,
            node_type=dut.get("type", "ftd"),
            sanitizer=dut.get("sanitizer", True),
            seed=doc.get("seed", 0),
            mode=doc.get("mode", "simulated"),
            epoch_size=doc.get("epoch_size", 1),
            coverage_source=cov.get("source", "dut_grey"),
            **kw,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def load_config(path, **overrides) -> CampaignConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    try:
        doc = yaml.safe_load(text)  # JSON is a subset of YAML
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse config: {exc}") from None
    return parse_config(doc, **overrides)
