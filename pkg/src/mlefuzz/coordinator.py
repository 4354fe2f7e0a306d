"""Campaign orchestration: the timeout-style iteration loop, the reboot-count
epoch oracle, crash records and replay."""
from __future__ import annotations

import enum
import json
import random
from dataclasses import dataclass, field
from pathlib import Path

from .coverage import CoverageMap, CoverageSource, coverage_csv
from .dut import (FTD_LEADER_DATA_PROBABILITY, GEN_EDGE_NAMES, CrashKind, LeaderNode, NodeRole,
                  NodeType, SimNode, reachable_edges)
from .engines import FuzzContext, FuzzerChain, chain_apply
from .mle import encode_packet, message_name

DEFAULT_BUDGET = 40
VULN_IDS = ("V1", "V2", "V3", "V4", "V5", "V6")


class Mode(str, enum.Enum):
    SIMULATED = "simulated"
    EPOCH = "epoch"


@dataclass
class CampaignConfig:
    max_iterations: int = 1000
    iteration_budget: int = DEFAULT_BUDGET
    fuzzers: list = field(default_factory=list)
    node_type: NodeType = NodeType.FTD
    sanitizer: bool = True
    seed: int = 0
    mode: Mode = Mode.SIMULATED
    epoch_size: int = 1
    coverage_source: CoverageSource = CoverageSource.DUT_GREY
    leader_data_probability: float = FTD_LEADER_DATA_PROBABILITY

    def __post_init__(self):
        self.node_type = NodeType(self.node_type)
        self.mode = Mode(self.mode)
        self.coverage_source = CoverageSource(self.coverage_source)
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.iteration_budget < 0:
            raise ValueError("iteration_budget must be >= 0")
        if self.mode is Mode.EPOCH and self.epoch_size < 1:
            raise ValueError("epoch_size must be >= 1")
        if not 0.0 <= self.leader_data_probability <= 1.0:
            raise ValueError("leader_data_probability must lie in [0, 1]")

    def to_json(self) -> dict:
        return {"max_iterations": self.max_iterations, "iteration_budget": self.iteration_budget,
                "fuzzers": list(self.fuzzers), "node_type": self.node_type.value,
                "sanitizer": self.sanitizer, "seed": self.seed, "mode": self.mode.value,
                "epoch_size": self.epoch_size, "coverage_source": self.coverage_source.value,
                "leader_data_probability": self.leader_data_probability}


def iteration_seed(campaign_seed: int, iteration: int) -> int:
    # shifting keeps per-iteration streams of different campaigns disjoint
    return (campaign_seed << 32) ^ iteration


@dataclass
class CrashRecord:
    iteration: int
    campaign_seed: int
    seed: int
    packets: list  # [(step, hex)] delivered up to and including the crashing one
    vuln: str
    crash_kind: str
    dut_state: dict
    node_type: str
    sanitizer: bool
    leader_data_probability: float = FTD_LEADER_DATA_PROBABILITY

    @property
    def filename(self) -> str:
        return f"crash_{self.iteration}_{self.vuln}.json"

    def to_json(self) -> dict:
        return {"iteration": self.iteration, "campaign_seed": self.campaign_seed, "seed": self.seed,
                "vuln": self.vuln, "crash_kind": self.crash_kind, "dut_state": self.dut_state,
                "node_type": self.node_type, "sanitizer": self.sanitizer,
                "leader_data_probability": self.leader_data_probability,
                "packets": [{"step": s, "hex": h} for s, h in self.packets]}

    @classmethod
    def from_json(cls, doc: dict) -> "CrashRecord":
        packets = [(int(p["step"]), str(p["hex"])) for p in doc["packets"]]
        for _, h in packets:
            bytes.fromhex(h)
        if doc["vuln"] not in VULN_IDS:
            raise ValueError(f"unknown vuln id {doc['vuln']!r}")
        return cls(int(doc["iteration"]), int(doc["campaign_seed"]), int(doc["seed"]), packets,
                   doc["vuln"], CrashKind(doc["crash_kind"]).value, dict(doc["dut_state"]),
                   NodeType(doc["node_type"]).value, bool(doc["sanitizer"]),
                   float(doc.get("leader_data_probability", FTD_LEADER_DATA_PROBABILITY)))


@dataclass
class IterationResult:
    iteration: int
    crash: CrashRecord | None
    c_i: int
    packets: int
    final_role: str
    feedback_c_i: int = 0
    n_i: int = 0
    hits: list = field(default_factory=list)
    cumulative: int = 0

    @property
    def crashed(self) -> bool:
        return self.crash is not None


@dataclass
class CampaignReport:
    config: CampaignConfig
    results: list
    reachable: int
    crashes: list
    first_hit: dict
    hit_count: dict

    @property
    def curve(self) -> list:
        r = self.reachable
        return [(x.iteration, x.cumulative, x.cumulative / r if r else 0.0, x.c_i) for x in self.results]

    @property
    def final_cumulative(self) -> int:
        return self.results[-1].cumulative if self.results else 0

    @property
    def final_coverage_fraction(self) -> float:
        return self.final_cumulative / self.reachable if self.reachable else 0.0

    def to_json(self) -> dict:
        n = len(self.results)
        return {
            "config": self.config.to_json(),
            "iterations": n,
            "reachable_edges": self.reachable,
            "final_cumulative_edges": self.final_cumulative,
            "final_coverage_fraction": round(self.final_coverage_fraction, 9),
            "mean_packets_per_iteration": round(sum(x.packets for x in self.results) / n, 6) if n else 0.0,
            "first_hit": {v: self.first_hit.get(v) for v in VULN_IDS},
            "hit_count": {v: self.hit_count.get(v, 0) for v in VULN_IDS},
            "crash_files": [c.filename for c in self.crashes],
            "row_fields": ["iteration", "c_i", "cumulative_edges", "packets", "n_i", "final_role", "crash"],
            "rows": [[x.iteration, x.c_i, x.cumulative, x.packets, x.n_i, x.final_role,
                      x.crash.vuln if x.crash else None] for x in self.results],
        }


class CampaignState:
    """Everything a campaign carries from one iteration to the next."""

    def __init__(self, config: CampaignConfig, chain: FuzzerChain | None = None):
        self.config = config
        self.chain = chain if chain is not None else FuzzerChain.from_config(config.fuzzers)
        self.dut_coverage = CoverageMap(reachable=reachable_edges(config.node_type))
        self.gen_coverage = CoverageMap(reachable=len(GEN_EDGE_NAMES))
        self.iteration = 0
        self.dut: SimNode | None = None  # persistent node in epoch mode

    @property
    def feedback_source(self) -> CoverageSource:
        if self.config.mode is Mode.EPOCH:
            return CoverageSource.GENERATOR_BLACK
        eng = self.chain.coverage_engine
        return eng.source if eng is not None else self.config.coverage_source

    def new_dut(self, seed: int) -> SimNode:
        c = self.config
        return SimNode(c.node_type, c.sanitizer, self.dut_coverage, random.Random(f"dut:{seed}"),
                       leader_data_probability=c.leader_data_probability)


def _dut_state(dut: SimNode) -> dict:
    return {"state": dut.state.value, "role": dut.role.value, "reboot_count": dut.reboot_count,
            "has_leader_data": dut.has_leader_data}


def _exchange(state: CampaignState, dut: SimNode, i: int, seed: int) -> IterationResult:
    """One budgeted generator/DUT dialogue with the chain in between."""
    cfg = state.config
    chain = state.chain
    gen = LeaderNode(state.gen_coverage)
    ctx = FuzzContext(random.Random(seed), i)
    chain.begin_iteration(i)
    delivered: list = []
    crash = None
    hits: list = []
    packets = 0
    n_i = 0
    retained = dut.has_leader_data  # epoch mode carries this across iterations
    if cfg.iteration_budget > 0:
        for p in dut.start():
            gen.receive(p)
    for step in range(cfg.iteration_budget):
        for p in dut.tick():
            gen.receive(p)
        pkt = gen.generate_next()
        if pkt is None:
            continue
        mutated, log = chain_apply(chain, pkt, ctx)
        n_i += log.n_i
        raw = encode_packet(mutated)
        packets += 1
        if crash is None:
            delivered.append((step, raw.hex()))
        out = dut.step(raw)
        if out.crashed:
            hits.append(out.vuln)
            if crash is None:
                crash = CrashRecord(i, cfg.seed, seed, list(delivered), out.vuln, out.crash_kind.value,
                                    dict(_dut_state(dut), leader_data_retained=retained),
                                    cfg.node_type.value, cfg.sanitizer,
                                    cfg.leader_data_probability)
            for p in dut.restart_after_crash():
                gen.receive(p)
        else:
            for p in out.responses:
                gen.receive(p)
    c_dut = state.dut_coverage.commit_iteration()
    c_gen = state.gen_coverage.commit_iteration()
    fb = c_gen if state.feedback_source is CoverageSource.GENERATOR_BLACK else c_dut
    chain.end_iteration(fb, i)
    return IterationResult(i, crash, c_dut, packets, dut.role.value, fb, n_i, hits,
                           state.dut_coverage.cumulative_count)


def run_iteration(config: CampaignConfig, state: CampaignState) -> IterationResult:
    """Fresh nodes, one budgeted exchange, coverage commit, factory reset."""
    state.iteration += 1
    i = state.iteration
    seed = iteration_seed(config.seed, i)
    dut = state.new_dut(seed)
    return _exchange(state, dut, i, seed)


def run_campaign(config: CampaignConfig, out_dir=None, chain: FuzzerChain | None = None,
                 progress=None) -> CampaignReport:
    state = CampaignState(config, chain)
    results, crashes = [], []
    first_hit: dict = {}
    hit_count: dict = {}
    for _ in range(config.max_iterations):
        if config.mode is Mode.EPOCH:
            res = _epoch_iteration(config, state)
        else:
            res = run_iteration(config, state)
        results.append(res)
        for v in res.hits:
            hit_count[v] = hit_count.get(v, 0) + 1
            first_hit.setdefault(v, res.iteration)
        if res.crash is not None:
            crashes.append(res.crash)
        if progress is not None:
            progress(res)
    report = CampaignReport(config, results, state.dut_coverage.reachable, crashes, first_hit, hit_count)
    report.state = state
    if out_dir is not None:
        write_artifacts(report, out_dir)
    return report


def write_artifacts(report: CampaignReport, out_dir) -> Path:
    from .report import validate_crash, validate_report

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    doc = report.to_json()
    validate_report(doc)
    (out / "report.json").write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")
    (out / "coverage.csv").write_text(coverage_csv(report.curve))
    crash_dir = out / "crashes"
    crash_dir.mkdir(exist_ok=True)
    for rec in report.crashes:
        cdoc = rec.to_json()
        validate_crash(cdoc)
        (crash_dir / rec.filename).write_text(json.dumps(cdoc, indent=1, sort_keys=True) + "\n")
    return out


# -- physical-style epochs ----------------------------------------------------------

def _epoch_iteration(config: CampaignConfig, state: CampaignState) -> IterationResult:
    """Fuzz iteration on a persistent DUT, followed by a soft reset."""
    state.iteration += 1
    i = state.iteration
    seed = iteration_seed(config.seed, i)
    if state.dut is None:
        state.dut = state.new_dut(seed)
        state.dut.hard_reset()
    state.dut.rng = random.Random(f"dut:{seed}")
    res = _exchange(state, state.dut, i, seed)
    state.dut.soft_reset()
    return res


def run_fuzzing_epoch(config: CampaignConfig, n: int | None = None,
                      state: CampaignState | None = None) -> bool:
    """N iterations bracketed by reboot-count reads.

    True when the count grew by more than the framework's own resets, i.e.
    the DUT rebooted on its own at least once.
    """
    n = config.epoch_size if n is None else n
    if n < 1:
        raise ValueError("epoch size must be >= 1")
    state = state if state is not None else CampaignState(config)
    if state.dut is None:
        state.dut = state.new_dut(iteration_seed(config.seed, 0))
    dut = state.dut
    dut.hard_reset()
    c0 = dut.read_reboot_count()
    dut.soft_reset()
    for _ in range(n):
        _epoch_iteration(config, state)
    _clean_attach(config, state)
    cf = dut.read_reboot_count()
    state.last_epoch_counts = (c0, cf)
    return cf > c0 + n + 1


def _clean_attach(config: CampaignConfig, state: CampaignState) -> IterationResult:
    saved = state.chain
    state.chain = FuzzerChain()
    try:
        return _exchange(state, state.dut, state.iteration, iteration_seed(config.seed, state.iteration))
    finally:
        state.chain = saved


# -- replay ---------------------------------------------------------------------------

def replay(record: CrashRecord, config: CampaignConfig | None = None,
           sanitizer: bool | None = None) -> IterationResult:
    """Re-deliver a record's packets, at their original steps, to a fresh DUT."""
    san = record.sanitizer if sanitizer is None else sanitizer
    ldp = config.leader_data_probability if config is not None else record.leader_data_probability
    cov = CoverageMap(reachable=reachable_edges(record.node_type))
    dut = SimNode(NodeType(record.node_type), san, cov, random.Random(f"dut:{record.seed}"),
                  leader_data_probability=ldp)
    if record.dut_state.get("leader_data_retained"):
        dut.has_leader_data = True
    by_step: dict = {}
    for step, h in record.packets:
        by_step.setdefault(step, []).append(bytes.fromhex(h))
    crash = None
    hits = []
    dut.start()
    last = max(by_step) if by_step else -1
    for step in range(last + 1):
        dut.tick()
        for raw in by_step.get(step, ()):
            out = dut.step(raw)
            if out.crashed:
                hits.append(out.vuln)
                crash = CrashRecord(record.iteration, record.campaign_seed, record.seed,
                                    list(record.packets), out.vuln, out.crash_kind.value,
                                    _dut_state(dut), record.node_type, san, ldp)
                break
        if crash is not None:
            break
    c = cov.commit_iteration()
    return IterationResult(record.iteration, crash, c, len(record.packets), dut.role.value, hits=hits,
                           cumulative=cov.cumulative_count)


def describe_packet(raw_hex: str) -> str:
    raw = bytes.fromhex(raw_hex)
    return message_name(raw[5]) if len(raw) > 5 else "short"
