"""Mutation engines: Random, Coverage-based and TLV Inserter.

Engines are chained: each one receives the previous engine's output packet.
The coverage-based engine keeps a per-(message type, field path) mutation
probability table that is adapted once per iteration from the new coverage
found during that iteration.
"""
from __future__ import annotations

import math
import random
from collections import deque
from dataclasses import dataclass, field
from typing import Mapping, NamedTuple, Sequence

from .coverage import CoverageSource
from .dissector import (DissectedPacket, FieldDescriptor, dissect, insertion_points,
                        read_field, write_field)
from .mle import (DEFAULT_DEPTH_CAP, MlePacket, Tlv, decode_tlvs, encode_tlv, insert_tlv,
                  iter_tlvs, recompute_parent_lengths)

P_MIN = 0.001
P_MAX = 1.0
DEFAULT_K = 2.0
DEFAULT_BETA = 3.0
DEFAULT_WARM_I = 2000
DEFAULT_Q = 0.8
DEFAULT_POOL_CAPACITY = 1024


def clamp(p: float) -> float:
    return P_MIN if p < P_MIN else P_MAX if p > P_MAX else p


# -- probability adaptation ---------------------------------------------------

def gamma_warmup(i: int, warm_i: int) -> float:
    if warm_i <= 0:
        raise ValueError("warm_i must be a positive integer")
    if i < 0:
        raise ValueError("iteration index must be non-negative")
    return min(i / warm_i, 1.0)


def feedback_gain(c_i: int, i: int, beta: float, warm_i: int, n_i: int) -> float:
    """Signed probability gain for one iteration, before per-field scaling.

    At i == 0 the warm-up factor is zero; the penalty branch then uses 1/beta
    instead of dividing by zero.
    """
    if n_i < 1:
        raise ValueError("n_i must be >= 1")
    if beta <= 0:
        raise ValueError("beta must be positive")
    gamma = gamma_warmup(i, warm_i)
    if c_i > 0:
        return beta * gamma / n_i
    if gamma == 0.0:
        return -(1.0 / beta) / n_i
    return -(1.0 / (beta * gamma)) / n_i


def init_probabilities(d: DissectedPacket, k: float) -> list:
    if d.field_count < 1:
        raise ValueError("packet has no fields")
    p = clamp(k / d.field_count)
    return [(f.path, p) for f in d.fields]


class Mutation(NamedTuple):
    message_type: int
    path: str
    old: int
    new: int
    bit_width: int


@dataclass
class MutationLog:
    iteration: int = 0
    mutations: list = field(default_factory=list)
    insertions: list = field(default_factory=list)

    @property
    def n_i(self) -> int:
        return len(self.mutations)

    def extend(self, other: "MutationLog") -> None:
        self.mutations.extend(other.mutations)
        self.insertions.extend(other.insertions)

    def to_json(self) -> dict:
        return {
            "iteration": self.iteration,
            "mutations": [[m.message_type, m.path, m.old, m.new] for m in self.mutations],
            "insertions": list(self.insertions),
        }


class ProbabilityTable:
    """Mutation probability per (message type, field path)."""

    def __init__(self, k: float = DEFAULT_K, beta: float = DEFAULT_BETA,
                 warm_i: int = DEFAULT_WARM_I):
        self.k = k
        self.beta = beta
        self.warm_i = warm_i
        self.probs: dict[tuple, float] = {}

    def lookup(self, d: DissectedPacket) -> list:
        """Probabilities aligned with ``d.fields``; unseen fields get k/|F_P|."""
        probs = self.probs
        msg = d.message_type
        init = None
        out = []
        for f in d.fields:
            key = (msg, f.path)
            p = probs.get(key)
            if p is None:
                if init is None:
                    init = clamp(self.k / d.field_count)
                p = probs[key] = init
            out.append(p)
        return out

    def __getitem__(self, key) -> float:
        return self.probs[key]

    def __len__(self) -> int:
        return len(self.probs)

    def values(self):
        return self.probs.values()

    def update(self, log: MutationLog, c_i: int, i: int) -> None:
        update_probabilities(self, log, c_i, i)


def update_probabilities(table: ProbabilityTable, log: MutationLog, c_i: int, i: int) -> ProbabilityTable:
    """Shift every field mutated in this iteration by G / log2(|V_f| + 1).

    A field mutated several times in one iteration is shifted once; n_i still
    counts every mutation.
    """
    n_i = log.n_i
    if n_i == 0:
        return table
    gain = feedback_gain(c_i, i, table.beta, table.warm_i, n_i)
    done = set()
    probs = table.probs
    for m in log.mutations:
        key = (m.message_type, m.path)
        if key in done:
            continue
        done.add(key)
        p = probs.get(key, clamp(table.k))
        probs[key] = clamp(p + gain / math.log2((1 << m.bit_width) + 1))
    return table


# -- value selection ------------------------------------------------------------

_SPECIALS: dict[int, tuple] = {}


def special_values(bit_width: int) -> tuple:
    s = _SPECIALS.get(bit_width)
    if s is None:
        top = (1 << bit_width) - 1
        s = _SPECIALS[bit_width] = tuple(sorted({0, 1, top, top - 1}))
    return s


def pick_value(f: FieldDescriptor, rng: random.Random) -> int:
    """Half the time uniform over the domain, else a boundary value."""
    if rng.random() < 0.5:
        return rng.getrandbits(f.bit_width)
    return rng.choice(special_values(f.bit_width))


def random_fuzz(packet: MlePacket, d: DissectedPacket, probs, rng: random.Random,
                iteration: int = 0):
    """Mutate each field independently with its probability.

    ``probs`` is either a sequence aligned with ``d.fields`` or a mapping
    from field path to probability.
    """
    if isinstance(probs, Mapping):
        probs = [probs[f.path] for f in d.fields]
    log = MutationLog(iteration)
    rand = rng.random
    msg = d.message_type
    for f, p in zip(d.fields, probs):
        if rand() < p:
            old = read_field(packet, f)
            new = pick_value(f, rng)
            packet = write_field(packet, f, new)
            log.mutations.append(Mutation(msg, f.path, old, new, f.bit_width))
    return packet, log


# -- TLV pool and insertion -------------------------------------------------------

_STANDALONE: dict = {}


def _standalone(tlv: Tlv) -> bool:
    ok = _STANDALONE.get(tlv)
    if ok is None:
        try:
            tlvs, rest = decode_tlvs(encode_tlv(tlv))
            ok = tlvs == (tlv,) and not rest
        except ValueError:
            ok = False
        if len(_STANDALONE) > 50_000:
            _STANDALONE.clear()
        _STANDALONE[tlv] = ok
    return ok


class TlvPool:
    """Bounded multiset of harvested TLVs, FIFO eviction."""

    def __init__(self, capacity: int = DEFAULT_POOL_CAPACITY):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self._items: deque = deque(maxlen=capacity)

    def __len__(self) -> int:
        return len(self._items)

    def __iter__(self):
        return iter(self._items)

    def __getitem__(self, i):
        return self._items[i]

    def add(self, tlv: Tlv, message_type: int = -1) -> None:
        self._items.append((message_type, tlv))

    def harvest(self, packet: MlePacket) -> "TlvPool":
        for _, tlv in iter_tlvs(packet.tlvs):
            if _standalone(tlv):
                self._items.append((packet.message_type, tlv))
        return self


def pool_harvest(pool: TlvPool, packet: MlePacket) -> TlvPool:
    return pool.harvest(packet)


def tlv_insert(packet: MlePacket, pool: TlvPool, gamma_consistency: float, rng: random.Random,
               q: float = DEFAULT_Q, iteration: int = 0, cap: int = DEFAULT_DEPTH_CAP):
    """Insert one pooled TLV at a valid boundary with probability ``q``.

    With probability ``gamma_consistency`` the lengths of the inserted TLV's
    ancestors are recomputed afterwards.
    """
    log = MutationLog(iteration)
    if not len(pool) or rng.random() >= q:
        return packet, log
    src_type, tlv = pool[rng.randrange(len(pool))]
    points = [pt for pt in insertion_points(packet, cap) if pt.depth - 1 + tlv.height <= cap]
    if not points:
        return packet, log
    pt = points[rng.randrange(len(points))]
    packet = insert_tlv(packet, pt.parent_path, pt.index, tlv)
    fixed = rng.random() < gamma_consistency
    if fixed:
        packet = recompute_parent_lengths(packet, pt.path)
    log.insertions.append({"tlv_type": tlv.tlv_type, "source_message": src_type,
                           "path": list(pt.path), "lengths_fixed": fixed})
    return packet, log


# -- engines and chains -----------------------------------------------------------

class FuzzContext:
    """Per-iteration state shared by the engines of one chain."""

    def __init__(self, rng: random.Random, iteration: int = 0):
        self.rng = rng
        self.iteration = iteration
        self.original: MlePacket | None = None


class Engine:
    kind = "abstract"
    structural = False

    def fuzz(self, packet: MlePacket, d: DissectedPacket, ctx: FuzzContext):
        raise NotImplementedError

    def begin_iteration(self, iteration: int) -> None:
        pass

    def end_iteration(self, c_i: int, iteration: int) -> None:
        pass

    def config(self) -> dict:
        return {"kind": self.kind}


class RandomEngine(Engine):
    kind = "random"

    def __init__(self, k: float = DEFAULT_K):
        if k < 0:
            raise ValueError("k must be non-negative")
        self.k = k

    def probabilities(self, d: DissectedPacket) -> list:
        return [clamp(self.k / d.field_count)] * d.field_count

    def fuzz(self, packet, d, ctx):
        return random_fuzz(packet, d, self.probabilities(d), ctx.rng, ctx.iteration)

    def config(self):
        return {"kind": self.kind, "k": self.k}


class CoverageEngine(RandomEngine):
    """Random fuzzing with per-field probabilities adapted from coverage."""

    def __init__(self, k: float = DEFAULT_K, beta: float = DEFAULT_BETA,
                 warm_i: int = DEFAULT_WARM_I, source: CoverageSource = CoverageSource.DUT_GREY,
                 adapt: bool = True):
        super().__init__(k)
        gamma_warmup(0, warm_i)  # validates warm_i
        if beta <= 0:
            raise ValueError("beta must be positive")
        self.source = CoverageSource(source)
        self.kind = "coverage_grey" if self.source is CoverageSource.DUT_GREY else "coverage_black"
        self.table = ProbabilityTable(k, beta, warm_i)
        self.adapt = adapt
        self.iteration_log = MutationLog()

    def probabilities(self, d):
        return self.table.lookup(d)

    def begin_iteration(self, iteration):
        self.iteration_log = MutationLog(iteration)

    def fuzz(self, packet, d, ctx):
        packet, log = super().fuzz(packet, d, ctx)
        self.iteration_log.mutations.extend(log.mutations)
        return packet, log

    def end_iteration(self, c_i, iteration):
        if self.adapt:
            update_probabilities(self.table, self.iteration_log, c_i, iteration)

    def config(self):
        return {"kind": self.kind, "k": self.k, "beta": self.table.beta,
                "warm_i": self.table.warm_i}


class TlvInserterEngine(Engine):
    kind = "tlv_inserter"
    structural = True

    def __init__(self, gamma: float = 1.0, q: float = DEFAULT_Q,
                 capacity: int = DEFAULT_POOL_CAPACITY):
        if not 0.0 <= gamma <= 1.0 or not 0.0 <= q <= 1.0:
            raise ValueError("gamma and q must lie in [0, 1]")
        self.gamma = gamma
        self.q = q
        self.pool = TlvPool(capacity)

    def fuzz(self, packet, d, ctx):
        out, log = tlv_insert(packet, self.pool, self.gamma, ctx.rng, self.q, ctx.iteration)
        self.pool.harvest(ctx.original if ctx.original is not None else packet)
        return out, log

    def config(self):
        return {"kind": self.kind, "gamma": self.gamma, "q": self.q}


class FieldSetterEngine(Engine):
    """Deterministically sets one named field on matching messages.

    Used for directed reproduction of known triggers. ``limit`` caps how
    many packets are modified per iteration.
    """

    kind = "set_field"

    def __init__(self, message_type: int, path: str, value: int, limit: int | None = None,
                 iterations=None):
        self.message_type = int(message_type)
        self.path = path
        self.value = int(value)
        self.limit = limit
        self.iterations = None if iterations is None else frozenset(iterations)
        self._fired = 0
        self._active = True

    def begin_iteration(self, iteration):
        self._fired = 0
        self._active = self.iterations is None or iteration in self.iterations

    def fuzz(self, packet, d, ctx):
        log = MutationLog(ctx.iteration)
        if not self._active or packet.message_type != self.message_type:
            return packet, log
        if self.limit is not None and self._fired >= self.limit:
            return packet, log
        for f in d.fields:
            if f.path == self.path:
                old = read_field(packet, f)
                packet = write_field(packet, f, self.value)
                log.mutations.append(Mutation(d.message_type, f.path, old, self.value, f.bit_width))
                self._fired += 1
                break
        return packet, log

    def config(self):
        return {"kind": self.kind, "message_type": self.message_type, "path": self.path,
                "value": self.value, "limit": self.limit}


ENGINE_KINDS = ("random", "coverage_grey", "coverage_black", "tlv_inserter", "set_field")


def make_engine(cfg: Mapping) -> Engine:
    kind = cfg.get("kind")
    if kind == "random":
        return RandomEngine(float(cfg.get("k", DEFAULT_K)))
    if kind in ("coverage_grey", "coverage_black"):
        src = CoverageSource.DUT_GREY if kind == "coverage_grey" else CoverageSource.GENERATOR_BLACK
        return CoverageEngine(float(cfg.get("k", DEFAULT_K)), float(cfg.get("beta", DEFAULT_BETA)),
                              int(cfg.get("warm_i", DEFAULT_WARM_I)), src,
                              bool(cfg.get("adapt", True)))
    if kind == "tlv_inserter":
        return TlvInserterEngine(float(cfg.get("gamma", 1.0)), float(cfg.get("q", DEFAULT_Q)),
                                 int(cfg.get("capacity", DEFAULT_POOL_CAPACITY)))
    if kind == "set_field":
        return FieldSetterEngine(int(cfg["message_type"]), str(cfg["path"]), int(cfg["value"]),
                                 cfg.get("limit"), cfg.get("iterations"))
    raise ValueError(f"unknown fuzzer kind: {kind!r}")


class FuzzerChain:
    def __init__(self, engines: Sequence[Engine] = ()):
        self.engines = list(engines)
        if sum(isinstance(e, CoverageEngine) for e in self.engines) > 1:
            raise ValueError("at most one coverage-based engine per chain")

    @classmethod
    def from_config(cls, fuzzers) -> "FuzzerChain":
        return cls([make_engine(c) for c in fuzzers or ()])

    @property
    def coverage_engine(self) -> CoverageEngine | None:
        for e in self.engines:
            if isinstance(e, CoverageEngine):
                return e
        return None

    def __len__(self) -> int:
        return len(self.engines)

    def begin_iteration(self, iteration: int) -> None:
        for e in self.engines:
            e.begin_iteration(iteration)

    def end_iteration(self, c_i: int, iteration: int) -> None:
        for e in self.engines:
            e.end_iteration(c_i, iteration)

    def config(self) -> list:
        return [e.config() for e in self.engines]


def chain_apply(chain: FuzzerChain, packet: MlePacket, ctx: FuzzContext,
                d: DissectedPacket | None = None):
    merged = MutationLog(ctx.iteration)
    if not chain.engines:
        return packet, merged
    ctx.original = packet
    if d is None:
        d = dissect(packet)
    for engine in chain.engines:
        out, log = engine.fuzz(packet, d, ctx)
        merged.extend(log)
        if engine.structural and out is not packet:
            d = dissect(out)
        packet = out
    return packet, merged
