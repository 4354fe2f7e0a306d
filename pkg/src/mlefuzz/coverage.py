"""Edge-coverage bookkeeping for campaigns."""
from __future__ import annotations

import csv
import enum
import io

MAP_SIZE = 4096


class CoverageSource(str, enum.Enum):
    DUT_GREY = "dut_grey"
    GENERATOR_BLACK = "generator_black"


class CoverageMap:
    """Fixed-size edge bitmap with a per-iteration scratch set.

    Edge ids are assigned statically by the simulated target, so there are
    no hash collisions.
    """

    def __init__(self, size: int = MAP_SIZE, reachable: int | None = None):
        self.size = size
        self.reachable = reachable if reachable is not None else size
        self._cumulative = bytearray(size)
        self._scratch: set[int] = set()
        self.cumulative_count = 0

    def record_edges(self, edges) -> None:
        for e in edges:
            if not 0 <= e < self.size:
                raise ValueError(f"edge id {e} out of range [0, {self.size})")
        self._scratch.update(edges)

    def record(self, edge: int) -> None:
        # hot path: ids come from the static edge table and are always in range
        self._scratch.add(edge)

    @property
    def scratch_count(self) -> int:
        return len(self._scratch)

    def commit_iteration(self) -> int:
        cum = self._cumulative
        new = 0
        for e in self._scratch:
            if not cum[e]:
                cum[e] = 1
                new += 1
        self._scratch.clear()
        self.cumulative_count += new
        return new

    def covered(self) -> list[int]:
        return [i for i, b in enumerate(self._cumulative) if b]

    def is_covered(self, edge: int) -> bool:
        return bool(self._cumulative[edge])

    def coverage_fraction(self) -> float:
        if self.reachable <= 0:
            return 0.0
        return self.cumulative_count / self.reachable


CSV_HEADER = ("iteration", "cumulative_edges", "coverage_fraction", "c_i")


def coverage_csv(rows) -> str:
    """Render (iteration, cumulative_edges, coverage_fraction, c_i) rows."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for it, cum, frac, c in rows:
        w.writerow((it, cum, f"{frac:.6f}", c))
    return buf.getvalue()
