"""Historical-data-sketch cost model.

Every partial match hashes to an attribute key: its state plus the values
of the partition attributes (the SAME attributes used by the plan's
patterns).  The sketch keeps, per key, one counter pair per pattern:

* cn_i: complete matches of pattern i generated by matches with this key,
* pn_i: partial matches of pattern i generated likewise.

A new match credits its whole ancestor chain (itself included), so a key's
counters measure how productive matches with that key have historically
been.  Estimates read the counters straight back: contribution is cn,
overhead is pn scaled by a per-record cost Theta.

Counters halve at every window-length epoch so estimates track recent
history and recover from distribution drift.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

from . import expr as ex
from .model import MatchRecord
from .plan import ExecutionPlan


def theta_constant(pm: MatchRecord) -> float:
    return 1.0


def theta_length(pm: MatchRecord) -> float:
    return float(len(pm.elements()))


@dataclass
class CostVectors:
    contribution: list  # per-pattern expected CMs generated
    overhead: list      # per-pattern expected PM-processing cost

    def total_contribution(self) -> float:
        return sum(self.contribution)


class SketchEntry:
    __slots__ = ("cn", "pn")

    def __init__(self, n: int):
        self.cn = [0.0] * n
        self.pn = [0.0] * n


class Sketch:
    """Exact-key counter table (no lossy hashing)."""

    def __init__(self, plan: ExecutionPlan):
        self.plan = plan
        self.n = plan.n
        self.table = {}  # key tuple -> SketchEntry
        attrs = set()
        for p in plan.patterns:
            for c in ex.conjuncts(p.predicate):
                if type(c) is ex.Same:
                    attrs.add(c.attr)
        self.partition_attrs = tuple(sorted(attrs))


def attr_key(sketch: Sketch, pm: MatchRecord):
    """Stable key: (state_id, partition attribute values of the first
    element).  Cached on the record."""
    if pm.key is None:
        first = pm.slots[0]
        el = first[0] if isinstance(first, tuple) else first
        pm.key = (pm.state_id,) + tuple(el.attrs.get(a)
                                        for a in sketch.partition_attrs)
    return pm.key


def _generators(new_match: MatchRecord):
    rec = new_match
    while rec is not None:
        yield rec
        rec = rec.parent


def sketch_update(sketch: Sketch, new_match: MatchRecord, cm_pids=(),
                  generators=None):
    """Credit the new match to its generators' keys.

    ``cm_pids`` lists the patterns for which the match was emitted
    complete; its pattern_bits say which patterns it serves as a PM.
    """
    n = sketch.n
    bits = new_match.pattern_bits
    if generators is None:
        generators = _generators(new_match)
    for rho in generators:
        k = attr_key(sketch, rho)
        entry = sketch.table.get(k)
        if entry is None:
            entry = sketch.table[k] = SketchEntry(n)
        for i in range(n):
            if bits & (1 << (n - i - 1)):
                entry.pn[i] += 1
        for i in cm_pids:
            entry.cn[i] += 1


def estimate(sketch: Sketch, pm: MatchRecord, theta=theta_constant) -> CostVectors:
    entry = sketch.table.get(attr_key(sketch, pm))
    if entry is None:
        z = [0.0] * sketch.n
        return CostVectors(z, list(z))
    t = theta(pm)
    return CostVectors(list(entry.cn), [p * t for p in entry.pn])


def order(a: CostVectors, b: CostVectors) -> bool:
    """True when a strictly exceeds b: by dominance on every component,
    otherwise by contribution sum."""
    if all(x > y for x, y in zip(a.contribution, b.contribution)):
        return True
    return a.total_contribution() > b.total_contribution()


def heap_key(sketch: Sketch, pm: MatchRecord, theta=theta_constant):
    """Max-heap ordering key: contribution sum, ties to the older record."""
    v = estimate(sketch, pm, theta)
    return (v.total_contribution(), -pm.first_ts, -pm.first_seq)


def heap_top(cluster, sketch: Sketch, theta=theta_constant):
    """The live PM no other member of the cluster exceeds under `order`."""
    best = None
    best_key = None
    for pm in cluster:
        if not pm.alive:
            continue
        k = heap_key(sketch, pm, theta)
        if best is None or k > best_key:
            best, best_key = pm, k
    return best


def decay(sketch: Sketch, factor: float = 0.5):
    """Epoch roll: scale every counter (halving by default)."""
    for entry in sketch.table.values():
        entry.cn = [c * factor for c in entry.cn]
        entry.pn = [p * factor for p in entry.pn]


def dump_csv(sketch: Sketch, path: str):
    n = sketch.n
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["key", "state_id"]
                   + [f"cn_{i + 1}" for i in range(n)]
                   + [f"pn_{i + 1}" for i in range(n)])
        for k in sorted(sketch.table, key=repr):
            e = sketch.table[k]
            key_txt = "|".join(repr(v) for v in k)
            w.writerow([key_txt, k[0]] + [repr(c) for c in e.cn]
                       + [repr(p) for p in e.pn])
