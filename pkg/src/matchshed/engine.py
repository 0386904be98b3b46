"""Per-element evaluation: advance partial matches, emit complete matches,
enforce windows and selection/consumption policies, track latency.

Policy semantics:

* skip-till-any forks: the parent record stays buffered after an extension.
* skip-till-next consumes: a record takes the first qualifying element; the
  extended pattern's bit is cleared on the parent.  When one element
  qualifies for both Kleene extension and closing, the record forks into
  both continuations; this is the one ambiguity skip-till-next keeps, and
  it is what makes every strict-contiguity match also a skip-till-next
  match.
* strict-contiguity requires seq_index adjacency on every extension.

Under ``consume``, elements bound into an emitted complete match are
tombstoned per pattern; matches containing a tombstoned element are
rejected at emission, which is equivalent to dropping their records.
"""

from __future__ import annotations

import time
from bisect import bisect_left, bisect_right
from dataclasses import dataclass, field

from .expr import EvalDiagnostics, eval_predicate
from .model import (ConsumptionPolicy, DataElement, MatchRecord,
                    SelectionPolicy, StepKind, WindowKind, pattern_bit)
from .plan import ExecutionPlan


@dataclass
class LatencyMonitor:
    """Per-pattern EWMA latency plus cumulative per-state work counters."""
    n: int
    alpha: float = 0.2
    latency_ms: list = None
    state_work: dict = None

    def __post_init__(self):
        if self.latency_ms is None:
            self.latency_ms = [0.0] * self.n
        if self.state_work is None:
            self.state_work = {}


def measure(monitor: LatencyMonitor, elapsed_ms: float, work_by_state: dict,
            plan: ExecutionPlan):
    """Apportion elapsed time to patterns via the worked states' PSD bits,
    split evenly among sharers, and fold into the EWMA."""
    total = sum(work_by_state.values())
    for sid, w in work_by_state.items():
        monitor.state_work[sid] = monitor.state_work.get(sid, 0) + w
    if total == 0:
        return
    n = monitor.n
    share = [0.0] * n
    for sid, w in work_by_state.items():
        psd = plan.states[sid].psd
        if psd == 0:
            continue
        part = elapsed_ms * (w / total) / psd.bit_count()
        for i in range(n):
            if psd & (1 << (n - i - 1)):
                share[i] += part
    a = monitor.alpha
    for i in range(n):
        monitor.latency_ms[i] = (1 - a) * monitor.latency_ms[i] + a * share[i]


@dataclass
class StepResult:
    new_pms: list
    complete: list      # (pattern_id, MatchRecord)
    work: dict          # state_id -> units this step
    rejected_consumed: int = 0


@dataclass
class EngineCounters:
    pms_created: int = 0
    pms_expired: int = 0
    pms_policy_dropped: int = 0
    pms_shed: int = 0
    cms_emitted: int = 0


class Engine:
    """Owns the plan's buffers and evaluates one element at a time."""

    def __init__(self, plan: ExecutionPlan,
                 selection: SelectionPolicy = SelectionPolicy.SKIP_TILL_ANY,
                 consumption: ConsumptionPolicy = ConsumptionPolicy.REUSE):
        self.plan = plan
        n = plan.n
        self.n = n
        self.selection = [p.selection or selection for p in plan.patterns]
        self.consumption = [p.consumption or consumption
                            for p in plan.patterns]
        self.windows = [p.window for p in plan.patterns]
        self.bit = [pattern_bit(i, n) for i in range(n)]
        self.consumed = [set() for _ in range(n)]
        self.history = {}    # type_tag -> ([seq], [element])
        self.counters = EngineCounters()
        self.diag = EvalDiagnostics()
        self.emit_counter = 0
        self._max_count_window = max(
            (w.size for w in self.windows if w.kind is WindowKind.COUNT),
            default=0)
        # seq-based trimming is only sound when every window is count-based
        self._trim_ok = all(w.kind is WindowKind.COUNT for w in self.windows)
        self._hist_trim_at = 0

    # ------------------------------------------------------------- windows

    def _window_ok(self, pid: int, rec: MatchRecord, d: DataElement) -> bool:
        w = self.windows[pid]
        if w.kind is WindowKind.COUNT:
            return d.seq_index - rec.first_seq <= w.size
        return d.timestamp - rec.first_ts <= w.size

    def _expired(self, pid: int, rec: MatchRecord, now_seq, now_ts) -> bool:
        w = self.windows[pid]
        if w.kind is WindowKind.COUNT:
            return now_seq - rec.first_seq > w.size
        return now_ts - rec.first_ts > w.size

    def expire(self, now_seq: int, now_ts: float) -> int:
        """Remove records outside every owning pattern's window; clears
        per-pattern bits on records with mixed ownership."""
        evicted = 0
        for state in self.plan.states:
            buf = state.buffer
            keep = []
            for rec in buf:
                if not rec.alive:
                    continue
                bits = rec.pattern_bits
                for i in range(self.n):
                    b = self.bit[i]
                    if bits & b and self._expired(i, rec, now_seq, now_ts):
                        bits &= ~b
                rec.pattern_bits = bits
                if bits == 0:
                    rec.alive = False
                    evicted += 1
                    self.counters.pms_expired += 1
                else:
                    keep.append(rec)
            buf[:] = keep
        self._trim_history(now_seq)
        return evicted

    def _trim_history(self, now_seq: int):
        if not self._trim_ok or now_seq < self._hist_trim_at:
            return
        self._hist_trim_at = now_seq + 512
        lo = now_seq - max(self._max_count_window, 1) - 1
        for seqs, elems in self.history.values():
            cut = bisect_left(seqs, lo)
            if cut:
                del seqs[:cut]
                del elems[:cut]

    # ---------------------------------------------------------------- step

    def _gap_clear(self, neg_checks, slots, lo: int, hi: int) -> bool:
        """True if no negated-type element in (lo, hi) blocks the transition."""
        for nc in neg_checks:
            hist = self.history.get(nc.neg_type)
            if hist is None:
                continue
            seqs, elems = hist
            a = bisect_right(seqs, lo)
            b = bisect_left(seqs, hi)
            if not nc.blockers:
                if a < b:
                    return False
                continue
            for k in range(a, b):
                ne = elems[k]
                if all(blk(slots, ne) for blk in nc.blockers):
                    return False
        return True

    def step(self, d: DataElement) -> StepResult:
        """Evaluate one element against all buffers; windows must already be
        expired for d (call expire first)."""
        plan = self.plan
        hist = self.history.get(d.type_tag)
        if hist is None:
            hist = self.history[d.type_tag] = ([], [])
        hist[0].append(d.seq_index)
        hist[1].append(d)

        work = {}
        new_records = []
        accept = []
        taken_bits = []   # (record, bits) cleared after the edge sweep

        for edge in plan.edges_by_trigger.get(d.type_tag, ()):
            guards = edge.guards
            from_id = edge.from_id
            action = edge.action
            if from_id == plan.start_id:
                slots = ((d,),) if action == "kleene-enter" else (d,)
                passed = 0
                for pid, g in guards.items():
                    if all(c(slots) for c in g.checks):
                        passed |= self.bit[pid]
                work[from_id] = work.get(from_id, 0) + 1
                if passed:
                    rec = MatchRecord(passed, slots, edge.to_id,
                                      d.seq_index, d.timestamp,
                                      d.seq_index, d.timestamp)
                    new_records.append(rec)
                    work[edge.to_id] = work.get(edge.to_id, 0) + 1
                continue

            state = plan.states[from_id]
            buf = state.buffer
            touched = 0
            for rec in buf:
                if not rec.alive:
                    continue
                bits = rec.pattern_bits
                touched += 1
                slots = None
                passed = 0
                for pid, g in guards.items():
                    b = self.bit[pid]
                    if not bits & b:
                        continue
                    if not self._window_ok(pid, rec, d):
                        continue
                    if (self.selection[pid] is
                            SelectionPolicy.STRICT_CONTIGUITY
                            and d.seq_index != rec.last_seq + 1):
                        continue
                    if slots is None:
                        if action == "single":
                            slots = rec.slots + (d,)
                        elif action == "kleene-enter":
                            slots = rec.slots + ((d,),)
                        else:  # kleene-extend
                            slots = rec.slots[:-1] + (rec.slots[-1] + (d,),)
                    ok = True
                    for c in g.checks:
                        if not c(slots):
                            ok = False
                            break
                    if ok and g.neg_checks:
                        ok = self._gap_clear(g.neg_checks, slots,
                                             rec.last_seq, d.seq_index)
                    if ok:
                        passed |= b
                if passed:
                    child = MatchRecord(passed, slots, edge.to_id,
                                        rec.first_seq, rec.first_ts,
                                        d.seq_index, d.timestamp,
                                        parent=rec)
                    new_records.append(child)
                    work[edge.to_id] = work.get(edge.to_id, 0) + 1
                    # skip-till-next: the parent's bit moves to the child,
                    # but only once every edge has seen this element so a
                    # Kleene record can fork into extend and close
                    taken = 0
                    for pid in guards:
                        b = self.bit[pid]
                        if passed & b and (self.selection[pid] is
                                           SelectionPolicy.SKIP_TILL_NEXT):
                            taken |= b
                    if taken:
                        taken_bits.append((rec, taken))
            if touched:
                work[from_id] = work.get(from_id, 0) + touched

        for rec, taken in taken_bits:
            rec.pattern_bits &= ~taken
            if rec.pattern_bits == 0 and rec.alive:
                rec.alive = False
                self.counters.pms_policy_dropped += 1

        complete = []
        rejected = 0
        for rec in new_records:
            self.counters.pms_created += 1
            state = plan.states[rec.state_id]
            state.buffer.append(rec)
            if state.accepting_for:
                for pid in state.accepting_for:
                    if rec.pattern_bits & self.bit[pid]:
                        accept.append((pid, rec))

        # deterministic emission order, then per-pattern consumption
        accept.sort(key=lambda pr: (pr[1].seq_tuple(), pr[0]))
        for pid, rec in accept:
            pattern = plan.patterns[pid]
            names = plan.accept_bindings[(pid, rec.state_id)]
            env = dict(zip(names, rec.slots))
            if not eval_predicate(pattern.predicate, env, self.diag):
                continue
            seqs = rec.seq_tuple()
            if self.consumption[pid] is ConsumptionPolicy.CONSUME:
                used = self.consumed[pid]
                if any(s in used for s in seqs):
                    rejected += 1
                    continue
                used.update(seqs)
            rec.emit_index = self.emit_counter
            self.emit_counter += 1
            self.counters.cms_emitted += 1
            complete.append((pid, rec))

        return StepResult(new_records, complete, work, rejected)

    def live_pm_count(self) -> int:
        return sum(1 for _ in self.plan.live_records())


def golden_run(stream, plan: ExecutionPlan,
               selection: SelectionPolicy = SelectionPolicy.SKIP_TILL_ANY,
               consumption: ConsumptionPolicy = ConsumptionPolicy.REUSE):
    """Exhaustive evaluation (no state reduction); complete matches per
    pattern in emission order."""
    eng = Engine(plan, selection, consumption)
    out = {p.id: [] for p in plan.patterns}
    for d in stream:
        eng.expire(d.seq_index, d.timestamp)
        res = eng.step(d)
        for pid, rec in res.complete:
            out[pid].append(rec)
    return out
