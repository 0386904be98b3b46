"""Execution plans: per-pattern state chains merged into a shared DAG.

States are keyed by their step-prefix signature (event types + step kinds,
predicates excluded), so patterns share states for common prefixes.  Negated
steps appear in the signature but create no state: they compile to
absence guards on the edge that skips over them.

Guards are compiled to closures over the record's positional slot tuple,
so the hot loop avoids building binding environments.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Optional

from . import expr as ex
from .model import (ConsumptionPolicy, MatchRecord, Pattern, SelectionPolicy,
                    StepKind, WindowKind)


class PlanError(ValueError):
    pass


@dataclass
class NegCheck:
    """Absence guard for one negated step, evaluated over the gap."""
    neg_type: str
    # (slots, neg_elem) -> bool; all true means neg_elem blocks the transition
    blockers: tuple


@dataclass
class EdgeGuard:
    """Per-pattern guard on a transition: prunable conjunct closures plus
    absence checks for skipped negated steps."""
    pattern_id: int
    checks: tuple      # (slots,) -> bool
    neg_checks: tuple  # NegCheck


class PlanState:
    __slots__ = ("state_id", "signature", "buffer", "accepting_for", "psd",
                 "is_kleene", "depth")

    def __init__(self, state_id: int, signature: tuple):
        self.state_id = state_id
        self.signature = signature
        self.buffer = []
        self.accepting_for = set()
        self.psd = 0
        # number of bound positional slots for records in this state
        self.depth = sum(1 for (_, k) in signature if k is not StepKind.NEGATED)
        self.is_kleene = bool(signature) and signature[-1][1] is StepKind.KLEENE_PLUS

    def sub_pattern(self) -> tuple:
        return self.signature

    def __repr__(self):
        sig = "".join(t for t, _ in self.signature) or "start"
        return f"PlanState({self.state_id}, {sig})"


class PlanEdge:
    __slots__ = ("from_id", "to_id", "trigger_type", "action", "guards")

    # action: "single" | "kleene-enter" | "kleene-extend"
    def __init__(self, from_id: int, to_id: int, trigger_type: str,
                 action: str):
        self.from_id = from_id
        self.to_id = to_id
        self.trigger_type = trigger_type
        self.action = action
        self.guards = {}  # pattern_id -> EdgeGuard

    @property
    def step_kind(self) -> str:
        if self.action == "kleene-extend":
            return "kleene-extend"
        if any(g.neg_checks for g in self.guards.values()):
            return "negation-guard"
        return self.action

    def __repr__(self):
        return (f"PlanEdge({self.from_id}->{self.to_id} on "
                f"{self.trigger_type!r} {self.action})")


class ExecutionPlan:
    def __init__(self, states, edges, patterns, mode: str = "view"):
        self.states = states            # list[PlanState], index == state_id
        self.edges = edges              # list[PlanEdge]
        self.patterns = patterns        # list[Pattern]
        self.mode = mode                # instance | view | separate
        self.start_id = 0
        self.edges_by_trigger = {}
        for e in edges:
            self.edges_by_trigger.setdefault(e.trigger_type, []).append(e)
        # kleene extension takes priority over closing under skip-till-next
        for lst in self.edges_by_trigger.values():
            lst.sort(key=lambda e: 0 if e.action == "kleene-extend" else 1)
        # pattern id -> ordered state ids along its chain (start excluded)
        self.pattern_paths = {}
        # (pattern_id, accepting state) -> binding names by position
        self.accept_bindings = {}

    @property
    def n(self) -> int:
        return len(self.patterns)

    def live_records(self):
        for s in self.states:
            for r in s.buffer:
                if r.alive:
                    yield r

    def dump(self) -> str:
        """Structured text dump of states, edges and PSD bits."""
        n = max(1, self.n)
        lines = [f"plan mode={self.mode} patterns={self.n}"]
        for s in self.states:
            sig = " ".join(f"{t}{'+' if k is StepKind.KLEENE_PLUS else '!' if k is StepKind.NEGATED else ''}"
                           for t, k in s.signature) or "(start)"
            acc = ",".join(str(i) for i in sorted(s.accepting_for)) or "-"
            lines.append(f"state {s.state_id} [{format(s.psd, f'0{n}b')}] "
                         f"sig={sig} accepting={acc}")
        for e in self.edges:
            pids = ",".join(str(i) for i in sorted(e.guards))
            lines.append(f"edge {e.from_id}->{e.to_id} on={e.trigger_type} "
                         f"kind={e.step_kind} patterns={pids}")
        return "\n".join(lines) + "\n"


# ------------------------------------------------------------ guard compiler

def _compile_numeric(e, pos_of: dict, kleene_pos: set, neg_binding=None):
    """Compile a numeric expression to (slots, neg_elem) -> float.

    Raises ex._MathFault at call time on div-by-zero / domain errors.
    """
    t = type(e)
    if t is ex.Num:
        v = e.value
        return lambda s, ne: v
    if t is ex.AttrRef:
        a = e.attr
        if e.binding == neg_binding:
            return lambda s, ne: ne.attrs[a]
        p = pos_of[e.binding]
        return lambda s, ne: s[p].attrs[a]
    if t is ex.SumAgg:
        a = e.attr
        p = pos_of[e.binding]
        return lambda s, ne: sum(el.attrs[a] for el in s[p])
    if t is ex.Bin:
        f = _compile_numeric(e.left, pos_of, kleene_pos, neg_binding)
        g = _compile_numeric(e.right, pos_of, kleene_pos, neg_binding)
        op = e.op
        if op == "+":
            return lambda s, ne: f(s, ne) + g(s, ne)
        if op == "-":
            return lambda s, ne: f(s, ne) - g(s, ne)
        if op == "*":
            return lambda s, ne: f(s, ne) * g(s, ne)
        if op == "/":
            def div(s, ne):
                d = g(s, ne)
                if d == 0:
                    raise ex._MathFault("div_by_zero")
                return f(s, ne) / d
            return div
        if op == "^":
            return lambda s, ne: f(s, ne) ** g(s, ne)
    if t is ex.Func:
        f = _compile_numeric(e.arg, pos_of, kleene_pos, neg_binding)
        name = e.name
        fn = ex._FUNCS[name]
        if name in ("arcsin", "arccos"):
            def trig(s, ne):
                x = f(s, ne)
                if abs(x) > 1:
                    raise ex._MathFault("domain_error")
                return fn(x)
            return trig
        if name == "sqrt":
            def root(s, ne):
                x = f(s, ne)
                if x < 0:
                    raise ex._MathFault("domain_error")
                return fn(x)
            return root
        return lambda s, ne: fn(f(s, ne))
    raise PlanError(f"cannot compile {e!r}")


def _compile_cmp(e: ex.Cmp, pos_of, kleene_pos, neg_binding=None,
                 default_on_fault=False):
    f = _compile_numeric(e.left, pos_of, kleene_pos, neg_binding)
    g = _compile_numeric(e.right, pos_of, kleene_pos, neg_binding)
    import operator
    op = {"<": operator.lt, "<=": operator.le, ">": operator.gt,
          ">=": operator.ge, "=": operator.eq}[e.op]

    def check(s, ne=None):
        try:
            return op(f(s, ne), g(s, ne))
        except ex._MathFault:
            return default_on_fault

    return check


def _compile_same(attr: str, neg_binding=False):
    """Equality of one attribute across all bound elements (and the gap
    candidate, when used as a blocker)."""
    if neg_binding:
        def blocker(slots, ne):
            first = slots[0]
            anchor = (first[0] if isinstance(first, tuple) else first).attrs[attr]
            return ne.attrs[attr] == anchor
        return blocker

    def check(slots, ne=None):
        first = slots[0]
        anchor = (first[0] if isinstance(first, tuple) else first).attrs[attr]
        for v in slots:
            if isinstance(v, tuple):
                for el in v:
                    if el.attrs[attr] != anchor:
                        return False
            elif v.attrs[attr] != anchor:
                return False
        return True

    return check


# --------------------------------------------------------------- compilation

def compile_pattern(pattern: Pattern) -> ExecutionPlan:
    """Compile one pattern into a linear state chain."""
    return merge([_chain(pattern, 1)], mode="view")


@dataclass
class _Chain:
    """Intermediate per-pattern chain before merging."""
    pattern: Pattern
    signatures: list          # state signature per positional depth (incl start)
    transitions: list         # list of dicts describing edges


def _chain(pattern: Pattern, n: int) -> _Chain:
    steps = pattern.steps
    pos_steps = pattern.positional_steps
    m = len(pos_steps)

    # signature prefix at each positional depth (start == ())
    signatures = [()]
    pending = []
    pos_index = {}
    for s in steps:
        if s.kind is StepKind.NEGATED:
            pending.append(s)
        else:
            pos_index[s.binding_name] = len(signatures) - 1
            signatures.append(signatures[-1]
                              + tuple((p.event_type, p.kind) for p in pending)
                              + ((s.event_type, s.kind),))
            pending.clear()

    pos_of = {s.binding_name: i for i, s in enumerate(pos_steps)}
    kleene_pos = {i for i, s in enumerate(pos_steps)
                  if s.kind is StepKind.KLEENE_PLUS}

    # negated steps preceding each positional step
    negs_before = [[] for _ in range(m)]
    pend = []
    pi = 0
    for s in steps:
        if s.kind is StepKind.NEGATED:
            pend.append(s)
        else:
            negs_before[pi] = list(pend)
            pend.clear()
            pi += 1

    conjs = ex.conjuncts(pattern.predicate)
    neg_names = {s.binding_name for s in steps if s.kind is StepKind.NEGATED}

    # schedule each conjunct on the earliest transition where it is decidable
    sched = [[] for _ in range(m)]          # regular checks per transition
    neg_sched = [{} for _ in range(m)]      # neg binding -> blocker conjuncts
    same_attrs = []
    for c in conjs:
        if type(c) is ex.Same:
            same_attrs.append(c.attr)
            continue
        refs = ex.referenced_bindings(c)
        neg_refs = refs & neg_names
        if len(neg_refs) > 1:
            raise PlanError("a conjunct may reference at most one negated "
                            "binding")
        if neg_refs:
            (nb,) = neg_refs
            # the transition that skips over nb
            j = next(i for i in range(m)
                     if any(s.binding_name == nb for s in negs_before[i]))
            decidable = all(pos_of[r] <= j for r in refs - {nb})
            undec_kleene = any(pos_of[r] in kleene_pos and pos_of[r] >= j
                               for r in refs - {nb})
            neg_sched[j].setdefault(nb, []).append(
                (c, decidable and not undec_kleene))
            continue
        # earliest transition index where every ref is bound & closed
        when = 0
        emission_only = False
        for r in refs:
            p = pos_of[r]
            if p in kleene_pos and _refs_sum(c, r):
                if p + 1 >= m:
                    emission_only = True
                else:
                    when = max(when, p + 1)
            else:
                when = max(when, p)
        if not emission_only:
            sched[when].append(c)

    transitions = []
    for j in range(m):
        step = pos_steps[j]
        checks = [_compile_cmp(c, pos_of, kleene_pos) for c in sched[j]]
        for a in same_attrs:
            checks.append(_compile_same(a))
        neg_checks = []
        for s in negs_before[j]:
            nb = s.binding_name
            blockers = []
            for c, decidable in neg_sched[j].get(nb, []):
                if decidable:
                    blockers.append(_compile_cmp(c, pos_of, kleene_pos,
                                                 neg_binding=nb,
                                                 default_on_fault=False))
                # undecidable conjuncts block conservatively: no closure
            for a in same_attrs:
                blockers.append(_compile_same(a, neg_binding=True))
            neg_checks.append(NegCheck(s.event_type, tuple(blockers)))
        action = ("kleene-enter" if step.kind is StepKind.KLEENE_PLUS
                  else "single")
        transitions.append({
            "from_sig": signatures[j],
            "to_sig": signatures[j + 1],
            "trigger": step.event_type,
            "action": action,
            "checks": tuple(checks),
            "neg_checks": tuple(neg_checks),
        })
        if step.kind is StepKind.KLEENE_PLUS:
            # self-extension loop; SAME is the only prunable check here
            loop_checks = tuple(_compile_same(a) for a in same_attrs)
            transitions.append({
                "from_sig": signatures[j + 1],
                "to_sig": signatures[j + 1],
                "trigger": step.event_type,
                "action": "kleene-extend",
                "checks": loop_checks,
                "neg_checks": (),
            })

    return _Chain(pattern=pattern, signatures=signatures,
                  transitions=transitions)


def _refs_sum(c, binding) -> bool:
    found = False

    def walk(e):
        nonlocal found
        t = type(e)
        if t is ex.SumAgg and e.binding == binding:
            found = True
        elif t in (ex.Bin, ex.Cmp):
            walk(e.left)
            walk(e.right)
        elif t is ex.Func:
            walk(e.arg)

    walk(c)
    return found


def merge(chains_or_patterns, mode: str = "view"):
    """Merge per-pattern chains into one shared plan.

    ``instance``/``view`` unify states with equal step-prefix signatures;
    ``separate`` keeps every chain disjoint.
    """
    if chains_or_patterns and isinstance(chains_or_patterns[0], Pattern):
        patterns = list(chains_or_patterns)
        chains = [_chain(p, len(patterns)) for p in patterns]
    elif chains_or_patterns and isinstance(chains_or_patterns[0], _Chain):
        chains = list(chains_or_patterns)
        patterns = [c.pattern for c in chains]
    else:
        raise PlanError("nothing to merge")
    if [p.id for p in patterns] != list(range(len(patterns))):
        raise PlanError("pattern ids must be 0..n-1 in list order")

    shared = mode in ("instance", "view")
    if mode not in ("instance", "view", "separate"):
        raise PlanError(f"unknown materialization mode {mode!r}")

    # deterministic state discovery: BFS over chain signatures, patterns in
    # listed order, so numbering is stable
    def key(pid, sig):
        return sig if shared else (pid, sig)

    state_of = {}
    states = []

    start = PlanState(0, ())
    states.append(start)
    for c in chains:
        state_of[key(c.pattern.id, ())] = start

    # breadth-first by depth across all chains
    max_depth = max(len(c.signatures) - 1 for c in chains)
    for depth in range(1, max_depth + 1):
        for c in chains:
            if depth < len(c.signatures):
                sig = c.signatures[depth]
                k = key(c.pattern.id, sig)
                if k not in state_of:
                    st = PlanState(len(states), sig)
                    states.append(st)
                    state_of[k] = st

    edges = {}
    edge_list = []
    for c in chains:
        pid = c.pattern.id
        for t in c.transitions:
            frm = state_of[key(pid, t["from_sig"])]
            to = state_of[key(pid, t["to_sig"])]
            ek = (frm.state_id, to.state_id, t["trigger"], t["action"])
            if ek not in edges:
                e = PlanEdge(frm.state_id, to.state_id, t["trigger"],
                             t["action"])
                edges[ek] = e
                edge_list.append(e)
            edges[ek].guards[pid] = EdgeGuard(pid, t["checks"],
                                              t["neg_checks"])

    plan = ExecutionPlan(states, edge_list, patterns, mode)
    for c in chains:
        pid = c.pattern.id
        path = [state_of[key(pid, sig)].state_id for sig in c.signatures[1:]]
        plan.pattern_paths[pid] = path
        acc_state = state_of[key(pid, c.signatures[-1])]
        acc_state.accepting_for.add(pid)
        plan.accept_bindings[(pid, acc_state.state_id)] = tuple(
            s.binding_name for s in c.pattern.positional_steps)

    _check_invariants(plan, shared)
    return plan


def _check_invariants(plan: ExecutionPlan, shared: bool):
    if shared:
        sigs = [s.signature for s in plan.states]
        if len(sigs) != len(set(sigs)):
            raise PlanError("duplicate sub-pattern signatures in shared plan")
    for e in plan.edges:
        if e.from_id == e.to_id and e.action != "kleene-extend":
            raise PlanError("non-kleene self loop")
        if e.from_id != e.to_id:
            # chain construction guarantees acyclicity; guard against bugs
            if plan.states[e.to_id].depth <= plan.states[e.from_id].depth:
                raise PlanError("backward edge in plan")
