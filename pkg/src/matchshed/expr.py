"""Predicate expression trees and their evaluation.

Expressions are conjunctions of comparisons over binding attributes, with
arithmetic, a SUM aggregate over Kleene bindings, sqrt/trig functions, and
a SAME shorthand (one attribute equal across all bindings).

Evaluation is *partial*: a conjunct that references a binding missing from
the environment is deferred, i.e. treated as satisfiable.  Division by zero
and trig domain errors make the conjunct false and bump a diagnostic
counter.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional


class Expr:
    pass


@dataclass(frozen=True)
class Num(Expr):
    value: float


@dataclass(frozen=True)
class AttrRef(Expr):
    binding: str
    attr: str


@dataclass(frozen=True)
class SumAgg(Expr):
    """SUM(b[].attr) over a Kleene binding's element list."""
    binding: str
    attr: str


@dataclass(frozen=True)
class Bin(Expr):
    op: str  # + - * / ^
    left: Expr
    right: Expr


@dataclass(frozen=True)
class Func(Expr):
    name: str  # sin cos arcsin arccos sqrt
    arg: Expr


@dataclass(frozen=True)
class Cmp(Expr):
    op: str  # < <= > >= =
    left: Expr
    right: Expr


@dataclass(frozen=True)
class Same(Expr):
    """SAME [attr]: the attribute is equal across all bound elements."""
    attr: str


@dataclass(frozen=True)
class And(Expr):
    items: tuple


@dataclass
class EvalDiagnostics:
    div_by_zero: int = 0
    domain_error: int = 0


class _Unbound(Exception):
    """A referenced binding is not in the environment."""


class _MathFault(Exception):
    def __init__(self, kind):
        self.kind = kind


_FUNCS = {
    "sin": math.sin,
    "cos": math.cos,
    "sqrt": math.sqrt,
    "arcsin": math.asin,
    "arccos": math.acos,
}


def _num(e: Expr, env: dict) -> float:
    if type(e) is Num:
        return e.value
    if type(e) is AttrRef:
        try:
            v = env[e.binding]
        except KeyError:
            raise _Unbound() from None
        if isinstance(v, (tuple, list)):
            raise _Unbound()  # Kleene binding still open; only SUM may read it
        return v.attrs[e.attr]
    if type(e) is SumAgg:
        try:
            v = env[e.binding]
        except KeyError:
            raise _Unbound() from None
        if not isinstance(v, (tuple, list)):
            v = (v,)
        return sum(el.attrs[e.attr] for el in v)
    if type(e) is Bin:
        a = _num(e.left, env)
        b = _num(e.right, env)
        if e.op == "+":
            return a + b
        if e.op == "-":
            return a - b
        if e.op == "*":
            return a * b
        if e.op == "/":
            if b == 0:
                raise _MathFault("div_by_zero")
            return a / b
        if e.op == "^":
            return a ** b
        raise ValueError(f"unknown operator {e.op!r}")
    if type(e) is Func:
        x = _num(e.arg, env)
        if e.name in ("arcsin", "arccos") and abs(x) > 1:
            raise _MathFault("domain_error")
        if e.name == "sqrt" and x < 0:
            raise _MathFault("domain_error")
        return _FUNCS[e.name](x)
    raise TypeError(f"not a numeric expression: {e!r}")


def _conjunct(e: Expr, env: dict, diag: Optional[EvalDiagnostics]) -> bool:
    try:
        if type(e) is Cmp:
            a = _num(e.left, env)
            b = _num(e.right, env)
            if e.op == "<":
                return a < b
            if e.op == "<=":
                return a <= b
            if e.op == ">":
                return a > b
            if e.op == ">=":
                return a >= b
            if e.op == "=":
                return a == b
            raise ValueError(f"unknown comparison {e.op!r}")
        if type(e) is Same:
            vals = set()
            for v in env.values():
                for el in (v if isinstance(v, (tuple, list)) else (v,)):
                    vals.add(el.attrs[e.attr])
            return len(vals) <= 1
        raise TypeError(f"not a boolean conjunct: {e!r}")
    except _Unbound:
        return True  # deferred: may still hold once the binding arrives
    except _MathFault as f:
        if diag is not None:
            setattr(diag, f.kind, getattr(diag, f.kind) + 1)
        return False


def conjuncts(expr: Optional[Expr]) -> tuple:
    """Flatten an AND tree into its conjunct list."""
    if expr is None:
        return ()
    if type(expr) is And:
        out = []
        for it in expr.items:
            out.extend(conjuncts(it))
        return tuple(out)
    return (expr,)


def eval_predicate(expr: Optional[Expr], env: dict,
                   diag: Optional[EvalDiagnostics] = None) -> bool:
    """Evaluate a predicate against env (binding -> element or element list).

    Conjuncts referencing bindings absent from env are deferred (true).
    """
    return all(_conjunct(c, env, diag) for c in conjuncts(expr))


def referenced_bindings(e: Optional[Expr]) -> frozenset:
    """Bindings a (sub)expression reads; Same reads none by name."""
    if e is None:
        return frozenset()
    if type(e) in (Num, Same):
        return frozenset()
    if type(e) in (AttrRef, SumAgg):
        return frozenset((e.binding,))
    if type(e) is Bin:
        return referenced_bindings(e.left) | referenced_bindings(e.right)
    if type(e) is Func:
        return referenced_bindings(e.arg)
    if type(e) is Cmp:
        return referenced_bindings(e.left) | referenced_bindings(e.right)
    if type(e) is And:
        out = frozenset()
        for it in e.items:
            out |= referenced_bindings(it)
        return out
    raise TypeError(f"unexpected node {e!r}")
