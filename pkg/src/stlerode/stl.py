"""STL formulas over discrete-time trajectories.

Concrete syntax (whitespace insignificant)::

    phi := TRUE | ident | !phi | phi & phi | phi | phi
         | G[a,b] phi | F[a,b] phi | phi U[a,b] phi | (phi)

Precedence from loosest to tightest: ``|``, ``&``, ``U``, unary operators.
All binary operators associate to the left. Interval bounds are integer
time steps.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Callable, Iterator, Mapping, Union

import numpy as np


@dataclass(frozen=True)
class TrueF:
    pass


@dataclass(frozen=True)
class Pred:
    name: str
    negated: bool = False


@dataclass(frozen=True)
class Not:
    child: "Formula"


@dataclass(frozen=True)
class And:
    left: "Formula"
    right: "Formula"


@dataclass(frozen=True)
class Or:
    left: "Formula"
    right: "Formula"


@dataclass(frozen=True)
class Until:
    left: "Formula"
    right: "Formula"
    lo: int
    hi: int

    def __post_init__(self):
        _check_interval(self.lo, self.hi)


@dataclass(frozen=True)
class Eventually:
    child: "Formula"
    lo: int
    hi: int

    def __post_init__(self):
        _check_interval(self.lo, self.hi)


@dataclass(frozen=True)
class Globally:
    child: "Formula"
    lo: int
    hi: int

    def __post_init__(self):
        _check_interval(self.lo, self.hi)


Formula = Union[TrueF, Pred, Not, And, Or, Until, Eventually, Globally]


class FormulaSyntaxError(ValueError):
    def __init__(self, message: str, position: int):
        super().__init__(f"{message} at position {position}")
        self.position = position


class IntervalError(ValueError):
    def __init__(self, lo: int, hi: int, position: int | None = None):
        where = "" if position is None else f" at position {position}"
        super().__init__(f"interval [{lo},{hi}] has lower bound above upper bound{where}")
        self.position = position


class HorizonError(ValueError):
    pass


class NegationError(ValueError):
    pass


def _check_interval(lo: int, hi: int) -> None:
    if lo < 0 or hi < 0:
        raise IntervalError(lo, hi)
    if lo > hi:
        raise IntervalError(lo, hi)


# ---------------------------------------------------------------------------
# Parsing and printing
# ---------------------------------------------------------------------------

_TOKEN = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<temporal>[GFU])(?=\s*\[)
  | (?P<true>TRUE)(?![A-Za-z0-9_])
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<int>\d+)
  | (?P<punct>[!&|()\[\],])
    """,
    re.VERBOSE,
)


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise FormulaSyntaxError(f"unexpected character {text[pos]!r}", pos)
        kind = m.lastgroup
        if kind != "ws":
            tokens.append((kind, m.group(), pos))
        pos = m.end()
    tokens.append(("eof", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self) -> tuple[str, str, int]:
        return self.tokens[self.i]

    def take(self) -> tuple[str, str, int]:
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value: str) -> tuple[str, str, int]:
        tok = self.take()
        if tok[1] != value or tok[0] == "eof":
            got = "end of input" if tok[0] == "eof" else repr(tok[1])
            raise FormulaSyntaxError(f"expected {value!r}, got {got}", tok[2])
        return tok

    def parse(self) -> Formula:
        f = self.disjunction()
        tok = self.peek()
        if tok[0] != "eof":
            raise FormulaSyntaxError(f"unexpected token {tok[1]!r}", tok[2])
        return f

    def disjunction(self) -> Formula:
        f = self.conjunction()
        while self.peek()[1] == "|":
            self.take()
            f = Or(f, self.conjunction())
        return f

    def conjunction(self) -> Formula:
        f = self.until()
        while self.peek()[1] == "&":
            self.take()
            f = And(f, self.until())
        return f

    def until(self) -> Formula:
        f = self.unary()
        while self.peek()[0] == "temporal" and self.peek()[1] == "U":
            self.take()
            lo, hi = self.interval()
            f = Until(f, self.unary(), lo, hi)
        return f

    def interval(self) -> tuple[int, int]:
        start = self.expect("[")[2]
        lo = self.integer()
        self.expect(",")
        hi = self.integer()
        self.expect("]")
        if lo > hi:
            raise IntervalError(lo, hi, start)
        return lo, hi

    def integer(self) -> int:
        tok = self.take()
        if tok[0] != "int":
            raise FormulaSyntaxError("expected integer bound", tok[2])
        return int(tok[1])

    def unary(self) -> Formula:
        kind, value, pos = self.peek()
        if value == "!" and kind == "punct":
            self.take()
            return Not(self.unary())
        if kind == "temporal" and value in "GF":
            self.take()
            lo, hi = self.interval()
            child = self.unary()
            return Globally(child, lo, hi) if value == "G" else Eventually(child, lo, hi)
        if kind == "true":
            self.take()
            return TrueF()
        if kind == "ident":
            self.take()
            return Pred(value)
        if value == "(" and kind == "punct":
            self.take()
            f = self.disjunction()
            self.expect(")")
            return f
        got = "end of input" if kind == "eof" else repr(value)
        raise FormulaSyntaxError(f"expected a formula, got {got}", pos)


def parse_formula(text: str) -> Formula:
    """Parse formula text into an AST, raising FormulaSyntaxError/IntervalError."""
    return _Parser(text).parse()


_PREC = {Or: 1, And: 2, Until: 3}


def _prec(f: Formula) -> int:
    return _PREC.get(type(f), 4)


def print_formula(f: Formula) -> str:
    """Inverse of :func:`parse_formula` with minimal parentheses."""

    def wrap(g: Formula, min_prec: int) -> str:
        s = print_formula(g)
        return f"({s})" if _prec(g) < min_prec else s

    if isinstance(f, TrueF):
        return "TRUE"
    if isinstance(f, Pred):
        return f"!{f.name}" if f.negated else f.name
    if isinstance(f, Not):
        return "!" + wrap(f.child, 4)
    if isinstance(f, (Eventually, Globally)):
        op = "F" if isinstance(f, Eventually) else "G"
        return f"{op}[{f.lo},{f.hi}] " + wrap(f.child, 4)
    if isinstance(f, Until):
        return f"{wrap(f.left, 3)} U[{f.lo},{f.hi}] {wrap(f.right, 4)}"
    p = _prec(f)
    op = "&" if isinstance(f, And) else "|"
    return f"{wrap(f.left, p)} {op} {wrap(f.right, p + 1)}"


# ---------------------------------------------------------------------------
# Structural operations
# ---------------------------------------------------------------------------

def horizon(f: Formula) -> int:
    if isinstance(f, (TrueF, Pred)):
        return 0
    if isinstance(f, Not):
        return horizon(f.child)
    if isinstance(f, (And, Or)):
        return max(horizon(f.left), horizon(f.right))
    if isinstance(f, Until):
        return f.hi + max(horizon(f.left), horizon(f.right))
    return f.hi + horizon(f.child)


def to_nnf(f: Formula, negate: bool = False) -> Formula:
    """Push negations down to predicates.

    Negated predicates are returned as ``Pred(name, negated=True)``. Negation of
    an Until (or of TRUE) has no negation-free form in this grammar and raises
    NegationError.
    """
    if isinstance(f, TrueF):
        if negate:
            raise NegationError("negation of TRUE has no negation-free form")
        return f
    if isinstance(f, Pred):
        return Pred(f.name, f.negated != negate)
    if isinstance(f, Not):
        return to_nnf(f.child, not negate)
    if isinstance(f, And):
        cls = Or if negate else And
        return cls(to_nnf(f.left, negate), to_nnf(f.right, negate))
    if isinstance(f, Or):
        cls = And if negate else Or
        return cls(to_nnf(f.left, negate), to_nnf(f.right, negate))
    if isinstance(f, Until):
        if negate:
            raise NegationError(
                "negated Until cannot be normalized without a Release operator: "
                + print_formula(f)
            )
        return Until(to_nnf(f.left), to_nnf(f.right), f.lo, f.hi)
    if isinstance(f, Eventually):
        cls = Globally if negate else Eventually
        return cls(to_nnf(f.child, negate), f.lo, f.hi)
    cls = Eventually if negate else Globally
    return cls(to_nnf(f.child, negate), f.lo, f.hi)


def is_negation_free(f: Formula) -> bool:
    return not any(isinstance(g, Not) for g in subformulas(f))


def subformulas(f: Formula) -> Iterator[Formula]:
    yield f
    for attr in ("child", "left", "right"):
        g = getattr(f, attr, None)
        if g is not None:
            yield from subformulas(g)


def predicates(f: Formula) -> list[Pred]:
    """Distinct predicate occurrences (name, negated) in first-seen order."""
    seen = {}
    for g in subformulas(f):
        if isinstance(g, Pred):
            seen.setdefault(g, None)
    return list(seen)


def map_predicates(f: Formula, fn: Callable[[Pred], Formula]) -> Formula:
    """Rebuild ``f`` with every predicate replaced by ``fn(pred)``."""
    if isinstance(f, Pred):
        return fn(f)
    if isinstance(f, TrueF):
        return f
    if isinstance(f, Not):
        return Not(map_predicates(f.child, fn))
    if isinstance(f, (And, Or)):
        return type(f)(map_predicates(f.left, fn), map_predicates(f.right, fn))
    if isinstance(f, Until):
        return Until(map_predicates(f.left, fn), map_predicates(f.right, fn), f.lo, f.hi)
    return type(f)(map_predicates(f.child, fn), f.lo, f.hi)


def shape(f: Formula) -> str:
    """Operator skeleton with predicate identities erased."""
    return print_formula(map_predicates(f, lambda p: Pred("p")))


# ---------------------------------------------------------------------------
# Signal evaluation
#
# Every subformula is evaluated to a signal over the full time axis (last
# axis). Entries at t > T - horizon(sub) are not meaningful and are never read
# by a parent evaluated at t <= T - horizon(parent).
# ---------------------------------------------------------------------------

def _shift(sig: np.ndarray, k: int, fill) -> np.ndarray:
    if k == 0:
        return sig
    out = np.full_like(sig, fill)
    out[..., :-k] = sig[..., k:]
    return out


def boolean_signal(f: Formula, atom: Callable[[Pred], np.ndarray]) -> np.ndarray:
    """Boolean satisfaction signal of ``f`` given per-predicate signals.

    ``atom(None)`` must return an array of the signal's shape; it is only
    used as a template for TRUE.
    """
    if isinstance(f, Pred):
        return np.asarray(atom(f), dtype=bool)
    if isinstance(f, TrueF):
        return np.ones_like(np.asarray(atom(None)), dtype=bool)
    if isinstance(f, Not):
        return ~boolean_signal(f.child, atom)
    if isinstance(f, And):
        return boolean_signal(f.left, atom) & boolean_signal(f.right, atom)
    if isinstance(f, Or):
        return boolean_signal(f.left, atom) | boolean_signal(f.right, atom)
    if isinstance(f, Eventually):
        s = boolean_signal(f.child, atom)
        out = np.zeros_like(s)
        for k in range(f.lo, f.hi + 1):
            out |= _shift(s, k, False)
        return out
    if isinstance(f, Globally):
        s = boolean_signal(f.child, atom)
        out = np.ones_like(s)
        for k in range(f.lo, f.hi + 1):
            out &= _shift(s, k, True)
        return out
    s1 = boolean_signal(f.left, atom)
    s2 = boolean_signal(f.right, atom)
    out = np.zeros_like(s1)
    run = np.ones_like(s1)
    for k in range(0, f.hi + 1):
        run &= _shift(s1, k, False)
        if k >= f.lo:
            out |= run & _shift(s2, k, False)
    return out


def quantitative_signal(f: Formula, score: Callable[[Pred], np.ndarray]) -> np.ndarray:
    """Robustness signal: min/max recursion over per-predicate scores."""
    if isinstance(f, Pred):
        return np.asarray(score(f), dtype=float)
    if isinstance(f, TrueF):
        return np.full_like(score(None), np.inf, dtype=float)
    if isinstance(f, Not):
        return -quantitative_signal(f.child, score)
    if isinstance(f, And):
        return np.minimum(quantitative_signal(f.left, score), quantitative_signal(f.right, score))
    if isinstance(f, Or):
        return np.maximum(quantitative_signal(f.left, score), quantitative_signal(f.right, score))
    if isinstance(f, Eventually):
        s = quantitative_signal(f.child, score)
        out = np.full_like(s, -np.inf)
        for k in range(f.lo, f.hi + 1):
            out = np.maximum(out, _shift(s, k, -np.inf))
        return out
    if isinstance(f, Globally):
        s = quantitative_signal(f.child, score)
        out = np.full_like(s, np.inf)
        for k in range(f.lo, f.hi + 1):
            out = np.minimum(out, _shift(s, k, np.inf))
        return out
    s1 = quantitative_signal(f.left, score)
    s2 = quantitative_signal(f.right, score)
    out = np.full_like(s1, -np.inf)
    run = np.full_like(s1, np.inf)
    for k in range(0, f.hi + 1):
        run = np.minimum(run, _shift(s1, k, -np.inf))
        if k >= f.lo:
            out = np.maximum(out, np.minimum(run, _shift(s2, k, -np.inf)))
    return out


# ---------------------------------------------------------------------------
# Trajectory-level API
# ---------------------------------------------------------------------------

PredicateTable = Mapping[str, "object"]


def check_table(f: Formula, table: PredicateTable) -> None:
    missing = sorted({p.name for p in predicates(f)} - set(table))
    if missing:
        raise KeyError(f"predicates without a region: {', '.join(missing)}")


def _region_for(table: PredicateTable, p: Pred):
    region = table[p.name]
    return region.complement() if p.negated else region


def _points(traj: np.ndarray, region) -> np.ndarray:
    return traj[..., list(region.coords)]


def _check_horizon(f: Formula, traj: np.ndarray, t: int) -> None:
    T = traj.shape[-2] - 1
    h = horizon(f)
    if t < 0 or t + h > T:
        raise HorizonError(f"evaluating at t={t} needs {t + h + 1} states, trajectory has {T + 1}")


def _as_traj(traj) -> np.ndarray:
    traj = np.asarray(traj, dtype=float)
    if traj.ndim < 2:
        raise ValueError("trajectory must have shape (T+1, n)")
    return traj


def satisfaction_signal(f: Formula, table: PredicateTable, traj) -> np.ndarray:
    """Boolean signal of ``f`` over ``traj`` of shape (..., T+1, n)."""
    traj = _as_traj(traj)
    check_table(f, table)

    def atom(p):
        if p is None:
            return np.ones(traj.shape[:-1], dtype=bool)
        region = _region_for(table, p)
        return region.contains(_points(traj, region))

    return boolean_signal(f, atom)


def robustness_signal(f: Formula, table: PredicateTable, traj) -> np.ndarray:
    traj = _as_traj(traj)
    check_table(f, table)

    def score(p):
        if p is None:
            return np.zeros(traj.shape[:-1])
        region = _region_for(table, p)
        return region.signed_distance(_points(traj, region))

    return quantitative_signal(f, score)


def eval_bool(f: Formula, table: PredicateTable, traj, t: int = 0):
    """Whether the suffix of ``traj`` from step ``t`` satisfies ``f``.

    ``traj`` may carry leading batch axes; the result then has those axes.
    """
    traj = _as_traj(traj)
    _check_horizon(f, traj, t)
    out = satisfaction_signal(f, table, traj)[..., t]
    return bool(out) if out.ndim == 0 else out


def robustness(f: Formula, table: PredicateTable, traj, t: int = 0):
    traj = _as_traj(traj)
    _check_horizon(f, traj, t)
    out = robustness_signal(f, table, traj)[..., t]
    return float(out) if out.ndim == 0 else out
