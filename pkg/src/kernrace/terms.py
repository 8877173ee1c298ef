"""Expression terms shared by the kernel AST and the assertion language.

The kernel frontend only produces ``Const``, ``Var``, ``Tid``, ``Size`` and
``Op``.  Symbolic heaps additionally use logical (primed) variables, base
addresses of shared storage, bound index variables and applications of
array-content functions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Union

ARITY = {
    "+": 2,
    "-": 2,
    "*": 2,
    "/": 2,
    "%": 2,
    "neg": 1,
    "cos": 1,
    "sqrt": 1,
}
LINEAR_OPS = {"+", "-", "neg"}


@dataclass(frozen=True, slots=True)
class Const:
    value: int

    def __str__(self) -> str:
        return str(self.value)


@dataclass(frozen=True, slots=True)
class Var:
    """Program variable.  Thread-renamed variables carry an ``@tag`` suffix."""

    name: str

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True, slots=True)
class Tid:
    def __str__(self) -> str:
        return "tid"


@dataclass(frozen=True, slots=True)
class Size:
    array: str

    def __str__(self) -> str:
        return f"size({self.array})"


@dataclass(frozen=True, slots=True)
class LVar:
    """Logical variable.  ``glob`` marks launch-wide constants that thread
    renaming must leave alone (the symbolic thread count)."""

    name: str
    glob: bool = False

    def __str__(self) -> str:
        s = self.name if "'" in self.name else self.name + "'"
        return "$" + s if self.glob else s


@dataclass(frozen=True, slots=True)
class Loc:
    """Base address of a shared array or shared scalar cell."""

    name: str

    def __str__(self) -> str:
        return f"&{self.name}"


@dataclass(frozen=True, slots=True)
class Idx:
    """Index variable bound by a lambda/eta binder."""

    name: str

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True, slots=True)
class Op:
    op: str
    args: tuple

    def __post_init__(self):
        if self.op not in ARITY:
            raise ValueError(f"unknown operator {self.op!r}")
        if len(self.args) != ARITY[self.op]:
            raise ValueError(f"operator {self.op!r} expects {ARITY[self.op]} operands")

    def __str__(self) -> str:
        if self.op == "neg":
            return f"-({self.args[0]})"
        if self.op in ("cos", "sqrt"):
            return f"{self.op}({self.args[0]})"
        return f"({self.args[0]} {self.op} {self.args[1]})"


@dataclass(frozen=True, slots=True)
class App:
    """``fn(arg)`` where ``fn`` is a function expression (usually a symbol)."""

    fn: object
    arg: object

    def __str__(self) -> str:
        return f"{self.fn}({self.arg})"


Term = Union[Const, Var, Tid, Size, LVar, Loc, Idx, Op, App]


def add(a, b):
    if isinstance(b, Const) and b.value == 0:
        return a
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value + b.value)
    return Op("+", (a, b))


def sub(a, b):
    if isinstance(b, Const) and b.value == 0:
        return a
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value - b.value)
    return Op("-", (a, b))


def children(t) -> tuple:
    if isinstance(t, Op):
        return t.args
    if isinstance(t, App):
        return (t.arg,)
    return ()


def map_term(t, fn: Callable):
    """Rebuild ``t`` bottom-up; ``fn`` returns a replacement or None."""
    r = fn(t)
    if r is not None:
        return r
    if isinstance(t, Op):
        args = tuple(map_term(a, fn) for a in t.args)
        return t if args == t.args else Op(t.op, args)
    if isinstance(t, App):
        from kernrace.symheap import map_fexpr_terms

        f = map_fexpr_terms(t.fn, fn)
        a = map_term(t.arg, fn)
        return t if (f is t.fn and a == t.arg) else App(f, a)
    return t


def iter_subterms(t):
    yield t
    if isinstance(t, Op):
        for a in t.args:
            yield from iter_subterms(a)
    elif isinstance(t, App):
        from kernrace.symheap import fexpr_terms

        for s in fexpr_terms(t.fn):
            yield from iter_subterms(s)
        yield from iter_subterms(t.arg)


MASK = (1 << 64) - 1


def wrap64(n: int) -> int:
    n &= MASK
    return n - (1 << 64) if n >> 63 else n


def apply_op(op: str, vals: list[int]) -> int:
    """Concrete semantics of the operator set; raises ZeroDivisionError."""
    if op == "+":
        return wrap64(vals[0] + vals[1])
    if op == "-":
        return wrap64(vals[0] - vals[1])
    if op == "*":
        return wrap64(vals[0] * vals[1])
    if op == "/":
        a, b = vals
        if b == 0:
            raise ZeroDivisionError
        q = abs(a) // abs(b)
        return wrap64(q if (a >= 0) == (b >= 0) else -q)
    if op == "%":
        a, b = vals
        if b == 0:
            raise ZeroDivisionError
        q = apply_op("/", [a, b])
        return wrap64(a - q * b)
    if op == "neg":
        return wrap64(-vals[0])
    if op == "cos":
        # integer surrogate, only its functionality matters downstream
        return int(round(1000 * math.cos(vals[0])))
    if op == "sqrt":
        return math.isqrt(abs(vals[0]))
    raise ValueError(op)
