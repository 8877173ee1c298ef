"""Brute-force evaluation of formulas over a finite grid of assignments.

Every free symbol ranges over -4..4 and uninterpreted function symbols are
drawn from a few fixed tables.  All assignments are evaluated at once as
numpy vectors; rows where a division by zero occurs are marked invalid.
This is written independently of the analyzer's own evaluator.
"""

from __future__ import annotations

import itertools
import zlib

import numpy as np

from kernrace.symheap import (
    Collective, Equal, Eta, FSym, FunDef, Lam, LessEq, NotEqual, PointsTo, Seg,
)
from kernrace.terms import App, Const, Idx, Loc, LVar, Op, Size, Tid, Var

DOMAIN = np.arange(-4, 5, dtype=np.int64)
PERIOD = 17
MAX_THREADS = 4  # count symbols never exceed the domain maximum


def _tables(seed: int, n: int = 3) -> np.ndarray:
    rng = np.random.default_rng(seed)
    out = [np.zeros(PERIOD, dtype=np.int64)]
    out += [rng.integers(-4, 5, PERIOD) for _ in range(n)]
    return np.stack(out)


class Grid:
    """All assignments of ``symbols`` crossed with a table selector."""

    def __init__(self, symbols, defs=(), seed: int = 0):
        self.symbols = list(symbols)
        self.defs = {d.name: d.fn for d in defs}
        self.tables: dict[str, np.ndarray] = {}
        self.seed = seed
        n_tables = len(_tables(0))
        axes = [DOMAIN] * len(self.symbols) + [np.arange(n_tables)]
        cols = np.array(list(itertools.product(*axes)), dtype=np.int64).reshape(-1, len(axes))
        self.rows = len(cols)
        # column vectors, so evaluating at a row of offsets broadcasts
        self.values = {s: cols[:, i:i + 1] for i, s in enumerate(self.symbols)}
        self.selector = cols[:, -1:]
        self.valid = np.ones((self.rows, 1), dtype=bool)

    def _table(self, name: str) -> np.ndarray:
        if name not in self.tables:
            self.tables[name] = _tables(zlib.crc32(f"{self.seed}:{name}".encode()))
        return self.tables[name]

    def full(self, c: int):
        return np.int64(c)

    # terms
    def term(self, t, env=None) -> np.ndarray:
        env = env or {}
        if isinstance(t, Const):
            return self.full(t.value)
        if isinstance(t, Idx):
            return env[t.name]
        if isinstance(t, Loc):
            return self.full(1000 * (1 + sum(map(ord, t.name))))
        if isinstance(t, (Var, LVar, Tid, Size)):
            return self.values[t]
        if isinstance(t, Op):
            a = [self.term(x, env) for x in t.args]
            return self._op(t.op, a)
        if isinstance(t, App):
            return self.fn(t.fn, self.term(t.arg, env), env)
        raise TypeError(t)

    def _op(self, op, a):
        if op == "+":
            return a[0] + a[1]
        if op == "-":
            return a[0] - a[1]
        if op == "*":
            return a[0] * a[1]
        if op == "neg":
            return -a[0]
        if op in ("/", "%"):
            x, y = a
            zero = np.asarray(y == 0)
            if zero.ndim == 2:
                zero = zero.any(axis=1, keepdims=True)
            self.valid = self.valid & ~zero
            ys = np.where(zero, 1, y)
            q = np.abs(x) // np.abs(ys)
            q = np.where((x >= 0) == (ys >= 0), q, -q)
            return q if op == "/" else x - q * ys
        if op == "sqrt":
            return np.floor(np.sqrt(np.abs(a[0]))).astype(np.int64)
        if op == "cos":
            return np.round(1000 * np.cos(a[0])).astype(np.int64)
        raise ValueError(op)

    # function expressions
    def fn(self, f, arg, env) -> np.ndarray:
        if isinstance(f, FSym):
            if f.name in self.defs:
                return self.fn(self.defs[f.name], arg, env)
            tab = self._table(f.name)
            return tab[self.selector, np.mod(arg, PERIOD)]
        if isinstance(f, Lam):
            return self.term(f.body, {**env, f.index: arg})
        if isinstance(f, Eta):
            mask = self.conj(f.cond, {**env, f.index: arg})
            return np.where(mask, self.fn(f.then, arg, env), self.fn(f.orelse, arg, env))
        if isinstance(f, Collective):
            count = self.term(f.count, env)
            out = self.fn(f.base, arg, env)
            # descending, so the least covering thread wins
            for t in range(MAX_THREADS - 1, -1, -1):
                tenv = {**env, f.tvar: self.full(t)}
                hit = (t < count) & self._covers(f.chain, f.base, arg, tenv)
                out = np.where(hit, self.fn(f.chain, arg, tenv), out)
            return out
        raise TypeError(f)

    def _covers(self, chain, base, arg, env) -> np.ndarray:
        hit = np.False_
        f = chain
        while f != base:
            if isinstance(f, FSym) and f.name in self.defs:
                f = self.defs[f.name]
                continue
            if not isinstance(f, Eta):
                break
            hit = hit | self.conj(f.cond, {**env, f.index: arg})
            f = f.orelse
        return hit

    # formulas
    def atom(self, a, env=None) -> np.ndarray:
        if isinstance(a, FunDef):
            return np.True_
        left, right = self.term(a.left, env), self.term(a.right, env)
        if isinstance(a, Equal):
            return left == right
        if isinstance(a, NotEqual):
            return left != right
        if isinstance(a, LessEq):
            return left <= right
        raise TypeError(a)

    def conj(self, atoms, env=None) -> np.ndarray:
        out = np.True_
        for a in atoms:
            out = out & self.atom(a, env)
        return out

    def spatial_equal(self, s1, s2) -> np.ndarray:
        """Rows where two cells of the same kind describe the same memory."""
        if isinstance(s1, PointsTo):
            return (self.term(s1.addr) == self.term(s2.addr)) & (
                self.term(s1.value) == self.term(s2.value))
        assert isinstance(s1, Seg)
        lo, hi = self.term(s1.lo), self.term(s1.hi)
        ok = (self.term(s1.base) == self.term(s2.base)) & (lo == self.term(s2.lo)) & (
            hi == self.term(s2.hi))
        o = np.arange(-8, 9, dtype=np.int64)[None, :]
        inside = (lo <= o) & (o <= hi)
        same = self.fn(s1.fn, o, {}) == self.fn(s2.fn, o, {})
        return ok & np.all(~inside | same, axis=1, keepdims=True)
