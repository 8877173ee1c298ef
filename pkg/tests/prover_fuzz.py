"""Random prover queries checked against exhaustive finite-domain evaluation.

Only positive answers (unsat, proven, equal, disjoint) can be unsound, so
only those are checked against the grid.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

import numpy as np

from finite_eval import Grid
from kernrace.prover import UNSAT, Prover
from kernrace.symheap import (
    Collective, Equal, Eta, FSym, FunDef, Lam, LessEq, NotEqual, PointsTo, Seg, SymbolicHeap,
)
from kernrace.terms import App, Const, Idx, Loc, LVar, Op, Size, Tid, Var

POOL = [Var("a"), Var("b"), LVar("c"), Tid(), Size("A"), LVar("N", glob=True)]
F_A = FSym("f_A")


class QueryGen:
    def __init__(self, rng: random.Random):
        self.rng = rng
        self.symbols: list = []
        self.defs: list = []

    def fresh_query(self):
        r = self.rng
        self.symbols = r.sample(POOL, r.choice([1, 2, 2, 3]))
        self.defs = []

    def sym(self):
        return self.rng.choice(self.symbols)

    def linear(self, extra=()):
        r = self.rng
        t = Const(r.randint(-3, 3))
        for s in list(self.symbols) + list(extra):
            c = r.choice([-2, -1, 0, 0, 1, 1, 2])
            if c:
                t = Op("+", (t, s if c == 1 else Op("*", (Const(c), s))))
        return t

    def term(self, depth=2, extra=()):
        r = self.rng
        x = r.random()
        if depth <= 0 or x < 0.55:
            return self.linear(extra)
        if x < 0.63:
            return Op("*", (self.term(depth - 1, extra), self.term(depth - 1, extra)))
        if x < 0.68:
            return Op(r.choice(["/", "%"]), (self.term(depth - 1, extra), self.term(0, extra)))
        if x < 0.71:
            return Op(r.choice(["sqrt", "cos"]), (self.term(depth - 1, extra),))
        return App(self.fexpr(depth - 1), self.term(depth - 1, extra))

    def fexpr(self, depth=1):
        r = self.rng
        x = r.random()
        if depth <= 0 or x < 0.3:
            if self.defs and r.random() < 0.5:
                return FSym(r.choice(self.defs).name)
            return F_A
        k = Idx("k")
        if x < 0.8:
            cond = tuple(self.cond_atom(k) for _ in range(r.randint(1, 2)))
            body = self.term(0, extra=(k,))
            f = Eta("k", cond, Lam("k", body), self.fexpr(depth - 1))
            if r.random() < 0.4:
                name = f"G{len(self.defs)}"
                self.defs.append(FunDef(name, f))
                return FSym(name)
            return f
        return self.collective()

    def cond_atom(self, k):
        r = self.rng
        x = r.random()
        if x < 0.5:
            return Equal(k, self.linear())
        if x < 0.8:
            return LessEq(self.linear(), k) if r.random() < 0.5 else LessEq(k, self.linear())
        return NotEqual(k, self.linear())

    def collective(self):
        r = self.rng
        t, k = Idx("t"), Idx("k")
        target = r.choice([t, Op("+", (t, Const(1))), Const(0), Op("*", (Const(2), t))])
        cond = [Equal(k, target)]
        if r.random() < 0.3:
            cond.append(LessEq(t, Const(r.randint(0, 2))))
        value = r.choice([t, Const(r.randint(-2, 2)), Op("+", (t, k)), App(F_A, k)])
        chain = Eta("k", tuple(cond), Lam("k", value), F_A)
        count = r.choice([LVar("N", glob=True), Const(r.randint(1, 3))])
        if LVar("N", glob=True) not in self.symbols and count == LVar("N", glob=True):
            self.symbols.append(count)
        return Collective("t", chain, F_A, count)

    def atom(self):
        r = self.rng
        depth = 2 if r.random() < 0.2 else 1
        a, b = self.term(depth), self.term(depth)
        x = r.random()
        if x < 0.4:
            return LessEq(a, b)
        if x < 0.75:
            return Equal(a, b)
        return NotEqual(a, b)

    def near_consequence(self, ctx):
        """An atom that often follows from ``ctx`` (and sometimes barely not)."""
        r = self.rng
        cand = [a for a in ctx if isinstance(a, (LessEq, Equal))]
        if not cand:
            return self.atom()
        a = r.choice(cand)
        slack = Const(r.choice([-1, 0, 0, 1, 2]))
        if isinstance(a, Equal) and r.random() < 0.5:
            return Equal(a.right, a.left)
        goal = LessEq(a.left, Op("+", (a.right, slack)))
        if len(cand) > 1 and r.random() < 0.4:
            b = r.choice(cand)
            goal = LessEq(Op("+", (a.left, b.left)), Op("+", (Op("+", (a.right, b.right)), slack)))
        return goal

    def ctx(self, lo=0, hi=3):
        return [self.atom() for _ in range(self.rng.randint(lo, hi))]

    def seg(self, fn=None):
        return Seg(Loc("A"), Const(0), Op("-", (Size("A"), Const(1))), fn or self.fexpr(2))


@dataclass
class FuzzStats:
    queries: int = 0
    positive: int = 0
    unsound: list = field(default_factory=list)
    kinds: dict = field(default_factory=dict)


def _check(kind, grid: Grid, ctx, bad_rows) -> bool:
    """True when no valid model of ``ctx`` is in ``bad_rows``."""
    models = grid.conj(ctx) & grid.valid
    return not np.any(models & bad_rows)


def run_one(gen: QueryGen, prover: Prover, stats: FuzzStats, seed: int) -> None:
    r = gen.rng
    gen.fresh_query()
    kind = r.choice(["sat", "prove", "compare", "disjoint", "entail"])
    stats.queries += 1
    stats.kinds[kind] = stats.kinds.get(kind, 0) + 1
    if kind == "sat":
        ctx = gen.ctx(1, 4)
        ctx = gen.defs + ctx
        if prover.sat(ctx) != UNSAT:
            return
        grid = Grid(gen.symbols, gen.defs, seed)
        ok = _check(kind, grid, ctx, np.True_)
    elif kind == "prove":
        ctx = gen.ctx()
        goal = gen.near_consequence(ctx) if r.random() < 0.5 else gen.atom()
        ctx = gen.defs + ctx
        if not prover.prove_pure(ctx, goal):
            return
        grid = Grid(gen.symbols, gen.defs, seed)
        bad = ~grid.atom(goal)
        ok = _check(kind, grid, ctx, bad)
    elif kind == "compare":
        ctx, e1, e2 = gen.ctx(), gen.term(), gen.term()
        if r.random() < 0.3:
            ctx.append(Equal(e1, e2) if r.random() < 0.5 else Equal(gen.sym(), gen.linear()))
        ctx = gen.defs + ctx
        if not prover.compare(e1, e2, ctx):
            return
        grid = Grid(gen.symbols, gen.defs, seed)
        ok = _check(kind, grid, ctx, grid.term(e1) != grid.term(e2))
    elif kind == "disjoint":
        ctx = gen.ctx()
        base2 = Loc("A") if r.random() < 0.85 else Loc("B")
        t1, t2 = gen.term(), gen.term()
        if r.random() < 0.4:
            ctx.append(LessEq(Op("+", (t1, Const(r.choice([0, 1, 1])))), t2))
        e1 = Op("+", (Loc("A"), t1))
        e2 = Op("+", (base2, t2))
        ctx = gen.defs + ctx
        if not prover.disjoint(e1, e2, ctx):
            return
        grid = Grid(gen.symbols, gen.defs, seed)
        ok = _check(kind, grid, ctx, grid.term(e1) == grid.term(e2))
    else:
        ok = _entailment(gen, prover, seed)
        if ok is None:
            return
    stats.positive += 1
    if not ok:
        stats.unsound.append((seed, kind))


def _entailment(gen: QueryGen, prover: Prover, seed: int):
    r = gen.rng
    fa = gen.fexpr(2)
    fc = fa if r.random() < 0.6 else gen.fexpr(2)
    spatial_a = [gen.seg(fa)]
    spatial_c = [gen.seg(fc)]
    if r.random() < 0.5:
        addr = Op("+", (Loc("B"), gen.linear()))
        val = gen.term(1)
        spatial_a.append(PointsTo(addr, val))
        spatial_c.append(PointsTo(addr if r.random() < 0.7 else Op("+", (Loc("B"), gen.linear())),
                                  val if r.random() < 0.7 else gen.term(1)))
    pure_a = gen.defs + [LessEq(Const(1), Size("A"))] + gen.ctx(0, 2)
    pure_c = [a for a in pure_a if not isinstance(a, FunDef) and r.random() < 0.5]
    if r.random() < 0.4:
        pure_c.append(gen.atom())
    if Size("A") not in gen.symbols:
        gen.symbols.append(Size("A"))
    ante = SymbolicHeap(tuple(pure_a), tuple(spatial_a))
    cons = SymbolicHeap(tuple(pure_c), tuple(spatial_c))
    if not prover.prove_entailment(ante, cons):
        return None
    grid = Grid(gen.symbols, gen.defs, seed)
    good = grid.conj(pure_c)
    for s1, s2 in zip(spatial_a, spatial_c):
        good &= grid.spatial_equal(s1, s2)
    return _check("entail", grid, pure_a, ~good)


def prover_fuzz(seed: int, queries: int) -> FuzzStats:
    rng = random.Random(seed)
    gen = QueryGen(rng)
    prover = Prover()
    stats = FuzzStats()
    for i in range(queries):
        run_one(gen, prover, stats, seed * 1_000_003 + i)
    return stats
