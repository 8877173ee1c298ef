"""Symbolic execution of kernels over sets of symbolic heaps.

One generic thread is executed with ``tid`` symbolic.  Arrays and shared
scalars are segments whose contents are function symbols; every store adds
an eta layer recording the written index (as a condition over the index and
the thread's path condition) and the written value.  At each barrier, and at
the implicit barrier before ``exit``, the heap set is instantiated for two
distinct threads and every pair of possibly overlapping writes from the
current epoch must be proved to store the same value.  After a clean
barrier the epoch's layers are folded into one snapshot symbol defined as
the collective effect of all threads' writes.
"""

from __future__ import annotations

import time
from collections import Counter, defaultdict, deque
from dataclasses import dataclass, field

from kernrace.frontend import (
    Assert, Assign, Assume, Barrier, Kernel, Load, Store, format_command,
)
from kernrace.prover import UNSAT, Prover, bool_dnf
from kernrace.symheap import (
    Collective, Equal, Eta, FSym, FunDef, Lam, LessEq, NameSupply, NotEqual, Seg,
    SymbolicHeap, all_subterms, atom_terms, format_heap, format_term, heap_terms, less,
    rename, rw_atom, rw_fexpr, rw_heap, rw_term, simplify, subst, subst_atom, subst_term,
    thread_dependent,
)
from kernrace.terms import App, Const, Idx, Loc, LVar, Op, Size, Tid, Var, sub

THREAD_COUNT = LVar("N", glob=True)
THREAD_I = LVar("i", glob=True)
THREAD_J = LVar("j", glob=True)
INDEX = "k"

RACE_FREE, POTENTIAL_RACE, DEFINITE_ERROR, INCONCLUSIVE = (
    "race-free", "potential-race", "definite-error", "inconclusive",
)


@dataclass(frozen=True)
class SymBottom:
    """Symbolic error: ``kind`` is ``error`` (bounds/assert/division) or ``race``."""

    kind: str
    reason: str
    heap: SymbolicHeap | None = None
    witness: dict = field(default_factory=dict, compare=False, hash=False)


@dataclass
class Options:
    loop_bound: int = 3
    max_heaps: int = 64
    budget: int = 10_000
    solver: object = None


@dataclass
class Finding:
    kind: str  # definite-error | potential-race
    node: int
    line: int
    message: str
    witness: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "node": self.node, "line": self.line,
                "message": self.message, "witness": self.witness}


@dataclass
class AnalysisReport:
    verdict: str
    findings: list
    notes: list
    states: dict
    stats: dict

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "findings": [f.to_dict() for f in self.findings],
            "notes": list(self.notes),
            "states": {str(k): v for k, v in sorted(self.states.items())},
            "stats": dict(self.stats),
        }


# ---------------------------------------------------------------------------
# helpers


def _is_launch_fact(a) -> bool:
    """Atoms that hold for every thread alike (no tid, private or existential names)."""
    if isinstance(a, FunDef):
        return True
    for t in atom_terms(a):
        for u in all_subterms(t):
            if isinstance(u, (Tid, Var, App)) or (isinstance(u, LVar) and not u.glob):
                return False
    return True


def epoch_layers(h: SymbolicHeap, fn) -> tuple[list, object]:
    """Eta layers of the current epoch (newest first) and the epoch's base function."""
    defs = h.defs()
    layers = []
    while isinstance(fn, FSym) and isinstance(defs.get(fn.name), Eta):
        layer = defs[fn.name]
        layers.append(layer)
        fn = layer.orelse
    return layers, fn


def canonical(h: SymbolicHeap) -> SymbolicHeap:
    """Alpha-rename existentials and fresh symbols in order of appearance."""
    lv: dict = {}
    syms: dict = {}
    for t in heap_terms(h):
        if isinstance(t, LVar) and not t.glob and t not in lv:
            lv[t] = LVar(f"c'{len(lv) + 1}")
    for a in h.pure:
        if isinstance(a, FunDef) and a.name not in syms:
            syms[a.name] = f"S{len(syms) + 1}"
    return rw_heap(h, lambda t: lv.get(t) if isinstance(t, LVar) else None,
                   lambda n: syms.get(n, n))


def _dedupe(heaps):
    seen, out = set(), []
    for h in heaps:
        if h not in seen:
            seen.add(h)
            out.append(h)
    return out


# ---------------------------------------------------------------------------
# the engine


class SymbolicExecutor:
    def __init__(self, kernel: Kernel, options: Options | None = None, prover: Prover | None = None):
        self.kernel = kernel
        self.opts = options or Options()
        self.prover = prover or Prover(self.opts.budget, self.opts.solver)
        self.supply = NameSupply()
        self.shared = kernel.shared_names
        self.scalars = set(kernel.shared_scalars)

    # initial state -------------------------------------------------------
    def initial_heaps(self) -> list[SymbolicHeap]:
        k = self.kernel
        pure = [LessEq(Const(0), Tid()), less(Tid(), THREAD_COUNT), LessEq(Const(2), THREAD_COUNT)]
        spatial = []
        for p in k.params:
            if p.is_array:
                pure.append(LessEq(Const(1), Size(p.name)))
                spatial.append(Seg(Loc(p.name), Const(0), sub(Size(p.name), Const(1)),
                                   FSym(f"f_{p.name}")))
            elif p.shared:
                spatial.append(Seg(Loc(p.name), Const(0), Const(0), FSym(f"f_{p.name}")))
            else:
                # every thread receives the same launch value
                pure.append(Equal(Var(p.name), LVar(f"{p.name}0", glob=True)))
        base = SymbolicHeap(tuple(pure), tuple(spatial))
        if k.requires is None:
            return [base]
        out = []
        for alt in bool_dnf(self._sym_bool(k.requires, base)):
            h = base.with_pure(*alt)
            if self.prover.sat(h.pure) != UNSAT:
                out.append(simplify(h))
        return out

    # expressions ---------------------------------------------------------
    def _sym(self, e, h: SymbolicHeap):
        """Kernel expression to heap term; shared scalars read their cell."""
        if not self.scalars:
            return e

        def tf(t):
            if isinstance(t, Var) and t.name in self.scalars:
                return App(h.segment(t.name).fn, Const(0))
            return None

        return rw_term(e, tf)

    def _sym_bool(self, b, h):
        from kernrace.frontend import And, Eq, Lt, Not

        if isinstance(b, Lt):
            return Lt(self._sym(b.left, h), self._sym(b.right, h))
        if isinstance(b, Eq):
            return Eq(self._sym(b.left, h), self._sym(b.right, h))
        if isinstance(b, And):
            return And(self._sym_bool(b.left, h), self._sym_bool(b.right, h))
        return Not(self._sym_bool(b.arg, h))

    def _check_division(self, e, h) -> SymBottom | None:
        for t in all_subterms(e):
            if isinstance(t, Op) and t.op in ("/", "%"):
                if not self.prover.prove_pure(h.pure, NotEqual(t.args[1], Const(0))):
                    return SymBottom("error", f"possible division by zero in {format_term(t)}", h)
        return None

    def _check_bounds(self, array: str, e, h) -> SymBottom | None:
        goal = (LessEq(Const(0), e), less(e, Size(array)))
        if self.prover.prove_pure(h.pure, goal):
            return None
        return SymBottom(
            "error",
            f"cannot prove 0 <= {format_term(e)} < size({array})",
            h,
            {"array": array, "index": format_term(e)},
        )

    def _rebind(self, h: SymbolicHeap, var: str, rhs):
        """Rename the old value of ``var`` to a fresh existential."""
        v = Var(var)
        if any(t == v for t in heap_terms(h)) or v in all_subterms(rhs):
            old = self.supply.primed(var)
            return subst(h, v, old), old
        return h, None

    # commands --------------------------------------------------------------
    def exec_command(self, cmd, h: SymbolicHeap):
        """Successor heaps (empty list = path pruned) or a ``SymBottom``."""
        if isinstance(cmd, Assign):
            e = self._sym(cmd.expr, h)
            bad = self._check_division(e, h)
            if bad:
                return bad
            if cmd.var in self.scalars:
                return [self._store(cmd.var, Const(0), e, h)]
            h2, old = self._rebind(h, cmd.var, e)
            if old is not None:
                e = subst_term(e, Var(cmd.var), old)
            return [simplify(h2.with_pure(Equal(Var(cmd.var), e)))]
        if isinstance(cmd, Store):
            idx = self._sym(cmd.index, h)
            val = self._sym(cmd.expr, h)
            bad = self._check_division(idx, h) or self._check_division(val, h)
            if bad:
                return bad
            bad = self._check_bounds(cmd.array, idx, h)
            if bad:
                return bad
            return [self._store(cmd.array, idx, val, h)]
        if isinstance(cmd, Load):
            idx = self._sym(cmd.index, h)
            bad = self._check_division(idx, h) or self._check_bounds(cmd.array, idx, h)
            if bad:
                return bad
            fn = h.segment(cmd.array).fn
            if cmd.var in self.scalars:
                return [self._store(cmd.var, Const(0), App(fn, idx), h)]
            h2, old = self._rebind(h, cmd.var, idx)
            if old is not None:
                idx = subst_term(idx, Var(cmd.var), old)
            return [simplify(h2.with_pure(Equal(Var(cmd.var), App(fn, idx))))]
        if isinstance(cmd, Assume):
            b = self._sym_bool(cmd.cond, h)
            out = []
            for alt in bool_dnf(b):
                bad = None
                for a in alt:
                    bad = bad or self._check_division(a.left, h) or self._check_division(a.right, h)
                if bad:
                    return bad
                h2 = h.with_pure(*alt)
                if self.prover.sat(h2.pure) != UNSAT:
                    out.append(simplify(h2))
            return _dedupe(out)
        if isinstance(cmd, Assert):
            b = self._sym_bool(cmd.cond, h)
            if self.prover.prove_pure(h.pure, b):
                return [h]
            return SymBottom("error", f"cannot prove {format_command(cmd)}", h)
        if isinstance(cmd, Barrier):
            raise ValueError("barriers are handled by exec_barrier")
        raise TypeError(f"not a command: {cmd!r}")

    def _store(self, name: str, idx, val, h: SymbolicHeap) -> SymbolicHeap:
        seg = h.segment(name)
        g = self.supply.symbol(name)
        phi = tuple(a for a in h.pure if not _is_launch_fact(a)) + (Equal(Idx(INDEX), idx),)
        layer = Eta(INDEX, phi, Lam(INDEX, val), seg.fn)
        spatial = tuple(
            Seg(s.base, s.lo, s.hi, g) if s is seg else s for s in h.spatial
        )
        return simplify(SymbolicHeap(h.pure + (FunDef(g.name, layer),), spatial))

    def exec_set(self, cmd, heaps):
        out = []
        for h in heaps:
            r = self.exec_command(cmd, h)
            if isinstance(r, SymBottom):
                return r
            if not r and isinstance(cmd, Assume):
                self._pruned = True
            out.extend(r)
        return _dedupe(out)

    # barriers --------------------------------------------------------------
    def no_race(self, heaps):
        """``(True, None)`` or ``(False, witness)`` for the heap set at a barrier."""
        heaps = list(heaps)
        names = [s.base.name for s in heaps[0].spatial if isinstance(s, Seg)] if heaps else []
        sep = (NotEqual(THREAD_I, THREAD_J), LessEq(Const(0), THREAD_I), LessEq(Const(0), THREAD_J))
        for a in range(len(heaps)):
            for b in range(a, len(heaps)):
                hi = rename(THREAD_I, heaps[a], self.shared)
                hj = rename(THREAD_J, heaps[b], self.shared)
                ctx = hi.pure + hj.pure + sep
                if self.prover.quick_unsat(ctx):
                    continue
                for name in names:
                    w = self._race_on(name, hi, hj, ctx)
                    if w is not None:
                        w.update(heap_i=format_heap(hi), heap_j=format_heap(hj),
                                 pair=[a, b])
                        return False, w
        return True, None

    def _race_on(self, name, hi, hj, ctx):
        si, sj = hi.segment(name), hj.segment(name)
        li, _ = epoch_layers(hi, si.fn)
        lj, _ = epoch_layers(hj, sj.fn)
        x, y = LVar("x", glob=True), LVar("y", glob=True)
        for la in li:
            cx = [subst_atom(c, Idx(la.index), x) for c in la.cond]
            for lb in lj:
                cy = [subst_atom(c, Idx(lb.index), y) for c in lb.cond]
                local = ctx + tuple(cx) + tuple(cy) + (
                    LessEq(si.lo, x), LessEq(x, si.hi), LessEq(sj.lo, y), LessEq(y, sj.hi))
                addr_x = Op("+", (si.base, x))
                addr_y = Op("+", (sj.base, y))
                if self.prover.disjoint(addr_x, addr_y, local):
                    continue
                vx, vy = App(si.fn, x), App(sj.fn, y)
                if self.prover.compare(vx, vy, local + (Equal(x, y),)):
                    continue
                return {
                    "location": name,
                    "address": [format_term(addr_x), format_term(addr_y)],
                    "values": [format_term(vx), format_term(vy)],
                    "writes": [format_term(App(la.then, x)), format_term(App(lb.then, y))],
                }
        return None

    def commit(self, heaps):
        """Fold each location's epoch layers, across all heaps, into one snapshot."""
        heaps = list(heaps)
        if not heaps:
            return heaps
        tvar = f"t{self.supply.next()}"
        names = [s.base.name for s in heaps[0].spatial if isinstance(s, Seg)]
        new_defs = {}
        for name in names:
            bases = set()
            layers = []
            for h in heaps:
                ls, base = epoch_layers(h, h.segment(name).fn)
                bases.add(base)
                dep = thread_dependent(h, self.shared)
                for layer in ls:
                    g = self._generalize(layer, h, dep, tvar)
                    if g not in layers:
                        layers.append(g)
            if not layers:
                continue
            if len(bases) != 1:
                raise ValueError(f"heaps disagree on the epoch base of {name}")
            base = bases.pop()
            chain = base
            for layer in reversed(layers):
                chain = Eta(layer.index, layer.cond, layer.then, chain)
            sym = self.supply.symbol(f"snap_{name}")
            new_defs[name] = (sym, Collective(tvar, chain, base, THREAD_COUNT))
        if not new_defs:
            return heaps
        out = []
        for h in heaps:
            pure = h.pure + tuple(FunDef(s.name, c) for s, c in new_defs.values())
            spatial = tuple(
                Seg(s.base, s.lo, s.hi, new_defs[s.base.name][0])
                if isinstance(s, Seg) and s.base.name in new_defs else s
                for s in h.spatial
            )
            out.append(simplify(SymbolicHeap(pure, spatial)))
        return _dedupe(out)

    def _generalize(self, layer: Eta, h: SymbolicHeap, dep: set, tvar: str) -> Eta:
        """The layer as written by an arbitrary thread ``tvar``.

        Thread-dependent symbols are inlined so the result only refers to
        launch-wide symbols; the writer's private names get a ``@tvar`` tag.
        """
        defs = h.defs()
        tag = "@" + tvar

        def inline_fn(f):
            if isinstance(f, FSym):
                return inline_fn(defs[f.name]) if f.name in dep else f
            if isinstance(f, Lam):
                return Lam(f.index, inline_term(f.body))
            if isinstance(f, Eta):
                return Eta(f.index, tuple(inline_atom(a) for a in f.cond),
                           inline_fn(f.then), inline_fn(f.orelse))
            return f  # collective snapshots are launch-wide already

        def inline_term(t):
            return rw_term(t, lambda u: App(inline_fn(u.fn), inline_term(u.arg))
                           if isinstance(u, App) else None)

        def inline_atom(a):
            return type(a)(inline_term(a.left), inline_term(a.right))

        def tf(t):
            if isinstance(t, Tid):
                return Idx(tvar)
            if isinstance(t, Var) and "@" not in t.name and t.name not in self.shared:
                return Var(t.name + tag)
            if isinstance(t, LVar) and not t.glob and "@" not in t.name:
                return LVar(t.name + tag)
            return None

        cond = tuple(rw_atom(inline_atom(a), tf) for a in layer.cond)
        then = rw_fexpr(inline_fn(layer.then), tf)
        return Eta(layer.index, cond, then, layer.orelse)

    def exec_barrier(self, heaps):
        ok, witness = self.no_race(heaps)
        if not ok:
            return SymBottom("race", "cannot prove the barrier race-free", None, witness)
        return self.commit(heaps)

    # driver ------------------------------------------------------------------
    def analyze(self) -> AnalysisReport:
        t0 = time.perf_counter()
        self._pruned = False
        k = self.kernel
        findings: list[Finding] = []
        notes: list[str] = []
        post: dict = defaultdict(list)
        canon: dict = defaultdict(set)
        back = _back_edges(k)
        back_count: Counter = Counter()
        inconclusive = False

        def line(n):
            return k.nodes[n].line

        def add(m, heaps, via=None) -> list:
            nonlocal inconclusive
            fresh = []
            for h in heaps:
                c = canonical(h)
                if c in canon[m]:
                    continue
                if (via, m) in back and any(
                    self.prover.prove_entailment(c, canonical(o)) for o in post[m]
                ):
                    continue
                if len(post[m]) >= self.opts.max_heaps:
                    notes.append(f"heap cap {self.opts.max_heaps} reached at node {m}")
                    inconclusive = True
                    break
                canon[m].add(c)
                post[m].append(h)
                fresh.append(h)
            return fresh

        init = self.initial_heaps()
        if not init:
            notes.append("requires clause is unsatisfiable; no thread runs")
        add(k.start, init)
        work = deque([(k.start, list(post[k.start]))]) if init else deque()
        stopped = False
        while work:
            pending = defaultdict(list)
            at_exit = []
            while work:
                n, heaps = work.popleft()
                for m in k.succ[n]:
                    if m == k.exit:
                        at_exit.extend(heaps)
                        continue
                    if (n, m) in back:
                        back_count[(n, m)] += 1
                        if back_count[(n, m)] > self.opts.loop_bound:
                            notes.append(f"loop bound {self.opts.loop_bound} reached at node {m}")
                            inconclusive = True
                            continue
                    cmd = k.nodes[m].cmd
                    if isinstance(cmd, Barrier):
                        pending[m].extend(heaps)
                        continue
                    res = self._exec_each(cmd, heaps, m, findings)
                    new = add(m, res, n)
                    if new:
                        work.append((m, new))
            if pending:
                if len(pending) > 1 or at_exit:
                    notes.append("paths reach different barriers; barrier divergence is not checked")
                for b in sorted(pending):
                    heaps = _dedupe(pending[b])
                    r = self.exec_barrier(heaps)
                    if isinstance(r, SymBottom):
                        findings.append(Finding(POTENTIAL_RACE, b, line(b), r.reason, r.witness))
                        stopped = True
                        continue
                    new = add(b, r)
                    if new:
                        work.append((b, new))
                if stopped:
                    break
            if at_exit:
                heaps = _dedupe(at_exit)
                post[k.exit].extend(h for h in heaps if h not in post[k.exit])
                r = self.exec_barrier(heaps)
                if isinstance(r, SymBottom):
                    findings.append(Finding(POTENTIAL_RACE, k.exit, 0,
                                            "cannot prove the final implicit barrier race-free",
                                            r.witness))
                    stopped = True
            if stopped:
                break
        kinds = {f.kind for f in findings}
        if DEFINITE_ERROR in kinds:
            verdict = DEFINITE_ERROR
        elif POTENTIAL_RACE in kinds:
            verdict = POTENTIAL_RACE
        elif inconclusive:
            verdict = INCONCLUSIVE
        else:
            verdict = RACE_FREE
        if self.prover.stats["budget_exhausted"]:
            notes.append(f"prover budget exhausted on {self.prover.stats['budget_exhausted']} queries")
        if self._pruned:
            notes.append("paths pruned by assume are excluded from later barrier checks")
        states = {n: [format_heap(h) for h in hs] for n, hs in post.items()}
        stats = {
            "prover_queries": self.prover.stats["queries"],
            "heaps": sum(len(v) for v in post.values()),
            "seconds": round(time.perf_counter() - t0, 4),
        }
        return AnalysisReport(verdict, findings, _unique(notes), states, stats)

    def _exec_each(self, cmd, heaps, node, findings):
        out = []
        for h in heaps:
            r = self.exec_command(cmd, h)
            if isinstance(r, SymBottom):
                findings.append(Finding(
                    DEFINITE_ERROR, node, self.kernel.nodes[node].line,
                    f"{format_command(cmd)}: {r.reason}",
                    {**r.witness, "heap": format_heap(h)},
                ))
                continue
            if not r and isinstance(cmd, Assume):
                self._pruned = True
            out.extend(r)
        return _dedupe(out)


def _unique(xs):
    return list(dict.fromkeys(xs))


def _back_edges(k: Kernel) -> set:
    """Edges closing a cycle in a depth-first traversal from start."""
    out = set()
    state = {}
    stack = [(k.start, iter(k.succ[k.start]))]
    state[k.start] = 1
    while stack:
        n, it = stack[-1]
        m = next(it, None)
        if m is None:
            state[n] = 2
            stack.pop()
            continue
        if state.get(m) == 1:
            out.add((n, m))
        elif m not in state:
            state[m] = 1
            stack.append((m, iter(k.succ[m])))
    return out


def analyze(kernel: Kernel, options: Options | None = None, **kw) -> AnalysisReport:
    opts = options or Options(**kw)
    return SymbolicExecutor(kernel, opts).analyze()
