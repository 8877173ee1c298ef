"""Symbolic heaps with array segments and eta-update function expressions.

A heap is ``exists x'. (Pi & Sigma)``: a pure conjunction ``Pi`` and a
separating conjunction ``Sigma`` of points-to cells and array segments.
Array contents are function expressions.  Segments normally hold a named
function symbol whose definition (if any) lives in ``Pi`` as a ``FunDef``
atom; undefined symbols stand for unknown contents.

Printed form (also accepted by :func:`parse_heap`)::

    x'1 = 3 & g1 := eta(k. k = tid; \\k. 5; fA) : &A |-> A[0, size(A) - 1 | g1]

``:`` separates the pure part from the spatial part, ``*`` is the
separating conjunction, ``emp`` the empty heap, ``$N'`` a launch-wide
logical constant.
"""

from __future__ import annotations

import itertools
import re
import threading
from collections.abc import Mapping
from dataclasses import dataclass, field

from kernrace.terms import (
    App, Const, Idx, Loc, LVar, Op, Size, Tid, Var, apply_op, map_term, sub,
)

# ---------------------------------------------------------------------------
# pure atoms


@dataclass(frozen=True, slots=True)
class Equal:
    left: object
    right: object


@dataclass(frozen=True, slots=True)
class NotEqual:
    left: object
    right: object


@dataclass(frozen=True, slots=True)
class LessEq:
    left: object
    right: object


@dataclass(frozen=True, slots=True)
class FunDef:
    """``name := fn``: defines a function symbol."""

    name: str
    fn: object


def less(a, b) -> LessEq:
    """``a < b`` over the integers."""
    return LessEq(Op("+", (a, Const(1))), b)


# ---------------------------------------------------------------------------
# function expressions


@dataclass(frozen=True, slots=True)
class FSym:
    name: str

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True, slots=True)
class Lam:
    index: str
    body: object

    def __str__(self) -> str:
        return format_fexpr(self)


@dataclass(frozen=True, slots=True)
class Eta:
    """``then`` where every atom of ``cond`` holds at the index, else ``orelse``."""

    index: str
    cond: tuple
    then: object
    orelse: object

    def __str__(self) -> str:
        return format_fexpr(self)


@dataclass(frozen=True, slots=True)
class Collective:
    """Combined effect of all threads' writes in one barrier epoch.

    ``chain`` is an eta chain over ``base`` in which the writing thread's id
    is the bound index variable ``tvar``.  At index ``x`` the value is
    ``chain(x)`` for the least thread ``t < count`` whose chain has a layer
    covering ``x``; ``base(x)`` when no thread wrote ``x``.  Private names of
    the writer appear as ``v@<tvar>``.
    """

    tvar: str
    chain: object
    base: object
    count: object

    def __str__(self) -> str:
        return format_fexpr(self)


# ---------------------------------------------------------------------------
# spatial formulas and heaps


@dataclass(frozen=True, slots=True)
class PointsTo:
    addr: object
    value: object


@dataclass(frozen=True, slots=True)
class Seg:
    base: object
    lo: object
    hi: object
    fn: object


@dataclass(frozen=True)
class SymbolicHeap:
    pure: tuple = ()
    spatial: tuple = ()

    def defs(self) -> dict:
        return {a.name: a.fn for a in self.pure if isinstance(a, FunDef)}

    def with_pure(self, *atoms) -> SymbolicHeap:
        return SymbolicHeap(self.pure + tuple(atoms), self.spatial)

    def segment(self, name: str) -> Seg | None:
        for s in self.spatial:
            if isinstance(s, Seg) and s.base == Loc(name):
                return s
        return None

    def __str__(self) -> str:
        return format_heap(self)


EMP = SymbolicHeap()

# ---------------------------------------------------------------------------
# fresh names


class NameSupply:
    """Deterministic fresh-name source; safe for concurrent draws."""

    def __init__(self, start: int = 1):
        self._counter = itertools.count(start)
        self._lock = threading.Lock()

    def next(self) -> int:
        with self._lock:
            return next(self._counter)

    def primed(self, hint: str = "v", glob: bool = False) -> LVar:
        return LVar(f"{_base_name(hint)}'{self.next()}", glob)

    def symbol(self, hint: str = "f") -> FSym:
        return FSym(f"{_base_name(hint)}{self.next()}")

    def index(self, hint: str = "k") -> str:
        return f"{hint}{self.next()}"


def _base_name(hint) -> str:
    s = hint.name if hasattr(hint, "name") else str(hint)
    return re.sub(r"[^A-Za-z0-9_]", "", s.split("'")[0].split("@")[0]) or "v"


_default_supply = NameSupply()


def fresh_primed(hint="v", supply: NameSupply | None = None) -> LVar:
    return (supply or _default_supply).primed(hint)


# ---------------------------------------------------------------------------
# generic rewriting


def _bind(tf, *names):
    bound = {Idx(n) for n in names}
    if tf is None:
        return None

    def inner(t):
        if t in bound:
            return t
        return tf(t)

    return inner


def rw_term(t, tf=None, sf=None):
    """Rewrite terms with ``tf`` (top-down, first match) and symbols with ``sf``."""
    def fn(u):
        if tf is not None:
            r = tf(u)
            if r is not None:
                return r
        if isinstance(u, App):
            return App(rw_fexpr(u.fn, tf, sf), rw_term(u.arg, tf, sf))
        return None

    return map_term(t, fn)


def rw_fexpr(f, tf=None, sf=None):
    if isinstance(f, FSym):
        return FSym(sf(f.name)) if sf is not None else f
    if isinstance(f, Lam):
        return Lam(f.index, rw_term(f.body, _bind(tf, f.index), sf))
    if isinstance(f, Eta):
        itf = _bind(tf, f.index)
        return Eta(
            f.index,
            tuple(rw_atom(a, itf, sf) for a in f.cond),
            rw_fexpr(f.then, tf, sf),
            rw_fexpr(f.orelse, tf, sf),
        )
    if isinstance(f, Collective):
        ttf = _bind(tf, f.tvar)
        return Collective(
            f.tvar, rw_fexpr(f.chain, ttf, sf), rw_fexpr(f.base, tf, sf), rw_term(f.count, tf, sf)
        )
    raise TypeError(f"not a function expression: {f!r}")


def rw_atom(a, tf=None, sf=None):
    if isinstance(a, FunDef):
        return FunDef(sf(a.name) if sf is not None else a.name, rw_fexpr(a.fn, tf, sf))
    return type(a)(rw_term(a.left, tf, sf), rw_term(a.right, tf, sf))


def rw_spatial(s, tf=None, sf=None):
    if isinstance(s, PointsTo):
        return PointsTo(rw_term(s.addr, tf, sf), rw_term(s.value, tf, sf))
    return Seg(
        rw_term(s.base, tf, sf), rw_term(s.lo, tf, sf), rw_term(s.hi, tf, sf), rw_fexpr(s.fn, tf, sf)
    )


def rw_heap(h: SymbolicHeap, tf=None, sf=None) -> SymbolicHeap:
    return SymbolicHeap(
        tuple(rw_atom(a, tf, sf) for a in h.pure), tuple(rw_spatial(s, tf, sf) for s in h.spatial)
    )


def map_fexpr_terms(f, fn):
    return rw_fexpr(f, fn)


def fexpr_terms(f):
    if isinstance(f, Lam):
        yield f.body
    elif isinstance(f, Eta):
        for a in f.cond:
            yield from atom_terms(a)
        yield from fexpr_terms(f.then)
        yield from fexpr_terms(f.orelse)
    elif isinstance(f, Collective):
        yield from fexpr_terms(f.chain)
        yield from fexpr_terms(f.base)
        yield f.count


def atom_terms(a):
    if isinstance(a, FunDef):
        yield from fexpr_terms(a.fn)
    else:
        yield a.left
        yield a.right


def all_subterms(t):
    yield t
    if isinstance(t, Op):
        for a in t.args:
            yield from all_subterms(a)
    elif isinstance(t, App):
        for u in fexpr_terms(t.fn):
            yield from all_subterms(u)
        yield from all_subterms(t.arg)


def heap_terms(h: SymbolicHeap):
    for a in h.pure:
        for t in atom_terms(a):
            yield from all_subterms(t)
    for s in h.spatial:
        if isinstance(s, PointsTo):
            ts = (s.addr, s.value)
        else:
            ts = (s.base, s.lo, s.hi) + tuple(fexpr_terms(s.fn))
        for t in ts:
            yield from all_subterms(t)


def fexpr_symbols(f, out: set):
    if isinstance(f, FSym):
        out.add(f.name)
    elif isinstance(f, Eta):
        fexpr_symbols(f.then, out)
        fexpr_symbols(f.orelse, out)
        for a in f.cond:
            for t in atom_terms(a):
                _term_symbols(t, out)
    elif isinstance(f, Lam):
        _term_symbols(f.body, out)
    elif isinstance(f, Collective):
        fexpr_symbols(f.chain, out)
        fexpr_symbols(f.base, out)
    return out


def _term_symbols(t, out: set):
    for u in all_subterms(t):
        if isinstance(u, App):
            fexpr_symbols(u.fn, out)


def heap_symbols(h: SymbolicHeap) -> set:
    out: set = set()
    for a in h.pure:
        if isinstance(a, FunDef):
            out.add(a.name)
        for t in atom_terms(a):
            _term_symbols(t, out)
        if isinstance(a, FunDef):
            fexpr_symbols(a.fn, out)
    for s in h.spatial:
        if isinstance(s, Seg):
            fexpr_symbols(s.fn, out)
        for t in (s.addr, s.value) if isinstance(s, PointsTo) else (s.base, s.lo, s.hi):
            _term_symbols(t, out)
    return out


# ---------------------------------------------------------------------------
# substitution and renaming


def subst(h: SymbolicHeap, v, e) -> SymbolicHeap:
    """Replace free occurrences of the variable term ``v`` by ``e``."""
    return rw_heap(h, lambda t: e if t == v else None)


def subst_term(t, v, e):
    return rw_term(t, lambda u: e if u == v else None)


def subst_fexpr(f, v, e):
    return rw_fexpr(f, lambda u: e if u == v else None)


def subst_atom(a, v, e):
    return rw_atom(a, lambda u: e if u == v else None)


def instantiate(f, x):
    """``f(x)`` one level down: the body/condition with the index replaced."""
    if isinstance(f, Lam):
        return subst_term(f.body, Idx(f.index), x)
    raise TypeError(f)


def _tag(i) -> str:
    if isinstance(i, LVar):
        return i.name.replace("'", "")
    if isinstance(i, Const):
        return str(i.value)
    if isinstance(i, (Var, Idx)):
        return i.name
    return str(i)


def rename(i, h: SymbolicHeap, shared=frozenset()) -> SymbolicHeap:
    """Instantiate ``tid`` to ``i`` and make every thread-private name unique to ``i``.

    Private program variables, non-global primed variables and function
    symbols defined in ``h`` get an ``@tag`` suffix; shared variables, array
    bases, launch constants and undefined (initial-content) symbols are left
    alone.  Already-tagged names are untouched, so renaming is idempotent.
    """
    tag = _tag(i)
    defined = {n for n in thread_dependent(h, shared) if "@" not in n}

    def tf(t):
        if isinstance(t, Tid):
            return i
        if t == i:
            return t
        if isinstance(t, Var) and "@" not in t.name and t.name not in shared:
            return Var(f"{t.name}@{tag}")
        if isinstance(t, LVar) and not t.glob and "@" not in t.name:
            return LVar(f"{t.name}@{tag}")
        return None

    def sf(name):
        return f"{name}@{tag}" if name in defined else name

    return rw_heap(h, tf, sf)


def _private_term(t, shared) -> bool:
    if isinstance(t, Tid):
        return True
    if isinstance(t, Var):
        return "@" not in t.name and t.name not in shared
    if isinstance(t, LVar):
        return not t.glob and "@" not in t.name
    return False


def thread_dependent(h: SymbolicHeap, shared=frozenset()) -> set[str]:
    """Defined symbols whose meaning depends on the executing thread.

    A definition is thread-dependent when it mentions ``tid``, an untagged
    private variable or an untagged existential, or refers to another
    thread-dependent symbol.
    """
    defs = h.defs()
    deps = {}
    out = set()
    for name, fn in defs.items():
        syms = fexpr_symbols(fn, set())
        deps[name] = syms & defs.keys()
        if any(_private_term(t, shared) for u in fexpr_terms(fn) for t in all_subterms(u)):
            out.add(name)
    changed = True
    while changed:
        changed = False
        for name, ds in deps.items():
            if name not in out and ds & out:
                out.add(name)
                changed = True
    return out


def private_names(h: SymbolicHeap) -> set[str]:
    return {t.name for t in heap_terms(h) if isinstance(t, Var)}


# ---------------------------------------------------------------------------
# evaluation against concrete models


class Unknown(Exception):
    """Evaluation needs the value of an unassigned existential."""

    def __init__(self, key):
        super().__init__(key)
        self.key = key


class FormulaEvalError(Exception):
    pass


class SatisfactionUndetermined(Exception):
    """The finite-domain search could not decide satisfaction."""


@dataclass
class Model:
    stack: Mapping  # private program variables
    tid: int
    sizes: Mapping
    locs: Mapping  # Loc name -> base address
    heap: Mapping = field(default_factory=dict)
    defs: Mapping = field(default_factory=dict)
    lvals: dict = field(default_factory=dict)  # LVar -> int
    cells: dict = field(default_factory=dict)  # (symbol, index) -> int
    shared: Mapping = field(default_factory=dict)  # shared scalars -> value
    thread_stacks: Mapping | None = None  # tid -> private stack (Collective)

    def fork(self, key, value) -> Model:
        m = Model(
            self.stack, self.tid, self.sizes, self.locs, self.heap, self.defs,
            dict(self.lvals), dict(self.cells), self.shared, self.thread_stacks,
        )
        if key[0] == "lvar":
            m.lvals[key[1]] = value
        else:
            m.cells[(key[1], key[2])] = value
        return m


def eval_term(t, m: Model, env: Mapping = {}) -> int:
    if isinstance(t, Const):
        return t.value
    if isinstance(t, Var):
        name = t.name
        if "@" in name:
            base, tag = name.split("@", 1)
            if tag in env and m.thread_stacks is not None:
                st = m.thread_stacks.get(env[tag], {})
                if base in st:
                    return st[base]
        if name in m.stack:
            return m.stack[name]
        if name in m.shared:
            return m.shared[name]
        raise FormulaEvalError(f"unbound variable {name}")
    if isinstance(t, Tid):
        return m.tid
    if isinstance(t, Idx):
        try:
            return env[t.name]
        except KeyError:
            raise FormulaEvalError(f"unbound index {t.name}") from None
    if isinstance(t, LVar):
        if t in m.lvals:
            return m.lvals[t]
        raise Unknown(("lvar", t))
    if isinstance(t, Size):
        try:
            return m.sizes[t.array]
        except KeyError:
            raise FormulaEvalError(f"unknown array {t.array}") from None
    if isinstance(t, Loc):
        try:
            return m.locs[t.name]
        except KeyError:
            raise FormulaEvalError(f"unknown location {t.name}") from None
    if isinstance(t, Op):
        vals = [eval_term(a, m, env) for a in t.args]
        try:
            return apply_op(t.op, vals)
        except ZeroDivisionError:
            raise FormulaEvalError("division by zero") from None
    if isinstance(t, App):
        return eval_fn(t.fn, eval_term(t.arg, m, env), m, env)
    raise FormulaEvalError(f"cannot evaluate {t!r}")


def eval_atom(a, m: Model, env: Mapping = {}) -> bool:
    if isinstance(a, FunDef):
        return True
    left = eval_term(a.left, m, env)
    right = eval_term(a.right, m, env)
    if isinstance(a, Equal):
        return left == right
    if isinstance(a, NotEqual):
        return left != right
    return left <= right


def _layers(f, base=None):
    """Eta layers of a chain, newest first, down to ``base`` or a non-eta."""
    out = []
    while isinstance(f, Eta) and f != base:
        out.append(f)
        f = f.orelse
    return out, f


def eval_fn(f, j: int, m: Model, env: Mapping = {}) -> int:
    if isinstance(f, FSym):
        d = m.defs.get(f.name)
        if d is not None:
            return eval_fn(d, j, m, env)
        if (f.name, j) in m.cells:
            return m.cells[(f.name, j)]
        raise Unknown(("cell", f.name, j))
    if isinstance(f, Lam):
        return eval_term(f.body, m, {**env, f.index: j})
    if isinstance(f, Eta):
        inner = {**env, f.index: j}
        if all(eval_atom(a, m, inner) for a in f.cond):
            return eval_fn(f.then, j, m, env)
        return eval_fn(f.orelse, j, m, env)
    if isinstance(f, Collective):
        n = eval_term(f.count, m, env)
        for t in range(max(n, 0)):
            tenv = {**env, f.tvar: t}
            if _writes(f.chain, f.base, j, m, tenv):
                return eval_fn(f.chain, j, m, tenv)
        return eval_fn(f.base, j, m, env)
    raise FormulaEvalError(f"cannot apply {f!r}")


def _writes(chain, base, j, m, env) -> bool:
    f = chain
    while isinstance(f, (Eta, FSym)) and f != base:
        if isinstance(f, FSym):
            d = m.defs.get(f.name)
            if d is None:
                return False
            f = d
            continue
        if all(eval_atom(a, m, {**env, f.index: j}) for a in f.cond):
            return True
        f = f.orelse
    return False


def shared_layout(sigma):
    """Locations and heap cells for a concrete shared state.

    Shared scalars, which live on the shared stack concretely, are given
    one-cell locations after the arrays so heaps can describe them as cells.
    """
    locs = {}
    heap = dict(sigma.heap)
    top = max([0, *heap.keys()]) + 2
    for name, val in sorted(sigma.stack.items()):
        if name in sigma.sizes:
            locs[name] = val
        else:
            locs[name] = top
            heap[top] = val
            top += 2
    return locs, heap


def model_of(tau, sigma, thread_stacks=None) -> Model:
    locs, heap = shared_layout(sigma)
    return Model(
        stack=dict(tau.stack), tid=tau.tid, sizes=dict(sigma.sizes), locs=locs, heap=heap,
        thread_stacks=thread_stacks,
    )


def eval_fexpr(f, tau, sigma, index: int, defs: Mapping | None = None, lvals=None,
               cells=None, thread_stacks=None) -> int:
    """Value at ``index`` of the function expression ``f`` in thread state ``tau``."""
    m = model_of(tau, sigma, thread_stacks)
    m.defs = dict(defs or {})
    m.lvals = dict(lvals or {})
    m.cells = dict(cells or {})
    try:
        return eval_fn(f, index, m)
    except Unknown as u:
        raise FormulaEvalError(f"unbound existential {u.key}") from None


# ---------------------------------------------------------------------------
# satisfaction


DEFAULT_DOMAIN = range(-8, 9)


def satisfies(tau, sigma, h: SymbolicHeap, domain=DEFAULT_DOMAIN, budget: int = 20_000,
              model: Model | None = None) -> bool:
    """Does the concrete state satisfy ``h``?

    The shared heap (plus one cell per shared scalar) is the spatial model.
    Primed variables and unknown array contents are existentials, searched
    over ``domain``; values forced by an equation are tried first.  Raises
    ``SatisfactionUndetermined`` when the search exceeds ``budget`` nodes.
    """
    m = model or model_of(tau, sigma)
    m.defs = {**m.defs, **h.defs()}
    cons = _constraints(h)
    counter = [0]
    return _search(m, cons, list(domain), counter, budget)


def _constraints(h: SymbolicHeap):
    cons = []
    for s in h.spatial:
        cons.append(("foot", h.spatial))
        break
    else:
        cons.append(("foot", ()))
    for a in h.pure:
        if isinstance(a, FunDef):
            continue
        cons.append(("atom", a))
    for s in h.spatial:
        cons.append(("cell", s))
    return cons


def _footprint(spatial, m: Model):
    cells = []
    for s in spatial:
        if isinstance(s, PointsTo):
            cells.append([eval_term(s.addr, m)])
        else:
            b, lo, hi = (eval_term(x, m) for x in (s.base, s.lo, s.hi))
            cells.append([b + j for j in range(lo, hi + 1)])
    return cells


def _check(con, m: Model):
    """Returns True/False, or raises Unknown."""
    kind, x = con
    if kind == "foot":
        seen = set()
        for cs in _footprint(x, m):
            for c in cs:
                if c in seen:
                    return False
                seen.add(c)
        return seen == set(m.heap)
    if kind == "atom":
        try:
            return eval_atom(x, m)
        except FormulaEvalError:
            return False
    for d in _cell_diffs(x, m):
        if d() != 0:
            return False
    return True


def _cell_diffs(s, m: Model):
    """Thunks computing (formula value - heap value) for each cell of ``s``."""
    if isinstance(s, PointsTo):
        addr = eval_term(s.addr, m)
        if addr not in m.heap:
            return [lambda: 1]
        return [lambda: eval_term(s.value, m) - m.heap[addr]]
    b, lo, hi = (eval_term(x, m) for x in (s.base, s.lo, s.hi))
    out = []
    for j in range(lo, hi + 1):
        if b + j not in m.heap:
            return [lambda: 1]
        out.append(lambda j=j: eval_fn(s.fn, j, m) - m.heap[b + j])
    return out


def _diff_fns(con, m: Model):
    """Equation-like views of a constraint: callables model -> difference."""
    kind, x = con
    if kind == "atom" and isinstance(x, Equal):
        return [lambda mm: eval_term(x.left, mm) - eval_term(x.right, mm)]
    if kind == "cell":
        out = []
        if isinstance(x, PointsTo):
            def d(mm, s=x):
                return eval_term(s.value, mm) - mm.heap.get(eval_term(s.addr, mm), 0)
            out.append(d)
        else:
            try:
                b, lo, hi = (eval_term(t, m) for t in (x.base, x.lo, x.hi))
            except (Unknown, FormulaEvalError):
                return []
            for j in range(lo, hi + 1):
                if b + j in m.heap:
                    out.append(lambda mm, j=j, s=x, b=b: eval_fn(s.fn, j, mm) - mm.heap[b + j])
        return out
    return []


def _forced(key, cons, m: Model) -> list[int] | None:
    """Values forced for ``key`` by an affine equation in which it is the only unknown.

    Returns [] when an equation has no solution, None when nothing forces it.
    """
    for con in cons:
        for d in _diff_fns(con, m):
            try:
                pts = [(x, d(m.fork(key, x))) for x in (0, 1, 2, -3)]
            except (Unknown, FormulaEvalError):
                continue
            slope = pts[1][1] - pts[0][1]
            if slope == 0:
                continue
            if any(y != pts[0][1] + slope * x for x, y in pts):
                continue
            if (-pts[0][1]) % slope:
                return []
            return [-pts[0][1] // slope]
    return None


def _search(m: Model, cons, domain, counter, budget) -> bool:
    counter[0] += 1
    if counter[0] > budget:
        raise SatisfactionUndetermined("existential search exceeded its budget")
    key = None
    for con in cons:
        try:
            if not _check(con, m):
                return False
        except Unknown as u:
            if key is None:
                key = u.key
        except FormulaEvalError:
            return False
    if key is None:
        return True
    forced = _forced(key, cons, m)
    values = forced if forced is not None else domain
    for v in values:
        if _search(m.fork(key, v), cons, domain, counter, budget):
            return True
    return False


# ---------------------------------------------------------------------------
# simplification


def fold_term(t):
    def fn(u):
        if isinstance(u, Op):
            args = tuple(fold_term(a) for a in u.args)
            if all(isinstance(a, Const) for a in args):
                try:
                    return Const(apply_op(u.op, [a.value for a in args]))
                except ZeroDivisionError:
                    return Op(u.op, args)
            if u.op == "+" and isinstance(args[1], Const) and args[1].value == 0:
                return args[0]
            if u.op == "+" and isinstance(args[0], Const) and args[0].value == 0:
                return args[1]
            if u.op == "-" and isinstance(args[1], Const) and args[1].value == 0:
                return args[0]
            if u.op == "*" and any(isinstance(a, Const) and a.value == 1 for a in args):
                return args[1] if isinstance(args[0], Const) and args[0].value == 1 else args[0]
            return Op(u.op, args)
        if isinstance(u, App):
            return App(simplify_fexpr(u.fn), fold_term(u.arg))
        return None

    return map_term(t, fn)


def _trivial(a) -> bool | None:
    """Truth value of an atom decidable without a model, else None."""
    if isinstance(a, FunDef):
        return None
    l, r = a.left, a.right
    if isinstance(l, Const) and isinstance(r, Const):
        if isinstance(a, Equal):
            return l.value == r.value
        if isinstance(a, NotEqual):
            return l.value != r.value
        return l.value <= r.value
    if l == r:
        return not isinstance(a, NotEqual)
    return None


def simplify_atom(a):
    if isinstance(a, FunDef):
        return FunDef(a.name, simplify_fexpr(a.fn))
    return type(a)(fold_term(a.left), fold_term(a.right))


def simplify_cond(cond) -> tuple | None:
    """Simplified conjunction, or None when it is trivially false."""
    out = []
    for a in cond:
        a = simplify_atom(a)
        t = _trivial(a)
        if t is False:
            return None
        if t is True or a in out:
            continue
        out.append(a)
    return tuple(out)


def simplify_fexpr(f):
    if isinstance(f, FSym):
        return f
    if isinstance(f, Lam):
        return Lam(f.index, fold_term(f.body))
    if isinstance(f, Collective):
        return Collective(f.tvar, simplify_fexpr(f.chain), simplify_fexpr(f.base), fold_term(f.count))
    cond = simplify_cond(f.cond)
    orelse = simplify_fexpr(f.orelse)
    if cond is None:
        return orelse
    then = simplify_fexpr(f.then)
    if not cond:
        return then
    # drop older layers that this one fully shadows
    while isinstance(orelse, Eta):
        older = set(_reindex(orelse.cond, orelse.index, f.index))
        if older >= set(cond):
            orelse = orelse.orelse
        else:
            break
    return Eta(f.index, cond, then, orelse)


def _reindex(cond, old: str, new: str) -> tuple:
    if old == new:
        return tuple(cond)
    return tuple(subst_atom(a, Idx(old), Idx(new)) for a in cond)


def simplify(h: SymbolicHeap) -> SymbolicHeap:
    pure = []
    for a in h.pure:
        a = simplify_atom(a)
        t = _trivial(a)
        if t is True or a in pure:
            continue
        if t is False:
            pure = [Equal(Const(0), Const(1))]
            break
        pure.append(a)
    spatial = []
    for s in h.spatial:
        if isinstance(s, PointsTo):
            spatial.append(PointsTo(fold_term(s.addr), fold_term(s.value)))
        else:
            spatial.append(Seg(fold_term(s.base), fold_term(s.lo), fold_term(s.hi), simplify_fexpr(s.fn)))
    return SymbolicHeap(tuple(pure), tuple(spatial))


# ---------------------------------------------------------------------------
# printing

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "%": 2}


def format_term(t, prec: int = 0) -> str:
    if isinstance(t, Const):
        return f"({t.value})" if t.value < 0 and prec > 0 else str(t.value)
    if isinstance(t, (Var, Idx)):
        return t.name
    if isinstance(t, LVar):
        s = t.name if "'" in t.name else t.name + "'"
        return "$" + s if t.glob else s
    if isinstance(t, Tid):
        return "tid"
    if isinstance(t, Size):
        return f"size({t.array})"
    if isinstance(t, Loc):
        return f"&{t.name}"
    if isinstance(t, App):
        fn = t.fn.name if isinstance(t.fn, FSym) else f"[{format_fexpr(t.fn)}]"
        return f"{fn}({format_term(t.arg)})"
    if isinstance(t, Op):
        if t.op == "neg":
            return f"-({format_term(t.args[0])})"
        if t.op in ("cos", "sqrt"):
            return f"{t.op}({format_term(t.args[0])})"
        p = _PREC[t.op]
        s = f"{format_term(t.args[0], p)} {t.op} {format_term(t.args[1], p + 1)}"
        return f"({s})" if p < prec else s
    raise TypeError(t)


def format_atom(a) -> str:
    if isinstance(a, FunDef):
        return f"{a.name} := {format_fexpr(a.fn)}"
    op = {Equal: "=", NotEqual: "!=", LessEq: "<="}[type(a)]
    return f"{format_term(a.left)} {op} {format_term(a.right)}"


def format_pure(atoms) -> str:
    return " & ".join(format_atom(a) for a in atoms) if atoms else "true"


def format_fexpr(f) -> str:
    if isinstance(f, FSym):
        return f.name
    if isinstance(f, Lam):
        return f"\\{f.index}. {format_term(f.body)}"
    if isinstance(f, Eta):
        return f"eta({f.index}. {format_pure(f.cond)}; {format_fexpr(f.then)}; {format_fexpr(f.orelse)})"
    if isinstance(f, Collective):
        return f"coll({f.tvar} < {format_term(f.count)}. {format_fexpr(f.chain)}; {format_fexpr(f.base)})"
    raise TypeError(f)


def format_spatial(s) -> str:
    if isinstance(s, PointsTo):
        return f"{format_term(s.addr)} |-> {format_term(s.value)}"
    name = s.base.name if isinstance(s.base, Loc) else "A"
    return (
        f"{format_term(s.base)} |-> {name}[{format_term(s.lo)}, {format_term(s.hi)} | "
        f"{format_fexpr(s.fn)}]"
    )


def format_heap(h: SymbolicHeap) -> str:
    sp = " * ".join(format_spatial(s) for s in h.spatial) if h.spatial else "emp"
    return f"{format_pure(h.pure)} : {sp}"


# ---------------------------------------------------------------------------
# parsing (test fixtures and report round-trips)

_FTOK = re.compile(
    r"\s*(?:(?P<num>\d+)|(?P<lvar>\$?[A-Za-z_][A-Za-z_0-9@#]*'[A-Za-z_0-9@#]*)"
    r"|(?P<id>[A-Za-z_][A-Za-z_0-9@#]*)"
    r"|(?P<op>\|->|:=|!=|<=|[-+*/%&=<(),.;:\[\]|\\$]))"
)


class FormulaSyntaxError(ValueError):
    pass


class _FParser:
    def __init__(self, text: str):
        self.toks = []
        pos = 0
        text = text.rstrip()
        while pos < len(text):
            mt = _FTOK.match(text, pos)
            if mt is None or mt.end() == pos:
                raise FormulaSyntaxError(f"bad character at {pos}: {text[pos:pos + 10]!r}")
            self.toks.append((mt.lastgroup, mt.group(mt.lastgroup)))
            pos = mt.end()
        self.toks.append(("eof", ""))
        self.i = 0
        self.bound: list[str] = []

    @property
    def tok(self):
        return self.toks[self.i]

    def at(self, s):
        return self.tok[1] == s and self.tok[0] in ("op", "id")

    def accept(self, s):
        if self.at(s):
            self.i += 1
            return True
        return False

    def expect(self, s):
        if not self.accept(s):
            raise FormulaSyntaxError(f"expected {s!r}, found {self.tok[1]!r}")

    def heap(self) -> SymbolicHeap:
        pure = self.pure()
        spatial = ()
        if self.accept(":"):
            spatial = self.spatial()
        if self.tok[0] != "eof":
            raise FormulaSyntaxError(f"trailing input at {self.tok[1]!r}")
        return SymbolicHeap(pure, spatial)

    def pure(self) -> tuple:
        if self.accept("true"):
            return ()
        atoms = [self.atom()]
        while self.accept("&"):
            atoms.append(self.atom())
        return tuple(atoms)

    def atom(self):
        if self.tok[0] == "id" and self.toks[self.i + 1][1] == ":=":
            name = self.tok[1]
            self.i += 2
            return FunDef(name, self.fexpr())
        left = self.term()
        for s, cls in (("=", Equal), ("!=", NotEqual), ("<=", LessEq)):
            if self.accept(s):
                return cls(left, self.term())
        raise FormulaSyntaxError(f"expected comparison at {self.tok[1]!r}")

    def spatial(self) -> tuple:
        if self.accept("emp"):
            return ()
        out = [self.cell()]
        while self.accept("*"):
            out.append(self.cell())
        return tuple(out)

    def cell(self):
        addr = self.term()
        self.expect("|->")
        if self.tok[0] == "id" and self.toks[self.i + 1][1] == "[":
            save = self.i
            self.i += 2
            try:
                lo = self.term()
                self.expect(",")
                hi = self.term()
                self.expect("|")
                fn = self.fexpr()
                self.expect("]")
                return Seg(addr, lo, hi, fn)
            except FormulaSyntaxError:
                self.i = save
        if self.at("\\") or self.at("eta") or self.at("coll"):
            fn = self.fexpr()
            name = addr.name if isinstance(addr, Loc) else getattr(addr, "name", "")
            base = addr if isinstance(addr, Loc) else Loc(name)
            return Seg(base, Const(0), sub(Size(name), Const(1)), fn)
        return PointsTo(addr, self.term())

    def fexpr(self):
        if self.accept("\\"):
            k = self.tok[1]
            self.i += 1
            self.expect(".")
            self.bound.append(k)
            body = self.term()
            self.bound.pop()
            return Lam(k, body)
        if self.accept("eta"):
            self.expect("(")
            k = self.tok[1]
            self.i += 1
            self.expect(".")
            self.bound.append(k)
            cond = self.pure()
            self.bound.pop()
            self.expect(";")
            then = self.fexpr()
            self.expect(";")
            orelse = self.fexpr()
            self.expect(")")
            return Eta(k, cond, then, orelse)
        if self.accept("coll"):
            self.expect("(")
            t = self.tok[1]
            self.i += 1
            self.expect("<")
            count = self.term()
            self.expect(".")
            self.bound.append(t)
            chain = self.fexpr()
            self.bound.pop()
            self.expect(";")
            base = self.fexpr()
            self.expect(")")
            return Collective(t, chain, base, count)
        if self.tok[0] == "id":
            name = self.tok[1]
            self.i += 1
            return FSym(name)
        raise FormulaSyntaxError(f"expected function expression at {self.tok[1]!r}")

    def term(self):
        left = self.mul()
        while self.tok[1] in ("+", "-") and self.tok[0] == "op":
            op = self.tok[1]
            self.i += 1
            left = Op(op, (left, self.mul()))
        return left

    def mul(self):
        left = self.unary()
        while self.tok[1] in ("*", "/", "%") and self.tok[0] == "op":
            # '*' directly before a cell is the separating conjunction
            if self.tok[1] == "*" and self._star_is_sep():
                break
            op = self.tok[1]
            self.i += 1
            left = Op(op, (left, self.unary()))
        return left

    def _star_is_sep(self) -> bool:
        j = self.i + 1
        depth = 0
        while self.toks[j][0] != "eof":
            s = self.toks[j][1]
            if s in ("(", "["):
                depth += 1
            elif s in (")", "]"):
                if depth == 0:
                    return False
                depth -= 1
            elif s == "|->" and depth == 0:
                return True
            elif s in ("*", ":", "&", ";", ",") and depth == 0:
                return False
            j += 1
        return False

    def unary(self):
        if self.accept("-"):
            if self.tok[0] == "num":
                v = int(self.tok[1])
                self.i += 1
                return Const(-v)
            self.expect("(")
            e = self.term()
            self.expect(")")
            return Op("neg", (e,))
        return self.primary()

    def primary(self):
        kind, s = self.tok
        if kind == "num":
            self.i += 1
            return Const(int(s))
        if kind == "lvar":
            self.i += 1
            glob = s.startswith("$")
            name = s.lstrip("$")
            if name.endswith("'"):
                name = name[:-1]
            return LVar(name, glob)
        if self.accept("("):
            e = self.term()
            self.expect(")")
            return e
        if self.accept("&"):
            name = self.tok[1]
            self.i += 1
            return Loc(name)
        if self.accept("["):
            f = self.fexpr()
            self.expect("]")
            self.expect("(")
            a = self.term()
            self.expect(")")
            return App(f, a)
        if kind == "id":
            self.i += 1
            if s == "tid":
                return Tid()
            if s == "size":
                self.expect("(")
                name = self.tok[1]
                self.i += 1
                self.expect(")")
                return Size(name)
            if s in ("cos", "sqrt"):
                self.expect("(")
                a = self.term()
                self.expect(")")
                return Op(s, (a,))
            if self.at("("):
                self.i += 1
                a = self.term()
                self.expect(")")
                return App(FSym(s), a)
            if s in self.bound:
                return Idx(s)
            return Var(s)
        raise FormulaSyntaxError(f"unexpected {s!r}")


def parse_heap(text: str) -> SymbolicHeap:
    return _FParser(text).heap()


def parse_term(text: str, bound=()):
    p = _FParser(text)
    p.bound = list(bound)
    t = p.term()
    if p.tok[0] != "eof":
        raise FormulaSyntaxError(f"trailing input at {p.tok[1]!r}")
    return t


def parse_fexpr(text: str):
    p = _FParser(text)
    f = p.fexpr()
    if p.tok[0] != "eof":
        raise FormulaSyntaxError(f"trailing input at {p.tok[1]!r}")
    return f
