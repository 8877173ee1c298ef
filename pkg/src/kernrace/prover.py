"""Incomplete entailment checker over linear integer arithmetic.

Queries are decided by refutation: the context plus the negated goal is
flattened into literals over linear terms and disjunctions, and a small
branch-and-check search runs integer Fourier-Motzkin elimination (with gcd
tightening) on each branch.  Everything the linear fragment cannot express
is abstracted:

* nonlinear operations and applications of undefined array symbols become
  fresh integer unknowns, one per syntactic term, with Ackermann-style
  congruence disjunctions between same-headed terms;
* applications of lambdas are beta-reduced, eta updates split into the
  "condition holds" and "condition fails" cases, collective barrier commits
  split into "some writer" and "no writer" cases.

Only refutations are trusted: ``unsat`` / proven is sound, ``sat`` may be an
artefact of the abstraction or of reasoning over the rationals.  Running out
of budget answers ``unknown``, which callers treat like ``sat``.
"""

from __future__ import annotations

import functools
import math
import os
import shutil
import subprocess
import threading
from dataclasses import dataclass, field
from itertools import count

from kernrace.frontend import And, Eq, Lt, Not
from kernrace.symheap import (
    Collective, Equal, Eta, FSym, FunDef, Lam, LessEq, NotEqual, PointsTo,
    SymbolicHeap, fold_term, less, rw_atom, rw_fexpr, simplify_fexpr, subst_atom, subst_term,
)
from kernrace.terms import App, Const, Idx, Loc, LVar, Op, Size, Tid, Var

DEFAULT_BUDGET = 10_000
SOLVER_ENV = "KERNRACE_SOLVER"

SAT, UNSAT, UNKNOWN = "sat", "unsat", "unknown"


class BudgetExceeded(Exception):
    pass


@dataclass(frozen=True)
class ProofResult:
    proven: bool
    reason: str = ""

    def __bool__(self) -> bool:
        return self.proven


PROVEN = ProofResult(True)


# ---------------------------------------------------------------------------
# boolean guards and atom negation


def negate_atom(a) -> list[tuple]:
    """Alternatives (each a conjunction) equivalent to the negation of ``a``."""
    if isinstance(a, Equal):
        return [(NotEqual(a.left, a.right),)]
    if isinstance(a, NotEqual):
        return [(Equal(a.left, a.right),)]
    if isinstance(a, LessEq):
        return [(less(a.right, a.left),)]
    raise TypeError(f"cannot negate {a!r}")


def negate_conj(atoms) -> list[tuple]:
    out = []
    for a in atoms:
        out.extend(negate_atom(a))
    return out


def bool_dnf(b, positive: bool = True) -> list[tuple]:
    """Disjunctive normal form of a kernel guard as alternatives of atoms."""
    if isinstance(b, Lt):
        return [(less(b.left, b.right),)] if positive else [(LessEq(b.right, b.left),)]
    if isinstance(b, Eq):
        return [(Equal(b.left, b.right),)] if positive else [(NotEqual(b.left, b.right),)]
    if isinstance(b, Not):
        return bool_dnf(b.arg, not positive)
    if isinstance(b, And):
        left, right = bool_dnf(b.left, positive), bool_dnf(b.right, positive)
        if positive:
            return [x + y for x in left for y in right]
        return left + right
    raise TypeError(f"not a guard: {b!r}")


# ---------------------------------------------------------------------------
# linear forms


class Linear:
    """``sum(coeffs[x] * x) + const`` with integer coefficients."""

    __slots__ = ("coeffs", "const")

    def __init__(self, coeffs=None, const: int = 0):
        self.coeffs = {k: v for k, v in (coeffs or {}).items() if v}
        self.const = const

    def __add__(self, other: Linear) -> Linear:
        c = dict(self.coeffs)
        for k, v in other.coeffs.items():
            c[k] = c.get(k, 0) + v
        return Linear(c, self.const + other.const)

    def scale(self, n: int) -> Linear:
        return Linear({k: v * n for k, v in self.coeffs.items()}, self.const * n)

    def __sub__(self, other: Linear) -> Linear:
        return self + other.scale(-1)

    @property
    def is_const(self) -> bool:
        return not self.coeffs

    def key(self):
        return frozenset(self.coeffs.items())

    def __repr__(self) -> str:
        return f"Linear({self.coeffs}, {self.const})"


# ---------------------------------------------------------------------------
# query construction: expansion of applications and nonlinear terms


@dataclass
class _Or:
    alts: list  # list of lists of items (atoms or _Or)


@dataclass
class _Query:
    defs: dict
    budget: list
    items: list = field(default_factory=list)
    memo: dict = field(default_factory=dict)   # term -> placeholder
    uninterp: dict = field(default_factory=dict)  # head -> [(args, placeholder)]
    fresh: count = field(default_factory=lambda: count(1))
    depth: int = 0
    opaque: bool = False  # applications stay uninterpreted, no congruence
    known: frozenset = frozenset()  # top-level atoms, true in every branch

    def tick(self, n: int = 1):
        self.budget[0] -= n
        if self.budget[0] < 0:
            raise BudgetExceeded

    def new_var(self, hint: str) -> LVar:
        return LVar(f"#{hint}{next(self.fresh)}")


def _resolve(fn, defs):
    seen = 0
    while isinstance(fn, FSym) and fn.name in defs:
        fn = defs[fn.name]
        seen += 1
        if seen > 10_000:
            raise BudgetExceeded
    return fn


def _expand(t, q: _Query):
    """Return an App-free term; side conditions are appended to ``q.items``."""
    if isinstance(t, (Const, Var, Tid, Size, Loc, LVar, Idx)):
        return t
    if isinstance(t, Op):
        args = tuple(_expand(a, q) for a in t.args)
        t = fold_term(Op(t.op, args))
        if not isinstance(t, Op):
            return t
        if t.op in ("+", "-", "neg"):
            return t
        if t.op == "*" and any(isinstance(a, Const) for a in t.args):
            return t
        key = ("op", t.op, args)
        if key in q.memo:
            return q.memo[key]
        v = q.new_var(t.op if t.op.isalpha() else "nl")
        q.memo[key] = v
        q.uninterp.setdefault(("op", t.op), []).append((args, v))
        if t.op == "sqrt":
            q.items.append(LessEq(Const(0), v))
        elif t.op == "cos":
            q.items.extend([LessEq(Const(-1000), v), LessEq(v, Const(1000))])
        return v
    if isinstance(t, App):
        q.tick()
        arg = _expand(t.arg, q)
        if q.opaque:
            key = ("opaque", t.fn, arg)
            if key not in q.memo:
                q.memo[key] = q.new_var("a")
            return q.memo[key]
        fn = _resolve(t.fn, q.defs)
        if isinstance(fn, Lam):
            return _expand(subst_term(fn.body, Idx(fn.index), arg), q)
        key = ("app", fn, arg)
        if key in q.memo:
            return q.memo[key]
        if isinstance(fn, FSym):
            v = q.new_var("u")
            q.memo[key] = v
            q.uninterp.setdefault(("fn", fn.name), []).append(((arg,), v))
            return v
        v = q.new_var("r")
        q.memo[key] = v
        q.depth += 1
        if q.depth > 200:
            raise BudgetExceeded
        try:
            if isinstance(fn, Eta):
                q.items.append(_Or(_eta_cases(fn, arg, v, q)))
            elif isinstance(fn, Collective):
                q.items.append(_Or(_collective_cases(fn, arg, v, q)))
            else:
                raise TypeError(f"cannot apply {fn!r}")
        finally:
            q.depth -= 1
        return v
    raise TypeError(f"unexpected term {t!r}")


def _sub_items(atoms, q: _Query) -> list:
    """Expand atoms in a nested scope; returns the item list for one branch."""
    saved = q.items
    q.items = []
    try:
        for a in atoms:
            _add_atom(a, q)
        return q.items
    finally:
        q.items = saved


def _eta_cases(fn: Eta, arg, v, q: _Query) -> list:
    # conjuncts already asserted at top level can neither fail nor add anything
    cond = [c for c in (subst_atom(a, Idx(fn.index), arg) for a in fn.cond) if c not in q.known]
    cases = [_sub_items(cond + [Equal(v, App(fn.then, arg))], q)]
    for alt in negate_conj(cond):
        cases.append(_sub_items(list(alt) + [Equal(v, App(fn.orelse, arg))], q))
    return cases


def _layer_conds(chain, base, defs):
    f = _resolve(chain, defs)
    out = []
    while isinstance(f, Eta) and f != base:
        out.append(f)
        f = _resolve(f.orelse, defs)
        if f == base:
            break
    return out


def _collective_cases(fn: Collective, arg, v, q: _Query) -> list:
    writer = q.new_var("w")
    tag = f"@{fn.tvar}"
    wtag = "@" + writer.name.lstrip("#")

    def inst(t):
        if t == Idx(fn.tvar):
            return writer
        if isinstance(t, Var) and t.name.endswith(tag):
            return Var(t.name[: -len(tag)] + wtag)
        if isinstance(t, LVar) and t.name.endswith(tag):
            return LVar(t.name[: -len(tag)] + wtag, t.glob)
        return None

    chain = rw_fexpr(fn.chain, inst)
    bound = [LessEq(Const(0), writer), less(writer, fn.count)]
    cases = []
    for layer in _layer_conds(chain, fn.base, q.defs):
        cond = [subst_atom(a, Idx(layer.index), arg) for a in layer.cond]
        cases.append(_sub_items(bound + cond + [Equal(v, App(chain, arg))], q))
    # no writer: instantiate "no thread's layer covers arg" at the thread an
    # equation k = e(t) singles out, or at thread 0 when none does
    none = [Equal(v, App(fn.base, arg))]
    blockers = []
    for n, layer in enumerate(_layer_conds(fn.chain, fn.base, q.defs)):
        t0 = _solve_writer(layer, fn.tvar)
        if t0 is None:
            t0 = Const(0)
        t0 = subst_term(t0, Idx(layer.index), arg)
        otag = f"@{writer.name.lstrip('#')}_{n}"

        def at_t0(t, t0=t0, otag=otag):
            if t == Idx(fn.tvar):
                return t0
            if isinstance(t, (Var, LVar)) and t.name.endswith(tag):
                return type(t)(t.name[: -len(tag)] + otag) if isinstance(t, Var) else LVar(
                    t.name[: -len(tag)] + otag, t.glob)
            return None

        cond = [rw_atom(subst_atom(a, Idx(layer.index), arg), at_t0) for a in layer.cond]
        alts = [[less(t0, Const(0))], [LessEq(fn.count, t0)]] + [list(x) for x in negate_conj(cond)]
        blockers.append(alts)
    items = _sub_items(none, q)
    for alts in blockers:
        items.append(_Or([_sub_items(alt, q) for alt in alts]))
    cases.append(items)
    return cases


def _lin_term(lin: Linear):
    t = Const(lin.const)
    for k, c in sorted(lin.coeffs.items(), key=lambda kv: _rank(kv[0])):
        t = Op("+", (t, k if c == 1 else Op("*", (Const(c), k))))
    return fold_term(t)


def _solve_writer(layer: Eta, tvar: str):
    """Thread id forced by an equation ``k = e(t)`` in the layer condition."""
    for a in layer.cond:
        if not isinstance(a, Equal):
            continue
        try:
            d = linearize(a.left) - linearize(a.right)
        except TypeError:
            continue
        c = d.coeffs.get(Idx(tvar), 0)
        if abs(c) != 1 or Idx(layer.index) not in d.coeffs:
            continue
        rest = Linear({k: v for k, v in d.coeffs.items() if k != Idx(tvar)}, d.const)
        return _lin_term(rest.scale(-c))
    return None


def _add_atom(a, q: _Query):
    if isinstance(a, FunDef):
        return
    q.items.append(type(a)(_expand(a.left, q), _expand(a.right, q)))


def _congruence(q: _Query):
    """Ackermann constraints between abstracted terms with the same head."""
    for group in q.uninterp.values():
        for x in range(len(group)):
            for y in range(x + 1, len(group)):
                (a1, v1), (a2, v2) = group[x], group[y]
                q.tick()
                alts = [[NotEqual(p, r)] for p, r in zip(a1, a2) if p != r]
                alts.append([Equal(v1, v2)])
                q.items.append(_Or(alts))


# ---------------------------------------------------------------------------
# Fourier-Motzkin over the integers


@functools.lru_cache(maxsize=1 << 16)
def _rank(t) -> str:
    """Stable ordering key for terms (``repr`` does not depend on hash seeds)."""
    return repr(t)


@functools.lru_cache(maxsize=1 << 16)
def linearize(t) -> Linear:
    """Linear form of ``t``; cached, so callers must not mutate the result."""
    if isinstance(t, Const):
        return Linear({}, t.value)
    if isinstance(t, Op):
        if t.op == "+":
            return linearize(t.args[0]) + linearize(t.args[1])
        if t.op == "-":
            return linearize(t.args[0]) - linearize(t.args[1])
        if t.op == "neg":
            return linearize(t.args[0]).scale(-1)
        if t.op == "*":
            a, b = (linearize(x) for x in t.args)
            if a.is_const:
                return b.scale(a.const)
            if b.is_const:
                return a.scale(b.const)
    if isinstance(t, (Op, App)):
        raise TypeError(f"nonlinear term reached the linear core: {t!r}")
    return Linear({t: 1}, 0)


# The search core keys linear forms by small ints: hashing ints is much
# cheaper than hashing term dataclasses.
_IDS: dict = {}
_TERMS: list = []


_IDS_LOCK = threading.Lock()


def _atom_id(t) -> int:
    i = _IDS.get(t)
    if i is None:
        with _IDS_LOCK:
            i = _IDS.get(t)
            if i is None:
                i = _IDS[t] = len(_TERMS)
                _TERMS.append(t)
    return i


@functools.lru_cache(maxsize=1 << 16)
def _diff(a) -> Linear:
    """``left - right`` of a comparison atom, keyed by atom ids."""
    d = linearize(a.left) - linearize(a.right)
    return Linear({_atom_id(k): v for k, v in d.coeffs.items()}, d.const)


@functools.lru_cache(maxsize=None)
def _var_rank(i: int) -> str:
    return _rank(_TERMS[i])


def _normalize_le(lin: Linear):
    """``lin <= 0`` tightened; returns (key, const) or False when trivially false, None when trivially true."""
    if lin.is_const:
        return None if lin.const <= 0 else False
    g = 0
    for v in lin.coeffs.values():
        g = math.gcd(g, v)
    coeffs = {k: v // g for k, v in lin.coeffs.items()}
    const = -((-lin.const) // g)  # ceil(const / g)
    return Linear(coeffs, const)


def fm_unsat(eqs: list[Linear], les: list[Linear], q: _Query, solved: list | None = None) -> bool:
    """True when ``eqs == 0`` and ``les <= 0`` have no integer solution (sound).

    Unit-coefficient equalities are eliminated by substitution; each
    ``(variable, value)`` pair is appended to ``solved`` in elimination order.
    """
    eqs = list(eqs)
    les = list(les)
    # equalities: substitute unit-coefficient variables, else split into two bounds
    while eqs:
        q.tick()
        e = eqs.pop()
        if e.is_const:
            if e.const != 0:
                return True
            continue
        g = 0
        for v in e.coeffs.values():
            g = math.gcd(g, v)
        if e.const % g:
            return True
        e = Linear({k: v // g for k, v in e.coeffs.items()}, e.const // g)
        unit = next((k for k, v in sorted(e.coeffs.items(), key=lambda kv: _var_rank(kv[0])) if abs(v) == 1), None)
        if unit is None:
            les.append(e)
            les.append(e.scale(-1))
            continue
        c = e.coeffs[unit]
        # unit = -(rest) / c
        rest = Linear({k: v for k, v in e.coeffs.items() if k != unit}, e.const).scale(-c)
        if solved is not None:
            solved.append((unit, rest))
        eqs = [_substitute(x, unit, rest) for x in eqs]
        les = [_substitute(x, unit, rest) for x in les]
    # inequalities
    store: dict = {}
    for lin in les:
        r = _normalize_le(lin)
        if r is False:
            return True
        if r is None:
            continue
        k = r.key()
        if k not in store or r.const > store[k].const:
            store[k] = r
    while True:
        if _opposite_conflict(store):
            return True
        vars_ = set()
        for lin in store.values():
            vars_.update(lin.coeffs)
        if not vars_:
            return False
        best, best_cost = None, None
        for x in sorted(vars_, key=_var_rank):
            pos = sum(1 for lin in store.values() if lin.coeffs.get(x, 0) > 0)
            neg = sum(1 for lin in store.values() if lin.coeffs.get(x, 0) < 0)
            cost = pos * neg - pos - neg
            if best_cost is None or cost < best_cost:
                best, best_cost = x, cost
        x = best
        pos = [lin for lin in store.values() if lin.coeffs.get(x, 0) > 0]
        neg = [lin for lin in store.values() if lin.coeffs.get(x, 0) < 0]
        nxt = {k: lin for k, lin in store.items() if x not in lin.coeffs}
        q.tick(1 + len(pos) * len(neg))
        for p in pos:
            for n in neg:
                a, b = p.coeffs[x], -n.coeffs[x]
                lin = p.scale(b) + n.scale(a)
                r = _normalize_le(lin)
                if r is False:
                    return True
                if r is None:
                    continue
                k = r.key()
                if k not in nxt or r.const > nxt[k].const:
                    nxt[k] = r
        store = nxt


def _opposite_conflict(store: dict) -> bool:
    for lin in store.values():
        neg_key = Linear({k: -v for k, v in lin.coeffs.items()}).key()
        other = store.get(neg_key)
        if other is not None and lin.const + other.const > 0:
            return True
    return False


def _substitute(lin: Linear, x, rest: Linear) -> Linear:
    c = lin.coeffs.get(x, 0)
    if not c:
        return lin
    base = Linear({k: v for k, v in lin.coeffs.items() if k != x}, lin.const)
    return base + rest.scale(c)


# ---------------------------------------------------------------------------
# branch-and-check search


@functools.lru_cache(maxsize=1 << 16)
def _trivially_false(a) -> bool:
    try:
        d = _diff(a)
    except TypeError:
        return False
    if not d.is_const:
        return False
    if isinstance(a, Equal):
        return d.const != 0
    if isinstance(a, NotEqual):
        return d.const == 0
    return d.const > 0


def _false_under(a, solved) -> bool:
    """Is atom ``a`` false once the solved equalities are substituted?"""
    if isinstance(a, _Or):
        return False
    try:
        d = _diff(a)
    except TypeError:
        return False
    for x, rest in solved:
        d = _substitute(d, x, rest)
    if not d.is_const:
        return False
    if isinstance(a, Equal):
        return d.const != 0
    if isinstance(a, NotEqual):
        return d.const == 0
    return d.const > 0


def _commit(alt, lits: list, ors: list) -> None:
    for x in alt:
        if isinstance(x, _Or):
            ors.append(list(x.alts))
        elif isinstance(x, NotEqual):
            ors.append([[y] for y in _diseq_alts(x)])
        else:
            lits.append(x)


def _search(lits: list, pending: list, q: _Query) -> bool:
    """True when the conjunction of ``lits`` and ``pending`` is unsatisfiable.

    Alternatives refuted by the equalities solved so far are pruned, and a
    disjunction left with one alternative is committed without branching.
    """
    q.tick()
    ors = [list(o.alts) for o in pending]
    base = list(lits)
    lits = []
    _commit(base, lits, ors)
    while True:
        eqs, les = [], []
        for a in lits:
            d = _diff(a)
            (eqs if isinstance(a, Equal) else les).append(d)
        solved: list = []
        if fm_unsat(eqs, les, q, solved):
            return True
        units, rest = [], []
        for alts in ors:
            alts = [alt for alt in alts if not any(
                _trivially_false(x) or _false_under(x, solved)
                for x in alt if not isinstance(x, _Or))]
            if not alts:
                return True
            (units if len(alts) == 1 else rest).append(alts)
        ors = rest
        if not units:
            break
        for alts in units:
            _commit(alts[0], lits, ors)
    if not ors:
        return False
    pick = min(range(len(ors)), key=lambda i: len(ors[i]))
    others = [_Or(o) for i, o in enumerate(ors) if i != pick]
    for alt in ors[pick]:
        new_lits, new_ors = list(lits), []
        _commit(alt, new_lits, new_ors)
        if not _search(new_lits, others + [_Or(o) for o in new_ors], q):
            return False
    return True


def _diseq_alts(a: NotEqual):
    return [less(a.left, a.right), less(a.right, a.left)]


def _split(items):
    lits, ors = [], []
    for x in items:
        (ors if isinstance(x, _Or) else lits).append(x)
    return lits, ors


# ---------------------------------------------------------------------------
# SMT-LIB export


def _smt_term(t, names: dict) -> str:
    if isinstance(t, Const):
        return str(t.value) if t.value >= 0 else f"(- {-t.value})"
    if isinstance(t, Op):
        if t.op == "neg":
            return f"(- {_smt_term(t.args[0], names)})"
        return f"({t.op} {_smt_term(t.args[0], names)} {_smt_term(t.args[1], names)})"
    if t not in names:
        names[t] = f"x{len(names)}"
    return names[t]


def _smt_formula(items, names: dict) -> str:
    parts = []
    for x in items:
        if isinstance(x, _Or):
            alts = [_smt_formula(alt, names) for alt in x.alts]
            parts.append("(or " + " ".join(alts) + ")" if alts else "false")
        else:
            l, r = _smt_term(x.left, names), _smt_term(x.right, names)
            if isinstance(x, Equal):
                parts.append(f"(= {l} {r})")
            elif isinstance(x, NotEqual):
                parts.append(f"(not (= {l} {r}))")
            else:
                parts.append(f"(<= {l} {r})")
    if not parts:
        return "true"
    return parts[0] if len(parts) == 1 else "(and " + " ".join(parts) + ")"


def to_smtlib(items) -> str:
    """SMT-LIB2 script asserting the (already abstracted) query items."""
    names: dict = {}
    body = _smt_formula(items, names)
    decls = "".join(f"(declare-const {n} Int)\n" for n in names.values())
    return f"(set-logic QF_LIA)\n{decls}(assert {body})\n(check-sat)\n"


class ExternalSolver:
    """SMT-LIB2 solver run as a child process; only ``unsat`` answers are used."""

    def __init__(self, executable: str, args=("-in",), timeout: float = 10.0):
        path = shutil.which(executable) or executable
        self.argv = [path, *args]
        self.timeout = timeout

    def unsat(self, script: str) -> bool:
        try:
            out = subprocess.run(
                self.argv, input=script, capture_output=True, text=True, timeout=self.timeout
            ).stdout
        except (OSError, subprocess.SubprocessError):
            return False
        return out.strip().splitlines()[:1] == ["unsat"]


def solver_from_env() -> ExternalSolver | None:
    exe = os.environ.get(SOLVER_ENV)
    return ExternalSolver(exe) if exe else None


# ---------------------------------------------------------------------------
# public interface


class Prover:
    def __init__(self, budget: int = DEFAULT_BUDGET, solver: ExternalSolver | None = None):
        self.budget = budget
        self.solver = solver
        self.stats = {"queries": 0, "budget_exhausted": 0, "external_unsat": 0}

    # core
    def _unsat(self, atoms, alternatives=None) -> str:
        """UNSAT when ``atoms`` plus one of ``alternatives`` (if given) is impossible."""
        self.stats["queries"] += 1
        atoms = list(atoms)
        defs = {a.name: a.fn for a in atoms if isinstance(a, FunDef)}
        alts = alternatives if alternatives is not None else [()]
        verdict = UNSAT
        for alt in alts:
            if self._refute(atoms + list(alt), defs, opaque=True)[0] == UNSAT:
                continue
            verdict, q = self._refute(atoms + list(alt), defs, opaque=False)
            if verdict == UNSAT:
                continue
            if self.solver is not None and q is not None and self.solver.unsat(to_smtlib(q.items)):
                self.stats["external_unsat"] += 1
                continue
            return verdict
        return UNSAT

    def _refute(self, atoms, defs, opaque: bool):
        q = _Query(defs=defs, budget=[self.budget], opaque=opaque, known=frozenset(atoms))
        try:
            for a in atoms:
                _add_atom(a, q)
            if not opaque:
                _congruence(q)
            lits, ors = _split(q.items)
            diseq = [x for x in lits if isinstance(x, NotEqual)]
            lits = [x for x in lits if not isinstance(x, NotEqual)]
            ors += [_Or([[y] for y in _diseq_alts(x)]) for x in diseq]
            return (UNSAT if _search(lits, ors, q) else SAT), q
        except BudgetExceeded:
            if not opaque:
                self.stats["budget_exhausted"] += 1
            return UNKNOWN, q

    def sat(self, ctx) -> str:
        r = self._unsat(ctx)
        return UNSAT if r == UNSAT else (SAT if r == SAT else UNKNOWN)

    def quick_unsat(self, ctx) -> bool:
        """Refutation with array reads left uninterpreted; cheap and sound."""
        atoms = list(ctx)
        defs = {a.name: a.fn for a in atoms if isinstance(a, FunDef)}
        return self._refute(atoms, defs, opaque=True)[0] == UNSAT

    def sat_guard(self, ctx, b) -> str:
        """Satisfiability of ``ctx`` conjoined with a kernel guard."""
        return self._unsat(ctx, bool_dnf(b))

    def prove_pure(self, ctx, goal) -> ProofResult:
        """Does ``ctx`` entail ``goal`` (an atom, a tuple of atoms or a kernel guard)?"""
        if isinstance(goal, (Lt, Eq, And, Not)):
            neg = bool_dnf(goal, positive=False)
        elif isinstance(goal, tuple):
            neg = negate_conj([g for g in goal if not isinstance(g, FunDef)])
            if any(isinstance(g, FunDef) for g in goal):
                defs = {a for a in ctx if isinstance(a, FunDef)}
                if not all(g in defs for g in goal if isinstance(g, FunDef)):
                    return ProofResult(False, "definition not in context")
        else:
            neg = negate_atom(goal)
        r = self._unsat(ctx, neg)
        if r == UNSAT:
            return PROVEN
        return ProofResult(False, "budget exhausted" if r == UNKNOWN else "countermodel over the rationals")

    def compare(self, e1, e2, ctx=()) -> bool:
        """``ctx`` entails ``e1 = e2`` and is itself consistent."""
        e1, e2 = sorted((e1, e2), key=repr)
        if self.sat(ctx) == UNSAT:
            return False
        if e1 == e2:
            return True
        return self._unsat(ctx, [(NotEqual(e1, e2),)]) == UNSAT

    def disjoint(self, e1, e2, ctx=()) -> bool:
        """``ctx`` entails ``e1 != e2`` (vacuously true when ``ctx`` is inconsistent)."""
        e1, e2 = sorted((e1, e2), key=repr)
        if _distinct_bases(e1, e2):
            return True
        return self._unsat(ctx, [(Equal(e1, e2),)]) == UNSAT

    def prove_entailment(self, ante: SymbolicHeap, cons) -> ProofResult:
        """``ante |- cons`` where ``cons`` is a heap, an atom or ``False``."""
        if cons is False:
            return PROVEN if self.sat(ante.pure) == UNSAT else ProofResult(False, "satisfiable")
        if not isinstance(cons, SymbolicHeap):
            return self.prove_pure(ante.pure, cons)
        if self.sat(ante.pure) == UNSAT:
            return PROVEN
        if len(ante.spatial) != len(cons.spatial):
            return ProofResult(False, "spatial parts differ in size")
        goals = []
        used: set = set()
        for c in cons.spatial:
            for idx, a in enumerate(ante.spatial):
                if idx in used or type(a) is not type(c):
                    continue
                if self._cell_matches(ante.pure, a, c):
                    used.add(idx)
                    break
            else:
                return ProofResult(False, f"no match for {c}")
        goals = tuple(cons.pure)
        if not goals:
            return PROVEN
        return self.prove_pure(ante.pure, goals)

    def _cell_matches(self, ctx, a, c) -> bool:
        if isinstance(a, PointsTo):
            return self.compare(a.addr, c.addr, ctx) and self.compare(a.value, c.value, ctx)
        if not (self.compare(a.base, c.base, ctx) and self.compare(a.lo, c.lo, ctx)
                and self.compare(a.hi, c.hi, ctx)):
            return False
        return simplify_fexpr(a.fn) == simplify_fexpr(c.fn)


def _loc_part(t):
    try:
        lin = linearize(t)
    except TypeError:
        return None
    locs = {k: v for k, v in lin.coeffs.items() if isinstance(k, Loc)}
    if len(locs) == 1 and list(locs.values()) == [1]:
        return next(iter(locs))
    return None


def _distinct_bases(e1, e2) -> bool:
    """Addresses into different shared allocations never coincide."""
    a, b = _loc_part(e1), _loc_part(e2)
    return a is not None and b is not None and a != b


_default = Prover()


def sat(ctx) -> str:
    return _default.sat(ctx)


def prove_pure(ctx, goal) -> ProofResult:
    return _default.prove_pure(ctx, goal)


def compare(e1, e2, ctx=()) -> bool:
    return _default.compare(e1, e2, ctx)


def disjoint(e1, e2, ctx=()) -> bool:
    return _default.disjoint(e1, e2, ctx)


def prove_entailment(ante: SymbolicHeap, cons) -> ProofResult:
    return _default.prove_entailment(ante, cons)
