import os
import stat

import pytest
from hypothesis import given, settings, strategies as st

from kernrace.frontend import parse_kernel
from kernrace.prover import (
    SAT, UNSAT, ExternalSolver, Prover, compare, disjoint, prove_pure, sat, to_smtlib,
)
from kernrace.symheap import Equal, LessEq, NotEqual, PointsTo, SymbolicHeap, less
from kernrace.terms import Const, Loc, LVar, Op, Size, Tid, Var
from prover_fuzz import prover_fuzz

x, y, t = Var("x"), Var("y"), Tid()


def plus(a, b):
    return Op("+", (a, b))


def test_linear_facts():
    assert sat([LessEq(x, Const(1)), LessEq(Const(2), x)]) == UNSAT
    assert sat([LessEq(x, Const(1))]) == SAT
    assert prove_pure([less(x, y), less(y, Const(3))], LessEq(x, Const(1)))
    assert not prove_pure([less(x, y)], LessEq(x, Const(0)))


def test_integrality_is_used():
    # 2x = 1 has rational but no integer solutions
    assert sat([Equal(Op("*", (Const(2), x)), Const(1))]) == UNSAT


def test_disequality_splits():
    ctx = [LessEq(Const(0), x), LessEq(x, Const(1)), NotEqual(x, Const(0)), NotEqual(x, Const(1))]
    assert sat(ctx) == UNSAT


def test_thread_indexed_cells_are_disjoint():
    t1, t2 = LVar("t1", glob=True), LVar("t2", glob=True)
    a1, a2 = plus(Loc("A"), t1), plus(Loc("A"), t2)
    assert disjoint(a1, a2, [NotEqual(t1, t2)])
    assert not disjoint(a1, a2, [])
    assert disjoint(a1, plus(Loc("B"), t1))


def test_compare_needs_consistent_context():
    assert compare(plus(x, Const(1)), plus(Const(1), x))
    assert not compare(x, y, [LessEq(Const(1), Const(0))])


def test_uninterpreted_operators_are_functional():
    s1, s2 = Op("sqrt", (x,)), Op("sqrt", (y,))
    assert prove_pure([Equal(x, y)], Equal(s1, s2))
    assert not prove_pure([], Equal(s1, s2))


def test_division_is_uninterpreted_but_functional():
    q = Op("/", (x, Const(2)))
    assert not prove_pure([], Equal(Op("*", (q, Const(2))), x))
    assert prove_pure([Equal(x, y)], Equal(q, Op("/", (y, Const(2)))))


def test_guard_goals():
    k = parse_kernel("kernel k(int A[]) requires(tid < size(A)) { }")
    assert prove_pure([less(t, Size("A"))], k.requires)


def test_entailment_matches_cells():
    ante = SymbolicHeap((LessEq(Const(0), t), Equal(x, Const(5))),
                        (PointsTo(plus(Loc("A"), t), x),))
    p = Prover()
    assert p.prove_entailment(ante, SymbolicHeap((), (PointsTo(plus(t, Loc("A")), Const(5)),)))
    assert not p.prove_entailment(ante, SymbolicHeap((), (PointsTo(Loc("A"), Const(5)),)))
    assert not p.prove_entailment(ante, SymbolicHeap((LessEq(Const(1), t),), ante.spatial))
    assert p.prove_entailment(ante.with_pure(LessEq(Const(1), Const(0))), False)


def test_exhausted_budget_is_not_a_proof():
    atoms = [LessEq(Var(f"v{i}"), Var(f"v{i + 1}")) for i in range(12)]
    atoms += [NotEqual(Var(f"v{i}"), Const(i)) for i in range(12)]
    p = Prover(budget=3)
    r = p.prove_pure(atoms, LessEq(Var("v0"), Var("v12")))
    assert not r and "budget" in r.reason
    assert p.stats["budget_exhausted"] >= 1
    assert Prover().prove_pure(atoms, LessEq(Var("v0"), Var("v12")))


def test_smtlib_script_shape():
    script = to_smtlib([LessEq(x, Const(1))])
    assert script.startswith("(set-logic QF_LIA)") and "(check-sat)" in script


def _stub(tmp_path, answer):
    path = tmp_path / f"solver_{answer}"
    path.write_text(f"#!/bin/sh\ncat > /dev/null\necho {answer}\n")
    path.chmod(path.stat().st_mode | stat.S_IEXEC)
    return ExternalSolver(str(path), args=())


@pytest.mark.skipif(os.name != "posix", reason="shell stub")
def test_external_solver_only_upgrades_unsat(tmp_path):
    # nonlinear: the built-in procedure cannot refute x*x < 0
    goal = LessEq(Const(0), Op("*", (x, x)))
    assert not Prover().prove_pure([], goal)
    p = Prover(solver=_stub(tmp_path, "unsat"))
    assert p.prove_pure([], goal) and p.stats["external_unsat"] == 1
    assert not Prover(solver=_stub(tmp_path, "sat")).prove_pure([], goal)
    assert not Prover(solver=ExternalSolver("/nonexistent/solver")).prove_pure([], goal)


@settings(max_examples=10)
@given(st.integers(1, 10_000))
def test_small_fuzz_batches_are_sound(seed):
    stats = prover_fuzz(seed, 60)
    assert not stats.unsound
