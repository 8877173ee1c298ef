import itertools
import random

import pytest
from hypothesis import given, strategies as st

from kernrace.concrete import (
    Bottom, InvalidSchedule, LaunchError, OracleBudgetExceeded, initial_state, replay, run_oracle,
)
from kernrace.frontend import parse_kernel
from kernrace.terms import apply_op, wrap64


def test_wraparound_is_twos_complement():
    assert wrap64(2**63) == -(2**63)
    assert apply_op("*", [2**62, 4]) == 0
    assert apply_op("+", [2**63 - 1, 1]) == -(2**63)


@pytest.mark.parametrize("a,b,q,r", [(7, 2, 3, 1), (-7, 2, -3, -1), (7, -2, -3, 1), (-7, -2, 3, -1)])
def test_division_truncates_toward_zero(a, b, q, r):
    assert apply_op("/", [a, b]) == q
    assert apply_op("%", [a, b]) == r


def test_division_by_zero_is_a_runtime_error():
    k = parse_kernel("kernel k(int A[], int z) { A[0] = 1 / z; }")
    v = run_oracle(k, 1, {"A": [0], "z": 0})
    assert v.classification == "runtime-error"
    assert "division" in v.reason


def test_launch_errors():
    k = parse_kernel("kernel k(int A[]) requires(tid < size(A)) { A[tid] = 1; }")
    with pytest.raises(LaunchError):
        initial_state(k, 3, {"A": [0, 0]})
    with pytest.raises(LaunchError):
        initial_state(k, 1, {"A": []})
    with pytest.raises(LaunchError):
        initial_state(k, 1, {"A": [0], "Z": 1})
    with pytest.raises(LaunchError):
        initial_state(k, 0, {"A": [0]})


def test_out_of_bounds_store():
    v = run_oracle(parse_kernel("kernel k(int A[]) { A[tid + 1] = 0; }"), 2, {"A": [0, 0]})
    assert v.classification == "runtime-error"
    assert "out of bounds" in v.reason


def test_barrier_divergence_is_an_error():
    k = parse_kernel("kernel k(int A[]) { if (tid == 0) { barrier; } }")
    v = run_oracle(k, 2, {"A": [0]})
    assert v.classification == "runtime-error"
    assert "divergence" in v.reason


def test_thread_with_no_feasible_path_retires():
    k = parse_kernel("kernel k(int A[]) { assume(tid == 0); A[0] = 1; barrier; }")
    v = run_oracle(k, 2, {"A": [0]})
    assert v.classification == "race-free"


def test_strict_mode_rejects_stale_snapshots():
    # disjoint writes: each thread suspends before seeing the other's store
    k = parse_kernel("kernel k(int A[]) { A[tid] = 1; barrier; }")
    assert run_oracle(k, 2, {"A": [0, 0]}, mode="epoch").classification == "race-free"
    assert run_oracle(k, 2, {"A": [0, 0]}, mode="strict").classification == "race"
    same = parse_kernel("kernel k(int A[]) { A[0] = 5; barrier; }")
    assert run_oracle(same, 2, {"A": [0]}, mode="strict").classification == "race-free"


def test_budget_exhaustion_is_not_a_verdict():
    k = parse_kernel("kernel k(int A[]) { A[0] = tid; A[0] = A[0] + 1; A[0] = A[0] * 2; }")
    with pytest.raises(OracleBudgetExceeded):
        run_oracle(k, 3, {"A": [0]}, max_states=5)


def test_replay_rejects_unknown_thread():
    k = parse_kernel("kernel k(int A[]) { A[0] = 1; }")
    with pytest.raises(InvalidSchedule):
        replay(k, 1, {"A": [0]}, [3])


def test_replay_reports_bottom():
    k = parse_kernel("kernel k(int A[]) { A[tid] = 1; }")
    assert isinstance(replay(k, 2, {"A": [0]}, [1]), Bottom)


def _two_thread_text(rng, length):
    stmts = []
    for _ in range(length):
        i = rng.choice(["0", "1", "tid"])
        e = rng.choice(["tid", "1", "A[0] + 1", "A[1] * 2", "x"])
        stmts.append(rng.choice([f"A[{i}] = {e};", f"x = A[{i}];", f"x = x + {e};"]))
    return "kernel k(int A[]) { int x; " + " ".join(stmts) + " }"


def _interleavings(a, b):
    for pos in itertools.combinations(range(a + b), a):
        yield [0 if j in pos else 1 for j in range(a + b)]


@given(st.integers(0, 2**32 - 1), st.integers(1, 4))
def test_epoch_race_matches_brute_force_interleavings(seed, length):
    k = parse_kernel(_two_thread_text(random.Random(seed), length))
    steps = sum(1 for n in k.nodes.values() if n.kind == "cmd")
    inputs = {"A": [0, 0]}
    finals = {repr(sorted(replay(k, 2, inputs, s).sigma.view().items()))
              for s in _interleavings(steps, steps)}
    v = run_oracle(k, 2, inputs)
    assert v.schedule_count == len(list(_interleavings(steps, steps)))
    assert (v.classification == "race") == (len(finals) > 1)
