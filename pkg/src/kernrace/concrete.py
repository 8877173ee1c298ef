"""Concrete SIMD semantics and the exhaustive-interleaving race oracle.

Threads step one command at a time in every possible order.  A thread that
reaches ``barrier`` suspends together with the shared state it observed;
once every live thread is suspended the barrier releases.  Reaching ``exit``
counts as arriving at an implicit final barrier.

Two race readings are supported:

``strict``
    the literal release rule: a race whenever some suspended thread's
    snapshot differs from the shared state at release.
``epoch``
    a race whenever two schedules produce different shared states at the
    release of the same barrier epoch (the final epoch included).
"""

from __future__ import annotations

import hashlib
from collections import deque
from collections.abc import Mapping
from dataclasses import dataclass, field, replace

from kernrace.frontend import (
    And, Assert, Assign, Assume, Barrier, Eq, Kernel, Load, Lt, Not, Store,
    format_command,
)
from kernrace.terms import Const, Op, Size, Tid, Var, apply_op, wrap64

DEFAULT_MAX_STATES = 200_000


class FrozenMap(Mapping):
    """Immutable, hashable mapping used for stacks and heaps."""

    __slots__ = ("_d", "_h")

    def __init__(self, data=()):
        self._d = dict(data)
        self._h = None

    def __getitem__(self, k):
        return self._d[k]

    def __iter__(self):
        return iter(self._d)

    def __len__(self):
        return len(self._d)

    def __hash__(self):
        if self._h is None:
            self._h = hash(frozenset(self._d.items()))
        return self._h

    def __eq__(self, other):
        if isinstance(other, FrozenMap):
            return self._d == other._d
        return NotImplemented

    def __repr__(self):
        return f"FrozenMap({self._d!r})"

    def set(self, k, v) -> FrozenMap:
        d = dict(self._d)
        d[k] = v
        return FrozenMap(d)


@dataclass(frozen=True)
class SharedState:
    stack: FrozenMap  # shared scalars -> value, arrays -> base location
    heap: FrozenMap   # location -> value
    sizes: FrozenMap  # array -> element count

    def array_values(self, name: str) -> list[int]:
        base = self.stack[name]
        return [self.heap[base + j] for j in range(self.sizes[name])]

    def view(self) -> dict:
        """Plain-dict rendering: scalars and array contents by name."""
        out = {}
        for k in sorted(self.stack):
            out[k] = self.array_values(k) if k in self.sizes else self.stack[k]
        return out

    def digest(self) -> str:
        return hashlib.sha256(repr(sorted(self.view().items())).encode()).hexdigest()[:16]


@dataclass(frozen=True)
class ThreadState:
    stack: FrozenMap
    heap: FrozenMap
    tid: int


# step outcomes


@dataclass(frozen=True)
class Next:
    tau: ThreadState
    sigma: SharedState


@dataclass(frozen=True)
class Bottom:
    reason: str
    kind: str = "error"  # error | race | divergence


@dataclass(frozen=True)
class Top:
    pass


@dataclass(frozen=True)
class Suspended:
    tau: ThreadState
    sigma: SharedState


class EvalError(Exception):
    pass


class LaunchError(ValueError):
    pass


class InvalidSchedule(ValueError):
    pass


class OracleBudgetExceeded(RuntimeError):
    """Exploration stopped before covering every schedule; no verdict."""


# ---------------------------------------------------------------------------
# thread-local semantics


def eval_expr(e, tau: ThreadState, sigma: SharedState) -> int:
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Var):
        if e.name in tau.stack:
            return tau.stack[e.name]
        if e.name in sigma.stack and e.name not in sigma.sizes:
            return sigma.stack[e.name]
        raise EvalError(f"unbound variable {e.name}")
    if isinstance(e, Tid):
        return tau.tid
    if isinstance(e, Size):
        try:
            return sigma.sizes[e.array]
        except KeyError:
            raise EvalError(f"unknown array {e.array}") from None
    if isinstance(e, Op):
        vals = [eval_expr(a, tau, sigma) for a in e.args]
        try:
            return apply_op(e.op, vals)
        except ZeroDivisionError:
            raise EvalError("division by zero") from None
    raise EvalError(f"cannot evaluate {e!r}")


def eval_bool(b, tau: ThreadState, sigma: SharedState) -> bool:
    if isinstance(b, Lt):
        return eval_expr(b.left, tau, sigma) < eval_expr(b.right, tau, sigma)
    if isinstance(b, Eq):
        return eval_expr(b.left, tau, sigma) == eval_expr(b.right, tau, sigma)
    if isinstance(b, And):
        return eval_bool(b.left, tau, sigma) and eval_bool(b.right, tau, sigma)
    if isinstance(b, Not):
        return not eval_bool(b.arg, tau, sigma)
    raise EvalError(f"cannot evaluate {b!r}")


def _set_var(name: str, value: int, tau: ThreadState, sigma: SharedState):
    if name in sigma.stack:
        return tau, replace(sigma, stack=sigma.stack.set(name, value))
    return replace(tau, stack=tau.stack.set(name, value)), sigma


def _cell(array: str, index, tau, sigma) -> int:
    m = eval_expr(index, tau, sigma)
    n = sigma.sizes[array]
    if not 0 <= m < n:
        raise EvalError(f"index {m} out of bounds for {array}[{n}] in thread {tau.tid}")
    return sigma.stack[array] + m


def step_thread(cmd, tau: ThreadState, sigma: SharedState):
    """One thread-local step: ``Next``, ``Bottom``, ``Top`` or ``Suspended``."""
    try:
        if isinstance(cmd, Assign):
            return Next(*_set_var(cmd.var, eval_expr(cmd.expr, tau, sigma), tau, sigma))
        if isinstance(cmd, Store):
            loc = _cell(cmd.array, cmd.index, tau, sigma)
            n = eval_expr(cmd.expr, tau, sigma)
            return Next(tau, replace(sigma, heap=sigma.heap.set(loc, n)))
        if isinstance(cmd, Load):
            loc = _cell(cmd.array, cmd.index, tau, sigma)
            return Next(*_set_var(cmd.var, sigma.heap[loc], tau, sigma))
        if isinstance(cmd, Assert):
            if eval_bool(cmd.cond, tau, sigma):
                return Next(tau, sigma)
            return Bottom(f"assertion failed in thread {tau.tid}: {format_command(cmd)}")
        if isinstance(cmd, Assume):
            return Next(tau, sigma) if eval_bool(cmd.cond, tau, sigma) else Top()
        if isinstance(cmd, Barrier):
            return Suspended(tau, sigma)
    except EvalError as exc:
        return Bottom(str(exc))
    raise TypeError(f"not a command: {cmd!r}")


# ---------------------------------------------------------------------------
# global semantics

RUN, WAIT, DONE, RETIRED = "run", "wait", "done", "retired"


@dataclass(frozen=True)
class Slot:
    tau: ThreadState
    pc: int  # last executed CFG node
    status: str = RUN
    snapshot: SharedState | None = None


@dataclass(frozen=True)
class GlobalState:
    threads: tuple
    sigma: SharedState
    epoch: int = 0

    @property
    def terminal(self) -> bool:
        return all(s.status in (DONE, RETIRED) for s in self.threads)

    def runnable(self) -> list[int]:
        return [i for i, s in enumerate(self.threads) if s.status == RUN]


def _settle(kernel: Kernel, slot: Slot, sigma: SharedState) -> Slot:
    if slot.status == RUN and kernel.succ[slot.pc] == (kernel.exit,):
        return replace(slot, pc=kernel.exit, status=DONE, snapshot=sigma)
    return slot


def _synchronise(kernel: Kernel, g: GlobalState, mode: str):
    """Apply the barrier-release / termination rules once nobody can run."""
    if g.runnable():
        return g
    live = [s for s in g.threads if s.status != RETIRED]
    waiting = [s for s in live if s.status == WAIT]
    if waiting and len(waiting) != len(live):
        return Bottom("barrier divergence: some threads finished while others wait", "divergence")
    if mode == "strict":
        for i, s in enumerate(g.threads):
            if s.snapshot is not None and s.snapshot != g.sigma:
                where = "barrier" if waiting else "exit"
                return Bottom(f"thread {i} suspended at {where} on a stale shared state", "race")
    if not waiting:
        return g
    threads = tuple(
        _settle(kernel, replace(s, status=RUN, snapshot=None), g.sigma) if s.status == WAIT else s
        for s in g.threads
    )
    return _synchronise(kernel, GlobalState(threads, g.sigma, g.epoch + 1), mode)


def step_global(kernel: Kernel, g: GlobalState, i: int, mode: str = "epoch"):
    """Let thread ``i`` execute its next command.

    Returns the list of successor global states (both arms are tried at a
    branch; infeasible arms yield nothing) or a ``Bottom``.
    """
    res = _step(kernel, g, i, mode)
    return res if isinstance(res, Bottom) else [s for _node, s in res]


def _step(kernel: Kernel, g: GlobalState, i: int, mode: str):
    slot = g.threads[i]
    if slot.status != RUN:
        raise InvalidSchedule(f"thread {i} cannot step (status {slot.status})")
    out = []
    for nxt in kernel.succ[slot.pc]:
        res = step_thread(kernel.nodes[nxt].cmd, slot.tau, g.sigma)
        if isinstance(res, Bottom):
            return res
        if isinstance(res, Top):
            continue
        if isinstance(res, Suspended):
            new_slot = Slot(res.tau, nxt, WAIT, res.sigma)
        else:
            new_slot = _settle(kernel, Slot(res.tau, nxt), res.sigma)
        threads = g.threads[:i] + (new_slot,) + g.threads[i + 1:]
        out.append((nxt, GlobalState(threads, res.sigma, g.epoch)))
    if not out:
        # every continuation is infeasible: the thread drops out of the launch
        threads = g.threads[:i] + (replace(slot, status=RETIRED),) + g.threads[i + 1:]
        out.append((slot.pc, GlobalState(threads, g.sigma, g.epoch)))
    results = []
    for nxt, s in out:
        s = _synchronise(kernel, s, mode)
        if isinstance(s, Bottom):
            return s
        results.append((nxt, s))
    return results


def initial_state(kernel: Kernel, n: int, inputs: Mapping, mode: str = "epoch") -> GlobalState:
    if n < 1:
        raise LaunchError("thread count must be at least 1")
    known = {p.name for p in kernel.params}
    for k in inputs:
        if k not in known:
            raise LaunchError(f"input {k} is not a kernel parameter")
    sstack, heap, sizes, pstack = {}, {}, {}, {}
    nxt = 1
    for p in kernel.params:
        val = inputs.get(p.name)
        if p.is_array:
            if val is None:
                raise LaunchError(f"missing input for array {p.name}")
            if isinstance(val, int) or len(val) < 1:
                raise LaunchError(f"array {p.name} needs a non-empty list of values")
            sstack[p.name] = nxt
            sizes[p.name] = len(val)
            for j, v in enumerate(val):
                heap[nxt + j] = wrap64(int(v))
            nxt += len(val) + 1
        else:
            if val is not None and not isinstance(val, int):
                raise LaunchError(f"scalar {p.name} needs an integer value")
            (sstack if p.shared else pstack)[p.name] = wrap64(int(val or 0))
    for v in kernel.locals:
        pstack[v] = 0
    sigma = SharedState(FrozenMap(sstack), FrozenMap(heap), FrozenMap(sizes))
    threads = []
    for t in range(n):
        tau = ThreadState(FrozenMap(pstack), FrozenMap(), t)
        if kernel.requires is not None:
            try:
                ok = eval_bool(kernel.requires, tau, sigma)
            except EvalError as exc:
                raise LaunchError(f"cannot evaluate requires clause: {exc}") from None
            if not ok:
                raise LaunchError(f"launch violates the requires clause for tid {t}")
        threads.append(_settle(kernel, Slot(tau, kernel.start), sigma))
    g = _synchronise(kernel, GlobalState(tuple(threads), sigma), mode)
    assert not isinstance(g, Bottom)
    return g


# ---------------------------------------------------------------------------
# exhaustive exploration


@dataclass
class OracleVerdict:
    classification: str  # race-free | race | runtime-error
    mode: str
    threads: int
    witness: list = field(default_factory=list)  # list of schedules
    witness_states: list = field(default_factory=list)
    reason: str = ""
    epoch_digests: dict = field(default_factory=dict)
    schedule_count: int | None = None
    states_explored: int = 0

    def to_dict(self) -> dict:
        return {
            "classification": self.classification,
            "mode": self.mode,
            "threads": self.threads,
            "reason": self.reason,
            "witness": [[list(step) for step in s] for s in self.witness],
            "witness_states": self.witness_states,
            "epoch_digests": {str(k): v for k, v in sorted(self.epoch_digests.items())},
            "schedule_count": self.schedule_count,
            "states_explored": self.states_explored,
        }


def _schedule(parent: dict, state) -> list:
    steps = []
    while parent[state] is not None:
        prev, tid, node, cmd = parent[state]
        steps.append((tid, node, cmd))
        state = prev
    steps.reverse()
    return steps


def run_oracle(
    kernel: Kernel,
    n: int,
    inputs: Mapping,
    mode: str = "epoch",
    max_states: int = DEFAULT_MAX_STATES,
) -> OracleVerdict:
    """Explore every interleaving of ``n`` threads and classify the kernel."""
    if mode not in ("strict", "epoch"):
        raise ValueError(f"unknown oracle mode {mode!r}")
    init = initial_state(kernel, n, inputs, mode)
    parent: dict = {init: None}
    edges: dict = {}
    bottoms: list = []  # (Bottom, schedule)
    releases: dict[int, dict] = {}  # epoch -> {sigma: schedule}
    queue = deque([init])

    def record_release(k: int, state: GlobalState):
        per = releases.setdefault(k, {})
        if state.sigma not in per:
            per[state.sigma] = _schedule(parent, state)

    if init.epoch:
        for k in range(init.epoch):
            record_release(k, init)
    if init.terminal:
        record_release(init.epoch, init)

    while queue:
        g = queue.popleft()
        out = []
        for i in g.runnable():
            node = next(iter(kernel.succ[g.threads[i].pc]))
            res = _step(kernel, g, i, mode)
            if isinstance(res, Bottom):
                steps = _schedule(parent, g)
                cmd = format_command(kernel.nodes[node].cmd)
                bottoms.append((res, steps + [(i, node, cmd)]))
                out.append(None)
                continue
            for node_i, s in res:
                out.append(s)
                if s not in parent:
                    if len(parent) >= max_states:
                        raise OracleBudgetExceeded(
                            f"more than {max_states} states; raise the budget or shrink the launch"
                        )
                    cmdn = kernel.nodes[node_i].cmd
                    label = format_command(cmdn) if cmdn is not None else "retire"
                    parent[s] = (g, i, node_i, label)
                    for k in range(g.epoch, s.epoch):
                        record_release(k, s)
                    if s.terminal:
                        record_release(s.epoch, s)
                    queue.append(s)
        edges[g] = out

    verdict = OracleVerdict("race-free", mode, n, states_explored=len(parent))
    verdict.epoch_digests = {
        k: sorted(sig.digest() for sig in per) for k, per in sorted(releases.items())
    }
    verdict.schedule_count = _count_paths(init, edges)
    errors = [b for b in bottoms if b[0].kind in ("error", "divergence")]
    races = [b for b in bottoms if b[0].kind == "race"]
    if errors:
        verdict.classification = "runtime-error"
        verdict.reason = errors[0][0].reason
        verdict.witness = [errors[0][1]]
    elif races:
        verdict.classification = "race"
        verdict.reason = races[0][0].reason
        verdict.witness = [races[0][1]]
    elif mode == "epoch":
        for k, per in sorted(releases.items()):
            if len(per) > 1:
                (s1, w1), (s2, w2) = list(per.items())[:2]
                verdict.classification = "race"
                verdict.reason = f"shared state at release of epoch {k} depends on the schedule"
                verdict.witness = [w1, w2]
                verdict.witness_states = [s1.view(), s2.view()]
                break
    return verdict


def _count_paths(init, edges: dict) -> int | None:
    """Number of maximal schedules, or None when the state graph has a cycle."""
    count: dict = {}
    on_stack = set()
    stack = [(init, False)]
    while stack:
        g, done = stack.pop()
        if done:
            on_stack.discard(g)
            succ = edges.get(g, [])
            if not succ:
                count[g] = 1
            else:
                count[g] = sum(1 if s is None else count[s] for s in succ)
            continue
        if g in count:
            continue
        if g in on_stack:
            return None
        on_stack.add(g)
        stack.append((g, True))
        for s in edges.get(g, []):
            if s is not None and s not in count:
                if s in on_stack:
                    return None
                stack.append((s, False))
    return count[init]


def replay(kernel: Kernel, n: int, inputs: Mapping, schedule, mode: str = "epoch"):
    """Re-execute ``schedule`` (thread ids or ``(tid, node, ...)`` steps).

    Returns the resulting ``GlobalState`` or the ``Bottom`` reached.
    """
    g = initial_state(kernel, n, inputs, mode)
    for step in schedule:
        tid, node = (step, None) if isinstance(step, int) else (step[0], step[1])
        if not 0 <= tid < n:
            raise InvalidSchedule(f"no thread {tid}")
        res = _step(kernel, g, tid, mode)
        if isinstance(res, Bottom):
            return res
        if node is not None:
            res = [r for r in res if r[0] == node] or res
        g = res[0][1]
    return g
