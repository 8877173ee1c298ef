"""Random kernels, states and formulas shared by the property tests."""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from kernrace.concrete import Bottom, Next, Top, initial_state, step_thread
from kernrace.frontend import parse_kernel
from kernrace.symexec import SymBottom, SymbolicExecutor
from kernrace.symheap import SatisfactionUndetermined, model_of, satisfies
from kernrace.terms import LVar

HEADER = "kernel fuzz(int A[], int B[], shared int g, int p)"
LOCALS = ("x", "y")


def rand_expr(rng: random.Random, depth: int = 2, div: bool = True) -> str:
    leaves = ["tid", "x", "y", "p", "g", "size(A)", str(rng.randint(-2, 3))]
    if depth <= 0 or rng.random() < 0.35:
        return rng.choice(leaves)
    kind = rng.random()
    if kind < 0.15:
        arr = rng.choice("AB")
        return f"{arr}[{rand_index(rng)}]"
    ops = ["+", "-", "*"] + (["/", "%"] if div else [])
    op = rng.choice(ops)
    return f"({rand_expr(rng, depth - 1, div)} {op} {rand_expr(rng, depth - 1, div)})"


def rand_index(rng: random.Random) -> str:
    return rng.choice(["tid", "0", "1", "tid + 1", "tid - 1", "x", "size(A) - 1", "p"])


def rand_bool(rng: random.Random) -> str:
    rel = rng.choice(["<", "<=", "==", "!=", ">"])
    b = f"{rand_expr(rng, 1, False)} {rel} {rand_expr(rng, 1, False)}"
    r = rng.random()
    if r < 0.15:
        return f"!({b})"
    if r < 0.3:
        return f"{b} && {rand_expr(rng, 0)} < {rng.randint(0, 3)}"
    if r < 0.4:
        return f"{b} || tid == {rng.randint(0, 1)}"
    return b


def rand_stmt(rng: random.Random) -> str:
    r = rng.random()
    if r < 0.25:
        return f"{rng.choice(LOCALS)} = {rand_expr(rng)};"
    if r < 0.5:
        return f"{rng.choice('AB')}[{rand_index(rng)}] = {rand_expr(rng)};"
    if r < 0.6:
        return f"g = {rand_expr(rng)};"
    if r < 0.75:
        return f"{rng.choice(LOCALS)} = {rng.choice('AB')}[{rand_index(rng)}];"
    if r < 0.88:
        return f"assume({rand_bool(rng)});"
    return f"assert({rand_bool(rng)});"


def rand_kernel_text(rng: random.Random, length: int = 4) -> str:
    req = " requires(tid < size(A) && tid < size(B))" if rng.random() < 0.6 else ""
    body = "\n".join("    " + rand_stmt(rng) for _ in range(length))
    return f"{HEADER}{req} {{\n    int x;\n    int y;\n{body}\n}}\n"


def rand_inputs(rng: random.Random) -> dict:
    return {
        "A": [rng.randint(-3, 3) for _ in range(rng.randint(1, 4))],
        "B": [rng.randint(-3, 3) for _ in range(rng.randint(1, 4))],
        "g": rng.randint(-3, 3),
        "p": rng.randint(-2, 3),
    }


@dataclass
class SoundnessStats:
    triples: int = 0
    violations: list = field(default_factory=list)
    undetermined: int = 0
    kernels: int = 0


def check_kernel(text: str, inputs: dict, tid: int, stats: SoundnessStats, n: int = 2) -> None:
    """Walk one thread through a straight-line kernel, checking every step.

    Each step is a triple (command, symbolic pre-heap, concrete model): the
    concrete successor must satisfy one of the symbolic successors unless the
    symbolic step is bottom.  A concrete fault with a non-bottom symbolic step
    is a violation too.
    """
    kernel = parse_kernel(text)
    try:
        g = initial_state(kernel, n, inputs)
    except ValueError:
        return
    stats.kernels += 1
    tau, sigma = g.threads[tid].tau, g.sigma
    ex = SymbolicExecutor(kernel)
    heaps = ex.initial_heaps()
    node = kernel.start
    while True:
        succ = [m for m in kernel.succ[node] if m != kernel.exit]
        if not succ:
            return
        node = succ[0]
        cmd = kernel.nodes[node].cmd
        pre = _matching(tau, sigma, heaps, stats, n, inputs["p"])
        if pre is None:
            return
        stats.triples += 1
        sym = ex.exec_command(cmd, pre)
        conc = step_thread(cmd, tau, sigma)
        if isinstance(sym, SymBottom):
            return
        if isinstance(conc, Top):
            return
        if isinstance(conc, Bottom):
            stats.violations.append((text, inputs, tid, node, "concrete fault, symbolic step not bottom"))
            return
        assert isinstance(conc, Next)
        tau, sigma = conc.tau, conc.sigma
        if _matching(tau, sigma, sym, stats, n, inputs["p"]) is None:
            stats.violations.append((text, inputs, tid, node, "no symbolic successor holds"))
            return
        heaps = sym


def _matching(tau, sigma, heaps, stats, n=2, p=0):
    for h in heaps:
        # the launch fixes the thread count and the private scalar parameter
        m = model_of(tau, sigma)
        m.lvals.update({LVar("N", glob=True): n, LVar("p0", glob=True): p})
        try:
            if satisfies(tau, sigma, h, model=m):
                return h
        except SatisfactionUndetermined:
            stats.undetermined += 1
    return None


def local_soundness(seed: int, min_triples: int, length: int = 4) -> SoundnessStats:
    rng = random.Random(seed)
    stats = SoundnessStats()
    while stats.triples < min_triples:
        text = rand_kernel_text(rng, length)
        check_kernel(text, rand_inputs(rng), rng.randint(0, 1), stats)
    return stats


# ---------------------------------------------------------------------------
# eta chains

from kernrace.concrete import FrozenMap, SharedState, ThreadState  # noqa: E402
from kernrace.symheap import (  # noqa: E402
    Equal, Eta, FSym, FunDef, Lam, LessEq, Seg, SymbolicHeap, less,
)
from kernrace.terms import App, Const, Idx, Loc, Op, Size, Tid  # noqa: E402

K = Idx("k")
BASE = FSym("f_A")
N_SYM = LVar("N", glob=True)
WIDTH = 8


def _plus(a, c: int):
    return Op("+", (a, Const(c)))


def rand_cond(rng: random.Random) -> tuple:
    c = rng.randint(-1, 4)
    shapes = [
        (Equal(K, _plus(Tid(), c)),),
        (Equal(K, Const(rng.randint(0, WIDTH - 1))),),
        (Equal(K, Op("*", (Const(2), Tid()))),),
        (LessEq(_plus(Tid(), c), K), LessEq(K, _plus(Tid(), c + rng.randint(0, 2)))),
        (LessEq(Tid(), Const(rng.randint(0, 2))), Equal(K, Const(rng.randint(0, WIDTH - 1)))),
    ]
    return rng.choice(shapes)


def rand_value(rng: random.Random, prev):
    shapes = [
        Tid(),
        Const(rng.randint(-3, 3)),
        Op("+", (K, Tid())),
        _plus(App(prev, K), 1),
        App(prev, Const(rng.randint(0, WIDTH - 1))),
    ]
    return rng.choice(shapes)


def rand_chain(rng: random.Random, depth: int | None = None) -> list[FunDef]:
    """Definitions ``A1 := eta(..., f_A)``, ``A2 := eta(..., A1)``, ... newest last."""
    depth = depth or rng.randint(1, 4)
    defs, prev = [], BASE
    for j in range(1, depth + 1):
        layer = Eta("k", rand_cond(rng), Lam("k", rand_value(rng, prev)), prev)
        defs.append(FunDef(f"A{j}", layer))
        prev = FSym(f"A{j}")
    return defs


def chain_heap(defs: list[FunDef]) -> SymbolicHeap:
    pure = (LessEq(Const(0), Tid()), less(Tid(), N_SYM), LessEq(Const(2), N_SYM),
            LessEq(Const(1), Size("A")), *defs)
    top = FSym(defs[-1].name) if defs else BASE
    return SymbolicHeap(pure, (Seg(Loc("A"), Const(0), Op("-", (Size("A"), Const(1))), top),))


def concrete_array(values) -> tuple:
    """Thread-state factory and shared state holding ``A = values``."""
    sigma = SharedState(FrozenMap({"A": 1}),
                        FrozenMap({1 + j: v for j, v in enumerate(values)}),
                        FrozenMap({"A": len(values)}))
    return (lambda t: ThreadState(FrozenMap(), FrozenMap(), t)), sigma


def _inst(t, tid: int, views: dict):
    """Instantiate a term at a concrete thread; reads see that thread's own view."""
    if isinstance(t, Tid):
        return Const(tid)
    if isinstance(t, Op):
        return Op(t.op, tuple(_inst(a, tid, views) for a in t.args))
    if isinstance(t, App):
        fn = views.get(t.fn.name, t.fn) if isinstance(t.fn, FSym) else t.fn
        return App(fn, _inst(t.arg, tid, views))
    return t


def unfolded_chain(defs: list[FunDef], n: int):
    """Every thread's layers at concrete tids, thread 0 outermost, over ``f_A``."""
    out = BASE
    for tid in reversed(range(n)):
        views: dict = {}
        private = BASE  # the thread's own view of A, used by its reads
        stacked = out
        for d in defs:
            layer = d.fn
            cond = tuple(type(a)(_inst(a.left, tid, views), _inst(a.right, tid, views))
                         for a in layer.cond)
            then = Lam("k", _inst(layer.then.body, tid, views))
            private = Eta("k", cond, then, private)
            stacked = Eta("k", cond, then, stacked)
            views[d.name] = private
        out = stacked
    return out
