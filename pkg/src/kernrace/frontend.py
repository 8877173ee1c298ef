"""Kernel source parsing and control-flow-graph construction.

Surface syntax is C-like::

    kernel name(int A[], shared int g, int n) requires(tid < size(A)) {
        int x;
        A[tid] = x + 1;
        if A[tid + 1] = 0 then g = 1
        while (x < 3) { x = x + 1; }
        barrier;
    }

Statements may be separated by ``;`` or by nothing at all.  Array reads
inside expressions are hoisted into explicit load commands bound to fresh
``_tN`` temporaries, so every command in the CFG is one of the six core
forms.  ``if``/``while`` become branches guarded by ``assume(b)`` and
``assume(!b)``.
"""

from __future__ import annotations

import re
from collections import deque
from dataclasses import dataclass, field, replace

from kernrace.terms import Const, Op, Size, Tid, Var

# ---------------------------------------------------------------------------
# AST


@dataclass(frozen=True, slots=True)
class Lt:
    left: object
    right: object


@dataclass(frozen=True, slots=True)
class Eq:
    left: object
    right: object


@dataclass(frozen=True, slots=True)
class And:
    left: object
    right: object


@dataclass(frozen=True, slots=True)
class Not:
    arg: object


TRUE = Eq(Const(0), Const(0))


@dataclass(frozen=True, slots=True)
class Assign:
    var: str
    expr: object


@dataclass(frozen=True, slots=True)
class Store:
    array: str
    index: object
    expr: object


@dataclass(frozen=True, slots=True)
class Load:
    var: str
    array: str
    index: object


@dataclass(frozen=True, slots=True)
class Barrier:
    pass


@dataclass(frozen=True, slots=True)
class Assume:
    cond: object


@dataclass(frozen=True, slots=True)
class Assert:
    cond: object


@dataclass(frozen=True, slots=True)
class If:
    cond: object
    then: tuple
    orelse: tuple


@dataclass(frozen=True, slots=True)
class While:
    cond: object
    body: tuple


@dataclass(frozen=True, slots=True)
class Param:
    name: str
    is_array: bool
    shared: bool


@dataclass(frozen=True, slots=True)
class Node:
    id: int
    kind: str  # "start" | "exit" | "cmd"
    cmd: object = None
    line: int = 0


@dataclass
class Kernel:
    name: str
    params: tuple
    locals: tuple
    body: tuple
    requires: object = None
    nodes: dict = field(default_factory=dict)
    succ: dict = field(default_factory=dict)
    start: int = 0
    exit: int = 1
    warnings: list = field(default_factory=list)

    def param(self, name: str) -> Param | None:
        for p in self.params:
            if p.name == name:
                return p
        return None

    @property
    def arrays(self) -> list[str]:
        return [p.name for p in self.params if p.is_array]

    @property
    def shared_scalars(self) -> list[str]:
        return [p.name for p in self.params if p.shared and not p.is_array]

    @property
    def shared_names(self) -> frozenset:
        return frozenset(p.name for p in self.params if p.shared)

    def is_shared(self, name: str) -> bool:
        p = self.param(name)
        return p is not None and p.shared

    def commands(self) -> list:
        return [n.cmd for n in self.nodes.values() if n.kind == "cmd"]

    def preds(self) -> dict[int, list[int]]:
        out: dict[int, list[int]] = {n: [] for n in self.nodes}
        for a, bs in self.succ.items():
            for b in bs:
                out[b].append(a)
        return out


# ---------------------------------------------------------------------------
# Diagnostics


@dataclass(frozen=True)
class Diagnostic:
    line: int
    col: int
    message: str

    def __str__(self) -> str:
        return f"{self.line}:{self.col}: {self.message}"


class KernelSyntaxError(Exception):
    def __init__(self, diagnostics: list[Diagnostic]):
        self.diagnostics = list(diagnostics)
        super().__init__("\n".join(str(d) for d in self.diagnostics))


class CFGError(Exception):
    pass


# ---------------------------------------------------------------------------
# Lexer

KEYWORDS = {
    "kernel", "int", "shared", "private", "if", "then", "else", "while", "do",
    "barrier", "assume", "assert", "tid", "size", "requires", "true", "false",
}

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r]+)
  | (?P<nl>\n)
  | (?P<comment>//[^\n]*|/\*.*?\*/)
  | (?P<num>\d+)
  | (?P<id>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>:=|==|!=|<=|>=|&&|\|\||[-+*/%<>=!(){}\[\];,∧∨¬≤≥≠])
    """,
    re.VERBOSE | re.DOTALL,
)
_UNICODE = {"∧": "&&", "∨": "||", "¬": "!", "≤": "<=", "≥": ">=", "≠": "!="}


@dataclass(frozen=True, slots=True)
class Token:
    kind: str  # num | id | kw | op | eof
    text: str
    line: int
    col: int


def tokenize(text: str) -> list[Token]:
    toks: list[Token] = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise KernelSyntaxError(
                [Diagnostic(line, pos - line_start + 1, f"unexpected character {text[pos]!r}")]
            )
        kind = m.lastgroup
        s = m.group()
        col = pos - line_start + 1
        if kind == "num":
            toks.append(Token("num", s, line, col))
        elif kind == "id":
            toks.append(Token("kw" if s in KEYWORDS else "id", s, line, col))
        elif kind == "op":
            toks.append(Token("op", _UNICODE.get(s, s), line, col))
        nls = s.count("\n")
        if nls:
            line += nls
            line_start = pos + s.rfind("\n") + 1
        pos = m.end()
    toks.append(Token("eof", "", line, pos - line_start + 1))
    return toks


# ---------------------------------------------------------------------------
# Parser


class _Backtrack(Exception):
    pass


class _Parser:
    def __init__(self, text: str):
        self.toks = tokenize(text)
        self.pos = 0
        self.diags: list[Diagnostic] = []

    # token helpers
    @property
    def tok(self) -> Token:
        return self.toks[self.pos]

    def at(self, text: str) -> bool:
        t = self.tok
        return t.kind in ("op", "kw") and t.text == text

    def accept(self, text: str) -> bool:
        if self.at(text):
            self.pos += 1
            return True
        return False

    def expect(self, text: str) -> Token:
        if not self.at(text):
            self.error(f"expected {text!r}, found {self.tok.text or 'end of input'!r}")
        t = self.tok
        self.pos += 1
        return t

    def error(self, msg: str, tok: Token | None = None):
        t = tok or self.tok
        raise KernelSyntaxError([Diagnostic(t.line, t.col, msg)])

    # kernel
    def kernel(self):
        self.expect("kernel")
        name = ""
        if self.tok.kind == "id":
            name = self.tok.text
            self.pos += 1
        self.expect("(")
        params = []
        if not self.at(")"):
            params.append(self.param())
            while self.accept(","):
                params.append(self.param())
        self.expect(")")
        requires = None
        if self.accept("requires"):
            self.expect("(")
            requires = self.bexpr()
            self.expect(")")
        self.expect("{")
        body = self.stmts()
        self.expect("}")
        if self.tok.kind != "eof":
            self.error(f"unexpected {self.tok.text!r} after kernel body")
        return name, params, requires, body

    def param(self):
        tok = self.tok
        shared = None
        if self.accept("shared"):
            shared = True
        elif self.accept("private"):
            shared = False
        self.expect("int")
        if self.tok.kind != "id":
            self.error("expected parameter name")
        name = self.tok.text
        self.pos += 1
        is_array = False
        if self.accept("["):
            self.expect("]")
            is_array = True
        if shared is None:
            shared = is_array
        if is_array and not shared:
            self.error("private arrays are not supported", tok)
        return (Param(name, is_array, shared), tok)

    # statements (raw form: expressions may still contain array reads)
    def stmts(self):
        out = []
        while not self.at("}") and self.tok.kind != "eof":
            if self.accept(";"):
                continue
            out.append(self.stmt())
        return out

    def block_or_stmt(self):
        if self.accept("{"):
            body = self.stmts()
            self.expect("}")
            return body
        return [self.stmt()]

    def stmt(self):
        tok = self.tok
        if self.accept("barrier"):
            self.accept("(") and self.expect(")")
            return ("barrier", tok)
        if self.at("assume") or self.at("assert"):
            kw = self.tok.text
            self.pos += 1
            self.expect("(")
            b = self.bexpr()
            self.expect(")")
            return (kw, tok, b)
        if self.accept("if"):
            b = self.bexpr()
            self.accept("then")
            then = self.block_or_stmt()
            orelse = []
            if self.accept("else"):
                orelse = self.block_or_stmt()
            return ("if", tok, b, then, orelse)
        if self.accept("while"):
            b = self.bexpr()
            self.accept("do")
            return ("while", tok, b, self.block_or_stmt())
        if self.at("int"):
            self.pos += 1
            if self.tok.kind != "id":
                self.error("expected variable name")
            name = self.tok.text
            self.pos += 1
            init = None
            if self.accept("=") or self.accept(":="):
                init = self.expr()
            return ("decl", tok, name, init)
        if self.tok.kind == "id":
            name = self.tok.text
            self.pos += 1
            if self.accept("["):
                idx = self.expr()
                self.expect("]")
                if not (self.accept("=") or self.accept(":=")):
                    self.error("expected assignment")
                return ("store", tok, name, idx, self.expr())
            if not (self.accept("=") or self.accept(":=")):
                self.error("expected assignment")
            return ("assign", tok, name, self.expr())
        self.error(f"unexpected {self.tok.text or 'end of input'!r}")

    # boolean expressions
    def bexpr(self):
        left = self.band()
        while self.accept("||"):
            right = self.band()
            left = Not(And(_neg(left), _neg(right)))
        return left

    def band(self):
        left = self.bnot()
        while self.accept("&&"):
            left = And(left, self.bnot())
        return left

    def bnot(self):
        if self.accept("!"):
            return Not(self.bnot())
        if self.accept("true"):
            return TRUE
        if self.accept("false"):
            return Not(TRUE)
        if self.at("("):
            save = self.pos
            try:
                self.pos += 1
                b = self.bexpr()
                self.expect(")")
                if self.tok.kind == "op" and self.tok.text in _RELOPS:
                    raise _Backtrack
                return b
            except (KernelSyntaxError, _Backtrack):
                self.pos = save
        return self.comparison()

    def comparison(self):
        left = self.expr()
        t = self.tok
        if t.kind != "op" or t.text not in _RELOPS:
            self.error("expected comparison operator")
        self.pos += 1
        right = self.expr()
        op = t.text
        if op == "<":
            return Lt(left, right)
        if op == ">":
            return Lt(right, left)
        if op == "<=":
            return Not(Lt(right, left))
        if op == ">=":
            return Not(Lt(left, right))
        if op in ("=", "=="):
            return Eq(left, right)
        return Not(Eq(left, right))

    # arithmetic expressions; raw array reads are ("read", tok, name, idx)
    def expr(self):
        left = self.term()
        while self.tok.kind == "op" and self.tok.text in ("+", "-"):
            op = self.tok.text
            self.pos += 1
            left = Op(op, (left, self.term()))
        return left

    def term(self):
        left = self.unary()
        while self.tok.kind == "op" and self.tok.text in ("*", "/", "%"):
            op = self.tok.text
            self.pos += 1
            left = Op(op, (left, self.unary()))
        return left

    def unary(self):
        if self.accept("-"):
            if self.tok.kind == "num":
                v = int(self.tok.text)
                self.pos += 1
                return Const(-v)
            return Op("neg", (self.unary(),))
        return self.primary()

    def primary(self):
        t = self.tok
        if t.kind == "num":
            self.pos += 1
            return Const(int(t.text))
        if self.accept("tid"):
            return Tid()
        if self.accept("size"):
            self.expect("(")
            if self.tok.kind != "id":
                self.error("expected array name in size()")
            name = self.tok
            self.pos += 1
            self.expect(")")
            return _RawSize(name.text, name)
        if self.accept("("):
            e = self.expr()
            self.expect(")")
            return e
        if t.kind == "id":
            self.pos += 1
            if t.text in ("cos", "sqrt") and self.at("("):
                self.pos += 1
                a = self.expr()
                self.expect(")")
                return Op(t.text, (a,))
            if self.accept("["):
                idx = self.expr()
                self.expect("]")
                return _RawRead(t.text, idx, t)
            return _RawVar(t.text, t)
        self.error(f"unexpected {t.text or 'end of input'!r} in expression")


_RELOPS = {"<", ">", "<=", ">=", "=", "==", "!="}


def _neg(b):
    return b.arg if isinstance(b, Not) else Not(b)


# Raw nodes carry source tokens for diagnostics until resolution.
@dataclass(frozen=True)
class _RawVar:
    name: str
    tok: Token


@dataclass(frozen=True)
class _RawSize:
    name: str
    tok: Token


@dataclass(frozen=True)
class _RawRead:
    array: str
    index: object
    tok: Token


# ---------------------------------------------------------------------------
# Resolution and desugaring


class _Resolver:
    def __init__(self, params, declared_locals, assigned):
        self.params = {p.name: p for p in params}
        self.locals: list[str] = list(declared_locals)
        for v in assigned:
            if v not in self.params and v not in self.locals:
                self.locals.append(v)
        self.diags: list[Diagnostic] = []
        self.ntemps = 0
        self.reserved = set(self.params) | set(self.locals)

    def diag(self, tok: Token, msg: str):
        self.diags.append(Diagnostic(tok.line, tok.col, msg))

    def fresh_temp(self) -> str:
        while True:
            self.ntemps += 1
            name = f"_t{self.ntemps}"
            if name not in self.reserved:
                self.reserved.add(name)
                self.locals.append(name)
                return name

    def check_scalar(self, name: str, tok: Token):
        p = self.params.get(name)
        if p is None and name not in self.locals:
            self.diag(tok, f"undeclared variable {name}")
        elif p is not None and p.is_array:
            self.diag(tok, f"array {name} used as a scalar")

    def check_array(self, name: str, tok: Token):
        p = self.params.get(name)
        if p is None:
            if name in self.locals:
                self.diag(tok, f"{name} is not an array")
            else:
                self.diag(tok, f"undeclared array {name}")
        elif not p.is_array:
            self.diag(tok, f"{name} is not an array")

    def expr(self, e, pre: list):
        """Resolve ``e``; loads for embedded array reads are appended to ``pre``."""
        if isinstance(e, _RawVar):
            self.check_scalar(e.name, e.tok)
            return Var(e.name)
        if isinstance(e, _RawSize):
            p = self.params.get(e.name)
            if p is None:
                self.diag(e.tok, f"undeclared array {e.name}")
            elif not p.is_array:
                self.diag(e.tok, f"size() applied to scalar {e.name}")
            return Size(e.name)
        if isinstance(e, _RawRead):
            self.check_array(e.array, e.tok)
            idx = self.expr(e.index, pre)
            t = self.fresh_temp()
            pre.append((Load(t, e.array, idx), e.tok.line))
            return Var(t)
        if isinstance(e, Op):
            return Op(e.op, tuple(self.expr(a, pre) for a in e.args))
        return e

    def bexpr(self, b, pre: list):
        if isinstance(b, Lt):
            return Lt(self.expr(b.left, pre), self.expr(b.right, pre))
        if isinstance(b, Eq):
            return Eq(self.expr(b.left, pre), self.expr(b.right, pre))
        if isinstance(b, And):
            return And(self.bexpr(b.left, pre), self.bexpr(b.right, pre))
        return Not(self.bexpr(b.arg, pre))

    def block(self, stmts) -> tuple:
        out: list = []
        for s in stmts:
            out.extend(self.stmt(s))
        return tuple(out)

    def stmt(self, s) -> list:
        kind, tok = s[0], s[1]
        pre: list = []
        if kind == "barrier":
            return [(Barrier(), tok.line)]
        if kind in ("assume", "assert"):
            b = self.bexpr(s[2], pre)
            return pre + [((Assume if kind == "assume" else Assert)(b), tok.line)]
        if kind == "decl":
            if s[3] is None:
                return []
            return self.stmt(("assign", tok, s[2], s[3]))
        if kind == "assign":
            name, rhs = s[2], s[3]
            self.check_scalar(name, tok)
            if isinstance(rhs, _RawRead):
                self.check_array(rhs.array, rhs.tok)
                idx = self.expr(rhs.index, pre)
                return pre + [(Load(name, rhs.array, idx), tok.line)]
            e = self.expr(rhs, pre)
            return pre + [(Assign(name, e), tok.line)]
        if kind == "store":
            name = s[2]
            self.check_array(name, tok)
            idx = self.expr(s[3], pre)
            val = self.expr(s[4], pre)
            return pre + [(Store(name, idx, val), tok.line)]
        if kind == "if":
            b = self.bexpr(s[2], pre)
            return pre + [(If(b, self.block(s[3]), self.block(s[4])), tok.line)]
        if kind == "while":
            b = self.bexpr(s[2], pre)
            body = self.block(s[3])
            if pre:
                # re-evaluate hoisted loads at the end of each iteration
                body = body + tuple(pre)
            return pre + [(While(b, body), tok.line)]
        raise AssertionError(kind)


def _assigned_names(stmts, out: list, declared: list):
    for s in stmts:
        kind = s[0]
        if kind == "assign" and s[2] not in out:
            out.append(s[2])
        elif kind == "decl" and s[2] not in declared:
            declared.append(s[2])
        elif kind == "if":
            _assigned_names(s[3], out, declared)
            _assigned_names(s[4], out, declared)
        elif kind == "while":
            _assigned_names(s[3], out, declared)


def parse_kernel(text: str) -> Kernel:
    """Parse kernel source text; raises ``KernelSyntaxError`` with diagnostics."""
    p = _Parser(text)
    name, params, requires, body = p.kernel()
    diags: list[Diagnostic] = []
    seen = set()
    plist = []
    for prm, tok in params:
        if prm.name in seen:
            diags.append(Diagnostic(tok.line, tok.col, f"duplicate parameter {prm.name}"))
        seen.add(prm.name)
        plist.append(prm)
    assigned: list[str] = []
    declared: list[str] = []
    _assigned_names(body, assigned, declared)
    r = _Resolver(plist, [d for d in declared if d not in seen], assigned)
    block = r.block(body)
    req = None
    if requires is not None:
        pre: list = []
        req = r.bexpr(requires, pre)
        if pre:
            diags.append(Diagnostic(0, 0, "array reads are not allowed in requires"))
    diags.extend(r.diags)
    if diags:
        raise KernelSyntaxError(diags)
    kernel = Kernel(name, tuple(plist), tuple(r.locals), _lineless(block), req)
    kernel._lines = block  # type: ignore[attr-defined]
    return build_cfg(kernel)


def _lineless(block) -> tuple:
    out = []
    for item, _line in block:
        if isinstance(item, If):
            item = If(item.cond, _lineless(item.then), _lineless(item.orelse))
        elif isinstance(item, While):
            item = While(item.cond, _lineless(item.body))
        out.append(item)
    return tuple(out)


# ---------------------------------------------------------------------------
# CFG


def build_cfg(kernel: Kernel) -> Kernel:
    """Lay out ``kernel.body`` as a CFG and validate it.

    Returns a copy with ``nodes``/``succ`` filled in.  Node ids are assigned
    in breadth-first order from ``start`` (id 0); ``exit`` gets the last id.
    """
    raw_nodes: list[tuple[str, object, int]] = [("start", None, 0), ("exit", None, 0)]
    raw_succ: dict[int, tuple] = {}
    lined = getattr(kernel, "_lines", None)

    def new(cmd, line=0) -> int:
        raw_nodes.append(("cmd", cmd, line))
        return len(raw_nodes) - 1

    def build(block, succs: tuple) -> tuple:
        for item in reversed(block):
            item, line = item if isinstance(item, tuple) else (item, 0)
            if isinstance(item, If):
                t = new(Assume(item.cond), line)
                f = new(Assume(_neg(item.cond)), line)
                raw_succ[t] = build(item.then, succs)
                raw_succ[f] = build(item.orelse, succs)
                succs = (t, f)
            elif isinstance(item, While):
                t = new(Assume(item.cond), line)
                f = new(Assume(_neg(item.cond)), line)
                raw_succ[f] = succs
                raw_succ[t] = build(item.body, (t, f))
                succs = (t, f)
            else:
                n = new(item, line)
                raw_succ[n] = succs
                succs = (n,)
        return succs

    raw_succ[0] = build(lined if lined is not None else kernel.body, (1,))
    raw_succ[1] = ()

    # renumber breadth-first
    order: list[int] = []
    seen = {0}
    q = deque([0])
    while q:
        n = q.popleft()
        if n == 1:
            continue
        order.append(n)
        for m in raw_succ[n]:
            if m not in seen:
                seen.add(m)
                q.append(m)
    order.append(1)
    ren = {old: i for i, old in enumerate(order)}
    nodes = {}
    succ = {}
    for old in order:
        kind, cmd, line = raw_nodes[old]
        nodes[ren[old]] = Node(ren[old], kind, cmd, line)
        succ[ren[old]] = tuple(ren[m] for m in raw_succ[old])
    out = replace(kernel, nodes=nodes, succ=succ, start=0, exit=ren[1], warnings=[])
    validate_cfg(out)
    return out


def validate_cfg(kernel: Kernel) -> None:
    """Check the CFG invariants; unreachable nodes only produce warnings."""
    nodes, succ = kernel.nodes, kernel.succ
    starts = [n for n in nodes.values() if n.kind == "start"]
    exits = [n for n in nodes.values() if n.kind == "exit"]
    if len(starts) != 1 or len(exits) != 1:
        raise CFGError("kernel must have exactly one start and one exit node")
    if succ.get(kernel.exit):
        raise CFGError("exit node has successors")
    for n in nodes:
        for m in succ.get(n, ()):
            if m not in nodes:
                raise CFGError(f"edge {n}->{m} to unknown node")
            if m == kernel.start:
                raise CFGError("start node has a predecessor")
        if n != kernel.exit and not succ.get(n):
            raise CFGError(f"node {n} has no successor")
        out = succ.get(n, ())
        if len(out) > 2:
            raise CFGError(f"node {n} has more than two successors")
        if len(out) == 2:
            a, b = (nodes[m].cmd for m in out)
            if not (isinstance(a, Assume) and isinstance(b, Assume) and _neg(a.cond) == b.cond):
                raise CFGError(f"branch at node {n} is not guarded by assume(b)/assume(!b)")
    seen = {kernel.start}
    q = deque([kernel.start])
    while q:
        n = q.popleft()
        for m in succ.get(n, ()):
            if m not in seen:
                seen.add(m)
                q.append(m)
    for n in nodes:
        if n not in seen:
            kernel.warnings.append(f"node {n} is unreachable from start")


# ---------------------------------------------------------------------------
# Pretty printing

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "%": 2}


def format_expr(e, prec: int = 0) -> str:
    if isinstance(e, Const):
        s = str(e.value)
        return f"({s})" if e.value < 0 and prec > 0 else s
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Tid):
        return "tid"
    if isinstance(e, Size):
        return f"size({e.array})"
    if isinstance(e, Op):
        if e.op == "neg":
            return f"-({format_expr(e.args[0])})"
        if e.op in ("cos", "sqrt"):
            return f"{e.op}({format_expr(e.args[0])})"
        p = _PREC[e.op]
        s = f"{format_expr(e.args[0], p)} {e.op} {format_expr(e.args[1], p + 1)}"
        return f"({s})" if p < prec else s
    raise TypeError(f"not a kernel expression: {e!r}")


def format_bexpr(b) -> str:
    if isinstance(b, Lt):
        return f"{format_expr(b.left)} < {format_expr(b.right)}"
    if isinstance(b, Eq):
        return f"{format_expr(b.left)} == {format_expr(b.right)}"
    if isinstance(b, And):
        return f"({format_bexpr(b.left)}) && ({format_bexpr(b.right)})"
    return f"!({format_bexpr(b.arg)})"


def format_command(c) -> str:
    if isinstance(c, Assign):
        return f"{c.var} = {format_expr(c.expr)}"
    if isinstance(c, Store):
        return f"{c.array}[{format_expr(c.index)}] = {format_expr(c.expr)}"
    if isinstance(c, Load):
        return f"{c.var} = {c.array}[{format_expr(c.index)}]"
    if isinstance(c, Barrier):
        return "barrier"
    if isinstance(c, Assume):
        return f"assume({format_bexpr(c.cond)})"
    if isinstance(c, Assert):
        return f"assert({format_bexpr(c.cond)})"
    raise TypeError(c)


def _format_block(block, indent: int, out: list[str]):
    pad = "    " * indent
    for s in block:
        if isinstance(s, If):
            out.append(f"{pad}if ({format_bexpr(s.cond)}) {{")
            _format_block(s.then, indent + 1, out)
            if s.orelse:
                out.append(f"{pad}}} else {{")
                _format_block(s.orelse, indent + 1, out)
            out.append(f"{pad}}}")
        elif isinstance(s, While):
            out.append(f"{pad}while ({format_bexpr(s.cond)}) {{")
            _format_block(s.body, indent + 1, out)
            out.append(f"{pad}}}")
        else:
            out.append(f"{pad}{format_command(s)};")


def format_kernel(kernel: Kernel) -> str:
    params = []
    for p in kernel.params:
        q = "shared " if (p.shared and not p.is_array) else ""
        params.append(f"{q}int {p.name}{'[]' if p.is_array else ''}")
    head = f"kernel {kernel.name}".rstrip() + f"({', '.join(params)})"
    if kernel.requires is not None:
        head += f" requires({format_bexpr(kernel.requires)})"
    out = [head + " {"]
    for v in kernel.locals:
        out.append(f"    int {v};")
    _format_block(kernel.body, 1, out)
    out.append("}")
    return "\n".join(out) + "\n"


def load_kernel(path) -> Kernel:
    with open(path, encoding="utf-8") as fh:
        return parse_kernel(fh.read())
