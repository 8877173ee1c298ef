"""Command-line driver: analyzer, oracle, verdict comparison and corpus gate.

Usage::

    kernrace [run] KERNEL.kl [--mode analyze|oracle|both] [--threads N]
             [--oracle-semantics strict|epoch] [--inputs FILE]
             [--loop-bound N] [--max-heaps N] [--solver EXE] [--output text|json]
    kernrace corpus-check [--expectations FILE] [--output text|json]

Exit codes: 0 race-free, 1 race, 2 runtime or definite error, 3 inconclusive,
4 usage or parse error.
"""

from __future__ import annotations

import argparse
import json
import re
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from importlib import resources
from pathlib import Path

from kernrace.concrete import LaunchError, OracleBudgetExceeded, run_oracle
from kernrace.frontend import CFGError, KernelSyntaxError, parse_kernel
from kernrace.prover import ExternalSolver, solver_from_env
from kernrace.symexec import Options, SymbolicExecutor

EXIT_OK, EXIT_RACE, EXIT_ERROR, EXIT_INCONCLUSIVE, EXIT_USAGE = range(5)

AGREE = "agree"
OVER = "analyzer-over-approximates"
MISS = "known-unsound-miss"
UNEXPECTED = "disagree-unexpected"


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    kernel: str
    mode: str = "analyze"
    threads: int = 2
    semantics: str = "epoch"
    inputs: str | None = None
    loop_bound: int = 3
    max_heaps: int = 64
    solver: str | None = None
    output: str = "text"


# ---------------------------------------------------------------------------
# inputs


_INPUT_LINE = re.compile(r"^\s*([A-Za-z_]\w*)\s*=\s*(.+?)\s*$")


def parse_inputs(text: str) -> dict:
    """``name = [v0, v1, ...]`` and ``name = v`` lines; ``#`` starts a comment."""
    out = {}
    for no, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = _INPUT_LINE.match(line)
        if m is None:
            raise UsageError(f"inputs line {no}: expected 'name = value'")
        name, value = m.groups()
        try:
            parsed = json.loads(value)
        except json.JSONDecodeError:
            raise UsageError(f"inputs line {no}: cannot read value {value!r}") from None
        ok = isinstance(parsed, int) or (
            isinstance(parsed, list) and all(isinstance(v, int) for v in parsed)
        )
        if not ok or isinstance(parsed, bool):
            raise UsageError(f"inputs line {no}: values must be integers or integer lists")
        out[name] = parsed
    return out


def format_inputs(inputs: dict) -> str:
    return "".join(f"{k} = {json.dumps(v)}\n" for k, v in inputs.items())


# ---------------------------------------------------------------------------
# verdicts


def classify_agreement(analyzer: str | None, oracle: str | None) -> str | None:
    if analyzer is None or oracle is None:
        return None
    if analyzer == "inconclusive" or oracle == "inconclusive":
        return OVER
    table = {
        ("race-free", "race-free"): AGREE,
        ("potential-race", "race"): AGREE,
        ("definite-error", "runtime-error"): AGREE,
        ("race-free", "race"): MISS,
        ("potential-race", "race-free"): OVER,
        ("definite-error", "race"): OVER,
    }
    return table.get((analyzer, oracle), UNEXPECTED)


def exit_code(report: dict) -> int:
    """Exit status as a function of the structured report alone."""
    a = (report.get("analyzer") or {}).get("verdict")
    o = (report.get("oracle") or {}).get("classification")
    if a == "definite-error" or o == "runtime-error":
        return EXIT_ERROR
    if a == "potential-race" or o == "race":
        return EXIT_RACE
    if a == "inconclusive" or o == "inconclusive":
        return EXIT_INCONCLUSIVE
    return EXIT_OK


# ---------------------------------------------------------------------------
# running


def _load_inputs(cfg: RunConfig) -> dict:
    path = cfg.inputs
    if path is None:
        guess = Path(cfg.kernel).with_suffix(".inputs")
        if not guess.exists():
            raise UsageError("the oracle needs concrete inputs (--inputs FILE)")
        path = str(guess)
    try:
        return parse_inputs(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise UsageError(f"cannot read inputs: {exc}") from None


def _solver(cfg: RunConfig):
    if cfg.solver:
        return ExternalSolver(cfg.solver)
    return solver_from_env()


def _analyze(kernel, cfg: RunConfig):
    t0 = time.perf_counter()
    opts = Options(loop_bound=cfg.loop_bound, max_heaps=cfg.max_heaps, solver=_solver(cfg))
    report = SymbolicExecutor(kernel, opts).analyze().to_dict()
    report["stats"].pop("seconds", None)
    return report, time.perf_counter() - t0


def _oracle(kernel, cfg: RunConfig, inputs: dict):
    t0 = time.perf_counter()
    try:
        verdict = run_oracle(kernel, cfg.threads, inputs, cfg.semantics).to_dict()
    except OracleBudgetExceeded as exc:
        verdict = {
            "classification": "inconclusive", "mode": cfg.semantics, "threads": cfg.threads,
            "reason": str(exc), "witness": [], "witness_states": [], "epoch_digests": {},
            "schedule_count": None, "states_explored": 0,
        }
    return verdict, time.perf_counter() - t0


def run(cfg: RunConfig) -> tuple[dict, int]:
    """Build the combined report for one kernel; raises UsageError on bad input."""
    if cfg.mode not in ("analyze", "oracle", "both"):
        raise UsageError(f"unknown mode {cfg.mode!r}")
    if cfg.semantics not in ("strict", "epoch"):
        raise UsageError(f"unknown oracle semantics {cfg.semantics!r}")
    if cfg.threads < 1:
        raise UsageError("--threads must be at least 1")
    try:
        text = Path(cfg.kernel).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read kernel: {exc}") from None
    try:
        kernel = parse_kernel(text)
    except KernelSyntaxError as exc:
        raise UsageError("\n".join(f"{cfg.kernel}:{d}" for d in exc.diagnostics)) from None
    except CFGError as exc:
        raise UsageError(f"{cfg.kernel}: {exc}") from None
    inputs = _load_inputs(cfg) if cfg.mode != "analyze" else None

    analyzer = oracle = None
    timing = {}
    with ThreadPoolExecutor(max_workers=2) as pool:
        fa = pool.submit(_analyze, kernel, cfg) if cfg.mode != "oracle" else None
        fo = pool.submit(_oracle, kernel, cfg, inputs) if cfg.mode != "analyze" else None
        try:
            if fa is not None:
                analyzer, timing["analyzer_seconds"] = fa.result()
            if fo is not None:
                oracle, timing["oracle_seconds"] = fo.result()
        except LaunchError as exc:
            raise UsageError(f"bad launch: {exc}") from None
    report = {
        "kernel": str(cfg.kernel),
        "config": {k: v for k, v in asdict(cfg).items() if k not in ("kernel", "output", "solver")},
        "warnings": list(kernel.warnings),
        "analyzer": analyzer,
        "oracle": oracle,
        "agreement": classify_agreement(
            analyzer and analyzer["verdict"], oracle and oracle["classification"]
        ),
        "timing": {k: round(v, 4) for k, v in timing.items()},
    }
    code = exit_code(report)
    report["exit_code"] = code
    return report, code


# ---------------------------------------------------------------------------
# rendering


def format_text(report: dict) -> str:
    lines = [f"kernel: {report['kernel']}"]
    for w in report.get("warnings", []):
        lines.append(f"warning: {w}")
    a = report.get("analyzer")
    if a is not None:
        lines.append(f"analyzer: {a['verdict']}")
        for f in a["findings"]:
            where = f"line {f['line']}" if f["line"] else "exit"
            lines.append(f"  {f['kind']} at {where}: {f['message']}")
            w = f["witness"]
            if "location" in w:
                lines.append(f"    cell {w['address'][0]} / {w['address'][1]}")
                lines.append(f"    values {w['values'][0]} vs {w['values'][1]}")
        for n in a["notes"]:
            lines.append(f"  note: {n}")
    o = report.get("oracle")
    if o is not None:
        head = f"oracle ({o['mode']}, {o['threads']} threads): {o['classification']}"
        lines.append(head + (f": {o['reason']}" if o["reason"] else ""))
        for idx, sched in enumerate(o["witness"]):
            steps = " ".join(f"t{s[0]}:{s[2]}" for s in sched)
            lines.append(f"  schedule {idx + 1}: {steps}")
            if idx < len(o["witness_states"]):
                lines.append(f"    shared state: {json.dumps(o['witness_states'][idx], sort_keys=True)}")
    if report.get("agreement"):
        lines.append(f"agreement: {report['agreement']}")
    return "\n".join(lines)


def dump_json(doc) -> str:
    return json.dumps(doc, indent=2, sort_keys=True, ensure_ascii=False)


# ---------------------------------------------------------------------------
# corpus gate


def corpus_dir() -> Path:
    return Path(str(resources.files("kernrace") / "corpus"))


def load_expectations(path: Path | None = None) -> list[dict]:
    path = path or corpus_dir() / "expectations.json"
    return json.loads(Path(path).read_text(encoding="utf-8"))["runs"]


def corpus_check(expectations: Path | None = None, root: Path | None = None) -> tuple[dict, bool]:
    """Run every pinned corpus configuration and diff against expectations."""
    root = root or corpus_dir()
    rows, mismatches, reports = [], [], {}
    for exp in load_expectations(expectations):
        name = exp["kernel"]
        cfg = RunConfig(
            kernel=str(root / f"{name}.kl"), mode="both", threads=exp["threads"],
            semantics=exp.get("semantics", "epoch"), inputs=str(root / f"{name}.inputs"),
        )
        report, _ = run(cfg)
        report["kernel"] = f"{name}.kl"
        report["config"]["inputs"] = f"{name}.inputs"
        key = f"{name}@{exp['threads']}"
        reports[key] = report
        observed = {
            "analyzer": report["analyzer"]["verdict"],
            "oracle": report["oracle"]["classification"],
            "agreement": report["agreement"],
        }
        row = {"run": key, **observed}
        for field_ in ("analyzer", "oracle", "agreement"):
            if exp[field_] != observed[field_]:
                mismatches.append({"run": key, "field": field_, "expected": exp[field_],
                                   "observed": observed[field_]})
        rows.append(row)
    ok = not mismatches
    return {"ok": ok, "rows": rows, "mismatches": mismatches, "reports": reports}, ok


def format_summary(doc: dict) -> str:
    width = max((len(r["run"]) for r in doc["rows"]), default=3)
    lines = [f"{'run':<{width}}  {'analyzer':<15} {'oracle':<14} agreement"]
    for r in doc["rows"]:
        lines.append(f"{r['run']:<{width}}  {r['analyzer']:<15} {r['oracle']:<14} {r['agreement']}")
    for m in doc["mismatches"]:
        lines.append(f"MISMATCH {m['run']} {m['field']}: expected {m['expected']}, observed {m['observed']}")
    lines.append("corpus ok" if doc["ok"] else f"{len(doc['mismatches'])} mismatch(es)")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# entry point


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="kernrace", description="Barrier race analysis for kernels.")
    sub = p.add_subparsers(dest="command")
    r = sub.add_parser("run", help="analyze a kernel and/or run the oracle")
    r.add_argument("kernel")
    r.add_argument("--mode", choices=["analyze", "oracle", "both"], default="analyze")
    r.add_argument("--threads", type=int, default=2)
    r.add_argument("--oracle-semantics", dest="semantics", choices=["strict", "epoch"],
                   default="epoch")
    r.add_argument("--inputs")
    r.add_argument("--loop-bound", type=int, default=3)
    r.add_argument("--max-heaps", type=int, default=64)
    r.add_argument("--solver", help="SMT-LIB2 solver executable (or set KERNRACE_SOLVER)")
    r.add_argument("--output", choices=["text", "json"], default="text")
    c = sub.add_parser("corpus-check", help="compare the bundled corpus with pinned verdicts")
    c.add_argument("--expectations")
    c.add_argument("--output", choices=["text", "json"], default="text")
    return p


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    if argv and argv[0] not in ("run", "corpus-check", "-h", "--help"):
        argv.insert(0, "run")
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    try:
        if args.command == "corpus-check":
            exp = Path(args.expectations) if args.expectations else None
            doc, ok = corpus_check(exp)
            print(dump_json(doc) if args.output == "json" else format_summary(doc))
            return EXIT_OK if ok else EXIT_RACE
        cfg = RunConfig(
            kernel=args.kernel, mode=args.mode, threads=args.threads, semantics=args.semantics,
            inputs=args.inputs, loop_bound=args.loop_bound, max_heaps=args.max_heaps,
            solver=args.solver, output=args.output,
        )
        report, code = run(cfg)
    except (UsageError, OSError, json.JSONDecodeError, KeyError) as exc:
        print(f"kernrace: {exc}", file=sys.stderr)
        return EXIT_USAGE
    print(dump_json(report) if cfg.output == "json" else format_text(report))
    return code


if __name__ == "__main__":
    sys.exit(main())
