"""Barrier-interval data-race analysis for a small GPU kernel language."""

from kernrace.frontend import parse_kernel
from kernrace.symexec import analyze
from kernrace.concrete import run_oracle

__all__ = ["parse_kernel", "analyze", "run_oracle"]
__version__ = "0.1.0"
