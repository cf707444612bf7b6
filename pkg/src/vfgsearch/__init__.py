"""Semantic code search over variable-based flow graphs built from LLVM IR."""

__version__ = "0.1.0"
