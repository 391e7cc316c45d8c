"""Decompiler from AMD GCN assembly listings (CLRX syntax) to OpenCL C."""

from .errors import DecompileError
from .pipeline import DecompiledKernel, DecompileResult, Diagnostic, Options, decompile_kernel, decompile_text

__all__ = [
    "DecompileError",
    "DecompiledKernel",
    "DecompileResult",
    "Diagnostic",
    "Options",
    "decompile_kernel",
    "decompile_text",
]
__version__ = "0.1.0"
