"""Exception hierarchy for the decompiler."""

from typing import Optional


class DecompileError(Exception):
    """Base class for every error raised by the decompiler."""

    def __init__(self, message: str, line: Optional[int] = None) -> None:
        super().__init__(message)
        self.message = message
        self.line = line

    def __str__(self) -> str:
        if self.line is not None:
            return f"line {self.line}: {self.message}"
        return self.message


class StructuralFormatError(DecompileError):
    pass


class ConfigParseError(DecompileError):
    pass


class InstructionParseError(DecompileError):
    def __init__(self, message: str, source_text: str, line: Optional[int] = None) -> None:
        super().__init__(message, line)
        self.source_text = source_text


class AbiConstructionError(DecompileError):
    pass


class GraphConstructionError(DecompileError):
    pass


class OracleUnsupported(DecompileError):
    """The oracle cannot model the given program; callers should skip, never guess."""
