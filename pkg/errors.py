"""
Exception hierarchy shared by every stage of lattice generation.

Each class carries the CLI exit code it maps to, so `main.py` can turn any
failure into a distinct process status without a lookup table.
"""

from typing import Optional, Tuple


class LatticeError(Exception):
    """Base class for every error the generator reports on purpose"""

    exit_code = 1


class SpecError(LatticeError, ValueError):
    """Invalid spec document, unknown catalog id, or mismatched parameter keys"""

    exit_code = 3

    def __init__(self, message: str, path: Optional[str] = None):
        self.path = path
        self.reason = message
        super().__init__(f"{path}: {message}" if path else message)


class ExpressionError(LatticeError, ValueError):
    """Syntax error or unknown name in a parameter expression"""

    exit_code = 4

    def __init__(self, message: str, offset: Optional[int] = None, source: Optional[str] = None):
        self.offset = offset
        self.source = source
        self.reason = message
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)


class UnboundVariableError(ExpressionError):
    """An expression references a variable with no binding"""

    def __init__(self, name: str, offset: Optional[int] = None, source: Optional[str] = None):
        self.name = name
        super().__init__(f"unbound variable '{name}'", offset=offset, source=source)


class DomainError(ExpressionError):
    """Evaluation left the real domain (sqrt of negative, ln of non-positive, x/0, overflow)"""


class ParameterError(LatticeError, ValueError):
    """A resolved parameter value violates its invariant"""

    exit_code = 5

    def __init__(self, message: str, key: Optional[str] = None, cell: Optional[Tuple[int, int, int]] = None):
        self.key = key
        self.cell = cell
        self.reason = message
        where = []
        if cell is not None:
            where.append(f"cell {tuple(int(c) for c in cell)}")
        if key is not None:
            where.append(f"'{key}'")
        prefix = " ".join(where)
        super().__init__(f"{prefix}: {message}" if prefix else message)


class MeshingError(LatticeError, RuntimeError):
    """Empty surface, inconsistent chunk sampling, or a degenerate mesh"""

    exit_code = 6


class LatticeIOError(LatticeError, OSError):
    """Reading a spec or writing an output failed"""

    exit_code = 7


class ExportError(LatticeIOError):
    """STL or report could not be written"""
