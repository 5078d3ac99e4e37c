#!/usr/bin/env python3
"""
Simulation errors - shared exception hierarchy
Every module raises a subclass of SimulationError so the CLI and the REST
server can map failures to exit codes / HTTP status in one place.
"""

from typing import Optional


class SimulationError(Exception):
    """Base class for every failure raised by the simulator"""


class GraphError(SimulationError, ValueError):
    """Invalid graph parameters or malformed graph file"""

    def __init__(self, message: str, line: Optional[int] = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class AssumptionError(SimulationError):
    """Graph or objective violates a standing assumption of the algorithm"""


class ObjectiveError(SimulationError, ValueError):
    """Dimension mismatch or a non strongly convex objective"""


class DataError(SimulationError, ValueError):
    """Malformed dataset row"""

    def __init__(self, message: str, line: Optional[int] = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class CompressionError(SimulationError, ValueError):
    """Bad compressor parameters or non-finite input"""


class ConfigError(SimulationError, ValueError):
    """Invalid experiment configuration; carries the offending key"""

    def __init__(self, message: str, key: Optional[str] = None):
        if key is not None:
            message = f"{key}: {message}"
        super().__init__(message)
        self.key = key


class FeasibilityError(SimulationError):
    """Parameter choice outside the region where convergence is guaranteed"""


class SolverError(SimulationError):
    """Linear solve, factorization or Newton iteration failure"""

    def __init__(self, message: str, iteration: Optional[int] = None):
        if iteration is not None:
            message = f"iteration {iteration}: {message}"
        super().__init__(message)
        self.iteration = iteration


class DiagnosticError(SimulationError):
    """A consistency check between two views of the run state failed"""


def error_type(exc: Exception) -> str:
    """snake_case class name used in JSON error payloads"""
    name = type(exc).__name__
    out = []
    for i, ch in enumerate(name):
        if ch.isupper() and i > 0:
            out.append('_')
        out.append(ch.lower())
    return ''.join(out)
