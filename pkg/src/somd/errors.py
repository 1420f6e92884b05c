from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional

from .frontend.ast import NOLOC, Loc


@dataclass(frozen=True)
class Diagnostic:
    code: str
    message: str
    loc: Loc = NOLOC
    severity: str = "error"  # error | warning
    method: Optional[str] = None

    def __str__(self) -> str:
        where = f"{self.loc.line}:{self.loc.col}"
        return f"{where}: {self.severity}: {self.code}: {self.message}"

    def to_json(self) -> dict:
        return {
            "line": self.loc.line,
            "column": self.loc.col,
            "code": self.code,
            "severity": self.severity,
            "message": self.message,
            "method": self.method,
        }


def diagnostics_json(diags) -> str:
    return json.dumps([d.to_json() for d in diags], indent=2)


class SomdError(Exception):
    """Base class for every error raised by the toolchain."""

    code = "ERROR"

    def __init__(self, message: str, loc: Loc = NOLOC, code: Optional[str] = None):
        super().__init__(message)
        self.message = message
        self.loc = loc
        if code is not None:
            self.code = code

    def __str__(self) -> str:
        if self.loc != NOLOC:
            return f"{self.loc}: {self.code}: {self.message}"
        return f"{self.code}: {self.message}"

    def diagnostic(self) -> Diagnostic:
        return Diagnostic(self.code, self.message, self.loc)


class ParseError(SomdError):
    code = "SYNTAX_ERROR"


class CompileError(SomdError):
    """Raised when validation produced errors; carries all of them."""

    code = "INVALID_PROGRAM"

    def __init__(self, diagnostics):
        self.diagnostics = list(diagnostics)
        first = self.diagnostics[0] if self.diagnostics else None
        msg = "; ".join(str(d) for d in self.diagnostics if d.severity == "error")
        super().__init__(msg or "invalid program", first.loc if first else NOLOC)


class SomdRuntimeError(SomdError):
    """Out-of-bounds, division by zero and friends, at a source location."""

    code = "RUNTIME_ERROR"


class LoweringError(SomdError):
    code = "LOWERING_ERROR"


class ReductionError(SomdError):
    code = "REDUCTION_ERROR"


class DeadlockError(SomdError):
    code = "DEADLOCK"


class MIFailure(SomdError):
    """A method instance failed; the invocation was aborted."""

    code = "MI_FAILURE"

    def __init__(self, rank: int, cause: BaseException):
        loc = getattr(cause, "loc", NOLOC)
        super().__init__(f"method instance {rank} failed: {cause}", loc)
        self.rank = rank
        self.cause = cause


class DeviceFault(SomdError):
    code = "DEVICE_FAULT"


class HazardError(SomdError):
    code = "CROSS_GROUP_HAZARD"


class LedgerViolation(SomdError):
    code = "LEDGER_VIOLATION"


class ConfigError(SomdError):
    code = "CONFIG_ERROR"
