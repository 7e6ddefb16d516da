"""Exception hierarchy shared across the twin."""

from __future__ import annotations


class TwinError(Exception):
    """Base class for all errors raised by ndtwin."""

    code = 1000


# --- knowledge graph -------------------------------------------------------


class UnknownNodeReference(TwinError):
    code = 1010


class SchemaViolation(TwinError):
    code = 1011


class ClosedSnapshot(TwinError):
    code = 1012


class InvalidQuery(TwinError):
    code = 1013


class UnknownScope(TwinError):
    code = 1014


# --- snapshots ---------------------------------------------------------------


class UnknownSnapshot(TwinError):
    code = 1020


class BranchExists(TwinError):
    code = 1021


class UnknownBranch(TwinError):
    code = 1022


class StaleHead(TwinError):
    code = 1023


class EmptySnapshot(TwinError):
    code = 1024


class NoCommonAncestor(TwinError):
    code = 1025


# --- ingestion -----------------------------------------------------------------


class ParseError(TwinError):
    code = 1030

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.line = line
        self.column = column
        where = f" (line {line}, column {column})" if line is not None else ""
        super().__init__(f"{message}{where}")


class ValidationError(TwinError):
    """Raised with every diagnostic found, not only the first."""

    code = 1031

    def __init__(self, diagnostics: list[str]):
        self.diagnostics = list(diagnostics)
        super().__init__("; ".join(self.diagnostics))


# --- dataplane -------------------------------------------------------------------


class NonConvergence(TwinError):
    """Carries the tables of the last iteration in ``result``."""

    code = 1040

    def __init__(self, message: str, result: object = None):
        self.result = result
        super().__init__(message)


class UnknownIngressDevice(TwinError):
    code = 1041


class HeaderSpaceTooLarge(TwinError):
    code = 1042


class UnknownAcl(TwinError):
    code = 1043


class MissingTopologyLink(TwinError):
    code = 1044


# --- tools / agents / eval ---------------------------------------------------------


class InvalidParams(TwinError):
    code = -32602


class ToolError(TwinError):
    code = 1050


class UnknownDevice(TwinError):
    code = 1051


class UnknownTool(TwinError):
    code = 1060


class BudgetExhausted(TwinError):
    code = 1061


class UnknownCategory(TwinError):
    code = 1062


class UnknownTicket(TwinError):
    code = 1063


class EmptyRecordSet(TwinError):
    code = 1070


class DeltaError(TwinError):
    code = 1071
