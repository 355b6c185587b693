from __future__ import annotations


class DSFactorError(Exception):
    """Base error. `exit_code` is what the CLI returns when this escapes a command."""

    exit_code = 3


class ValidationError(DSFactorError):
    exit_code = 1


class PlanError(ValidationError):
    def __init__(self, constraint: str, detail: str):
        self.constraint = constraint
        super().__init__(f"plan violates {constraint}: {detail}")


class ConfigError(ValidationError):
    pass


class FormatError(DSFactorError):
    exit_code = 2


class NumericError(DSFactorError):
    exit_code = 3


class STFStateError(DSFactorError):
    exit_code = 3
