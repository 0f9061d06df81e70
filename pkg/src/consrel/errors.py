"""Error types shared across the package.

Every raised error carries a stable string ``code`` so batch callers (and the
command-line front end) can dispatch on it without parsing messages.
"""


class ConsrelError(ValueError):
    """Base error with a machine-readable code."""

    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code

    def __str__(self) -> str:
        return f"{self.code}: {super().__str__()}"


class StructureError(ConsrelError):
    """Invalid protocol structure or threshold resolution."""


class ParamError(ConsrelError):
    """Invalid numeric parameters (probabilities, counts, budgets)."""


class ComputationError(ConsrelError):
    """A computation was requested outside its supported regime."""
