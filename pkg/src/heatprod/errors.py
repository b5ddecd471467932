"""Exception types shared by all modules."""

from __future__ import annotations


class InvalidArgumentError(ValueError):
    """An argument violates a documented precondition."""


class ResourceLimitError(RuntimeError):
    """A request would exceed a hard resource guard (e.g. Fock dimension)."""


class NumericInconsistencyError(ArithmeticError):
    """Two mathematically equal quantities disagree beyond tolerance."""


class ConfigError(InvalidArgumentError):
    """Invalid scenario configuration.

    Parameters
    ----------
    fields : list of str
        Names of the offending configuration fields.
    messages : list of str
        One human readable message per offending field.
    """

    def __init__(self, fields: list[str], messages: list[str]):
        self.fields = list(fields)
        self.messages = list(messages)
        body = "; ".join(f"{f}: {m}" for f, m in zip(fields, messages))
        super().__init__(f"invalid configuration ({body})")
