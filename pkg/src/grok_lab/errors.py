# -*- coding: utf-8 -*-


class GrokLabError(Exception):
    """Base class for errors raised by grok_lab."""


class ShapeError(GrokLabError, ValueError):
    pass


class NonFiniteError(GrokLabError, ArithmeticError):
    """A NaN or Inf appeared; `op` names where it was produced."""

    def __init__(self, op: str, detail: str = ""):
        self.op = op
        msg = f"non-finite values produced by {op}"
        if detail:
            msg = f"{msg} ({detail})"
        super().__init__(msg)


class UnsupportedTaskError(GrokLabError, ValueError):
    pass


class CheckpointError(GrokLabError, OSError):
    pass
