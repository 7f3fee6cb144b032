"""
This module provides the exceptions raised by `pdtour`.

Everything derives from `PdtourError`, itself a `ValueError`, so callers that only care about "bad input" can catch
the standard exception.  Only `pdtour.cli` turns these into exit codes.

Exported types:
    PdtourError and every subclass below
"""


class PdtourError(ValueError):
    """Root of every error raised by the library."""


class InvalidSize(PdtourError):
    """A pair count below one (or otherwise unusable)."""


class NodeOutOfRange(PdtourError):
    """A node id outside 0..2n."""


class DepotHasNoPair(PdtourError):
    """`pair_of` was asked for the partner of the depot."""


class ParseError(PdtourError):
    """An instance, tour, or move text could not be parsed."""

    def __init__(self, message: str, line_number: int | None = None):
        self.line_number = line_number
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)


class NotAPermutation(PdtourError):
    """A sequence is not a permutation of 1..2n."""


class PrecedenceViolated(PdtourError):
    """A delivery is visited before its pickup."""

    def __init__(self, pair: tuple[int, int]):
        self.pair = pair
        super().__init__(f"delivery {pair[1]} precedes its pickup {pair[0]}")


class InvalidOrder(PdtourError):
    """A pickup order is not a permutation of 1..n."""


class DimensionError(PdtourError):
    """Objects built for different pair counts (or shapes) were combined."""


class DimensionMismatch(DimensionError):
    """Features do not fit the network they are fed to."""


class TooLarge(PdtourError):
    """An exhaustive operation was requested above its enumeration cap."""

    def __init__(self, n: int, cap: int):
        self.n = n
        self.cap = cap
        super().__init__(f"n={n} is above the enumeration cap {cap}")


class MoveOutOfRange(PdtourError):
    """A move refers to positions or nodes that do not exist in the tour."""


class MoveIllTyped(PdtourError):
    """A move's positions hold the wrong kind of node for its operator."""


class PositionClash(PdtourError):
    """An insertion targets the same position for the pickup and the delivery."""


class IrreversibleInsertion(PdtourError):
    """An insertion that no composition of N1/N2/N3 moves can reproduce."""


class EmptyBuffer(PdtourError):
    """A policy update was asked for with no stored transitions."""


class InvalidConfig(PdtourError):
    """A configuration value is out of its documented range."""


class CheckpointError(PdtourError):
    """A checkpoint file is truncated, has the wrong header, or the wrong dimensions."""


class SearchBudgetExceeded(IrreversibleInsertion):
    """The exchange search gave up before it could prove or disprove that a chain exists."""
