"""
This module provides the feasible-tour data model.

A `Tour` is the visiting order of the 2n non-depot nodes; the depot is implicit at both ends.  Positions are 1-based
over 1..2n, so for a pickup i, `tour.pos[i]` is the position the literature writes p_i, and `tour.pos[n+i]` is d_{n+i}.
A tour is feasible when every pickup comes before its delivery.  Tours are values: nothing in `pdtour` mutates one in
place; operators build new ones.

Maximal blocks are the canonical decomposition of a tour into alternating runs of pickups and deliveries.  The first
block of a feasible tour is always a pickup block and the last is always a delivery block.

The small-n oracles (`count_feasible`, `enumerate_feasible`, `enumerate_by_filter`) back the exact solver and the
verification suites.

Exported types:
    Block:  one maximal run of same-kind nodes, as inclusive positions
    Tour:   an immutable feasible tour with its inverse position index

Exported functions:
    canonical_initial
    count_all
    count_feasible
    enumerate_by_filter
    enumerate_feasible
    from_sequence
    is_feasible
    maximal_blocks
    parse_tour
    prefix_balances
    random_tour
    render_tour
    tour_cost
    type_pattern
"""

import itertools
import logging
import math
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from pdtour.errors import (
    DimensionError,
    InvalidOrder,
    InvalidSize,
    NotAPermutation,
    ParseError,
    PrecedenceViolated,
    TooLarge,
)
from pdtour.instance import Instance, NodeKind

DEFAULT_ENUMERATION_CAP = 6
DEFAULT_FILTER_CAP = 4


@dataclass(frozen=True)
class Tour:
    """
    A feasible tour over `n` pairs.

    Attributes:
        n:      number of pairs
        seq:    the 2n visited nodes in order, depot excluded
        pos:    `pos[node]` is the 1-based position of `node` in `seq`; `pos[0]` is 0
    """

    n: int
    seq: tuple[int, ...]
    pos: tuple[int, ...]

    @classmethod
    def trusted(cls, seq: Sequence[int], n: int) -> "Tour":
        """Build a tour from a sequence already known to be a feasible permutation (operators use this)."""
        pos = [0] * (2 * n + 1)
        for position, node in enumerate(seq, start=1):
            pos[node] = position
        return cls(n, tuple(seq), tuple(pos))

    def node_at(self, position: int) -> int:
        return self.seq[position - 1]

    def is_pickup_at(self, position: int) -> bool:
        return self.seq[position - 1] <= self.n

    def validated(self) -> "Tour":
        """Re-run the full feasibility check; returns `self` or raises."""
        return from_sequence(self.seq, self.n)

    def __len__(self) -> int:
        return len(self.seq)

    def __str__(self) -> str:
        return render_tour(self)


@dataclass(frozen=True)
class Block:
    """
    A contiguous run of same-kind nodes.

    Attributes:
        kind:   `NodeKind.PICKUP` or `NodeKind.DELIVERY`
        start:  first position of the run (inclusive, 1-based)
        end:    last position of the run (inclusive)
    """

    kind: NodeKind
    start: int
    end: int

    @property
    def size(self) -> int:
        return self.end - self.start + 1

    def positions(self) -> range:
        return range(self.start, self.end + 1)


def _precedence_violation(seq: Sequence[int], n: int) -> tuple[int, int] | None:
    seen: set[int] = set()
    for node in seq:
        if node > n and node - n not in seen:
            return node - n, node
        seen.add(node)
    return None


def from_sequence(seq: Sequence[int], n: int) -> Tour:
    """
    Validate `seq` as a tour over `n` pairs.

    Takes two arguments:
        seq:    the visited nodes in order, without the depot
        n:      the number of pairs

    Returns: the `Tour`.  Raises `NotAPermutation` when `seq` is not a permutation of 1..2n, and `PrecedenceViolated`
    naming the first delivery found ahead of its pickup.
    """
    if n < 1:
        raise InvalidSize(f"a tour needs at least one pair, got n={n}")
    nodes = [int(node) for node in seq]
    if len(nodes) != 2 * n or set(nodes) != set(range(1, 2 * n + 1)):
        raise NotAPermutation(f"expected a permutation of 1..{2 * n}, got {nodes}")
    violation = _precedence_violation(nodes, n)
    if violation is not None:
        raise PrecedenceViolated(violation)
    return Tour.trusted(nodes, n)


def is_feasible(seq: Sequence[int], n: int) -> bool:
    """`True` when `seq` is a permutation of 1..2n with every pickup ahead of its delivery."""
    nodes = list(seq)
    if len(nodes) != 2 * n or set(nodes) != set(range(1, 2 * n + 1)):
        return False
    return _precedence_violation(nodes, n) is None


def canonical_initial(instance: Instance, order: Sequence[int]) -> Tour:
    """Visit the pickups in `order`, each one immediately followed by its delivery."""
    n = instance.n
    pickups = [int(i) for i in order]
    if sorted(pickups) != list(range(1, n + 1)):
        raise InvalidOrder(f"expected a permutation of 1..{n}, got {pickups}")
    seq = []
    for i in pickups:
        seq.extend((i, n + i))
    return Tour.trusted(seq, n)


def tour_cost(tour: Tour, instance: Instance) -> float:
    """Total travel cost from the depot through `tour.seq` and back to the depot."""
    if tour.n != instance.n:
        raise DimensionError(f"tour has n={tour.n} but the instance has n={instance.n}")
    table = instance.table
    total = 0.0
    previous = 0
    for node in tour.seq:
        total += table[previous][node]
        previous = node
    return total + table[previous][0]


def maximal_blocks(tour: Tour) -> list[Block]:
    """Split `tour` into maximal alternating pickup and delivery runs, in visiting order."""
    blocks: list[Block] = []
    start = 1
    for position in range(2, len(tour.seq) + 2):
        if position > len(tour.seq) or tour.is_pickup_at(position) != tour.is_pickup_at(start):
            kind = NodeKind.PICKUP if tour.is_pickup_at(start) else NodeKind.DELIVERY
            blocks.append(Block(kind, start, position - 1))
            start = position
    return blocks


def type_pattern(tour: Tour) -> str:
    """The tour as a string of "P" and "D", one letter per position."""
    return "".join("P" if node <= tour.n else "D" for node in tour.seq)


def prefix_balances(tour: Tour) -> list[int]:
    """Pickups minus deliveries over each prefix of `tour`, for prefix lengths 1..2n."""
    balances = []
    balance = 0
    for node in tour.seq:
        balance += 1 if node <= tour.n else -1
        balances.append(balance)
    return balances


def count_all(n: int) -> int:
    """Number of permutations of the 2n non-depot nodes, feasible or not."""
    if n < 1:
        raise InvalidSize(f"n must be at least 1, got {n}")
    return math.factorial(2 * n)


def count_feasible(n: int) -> int:
    """Number of feasible tours over `n` pairs: (2n)! / 2^n."""
    return count_all(n) // 2**n


def enumerate_feasible(n: int, cap: int = DEFAULT_ENUMERATION_CAP) -> Iterator[Tour]:
    """
    Yield every feasible tour over `n` pairs exactly once.

    Each pickup permutation is completed by inserting the deliveries from the last pickup back to the first; the
    delivery of the k-th pickup may go into any slot after it, which gives 1·3·5·…·(2n−1) completions per permutation.
    Raises `TooLarge` immediately (not on first iteration) when `n` is above `cap`.
    """
    if n < 1:
        raise InvalidSize(f"n must be at least 1, got {n}")
    if n > cap:
        raise TooLarge(n, cap)
    logging.info(f"Enumerating {count_feasible(n)} feasible tours for n={n}")
    return _insert_deliveries_all(n)


def _insert_deliveries_all(n: int) -> Iterator[Tour]:
    for pickups in itertools.permutations(range(1, n + 1)):
        for seq in _insert_deliveries(list(pickups), n, n - 1):
            yield Tour.trusted(seq, n)


def _insert_deliveries(seq: list[int], n: int, k: int) -> Iterator[list[int]]:
    if k < 0:
        yield seq
        return
    delivery = n + seq[k]
    for slot in range(k + 1, len(seq) + 1):
        yield from _insert_deliveries(seq[:slot] + [delivery] + seq[slot:], n, k - 1)


def enumerate_by_filter(n: int, cap: int = DEFAULT_FILTER_CAP) -> Iterator[Tour]:
    """Yield the feasible tours by filtering all (2n)! permutations; the slow cross-check for `enumerate_feasible`."""
    if n < 1:
        raise InvalidSize(f"n must be at least 1, got {n}")
    if n > cap:
        raise TooLarge(n, cap)
    return (
        Tour.trusted(seq, n)
        for seq in itertools.permutations(range(1, 2 * n + 1))
        if _precedence_violation(seq, n) is None
    )


def random_tour(n: int, rng: np.random.Generator) -> Tour:
    """
    Draw a tour uniformly from the feasible tours over `n` pairs.

    Shuffle all 2n nodes, then swap every pair found in the wrong order.  Each feasible tour has exactly 2^n shuffles
    mapping onto it.
    """
    if n < 1:
        raise InvalidSize(f"n must be at least 1, got {n}")
    seq = rng.permutation(np.arange(1, 2 * n + 1)).tolist()
    where = {node: index for index, node in enumerate(seq)}
    for i in range(1, n + 1):
        p, d = where[i], where[n + i]
        if d < p:
            seq[p], seq[d] = n + i, i
    return Tour.trusted(seq, n)


def render_tour(tour: Tour) -> str:
    """The one-line text form, depot at both ends: `0 1 3 2 4 0`."""
    return " ".join(str(node) for node in (0, *tour.seq, 0))


def parse_tour(text: str, n: int | None = None) -> Tour:
    """
    Read the one-line text form back.  `n` is inferred from the length when not given.

    Raises `ParseError` for a missing depot or a non-integer token, and the `from_sequence` errors for an infeasible
    sequence.
    """
    fields = text.split()
    try:
        nodes = [int(field) for field in fields]
    except ValueError:
        raise ParseError(f"tour must be whitespace-separated integers, got {text.strip()!r}") from None
    if len(nodes) < 4 or nodes[0] != 0 or nodes[-1] != 0:
        raise ParseError(f"tour must start and end at the depot 0, got {text.strip()!r}")
    body = nodes[1:-1]
    if n is None:
        if len(body) % 2:
            raise ParseError(f"a tour visits an even number of nodes, got {len(body)}")
        n = len(body) // 2
    return from_sequence(body, n)
