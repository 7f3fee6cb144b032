"""
This module provides the neighborhood operators that act on tours.

The five admissible kinds map a feasible tour to another feasible tour:

    N1  swap two nodes inside one maximal block
    N2  swap a delivery with a pickup somewhere after it
    N3  exchange two pairs: pickup i with pickup j and delivery n+i with delivery n+j
    B1  swap two disjoint sub-spans inside one maximal block
    B2  swap a delivery sub-span with a pickup sub-span somewhere after it

Segments keep their internal order when they move.  Two auxiliary kinds complete the set: the naive swap of any two
positions, which may break precedence and reports that instead of raising, and insertion, which lifts one pair out
and puts it back at two chosen positions.

All of the admissible kinds move pickups only earlier and deliveries only later.  So the pickup-minus-delivery
balance of every prefix never goes down, and only a tour that `dominates` another can be reached from it.
That is not sufficient, though: only N2 moves change a tour's `exchange_class`, and some classes
that keep every balance are out of their reach.  `insertion_as_exchanges` rewrites an insertion as a chain of
N1/N2/N3 moves exactly when such a chain exists.

A reward is always `old cost - new cost`: positive means the move improved the tour.  Rewards are computed from the
edges a move changes, not by re-costing the whole tour.

Exported types:
    Move:           one parameterized application of an operator
    OperatorKind:   an Enum of the seven kinds; `ADMISSIBLE_KINDS` holds the five a policy chooses among

Exported functions:
    apply_insertion
    apply_move
    apply_naive
    dominates
    enumerate_moves
    exchange_class
    exchange_path
    exchange_search
    exchange_sequence
    insertion_as_exchanges
    n2_swappable
    parse_move
    reachable_tours
    sample_best_move
"""

import logging
from collections import Counter, deque
from dataclasses import dataclass
from enum import Enum

import numpy as np

from pdtour.errors import (
    IrreversibleInsertion,
    MoveIllTyped,
    MoveOutOfRange,
    ParseError,
    PositionClash,
    SearchBudgetExceeded,
)
from pdtour.instance import Instance, NodeKind
from pdtour.tour import Tour, maximal_blocks, prefix_balances


class OperatorKind(Enum):
    """
    An `Enum` naming each operator.

    Values:
        N1:         intra-block node exchange
        N2:         inter-block node exchange (delivery before pickup)
        N3:         pair exchange
        B1:         intra-block segment exchange
        B2:         mixed segment exchange (delivery segment before pickup segment)
        NAIVE:      unconstrained two-position swap, may be infeasible
        INSERTION:  remove one pair and re-insert it
    """

    N1 = "N1"
    N2 = "N2"
    N3 = "N3"
    B1 = "B1"
    B2 = "B2"
    NAIVE = "NAIVE"
    INSERTION = "INS"

    @property
    def index(self) -> int:
        """Position in `ADMISSIBLE_KINDS`; only defined for the five admissible kinds."""
        return ADMISSIBLE_KINDS.index(self)


ADMISSIBLE_KINDS = (OperatorKind.N1, OperatorKind.N2, OperatorKind.N3, OperatorKind.B1, OperatorKind.B2)
EXCHANGE_KINDS = ADMISSIBLE_KINDS[:3]
DEFAULT_SEARCH_STATES = 20000

_ARITY = {
    OperatorKind.N1: 2,
    OperatorKind.N2: 2,
    OperatorKind.N3: 2,
    OperatorKind.B1: 4,
    OperatorKind.B2: 4,
    OperatorKind.NAIVE: 2,
    OperatorKind.INSERTION: 3,
}


@dataclass(frozen=True)
class Move:
    """
    One operator application.  Checks that only need the parameters happen here; checks against a tour happen when
    the move is applied.

    Attributes:
        kind:   which operator
        params: N1/N2/NAIVE (a, b) positions; N3 (i, j) pickup ids; B1 (u_start, u_end, v_start, v_end);
                B2 (d_start, d_end, p_start, p_end); INSERTION (i, p_new, d_new)
    """

    kind: OperatorKind
    params: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "params", tuple(int(value) for value in self.params))
        if len(self.params) != _ARITY[self.kind]:
            raise MoveIllTyped(f"{self.kind.value} takes {_ARITY[self.kind]} parameters, got {self.params}")
        if any(value < 1 for value in self.params):
            raise MoveOutOfRange(f"positions and node ids start at 1, got {self}")
        match self.kind:
            case OperatorKind.N1 | OperatorKind.N2 | OperatorKind.NAIVE:
                a, b = self.params
                if a >= b:
                    raise MoveIllTyped(f"{self.kind.value} needs a < b, got {self}")
            case OperatorKind.N3:
                i, j = self.params
                if i == j:
                    raise MoveIllTyped(f"N3 needs two distinct pairs, got {self}")
            case OperatorKind.B1 | OperatorKind.B2:
                first_start, first_end, second_start, second_end = self.params
                if not first_start <= first_end < second_start <= second_end:
                    raise MoveIllTyped(f"{self.kind.value} needs two ordered disjoint spans, got {self}")
            case OperatorKind.INSERTION:
                _, p_new, d_new = self.params
                if p_new == d_new:
                    raise PositionClash(f"pickup and delivery cannot share position {p_new}")
                if p_new > d_new:
                    raise MoveIllTyped(f"the pickup must be placed before its delivery, got {self}")

    def __str__(self) -> str:
        return " ".join([self.kind.value, *(str(value) for value in self.params)])


def parse_move(text: str) -> Move:
    """Read a move back from its text form, e.g. `N2 4 6` or `INS 1 1 8`."""
    fields = text.split()
    if not fields:
        raise ParseError("empty move")
    try:
        kind = OperatorKind(fields[0])
        params = tuple(int(field) for field in fields[1:])
    except ValueError:
        raise ParseError(f"not a move: {text.strip()!r}") from None
    return Move(kind, params)


def n2_swappable(tour: Tour, a: int, b: int) -> bool:
    """
    `True` when N2 may exchange the nodes at positions `a` and `b` of `tour`: a delivery at `a` and a pickup at `b`,
    with `a < b`.  Move enumeration and checking both go through this test.
    """
    return a < b and not tour.is_pickup_at(a) and tour.is_pickup_at(b)


def _sub_spans(start: int, end: int):
    for span_start in range(start, end + 1):
        for span_end in range(span_start, end + 1):
            yield span_start, span_end


def enumerate_moves(tour: Tour, kind: OperatorKind) -> list[Move]:
    """
    Every move of `kind` that applies to `tour`, in a fixed order.

    Returns: a list of `Move`s, possibly empty.  N1 and B1 moves stay inside one maximal block; N2 and B2 moves pair
    something of delivery kind with something of pickup kind later in the tour.
    """
    size = len(tour.seq)
    moves: list[Move] = []
    match kind:
        case OperatorKind.N1:
            for block in maximal_blocks(tour):
                for a in block.positions():
                    for b in range(a + 1, block.end + 1):
                        moves.append(Move(kind, (a, b)))
        case OperatorKind.N2:
            for a in range(1, size + 1):
                for b in range(a + 1, size + 1):
                    if n2_swappable(tour, a, b):
                        moves.append(Move(kind, (a, b)))
        case OperatorKind.N3:
            for i in range(1, tour.n + 1):
                for j in range(i + 1, tour.n + 1):
                    moves.append(Move(kind, (i, j)))
        case OperatorKind.B1:
            for block in maximal_blocks(tour):
                for u_start, u_end in _sub_spans(block.start, block.end):
                    for v_start, v_end in _sub_spans(u_end + 1, block.end):
                        moves.append(Move(kind, (u_start, u_end, v_start, v_end)))
        case OperatorKind.B2:
            blocks = maximal_blocks(tour)
            for d_block in (block for block in blocks if block.kind is NodeKind.DELIVERY):
                later = [block for block in blocks if block.kind is NodeKind.PICKUP and block.start > d_block.end]
                for d_start, d_end in _sub_spans(d_block.start, d_block.end):
                    for p_block in later:
                        for p_start, p_end in _sub_spans(p_block.start, p_block.end):
                            moves.append(Move(kind, (d_start, d_end, p_start, p_end)))
        case OperatorKind.NAIVE:
            for a in range(1, size + 1):
                for b in range(a + 1, size + 1):
                    moves.append(Move(kind, (a, b)))
        case OperatorKind.INSERTION:
            for i in range(1, tour.n + 1):
                for p_new in range(1, size + 1):
                    for d_new in range(p_new + 1, size + 1):
                        moves.append(Move(kind, (i, p_new, d_new)))
    return moves


def _check_positions(tour: Tour, move: Move, positions) -> None:
    size = len(tour.seq)
    if any(position > size for position in positions):
        raise MoveOutOfRange(f"{move} refers past position {size}")


def _same_kind(tour: Tour, start: int, end: int, pickup: bool) -> bool:
    return all(tour.is_pickup_at(position) == pickup for position in range(start, end + 1))


def _check_move(tour: Tour, move: Move) -> None:
    match move.kind:
        case OperatorKind.N1:
            a, b = move.params
            _check_positions(tour, move, (a, b))
            if not _same_kind(tour, a, b, tour.is_pickup_at(a)):
                raise MoveIllTyped(f"{move}: positions {a} and {b} are not in one block")
        case OperatorKind.N2:
            a, b = move.params
            _check_positions(tour, move, (a, b))
            if not n2_swappable(tour, a, b):
                raise MoveIllTyped(f"{move}: needs a delivery at {a} and a pickup at {b}")
        case OperatorKind.N3:
            for i in move.params:
                if i > tour.n:
                    raise MoveOutOfRange(f"{move}: {i} is not a pickup id in 1..{tour.n}")
        case OperatorKind.B1:
            u_start, _, _, v_end = move.params
            _check_positions(tour, move, move.params)
            if not _same_kind(tour, u_start, v_end, tour.is_pickup_at(u_start)):
                raise MoveIllTyped(f"{move}: both spans must lie in one block")
        case OperatorKind.B2:
            d_start, d_end, p_start, p_end = move.params
            _check_positions(tour, move, move.params)
            if not _same_kind(tour, d_start, d_end, False) or not _same_kind(tour, p_start, p_end, True):
                raise MoveIllTyped(f"{move}: needs a delivery span before a pickup span")
        case OperatorKind.NAIVE:
            _check_positions(tour, move, move.params)
        case OperatorKind.INSERTION:
            i, p_new, d_new = move.params
            if i > tour.n:
                raise MoveOutOfRange(f"{move}: {i} is not a pickup id in 1..{tour.n}")
            _check_positions(tour, move, (p_new, d_new))


def _edge_sum(table, ext: list[int], edges) -> float:
    return sum(table[ext[t]][ext[t + 1]] for t in edges)


def _swap_positions(tour: Tour, instance: Instance, positions: tuple[int, ...], new_seq: list[int]):
    """Reward of a move that only rewrites `positions`; edge t joins padded positions t and t+1."""
    table = instance.table
    old_ext = [0, *tour.seq, 0]
    new_ext = [0, *new_seq, 0]
    edges = sorted({edge for position in positions for edge in (position - 1, position)})
    return _edge_sum(table, old_ext, edges) - _edge_sum(table, new_ext, edges)


def _segment_swap(tour: Tour, instance: Instance, params: tuple[int, ...]) -> tuple[list[int], float]:
    first_start, first_end, second_start, second_end = params
    seq = list(tour.seq)
    first = seq[first_start - 1 : first_end]
    middle = seq[first_end : second_start - 1]
    second = seq[second_start - 1 : second_end]
    new_seq = seq[: first_start - 1] + second + middle + first + seq[second_end:]

    table = instance.table
    ext = [0, *tour.seq, 0]
    before, after = ext[first_start - 1], ext[second_end + 1]
    head1, tail1, head2, tail2 = ext[first_start], ext[first_end], ext[second_start], ext[second_end]
    if middle:
        head_m, tail_m = ext[first_end + 1], ext[second_start - 1]
        removed = table[before][head1] + table[tail1][head_m] + table[tail_m][head2] + table[tail2][after]
        added = table[before][head2] + table[tail2][head_m] + table[tail_m][head1] + table[tail1][after]
    else:
        removed = table[before][head1] + table[tail1][head2] + table[tail2][after]
        added = table[before][head2] + table[tail2][head1] + table[tail1][after]
    return new_seq, removed - added


def _path_cost(table, ext: list[int], first_edge: int, last_edge: int) -> float:
    return _edge_sum(table, ext, range(first_edge, last_edge + 1))


def _insertion_sequence(tour: Tour, i: int, p_new: int, d_new: int) -> list[int]:
    rest = [node for node in tour.seq if node != i and node != tour.n + i]
    rest.insert(p_new - 1, i)
    rest.insert(d_new - 1, tour.n + i)
    return rest


def apply_insertion(tour: Tour, move: Move, instance: Instance) -> tuple[Tour, float]:
    """
    Lift pair (i, n+i) out of `tour` and re-insert it so the pickup ends at `p_new` and the delivery at `d_new`.

    Returns: `(new_tour, reward)`.  The result is feasible by construction since `p_new < d_new`.
    """
    if move.kind is not OperatorKind.INSERTION:
        raise MoveIllTyped(f"{move} is not an insertion")
    _check_move(tour, move)
    i, p_new, d_new = move.params
    new_seq = _insertion_sequence(tour, i, p_new, d_new)
    low = min(tour.pos[i], p_new)
    high = max(tour.pos[tour.n + i], d_new)
    table = instance.table
    reward = _path_cost(table, [0, *tour.seq, 0], low - 1, high) - _path_cost(table, [0, *new_seq, 0], low - 1, high)
    return Tour.trusted(new_seq, tour.n), reward


def apply_move(tour: Tour, move: Move, instance: Instance) -> tuple[Tour, float]:
    """
    Apply an admissible move (or an insertion) to `tour`.

    Takes three arguments:
        tour:       the current feasible tour
        move:       any kind but `NAIVE`; use `apply_naive` for that
        instance:   supplies the costs

    Returns: `(new_tour, reward)` with `reward = tour_cost(tour) - tour_cost(new_tour)`.  Raises `MoveOutOfRange` or
    `MoveIllTyped` when the move does not fit `tour`.
    """
    if move.kind is OperatorKind.NAIVE:
        raise MoveIllTyped("naive swaps may be infeasible; use apply_naive")
    if move.kind is OperatorKind.INSERTION:
        return apply_insertion(tour, move, instance)
    _check_move(tour, move)
    seq = list(tour.seq)
    match move.kind:
        case OperatorKind.N1 | OperatorKind.N2:
            a, b = move.params
            seq[a - 1], seq[b - 1] = seq[b - 1], seq[a - 1]
            reward = _swap_positions(tour, instance, (a, b), seq)
        case OperatorKind.N3:
            i, j = move.params
            n = tour.n
            positions = (tour.pos[i], tour.pos[j], tour.pos[n + i], tour.pos[n + j])
            seq[positions[0] - 1], seq[positions[1] - 1] = j, i
            seq[positions[2] - 1], seq[positions[3] - 1] = n + j, n + i
            reward = _swap_positions(tour, instance, positions, seq)
        case _:
            seq, reward = _segment_swap(tour, instance, move.params)
    return Tour.trusted(seq, tour.n), reward


def apply_naive(tour: Tour, move: Move, instance: Instance) -> tuple[tuple[int, ...], bool, float | None]:
    """
    Swap the nodes at two positions with no regard for precedence.

    Returns: `(sequence, feasible, reward)`; `reward` is `None` when the swapped sequence is infeasible.
    """
    if move.kind is not OperatorKind.NAIVE:
        raise MoveIllTyped(f"{move} is not a naive swap")
    _check_move(tour, move)
    a, b = move.params
    n = tour.n
    seq = list(tour.seq)
    later, earlier = seq[a - 1], seq[b - 1]
    seq[a - 1], seq[b - 1] = earlier, later
    feasible = True
    if later <= n and tour.pos[later + n] <= b:
        feasible = False
    if earlier > n and tour.pos[earlier - n] >= a:
        feasible = False
    if not feasible:
        logging.debug(f"Naive swap {move} breaks precedence")
        return tuple(seq), False, None
    return tuple(seq), True, _swap_positions(tour, instance, (a, b), seq)


def dominates(target: Tour, source: Tour) -> bool:
    """`True` when every prefix of `target` has at least as many more pickups than deliveries as `source` does."""
    return all(t >= s for t, s in zip(prefix_balances(target), prefix_balances(source)))


def _walk_pair(tour: Tour, i: int, p_new: int, d_new: int) -> list[Move] | None:
    """
    Walk pair i to (p_new, d_new) by adjacent swaps: the delivery right, then the pickup, then the delivery left.

    Returns `None` as soon as a step would move a pickup later or a delivery earlier past a node of the other kind.
    """
    n = tour.n
    delivery = n + i
    work = list(tour.seq)
    moves: list[Move] = []

    def step(a: int) -> bool:
        left_pickup, right_pickup = work[a - 1] <= n, work[a] <= n
        if left_pickup == right_pickup:
            moves.append(Move(OperatorKind.N1, (a, a + 1)))
        elif not left_pickup:
            moves.append(Move(OperatorKind.N2, (a, a + 1)))
        else:
            return False
        work[a - 1], work[a] = work[a], work[a - 1]
        return True

    d = work.index(delivery) + 1
    while d < d_new:
        if not step(d):
            return None
        d += 1
    p = work.index(i) + 1
    while p > p_new:
        if not step(p - 1):
            return None
        p -= 1
    while p < p_new:
        if not step(p):
            return None
        p += 1
    d = work.index(delivery) + 1
    while d > d_new:
        if not step(d - 1):
            return None
        d -= 1
    return moves


def exchange_path(tour: Tour, target: Tour) -> list[Move]:
    """
    A chain of N1/N2/N3 moves turning `tour` into `target`, built greedily from the left.

    At each position that differs, the node `target` wants there is brought in: a pickup replaces a delivery with N2,
    a pickup replaces a pickup with N1 inside a block or N3 across blocks, and a delivery replaces a delivery with N1
    inside a block.  Raises `IrreversibleInsertion` when a position needs a delivery where a pickup stands, or a
    delivery from another block.
    """
    n = tour.n
    current = list(tour.seq)
    moves: list[Move] = []
    for q, wanted in enumerate(target.seq):
        standing = current[q]
        if wanted == standing:
            continue
        r = current.index(wanted)
        same_run = all((node <= n) == (wanted <= n) for node in current[q : r + 1])
        if wanted <= n and standing > n:
            move = Move(OperatorKind.N2, (q + 1, r + 1))
        elif same_run:
            move = Move(OperatorKind.N1, (q + 1, r + 1))
        elif wanted <= n:
            move = Move(OperatorKind.N3, (min(wanted, standing), max(wanted, standing)))
        else:
            raise IrreversibleInsertion(f"cannot bring delivery {wanted} to position {q + 1} with N1/N2/N3")
        if move.kind is OperatorKind.N3:
            for first, second in ((wanted, standing), (wanted + n, standing + n)):
                a, b = current.index(first), current.index(second)
                current[a], current[b] = current[b], current[a]
        else:
            current[q], current[r] = current[r], current[q]
        moves.append(move)
    return moves


def _swap_in(work: list[int], n: int, move: Move) -> None:
    if move.kind is OperatorKind.N3:
        i, j = move.params
        for first, second in ((i, j), (n + i, n + j)):
            a, b = work.index(first), work.index(second)
            work[a], work[b] = work[b], work[a]
    else:
        a, b = move.params
        work[a - 1], work[b - 1] = work[b - 1], work[a - 1]


def exchange_sequence(tour: Tour, move: Move) -> tuple[int, ...]:
    """
    The sequence an N1, N2 or N3 move gives from `tour`, neither checked against the tour nor costed.

    Searches step through tours with it; `apply_move` is the checked way to do the same.
    """
    work = list(tour.seq)
    _swap_in(work, tour.n, move)
    return tuple(work)


def reachable_tours(tour: Tour) -> set[tuple[int, ...]]:
    """Every tour some N1/N2/N3 chain reaches from `tour`, `tour` included.  Exhaustive, so only for a few pairs."""
    seen = {tour.seq}
    frontier = deque([tour])
    while frontier:
        current = frontier.popleft()
        for kind in EXCHANGE_KINDS:
            for move in enumerate_moves(current, kind):
                seq = exchange_sequence(current, move)
                if seq not in seen:
                    seen.add(seq)
                    frontier.append(Tour.trusted(seq, tour.n))
    return seen


def _block_labels(work: list[int], n: int) -> list[int]:
    labels, index = [], 0
    for q, node in enumerate(work):
        if q and (node <= n) != (work[q - 1] <= n):
            index += 1
        labels.append(index)
    return labels


def _partner(work: list[int], n: int, q: int) -> int:
    """0-based position of the other end of the pair visited at 0-based position `q`."""
    node = work[q]
    return work.index(node + n if node <= n else node - n)


def _class_of(work: list[int], n: int) -> tuple:
    labels = _block_labels(work, n)
    pattern = tuple(node <= n for node in work)
    arcs = sorted((labels[q], labels[_partner(work, n, q)]) for q, node in enumerate(work) if node <= n)
    return pattern, tuple(arcs)


def exchange_class(tour: Tour) -> tuple:
    """
    The pickup/delivery pattern of `tour` together with the sorted (pickup block, delivery block) index pairs of its
    pairs.  N1 and N3 moves keep it and connect any two tours that share it; only N2 moves change it.
    """
    return _class_of(list(tour.seq), tour.n)


def _arrange(work: list[int], n: int, start: int, wanted) -> list[Move]:
    """N1 swaps inside the block at 0-based `start` so that its k-th node has its partner in block `wanted[k]`."""
    labels = _block_labels(work, n)
    end = start + len(wanted)
    moves = []
    for q, label in zip(range(start, end), wanted):
        r = next(r for r in range(q, end) if labels[_partner(work, n, r)] == label)
        if r != q:
            move = Move(OperatorKind.N1, (q + 1, r + 1))
            _swap_in(work, n, move)
            moves.append(move)
    return moves


def _sub_multisets(counts: list[tuple[int, int]], size: int):
    if size == 0:
        yield ()
        return
    if not counts:
        return
    (label, count), rest = counts[0], counts[1:]
    for take in range(min(count, size), -1, -1):
        for tail in _sub_multisets(rest, size - take):
            yield (label,) * take + tail


def _placements(labels: list[int], offset: int):
    """Orderings of `labels` that differ in what comes before index `offset`, at it, or after it."""
    counts = Counter(labels)
    for middle in sorted(counts):
        rest = counts.copy()
        rest[middle] -= 1
        for left in _sub_multisets(sorted(rest.items()), offset):
            right = rest - Counter(left)
            yield (*left, middle, *sorted(right.elements()))


def _class_steps(seq: tuple[int, ...], n: int, ceiling: list[int]):
    """Yield `(sequence, moves)` for one tour per class a single N2 move (after N1 rearranging) can reach."""
    work = list(seq)
    labels = _block_labels(work, n)
    balances = prefix_balances(Tour.trusted(seq, n))
    size = len(work)

    def block_of(q: int) -> tuple[int, list[int]]:
        start = labels.index(labels[q])
        return start, [labels[_partner(work, n, r)] for r in range(start, start + labels.count(labels[q]))]

    for a in range(size):
        if work[a] <= n:
            continue
        d_start, d_block = block_of(a)
        for b in range(a + 1, size):
            if balances[b - 1] + 2 > ceiling[b - 1]:
                break
            if work[b] > n:
                continue
            p_start, p_block = block_of(b)
            swap = Move(OperatorKind.N2, (a + 1, b + 1))
            for d_wanted in _placements(d_block, a - d_start):
                for p_wanted in _placements(p_block, b - p_start):
                    trial = list(work)
                    moves = _arrange(trial, n, d_start, d_wanted) + _arrange(trial, n, p_start, p_wanted)
                    _swap_in(trial, n, swap)
                    yield tuple(trial), [*moves, swap]


def _line_up(work: list[int], target: Tour) -> list[Move]:
    """N1 and N3 moves turning `work` into `target`; both must share an exchange class."""
    n = target.n
    goal = list(target.seq)
    labels = _block_labels(goal, n)
    moves = []
    for label in range(labels[-1] + 1):
        start = labels.index(label)
        if goal[start] <= n:
            block = range(start, start + labels.count(label))
            moves += _arrange(work, n, start, [labels[_partner(goal, n, q)] for q in block])
    for q, node in enumerate(goal):
        if node > n:
            r = work.index(work[target.pos[node - n] - 1] + n)
            if r != q:
                move = Move(OperatorKind.N1, (min(q, r) + 1, max(q, r) + 1))
                _swap_in(work, n, move)
                moves.append(move)
    for q, node in enumerate(goal):
        if node <= n and work[q] != node:
            move = Move(OperatorKind.N3, (min(node, work[q]), max(node, work[q])))
            _swap_in(work, n, move)
            moves.append(move)
    return moves


def exchange_search(tour: Tour, target: Tour, max_states: int = DEFAULT_SEARCH_STATES) -> list[Move] | None:
    """
    Search for an N1/N2/N3 chain from `tour` to `target`.

    The search runs breadth-first over exchange classes (see `exchange_class`) rather than tours.  From each class it
    tries every N2 move, after every N1 rearrangement of the two blocks involved that could lead somewhere new, and
    skips classes with a prefix balance above the target's since no chain can come back down.  One concrete tour is
    kept per class; the chain to the target's class is finished by lining that tour up with `target`.

    Returns the chain, or `None` once every class that could lead to `target` has been tried: dominating `target`
    is necessary but not sufficient.  Raises `SearchBudgetExceeded` when more than `max_states` classes would have
    to be visited.
    """
    n = tour.n
    goal = exchange_class(target)
    ceiling = prefix_balances(target)
    start = exchange_class(tour)
    chains: dict[tuple, tuple[tuple[int, ...], list[Move]]] = {start: (tour.seq, [])}
    frontier = deque([start])
    while frontier:
        key = frontier.popleft()
        seq, chain = chains[key]
        if key == goal:
            return chain + _line_up(list(seq), target)
        for following, moves in _class_steps(seq, n, ceiling):
            following_key = _class_of(list(following), n)
            if following_key in chains:
                continue
            chains[following_key] = (following, chain + moves)
            if len(chains) > max_states:
                raise SearchBudgetExceeded(f"no N1/N2/N3 chain found within {max_states} exchange classes")
            frontier.append(following_key)
    return None


def insertion_as_exchanges(tour: Tour, move: Move, max_states: int = DEFAULT_SEARCH_STATES) -> list[Move]:
    """
    Rewrite an insertion as N1/N2/N3 moves that, applied in order, give exactly the tour `apply_insertion` gives.

    Three attempts are made in turn: walking the pair into place with adjacent swaps, the greedy `exchange_path`,
    and the class-level `exchange_search`, which is complete.  Raises `IrreversibleInsertion` when the insertion
    lowers some prefix balance, when the search proves no chain exists (some insertions keep every balance and are
    still out of reach), and its subclass `SearchBudgetExceeded` when the search runs past `max_states` exchange
    classes.
    """
    if move.kind is not OperatorKind.INSERTION:
        raise MoveIllTyped(f"{move} is not an insertion")
    _check_move(tour, move)
    i, p_new, d_new = move.params
    target = Tour.trusted(_insertion_sequence(tour, i, p_new, d_new), tour.n)
    if target == tour:
        return []
    if not dominates(target, tour):
        raise IrreversibleInsertion(f"{move} moves a pickup later past a delivery (or a delivery earlier past a pickup)")
    walked = _walk_pair(tour, i, p_new, d_new)
    if walked is not None:
        return walked
    logging.debug(f"Adjacent walk blocked for {move}; trying a greedy exchange path")
    try:
        return exchange_path(tour, target)
    except IrreversibleInsertion:
        logging.debug(f"Greedy exchange path blocked for {move}; searching")
    chain = exchange_search(tour, target, max_states)
    if chain is None:
        raise IrreversibleInsertion(f"no N1/N2/N3 chain turns the tour into the result of {move}")
    return chain


def sample_best_move(
    tour: Tour, kind: OperatorKind, instance: Instance, k: int, rng: np.random.Generator
) -> Move | None:
    """
    Draw up to `k` applicable moves of `kind` without replacement and return the one with the largest reward.

    Candidates are scored in enumeration order and the first maximum wins.  Returns `None` when no move of `kind`
    applies.  Naive swaps are not scored here since they may be infeasible.
    """
    if kind is OperatorKind.NAIVE:
        raise MoveIllTyped("naive swaps are sampled by the naive baseline, not scored here")
    if k < 1:
        raise MoveOutOfRange(f"need at least one candidate, got k={k}")
    moves = enumerate_moves(tour, kind)
    if not moves:
        return None
    picked = np.sort(rng.choice(len(moves), size=min(k, len(moves)), replace=False))
    best_move, best_reward = None, -np.inf
    for index in picked:
        candidate = moves[int(index)]
        _, reward = apply_move(tour, candidate, instance)
        if reward > best_reward:
            best_move, best_reward = candidate, reward
    return best_move
