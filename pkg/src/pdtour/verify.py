"""
This module provides the self-checks behind `pdtour verify`.

Each check has an id and counts the cases it passed and failed.  The quick level is exhaustive over every tour with at
most three pairs; the full level adds randomized suites on four to fifteen pairs.

    counting n=<n>           every constructed tour is feasible, distinct, found by the permutation filter, and
                             there are (2n)!/2^n of them
    canonical-initial        every pickup order gives a feasible pickup-then-delivery tour
    block-decomposition      maximal blocks alternate, cover the tour, and start with pickups
    block-precedence         a pair's pickup block comes before its delivery block
    <kind>-feasible          every enumerated move of <kind> yields a feasible tour
    delta-cost               incremental rewards match full re-costing within 1e-9
    n2-characterization      the N2 test agrees with "delivery block before pickup block"
    naive-flag               naive swaps report feasibility correctly
    insertion-as-exchanges   exchange chains reproduce insertions; quick refusals are checked by exhaustion
    ergodicity n=<n>         N1/N2/N3 reach every tour from the pickup-then-delivery tour

At the full level, insertions the exchange search gave up on before settling them are counted under
`insertion-unresolved`; they never fail the run.  Every other refusal is a proof: either a prefix balance drops or
the search ran out of exchange classes to try.

Exported types:
    CheckResult
    VerifyReport

Exported functions:
    run_verification
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from pdtour import operators
from pdtour.errors import IrreversibleInsertion, PdtourError, SearchBudgetExceeded
from pdtour.instance import Instance, NodeKind, generate_random
from pdtour.operators import (
    ADMISSIBLE_KINDS,
    EXCHANGE_KINDS,
    Move,
    OperatorKind,
    apply_insertion,
    apply_move,
    apply_naive,
    enumerate_moves,
    insertion_as_exchanges,
    reachable_tours,
)
from pdtour.tour import (
    Tour,
    canonical_initial,
    count_feasible,
    enumerate_by_filter,
    enumerate_feasible,
    is_feasible,
    maximal_blocks,
    random_tour,
    tour_cost,
)


LEVELS = ("quick", "full")
EXHAUSTIVE_MAX_N = 3
TOLERANCE = 1e-9
INSERTION_SEARCH_STATES = 2000


@dataclass
class CheckResult:
    check_id: str
    passed: int = 0
    failed: int = 0
    notes: list[str] = field(default_factory=list)

    def tally(self, ok: bool, note: str | None = None):
        if ok:
            self.passed += 1
        else:
            self.failed += 1
            if note is not None and len(self.notes) < 5:
                self.notes.append(note)


@dataclass
class VerifyReport:
    level: str
    checks: dict[str, CheckResult] = field(default_factory=dict)

    def check(self, check_id: str) -> CheckResult:
        return self.checks.setdefault(check_id, CheckResult(check_id))

    @property
    def ok(self) -> bool:
        return all(result.failed == 0 for result in self.checks.values())

    def lines(self) -> list[str]:
        lines = []
        for result in self.checks.values():
            status = "ok" if result.failed == 0 else "FAIL"
            lines.append(f"{result.check_id:<24} {status:<4} passed={result.passed} failed={result.failed}")
            lines.extend(f"    {note}" for note in result.notes)
        return lines


def _check_counting(report: VerifyReport, n: int):
    result = report.check(f"counting n={n}")
    constructed = [tour.seq for tour in enumerate_feasible(n)]
    filtered = {tour.seq for tour in enumerate_by_filter(n)}
    for seq in constructed:
        result.tally(seq in filtered and is_feasible(seq, n), f"{seq} is not a feasible tour")
    expected = count_feasible(n)
    if not len(constructed) == len(set(constructed)) == len(filtered) == expected:
        result.tally(False, f"constructed {len(constructed)}, filtered {len(filtered)}, expected {expected}")
    logging.info(f"n={n}: {len(constructed)} feasible tours constructed, {expected} expected")


def _check_canonical(report: VerifyReport, instance: Instance, rng: np.random.Generator):
    n = instance.n
    order = rng.permutation(n) + 1
    tour = canonical_initial(instance, order)
    ok = is_feasible(tour.seq, n) and all(tour.pos[i] + 1 == tour.pos[n + i] for i in range(1, n + 1))
    report.check("canonical-initial").tally(ok, f"order {order.tolist()} gave {tour.seq}")


def _check_blocks(report: VerifyReport, tour: Tour):
    blocks = maximal_blocks(tour)
    alternates = all(a.kind is not b.kind for a, b in zip(blocks, blocks[1:]))
    covers = blocks[0].start == 1 and blocks[-1].end == len(tour.seq)
    covers = covers and all(a.end + 1 == b.start for a, b in zip(blocks, blocks[1:]))
    uniform = all(
        tour.is_pickup_at(position) == (block.kind is NodeKind.PICKUP)
        for block in blocks
        for position in block.positions()
    )
    report.check("block-decomposition").tally(
        alternates and covers and uniform and blocks[0].kind is NodeKind.PICKUP, f"{tour.seq}: {blocks}"
    )

    precedence = report.check("block-precedence")
    index_of = {}
    for index, block in enumerate(blocks):
        for position in block.positions():
            index_of[tour.node_at(position)] = index
    for i in range(1, tour.n + 1):
        precedence.tally(index_of[i] < index_of[tour.n + i], f"{tour.seq}: pair ({i}, {tour.n + i})")


def _check_move(report: VerifyReport, tour: Tour, move: Move, instance: Instance):
    feasible = report.check(f"{move.kind.value.lower()}-feasible")
    try:
        new_tour, reward = apply_move(tour, move, instance)
    except PdtourError as error:
        feasible.tally(False, f"{tour.seq} {move}: {error}")
        return
    feasible.tally(is_feasible(new_tour.seq, tour.n), f"{tour.seq} {move} -> {new_tour.seq}")
    full = tour_cost(tour, instance) - tour_cost(new_tour, instance)
    report.check("delta-cost").tally(abs(full - reward) <= TOLERANCE, f"{tour.seq} {move}: {reward} vs {full}")


def _check_n2(report: VerifyReport, tour: Tour):
    result = report.check("n2-characterization")
    block_index = {}
    for index, block in enumerate(maximal_blocks(tour)):
        for position in block.positions():
            block_index[position] = index
    size = len(tour.seq)
    for a in range(1, size + 1):
        for b in range(a + 1, size + 1):
            expected = not tour.is_pickup_at(a) and tour.is_pickup_at(b) and block_index[a] < block_index[b]
            result.tally(operators.n2_swappable(tour, a, b) == expected, f"{tour.seq} positions {a}, {b}")


def _check_naive(report: VerifyReport, tour: Tour, instance: Instance):
    result = report.check("naive-flag")
    for move in enumerate_moves(tour, OperatorKind.NAIVE):
        seq, feasible, reward = apply_naive(tour, move, instance)
        result.tally(feasible == is_feasible(seq, tour.n) and (reward is None) != feasible, f"{tour.seq} {move}")


def _check_insertion(
    report: VerifyReport, tour: Tour, move: Move, instance: Instance, reachable: set | None = None
):
    """With `reachable` (every tour N1/N2/N3 reach from `tour`) each refusal is checked against it as well."""
    result = report.check("insertion-as-exchanges")
    direct, _ = apply_insertion(tour, move, instance)
    try:
        chain = insertion_as_exchanges(tour, move, max_states=INSERTION_SEARCH_STATES)
    except SearchBudgetExceeded:
        report.check("insertion-unresolved").tally(True)
        return
    except IrreversibleInsertion as error:
        proved = reachable is None or direct.seq not in reachable
        result.tally(proved, f"{tour.seq} {move}: refused but reachable ({error})")
        return
    composed = tour
    try:
        for exchange in chain:
            composed, _ = apply_move(composed, exchange, instance)
    except PdtourError as error:
        result.tally(False, f"{tour.seq} {move}: chain does not apply ({error})")
        return
    ok = composed.seq == direct.seq and all(m.kind in EXCHANGE_KINDS for m in chain)
    result.tally(ok, f"{tour.seq} {move}: chain gives {composed.seq}, insertion gives {direct.seq}")


def _check_ergodicity(report: VerifyReport, instance: Instance):
    n = instance.n
    reached = reachable_tours(canonical_initial(instance, range(1, n + 1)))
    ok = len(reached) == count_feasible(n) and all(is_feasible(seq, n) for seq in reached)
    report.check(f"ergodicity n={n}").tally(ok, f"reached {len(reached)} of {count_feasible(n)}")


def _exhaustive(report: VerifyReport, seed: int):
    rng = np.random.default_rng(seed)
    for n in range(1, EXHAUSTIVE_MAX_N + 1):
        instance = generate_random(n, seed + n)
        _check_counting(report, n)
        _check_canonical(report, instance, rng)
        for tour in enumerate_feasible(n):
            _check_blocks(report, tour)
            _check_n2(report, tour)
            _check_naive(report, tour, instance)
            for kind in ADMISSIBLE_KINDS:
                for move in enumerate_moves(tour, kind):
                    _check_move(report, tour, move, instance)
            reachable = reachable_tours(tour)
            for move in enumerate_moves(tour, OperatorKind.INSERTION):
                _check_insertion(report, tour, move, instance, reachable)
        if n >= 2:
            _check_ergodicity(report, instance)


def _fuzz(report: VerifyReport, seed: int, applications: int):
    rng = np.random.default_rng([seed, 1])
    for n in range(EXHAUSTIVE_MAX_N + 1, 16):
        instance = generate_random(n, seed + n)
        _check_canonical(report, instance, rng)
        for kind in ADMISSIBLE_KINDS:
            for _ in range(applications):
                tour = random_tour(n, rng)
                _check_blocks(report, tour)
                moves = enumerate_moves(tour, kind)
                if moves:
                    _check_move(report, tour, moves[int(rng.integers(len(moves)))], instance)
        for _ in range(applications):
            tour = random_tour(n, rng)
            p_new, d_new = sorted(int(x) for x in rng.choice(2 * n, size=2, replace=False) + 1)
            move = Move(OperatorKind.INSERTION, (int(rng.integers(1, n + 1)), p_new, d_new))
            _check_insertion(report, tour, move, instance)


def run_verification(level: str = "quick", seed: int = 0, applications: int = 200) -> VerifyReport:
    """
    Run the checks for `level` ("quick" or "full").

    Takes three arguments:
        level:          "quick" runs the exhaustive suites; "full" adds the randomized ones
        seed:           seeds the random instances and tours
        applications:   random applications per operator kind and pair count at the full level

    Returns: a `VerifyReport`; `report.ok` is `False` when any case failed.
    """
    if level not in LEVELS:
        raise ValueError(f"level must be one of {', '.join(LEVELS)}, got {level!r}")
    report = VerifyReport(level)
    _exhaustive(report, seed)
    if level == "full":
        _fuzz(report, seed, applications)
    for result in report.checks.values():
        if result.failed:
            logging.critical(f"Check {result.check_id} failed {result.failed} case(s): {result.notes}")
    return report
