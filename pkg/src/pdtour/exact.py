"""
This module provides the brute-force exact solver used as an oracle for small instances.

The reference mode scores every tour `enumerate_feasible` yields.  The pruned mode walks the same space as a
lexicographic depth-first search and abandons a prefix once its cost reaches the incumbent; abandoned sub-trees are
still counted, so `tours_examined` is (2n)!/2^n either way.  Both modes break cost ties toward the lexicographically
smallest sequence, so they always agree.

With `workers > 1` the search is split by the first pickup visited and the branches run in separate processes.

Exported types:
    ExactResult

Exported functions:
    brute_force
    completions
"""

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import cache
from math import inf

from pdtour.errors import TooLarge
from pdtour.instance import Instance
from pdtour.tour import (
    DEFAULT_ENUMERATION_CAP,
    Tour,
    count_feasible,
    enumerate_feasible,
    tour_cost,
)


@dataclass(frozen=True)
class ExactResult:
    """
    The optimum of an instance.

    Attributes:
        optimal_tour:   the cheapest tour, lexicographically smallest among equal costs
        optimal_cost:   its cost
        tours_examined: how many tours the search accounted for; always (2n)!/2^n
    """

    optimal_tour: Tour
    optimal_cost: float
    tours_examined: int

    def to_json(self) -> dict:
        return {
            "n": self.optimal_tour.n,
            "cost": self.optimal_cost,
            "seq": list(self.optimal_tour.seq),
            "examined": self.tours_examined,
        }


@cache
def completions(unvisited_pickups: int, open_deliveries: int) -> int:
    """Number of feasible ways to finish a prefix with this many pickups left and deliveries owed."""
    if unvisited_pickups == 0 and open_deliveries == 0:
        return 1
    total = 0
    if unvisited_pickups:
        total += unvisited_pickups * completions(unvisited_pickups - 1, open_deliveries + 1)
    if open_deliveries:
        total += open_deliveries * completions(unvisited_pickups, open_deliveries - 1)
    return total


def _better(cost: float, seq, best_cost: float, best_seq) -> bool:
    return cost < best_cost or (cost == best_cost and best_seq is not None and tuple(seq) < tuple(best_seq))


def _enumerate(instance: Instance, cap: int) -> tuple[float, tuple[int, ...], int]:
    best_cost, best_seq, examined = inf, None, 0
    for tour in enumerate_feasible(instance.n, cap):
        examined += 1
        cost = tour_cost(tour, instance)
        if best_seq is None or _better(cost, tour.seq, best_cost, best_seq):
            best_cost, best_seq = cost, tour.seq
    return best_cost, best_seq, examined


def _search_branch(instance: Instance, first: int, prune: bool) -> tuple[float, tuple[int, ...] | None, int]:
    """Depth-first search over the tours that start with pickup `first`, visiting nodes in increasing id order."""
    n = instance.n
    table = instance.table
    visited = [False] * (2 * n + 1)
    prefix = [first]
    visited[first] = True
    best_cost, best_seq, examined = inf, None, 0

    def descend(cost: float, unvisited_pickups: int, open_deliveries: int):
        nonlocal best_cost, best_seq, examined
        last = prefix[-1]
        if len(prefix) == 2 * n:
            examined += 1
            total = cost + table[last][0]
            if total < best_cost:
                best_cost, best_seq = total, tuple(prefix)
            return
        if prune and cost >= best_cost:
            examined += completions(unvisited_pickups, open_deliveries)
            return
        for node in range(1, 2 * n + 1):
            if visited[node] or (node > n and not visited[node - n]):
                continue
            visited[node] = True
            prefix.append(node)
            if node <= n:
                descend(cost + table[last][node], unvisited_pickups - 1, open_deliveries + 1)
            else:
                descend(cost + table[last][node], unvisited_pickups, open_deliveries - 1)
            prefix.pop()
            visited[node] = False

    descend(table[0][first], n - 1, 1)
    logging.info(f"Exact branch first={first}: best {best_cost} over {examined} tours")
    return best_cost, best_seq, examined


def brute_force(
    instance: Instance, cap: int = DEFAULT_ENUMERATION_CAP, prune: bool = False, workers: int = 1
) -> ExactResult:
    """
    Find the optimal tour of `instance` by exhaustive search.

    Takes four arguments:
        instance:   the instance to solve
        cap:        the largest n allowed; raises `TooLarge` above it
        prune:      use the branch-and-bound search instead of plain enumeration
        workers:    processes to split the search across (by first pickup)

    Returns: an `ExactResult`.
    """
    n = instance.n
    if n > cap:
        raise TooLarge(n, cap)
    logging.info(f"Exact search n={n} prune={prune} workers={workers}: {count_feasible(n)} tours")

    if not prune and workers <= 1:
        best_cost, best_seq, examined = _enumerate(instance, cap)
    else:
        firsts = list(range(1, n + 1))
        if workers > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                branches = list(pool.map(_search_branch, [instance] * n, firsts, [prune] * n))
        else:
            branches = [_search_branch(instance, first, prune) for first in firsts]
        best_cost, best_seq, examined = inf, None, 0
        for cost, seq, count in branches:
            examined += count
            if seq is not None and (best_seq is None or _better(cost, seq, best_cost, best_seq)):
                best_cost, best_seq = cost, seq

    return ExactResult(Tour.trusted(best_seq, n), best_cost, examined)
