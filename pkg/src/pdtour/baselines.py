"""
This module provides the fixed operator-selection policies the learned policy is compared against, and the restart
driver that runs them.

    Random      pick uniformly among the supplied kinds each step
    Single      always the one supplied kind; for insertion, a random pair and the best of k placements for it
    GreedyBest  the best sampled move over all supplied kinds (by default the five and insertion); stop when none
                improves the tour
    Naive       sample k unconstrained position swaps, reject the infeasible ones, apply the best survivor

Every policy except GreedyBest applies the best sampled move even when it makes the tour worse, the same way a
training episode does; the best tour seen is what counts.

Restarts alternate their starting point: even restarts begin from a pickup-then-delivery tour with a shuffled pickup
order, odd restarts from a tour drawn uniformly from all feasible tours.

Exported types:
    Policy
    SearchConfig
    SearchResult
    Selection
    StepOutcome

Exported functions:
    baseline_policy
    local_search
"""

import logging
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from pdtour.errors import InvalidConfig, PdtourError
from pdtour.instance import Instance
from pdtour.operators import (
    ADMISSIBLE_KINDS,
    Move,
    OperatorKind,
    apply_move,
    apply_naive,
    sample_best_move,
)
from pdtour.tour import Tour, canonical_initial, random_tour, render_tour, tour_cost


GREEDY_KINDS = (*ADMISSIBLE_KINDS, OperatorKind.INSERTION)


class Selection(Enum):
    RANDOM = "random"
    SINGLE = "single"
    GREEDY_BEST = "greedy"
    NAIVE = "naive"
    INSERTION = "insertion"


@dataclass(frozen=True)
class StepOutcome:
    """
    What one policy step did.

    Attributes:
        tour:       the tour after the step (the same tour when nothing was applied)
        reward:     old cost minus new cost; 0 when nothing was applied
        move:       the applied move, or `None`
        rejected:   infeasible proposals discarded during the step
        stop:       the policy has reached a point it will not leave
    """

    tour: Tour
    reward: float
    move: Move | None
    rejected: int = 0
    stop: bool = False


class Policy:
    """Base class: `step` advances a tour by one move."""

    name = "policy"

    def step(self, tour: Tour, instance: Instance, k: int, rng: np.random.Generator) -> StepOutcome:
        raise NotImplementedError


def _apply_best(tour: Tour, kind: OperatorKind, instance: Instance, k: int, rng: np.random.Generator) -> StepOutcome:
    move = sample_best_move(tour, kind, instance, k, rng)
    if move is None:
        return StepOutcome(tour, 0.0, None)
    new_tour, reward = apply_move(tour, move, instance)
    return StepOutcome(new_tour, reward, move)


class RandomPolicy(Policy):
    name = "random"

    def __init__(self, kinds: tuple[OperatorKind, ...]):
        self.kinds = kinds

    def step(self, tour, instance, k, rng):
        kind = self.kinds[int(rng.integers(len(self.kinds)))]
        return _apply_best(tour, kind, instance, k, rng)


class SinglePolicy(Policy):
    def __init__(self, kind: OperatorKind):
        self.kind = kind
        self.name = kind.value.lower()

    def step(self, tour, instance, k, rng):
        return _apply_best(tour, self.kind, instance, k, rng)


class InsertionPolicy(Policy):
    """Re-insert one random pair at the best of `k` sampled placements."""

    name = "insertion"

    def step(self, tour, instance, k, rng):
        i = int(rng.integers(1, tour.n + 1))
        size = len(tour.seq)
        placements = [(p_new, d_new) for p_new in range(1, size + 1) for d_new in range(p_new + 1, size + 1)]
        picked = np.sort(rng.choice(len(placements), size=min(k, len(placements)), replace=False))
        best = None
        for index in picked:
            move = Move(OperatorKind.INSERTION, (i, *placements[int(index)]))
            new_tour, reward = apply_move(tour, move, instance)
            if best is None or reward > best.reward:
                best = StepOutcome(new_tour, reward, move)
        return best


class GreedyBestPolicy(Policy):
    name = "greedy"

    def __init__(self, kinds: tuple[OperatorKind, ...]):
        self.kinds = kinds

    def step(self, tour, instance, k, rng):
        best = StepOutcome(tour, 0.0, None, stop=True)
        for kind in self.kinds:
            outcome = _apply_best(tour, kind, instance, k, rng)
            if outcome.move is not None and outcome.reward > best.reward:
                best = outcome
        return best


class NaivePolicy(Policy):
    name = "naive"

    def step(self, tour, instance, k, rng):
        size = len(tour.seq)
        best, rejected = None, 0
        for _ in range(k):
            a, b = sorted(int(x) for x in rng.choice(size, size=2, replace=False) + 1)
            move = Move(OperatorKind.NAIVE, (a, b))
            seq, feasible, reward = apply_naive(tour, move, instance)
            if not feasible:
                rejected += 1
                continue
            if best is None or reward > best.reward:
                best = StepOutcome(Tour.trusted(seq, tour.n), reward, move)
        if best is None:
            return StepOutcome(tour, 0.0, None, rejected)
        return StepOutcome(best.tour, best.reward, best.move, rejected)


def baseline_policy(kind_set, selection: Selection) -> Policy:
    """
    Build one of the comparison policies.

    Takes two arguments:
        kind_set:   operator kinds to choose among; ignored by Naive and Insertion.  Empty means all five for Random
                    and `GREEDY_KINDS` (the five plus insertion) for GreedyBest
        selection:  which policy

    Returns: a `Policy`.  Raises `InvalidConfig` unless a Single selection gets exactly one kind, and when Random or
    GreedyBest are given the naive kind.
    """
    kinds = tuple(kind_set or ())
    if OperatorKind.NAIVE in kinds and selection in (Selection.RANDOM, Selection.GREEDY_BEST):
        raise InvalidConfig("naive swaps can only be used on their own")
    match selection:
        case Selection.NAIVE:
            return NaivePolicy()
        case Selection.INSERTION:
            return InsertionPolicy()
        case Selection.RANDOM:
            return RandomPolicy(kinds or ADMISSIBLE_KINDS)
        case Selection.GREEDY_BEST:
            return GreedyBestPolicy(kinds or GREEDY_KINDS)
        case Selection.SINGLE:
            if len(kinds) != 1:
                raise InvalidConfig(f"a single-operator policy needs exactly one kind, got {kinds}")
            if kinds[0] is OperatorKind.INSERTION:
                return InsertionPolicy()
            if kinds[0] is OperatorKind.NAIVE:
                return NaivePolicy()
            return SinglePolicy(kinds[0])
    raise InvalidConfig(f"unknown selection {selection}")


@dataclass(frozen=True)
class SearchConfig:
    """`steps=None` means 50 steps per pair for each restart."""

    steps: int | None = None
    restarts: int = 1
    k_candidates: int = 32
    seed: int = 0
    audit: bool = False

    def validate(self) -> "SearchConfig":
        if self.steps is not None and self.steps < 0:
            raise InvalidConfig(f"steps must not be negative, got {self.steps}")
        for name in ("restarts", "k_candidates"):
            if getattr(self, name) < 1:
                raise InvalidConfig(f"{name} must be at least 1, got {getattr(self, name)}")
        if self.seed < 0:
            raise InvalidConfig(f"seed must not be negative, got {self.seed}")
        return self

    def steps_for(self, n: int) -> int:
        return 50 * n if self.steps is None else self.steps


@dataclass
class SearchResult:
    """
    The best tour a policy found over all restarts.

    Attributes:
        best_tour:      cheapest tour seen
        best_cost:      its cost
        initial_tour:   start of the restart that found it
        trace:          moves from `initial_tour` to `best_tour`
        steps:          steps taken over all restarts
        rejections:     infeasible proposals discarded over all restarts
    """

    best_tour: Tour
    best_cost: float
    initial_tour: Tour
    trace: list[Move] = field(default_factory=list)
    steps: int = 0
    rejections: int = 0


def _starting_tour(instance: Instance, restart: int, rng: np.random.Generator) -> Tour:
    if restart % 2 == 0:
        return canonical_initial(instance, rng.permutation(instance.n) + 1)
    return random_tour(instance.n, rng)


def local_search(instance: Instance, policy: Policy, config: SearchConfig) -> SearchResult:
    """
    Run `policy` for `config.restarts` restarts of `config.steps_for(n)` steps each.

    Restart r draws from `(seed, r)`.  Returns the best tour over all restarts as a `SearchResult`.
    """
    config.validate()
    result: SearchResult | None = None
    total_steps, total_rejections = 0, 0
    for restart in range(config.restarts):
        rng = np.random.default_rng([config.seed, restart])
        tour = _starting_tour(instance, restart, rng)
        initial, cost = tour, tour_cost(tour, instance)
        best_tour, best_cost, applied, best_trace = tour, cost, [], []
        for _ in range(config.steps_for(instance.n)):
            outcome = policy.step(tour, instance, config.k_candidates, rng)
            total_steps += 1
            total_rejections += outcome.rejected
            if outcome.stop:
                break
            if outcome.move is None:
                continue
            tour = outcome.tour
            applied.append(outcome.move)
            if config.audit:
                try:
                    tour.validated()
                except PdtourError as error:
                    logging.critical(f"{policy.name} produced {render_tour(tour)} with {outcome.move}: {error}")
                    raise
            cost = tour_cost(tour, instance)
            if cost < best_cost:
                best_tour, best_cost, best_trace = tour, cost, list(applied)
        logging.info(f"{policy.name} restart {restart}: best cost {best_cost}")
        if result is None or best_cost < result.best_cost:
            result = SearchResult(best_tour, best_cost, initial, best_trace)
    result.steps = total_steps
    result.rejections = total_rejections
    return result
