import math

import numpy as np
import pytest

from pdtour.baselines import (
    GREEDY_KINDS,
    GreedyBestPolicy,
    InsertionPolicy,
    NaivePolicy,
    RandomPolicy,
    SearchConfig,
    Selection,
    SinglePolicy,
    baseline_policy,
    local_search,
)
from pdtour.errors import InvalidConfig
from pdtour.exact import brute_force
from pdtour.instance import Instance, generate_random, scaled
from pdtour.operators import ADMISSIBLE_KINDS, OperatorKind, apply_move
from pdtour.tour import from_sequence, is_feasible, random_tour, tour_cost


@pytest.fixture()
def hand_instance():
    return Instance.from_coords([(0, 0), (1, 0), (2, 0), (1, 1), (2, 1)])


def test_policy_construction():
    assert isinstance(baseline_policy((), Selection.RANDOM), RandomPolicy)
    assert baseline_policy((), Selection.GREEDY_BEST).kinds == (*ADMISSIBLE_KINDS, OperatorKind.INSERTION)
    assert isinstance(baseline_policy((OperatorKind.N2,), Selection.SINGLE), SinglePolicy)
    assert isinstance(baseline_policy((OperatorKind.INSERTION,), Selection.SINGLE), InsertionPolicy)
    assert isinstance(baseline_policy((), Selection.NAIVE), NaivePolicy)
    assert baseline_policy((OperatorKind.B1,), Selection.SINGLE).name == "b1"


def test_policy_construction_errors():
    with pytest.raises(InvalidConfig):
        baseline_policy((), Selection.SINGLE)
    with pytest.raises(InvalidConfig):
        baseline_policy((OperatorKind.N1, OperatorKind.N2), Selection.SINGLE)
    with pytest.raises(InvalidConfig):
        baseline_policy((OperatorKind.NAIVE, OperatorKind.N1), Selection.RANDOM)


def test_search_config_validation():
    with pytest.raises(InvalidConfig):
        SearchConfig(restarts=0).validate()
    with pytest.raises(InvalidConfig):
        SearchConfig(k_candidates=0).validate()
    assert SearchConfig().steps_for(3) == 150


def test_greedy_stops_at_a_local_optimum(hand_instance):
    policy = GreedyBestPolicy(ADMISSIBLE_KINDS)
    optimum = from_sequence([1, 2, 4, 3], 2)
    outcome = policy.step(optimum, hand_instance, 100, np.random.default_rng(0))

    assert outcome.stop
    assert outcome.move is None


def test_greedy_matches_the_hand_optimum(hand_instance):
    result = local_search(
        hand_instance, baseline_policy((), Selection.GREEDY_BEST), SearchConfig(restarts=40, k_candidates=100)
    )

    assert math.isclose(result.best_cost, brute_force(hand_instance).optimal_cost)


@pytest.mark.parametrize("seed", range(3))
def test_greedy_is_never_better_than_the_optimum(seed):
    instance = generate_random(3, seed)
    result = local_search(instance, baseline_policy((), Selection.GREEDY_BEST), SearchConfig(restarts=4, seed=seed))

    assert result.best_cost >= brute_force(instance).optimal_cost - 1e-12


@pytest.mark.parametrize("factor", [0.25, 4.0, 7.3])
def test_greedy_choices_ignore_the_scale(factor):
    instance = generate_random(5, 12)
    stretched_instance = scaled(instance, factor)
    policy = GreedyBestPolicy(GREEDY_KINDS)
    tour = random_tour(5, np.random.default_rng(3))
    plain_rng, scaled_rng = np.random.default_rng(9), np.random.default_rng(9)
    for _ in range(20):
        plain = policy.step(tour, instance, 16, plain_rng)
        stretched = policy.step(tour, stretched_instance, 16, scaled_rng)

        assert plain.move == stretched.move
        assert math.isclose(stretched.reward, factor * plain.reward, rel_tol=1e-9, abs_tol=1e-12)
        if plain.stop:
            break
        tour = plain.tour


@pytest.mark.slow
def test_greedy_restarts_find_most_optima_on_four_pairs():
    policy = baseline_policy((), Selection.GREEDY_BEST)
    matches = 0
    for seed in range(50):
        instance = generate_random(4, seed)
        result = local_search(instance, policy, SearchConfig(restarts=20, seed=seed))
        matches += abs(result.best_cost - brute_force(instance).optimal_cost) <= 1e-9

    assert matches >= 45


@pytest.mark.parametrize(
    "selection, kinds",
    [
        (Selection.RANDOM, ()),
        (Selection.SINGLE, (OperatorKind.N1,)),
        (Selection.SINGLE, (OperatorKind.B2,)),
        (Selection.INSERTION, ()),
        (Selection.NAIVE, ()),
    ],
)
def test_search_results_are_consistent(selection, kinds):
    instance = generate_random(4, 2)
    result = local_search(instance, baseline_policy(kinds, selection), SearchConfig(steps=30, restarts=3, seed=1))

    assert is_feasible(result.best_tour.seq, 4)
    assert math.isclose(tour_cost(result.best_tour, instance), result.best_cost)
    assert result.best_cost <= tour_cost(result.initial_tour, instance)
    assert result.steps == 90


def test_trace_replays_to_the_best_tour():
    instance = generate_random(4, 3)
    result = local_search(instance, baseline_policy((), Selection.RANDOM), SearchConfig(steps=40, restarts=2, seed=7))
    tour = result.initial_tour
    for move in result.trace:
        tour, _ = apply_move(tour, move, instance)

    assert tour == result.best_tour


def test_naive_counts_rejections():
    instance = generate_random(5, 4)
    result = local_search(instance, NaivePolicy(), SearchConfig(steps=20, seed=0, audit=True))

    assert result.rejections > 0
    assert is_feasible(result.best_tour.seq, 5)


def test_search_is_deterministic():
    instance = generate_random(4, 9)
    config = SearchConfig(steps=25, restarts=3, seed=5)
    first = local_search(instance, baseline_policy((), Selection.RANDOM), config)
    second = local_search(instance, baseline_policy((), Selection.RANDOM), config)

    assert first.best_tour == second.best_tour
    assert first.trace == second.trace


def test_single_pair_searches_do_nothing():
    instance = generate_random(1, 0)
    result = local_search(instance, SinglePolicy(OperatorKind.N3), SearchConfig(steps=5))

    assert result.best_tour.seq == (1, 2)
    assert result.trace == []
