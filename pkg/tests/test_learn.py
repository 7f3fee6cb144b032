import math

import numpy as np
import pytest
import torch

from pdtour.baselines import SearchConfig, SinglePolicy, local_search
from pdtour.errors import EmptyBuffer, InvalidConfig
from pdtour.exact import brute_force
from pdtour.instance import Instance, generate_random
from pdtour.learn import (
    RolloutBuffer,
    TrainConfig,
    Transition,
    escape_moves,
    make_optimizer,
    ppo_update,
    run_episode,
    train,
)
from pdtour.network import forward, init_network, log_prob_gradient
from pdtour.operators import OperatorKind, apply_move
from pdtour.tour import canonical_initial, from_sequence, tour_cost


@pytest.fixture()
def hand_instance():
    return Instance.from_coords([(0, 0), (1, 0), (2, 0), (1, 1), (2, 1)])


def small_config(**overrides):
    values = {"width": 16, "history": 4, "episodes": 5, "steps": 10, "seed": 0}
    values.update(overrides)
    return TrainConfig(**values)


@pytest.mark.parametrize(
    "overrides",
    [
        {"episodes": 0},
        {"gamma": 0.0},
        {"clip": 1.5},
        {"lr": 0.0},
        {"eps_conv": 0.0},
        {"optimizer": "rmsprop"},
        {"steps": -1},
        {"batch": 0},
        {"stall_steps": -1},
    ],
)
def test_invalid_configs(overrides):
    with pytest.raises(InvalidConfig):
        TrainConfig(**overrides).validate()


def test_defaults():
    config = TrainConfig().validate()

    assert (config.episodes, config.gamma, config.clip, config.lr) == (2000, 0.99, 0.2, 3e-4)
    assert (config.update_epochs, config.k_candidates, config.history, config.width) == (4, 32, 4, 256)
    assert config.steps_for(5) == 250
    assert (config.stall_for(5), TrainConfig(stall_steps=0).stall_for(5)) == (15, 0)
    assert TrainConfig(clip=math.inf).validate().clip == math.inf


def test_episode_shape_and_trace(hand_instance):
    config = small_config(steps=12)
    net = init_network(config.width, config.history, np.random.default_rng(0))
    episode = run_episode(hand_instance, net, config, np.random.default_rng(1))

    assert len(episode.transitions) == 12
    assert episode.transitions[-1].done and not episode.transitions[0].done
    assert episode.best_cost <= tour_cost(episode.initial_tour, hand_instance)

    tour = episode.initial_tour
    for move in episode.best_trace:
        tour, _ = apply_move(tour, move, hand_instance)
    assert tour == episode.best_tour
    assert math.isclose(tour_cost(tour, hand_instance), episode.best_cost)


def test_single_pair_episodes_earn_nothing():
    instance = generate_random(1, 0)
    config = small_config()
    net = init_network(config.width, config.history, np.random.default_rng(0))
    episode = run_episode(instance, net, config, np.random.default_rng(0))

    assert all(transition.reward == 0.0 for transition in episode.transitions)
    assert episode.best_tour.seq == (1, 2)


def test_escape_takes_the_best_improving_insertion(hand_instance):
    tour = from_sequence([1, 3, 2, 4], 2)
    moves = escape_moves(tour, hand_instance, np.random.default_rng(0))

    assert len(moves) == 1 and moves[0].kind is OperatorKind.INSERTION
    _, reward = apply_move(tour, moves[0], hand_instance)
    assert reward > 0


def test_escape_from_an_insertion_optimum_rebuilds(hand_instance):
    optimum = from_sequence([1, 2, 4, 3], 2)
    moves = escape_moves(optimum, hand_instance, np.random.default_rng(5))
    tour = optimum
    for move in moves:
        tour, _ = apply_move(tour, move, hand_instance)
    order = [move.params[0] for move in moves]

    assert all(move.kind is OperatorKind.INSERTION for move in moves)
    assert sorted(order) == [1, 2]
    assert tour == canonical_initial(hand_instance, order)


@pytest.mark.parametrize("seed", range(4))
def test_episodes_with_escapes_replay(seed):
    instance = generate_random(4, seed)
    config = small_config(steps=60, stall_steps=2)
    net = init_network(config.width, config.history, np.random.default_rng(seed))
    episode = run_episode(instance, net, config, np.random.default_rng(seed))
    tour = episode.initial_tour
    for move in episode.best_trace:
        tour, _ = apply_move(tour, move, instance)

    assert len(episode.transitions) == 60
    assert tour == episode.best_tour
    assert math.isclose(tour_cost(tour, instance), episode.best_cost)


def test_optimizers_are_torch_optimizers():
    net = init_network(8, 2, np.random.default_rng(0))

    assert isinstance(make_optimizer(net, small_config()), torch.optim.SGD)
    assert isinstance(make_optimizer(net, small_config(optimizer="adam")), torch.optim.Adam)


def test_update_needs_transitions():
    config = small_config()
    net = init_network(config.width, config.history, np.random.default_rng(0))
    with pytest.raises(EmptyBuffer):
        ppo_update(net, RolloutBuffer(), config)


def test_zero_rewards_leave_a_fresh_network_unchanged():
    instance = generate_random(1, 0)
    config = small_config()
    net = init_network(config.width, config.history, np.random.default_rng(0))
    before = net.flat_parameters()
    buffer = RolloutBuffer()
    buffer.extend(run_episode(instance, net, config, np.random.default_rng(0)).transitions)
    ppo_update(net, buffer, config)

    assert np.array_equal(net.flat_parameters(), before)


def test_unclipped_single_step_is_a_policy_gradient_step(hand_instance):
    config = small_config(
        clip=math.inf,
        update_epochs=1,
        batch=1,
        normalize_advantages=False,
        value_coef=0.0,
        lr=0.01,
    )
    net = init_network(config.width, config.history, np.random.default_rng(2), zero_heads=False)
    transition = run_episode(hand_instance, net, config, np.random.default_rng(3)).transitions[0]
    transition = Transition(
        transition.state, transition.action, 0.75, transition.next_state, transition.logp_old, True
    )
    _, value = forward(net, transition.state)
    logp, grads = log_prob_gradient(net, transition.state, transition.action)
    assert math.isclose(logp, transition.logp_old, rel_tol=1e-9, abs_tol=1e-12)
    before = net.parameter_arrays()
    expected = {name: before[name] + config.lr * (0.75 - value) * grads[name] for name in grads}

    buffer = RolloutBuffer()
    buffer.extend([transition])
    ppo_update(net, buffer, config)

    after = net.parameter_arrays()
    for name, array in expected.items():
        assert np.allclose(after[name], array, rtol=1e-9, atol=1e-12)


def test_update_reports_statistics(hand_instance):
    config = small_config(batch=4)
    net = init_network(config.width, config.history, np.random.default_rng(0))
    buffer = RolloutBuffer()
    buffer.extend(run_episode(hand_instance, net, config, np.random.default_rng(0)).transitions)
    stats = ppo_update(net, buffer, config)

    assert stats.value_loss >= 0
    assert stats.approx_kl >= -1e-12
    assert np.isfinite(stats.policy_loss)


def test_single_pair_converges_after_patience():
    report = train(generate_random(1, 0), small_config(episodes=100))

    assert report.converged
    assert report.episodes_run == 21
    assert len(report.cost_curve) == 21
    assert report.best_tour.seq == (1, 2)


def test_training_finds_the_hand_optimum(hand_instance):
    report = train(hand_instance, small_config(episodes=30, steps=None))

    assert math.isclose(report.best_cost, brute_force(hand_instance).optimal_cost, abs_tol=1e-9)
    assert all(a >= b for a, b in zip(report.cost_curve, report.cost_curve[1:]))


def test_training_is_deterministic():
    instance = generate_random(3, 5)
    first = train(instance, small_config(optimizer="adam"))
    second = train(instance, small_config(optimizer="adam"))

    assert first.dumps() == second.dumps()
    assert first.curve_csv() == second.curve_csv()


def test_parallel_rollouts_match_serial_ones():
    instance = generate_random(3, 6)
    serial = train(instance, small_config(episodes=4, episodes_per_update=2))
    parallel = train(instance, small_config(episodes=4, episodes_per_update=2, rollout_workers=2))

    assert serial.best_tour == parallel.best_tour
    assert np.allclose(serial.cost_curve, parallel.cost_curve)
    assert serial.episodes_run == parallel.episodes_run == 4


def test_report_outputs():
    report = train(generate_random(2, 1), small_config(episodes=3))
    lines = report.curve_csv().splitlines()
    record = report.to_json()

    assert lines[0] == "episode,best_cost"
    assert len(lines) == 1 + report.episodes_run
    assert record["episodes_run"] == 3
    assert len(record["updates"]) == 3
    assert record["best_tour"] == list(report.best_tour.seq)


@pytest.mark.slow
def test_learned_policy_matches_the_optimum_on_five_pairs():
    matches = 0
    for seed in range(30):
        instance = generate_random(5, seed)
        optimum = brute_force(instance, prune=True).optimal_cost
        report = train(instance, TrainConfig(width=64, seed=seed))
        matches += abs(report.best_cost - optimum) <= 1e-6

    assert matches >= 24


@pytest.mark.slow
def test_learned_policy_beats_single_operators_on_eight_pairs():
    kinds = (OperatorKind.N1, OperatorKind.N2, OperatorKind.N3, OperatorKind.B1, OperatorKind.B2)
    learned, single = [], {kind: [] for kind in kinds}
    for seed in range(20):
        instance = generate_random(8, 100 + seed)
        report = train(instance, TrainConfig(width=64, episodes=30, steps=100, seed=seed))
        learned.append(report.best_cost)
        budget = SearchConfig(steps=100, restarts=report.episodes_run, seed=seed)
        for kind in kinds:
            single[kind].append(local_search(instance, SinglePolicy(kind), budget).best_cost)

    for kind in kinds:
        assert np.mean(learned) <= np.mean(single[kind]) + 1e-9, kind
    assert np.mean(learned) < np.mean(single[OperatorKind.B1])
    assert np.mean(learned) < np.mean(single[OperatorKind.B2])
