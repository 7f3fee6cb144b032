import numpy as np
import pytest
import torch

from pdtour.errors import CheckpointError, DimensionMismatch
from pdtour.features import EpisodeHistory, extract_features
from pdtour.instance import generate_random
from pdtour.network import (
    CHECKPOINT_MAGIC,
    PARAMETER_NAMES,
    finite_difference_check,
    forward,
    forward_batch,
    init_network,
    load_checkpoint,
    parameter_count,
    parameter_shapes,
    save_checkpoint,
)
from pdtour.tour import random_tour, tour_cost


def _state(n, history_length, seed):
    instance = generate_random(n, seed)
    rng = np.random.default_rng(seed)
    tour = random_tour(n, rng)
    history = EpisodeHistory(length=history_length, episode_steps=50 * n, best_cost=tour_cost(tour, instance) - 0.1)
    for step in range(history_length + 1):
        history.record(step % 5, float(rng.normal()), tour_cost(tour, instance))
    return extract_features(tour, instance, history)


def test_fresh_network_is_uniform():
    net = init_network(64, 4, np.random.default_rng(0))
    probabilities, value = forward(net, _state(3, 4, 1))

    assert np.allclose(probabilities, 0.2)
    assert value == 0.0


def test_probabilities_sum_to_one():
    net = init_network(32, 4, np.random.default_rng(0), zero_heads=False)
    for seed in range(5):
        probabilities, _ = forward(net, _state(4, 4, seed))
        assert probabilities.shape == (5,)
        assert np.all(probabilities > 0)
        assert np.isclose(probabilities.sum(), 1.0)


def test_batch_matches_single_states():
    net = init_network(16, 2, np.random.default_rng(3), zero_heads=False)
    states = [_state(3, 2, seed) for seed in range(4)]
    logits, values = forward_batch(
        net, np.stack([s.node_matrix for s in states]), np.stack([s.operator_vector for s in states])
    )
    for index, state in enumerate(states):
        single_logits, single_values = forward_batch(net, state.node_matrix[None], state.operator_vector[None])
        assert np.allclose(logits[index], single_logits[0])
        assert np.isclose(values[index], single_values[0])


def test_works_for_any_node_count():
    net = init_network(16, 4, np.random.default_rng(0), zero_heads=False)
    for n in (1, 2, 7):
        probabilities, _ = forward(net, _state(n, 4, n))
        assert np.isclose(probabilities.sum(), 1.0)


def test_dimension_mismatch():
    net = init_network(16, 4, np.random.default_rng(0))
    state = _state(2, 3, 0)
    with pytest.raises(DimensionMismatch):
        forward(net, state)


def test_parameter_count():
    width, history = 8, 4
    shapes = parameter_shapes(width, history)

    assert list(shapes) == list(PARAMETER_NAMES)
    assert parameter_count(width, history) == sum(int(np.prod(shape)) for shape in shapes.values())
    assert init_network(width, history, np.random.default_rng(0)).flat_parameters().size == parameter_count(8, 4)


def test_network_is_a_float64_module():
    net = init_network(8, 2, np.random.default_rng(1))

    assert isinstance(net, torch.nn.Module)
    assert [name for name, _ in net.named_parameters()] == list(PARAMETER_NAMES)
    assert all(param.dtype == torch.float64 for param in net.parameters())
    assert {name: tuple(array.shape) for name, array in net.parameter_arrays().items()} == parameter_shapes(8, 2)


def test_initialization_is_seeded():
    first = init_network(8, 2, np.random.default_rng(4), zero_heads=False)
    second = init_network(8, 2, np.random.default_rng(4), zero_heads=False)

    assert np.array_equal(first.flat_parameters(), second.flat_parameters())


def test_flat_parameters_round_trip_through_a_copy():
    net = init_network(8, 2, np.random.default_rng(6), zero_heads=False)
    other = init_network(8, 2, np.random.default_rng(7), zero_heads=False)
    other.set_flat_parameters(net.flat_parameters())
    state = _state(2, 2, 0)

    assert np.array_equal(forward(other, state)[0], forward(net, state)[0])
    with pytest.raises(DimensionMismatch):
        other.set_flat_parameters(np.zeros(3))


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_gradients_match_finite_differences(seed):
    net = init_network(16, 4, np.random.default_rng(seed), zero_heads=False)
    state = _state(3, 4, seed)
    error = finite_difference_check(net, state, seed % 5, np.random.default_rng(seed), probes=40)

    assert error < 1e-4


def test_checkpoint_round_trip(tmp_path):
    net = init_network(8, 3, np.random.default_rng(5), zero_heads=False)
    path = tmp_path / "net.ck"
    save_checkpoint(path, net)
    loaded = load_checkpoint(path)

    assert (loaded.width, loaded.history) == (8, 3)
    assert np.array_equal(loaded.flat_parameters(), net.flat_parameters())
    assert path.read_bytes().startswith(CHECKPOINT_MAGIC)


def test_checkpoint_errors(tmp_path):
    net = init_network(8, 3, np.random.default_rng(5))
    path = tmp_path / "net.ck"
    save_checkpoint(path, net)
    data = path.read_bytes()

    truncated = tmp_path / "truncated.ck"
    truncated.write_bytes(data[:-8])
    with pytest.raises(CheckpointError):
        load_checkpoint(truncated)

    wrong_magic = tmp_path / "magic.ck"
    wrong_magic.write_bytes(b"NOTACKPT" + data[8:])
    with pytest.raises(CheckpointError):
        load_checkpoint(wrong_magic)

    wrong_version = tmp_path / "version.ck"
    wrong_version.write_bytes(data[:8] + (1).to_bytes(4, "little") + data[12:])
    with pytest.raises(CheckpointError):
        load_checkpoint(wrong_version)
