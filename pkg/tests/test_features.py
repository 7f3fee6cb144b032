import math

import numpy as np
import pytest

from pdtour.features import EpisodeHistory, extract_features, operator_vector_size
from pdtour.instance import Instance
from pdtour.tour import from_sequence, tour_cost


@pytest.fixture()
def hand_instance():
    return Instance.from_coords([(0, 0), (1, 0), (2, 0), (1, 1), (2, 1)])


@pytest.fixture()
def hand_tour():
    return from_sequence([1, 2, 4, 3], 2)


def test_node_matrix_layout(hand_instance, hand_tour):
    history = EpisodeHistory(length=4, episode_steps=100, best_cost=tour_cost(hand_tour, hand_instance))
    features = extract_features(hand_tour, hand_instance, history)
    matrix = features.node_matrix

    assert matrix.shape == (5, 12)
    assert matrix[0].tolist()[:5] == [0, 0, 1, 0, 0]
    assert matrix[2].tolist()[:5] == [2, 0, 0, 1, 0]
    assert matrix[4].tolist()[:5] == [2, 1, 0, 0, 1]
    # node 4 sits between 2 and 3
    assert matrix[4].tolist()[5:9] == [2, 0, 1, 1]
    assert matrix[4][9] == 1.0 and matrix[4][10] == 1.0
    assert matrix[4][11] == 3 / 4
    # the depot closes the cycle: last visited node 3 before it, first visited node 1 after it
    assert matrix[0].tolist()[5:9] == [1, 1, 1, 0]
    assert math.isclose(matrix[0][9], math.sqrt(2))
    assert matrix[0][11] == 0.0


def test_operator_vector_is_zero_at_the_start(hand_instance, hand_tour):
    history = EpisodeHistory(length=4, episode_steps=100, best_cost=tour_cost(hand_tour, hand_instance))
    features = extract_features(hand_tour, hand_instance, history)

    assert features.operator_vector.shape == (operator_vector_size(4),)
    assert np.all(features.operator_vector == 0)


def test_operator_vector_records_newest_first(hand_instance, hand_tour):
    cost = tour_cost(hand_tour, hand_instance)
    history = EpisodeHistory(length=2, episode_steps=10, best_cost=cost - 0.5)
    history.record(0, 0.25, cost)
    history.record(3, -0.5, cost)
    history.record(4, -0.125, cost)
    vector = extract_features(hand_tour, hand_instance, history).operator_vector

    assert vector.tolist() == [-0.125, 0.5, 0.2, 4 / 5, -0.125, 3 / 5, -0.5]


def test_history_counts_steps_since_improvement():
    history = EpisodeHistory(length=3, episode_steps=10, best_cost=5.0)
    history.record(1, -1.0, 6.0)
    history.record(2, -1.0, 7.0)
    assert history.steps_since_improvement == 2
    history.record(0, 2.0, 4.0)

    assert history.steps_since_improvement == 0
    assert history.best_cost == 4.0
    assert len(history.records) == 3


def test_matrix_instance_has_no_coordinates(hand_tour):
    instance = Instance.from_matrix(
        [[0, 1, 2, 3, 4], [1, 0, 1, 2, 3], [2, 1, 0, 1, 2], [3, 2, 1, 0, 1], [4, 3, 2, 1, 0]]
    )
    history = EpisodeHistory(length=1, episode_steps=4, best_cost=0.0)
    matrix = extract_features(hand_tour, instance, history).node_matrix

    assert np.all(matrix[:, [0, 1, 5, 6, 7, 8]] == 0)
    assert matrix[1][10] == 1.0
