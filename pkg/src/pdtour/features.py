"""
This module turns a search state into the fixed-size numbers the actor-critic reads.

A state has two parts.  The node matrix has one row per node (row index = node id) with twelve columns:

     0  x                 4  is_delivery      8  succ_y
     1  y                 5  pred_x           9  dist_to_pred
     2  is_depot          6  pred_y          10  dist_to_succ
     3  is_pickup         7  succ_x          11  position / 2n

Predecessor and successor follow the tour with the depot at both ends, so the depot's predecessor is the last node
visited and its successor the first.  An instance without coordinates gets zeros in the coordinate columns.

The operator vector has 2H+3 entries: the last step's improvement, the gap between the current cost and the best
cost of the episode, the steps since the last improvement divided by the episode length, then H records of
(operator index / 5, improvement), most recent first, zero-padded.

Exported types:
    EpisodeHistory
    StateFeatures

Exported functions:
    extract_features
"""

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from pdtour.instance import Instance
from pdtour.tour import Tour, tour_cost

NODE_FEATURES = 12
ACTION_COUNT = 5


def operator_vector_size(history_length: int) -> int:
    return 2 * history_length + 3


@dataclass(frozen=True)
class StateFeatures:
    node_matrix: np.ndarray
    operator_vector: np.ndarray


@dataclass
class EpisodeHistory:
    """
    What the operator vector needs to remember about the episode so far.

    Attributes:
        length:                     H, the number of recent operator records kept
        episode_steps:              M, used to normalize the steps-since-improvement counter
        best_cost:                  the lowest cost seen this episode
        last_improvement:           the reward of the latest step
        steps_since_improvement:    steps since a step last had a positive reward
        records:                    the H latest (operator index, reward) pairs, newest last
    """

    length: int
    episode_steps: int
    best_cost: float
    last_improvement: float = 0.0
    steps_since_improvement: int = 0
    records: deque = field(default_factory=deque)

    def __post_init__(self):
        self.records = deque(self.records, maxlen=self.length)

    def record(self, action: int, reward: float, cost: float):
        """Note that operator `action` was applied with `reward`, leaving the tour at `cost`."""
        self.records.append((action, reward))
        self.last_improvement = reward
        self.steps_since_improvement = 0 if reward > 0 else self.steps_since_improvement + 1
        self.best_cost = min(self.best_cost, cost)


def extract_features(tour: Tour, instance: Instance, history: EpisodeHistory) -> StateFeatures:
    """Build the node matrix and operator vector for `tour` (see the module docstring for the layouts)."""
    n = instance.n
    size = instance.size
    order = np.asarray(tour.seq)

    predecessor = np.empty(size, dtype=np.intp)
    successor = np.empty(size, dtype=np.intp)
    predecessor[order] = np.concatenate(([0], order[:-1]))
    successor[order] = np.concatenate((order[1:], [0]))
    predecessor[0], successor[0] = order[-1], order[0]

    coords = instance.coords if instance.coords is not None else np.zeros((size, 2))
    nodes = np.arange(size)
    position = np.asarray(tour.pos, dtype=np.float64) / (2 * n)

    node_matrix = np.zeros((size, NODE_FEATURES))
    node_matrix[:, 0:2] = coords
    node_matrix[0, 2] = 1.0
    node_matrix[1 : n + 1, 3] = 1.0
    node_matrix[n + 1 :, 4] = 1.0
    node_matrix[:, 5:7] = coords[predecessor]
    node_matrix[:, 7:9] = coords[successor]
    node_matrix[:, 9] = instance.cost[nodes, predecessor]
    node_matrix[:, 10] = instance.cost[nodes, successor]
    node_matrix[:, 11] = position

    operator_vector = np.zeros(operator_vector_size(history.length))
    operator_vector[0] = history.last_improvement
    operator_vector[1] = tour_cost(tour, instance) - history.best_cost
    if history.episode_steps > 0:
        operator_vector[2] = history.steps_since_improvement / history.episode_steps
    for slot, (action, reward) in enumerate(reversed(history.records)):
        operator_vector[3 + 2 * slot] = action / ACTION_COUNT
        operator_vector[4 + 2 * slot] = reward

    return StateFeatures(node_matrix, operator_vector)
