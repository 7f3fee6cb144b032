"""
This module provides the training loop that learns which operator to apply next.

Each episode starts from a pickup-then-delivery tour with a shuffled pickup order.  At every step the policy picks one
of the five admissible operator kinds, the best of `k_candidates` sampled moves of that kind is applied, and the
transition is stored.  A tour that stops improving for a while is moved on by insertion: the best improving
re-insertion of one pair, or a rebuild from a fresh pickup order.  After each wave of episodes the stored transitions
feed one clipped policy-gradient update, run with a torch SGD or Adam optimizer, and the buffer is cleared.
Training stops after `episodes` episodes, or earlier once the best cost found so far has not moved by more than
`eps_conv` for `patience` episodes in a row.

Randomness is derived from the seed alone: the network from `seed`, episode w from `(seed, w)`, and its update from
`(seed, w, 1)`, so a run is reproducible and rollouts can run in any order or in parallel.

Exported types:
    Episode
    RolloutBuffer
    TrainConfig
    TrainReport
    Transition
    UpdateStats

Exported functions:
    escape_moves
    make_optimizer
    ppo_update
    run_episode
    train
"""

import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
import torch

from pdtour.errors import EmptyBuffer, InvalidConfig, PdtourError
from pdtour.features import ACTION_COUNT, EpisodeHistory, StateFeatures, extract_features
from pdtour.instance import Instance
from pdtour.network import ActorCritic, as_tensors, forward, init_network
from pdtour.operators import ADMISSIBLE_KINDS, Move, OperatorKind, apply_move, enumerate_moves, sample_best_move
from pdtour.tour import Tour, canonical_initial, render_tour, tour_cost


IMPROVEMENT = 1e-12


@dataclass(frozen=True)
class TrainConfig:
    """
    Everything that shapes a training run.  `steps=None` means 50 steps per pair; `stall_steps=None` means 3 steps
    per pair and 0 turns escapes off.

    `clip` may be `math.inf` to turn clipping off.
    """

    episodes: int = 2000
    steps: int | None = None
    eps_conv: float = 1e-9
    patience: int = 20
    gamma: float = 0.99
    clip: float = 0.2
    lr: float = 3e-4
    batch: int = 64
    update_epochs: int = 4
    k_candidates: int = 32
    history: int = 4
    width: int = 256
    seed: int = 0
    optimizer: str = "sgd"
    value_coef: float = 0.5
    normalize_advantages: bool = True
    episodes_per_update: int = 1
    rollout_workers: int = 1
    audit: bool = False
    stall_steps: int | None = None

    def validate(self) -> "TrainConfig":
        positive = ("episodes", "patience", "batch", "update_epochs", "k_candidates", "history", "width")
        for name in positive + ("episodes_per_update", "rollout_workers"):
            if getattr(self, name) < 1:
                raise InvalidConfig(f"{name} must be at least 1, got {getattr(self, name)}")
        if self.steps is not None and self.steps < 0:
            raise InvalidConfig(f"steps must not be negative, got {self.steps}")
        if self.stall_steps is not None and self.stall_steps < 0:
            raise InvalidConfig(f"stall_steps must not be negative, got {self.stall_steps}")
        if not self.eps_conv > 0:
            raise InvalidConfig(f"eps_conv must be positive, got {self.eps_conv}")
        if not 0 < self.gamma <= 1:
            raise InvalidConfig(f"gamma must be in (0, 1], got {self.gamma}")
        if not (0 < self.clip < 1 or self.clip == math.inf):
            raise InvalidConfig(f"clip must be in (0, 1) or inf, got {self.clip}")
        if not self.lr > 0:
            raise InvalidConfig(f"lr must be positive, got {self.lr}")
        if self.value_coef < 0:
            raise InvalidConfig(f"value_coef must not be negative, got {self.value_coef}")
        if self.optimizer not in ("sgd", "adam"):
            raise InvalidConfig(f"optimizer must be 'sgd' or 'adam', got {self.optimizer!r}")
        if self.seed < 0:
            raise InvalidConfig(f"seed must not be negative, got {self.seed}")
        return self

    def steps_for(self, n: int) -> int:
        return 50 * n if self.steps is None else self.steps

    def stall_for(self, n: int) -> int:
        return 3 * n if self.stall_steps is None else self.stall_steps


@dataclass(frozen=True)
class Transition:
    state: StateFeatures
    action: int
    reward: float
    next_state: StateFeatures
    logp_old: float
    done: bool


@dataclass
class RolloutBuffer:
    """On-policy storage: filled by a wave of episodes, consumed by one update, then cleared."""

    transitions: list[Transition] = field(default_factory=list)

    def extend(self, transitions: list[Transition]):
        self.transitions.extend(transitions)

    def clear(self):
        self.transitions.clear()

    def __len__(self) -> int:
        return len(self.transitions)


@dataclass
class Episode:
    """
    One rollout.

    Attributes:
        transitions:    one per step
        initial_tour:   where the episode started
        best_tour:      the cheapest tour visited, the initial tour included
        best_cost:      its cost
        best_trace:     the moves that lead from `initial_tour` to `best_tour`
    """

    transitions: list[Transition]
    initial_tour: Tour
    best_tour: Tour
    best_cost: float
    best_trace: list[Move]


@dataclass(frozen=True)
class UpdateStats:
    policy_loss: float
    value_loss: float
    approx_kl: float


def _audit(tour: Tour, context: str) -> Tour:
    try:
        return tour.validated()
    except PdtourError as error:
        logging.critical(f"Infeasible tour after {context}: {render_tour(tour)} ({error})")
        raise


def escape_moves(tour: Tour, instance: Instance, rng: np.random.Generator) -> list[Move]:
    """
    Insertion moves that take a stalled tour somewhere else: the best improving re-insertion of one pair if there is
    one, otherwise a rebuild into a pickup-then-delivery tour with a fresh pickup order.
    """
    best_move, best_reward = None, IMPROVEMENT
    for move in enumerate_moves(tour, OperatorKind.INSERTION):
        _, reward = apply_move(tour, move, instance)
        if reward > best_reward:
            best_move, best_reward = move, reward
    if best_move is not None:
        return [best_move]
    order = rng.permutation(tour.n) + 1
    return [Move(OperatorKind.INSERTION, (int(i), 2 * k + 1, 2 * k + 2)) for k, i in enumerate(order)]


def run_episode(instance: Instance, net: ActorCritic, config: TrainConfig, rng: np.random.Generator) -> Episode:
    """
    Roll the current policy forward for `config.steps_for(n)` steps.

    A chosen kind with no applicable move leaves the tour unchanged and earns reward 0.  Once the tour has gone
    `config.stall_for(n)` steps without beating its lowest cost since the last escape, `escape_moves` moves it on.
    Those insertions are not actions and earn the policy nothing; they appear in `best_trace` like any other move.
    """
    steps = config.steps_for(instance.n)
    stall = config.stall_for(instance.n)
    tour = canonical_initial(instance, rng.permutation(instance.n) + 1)
    cost = tour_cost(tour, instance)
    initial_tour, best_tour, best_cost = tour, tour, cost
    history = EpisodeHistory(config.history, steps, cost)
    state = extract_features(tour, instance, history)
    transitions: list[Transition] = []
    applied: list[Move] = []
    best_trace: list[Move] = []
    lowest, stalled = cost, 0

    for step in range(steps):
        probs, _ = forward(net, state)
        action = int(rng.choice(ACTION_COUNT, p=probs))
        move = sample_best_move(tour, ADMISSIBLE_KINDS[action], instance, config.k_candidates, rng)
        reward = 0.0
        if move is not None:
            tour, reward = apply_move(tour, move, instance)
            cost = tour_cost(tour, instance)
            applied.append(move)
            logging.debug(f"step {step}: {move} reward={reward}")
            if config.audit:
                _audit(tour, str(move))
        history.record(action, reward, cost)
        if cost < best_cost:
            best_tour, best_cost, best_trace = tour, cost, list(applied)

        if cost < lowest - IMPROVEMENT:
            lowest, stalled = cost, 0
        else:
            stalled += 1
        if stall and stalled >= stall:
            for escape in escape_moves(tour, instance, rng):
                tour, _ = apply_move(tour, escape, instance)
                applied.append(escape)
            cost = tour_cost(tour, instance)
            lowest, stalled = cost, 0
            logging.debug(f"step {step}: stalled, escaped to cost {cost}")
            if config.audit:
                _audit(tour, "an escape")
            if cost < best_cost:
                best_tour, best_cost, best_trace = tour, cost, list(applied)

        next_state = extract_features(tour, instance, history)
        transitions.append(
            Transition(state, action, reward, next_state, float(np.log(probs[action])), step == steps - 1)
        )
        state = next_state

    return Episode(transitions, initial_tour, best_tour, best_cost, best_trace)


def make_optimizer(net: ActorCritic, config: TrainConfig) -> torch.optim.Optimizer:
    match config.optimizer:
        case "adam":
            return torch.optim.Adam(net.parameters(), lr=config.lr)
        case _:
            return torch.optim.SGD(net.parameters(), lr=config.lr)


def _stack(states: list[StateFeatures]) -> tuple[torch.Tensor, torch.Tensor]:
    return as_tensors(np.stack([s.node_matrix for s in states]), np.stack([s.operator_vector for s in states]))


def ppo_update(
    net: ActorCritic,
    buffer: RolloutBuffer,
    config: TrainConfig,
    optimizer: torch.optim.Optimizer | None = None,
    rng: np.random.Generator | None = None,
) -> UpdateStats:
    """
    One clipped policy-gradient update over everything in `buffer`; `net` is updated in place.

    Advantages `r + gamma·V(s')·(1 - done) - V(s)` and value targets are computed once, with the parameters as they
    are on entry.  Then `update_epochs` passes run over shuffled minibatches of `config.batch` transitions, each
    minimizing the negated clipped surrogate plus `value_coef` times the squared value error.

    Returns: losses and the approximate KL divergence, averaged over minibatches.  Raises `EmptyBuffer`.
    """
    if len(buffer) == 0:
        raise EmptyBuffer("no transitions to learn from")
    if optimizer is None:
        optimizer = make_optimizer(net, config)
    if rng is None:
        rng = np.random.default_rng(config.seed)
    transitions = buffer.transitions
    nodes, operators = _stack([t.state for t in transitions])
    next_nodes, next_operators = _stack([t.next_state for t in transitions])
    actions = torch.tensor([t.action for t in transitions])
    rewards = torch.tensor([t.reward for t in transitions], dtype=torch.float64)
    logp_old = torch.tensor([t.logp_old for t in transitions], dtype=torch.float64)
    not_done = torch.tensor([0.0 if t.done else 1.0 for t in transitions], dtype=torch.float64)

    with torch.no_grad():
        _, values = net(nodes, operators)
        _, next_values = net(next_nodes, next_operators)
        targets = rewards + config.gamma * next_values * not_done
        advantages = targets - values
        if config.normalize_advantages:
            advantages = (advantages - advantages.mean()) / max(float(advantages.std(correction=0)), 1e-8)

    low, high = 1.0 - config.clip, 1.0 + config.clip
    policy_losses, value_losses, kls = [], [], []
    for _ in range(config.update_epochs):
        order = rng.permutation(len(transitions))
        for start in range(0, len(order), config.batch):
            index = torch.from_numpy(order[start : start + config.batch])
            logits, batch_values = net(nodes[index], operators[index])
            logp_new = torch.log_softmax(logits, dim=-1).gather(1, actions[index, None])[:, 0]
            ratio = torch.exp(logp_new - logp_old[index])
            advantage = advantages[index]
            surrogate = torch.min(ratio * advantage, torch.clamp(ratio, low, high) * advantage)
            policy_loss = -surrogate.mean()
            value_loss = config.value_coef * torch.mean((batch_values - targets[index]) ** 2)

            optimizer.zero_grad()
            (policy_loss + value_loss).backward()
            optimizer.step()

            policy_losses.append(float(policy_loss))
            value_losses.append(float(value_loss))
            with torch.no_grad():
                kls.append(float(torch.mean((ratio - 1.0) - torch.log(ratio))))

    return UpdateStats(float(np.mean(policy_losses)), float(np.mean(value_losses)), float(np.mean(kls)))


@dataclass
class TrainReport:
    """
    The outcome of `train`.

    Attributes:
        best_tour:      the cheapest tour found in any episode
        best_cost:      its cost
        cost_curve:     the best cost found up to and including each episode (never increases)
        episodes_run:   episodes actually run
        converged:      `True` when training stopped on the convergence test rather than the episode limit
        updates:        statistics of every policy update, in order
        initial_tour:   the start of the episode that found `best_tour`
        best_trace:     the moves from `initial_tour` to `best_tour`
    """

    best_tour: Tour
    best_cost: float
    cost_curve: list[float]
    episodes_run: int
    converged: bool
    updates: list[UpdateStats]
    initial_tour: Tour
    best_trace: list[Move]

    def to_json(self) -> dict:
        return {
            "best_cost": self.best_cost,
            "best_tour": list(self.best_tour.seq),
            "converged": self.converged,
            "cost_curve": self.cost_curve,
            "episodes_run": self.episodes_run,
            "initial_tour": list(self.initial_tour.seq),
            "trace": [str(move) for move in self.best_trace],
            "updates": [asdict(stats) for stats in self.updates],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True)

    def curve_csv(self) -> str:
        lines = ["episode,best_cost"]
        lines.extend(f"{episode},{cost!r}" for episode, cost in enumerate(self.cost_curve))
        return "\n".join(lines) + "\n"


def _rollout(instance: Instance, net: ActorCritic, config: TrainConfig, episode: int) -> Episode:
    return run_episode(instance, net, config, np.random.default_rng([config.seed, episode]))


def train(instance: Instance, config: TrainConfig, net: ActorCritic | None = None) -> TrainReport:
    """
    Train a policy on `instance` and report the best tour it found.

    Takes three arguments:
        instance:   the instance to learn on
        config:     a `TrainConfig`; validated here
        net:        a network to continue from (e.g. a loaded checkpoint); a fresh one is built when `None`

    Returns: a `TrainReport`.  The same instance, config, and starting network always give the same report.
    """
    config.validate()
    if net is None:
        net = init_network(config.width, config.history, np.random.default_rng(config.seed))
    optimizer = make_optimizer(net, config)
    buffer = RolloutBuffer()
    best: Episode | None = None
    curve: list[float] = []
    updates: list[UpdateStats] = []
    stable, converged, episode = 0, False, 0

    while episode < config.episodes and not converged:
        wave = list(range(episode, min(episode + config.episodes_per_update, config.episodes)))
        if config.rollout_workers > 1 and len(wave) > 1:
            with ProcessPoolExecutor(max_workers=config.rollout_workers) as pool:
                episodes = list(pool.map(_rollout, *zip(*[(instance, net, config, w) for w in wave])))
        else:
            episodes = [_rollout(instance, net, config, w) for w in wave]

        for result in episodes:
            buffer.extend(result.transitions)
            if best is None or result.best_cost < best.best_cost:
                best = result
            if curve and abs(best.best_cost - curve[-1]) < config.eps_conv:
                stable += 1
            else:
                stable = 0
            curve.append(best.best_cost)
            logging.info(f"Episode {episode}: best cost {best.best_cost}")
            episode += 1
            if stable >= config.patience:
                converged = True
                logging.info(f"Converged after {episode} episodes")
                break

        if len(buffer):
            stats = ppo_update(net, buffer, config, optimizer, np.random.default_rng([config.seed, episode, 1]))
            updates.append(stats)
            logging.info(f"Update: {stats}")
        buffer.clear()

    return TrainReport(
        best.best_tour, best.best_cost, curve, episode, converged, updates, best.initial_tour, best.best_trace
    )
