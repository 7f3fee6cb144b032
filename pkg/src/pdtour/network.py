"""
This module provides the actor-critic network that picks operators, a small torch module in float64.

The encoder applies the same two affine+ReLU layers to every node row and mean-pools the result.  The trunk runs two
more affine+ReLU layers over the pooled vector joined with the operator vector, then branches into a policy head
(five logits, one per admissible operator) and a value head (one scalar).  Gradients come from autograd; the
finite-difference check compares them against central differences.

Encoder and trunk weights start uniform in ±1/sqrt(fan_in), drawn from a numpy generator so a seed fixes them, and
biases at zero.  Both heads start at zero, so a fresh network has a uniform policy and a zero value everywhere.

A checkpoint file is the 8-byte magic `PDTOURCK`, then little-endian uint32 version, width and history length, a
uint64 parameter count, and the parameters as little-endian float64 in `PARAMETER_NAMES` order (torch's
(out, in) layout for weights).

Exported types:
    ActorCritic

Exported functions:
    as_tensors
    finite_difference_check
    forward
    forward_batch
    init_network
    load_checkpoint
    log_prob_gradient
    parameter_count
    parameter_shapes
    save_checkpoint
    value_gradient
"""

import copy
import logging
from pathlib import Path

import numpy as np
import torch
from torch import nn
from torch.nn.utils import parameters_to_vector, vector_to_parameters

from pdtour.errors import CheckpointError, DimensionMismatch
from pdtour.features import ACTION_COUNT, NODE_FEATURES, StateFeatures, operator_vector_size

PARAMETER_NAMES = (
    "encoder_in.weight",
    "encoder_in.bias",
    "encoder_out.weight",
    "encoder_out.bias",
    "trunk_in.weight",
    "trunk_in.bias",
    "trunk_out.weight",
    "trunk_out.bias",
    "policy.weight",
    "policy.bias",
    "value.weight",
    "value.bias",
)

CHECKPOINT_MAGIC = b"PDTOURCK"
CHECKPOINT_VERSION = 2
_HEADER = np.dtype([("version", "<u4"), ("width", "<u4"), ("history", "<u4"), ("count", "<u8")])


def parameter_shapes(width: int, history: int) -> dict[str, tuple[int, ...]]:
    joined = width + operator_vector_size(history)
    return {
        "encoder_in.weight": (width, NODE_FEATURES),
        "encoder_in.bias": (width,),
        "encoder_out.weight": (width, width),
        "encoder_out.bias": (width,),
        "trunk_in.weight": (width, joined),
        "trunk_in.bias": (width,),
        "trunk_out.weight": (width, width),
        "trunk_out.bias": (width,),
        "policy.weight": (ACTION_COUNT, width),
        "policy.bias": (ACTION_COUNT,),
        "value.weight": (1, width),
        "value.bias": (1,),
    }


def parameter_count(width: int, history: int) -> int:
    return sum(int(np.prod(shape)) for shape in parameter_shapes(width, history).values())


def _check_dimensions(history: int, nodes: torch.Tensor, operators: torch.Tensor):
    if nodes.ndim != 3 or nodes.shape[2] != NODE_FEATURES:
        raise DimensionMismatch(f"node features must be (batch, nodes, {NODE_FEATURES}), got {tuple(nodes.shape)}")
    expected = operator_vector_size(history)
    if operators.ndim != 2 or tuple(operators.shape) != (nodes.shape[0], expected):
        raise DimensionMismatch(f"operator vectors must be (batch, {expected}), got {tuple(operators.shape)}")


class ActorCritic(nn.Module):
    """
    The policy and value network.

    Attributes:
        width:      hidden width of every layer
        history:    H, the number of operator records in the operator vector
    """

    def __init__(self, width: int, history: int):
        super().__init__()
        self.width = width
        self.history = history
        joined = width + operator_vector_size(history)
        self.encoder_in = nn.Linear(NODE_FEATURES, width, dtype=torch.float64)
        self.encoder_out = nn.Linear(width, width, dtype=torch.float64)
        self.trunk_in = nn.Linear(joined, width, dtype=torch.float64)
        self.trunk_out = nn.Linear(width, width, dtype=torch.float64)
        self.policy = nn.Linear(width, ACTION_COUNT, dtype=torch.float64)
        self.value = nn.Linear(width, 1, dtype=torch.float64)

    def hidden_layers(self, nodes: torch.Tensor, operators: torch.Tensor) -> tuple[torch.Tensor, ...]:
        """The four ReLU outputs, encoder first; the last one feeds both heads."""
        _check_dimensions(self.history, nodes, operators)
        hidden1 = torch.relu(self.encoder_in(nodes))
        hidden2 = torch.relu(self.encoder_out(hidden1))
        joined = torch.cat((hidden2.mean(dim=1), operators), dim=1)
        trunk1 = torch.relu(self.trunk_in(joined))
        trunk2 = torch.relu(self.trunk_out(trunk1))
        return hidden1, hidden2, trunk1, trunk2

    def forward(self, nodes: torch.Tensor, operators: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        """`(logits, values)` for a batch: nodes (B, 2n+1, 12) and operators (B, 2H+3) give (B, 5) and (B,)."""
        trunk = self.hidden_layers(nodes, operators)[-1]
        return self.policy(trunk), self.value(trunk)[:, 0]

    def flat_parameters(self) -> np.ndarray:
        return parameters_to_vector(self.parameters()).detach().numpy().copy()

    def set_flat_parameters(self, flat: np.ndarray):
        expected = parameter_count(self.width, self.history)
        if flat.size != expected:
            raise DimensionMismatch(f"expected {expected} parameters, got {flat.size}")
        vector_to_parameters(torch.from_numpy(np.array(flat, dtype=np.float64)), self.parameters())

    def parameter_arrays(self) -> dict[str, np.ndarray]:
        """A numpy copy of every parameter, keyed by `PARAMETER_NAMES`."""
        return {name: param.detach().numpy().copy() for name, param in self.named_parameters()}

    def copy(self) -> "ActorCritic":
        return copy.deepcopy(self)


def init_network(width: int, history: int, rng: np.random.Generator, zero_heads: bool = True) -> ActorCritic:
    """Fresh parameters; with `zero_heads` the policy starts uniform and the value starts at zero."""
    net = ActorCritic(width, history)
    with torch.no_grad():
        for name, param in net.named_parameters():
            if name.endswith("bias") or (zero_heads and name.startswith(("policy", "value"))):
                param.zero_()
            else:
                bound = 1.0 / np.sqrt(param.shape[1])
                param.copy_(torch.from_numpy(rng.uniform(-bound, bound, size=tuple(param.shape))))
    return net


def as_tensors(nodes: np.ndarray, operators: np.ndarray) -> tuple[torch.Tensor, torch.Tensor]:
    return torch.as_tensor(nodes, dtype=torch.float64), torch.as_tensor(operators, dtype=torch.float64)


def _state_tensors(state: StateFeatures) -> tuple[torch.Tensor, torch.Tensor]:
    return as_tensors(state.node_matrix[None], state.operator_vector[None])


def forward_batch(net: ActorCritic, nodes: np.ndarray, operators: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Run a batch of states through `net` without tracking gradients; returns numpy logits (B, 5) and values (B,)."""
    with torch.no_grad():
        logits, values = net(*as_tensors(nodes, operators))
    return logits.numpy(), values.numpy()


def forward(net: ActorCritic, state: StateFeatures) -> tuple[np.ndarray, float]:
    """Operator probabilities (5 entries summing to 1) and the value estimate for one state."""
    with torch.no_grad():
        logits, values = net(*_state_tensors(state))
        probs = torch.softmax(logits, dim=-1)
    return probs[0].numpy(), float(values[0])


def _gradients(net: ActorCritic, output: torch.Tensor) -> dict[str, np.ndarray]:
    names, params = zip(*net.named_parameters())
    grads = torch.autograd.grad(output, params, allow_unused=True)
    return {
        name: np.zeros(tuple(param.shape)) if grad is None else grad.numpy()
        for name, param, grad in zip(names, params, grads)
    }


def log_prob_gradient(net: ActorCritic, state: StateFeatures, action: int) -> tuple[float, dict[str, np.ndarray]]:
    """`log pi(action | state)` and its gradient, keyed by `PARAMETER_NAMES`."""
    logits, _ = net(*_state_tensors(state))
    logp = torch.log_softmax(logits, dim=-1)[0, action]
    return float(logp), _gradients(net, logp)


def value_gradient(net: ActorCritic, state: StateFeatures) -> tuple[float, dict[str, np.ndarray]]:
    """`V(state)` and its gradient."""
    _, values = net(*_state_tensors(state))
    return float(values[0]), _gradients(net, values[0])


def finite_difference_check(
    net: ActorCritic,
    state: StateFeatures,
    action: int,
    rng: np.random.Generator,
    probes: int = 20,
    step: float = 1e-5,
) -> float:
    """
    Compare the autograd gradients of `log pi(action | state)` and `V(state)` against central differences.

    Each probe perturbs one randomly chosen parameter by ±`step`.  A probe whose perturbation flips a ReLU is redrawn,
    since the difference quotient straddles a kink there.

    Returns: the largest relative error |g - fd| / max(|g| + |fd|, 1e-6) seen.
    """
    _, policy_grads = log_prob_gradient(net, state, action)
    _, value_grads = value_gradient(net, state)
    shapes = parameter_shapes(net.width, net.history)
    sizes = [int(np.prod(shapes[name])) for name in PARAMETER_NAMES]
    total = sum(sizes)
    tensors = _state_tensors(state)

    def evaluate(candidate: ActorCritic):
        with torch.no_grad():
            layers = candidate.hidden_layers(*tensors)
            logp = torch.log_softmax(candidate.policy(layers[-1]), dim=-1)[0, action]
            value = candidate.value(layers[-1])[0, 0]
        return float(logp), float(value), [layer > 0 for layer in layers]

    def nudged(name: str, local: int, delta: float) -> ActorCritic:
        candidate = net.copy()
        with torch.no_grad():
            candidate.get_parameter(name).view(-1)[local] += delta
        return candidate

    worst = 0.0
    done, attempts = 0, 0
    while done < probes and attempts < 50 * probes:
        attempts += 1
        flat_index = int(rng.integers(total))
        name_index = int(np.searchsorted(np.cumsum(sizes), flat_index, side="right"))
        name = PARAMETER_NAMES[name_index]
        local = flat_index - sum(sizes[:name_index])

        logp_plus, value_plus, masks_plus = evaluate(nudged(name, local, step))
        logp_minus, value_minus, masks_minus = evaluate(nudged(name, local, -step))
        if any(not torch.equal(a, b) for a, b in zip(masks_plus, masks_minus)):
            continue

        for analytic, numeric in (
            (policy_grads[name].ravel()[local], (logp_plus - logp_minus) / (2 * step)),
            (value_grads[name].ravel()[local], (value_plus - value_minus) / (2 * step)),
        ):
            worst = max(worst, abs(analytic - numeric) / max(abs(analytic) + abs(numeric), 1e-6))
        done += 1
    logging.debug(f"Finite-difference check: {done} probes in {attempts} attempts, worst relative error {worst}")
    return worst


def save_checkpoint(path: Path, net: ActorCritic):
    flat = net.flat_parameters()
    header = np.array([(CHECKPOINT_VERSION, net.width, net.history, flat.size)], dtype=_HEADER)
    Path(path).write_bytes(CHECKPOINT_MAGIC + header.tobytes() + flat.astype("<f8").tobytes())
    logging.info(f"Saved checkpoint {path}: width={net.width} history={net.history} parameters={flat.size}")


def load_checkpoint(path: Path) -> ActorCritic:
    """Read a checkpoint back; raises `CheckpointError` for a bad magic, version, count, or length."""
    data = Path(path).read_bytes()
    prefix = len(CHECKPOINT_MAGIC) + _HEADER.itemsize
    if len(data) < prefix or not data.startswith(CHECKPOINT_MAGIC):
        raise CheckpointError(f"{path} is not a checkpoint")
    header = np.frombuffer(data, dtype=_HEADER, count=1, offset=len(CHECKPOINT_MAGIC))[0]
    if int(header["version"]) != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path} has checkpoint version {int(header['version'])}")
    width, history, count = int(header["width"]), int(header["history"]), int(header["count"])
    if count != parameter_count(width, history):
        raise CheckpointError(f"{path} declares {count} parameters for width={width} history={history}")
    if len(data) != prefix + 8 * count:
        raise CheckpointError(f"{path} is truncated or has trailing bytes")
    net = ActorCritic(width, history)
    net.set_flat_parameters(np.frombuffer(data, dtype="<f8", count=count, offset=prefix))
    return net
