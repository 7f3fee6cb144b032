"""
This module provides PDTSP problem instances: node identities, pickup/delivery pairing, coordinates, and travel costs.

Node 0 is the depot, nodes 1..n are pickups and node n+i is the delivery paired with pickup i.  An `Instance` always
carries a dense, symmetric, zero-diagonal cost matrix; coordinates are optional (an instance read in matrix mode has
none).  Instances are immutable once built, so they can be shared between worker processes freely.

The text format is line oriented:

    PDTSP <n>
    MODE COORDS            (or MODE MATRIX)
    <id> <x> <y>           2n+1 lines, ids in order 0..2n       (COORDS)
    <c_i0> ... <c_i2n>     2n+1 rows of 2n+1 reals              (MATRIX)

Anything after a "#" is a comment, and blank lines are ignored.

Exported types:
    Instance
    NodeKind

Exported functions:
    euclidean_cost
    generate_random
    load_instance
    pair_of
    parse_instance
    partner
    save_instance
    scaled
    serialize_instance
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from functools import cached_property
from pathlib import Path

import numpy as np

from pdtour.errors import (
    DepotHasNoPair,
    DimensionError,
    InvalidSize,
    NodeOutOfRange,
    ParseError,
)

SYMMETRY_TOLERANCE = 1e-9


class NodeKind(Enum):
    """What role a node plays in the instance."""

    DEPOT = "depot"
    PICKUP = "pickup"
    DELIVERY = "delivery"


def partner(i: int, n: int) -> int:
    """The other half of node `i`'s pair in an instance with `n` pairs; no range checking."""
    return i + n if i <= n else i - n


def euclidean_cost(a, b) -> float:
    """Straight-line distance between two points given as (x, y)."""
    dx = float(a[0]) - float(b[0])
    dy = float(a[1]) - float(b[1])
    return math.sqrt(dx * dx + dy * dy)


def _euclidean_matrix(coords: np.ndarray) -> np.ndarray:
    diff = coords[:, None, :] - coords[None, :, :]
    squared = diff * diff
    return np.sqrt(squared[..., 0] + squared[..., 1])


@dataclass(frozen=True, eq=False)
class Instance:
    """
    A PDTSP instance with `n` pickup-and-delivery pairs.

    Attributes:
        n:      number of pairs, at least 1
        coords: a read-only (2n+1, 2) array of points, or `None` for an explicit-matrix instance
        cost:   a read-only (2n+1, 2n+1) symmetric matrix with a zero diagonal
    """

    n: int
    coords: np.ndarray | None
    cost: np.ndarray

    def __post_init__(self):
        if self.n < 1:
            raise InvalidSize(f"an instance needs at least one pair, got n={self.n}")
        size = 2 * self.n + 1
        cost = np.array(self.cost, dtype=np.float64)
        if cost.shape != (size, size):
            raise DimensionError(f"cost matrix must be {size}x{size}, got {cost.shape}")
        if not np.all(np.isfinite(cost)) or np.any(cost < 0):
            raise DimensionError("cost matrix entries must be finite and non-negative")
        if np.any(np.diag(cost) != 0):
            raise DimensionError("cost matrix must have a zero diagonal")
        if not np.allclose(cost, cost.T, rtol=0.0, atol=SYMMETRY_TOLERANCE):
            raise DimensionError("cost matrix must be symmetric")
        cost.flags.writeable = False
        object.__setattr__(self, "cost", cost)
        if self.coords is not None:
            coords = np.array(self.coords, dtype=np.float64)
            if coords.shape != (size, 2):
                raise DimensionError(f"coordinates must be {size}x2, got {coords.shape}")
            coords.flags.writeable = False
            object.__setattr__(self, "coords", coords)

    @classmethod
    def from_coords(cls, coords) -> "Instance":
        """Build an instance whose costs are the pairwise Euclidean distances between `coords`."""
        points = np.array(coords, dtype=np.float64)
        if points.ndim != 2 or points.shape[1] != 2 or points.shape[0] % 2 != 1:
            raise InvalidSize(f"need 2n+1 points with n >= 1, got shape {points.shape}")
        return cls((points.shape[0] - 1) // 2, points, _euclidean_matrix(points))

    @classmethod
    def from_matrix(cls, matrix) -> "Instance":
        """Build a coordinate-free instance from an explicit symmetric cost matrix."""
        cost = np.array(matrix, dtype=np.float64)
        if cost.ndim != 2 or cost.shape[0] != cost.shape[1] or cost.shape[0] % 2 != 1:
            raise InvalidSize(f"need a (2n+1)x(2n+1) matrix with n >= 1, got shape {cost.shape}")
        return cls((cost.shape[0] - 1) // 2, None, cost)

    @property
    def size(self) -> int:
        """Number of nodes, depot included."""
        return 2 * self.n + 1

    @cached_property
    def table(self) -> list[list[float]]:
        """The cost matrix as nested Python lists, for scalar lookups in the search loops."""
        return self.cost.tolist()

    def node_kind(self, i: int) -> NodeKind:
        if not 0 <= i <= 2 * self.n:
            raise NodeOutOfRange(f"node {i} is not in 0..{2 * self.n}")
        if i == 0:
            return NodeKind.DEPOT
        return NodeKind.PICKUP if i <= self.n else NodeKind.DELIVERY

    def is_pickup(self, i: int) -> bool:
        return 1 <= i <= self.n

    def is_delivery(self, i: int) -> bool:
        return self.n < i <= 2 * self.n

    def __eq__(self, other) -> bool:
        if not isinstance(other, Instance):
            return NotImplemented
        if self.n != other.n or not np.array_equal(self.cost, other.cost):
            return False
        if self.coords is None or other.coords is None:
            return self.coords is None and other.coords is None
        return np.array_equal(self.coords, other.coords)

    __hash__ = None  # type: ignore[assignment]


def pair_of(instance: Instance, i: int) -> int:
    """
    Returns the partner of node `i`: n+i for a pickup, i-n for a delivery.

    Raises `DepotHasNoPair` for node 0 and `NodeOutOfRange` for anything outside 1..2n.
    """
    if i == 0:
        raise DepotHasNoPair("the depot is not part of any pickup-and-delivery pair")
    if not 1 <= i <= 2 * instance.n:
        raise NodeOutOfRange(f"node {i} is not in 1..{2 * instance.n}")
    return partner(i, instance.n)


def generate_random(n: int, seed: int) -> Instance:
    """
    Sample 2n+1 points uniformly from the unit square and use their Euclidean distances as costs.

    The same (n, seed) always produces the same instance.
    """
    if n < 1:
        raise InvalidSize(f"an instance needs at least one pair, got n={n}")
    rng = np.random.default_rng(seed)
    instance = Instance.from_coords(rng.random((2 * n + 1, 2)))
    logging.info(f"Generated random instance n={n} seed={seed}")
    return instance


def scaled(instance: Instance, factor: float) -> Instance:
    """Multiply every coordinate (or every matrix entry) by `factor` > 0."""
    if not factor > 0:
        raise InvalidSize(f"scale factor must be positive, got {factor}")
    if instance.coords is not None:
        return Instance.from_coords(instance.coords * factor)
    return Instance.from_matrix(instance.cost * factor)


def _content_lines(text: str):
    for line_number, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if line:
            yield line_number, line


def _parse_floats(line_number: int, fields: list[str]) -> list[float]:
    try:
        values = [float(field) for field in fields]
    except ValueError:
        raise ParseError(f"expected numbers, got {' '.join(fields)!r}", line_number) from None
    if not all(math.isfinite(value) for value in values):
        raise ParseError("numbers must be finite", line_number)
    return values


def parse_instance(text: str) -> Instance:
    """
    Parse the instance text format (see the module docstring).

    Returns: the `Instance`.  Raises `ParseError`, with the offending line number where there is one, for a malformed
    header, the wrong number of node lines, out-of-order ids, or an explicit matrix that is not symmetric with a zero
    diagonal.
    """
    lines = list(_content_lines(text))
    if len(lines) < 2:
        raise ParseError("expected a 'PDTSP <n>' header and a 'MODE' line", lines[0][0] if lines else None)

    header_number, header = lines[0]
    header_fields = header.split()
    if len(header_fields) != 2 or header_fields[0] != "PDTSP":
        raise ParseError(f"expected 'PDTSP <n>', got {header!r}", header_number)
    try:
        n = int(header_fields[1])
    except ValueError:
        raise ParseError(f"pair count must be an integer, got {header_fields[1]!r}", header_number) from None
    if n < 1:
        raise ParseError(f"pair count must be at least 1, got {n}", header_number)

    mode_number, mode_line = lines[1]
    mode_fields = mode_line.split()
    if len(mode_fields) != 2 or mode_fields[0] != "MODE" or mode_fields[1] not in {"COORDS", "MATRIX"}:
        raise ParseError(f"expected 'MODE COORDS' or 'MODE MATRIX', got {mode_line!r}", mode_number)
    mode = mode_fields[1]

    body = lines[2:]
    size = 2 * n + 1
    if len(body) != size:
        where = body[min(len(body), size) - 1][0] if body else mode_number
        raise ParseError(f"PDTSP {n} needs {size} node lines, found {len(body)}", where)

    if mode == "COORDS":
        coords = []
        for expected_id, (line_number, line) in enumerate(body):
            fields = line.split()
            if len(fields) != 3:
                raise ParseError(f"expected '<id> <x> <y>', got {line!r}", line_number)
            if fields[0] != str(expected_id):
                raise ParseError(f"expected node id {expected_id}, got {fields[0]!r}", line_number)
            coords.append(_parse_floats(line_number, fields[1:]))
        instance = Instance.from_coords(coords)
    else:
        rows = []
        for line_number, line in body:
            fields = line.split()
            if len(fields) != size:
                raise ParseError(f"expected {size} entries in a matrix row, got {len(fields)}", line_number)
            rows.append(_parse_floats(line_number, fields))
        for i, (line_number, _) in enumerate(body):
            if rows[i][i] != 0.0:
                raise ParseError(f"diagonal entry {i} must be 0", line_number)
            for j in range(size):
                if rows[i][j] < 0:
                    raise ParseError(f"entry ({i}, {j}) is negative", line_number)
                if abs(rows[i][j] - rows[j][i]) > SYMMETRY_TOLERANCE:
                    raise ParseError(f"matrix is not symmetric at ({i}, {j})", line_number)
        instance = Instance.from_matrix(rows)

    logging.info(f"Parsed instance n={n} mode={mode}")
    return instance


def serialize_instance(instance: Instance) -> str:
    """Render `instance` in the text format; `parse_instance` reads it back to an equal instance."""
    lines = [f"PDTSP {instance.n}"]
    if instance.coords is not None:
        lines.append("MODE COORDS")
        for node, (x, y) in enumerate(instance.coords.tolist()):
            lines.append(f"{node} {x!r} {y!r}")
    else:
        lines.append("MODE MATRIX")
        for row in instance.cost.tolist():
            lines.append(" ".join(repr(value) for value in row))
    return "\n".join(lines) + "\n"


def load_instance(path: Path) -> Instance:
    return parse_instance(Path(path).read_text(encoding="utf-8"))


def save_instance(path: Path, instance: Instance):
    Path(path).write_text(serialize_instance(instance), encoding="utf-8")
