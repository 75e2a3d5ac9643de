"""Radial feeder topology and the constant matrices of the linearized power flow.

Nodes and lines share one index: line ``i`` connects ``u(i)`` to node ``i``,
the substation is node 0 and carries no line.  Internally nodes are
relabelled ``1..N`` so that every parent has a smaller label than its
children; ``ext_ids`` / ``internal_index`` translate between the two.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import InputError, TopologyError

ROOT = 0


@dataclass(frozen=True)
class LineParams:
    """One feeder section.  ``index`` is the id of the node the line serves."""

    index: int
    upstream_node: int
    r: float
    x: float
    capacity: float = float("inf")

    def __post_init__(self):
        if self.r < 0 or self.x < 0:
            raise InputError(f"line {self.index}: negative impedance r={self.r}, x={self.x}")
        if not self.r + self.x > 0:
            raise InputError(f"line {self.index}: r + x must be positive")
        if not self.capacity > 0:
            raise InputError(f"line {self.index}: capacity must be positive")
        if self.index == self.upstream_node:
            raise TopologyError(f"line {self.index} is a self-loop")


@dataclass(frozen=True, eq=False)
class Network:
    n: int
    lines: tuple[LineParams, ...]  # internal order, lines[k] serves internal node k + 1
    parent: np.ndarray  # (N + 1,), parent[0] = -1
    children: tuple[tuple[int, ...], ...]  # (N + 1,) child lists, internal labels
    ext_ids: tuple[int, ...]  # internal label -> external id, ext_ids[0] is the root
    r: np.ndarray
    x: np.ndarray
    capacity: np.ndarray
    U: np.ndarray  # [U]_ij = 1 iff line j is on the path from node i to the root
    D: np.ndarray  # [D]_ij = 1 iff j is in the subtree of i (self included)
    Zr: np.ndarray
    Zx: np.ndarray
    Z_V: np.ndarray  # top N x 2N block of Z^-1
    Mp: np.ndarray
    Mq: np.ndarray
    v0: float = 1.0
    _index: dict = field(default_factory=dict, repr=False)

    def internal_index(self, ext_id: int) -> int:
        """Internal label (1..N, or 0 for the root) of an external node id."""
        try:
            return self._index[ext_id]
        except KeyError:
            raise InputError(f"unknown node id {ext_id}") from None

    def row(self, ext_id: int) -> int:
        """Zero-based row/column of ``ext_id`` in the N x N matrices."""
        i = self.internal_index(ext_id)
        if i == ROOT:
            raise InputError("the substation node has no row in the network matrices")
        return i - 1

    def upstream(self, ext_id: int) -> int:
        return self.ext_ids[self.parent[self.internal_index(ext_id)]]

    def downstream(self, ext_id: int) -> set[int]:
        """Strict subtree d{i} as external ids."""
        k = self.row(ext_id)
        return {self.ext_ids[j + 1] for j in np.flatnonzero(self.D[k]) if j != k}

    @property
    def node_ids(self) -> tuple[int, ...]:
        """External ids of the non-root nodes in matrix order."""
        return self.ext_ids[1:]

    @property
    def depth(self) -> np.ndarray:
        return self.U.sum(axis=1).astype(int)

    @property
    def M(self) -> np.ndarray:
        return np.hstack([self.Mp, self.Mq])


def _order_nodes(lines: Sequence[LineParams]) -> tuple[list[int], dict[int, int]]:
    """Breadth-first order from the root; returns external ids and a parent map."""
    parent_of: dict[int, int] = {}
    for ln in lines:
        if ln.index in parent_of:
            raise InputError(f"duplicate line index {ln.index}")
        if ln.index == ROOT:
            raise TopologyError("the root node cannot have an upstream line")
        parent_of[ln.index] = ln.upstream_node

    kids: dict[int, list[int]] = {}
    for node, up in parent_of.items():
        kids.setdefault(up, []).append(node)

    order = [ROOT]
    seen = {ROOT}
    queue = deque([ROOT])
    while queue:
        node = queue.popleft()
        for child in sorted(kids.get(node, ())):
            if child in seen:  # unreachable for a parent map, kept as a guard
                raise TopologyError(f"node {child} reached twice")
            seen.add(child)
            order.append(child)
            queue.append(child)

    unreached = set(parent_of) - seen
    if unreached:
        # Either the upstream chain never reaches the root (cycle) or it
        # ends at a node with no line of its own (disconnected).
        for start in sorted(unreached):
            path, node = [], start
            while node in parent_of and node not in path:
                path.append(node)
                node = parent_of[node]
            if node in path:
                raise TopologyError(f"cycle detected through nodes {sorted(path)}")
            raise TopologyError(f"node {start} is not connected to the substation")
    return order, parent_of


def impedance_blocks(lines: Sequence[LineParams]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return ``(Z, Z_inv, Z_V)`` for lines taken in the given order.

    Each line contributes the 2x2 block ``[[Zr, Zx], [Zx, -Zr]]``, whose
    inverse is ``[[r, x], [x, -r]]``; the inverse is assembled from that
    closed form rather than by a generic solve.
    """
    r = np.array([ln.r for ln in lines], dtype=float)
    x = np.array([ln.x for ln in lines], dtype=float)
    mag2 = r**2 + x**2
    if np.any(mag2 <= 0):
        raise InputError("singular impedance matrix: some line has r = x = 0")
    zr, zx = np.diag(r / mag2), np.diag(x / mag2)
    Z = np.block([[zr, zx], [zx, -zr]])
    Z_inv = np.block([[np.diag(r), np.diag(x)], [np.diag(x), -np.diag(r)]])
    return Z, Z_inv, Z_inv[: len(r), :]


def sensitivity_matrices(U: np.ndarray, Z_V: np.ndarray, D: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """``[Mp Mq] = U . Z_V . blockdiag(D, D)``."""
    n = U.shape[0]
    zeros = np.zeros_like(D)
    M = U @ Z_V @ np.block([[D, zeros], [zeros, D]])
    return M[:, :n], M[:, n:]


def build_topology(lines: Iterable[LineParams], v0: float = 1.0) -> Network:
    lines = list(lines)
    if not lines:
        raise InputError("a feeder needs at least one line")
    order, parent_ext = _order_nodes(lines)
    index = {ext: k for k, ext in enumerate(order)}
    by_node = {ln.index: ln for ln in lines}
    n = len(order) - 1

    parent = np.full(n + 1, -1, dtype=int)
    kids: list[list[int]] = [[] for _ in range(n + 1)]
    for k in range(1, n + 1):
        parent[k] = index[parent_ext[order[k]]]
        kids[parent[k]].append(k)

    # Parents precede children, so one reverse pass accumulates subtrees.
    D = np.eye(n)
    for k in range(n, 1, -1):
        p = parent[k]
        if p != ROOT:
            D[p - 1] += D[k - 1]
    U = D.T.copy()

    ordered = tuple(by_node[order[k]] for k in range(1, n + 1))
    _, _, Z_V = impedance_blocks(ordered)
    r = np.array([ln.r for ln in ordered])
    x = np.array([ln.x for ln in ordered])
    mag2 = r**2 + x**2
    Mp, Mq = sensitivity_matrices(U, Z_V, D)
    return Network(
        n=n,
        lines=ordered,
        parent=parent,
        children=tuple(tuple(c) for c in kids),
        ext_ids=tuple(order),
        r=r,
        x=x,
        capacity=np.array([ln.capacity for ln in ordered]),
        U=U,
        D=D,
        Zr=np.diag(r / mag2),
        Zx=np.diag(x / mag2),
        Z_V=Z_V,
        Mp=Mp,
        Mq=Mq,
        v0=float(v0),
        _index=index,
    )
