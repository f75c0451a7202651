"""The 33-joint body graph: topology, hop decomposition, and Laplacians.

The shipped topology is the standard full-body pose landmark set (nose,
eyes, ears, mouth, arms, hands, torso, legs, feet). Its anatomical edge set
leaves the head disconnected from the torso, so two bridging edges join the
nose to both shoulders; the graph convolutions need one connected component
for information to flow between facial and manual articulators.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

JOINT_NAMES = (
    "nose",
    "left_eye_inner",
    "left_eye",
    "left_eye_outer",
    "right_eye_inner",
    "right_eye",
    "right_eye_outer",
    "left_ear",
    "right_ear",
    "mouth_left",
    "mouth_right",
    "left_shoulder",
    "right_shoulder",
    "left_elbow",
    "right_elbow",
    "left_wrist",
    "right_wrist",
    "left_pinky",
    "right_pinky",
    "left_index",
    "right_index",
    "left_thumb",
    "right_thumb",
    "left_hip",
    "right_hip",
    "left_knee",
    "right_knee",
    "left_ankle",
    "right_ankle",
    "left_heel",
    "right_heel",
    "left_foot_index",
    "right_foot_index",
)

BODY_EDGES = (
    (0, 1), (1, 2), (2, 3), (3, 7), (0, 4), (4, 5), (5, 6), (6, 8),
    (9, 10), (11, 12), (11, 13), (13, 15), (15, 17), (15, 19), (15, 21),
    (17, 19), (12, 14), (14, 16), (16, 18), (16, 20), (16, 22), (18, 20),
    (11, 23), (12, 24), (23, 24), (23, 25), (24, 26), (25, 27), (26, 28),
    (27, 29), (28, 30), (29, 31), (30, 32), (27, 31), (28, 32),
)

# The anatomical set leaves two head components adrift: the eye/ear chain
# has no edge to the shoulders and the mouth pair (9, 10) touches nothing
# else. Nose-to-shoulder and nose-to-mouth bridges make the graph connected
# so information can flow between facial and manual articulators.
BRIDGE_EDGES = ((0, 11), (0, 12), (0, 9), (0, 10))


@dataclass(frozen=True)
class SkeletonTopology:
    """An undirected joint graph with named vertices."""

    joint_count: int
    edges: frozenset
    joint_names: tuple = ()

    def __post_init__(self):
        norm = set()
        for i, j in self.edges:
            if i == j:
                raise ValueError(f"self loop on joint {i}")
            if not (0 <= i < self.joint_count and 0 <= j < self.joint_count):
                raise ValueError(f"edge ({i}, {j}) outside joint range")
            norm.add((min(i, j), max(i, j)))
        object.__setattr__(self, "edges", frozenset(norm))
        if self.joint_names and len(self.joint_names) != self.joint_count:
            raise ValueError("joint_names length disagrees with joint_count")

    def neighbors(self, i: int) -> list:
        out = []
        for a, b in self.edges:
            if a == i:
                out.append(b)
            elif b == i:
                out.append(a)
        return sorted(out)


def pose_topology() -> SkeletonTopology:
    """The shipped 33-joint topology, bridged so it is connected."""
    return SkeletonTopology(
        joint_count=33,
        edges=frozenset(BODY_EDGES + BRIDGE_EDGES),
        joint_names=JOINT_NAMES,
    )


def adjacency_matrix(topology: SkeletonTopology) -> np.ndarray:
    n = topology.joint_count
    a = np.zeros((n, n))
    for i, j in topology.edges:
        a[i, j] = 1.0
        a[j, i] = 1.0
    return a


def _bfs_distances(topology: SkeletonTopology, source: int) -> np.ndarray:
    n = topology.joint_count
    adj: list[list[int]] = [[] for _ in range(n)]
    for i, j in topology.edges:
        adj[i].append(j)
        adj[j].append(i)
    dist = np.full(n, -1, dtype=np.int64)
    dist[source] = 0
    queue = deque([source])
    while queue:
        u = queue.popleft()
        for v in adj[u]:
            if dist[v] < 0:
                dist[v] = dist[u] + 1
                queue.append(v)
    return dist


def hop_distance(topology: SkeletonTopology, i: int, j: int):
    """Minimum number of edges between two joints; None if unreachable."""
    n = topology.joint_count
    if not (0 <= i < n and 0 <= j < n):
        raise IndexError(f"joint index out of range: ({i}, {j}) for {n} joints")
    d = int(_bfs_distances(topology, i)[j])
    return None if d < 0 else d


def distance_matrix(topology: SkeletonTopology) -> np.ndarray:
    """All-pairs shortest-path edge counts; -1 marks unreachable pairs."""
    return np.stack(
        [_bfs_distances(topology, s) for s in range(topology.joint_count)]
    )


def is_connected(topology: SkeletonTopology) -> bool:
    return bool((_bfs_distances(topology, 0) >= 0).all())


def normalize_hop(a_k: np.ndarray) -> np.ndarray:
    """Symmetric normalization D^{-1/2} (A_k + I) D^{-1/2}.

    D is the diagonal degree matrix of (A_k + I), so every diagonal entry is
    at least one and the inverse square root always exists.
    """
    a_k = np.asarray(a_k, dtype=np.float64)
    if a_k.ndim != 2 or a_k.shape[0] != a_k.shape[1]:
        raise ValueError(f"hop matrix must be square, got {a_k.shape}")
    if not np.array_equal(a_k, a_k.T):
        raise ValueError("hop matrix must be symmetric")
    if not np.isin(a_k, (0.0, 1.0)).all():
        raise ValueError("hop matrix entries must be 0 or 1")
    with_self = a_k + np.eye(a_k.shape[0])
    inv_sqrt = 1.0 / np.sqrt(with_self.sum(axis=1))
    return inv_sqrt[:, None] * with_self * inv_sqrt[None, :]


@dataclass(frozen=True)
class HopAdjacencySet:
    """Shell adjacencies A_0..A_K with their normalized forms.

    A_k marks joint pairs at shortest-path distance exactly k, so A_0 is the
    identity, A_1 the raw adjacency, and for K=1 the shells sum to A + I.
    """

    max_hop: int
    raw: tuple = field(repr=False)
    normalized: tuple = field(repr=False)
    degrees: tuple = field(repr=False)

    @property
    def joint_count(self) -> int:
        return self.raw[0].shape[0]


def build_hops(topology: SkeletonTopology, max_hop: int) -> HopAdjacencySet:
    if max_hop < 1:
        raise ValueError(f"max_hop must be at least 1, got {max_hop}")
    dist = distance_matrix(topology)
    raw = []
    normalized = []
    degrees = []
    for k in range(max_hop + 1):
        a_k = (dist == k).astype(np.float64)
        d_k = np.diag((a_k + np.eye(topology.joint_count)).sum(axis=1))
        raw.append(a_k)
        degrees.append(d_k)
        normalized.append(normalize_hop(a_k))
    return HopAdjacencySet(
        max_hop=max_hop,
        raw=tuple(raw),
        normalized=tuple(normalized),
        degrees=tuple(degrees),
    )


def laplacian(topology: SkeletonTopology, normalized: bool = False) -> np.ndarray:
    """Graph Laplacian D - A, or its symmetric normalized form."""
    a = adjacency_matrix(topology)
    deg = a.sum(axis=1)
    if not normalized:
        return np.diag(deg) - a
    inv_sqrt = np.where(deg > 0, 1.0 / np.sqrt(np.maximum(deg, 1e-300)), 0.0)
    return np.eye(topology.joint_count) - inv_sqrt[:, None] * a * inv_sqrt[None, :]
