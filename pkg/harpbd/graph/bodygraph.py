"""Skeleton graph construction, sensor reduction and propagation operators."""

from __future__ import annotations

from collections import deque
from collections.abc import Iterable
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
import structlog

from harpbd.errors import ConfigurationError, ContractViolation

logger = structlog.get_logger()

FULL_NODE_COUNT = 22
PRESET_NODE_COUNTS = {"full22": 22, "one_side14": 14, "one_side7": 7, "symmetric7": 7}


def _edge(a: int, b: int) -> tuple[int, int]:
    return (a, b) if a < b else (b, a)


def _frozen(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


def hop_distance(adjacency: np.ndarray, max_hop: int = 1) -> np.ndarray:
    """Pairwise hop counts up to ``max_hop``; farther pairs are ``inf``."""
    n = adjacency.shape[0]
    hop = np.full((n, n), np.inf)
    transfer = [np.linalg.matrix_power(adjacency, d) for d in range(max_hop + 1)]
    arrive = np.stack(transfer) > 0
    for d in range(max_hop, -1, -1):
        hop[arrive[d]] = d
    return hop


@dataclass(frozen=True, eq=False)
class BodyGraph:
    node_ids: tuple[int, ...]
    edges: frozenset[tuple[int, int]]
    adjacency: np.ndarray
    identity: np.ndarray
    propagation: np.ndarray
    neighbor_mean: np.ndarray
    _index: dict[int, int] = field(repr=False)

    @property
    def node_count(self) -> int:
        return len(self.node_ids)

    def index_of(self, node_id: int) -> int:
        try:
            return self._index[node_id]
        except KeyError:
            raise ContractViolation(f"node {node_id} is not in the graph") from None

    def select(self, features: np.ndarray) -> np.ndarray:
        """Pick this graph's nodes from a (..., 22, C) block indexed by joint id."""
        if features.shape[-2] != FULL_NODE_COUNT:
            raise ContractViolation(
                f"expected {FULL_NODE_COUNT} joints on axis -2, got shape {features.shape}"
            )
        return features[..., [node_id - 1 for node_id in self.node_ids], :]

    def is_connected(self) -> bool:
        return bool(np.all(np.isfinite(hop_distance(self.adjacency, self.node_count))))


def build_graph(node_ids: Iterable[int], edges: Iterable[tuple[int, int]]) -> BodyGraph:
    ids = tuple(node_ids)
    if not ids:
        raise ContractViolation("a body graph needs at least one node")
    if len(set(ids)) != len(ids):
        raise ContractViolation(f"duplicate node ids in {ids}")
    index = {node_id: i for i, node_id in enumerate(ids)}

    edge_set: set[tuple[int, int]] = set()
    for a, b in edges:
        if a not in index or b not in index:
            raise ContractViolation(f"edge ({a}, {b}) references a node outside {sorted(ids)}")
        if a == b:
            raise ContractViolation(f"self-loop on node {a}")
        edge_set.add(_edge(a, b))

    n = len(ids)
    adjacency = np.zeros((n, n))
    for a, b in edge_set:
        adjacency[index[a], index[b]] = 1.0
        adjacency[index[b], index[a]] = 1.0

    identity = np.eye(n)
    a_hat = adjacency + identity
    inv_sqrt = 1.0 / np.sqrt(a_hat.sum(axis=1))
    propagation = a_hat * inv_sqrt[:, None] * inv_sqrt[None, :]

    degree = adjacency.sum(axis=1)
    safe = np.where(degree > 0, degree, 1.0)
    neighbor_mean = adjacency / safe[:, None]

    graph = BodyGraph(
        node_ids=ids,
        edges=frozenset(edge_set),
        adjacency=_frozen(adjacency),
        identity=_frozen(identity),
        propagation=_frozen(propagation),
        neighbor_mean=_frozen(neighbor_mean),
        _index=index,
    )
    if n > 1 and not graph.is_connected():
        logger.warning("Body graph is disconnected", nodes=list(ids), edges=sorted(edge_set))
    return graph


def neighbor_set(graph: BodyGraph, node: int, max_distance: int = 1) -> set[int]:
    start = graph.index_of(node)
    hop = hop_distance(graph.adjacency, max_distance)
    return {graph.node_ids[j] for j in np.flatnonzero(hop[start] <= max_distance)}


@dataclass(frozen=True)
class Skeleton:
    joint_names: dict[int, str]
    edges: tuple[tuple[int, int], ...]
    presets: dict[str, tuple[int, ...]]

    def full_graph(self) -> BodyGraph:
        return build_graph(sorted(self.joint_names), self.edges)


def parse_skeleton(text: str, source: str = "<skeleton>") -> Skeleton:
    joint_names: dict[int, str] = {}
    edges: list[tuple[int, int]] = []
    presets: dict[str, tuple[int, ...]] = {}
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        try:
            if parts[0] == "edge":
                if len(parts) != 3:
                    raise ValueError("edge lines need two node ids")
                edges.append((int(parts[1]), int(parts[2])))
            elif parts[0] == "remove":
                if len(parts) < 2:
                    raise ValueError("remove lines need a preset name")
                presets[parts[1]] = tuple(int(p) for p in parts[2:])
            else:
                if len(parts) != 2:
                    raise ValueError("joint lines are 'node_id joint_name'")
                joint_names[int(parts[0])] = parts[1]
        except ValueError as e:
            raise ConfigurationError(f"{source}:{line_no}: {e}") from e
    return Skeleton(joint_names=joint_names, edges=tuple(edges), presets=presets)


def load_skeleton(path: str | Path | None = None) -> Skeleton:
    if path is None:
        text = resources.files("harpbd.graph").joinpath("skeleton22.txt").read_text()
        return parse_skeleton(text, "skeleton22.txt")
    return parse_skeleton(Path(path).read_text(), str(path))


@dataclass(frozen=True)
class SensorSet:
    name: str
    removal_list: tuple[int, ...] = ()

    @classmethod
    def preset(cls, name: str, skeleton: Skeleton | None = None) -> SensorSet:
        skeleton = skeleton or load_skeleton()
        if name not in skeleton.presets:
            raise ConfigurationError(
                f"unknown sensor set {name!r}; known: {sorted(skeleton.presets)}"
            )
        sensor_set = cls(name=name, removal_list=skeleton.presets[name])
        expected = PRESET_NODE_COUNTS.get(name)
        remaining = len(skeleton.joint_names) - len(set(sensor_set.removal_list))
        if expected is not None and remaining != expected:
            raise ConfigurationError(
                f"sensor set {name} leaves {remaining} nodes, expected {expected}"
            )
        return sensor_set

    @classmethod
    def custom(cls, removal_list: Iterable[int]) -> SensorSet:
        return cls(name="custom", removal_list=tuple(sorted(set(removal_list))))


def reduce_sensors(full_graph: BodyGraph, sensor_set: SensorSet) -> BodyGraph:
    """Drop the removed joints and re-link survivors that were joined through them."""
    if full_graph.node_count != FULL_NODE_COUNT:
        raise ContractViolation(
            f"sensor reduction starts from the {FULL_NODE_COUNT}-node graph, got {full_graph.node_count}"
        )
    removed = set(sensor_set.removal_list)
    for node_id in removed:
        full_graph.index_of(node_id)
    if not removed:
        return full_graph

    survivors = [node_id for node_id in full_graph.node_ids if node_id not in removed]
    if not survivors:
        raise ContractViolation(f"sensor set {sensor_set.name} removes every node")

    neighbors: dict[int, set[int]] = {node_id: set() for node_id in full_graph.node_ids}
    for a, b in full_graph.edges:
        neighbors[a].add(b)
        neighbors[b].add(a)

    edges: set[tuple[int, int]] = set()
    for start in survivors:
        queue = deque([start])
        seen = {start}
        while queue:
            current = queue.popleft()
            for nxt in neighbors[current]:
                if nxt in seen:
                    continue
                seen.add(nxt)
                if nxt in removed:
                    queue.append(nxt)
                else:
                    edges.add(_edge(start, nxt))

    relinked = edges - full_graph.edges
    logger.info(
        "Reduced sensor set",
        sensor_set=sensor_set.name,
        nodes=len(survivors),
        relinked=sorted(relinked),
    )
    return build_graph(survivors, edges)


def graph_for(sensor_set: SensorSet, skeleton: Skeleton | None = None) -> BodyGraph:
    skeleton = skeleton or load_skeleton()
    return reduce_sensors(skeleton.full_graph(), sensor_set)
