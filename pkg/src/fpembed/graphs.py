"""Attributed graphs: rooms become nodes, doors become edges.

Node features are [10-dim room-type one-hot | normalized area | optional
9-dim normalized behavior]; edge features are a 4-dim direction one-hot
oriented from the higher-degree endpoint toward the lower.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np

from .errors import EmptyCorpus, MissingBehavior, UnknownRoomType
from .floorplan import (
    DIRECTION_INDEX,
    ROOM_TYPE_INDEX,
    ROOM_TYPES,
    Floorplan,
    connection_direction,
    door_adjacency,
    room_area,
)
from .simulate import BEHAVIOR_FEATURES, RoomBehavior, normalize_behavior

FEATURE_SETS = ("semantic", "semantic-edge", "full")
EDGE_FEATURE_DIM = 4
SEMANTIC_NODE_DIM = 11  # one-hot(10) + area
FULL_NODE_DIM = 20      # + 9 behavior features


def node_feature_dim(feature_set: str) -> int:
    if feature_set not in FEATURE_SETS:
        raise ValueError(f"unknown feature set {feature_set!r}")
    return FULL_NODE_DIM if feature_set == "full" else SEMANTIC_NODE_DIM


def uses_edge_branch(feature_set: str) -> bool:
    """The plain semantic set trains on node sequences alone."""
    if feature_set not in FEATURE_SETS:
        raise ValueError(f"unknown feature set {feature_set!r}")
    return feature_set != "semantic"


@dataclass(frozen=True)
class NormStats:
    """Per-feature min/max over the training corpus (area + 9 behavior features)."""

    area_min: float
    area_max: float
    behavior_min: tuple[float, ...]
    behavior_max: tuple[float, ...]

    def __post_init__(self):
        if len(self.behavior_min) != len(BEHAVIOR_FEATURES):
            raise ValueError("behavior_min must have 9 entries")
        if len(self.behavior_max) != len(BEHAVIOR_FEATURES):
            raise ValueError("behavior_max must have 9 entries")

    def to_json(self) -> dict:
        return {
            "area_min": self.area_min,
            "area_max": self.area_max,
            "behavior_min": list(self.behavior_min),
            "behavior_max": list(self.behavior_max),
        }

    @staticmethod
    def from_json(doc: dict) -> "NormStats":
        return NormStats(
            area_min=float(doc["area_min"]),
            area_max=float(doc["area_max"]),
            behavior_min=tuple(float(v) for v in doc["behavior_min"]),
            behavior_max=tuple(float(v) for v in doc["behavior_max"]),
        )

    def content_hash(self) -> str:
        blob = json.dumps(self.to_json(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def fit_norm_stats(corpus) -> NormStats:
    """Exact per-feature min/max over all rooms of (Floorplan, behavior) pairs."""
    if not corpus:
        raise EmptyCorpus("cannot fit normalization stats on an empty corpus")
    area_min = np.inf
    area_max = -np.inf
    b_min = np.full(len(BEHAVIOR_FEATURES), np.inf)
    b_max = np.full(len(BEHAVIOR_FEATURES), -np.inf)
    for fp, behavior in corpus:
        for room in fp.rooms:
            area = room_area(room)
            area_min = min(area_min, area)
            area_max = max(area_max, area)
            if room.id in behavior:
                vec = behavior[room.id].as_vector()
                b_min = np.minimum(b_min, vec)
                b_max = np.maximum(b_max, vec)
    if not np.all(np.isfinite(b_min)):
        # Corpus carried no behavior at all; pin the block to a constant.
        b_min = np.zeros(len(BEHAVIOR_FEATURES))
        b_max = np.zeros(len(BEHAVIOR_FEATURES))
    return NormStats(
        area_min=float(area_min),
        area_max=float(area_max),
        behavior_min=tuple(float(v) for v in b_min),
        behavior_max=tuple(float(v) for v in b_max),
    )


def merge_norm_stats(a: NormStats, b: NormStats) -> NormStats:
    return NormStats(
        area_min=min(a.area_min, b.area_min),
        area_max=max(a.area_max, b.area_max),
        behavior_min=tuple(min(x, y) for x, y in zip(a.behavior_min, b.behavior_min)),
        behavior_max=tuple(max(x, y) for x, y in zip(a.behavior_max, b.behavior_max)),
    )


def normalize_area(area: float, stats: NormStats) -> float:
    span = stats.area_max - stats.area_min
    if span <= 0.0:
        return 0.0
    return float(np.clip((area - stats.area_min) / span, 0.0, 1.0))


@dataclass(frozen=True)
class GraphNode:
    node_id: int
    features: np.ndarray  # (11,) or (20,)
    degree: int


@dataclass(frozen=True)
class GraphEdge:
    u: int  # source: higher-degree endpoint (ties: lower id)
    v: int
    features: np.ndarray  # (4,) direction one-hot from u toward v


@dataclass(frozen=True)
class AttributedGraph:
    graph_id: str
    feature_set: str
    nodes: tuple[GraphNode, ...]
    edges: tuple[GraphEdge, ...]
    norm_stats_hash: str

    @property
    def node_dim(self) -> int:
        return node_feature_dim(self.feature_set)

    def node_by_id(self, node_id: int) -> GraphNode:
        for node in self.nodes:
            if node.node_id == node_id:
                return node
        raise KeyError(node_id)


def build_graph(fp: Floorplan, behavior: dict[int, RoomBehavior],
                stats: NormStats, feature_set: str) -> AttributedGraph:
    """Attributed graph for one floorplan; deterministic and bit-reproducible."""
    dim = node_feature_dim(feature_set)
    adj = door_adjacency(fp)
    degrees = {rid: len(nbrs) for rid, nbrs in adj.items()}

    if feature_set == "full":
        missing = [room.id for room in fp.rooms if room.id not in behavior]
        if missing:
            raise MissingBehavior(
                f"floorplan {fp.id!r}: no behavior for rooms {missing}"
            )

    nodes = []
    for room in fp.rooms:
        if room.room_type not in ROOM_TYPE_INDEX:
            raise UnknownRoomType(room.room_type)
        fv = np.zeros(dim, dtype=np.float64)
        fv[ROOM_TYPE_INDEX[room.room_type]] = 1.0
        fv[10] = normalize_area(room_area(room), stats)
        if feature_set == "full":
            fv[11:20] = normalize_behavior(behavior[room.id], stats)
        nodes.append(GraphNode(node_id=room.id, features=fv, degree=degrees[room.id]))

    rooms_by_id = {room.id: room for room in fp.rooms}
    edges = []
    for door in fp.doors:
        da, db = degrees[door.a], degrees[door.b]
        if da > db or (da == db and door.a < door.b):
            u, v = door.a, door.b
        else:
            u, v = door.b, door.a
        direction = connection_direction(rooms_by_id[u], rooms_by_id[v])
        fe = np.zeros(EDGE_FEATURE_DIM, dtype=np.float64)
        fe[DIRECTION_INDEX[direction]] = 1.0
        edges.append(GraphEdge(u=u, v=v, features=fe))

    return AttributedGraph(
        graph_id=fp.id,
        feature_set=feature_set,
        nodes=tuple(nodes),
        edges=tuple(edges),
        norm_stats_hash=stats.content_hash(),
    )


def walk_adjacency(g: AttributedGraph) -> dict[int, tuple[int, ...]]:
    """Undirected adjacency with sorted neighbor lists; direction lives in F_e only."""
    adj: dict[int, list[int]] = {node.node_id: [] for node in g.nodes}
    for edge in g.edges:
        adj[edge.u].append(edge.v)
        adj[edge.v].append(edge.u)
    return {nid: tuple(sorted(nbrs)) for nid, nbrs in adj.items()}


def edge_feature_map(g: AttributedGraph) -> dict[tuple[int, int], np.ndarray]:
    """Unordered-pair key -> F_e."""
    out = {}
    for edge in g.edges:
        key = (edge.u, edge.v) if edge.u <= edge.v else (edge.v, edge.u)
        out[key] = edge.features
    return out


def room_type_of_node(node: GraphNode) -> str:
    return ROOM_TYPES[int(np.argmax(node.features[:10]))]


def graph_to_json(g: AttributedGraph) -> dict:
    return {
        "graph_id": g.graph_id,
        "feature_set": g.feature_set,
        "norm_stats_hash": g.norm_stats_hash,
        "nodes": [
            {"id": n.node_id, "degree": n.degree, "features": n.features.tolist()}
            for n in g.nodes
        ],
        "edges": [
            {"u": e.u, "v": e.v, "features": e.features.tolist()} for e in g.edges
        ],
    }


def graph_from_json(doc: dict) -> AttributedGraph:
    nodes = tuple(
        GraphNode(
            node_id=int(n["id"]),
            features=np.asarray(n["features"], dtype=np.float64),
            degree=int(n["degree"]),
        )
        for n in doc["nodes"]
    )
    edges = tuple(
        GraphEdge(
            u=int(e["u"]),
            v=int(e["v"]),
            features=np.asarray(e["features"], dtype=np.float64),
        )
        for e in doc["edges"]
    )
    return AttributedGraph(
        graph_id=doc["graph_id"],
        feature_set=doc["feature_set"],
        nodes=nodes,
        edges=edges,
        norm_stats_hash=doc["norm_stats_hash"],
    )


def write_graphs(path, graphs) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for g in graphs:
            fh.write(json.dumps(graph_to_json(g), separators=(",", ":")))
            fh.write("\n")


def read_graphs(path) -> list[AttributedGraph]:
    graphs = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                graphs.append(graph_from_json(json.loads(line)))
    return graphs


def write_norm_stats(path, stats: NormStats) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(stats.to_json(), sort_keys=True, separators=(",", ":")))
        fh.write("\n")


def read_norm_stats(path) -> NormStats:
    with open(path, "r", encoding="utf-8") as fh:
        return NormStats.from_json(json.load(fh))
