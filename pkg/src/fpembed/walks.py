"""Random-walk sequence generation over attributed graphs.

Two samplers: rw1 (node2vec-style return/explore weights P, Q) and rw2
(inverse-degree).  Each run yields one walk per start node; the last run is
held out as the proxy set.  Walks are zero-padded to a fixed node-length L.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np

from .errors import IsolatedNode, MalformedInput
from .graphs import AttributedGraph, edge_feature_map, walk_adjacency
from .simulate import stable_u32

WALK_KINDS = ("rw1", "rw2")
_BINARY_MAGIC = b"FPWALKB1\n"


@dataclass(frozen=True)
class WalkConfig:
    kind: str = "rw2"
    length: int = 5
    runs: int = 11
    p: float = 0.5
    q: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.kind not in WALK_KINDS:
            raise ValueError(f"unknown walk kind {self.kind!r}")
        if self.length < 1:
            raise ValueError("walk length must be >= 1")
        if self.runs < 2:
            raise ValueError("need at least 2 runs (training + proxy)")
        if self.p <= 0.0 or self.q <= 0.0:
            raise ValueError("P and Q must be positive")

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "length": self.length,
            "runs": self.runs,
            "p": self.p,
            "q": self.q,
            "seed": self.seed,
        }

    @staticmethod
    def from_json(doc: dict) -> "WalkConfig":
        return WalkConfig(
            kind=doc["kind"],
            length=int(doc["length"]),
            runs=int(doc["runs"]),
            p=float(doc["p"]),
            q=float(doc["q"]),
            seed=int(doc["seed"]),
        )


@dataclass(frozen=True)
class SequencePair:
    """One walk: padded node-feature rows plus the traversed-edge rows."""

    graph_id: str
    run_index: int
    start_node: int
    node_ids: tuple[int, ...]
    true_length: int
    node_seq: np.ndarray  # (L, node_dim), rows >= true_length all zero
    edge_seq: np.ndarray  # (L-1, 4), rows >= true_length-1 all zero


@dataclass(frozen=True)
class WalkSet:
    graph_id: str
    config: WalkConfig
    runs: tuple[tuple[SequencePair, ...], ...]  # runs[r][i], i in node order

    @property
    def proxy_run(self) -> int:
        return self.config.runs - 1

    def training_pairs(self) -> list[SequencePair]:
        out = []
        for r in range(self.proxy_run):
            out.extend(self.runs[r])
        return out

    def proxy_pairs(self) -> tuple[SequencePair, ...]:
        return self.runs[self.proxy_run]

    def all_pairs(self) -> list[SequencePair]:
        out = []
        for run in self.runs:
            out.extend(run)
        return out

    def pair(self, run_index: int, start_node: int) -> SequencePair:
        for p in self.runs[run_index]:
            if p.start_node == start_node:
                return p
        raise KeyError((self.graph_id, run_index, start_node))


def _choose(candidates, weights, rng) -> int:
    """Cumulative inversion on one rng.random() draw; order of candidates fixed."""
    total = float(sum(weights))
    u = rng.random() * total
    acc = 0.0
    for cand, w in zip(candidates, weights):
        acc += w
        if u < acc:
            return cand
    return candidates[-1]


def rw1_step(adj, prev, cur, p: float, q: float, rng) -> int:
    """node2vec-weighted step.  Weight of neighbor x: 1/P if x == prev,
    1 if x is adjacent to prev, 1/Q otherwise.  First step: uniform."""
    nbrs = adj[cur]
    if not nbrs:
        raise IsolatedNode(f"node {cur} has no neighbors")
    if prev is None:
        return _choose(nbrs, [1.0] * len(nbrs), rng)
    prev_nbrs = set(adj[prev])
    weights = []
    for x in nbrs:
        if x == prev:
            weights.append(1.0 / p)
        elif x in prev_nbrs:
            weights.append(1.0)
        else:
            weights.append(1.0 / q)
    return _choose(nbrs, weights, rng)


def rw2_step(adj, cur, rng) -> int:
    """Inverse-degree step: P(x) = (1/deg(x)) / sum_y 1/deg(y)."""
    nbrs = adj[cur]
    if not nbrs:
        raise IsolatedNode(f"node {cur} has no neighbors")
    weights = [1.0 / len(adj[x]) for x in nbrs]
    return _choose(nbrs, weights, rng)


def _run_rng(cfg: WalkConfig, graph_id: str, run: int):
    seq = np.random.SeedSequence(
        entropy=cfg.seed, spawn_key=(stable_u32(graph_id), run)
    )
    return np.random.Generator(np.random.PCG64(seq))


def generate_walkset(g: AttributedGraph, cfg: WalkConfig) -> WalkSet:
    """One walk per start node per run; the final run is the proxy set."""
    adj = walk_adjacency(g)
    feats = {n.node_id: n.features for n in g.nodes}
    efeats = edge_feature_map(g)
    node_dim = g.node_dim
    starts = [n.node_id for n in g.nodes]
    all_runs = []
    for run in range(cfg.runs):
        rng = _run_rng(cfg, g.graph_id, run)
        pairs = []
        for start in starts:
            ids = [start]
            prev = None
            cur = start
            while len(ids) < cfg.length and adj[cur]:
                if cfg.kind == "rw1":
                    nxt = rw1_step(adj, prev, cur, cfg.p, cfg.q, rng)
                else:
                    nxt = rw2_step(adj, cur, rng)
                ids.append(nxt)
                prev, cur = cur, nxt
            node_seq = np.zeros((cfg.length, node_dim), dtype=np.float64)
            edge_seq = np.zeros((max(cfg.length - 1, 0), 4), dtype=np.float64)
            for t, nid in enumerate(ids):
                node_seq[t] = feats[nid]
            for t in range(len(ids) - 1):
                a, b = ids[t], ids[t + 1]
                key = (a, b) if a <= b else (b, a)
                edge_seq[t] = efeats[key]
            pairs.append(
                SequencePair(
                    graph_id=g.graph_id,
                    run_index=run,
                    start_node=start,
                    node_ids=tuple(ids),
                    true_length=len(ids),
                    node_seq=node_seq,
                    edge_seq=edge_seq,
                )
            )
        all_runs.append(tuple(pairs))
    return WalkSet(graph_id=g.graph_id, config=cfg, runs=tuple(all_runs))


def generate_corpus_walks(graphs, cfg: WalkConfig) -> list[WalkSet]:
    return [generate_walkset(g, cfg) for g in graphs]


@dataclass(frozen=True)
class WalkStoreMeta:
    config: WalkConfig
    node_dim: int
    feature_set: str
    norm_stats_hash: str

    def to_json(self) -> dict:
        doc = {"format": "fpwalk-v1"}
        doc.update(self.config.to_json())
        doc["node_dim"] = self.node_dim
        doc["feature_set"] = self.feature_set
        doc["norm_stats_hash"] = self.norm_stats_hash
        return doc

    @staticmethod
    def from_json(doc: dict) -> "WalkStoreMeta":
        if doc.get("format") != "fpwalk-v1":
            raise MalformedInput("not a walk store header")
        return WalkStoreMeta(
            config=WalkConfig.from_json(doc),
            node_dim=int(doc["node_dim"]),
            feature_set=doc["feature_set"],
            norm_stats_hash=doc["norm_stats_hash"],
        )


def _pair_to_json(p: SequencePair) -> dict:
    return {
        "graph_id": p.graph_id,
        "run_index": p.run_index,
        "start_node": p.start_node,
        "node_ids": list(p.node_ids),
        "true_length": p.true_length,
        "node_seq": p.node_seq.tolist(),
        "edge_seq": p.edge_seq.tolist(),
    }


def _pair_from_json(doc: dict) -> SequencePair:
    return SequencePair(
        graph_id=doc["graph_id"],
        run_index=int(doc["run_index"]),
        start_node=int(doc["start_node"]),
        node_ids=tuple(int(v) for v in doc["node_ids"]),
        true_length=int(doc["true_length"]),
        node_seq=np.asarray(doc["node_seq"], dtype=np.float64),
        edge_seq=np.asarray(doc["edge_seq"], dtype=np.float64).reshape(-1, 4),
    )


def write_walks(path, meta: WalkStoreMeta, walksets, fmt: str = "jsonl") -> None:
    if fmt == "jsonl":
        _write_walks_jsonl(path, meta, walksets)
    elif fmt == "binary":
        _write_walks_binary(path, meta, walksets)
    else:
        raise ValueError(f"unknown walk store format {fmt!r}")


def _write_walks_jsonl(path, meta, walksets) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(meta.to_json(), sort_keys=True, separators=(",", ":")))
        fh.write("\n")
        for ws in walksets:
            for run in ws.runs:
                for p in run:
                    fh.write(json.dumps(_pair_to_json(p), separators=(",", ":")))
                    fh.write("\n")


def _write_walks_binary(path, meta, walksets) -> None:
    header = json.dumps(meta.to_json(), sort_keys=True, separators=(",", ":"))
    with open(path, "wb") as fh:
        fh.write(_BINARY_MAGIC)
        fh.write(header.encode("utf-8"))
        fh.write(b"\n")
        for ws in walksets:
            for run in ws.runs:
                for p in run:
                    gid = p.graph_id.encode("utf-8")
                    fh.write(struct.pack("<I", len(gid)))
                    fh.write(gid)
                    fh.write(struct.pack("<qqI", p.run_index, p.start_node,
                                         p.true_length))
                    for nid in p.node_ids:
                        fh.write(struct.pack("<q", nid))
                    fh.write(np.ascontiguousarray(p.node_seq, dtype="<f8").tobytes())
                    fh.write(np.ascontiguousarray(p.edge_seq, dtype="<f8").tobytes())


def read_walks(path):
    """-> (WalkStoreMeta, list[WalkSet]); format auto-detected."""
    with open(path, "rb") as fh:
        head = fh.read(len(_BINARY_MAGIC))
    if head == _BINARY_MAGIC:
        meta, pairs = _read_walks_binary(path)
    else:
        meta, pairs = _read_walks_jsonl(path)
    return meta, _group_pairs(meta, pairs)


def _read_walks_jsonl(path):
    with open(path, "r", encoding="utf-8") as fh:
        first = fh.readline()
        if not first.strip():
            raise MalformedInput("empty walk store")
        meta = WalkStoreMeta.from_json(json.loads(first))
        pairs = []
        for line in fh:
            line = line.strip()
            if line:
                pairs.append(_pair_from_json(json.loads(line)))
    return meta, pairs


def _read_walks_binary(path):
    with open(path, "rb") as fh:
        data = fh.read()
    off = len(_BINARY_MAGIC)
    nl = data.index(b"\n", off)
    meta = WalkStoreMeta.from_json(json.loads(data[off:nl].decode("utf-8")))
    off = nl + 1
    length, node_dim = meta.config.length, meta.node_dim
    node_bytes = length * node_dim * 8
    edge_bytes = max(length - 1, 0) * 4 * 8
    pairs = []
    while off < len(data):
        (gid_len,) = struct.unpack_from("<I", data, off)
        off += 4
        gid = data[off:off + gid_len].decode("utf-8")
        off += gid_len
        run_index, start_node, true_length = struct.unpack_from("<qqI", data, off)
        off += 20
        ids = struct.unpack_from(f"<{true_length}q", data, off)
        off += 8 * true_length
        node_seq = np.frombuffer(data, dtype="<f8", count=length * node_dim,
                                 offset=off).reshape(length, node_dim).copy()
        off += node_bytes
        edge_seq = np.frombuffer(data, dtype="<f8", count=max(length - 1, 0) * 4,
                                 offset=off).reshape(-1, 4).copy()
        off += edge_bytes
        pairs.append(
            SequencePair(
                graph_id=gid,
                run_index=int(run_index),
                start_node=int(start_node),
                node_ids=tuple(int(v) for v in ids),
                true_length=int(true_length),
                node_seq=node_seq,
                edge_seq=edge_seq,
            )
        )
    return meta, pairs


def _group_pairs(meta: WalkStoreMeta, pairs) -> list[WalkSet]:
    by_graph: dict[str, list[SequencePair]] = {}
    order: list[str] = []
    for p in pairs:
        if p.graph_id not in by_graph:
            by_graph[p.graph_id] = []
            order.append(p.graph_id)
        by_graph[p.graph_id].append(p)
    out = []
    for gid in order:
        runs: list[list[SequencePair]] = [[] for _ in range(meta.config.runs)]
        for p in by_graph[gid]:
            runs[p.run_index].append(p)
        out.append(
            WalkSet(
                graph_id=gid,
                config=meta.config,
                runs=tuple(tuple(r) for r in runs),
            )
        )
    return out
