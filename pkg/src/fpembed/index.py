"""Embedding store plus the evaluation stack: exact Euclidean kNN,
proxy-rank histograms, DBSCAN from the textbook definition, per-cluster
structure statistics, and a deterministic 2D PCA projection.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateCovariance,
    DimMismatch,
    EmptyCorpus,
    MissingProxy,
    NoClusters,
)

KINDS = ("main", "proxy")
TOP_RANKS = 5


@dataclass(frozen=True)
class EmbeddingRecord:
    graph_id: str
    kind: str  # "main" | "proxy"
    vector: np.ndarray
    model_hash: str


@dataclass(frozen=True)
class EmbeddingStore:
    records: tuple[EmbeddingRecord, ...]

    def __post_init__(self):
        dims = {r.vector.shape for r in self.records}
        if len(dims) > 1:
            raise DimMismatch(f"mixed vector shapes in store: {sorted(dims)}")
        hashes = {r.model_hash for r in self.records}
        if len(hashes) > 1:
            raise DimMismatch("records from different models in one store")
        for r in self.records:
            if r.kind not in KINDS:
                raise ValueError(f"unknown record kind {r.kind!r}")

    @property
    def dim(self) -> int:
        if not self.records:
            raise EmptyCorpus("empty embedding store")
        return self.records[0].vector.shape[0]

    def of_kind(self, kind: str) -> "EmbeddingStore":
        return EmbeddingStore(tuple(r for r in self.records if r.kind == kind))

    def by_key(self, graph_id: str, kind: str) -> EmbeddingRecord:
        for r in self.records:
            if r.graph_id == graph_id and r.kind == kind:
                return r
        raise KeyError((graph_id, kind))


def write_embeddings(path, store: EmbeddingStore) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in store.records:
            doc = {
                "graph_id": r.graph_id,
                "kind": r.kind,
                "vector": r.vector.tolist(),
                "model_hash": r.model_hash,
            }
            fh.write(json.dumps(doc, separators=(",", ":")))
            fh.write("\n")


def read_embeddings(path) -> EmbeddingStore:
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            doc = json.loads(line)
            records.append(EmbeddingRecord(
                graph_id=doc["graph_id"],
                kind=doc["kind"],
                vector=np.asarray(doc["vector"], dtype=np.float64),
                model_hash=doc["model_hash"],
            ))
    return EmbeddingStore(tuple(records))


def _kind_rank(kind: str) -> int:
    return 0 if kind == "main" else 1


def knn(store: EmbeddingStore, query: np.ndarray, k: int):
    """Exhaustive exact search.  -> [(graph_id, kind, distance)] ascending,
    ties broken by kind (main first) then graph_id."""
    if not store.records:
        raise EmptyCorpus("knn over an empty store")
    query = np.asarray(query, dtype=np.float64)
    if query.shape != (store.dim,):
        raise DimMismatch(f"query dim {query.shape} vs store dim ({store.dim},)")
    mat = np.stack([r.vector for r in store.records])
    dists = np.sqrt(np.sum((mat - query) ** 2, axis=1))
    order = sorted(
        range(len(store.records)),
        key=lambda i: (dists[i], _kind_rank(store.records[i].kind),
                       store.records[i].graph_id),
    )
    out = []
    for i in order[:k]:
        r = store.records[i]
        out.append((r.graph_id, r.kind, float(dists[i])))
    return out


@dataclass(frozen=True)
class RankCell:
    walk_kind: str
    walk_length: int
    n_graphs: int
    self_counts: tuple[int, ...]   # ranks 1..5
    proxy_counts: tuple[int, ...]

    def self_pct(self) -> list[float]:
        return [100.0 * c / self.n_graphs for c in self.self_counts]

    def proxy_pct(self) -> list[float]:
        return [100.0 * c / self.n_graphs for c in self.proxy_counts]


@dataclass(frozen=True)
class RankReport:
    cells: tuple[RankCell, ...]

    def cell(self, walk_kind: str, walk_length: int) -> RankCell:
        for c in self.cells:
            if c.walk_kind == walk_kind and c.walk_length == walk_length:
                return c
        raise KeyError((walk_kind, walk_length))

    def merged(self, other: "RankReport") -> "RankReport":
        return RankReport(cells=self.cells + other.cells)


def proxy_rank_eval(main: EmbeddingStore, proxy: EmbeddingStore,
                    walk_kind: str = "rw2", walk_length: int = 5) -> RankReport:
    """Query the main∪proxy corpus with each graph's main vector; histogram
    the rank of the graph itself and of its proxy over the top 5."""
    mains = [r for r in main.records if r.kind == "main"]
    if not mains:
        raise EmptyCorpus("no main records to evaluate")
    proxies = {r.graph_id: r for r in proxy.records if r.kind == "proxy"}
    missing = [r.graph_id for r in mains if r.graph_id not in proxies]
    if missing:
        raise MissingProxy(f"graphs without proxy embeddings: {missing[:5]}")
    union = EmbeddingStore(tuple(mains) + tuple(
        proxies[r.graph_id] for r in mains))

    self_counts = [0] * TOP_RANKS
    proxy_counts = [0] * TOP_RANKS
    for r in mains:
        ranked = knn(union, r.vector, TOP_RANKS)
        for pos, (gid, kind, _dist) in enumerate(ranked):
            if gid == r.graph_id and kind == "main":
                self_counts[pos] += 1
            elif gid == r.graph_id and kind == "proxy":
                proxy_counts[pos] += 1
    cell = RankCell(
        walk_kind=walk_kind,
        walk_length=walk_length,
        n_graphs=len(mains),
        self_counts=tuple(self_counts),
        proxy_counts=tuple(proxy_counts),
    )
    return RankReport(cells=(cell,))


def kth_nn_distance(store: EmbeddingStore, k: int) -> np.ndarray:
    """Distance from each record to its k-th nearest other record."""
    n = len(store.records)
    if n < 2:
        raise EmptyCorpus("need >= 2 records for neighbor distances")
    mat = np.stack([r.vector for r in store.records])
    d2 = np.sum((mat[:, None, :] - mat[None, :, :]) ** 2, axis=2)
    dists = np.sqrt(d2)
    out = np.empty(n)
    kk = min(k, n - 1)
    for i in range(n):
        others = np.sort(np.delete(dists[i], i))
        out[i] = others[kk - 1]
    return out


def default_eps(store: EmbeddingStore, k: int = 5) -> float:
    """k-distance heuristic: median of k-th-NN distances (floor above zero)."""
    med = float(np.median(kth_nn_distance(store, k)))
    return max(med, 1e-12)


def dbscan(store: EmbeddingStore, eps: float, min_pts: int) -> dict:
    """Textbook DBSCAN.  Neighborhoods are inclusive (<= eps) and
    self-counting; scan order is graph_id-ascending, expansion is FIFO with
    ascending neighbor lists, so border assignment is deterministic.
    -> {graph_id: label}, outliers -1."""
    if eps <= 0.0:
        raise ValueError("eps must be positive")
    if min_pts < 1:
        raise ValueError("min_pts must be >= 1")
    recs = sorted(store.records, key=lambda r: r.graph_id)
    if len({r.graph_id for r in recs}) != len(recs):
        raise ValueError("dbscan store must hold one record per graph_id")
    n = len(recs)
    if n == 0:
        return {}
    mat = np.stack([r.vector for r in recs])
    d2 = np.sum((mat[:, None, :] - mat[None, :, :]) ** 2, axis=2)
    within = d2 <= eps * eps
    neighbors = [np.flatnonzero(within[i]).tolist() for i in range(n)]
    core = [len(nb) >= min_pts for nb in neighbors]

    labels: dict[int, int] = {}
    cluster = 0
    for i in range(n):
        if i in labels:
            continue
        if not core[i]:
            labels[i] = -1  # provisional noise; may be promoted to border
            continue
        labels[i] = cluster
        queue = deque(neighbors[i])
        while queue:
            j = queue.popleft()
            if j in labels:
                if labels[j] == -1:
                    labels[j] = cluster  # border point
                continue
            labels[j] = cluster
            if core[j]:
                queue.extend(neighbors[j])
        cluster += 1
    return {recs[i].graph_id: labels[i] for i in range(n)}


@dataclass(frozen=True)
class ClusterStat:
    label: int
    size: int
    node_count_std: float
    mean_degree_std: float
    type_count_std: float


@dataclass(frozen=True)
class ClusterReport:
    clusters: tuple[ClusterStat, ...]
    node_count_std: float    # means over clusters
    mean_degree_std: float
    type_count_std: float


def cluster_stats(labels: dict, graphs: dict) -> ClusterReport:
    """graphs: graph_id -> AttributedGraph.  Population stds per cluster;
    the type stat is the mean over the 10 room types of the std of
    per-graph type counts."""
    members: dict[int, list[str]] = {}
    for gid in sorted(labels):
        lab = labels[gid]
        if lab >= 0:
            members.setdefault(lab, []).append(gid)
    if not members:
        raise NoClusters("no non-outlier clusters")
    stats = []
    for lab in sorted(members):
        gids = members[lab]
        counts = []
        mean_degs = []
        type_counts = []
        for gid in gids:
            g = graphs[gid]
            counts.append(len(g.nodes))
            mean_degs.append(float(np.mean([n.degree for n in g.nodes])))
            tc = np.zeros(10)
            for node in g.nodes:
                tc[int(np.argmax(node.features[:10]))] += 1
            type_counts.append(tc)
        type_mat = np.stack(type_counts)
        stats.append(ClusterStat(
            label=lab,
            size=len(gids),
            node_count_std=float(np.std(counts)),
            mean_degree_std=float(np.std(mean_degs)),
            type_count_std=float(np.mean(np.std(type_mat, axis=0))),
        ))
    return ClusterReport(
        clusters=tuple(stats),
        node_count_std=float(np.mean([s.node_count_std for s in stats])),
        mean_degree_std=float(np.mean([s.mean_degree_std for s in stats])),
        type_count_std=float(np.mean([s.type_count_std for s in stats])),
    )


def project_2d(store: EmbeddingStore):
    """Mean-centered top-2 PCA; component signs fixed by making the
    largest-magnitude coordinate positive.  -> [(graph_id, x, y)]."""
    n = len(store.records)
    if n < 2:
        raise DegenerateCovariance("need >= 2 records to project")
    if store.dim < 2:
        raise DegenerateCovariance("need >= 2 embedding dims to project")
    mat = np.stack([r.vector for r in store.records])
    centered = mat - mat.mean(axis=0)
    cov = (centered.T @ centered) / n
    evals, evecs = np.linalg.eigh(cov)
    comps = []
    for j in (evals.size - 1, evals.size - 2):
        v = evecs[:, j]
        if v[int(np.argmax(np.abs(v)))] < 0:
            v = -v
        comps.append(v)
    proj = centered @ np.stack(comps, axis=1)
    return [(store.records[i].graph_id, float(proj[i, 0]), float(proj[i, 1]))
            for i in range(n)]


def rank_report_json(report: RankReport) -> dict:
    return {
        "cells": [
            {
                "walk_kind": c.walk_kind,
                "walk_length": c.walk_length,
                "n_graphs": c.n_graphs,
                "self_counts": list(c.self_counts),
                "proxy_counts": list(c.proxy_counts),
                "self_pct": c.self_pct(),
                "proxy_pct": c.proxy_pct(),
            }
            for c in report.cells
        ]
    }


def rank_report_from_json(doc: dict) -> RankReport:
    cells = tuple(
        RankCell(
            walk_kind=c["walk_kind"],
            walk_length=int(c["walk_length"]),
            n_graphs=int(c["n_graphs"]),
            self_counts=tuple(int(v) for v in c["self_counts"]),
            proxy_counts=tuple(int(v) for v in c["proxy_counts"]),
        )
        for c in doc["cells"]
    )
    return RankReport(cells=cells)


def rank_report_text(report: RankReport) -> str:
    """Aligned table, one self row and one proxy row per (walk, length)."""
    header = f"{'walk':<6}{'len':>4}  {'rank':<6}" + "".join(
        f"{r:>8}" for r in range(1, TOP_RANKS + 1))
    lines = [header]
    for c in sorted(report.cells, key=lambda c: (c.walk_kind, c.walk_length)):
        for name, pct in (("self", c.self_pct()), ("proxy", c.proxy_pct())):
            row = f"{c.walk_kind:<6}{c.walk_length:>4}  {name:<6}"
            row += "".join(f"{v:>8.1f}" for v in pct)
            lines.append(row)
    return "\n".join(lines) + "\n"


def cluster_report_json(report: ClusterReport) -> dict:
    return {
        "clusters": [
            {
                "label": s.label,
                "size": s.size,
                "node_count_std": s.node_count_std,
                "mean_degree_std": s.mean_degree_std,
                "type_count_std": s.type_count_std,
            }
            for s in report.clusters
        ],
        "mean": {
            "node_count_std": report.node_count_std,
            "mean_degree_std": report.mean_degree_std,
            "type_count_std": report.type_count_std,
        },
    }


def cluster_report_text(report: ClusterReport) -> str:
    header = (f"{'cluster':>8}{'size':>6}{'node_count_std':>16}"
              f"{'mean_degree_std':>17}{'type_count_std':>16}")
    lines = [header]
    for s in report.clusters:
        lines.append(f"{s.label:>8}{s.size:>6}{s.node_count_std:>16.4f}"
                     f"{s.mean_degree_std:>17.4f}{s.type_count_std:>16.4f}")
    lines.append(f"{'mean':>8}{'':>6}{report.node_count_std:>16.4f}"
                 f"{report.mean_degree_std:>17.4f}{report.type_count_std:>16.4f}")
    return "\n".join(lines) + "\n"


def projection_csv(points, labels=None) -> str:
    """points: [(graph_id, x, y)]; labels: optional {graph_id: cluster}."""
    lines = ["graph_id,x,y,cluster"]
    for gid, x, y in points:
        cl = "" if labels is None or gid not in labels else str(labels[gid])
        lines.append(f"{gid},{x!r},{y!r},{cl}")
    return "\n".join(lines) + "\n"
