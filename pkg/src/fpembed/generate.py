"""Generation: decode posterior samples back into floorplan artifacts, and
latent-line (homotopy) interpolation between two walks.

Geometry realization is deliberately minimal: room bboxes scale about their
own centroids to meet generated areas; overlaps are flagged, not repaired.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import AlignmentMismatch, DimMismatch, EmptyRun
from .floorplan import (
    DIRECTIONS,
    ROOM_TYPES,
    Floorplan,
    Room,
    door_adjacency,
    room_area,
    room_centroid,
)
from .graphs import AttributedGraph, GraphNode, NormStats
from .neural import reparameterize
from .simulate import BEHAVIOR_FEATURES
from .vae import ModelParams, decode, encode
from .walks import SequencePair, WalkSet


@dataclass(frozen=True)
class DecodedSequence:
    """Decoder outputs for one walk, truncated to the source true_length and
    carrying both raw scores and discretized/denormalized values."""

    graph_id: str
    run_index: int
    start_node: int
    node_ids: tuple[int, ...]
    type_scores: np.ndarray       # (T, 10) raw
    areas: np.ndarray             # (T,) denormalized, clamped to corpus range
    behavior: np.ndarray | None   # (T, 9) denormalized, full models only
    dir_scores: np.ndarray | None  # (T-1, 4) raw, absent for node-only models
    room_types: tuple[str, ...]
    directions: tuple[str, ...] | None


def _denorm(raw, lo, hi):
    return lo + np.clip(raw, 0.0, 1.0) * (hi - lo)


def _decode_to_sequence(m: ModelParams, pair: SequencePair,
                        z_n: np.ndarray, z_e) -> DecodedSequence:
    steps = pair.node_seq.shape[0]
    y_n, y_e = decode(m, z_n, z_e, steps)
    t = pair.true_length
    stats = m.norm_stats
    type_scores = y_n[:t, :10].copy()
    areas = _denorm(y_n[:t, 10], stats.area_min, stats.area_max)
    behavior = None
    if m.feature_set == "full":
        lo = np.asarray(stats.behavior_min)
        hi = np.asarray(stats.behavior_max)
        behavior = lo + np.clip(y_n[:t, 11:20], 0.0, 1.0) * (hi - lo)
    dir_scores = None
    directions = None
    if y_e is not None:
        dir_scores = y_e[:max(t - 1, 0), :].copy()
        directions = tuple(DIRECTIONS[int(np.argmax(row))] for row in dir_scores)
    room_types = tuple(ROOM_TYPES[int(np.argmax(row))] for row in type_scores)
    return DecodedSequence(
        graph_id=pair.graph_id,
        run_index=pair.run_index,
        start_node=pair.start_node,
        node_ids=pair.node_ids,
        type_scores=type_scores,
        areas=areas,
        behavior=behavior,
        dir_scores=dir_scores,
        room_types=room_types,
        directions=directions,
    )


def sample_posterior(m: ModelParams, pair: SequencePair, seed: int) -> DecodedSequence:
    """z ~ N(mu, sigma^2) per branch via the seeded reparameterization."""
    mu_n, lv_n, mu_e, lv_e = encode(m, pair)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    z_n, _ = reparameterize(mu_n, lv_n, rng)
    z_e = None
    if mu_e is not None:
        z_e, _ = reparameterize(mu_e, lv_e, rng)
    return _decode_to_sequence(m, pair, z_n, z_e)


def decode_mean(m: ModelParams, pair: SequencePair) -> DecodedSequence:
    """Deterministic decode of the posterior mean (no sampling)."""
    mu_n, _, mu_e, _ = encode(m, pair)
    return _decode_to_sequence(m, pair, mu_n, mu_e)


def homotopy(m: ModelParams, pair_a: SequencePair, pair_b: SequencePair,
             lam: float) -> DecodedSequence:
    """Decode z = mu_a + lam*(mu_b - mu_a) per branch; lam 0/1 short-circuit
    to the exact endpoint latents so endpoint decodes are bit-identical.
    Output is aligned to pair_a."""
    if not 0.0 <= lam <= 1.0:
        raise ValueError("lambda must lie in [0, 1]")
    mu_an, _, mu_ae, _ = encode(m, pair_a)
    mu_bn, _, mu_be, _ = encode(m, pair_b)

    def mix(a, b):
        if a is None:
            return None
        if lam == 0.0:
            return a
        if lam == 1.0:
            return b
        return a + lam * (b - a)

    return _decode_to_sequence(m, pair_a, mix(mu_an, mu_bn), mix(mu_ae, mu_be))


def anchor_node(ws: WalkSet, run: int, degrees: dict) -> int:
    """Highest-degree node appearing in every sequence of the run; falls back
    to the overall highest-degree node.  Ties: lowest id."""
    pairs = ws.runs[run]
    if not pairs:
        raise EmptyRun(f"graph {ws.graph_id!r} run {run} has no sequences")
    common = set(pairs[0].node_ids)
    for p in pairs[1:]:
        common &= set(p.node_ids)
    candidates = sorted(common) if common else sorted(degrees)
    return min(candidates, key=lambda nid: (-degrees[nid], nid))


def _scale_bbox(bbox, scale: float):
    x0, y0, x1, y1 = bbox
    cx, cy = (x0 + x1) / 2.0, (y0 + y1) / 2.0
    return (
        cx + (x0 - cx) * scale,
        cy + (y0 - cy) * scale,
        cx + (x1 - cx) * scale,
        cy + (y1 - cy) * scale,
    )


def _bboxes_overlap(a, b) -> bool:
    # positive-area intersection; shared edges do not count
    return a[0] < b[2] and b[0] < a[2] and a[1] < b[3] and b[1] < a[3]


@dataclass(frozen=True)
class GeneratedPlan:
    floorplan: Floorplan
    anchor: int
    room_areas: dict
    overlaps: bool


def apply_room_areas(fp: Floorplan, areas: dict, anchor: int) -> GeneratedPlan:
    """Scale each room's bbox about its centroid to hit the target area.
    Rooms whose target equals their current area keep their exact bbox."""
    rooms = []
    for room in fp.rooms:
        target = float(areas[room.id])
        current = room_area(room)
        if target == current:
            rooms.append(room)
            continue
        scale = float(np.sqrt(target / current))
        rooms.append(replace(room, bbox=_scale_bbox(room.bbox, scale)))
    overlaps = False
    for i in range(len(rooms)):
        for j in range(i + 1, len(rooms)):
            if _bboxes_overlap(rooms[i].bbox, rooms[j].bbox):
                overlaps = True
                break
        if overlaps:
            break
    plan = replace(fp, rooms=tuple(rooms))
    return GeneratedPlan(floorplan=plan, anchor=anchor,
                         room_areas=dict(areas), overlaps=overlaps)


def generate_from_graph(m: ModelParams, ws: WalkSet, fp: Floorplan,
                        run: int, seed: int) -> GeneratedPlan:
    """Posterior-sample every walk of the run, average each room's decoded
    areas, and rescale the source geometry.  Topology, room types, and door
    set are preserved."""
    pairs = ws.runs[run]
    if not pairs:
        raise EmptyRun(f"graph {ws.graph_id!r} run {run} has no sequences")
    collected: dict[int, list[float]] = {}
    for idx, pair in enumerate(pairs):
        child = np.random.SeedSequence(entropy=seed, spawn_key=(idx,))
        pair_seed = int(child.generate_state(1)[0])
        dec = sample_posterior(m, pair, pair_seed)
        for nid, area in zip(dec.node_ids, dec.areas):
            collected.setdefault(nid, []).append(float(area))
    areas = {nid: float(np.mean(vals)) for nid, vals in collected.items()}
    degrees = {rid: len(nbrs) for rid, nbrs in door_adjacency(fp).items()}
    anchor = anchor_node(ws, run, degrees)
    return apply_room_areas(fp, areas, anchor)


@dataclass(frozen=True)
class SpliceResult:
    graph: AttributedGraph
    diff: tuple[str, ...]


def _renorm(value: float, lo: float, hi: float) -> float:
    span = hi - lo
    if span <= 0.0:
        return 0.0
    return float(np.clip((value - lo) / span, 0.0, 1.0))


def splice_sequence(ws: WalkSet, g: AttributedGraph, new: DecodedSequence,
                    stats: NormStats) -> SpliceResult:
    """Replace the spliced walk's node attributes with the decoded values.

    Only node features change (type one-hot by argmax, scalars re-normalized);
    topology, degrees, and edge features stay.  When a node occurs at several
    walk positions the last occurrence wins.
    """
    if new.graph_id != ws.graph_id or new.graph_id != g.graph_id:
        raise AlignmentMismatch("decoded sequence names a different graph")
    try:
        source = ws.pair(new.run_index, new.start_node)
    except KeyError:
        raise AlignmentMismatch(
            f"no source walk at run {new.run_index} start {new.start_node}"
        ) from None
    if tuple(new.node_ids) != tuple(source.node_ids):
        raise AlignmentMismatch("decoded node_ids do not match the source walk")
    if (new.behavior is not None) != (g.feature_set == "full"):
        raise DimMismatch("behavior block does not match the graph's feature set")

    dim = g.node_dim
    updated: dict[int, np.ndarray] = {}
    for t, nid in enumerate(new.node_ids):
        fv = np.zeros(dim)
        fv[int(np.argmax(new.type_scores[t]))] = 1.0
        fv[10] = _renorm(float(new.areas[t]), stats.area_min, stats.area_max)
        if g.feature_set == "full":
            for k in range(9):
                fv[11 + k] = _renorm(float(new.behavior[t, k]),
                                     stats.behavior_min[k], stats.behavior_max[k])
        updated[nid] = fv

    diff = []
    nodes = []
    span = stats.area_max - stats.area_min
    for node in g.nodes:
        if node.node_id not in updated:
            nodes.append(node)
            continue
        fv = updated[node.node_id]
        old_type = ROOM_TYPES[int(np.argmax(node.features[:10]))]
        new_type = ROOM_TYPES[int(np.argmax(fv[:10]))]
        if old_type != new_type:
            diff.append(f"node {node.node_id}: type {old_type} -> {new_type}")
        if abs(fv[10] - node.features[10]) > 1e-12:
            old_area = stats.area_min + node.features[10] * span
            new_area = stats.area_min + fv[10] * span
            diff.append(
                f"node {node.node_id}: area {old_area:.6g} -> {new_area:.6g}")
        if g.feature_set == "full":
            for k in range(9):
                if abs(fv[11 + k] - node.features[11 + k]) > 1e-12:
                    blo = stats.behavior_min[k]
                    bspan = stats.behavior_max[k] - blo
                    old_v = blo + node.features[11 + k] * bspan
                    new_v = blo + fv[11 + k] * bspan
                    diff.append(
                        f"node {node.node_id}: {BEHAVIOR_FEATURES[k]} "
                        f"{old_v:.6g} -> {new_v:.6g}")
        nodes.append(GraphNode(node_id=node.node_id, features=fv,
                               degree=node.degree))
    out = replace(g, nodes=tuple(nodes))
    return SpliceResult(graph=out, diff=tuple(diff))
