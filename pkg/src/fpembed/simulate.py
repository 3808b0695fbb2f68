"""Deterministic crowd-evacuation simulator producing per-room behavioral features.

The model is a queueing approximation: agents spawn at seeded uniform
points, walk the door-graph shortest path toward the nearest exit room at
constant speed, and every door is a FIFO single server. It exists to give
each room nine reproducible scalars (counts, times, distances, flow rate),
not to model steering or collisions.
"""

from __future__ import annotations

import hashlib
import heapq
import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import NoExit
from .floorplan import Floorplan, Room, door_adjacency, room_area, room_centroid

BEHAVIOR_FEATURES = (
    "not_completed",
    "max_evac_time",
    "min_evac_time",
    "avg_evac_time",
    "exit_flow_rate",
    "completed",
    "max_dist",
    "avg_dist",
    "min_dist",
)


@dataclass(frozen=True)
class SimConfig:
    density_area: float = 4.0   # square units per agent
    agent_speed: float = 1.33   # units/second
    door_service_rate: float = 1.0  # agents/second per door
    timeout: float = 300.0      # seconds
    seed: int = 0

    def __post_init__(self):
        for name in ("density_area", "agent_speed", "door_service_rate", "timeout"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be strictly positive")

    def to_json(self) -> dict:
        return {
            "density_area": self.density_area,
            "agent_speed": self.agent_speed,
            "door_service_rate": self.door_service_rate,
            "timeout": self.timeout,
            "seed": self.seed,
        }

    @staticmethod
    def from_json(doc: dict) -> "SimConfig":
        return SimConfig(**doc)


@dataclass(frozen=True)
class RoomBehavior:
    not_completed: int
    max_evac_time: float
    min_evac_time: float
    avg_evac_time: float
    exit_flow_rate: float
    completed: int
    max_dist: float
    avg_dist: float
    min_dist: float

    def as_vector(self) -> np.ndarray:
        return np.array([getattr(self, name) for name in BEHAVIOR_FEATURES],
                        dtype=np.float64)


@dataclass(frozen=True)
class AgentRecord:
    """Per-agent outcome, exposed for oracle-style verification."""

    agent_id: int
    home_room: int
    spawn: tuple[float, float]
    completed: bool
    evac_time: float
    distance: float


def _round_half_away(x: float) -> int:
    return int(math.floor(x + 0.5))


def spawn_counts(fp: Floorplan, cfg: SimConfig) -> dict[int, int]:
    """Agents per room: max(1, round(area/density_area)), halves away from zero."""
    return {
        room.id: max(1, _round_half_away(room_area(room) / cfg.density_area))
        for room in fp.rooms
    }


def stable_u32(text: str) -> int:
    return int.from_bytes(hashlib.sha256(text.encode("utf-8")).digest()[:4], "big")


def _spawn_rng(fp: Floorplan, cfg: SimConfig) -> np.random.Generator:
    seq = np.random.SeedSequence(entropy=cfg.seed, spawn_key=(stable_u32(fp.id),))
    return np.random.Generator(np.random.PCG64(seq))


def exit_distances(fp: Floorplan) -> dict[int, int]:
    """Hop count from each room to its nearest exit room (multi-source BFS)."""
    adj = door_adjacency(fp)
    dist = {room.id: -1 for room in fp.rooms}
    frontier = sorted(room.id for room in fp.rooms if room.is_exit)
    if not frontier:
        raise NoExit(f"floorplan {fp.id!r} has no exit room")
    for rid in frontier:
        dist[rid] = 0
    hop = 0
    while frontier:
        hop += 1
        nxt = []
        for rid in frontier:
            for nbr in adj[rid]:
                if dist[nbr] < 0:
                    dist[nbr] = hop
                    nxt.append(nbr)
        frontier = sorted(nxt)
    return dist


def evacuation_route(fp: Floorplan, start_room: int) -> list[int] | None:
    """Room-id path from start to the nearest exit; ties take the lowest next id.

    Returns None when no exit is reachable.
    """
    dist = exit_distances(fp)
    if dist[start_room] < 0:
        return None
    adj = door_adjacency(fp)
    path = [start_room]
    cur = start_room
    while dist[cur] > 0:
        cur = min(n for n in adj[cur] if dist[n] == dist[cur] - 1)
        path.append(cur)
    return path


@dataclass
class _Agent:
    agent_id: int
    home_room: int
    spawn: tuple[float, float]
    route: list[int] | None  # room ids, None when unreachable
    legs: list[float]        # travel durations: spawn->centroid, then per hop
    leg_dists: list[float]


def _build_agents(fp: Floorplan, cfg: SimConfig) -> list[_Agent]:
    counts = spawn_counts(fp, cfg)
    rng = _spawn_rng(fp, cfg)
    routes = {room.id: evacuation_route(fp, room.id) for room in fp.rooms}
    centroids = {room.id: room_centroid(room) for room in fp.rooms}
    agents = []
    agent_id = 0
    for room in fp.rooms:  # room order fixes agent ids deterministically
        x0, y0, x1, y1 = room.bbox
        for _ in range(counts[room.id]):
            sx = x0 + rng.random() * (x1 - x0)
            sy = y0 + rng.random() * (y1 - y0)
            route = routes[room.id]
            leg_dists = [math.dist((sx, sy), centroids[room.id])]
            if route is not None:
                for a, b in zip(route, route[1:]):
                    leg_dists.append(math.dist(centroids[a], centroids[b]))
            legs = [d / cfg.agent_speed for d in leg_dists]
            agents.append(_Agent(agent_id, room.id, (sx, sy), route, legs, leg_dists))
            agent_id += 1
    return agents


def _door_key(a: int, b: int) -> tuple[int, int]:
    return (a, b) if a <= b else (b, a)


def run_agents(fp: Floorplan, cfg: SimConfig) -> list[AgentRecord]:
    """Event-driven pass over all agents; FIFO doors reserve service on arrival."""
    agents = _build_agents(fp, cfg)
    service = 1.0 / cfg.door_service_rate
    door_free: dict[tuple[int, int], float] = {}
    records: list[AgentRecord] = []

    # Events ordered by (time, agent_id): an agent either arrives at the next
    # door on its route (stage = index of the hop) or finishes.
    heap: list[tuple[float, int, int]] = []
    for ag in agents:
        if ag.route is None:
            records.append(AgentRecord(ag.agent_id, ag.home_room, ag.spawn,
                                       False, cfg.timeout, ag.leg_dists[0]))
            continue
        heapq.heappush(heap, (ag.legs[0], ag.agent_id, 0))

    by_id = {ag.agent_id: ag for ag in agents}
    while heap:
        t, aid, hop = heapq.heappop(heap)
        ag = by_id[aid]
        route = ag.route
        assert route is not None
        if hop == len(route) - 1:
            # Reached the exit room's centroid: evacuation complete.
            completed = t <= cfg.timeout
            records.append(AgentRecord(aid, ag.home_room, ag.spawn, completed,
                                       min(t, cfg.timeout), sum(ag.leg_dists)))
            continue
        door = _door_key(route[hop], route[hop + 1])
        start = max(t, door_free.get(door, 0.0))
        depart = start + service
        door_free[door] = depart
        heapq.heappush(heap, (depart + ag.legs[hop + 1], aid, hop + 1))

    records.sort(key=lambda r: r.agent_id)
    return records


def _summarize(room_records: list[AgentRecord]) -> RoomBehavior:
    done = [r for r in room_records if r.completed]
    n_done = len(done)
    n_not = len(room_records) - n_done
    if n_done:
        times = [r.evac_time for r in done]
        dists = [r.distance for r in done]
        max_t = max(times)
        flow = n_done / max_t if max_t > 0.0 else 0.0
        return RoomBehavior(
            not_completed=n_not,
            max_evac_time=max_t,
            min_evac_time=min(times),
            avg_evac_time=sum(times) / n_done,
            exit_flow_rate=flow,
            completed=n_done,
            max_dist=max(dists),
            avg_dist=sum(dists) / n_done,
            min_dist=min(dists),
        )
    return RoomBehavior(n_not, 0.0, 0.0, 0.0, 0.0, 0, 0.0, 0.0, 0.0)


def simulate(fp: Floorplan, cfg: SimConfig) -> dict[int, RoomBehavior]:
    """Behavioral features per room; deterministic for a fixed (fp, cfg)."""
    records = run_agents(fp, cfg)
    by_room: dict[int, list[AgentRecord]] = {room.id: [] for room in fp.rooms}
    for rec in records:
        by_room[rec.home_room].append(rec)
    return {rid: _summarize(recs) for rid, recs in by_room.items()}


def behavior_to_json(behavior: dict[int, RoomBehavior]) -> dict:
    return {
        str(rid): {name: getattr(b, name) for name in BEHAVIOR_FEATURES}
        for rid, b in sorted(behavior.items())
    }


def behavior_from_json(doc: dict) -> dict[int, RoomBehavior]:
    out = {}
    for rid, fields in doc.items():
        out[int(rid)] = RoomBehavior(**{name: fields[name] for name in BEHAVIOR_FEATURES})
    return out


def write_behavior_corpus(path, items) -> None:
    """items: iterable of (floorplan_id, {room_id: RoomBehavior}); one JSON
    document per line."""
    with open(path, "w", encoding="utf-8") as fh:
        for fp_id, behavior in items:
            doc = {"floorplan_id": fp_id, "rooms": behavior_to_json(behavior)}
            fh.write(json.dumps(doc, separators=(",", ":")))
            fh.write("\n")


def read_behavior_corpus(path) -> dict[str, dict[int, RoomBehavior]]:
    out = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            doc = json.loads(line)
            out[doc["floorplan_id"]] = behavior_from_json(doc["rooms"])
    return out


def normalize_behavior(b: RoomBehavior, stats) -> np.ndarray:
    """Min-max scale the nine features to [0, 1] using corpus stats.

    Constant features map to 0; out-of-corpus values clamp.
    """
    vec = b.as_vector()
    lo = np.asarray(stats.behavior_min, dtype=np.float64)
    hi = np.asarray(stats.behavior_max, dtype=np.float64)
    span = hi - lo
    out = np.zeros(len(BEHAVIOR_FEATURES), dtype=np.float64)
    nonconst = span > 0.0
    out[nonconst] = (vec[nonconst] - lo[nonconst]) / span[nonconst]
    return np.clip(out, 0.0, 1.0)
