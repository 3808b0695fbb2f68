"""Floorplan data model, fpjson-v1 ingestion, geometry helpers and synthetic corpora.

Coordinates use a top-left origin with x growing rightward and y growing
downward; "North" is screen-up (decreasing y). All values are immutable
after construction and every public function is pure.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    CoincidentCentroids,
    InfeasibleProfile,
    InvariantViolation,
    MalformedInput,
    SchemaViolation,
)

FORMAT_TAG = "fpjson-v1"

ROOM_TYPES = (
    "Bedroom",
    "Bathroom",
    "Office",
    "Garage",
    "DiningRoom",
    "LivingRoom",
    "Kitchen",
    "Hall",
    "Hallway",
    "Unknown",
)
ROOM_TYPE_INDEX = {name: i for i, name in enumerate(ROOM_TYPES)}

DIRECTIONS = ("North", "East", "South", "West")
DIRECTION_INDEX = {name: i for i, name in enumerate(DIRECTIONS)}
OPPOSITE_DIRECTION = {"North": "South", "South": "North", "East": "West", "West": "East"}


@dataclass(frozen=True)
class Room:
    id: int
    room_type: str
    bbox: tuple[float, float, float, float]  # (x0, y0, x1, y1), x0 < x1, y0 < y1
    is_exit: bool


@dataclass(frozen=True)
class Door:
    a: int
    b: int

    def key(self) -> tuple[int, int]:
        """Unordered-pair key; parallel doors collapse on it."""
        return (self.a, self.b) if self.a <= self.b else (self.b, self.a)


@dataclass(frozen=True)
class Floorplan:
    id: str
    rooms: tuple[Room, ...]
    doors: tuple[Door, ...]

    def room_by_id(self, room_id: int) -> Room:
        for room in self.rooms:
            if room.id == room_id:
                return room
        raise KeyError(room_id)


def room_area(room: Room) -> float:
    x0, y0, x1, y1 = room.bbox
    return (x1 - x0) * (y1 - y0)


def room_centroid(room: Room) -> tuple[float, float]:
    x0, y0, x1, y1 = room.bbox
    return ((x0 + x1) / 2.0, (y0 + y1) / 2.0)


def connection_direction(source: Room, target: Room) -> str:
    """Cardinal direction of the target centroid as seen from the source.

    The displacement angle is quantized into half-open 90-degree sectors
    (lower bound inclusive): East covers [-45, 45), North [45, 135),
    West [135, 225) wrapping, South [-135, -45).
    """
    sx, sy = room_centroid(source)
    tx, ty = room_centroid(target)
    dx = tx - sx
    dy = ty - sy
    if dx == 0.0 and dy == 0.0:
        raise CoincidentCentroids(
            f"rooms {source.id} and {target.id} share centroid ({sx}, {sy})"
        )
    # y grows downward, so screen-up is -dy.
    theta = math.degrees(math.atan2(-dy, dx))
    if -45.0 <= theta < 45.0:
        return "East"
    if 45.0 <= theta < 135.0:
        return "North"
    if -135.0 <= theta < -45.0:
        return "South"
    return "West"


def validate_floorplan(fp: Floorplan) -> Floorplan:
    """Check every floorplan invariant, raising InvariantViolation on the first failure."""
    if not fp.rooms:
        raise InvariantViolation(f"floorplan {fp.id!r} has no rooms")
    seen_ids: set[int] = set()
    for room in fp.rooms:
        if room.room_type not in ROOM_TYPE_INDEX:
            raise InvariantViolation(
                f"room {room.id}: unknown room type {room.room_type!r}"
            )
        x0, y0, x1, y1 = room.bbox
        if not (x0 < x1 and y0 < y1):
            raise InvariantViolation(f"room {room.id}: degenerate bbox {room.bbox}")
        if room.id in seen_ids:
            raise InvariantViolation(f"duplicate room id {room.id}")
        seen_ids.add(room.id)
    if not any(room.is_exit for room in fp.rooms):
        raise InvariantViolation(f"floorplan {fp.id!r} has no exit room")
    seen_pairs: set[tuple[int, int]] = set()
    for door in fp.doors:
        if door.a == door.b:
            raise InvariantViolation(f"door connects room {door.a} to itself")
        for end in (door.a, door.b):
            if end not in seen_ids:
                raise InvariantViolation(f"door references missing room id {end}")
        if door.key() in seen_pairs:
            raise InvariantViolation(f"duplicate door between rooms {door.key()}")
        seen_pairs.add(door.key())
    return fp


def _require(condition: bool, message: str) -> None:
    if not condition:
        raise SchemaViolation(message)


def _check_fields(obj: dict, required: Sequence[str], context: str) -> None:
    for name in required:
        _require(name in obj, f"{context}: missing field {name!r}")
    for name in obj:
        _require(name in required, f"{context}: unknown field {name!r}")


def _as_number(value: object, context: str) -> float:
    _require(isinstance(value, (int, float)) and not isinstance(value, bool),
             f"{context}: expected a number")
    return float(value)


def parse_floorplan(data: bytes | str) -> Floorplan:
    """Parse and validate one fpjson-v1 document."""
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    try:
        doc = json.loads(data)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise MalformedInput(str(exc)) from exc
    _require(isinstance(doc, dict), "top level: expected an object")
    _check_fields(doc, ("format", "id", "rooms", "doors"), "top level")
    _require(doc["format"] == FORMAT_TAG, f"format must be {FORMAT_TAG!r}")
    _require(isinstance(doc["id"], str), "id must be a string")
    _require(isinstance(doc["rooms"], list), "rooms must be a list")
    _require(isinstance(doc["doors"], list), "doors must be a list")

    rooms = []
    for i, raw in enumerate(doc["rooms"]):
        ctx = f"rooms[{i}]"
        _require(isinstance(raw, dict), f"{ctx}: expected an object")
        _check_fields(raw, ("id", "type", "bbox", "exit"), ctx)
        _require(isinstance(raw["id"], int) and not isinstance(raw["id"], bool),
                 f"{ctx}: id must be an integer")
        _require(isinstance(raw["type"], str), f"{ctx}: type must be a string")
        _require(raw["type"] in ROOM_TYPE_INDEX,
                 f"{ctx}: type {raw['type']!r} is not one of {ROOM_TYPES}")
        bbox = raw["bbox"]
        _require(isinstance(bbox, list) and len(bbox) == 4,
                 f"{ctx}: bbox must be a list of 4 numbers")
        coords = tuple(_as_number(v, f"{ctx}.bbox") for v in bbox)
        _require(isinstance(raw["exit"], bool), f"{ctx}: exit must be a boolean")
        rooms.append(Room(id=raw["id"], room_type=raw["type"], bbox=coords,
                          is_exit=raw["exit"]))

    doors = []
    seen_pairs: set[tuple[int, int]] = set()
    for i, raw in enumerate(doc["doors"]):
        ctx = f"doors[{i}]"
        _require(isinstance(raw, dict), f"{ctx}: expected an object")
        _check_fields(raw, ("a", "b"), ctx)
        for end in ("a", "b"):
            _require(isinstance(raw[end], int) and not isinstance(raw[end], bool),
                     f"{ctx}: {end} must be an integer")
        door = Door(a=raw["a"], b=raw["b"])
        if door.a != door.b and door.key() in seen_pairs:
            continue  # parallel doors collapse
        seen_pairs.add(door.key())
        doors.append(door)

    return validate_floorplan(Floorplan(id=doc["id"], rooms=tuple(rooms),
                                        doors=tuple(doors)))


def serialize_floorplan(fp: Floorplan) -> bytes:
    """Serialize to canonical fpjson-v1 bytes; parse(serialize(fp)) == fp."""
    doc = {
        "format": FORMAT_TAG,
        "id": fp.id,
        "rooms": [
            {
                "id": room.id,
                "type": room.room_type,
                "bbox": list(room.bbox),
                "exit": room.is_exit,
            }
            for room in fp.rooms
        ],
        "doors": [{"a": door.a, "b": door.b} for door in fp.doors],
    }
    return json.dumps(doc, separators=(",", ":"), sort_keys=False).encode("utf-8")


def door_adjacency(fp: Floorplan) -> dict[int, list[int]]:
    """Room id -> sorted neighbor ids over the door graph."""
    adj: dict[int, list[int]] = {room.id: [] for room in fp.rooms}
    for door in fp.doors:
        adj[door.a].append(door.b)
        adj[door.b].append(door.a)
    return {rid: sorted(nbrs) for rid, nbrs in adj.items()}


def is_connected(fp: Floorplan) -> bool:
    """BFS connectivity of the door graph."""
    if not fp.rooms:
        return False
    adj = door_adjacency(fp)
    start = fp.rooms[0].id
    seen = {start}
    frontier = [start]
    while frontier:
        nxt = []
        for rid in frontier:
            for nbr in adj[rid]:
                if nbr not in seen:
                    seen.add(nbr)
                    nxt.append(nbr)
        frontier = nxt
    return len(seen) == len(fp.rooms)


# --- synthetic corpus ---

@dataclass(frozen=True)
class CorpusProfile:
    """Family configuration for synthetic floorplans.

    room_count bounds are inclusive; type_weights follows the ROOM_TYPES
    order; topology is a random spanning tree plus extra_edges additional
    door edges.
    """

    name: str = "synth"
    room_count: tuple[int, int] = (3, 9)
    type_weights: tuple[float, ...] = tuple(1.0 for _ in ROOM_TYPES)
    extra_edges: int = 1
    side_range: tuple[float, float] = (2.0, 8.0)
    spread: float = 30.0

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "room_count": list(self.room_count),
            "type_weights": list(self.type_weights),
            "extra_edges": self.extra_edges,
            "side_range": list(self.side_range),
            "spread": self.spread,
        }

    @staticmethod
    def from_json(doc: dict) -> "CorpusProfile":
        return CorpusProfile(
            name=doc.get("name", "synth"),
            room_count=tuple(doc.get("room_count", (3, 9))),
            type_weights=tuple(doc.get("type_weights",
                                       tuple(1.0 for _ in ROOM_TYPES))),
            extra_edges=int(doc.get("extra_edges", 1)),
            side_range=tuple(doc.get("side_range", (2.0, 8.0))),
            spread=float(doc.get("spread", 30.0)),
        )


def _weighted_choice(rng: np.random.Generator, weights: np.ndarray) -> int:
    total = float(weights.sum())
    u = rng.random() * total
    acc = 0.0
    for i, w in enumerate(weights):
        acc += float(w)
        if u < acc:
            return i
    return len(weights) - 1


def _synth_one(plan_id: str, rng: np.random.Generator, profile: CorpusProfile) -> Floorplan:
    lo, hi = profile.room_count
    n_rooms = int(rng.integers(lo, hi + 1))
    weights = np.asarray(profile.type_weights, dtype=np.float64)
    side_lo, side_hi = profile.side_range

    rooms = []
    for rid in range(n_rooms):
        rtype = ROOM_TYPES[_weighted_choice(rng, weights)]
        w = side_lo + rng.random() * (side_hi - side_lo)
        h = side_lo + rng.random() * (side_hi - side_lo)
        cx = rng.random() * profile.spread
        cy = rng.random() * profile.spread
        bbox = (cx - w / 2.0, cy - h / 2.0, cx + w / 2.0, cy + h / 2.0)
        rooms.append(Room(id=rid, room_type=rtype, bbox=bbox, is_exit=False))

    exit_idx = int(rng.integers(0, n_rooms))
    rooms[exit_idx] = Room(
        id=rooms[exit_idx].id,
        room_type=rooms[exit_idx].room_type,
        bbox=rooms[exit_idx].bbox,
        is_exit=True,
    )

    # Random recursive tree keeps the door graph connected.
    doors = []
    pairs: set[tuple[int, int]] = set()
    for rid in range(1, n_rooms):
        parent = int(rng.integers(0, rid))
        doors.append(Door(a=parent, b=rid))
        pairs.add((parent, rid))
    capacity = n_rooms * (n_rooms - 1) // 2 - (n_rooms - 1)
    extra = min(profile.extra_edges, capacity)
    candidates = [
        (a, b)
        for a in range(n_rooms)
        for b in range(a + 1, n_rooms)
        if (a, b) not in pairs
    ]
    for _ in range(extra):
        pick = int(rng.integers(0, len(candidates)))
        a, b = candidates.pop(pick)
        doors.append(Door(a=a, b=b))

    return validate_floorplan(Floorplan(id=plan_id, rooms=tuple(rooms), doors=tuple(doors)))


def synth_corpus(n: int, seed: int, profile: CorpusProfile) -> list[Floorplan]:
    """Generate n connected synthetic floorplans, deterministic in (n, seed, profile)."""
    if n < 1:
        raise InfeasibleProfile("corpus size must be at least 1")
    lo, hi = profile.room_count
    if lo < 1 or hi < lo:
        raise InfeasibleProfile(f"bad room-count range {profile.room_count}")
    if profile.extra_edges < 0:
        raise InfeasibleProfile("extra_edges must be nonnegative")
    capacity = hi * (hi - 1) // 2 - (hi - 1)
    if profile.extra_edges > capacity:
        raise InfeasibleProfile(
            f"{profile.extra_edges} extra edges exceed capacity {capacity} of a {hi}-room plan"
        )
    root = np.random.SeedSequence(seed)
    plans = []
    for i in range(n):
        rng = np.random.Generator(np.random.PCG64(root.spawn(1)[0]))
        plans.append(_synth_one(f"{profile.name}-{seed}-{i:04d}", rng, profile))
    return plans


def write_corpus(path, plans: Iterable[Floorplan]) -> None:
    with open(path, "wb") as fh:
        for fp in plans:
            fh.write(serialize_floorplan(fp))
            fh.write(b"\n")


def read_corpus(path) -> list[Floorplan]:
    plans = []
    with open(path, "rb") as fh:
        for line in fh:
            line = line.strip()
            if line:
                plans.append(parse_floorplan(line))
    return plans
