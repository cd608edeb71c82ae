"""Message types and the line-delimited JSON wire codec.

Six message kinds flow between requester and provider: Cam, Offer, Request,
Cpm, Mcm and Termination. An Envelope is one typed, timestamped message; on
the wire it is a single JSON object per line with the top-level keys
kind, src, dst, sent_at and payload. Cam envelopes are broadcast
(dst = "broadcast"); every other kind is unicast to an integer station id.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass

from .errors import ValidationError
from .geo import Point2, Route

BROADCAST = "broadcast"

KIND_CAM = "Cam"
KIND_OFFER = "Offer"
KIND_REQUEST = "Request"
KIND_CPM = "Cpm"
KIND_MCM = "Mcm"
KIND_TERMINATION = "Termination"

REASON_QOS_LATENCY = "QosLatency"
REASON_QOS_INTER_ARRIVAL = "QosInterArrival"
REASON_LEFT_AREA = "LeftArea"
REASON_CAM_STALE = "CamStale"
REASON_SHUTDOWN = "Shutdown"

TERMINATION_REASONS = frozenset(
    {REASON_QOS_LATENCY, REASON_QOS_INTER_ARRIVAL, REASON_LEFT_AREA, REASON_CAM_STALE, REASON_SHUTDOWN}
)

_SERVICE_ID_RE = re.compile(r"^[a-z0-9-]+$")
_TWO_PI = 2.0 * math.pi


class ParseError(ValueError):
    """The byte sequence is not a syntactically valid encoded envelope."""

    def __init__(self, message: str, offset: int = 0):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


class SchemaError(ValidationError):
    """Syntactically valid input that violates a message invariant."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


def check_service_id(name: str) -> str:
    if not isinstance(name, str) or not _SERVICE_ID_RE.match(name):
        raise SchemaError("service", f"service id must be lowercase alphanumeric/hyphen, got {name!r}")
    return name


@dataclass(frozen=True)
class VehicleState:
    """Position/speed/heading beacon of one station; the Cam payload."""

    station: int
    timestamp: int  # ms since scenario epoch
    position: Point2
    speed: float    # m/s
    heading: float  # rad in [0, 2*pi)

    def __post_init__(self):
        if self.speed < 0:
            raise SchemaError("speed", f"must be >= 0, got {self.speed}")
        if not 0.0 <= self.heading < _TWO_PI:
            raise SchemaError("heading", f"must be in [0, 2*pi), got {self.heading}")


@dataclass(frozen=True)
class OfferBody:
    provider_position: Point2
    services: tuple[str, ...]
    map_ids: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "services", tuple(self.services))
        object.__setattr__(self, "map_ids", tuple(self.map_ids))
        if not self.services:
            raise SchemaError("services", "offer must list at least one service")
        for s in self.services:
            check_service_id(s)


@dataclass(frozen=True)
class RequestBody:
    services: tuple[str, ...]
    planned_route: Route
    map_id: str
    current_speed: float

    def __post_init__(self):
        object.__setattr__(self, "services", tuple(self.services))
        if not self.services:
            raise SchemaError("services", "request must list at least one service")
        for s in self.services:
            check_service_id(s)
        if self.current_speed < 0:
            raise SchemaError("current_speed", f"must be >= 0, got {self.current_speed}")


@dataclass(frozen=True)
class Track:
    """One tracked object of a station's environment model."""

    object_id: int
    position: Point2
    speed: float
    heading: float


@dataclass(frozen=True)
class CpmBody:
    tracks: tuple[Track, ...]

    def __post_init__(self):
        object.__setattr__(self, "tracks", tuple(self.tracks))
        ids = [t.object_id for t in self.tracks]
        if len(ids) != len(set(ids)):
            raise SchemaError("tracks", "object ids must be unique within one message")


@dataclass(frozen=True)
class TrajectoryPoint:
    t: int  # ms, absolute
    position: Point2
    speed: float

    def __post_init__(self):
        if self.speed < 0:
            raise SchemaError("speed", f"must be >= 0, got {self.speed}")


@dataclass(frozen=True)
class McmBody:
    service: str
    creation_time: int  # ms
    trajectory: tuple[TrajectoryPoint, ...]

    def __post_init__(self):
        check_service_id(self.service)
        object.__setattr__(self, "trajectory", tuple(self.trajectory))
        if not self.trajectory:
            raise SchemaError("trajectory", "trajectory must be non-empty")
        for a, b in zip(self.trajectory, self.trajectory[1:]):
            if b.t <= a.t:
                raise SchemaError("trajectory", "trajectory timestamps must be strictly increasing")


@dataclass(frozen=True)
class TerminationBody:
    service: str
    reason: str

    def __post_init__(self):
        check_service_id(self.service)
        if self.reason not in TERMINATION_REASONS:
            raise SchemaError("reason", f"unknown termination reason {self.reason!r}")


_PAYLOAD_TYPES = {
    KIND_CAM: VehicleState,
    KIND_OFFER: OfferBody,
    KIND_REQUEST: RequestBody,
    KIND_CPM: CpmBody,
    KIND_MCM: McmBody,
    KIND_TERMINATION: TerminationBody,
}


@dataclass(frozen=True)
class Envelope:
    kind: str
    src: int
    dst: int | str  # station id or BROADCAST
    sent_at: int    # ms
    payload: object

    def __post_init__(self):
        expected = _PAYLOAD_TYPES.get(self.kind)
        if expected is None:
            raise SchemaError("kind", f"unknown message kind {self.kind!r}")
        if not isinstance(self.payload, expected):
            raise SchemaError("payload", f"{self.kind} payload must be {expected.__name__}")
        if self.kind == KIND_CAM:
            if self.dst != BROADCAST:
                raise SchemaError("dst", "Cam envelopes are broadcast")
        elif not isinstance(self.dst, int) or isinstance(self.dst, bool):
            raise SchemaError("dst", f"{self.kind} envelopes are unicast to a station id")


# --- encoding ---------------------------------------------------------------

def _point_obj(p: Point2) -> dict:
    return {"x": p.x, "y": p.y}


def _body_obj(kind: str, body) -> dict:
    if kind == KIND_CAM:
        return {
            "station": body.station,
            "timestamp": body.timestamp,
            "position": _point_obj(body.position),
            "speed": body.speed,
            "heading": body.heading,
        }
    if kind == KIND_OFFER:
        return {
            "provider_position": _point_obj(body.provider_position),
            "services": list(body.services),
            "map_ids": list(body.map_ids),
        }
    if kind == KIND_REQUEST:
        return {
            "services": list(body.services),
            "planned_route": {"waypoints": [_point_obj(w) for w in body.planned_route.waypoints]},
            "map_id": body.map_id,
            "current_speed": body.current_speed,
        }
    if kind == KIND_CPM:
        return {
            "tracks": [
                {"object_id": t.object_id, "position": _point_obj(t.position), "speed": t.speed, "heading": t.heading}
                for t in body.tracks
            ]
        }
    if kind == KIND_MCM:
        return {
            "service": body.service,
            "creation_time": body.creation_time,
            "trajectory": [{"t": p.t, "position": _point_obj(p.position), "speed": p.speed} for p in body.trajectory],
        }
    return {"service": body.service, "reason": body.reason}


def encode(env: Envelope) -> bytes:
    """One newline-terminated JSON line in canonical field order."""
    obj = {
        "kind": env.kind,
        "src": env.src,
        "dst": env.dst,
        "sent_at": env.sent_at,
        "payload": _body_obj(env.kind, env.payload),
    }
    return (json.dumps(obj, separators=(",", ":")) + "\n").encode("utf-8")


# --- decoding ---------------------------------------------------------------

def _require_keys(obj: dict, allowed: set[str], where: str) -> None:
    for key in obj:
        if key not in allowed:
            raise SchemaError(f"{where}.{key}" if where else key, "unknown field")
    for key in allowed:
        if key not in obj:
            raise SchemaError(f"{where}.{key}" if where else key, "missing field")


def _as_int(value, field: str) -> int:
    if not isinstance(value, int) or isinstance(value, bool):
        raise SchemaError(field, f"expected integer, got {value!r}")
    return value


def _as_float(value, field: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SchemaError(field, f"expected number, got {value!r}")
    return float(value)


def _as_str(value, field: str) -> str:
    if not isinstance(value, str):
        raise SchemaError(field, f"expected string, got {value!r}")
    return value


def _as_str_list(value, field: str) -> list[str]:
    if not isinstance(value, list):
        raise SchemaError(field, f"expected list, got {value!r}")
    return [_as_str(v, f"{field}[{i}]") for i, v in enumerate(value)]


def _as_point(value, field: str) -> Point2:
    if not isinstance(value, dict):
        raise SchemaError(field, f"expected point object, got {value!r}")
    _require_keys(value, {"x", "y"}, field)
    try:
        return Point2(_as_float(value["x"], f"{field}.x"), _as_float(value["y"], f"{field}.y"))
    except SchemaError:
        raise
    except ValidationError as exc:
        raise SchemaError(field, str(exc)) from exc


def _decode_body(kind: str, obj, where: str):
    if not isinstance(obj, dict):
        raise SchemaError(where, f"expected object, got {obj!r}")
    if kind == KIND_CAM:
        _require_keys(obj, {"station", "timestamp", "position", "speed", "heading"}, where)
        return VehicleState(
            station=_as_int(obj["station"], f"{where}.station"),
            timestamp=_as_int(obj["timestamp"], f"{where}.timestamp"),
            position=_as_point(obj["position"], f"{where}.position"),
            speed=_as_float(obj["speed"], f"{where}.speed"),
            heading=_as_float(obj["heading"], f"{where}.heading"),
        )
    if kind == KIND_OFFER:
        _require_keys(obj, {"provider_position", "services", "map_ids"}, where)
        return OfferBody(
            provider_position=_as_point(obj["provider_position"], f"{where}.provider_position"),
            services=tuple(_as_str_list(obj["services"], f"{where}.services")),
            map_ids=tuple(_as_str_list(obj["map_ids"], f"{where}.map_ids")),
        )
    if kind == KIND_REQUEST:
        _require_keys(obj, {"services", "planned_route", "map_id", "current_speed"}, where)
        route_obj = obj["planned_route"]
        if not isinstance(route_obj, dict):
            raise SchemaError(f"{where}.planned_route", "expected route object")
        _require_keys(route_obj, {"waypoints"}, f"{where}.planned_route")
        wp_list = route_obj["waypoints"]
        if not isinstance(wp_list, list):
            raise SchemaError(f"{where}.planned_route.waypoints", "expected list")
        try:
            route = Route(tuple(_as_point(w, f"{where}.planned_route.waypoints[{i}]") for i, w in enumerate(wp_list)))
        except SchemaError:
            raise
        except ValidationError as exc:
            raise SchemaError(f"{where}.planned_route.waypoints", str(exc)) from exc
        return RequestBody(
            services=tuple(_as_str_list(obj["services"], f"{where}.services")),
            planned_route=route,
            map_id=_as_str(obj["map_id"], f"{where}.map_id"),
            current_speed=_as_float(obj["current_speed"], f"{where}.current_speed"),
        )
    if kind == KIND_CPM:
        _require_keys(obj, {"tracks"}, where)
        tracks_obj = obj["tracks"]
        if not isinstance(tracks_obj, list):
            raise SchemaError(f"{where}.tracks", "expected list")
        tracks = []
        for i, t in enumerate(tracks_obj):
            tw = f"{where}.tracks[{i}]"
            if not isinstance(t, dict):
                raise SchemaError(tw, "expected track object")
            _require_keys(t, {"object_id", "position", "speed", "heading"}, tw)
            tracks.append(
                Track(
                    object_id=_as_int(t["object_id"], f"{tw}.object_id"),
                    position=_as_point(t["position"], f"{tw}.position"),
                    speed=_as_float(t["speed"], f"{tw}.speed"),
                    heading=_as_float(t["heading"], f"{tw}.heading"),
                )
            )
        return CpmBody(tracks=tuple(tracks))
    if kind == KIND_MCM:
        _require_keys(obj, {"service", "creation_time", "trajectory"}, where)
        traj_obj = obj["trajectory"]
        if not isinstance(traj_obj, list):
            raise SchemaError(f"{where}.trajectory", "expected list")
        points = []
        for i, p in enumerate(traj_obj):
            pw = f"{where}.trajectory[{i}]"
            if not isinstance(p, dict):
                raise SchemaError(pw, "expected trajectory point object")
            _require_keys(p, {"t", "position", "speed"}, pw)
            points.append(
                TrajectoryPoint(
                    t=_as_int(p["t"], f"{pw}.t"),
                    position=_as_point(p["position"], f"{pw}.position"),
                    speed=_as_float(p["speed"], f"{pw}.speed"),
                )
            )
        return McmBody(
            service=_as_str(obj["service"], f"{where}.service"),
            creation_time=_as_int(obj["creation_time"], f"{where}.creation_time"),
            trajectory=tuple(points),
        )
    # Termination
    _require_keys(obj, {"service", "reason"}, where)
    return TerminationBody(
        service=_as_str(obj["service"], f"{where}.service"),
        reason=_as_str(obj["reason"], f"{where}.reason"),
    )


def decode(data: bytes) -> Envelope:
    """Parse and fully re-validate one encoded envelope.

    Raises ParseError (with byte offset) for malformed syntax and SchemaError
    (naming the field) for well-formed input violating an invariant.
    """
    if isinstance(data, str):
        data = data.encode("utf-8")
    text = data.decode("utf-8", errors="replace")
    stripped = text[:-1] if text.endswith("\n") else text
    if "\n" in stripped:
        raise ParseError("embedded newline in envelope", stripped.index("\n"))
    try:
        obj = json.loads(stripped)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc.msg}", exc.pos) from exc
    if not isinstance(obj, dict):
        raise SchemaError("", "top level must be a JSON object")
    _require_keys(obj, {"kind", "src", "dst", "sent_at", "payload"}, "")
    kind = _as_str(obj["kind"], "kind")
    if kind not in _PAYLOAD_TYPES:
        raise SchemaError("kind", f"unknown message kind {kind!r}")
    dst = obj["dst"]
    if dst != BROADCAST:
        dst = _as_int(dst, "dst")
    return Envelope(
        kind=kind,
        src=_as_int(obj["src"], "src"),
        dst=dst,
        sent_at=_as_int(obj["sent_at"], "sent_at"),
        payload=_decode_body(kind, obj["payload"], "payload"),
    )
