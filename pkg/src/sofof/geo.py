"""Planar geometry and the two location-based offloading decision rules.

All coordinates live in one local Cartesian frame, in meters. Speeds are in
meters per second, times in seconds. Everything here is a pure function over
immutable inputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import DomainError, ValidationError

# Tolerance for classifying a point as lying on a polygon edge.
_EDGE_EPS = 1e-9


@dataclass(frozen=True)
class Point2:
    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValidationError(f"coordinates must be finite, got ({self.x}, {self.y})")


@dataclass(frozen=True)
class Polygon:
    """Simple polygon given by its vertices in order; the ring is implicitly closed."""

    vertices: tuple[Point2, ...]

    def __post_init__(self):
        object.__setattr__(self, "vertices", tuple(self.vertices))
        if len(self.vertices) < 3:
            raise ValidationError("polygon needs at least 3 vertices")
        for i, a in enumerate(self.vertices):
            b = self.vertices[(i + 1) % len(self.vertices)]
            if a.x == b.x and a.y == b.y:
                raise ValidationError(f"consecutive polygon vertices {i} and {(i + 1) % len(self.vertices)} coincide")


@dataclass(frozen=True)
class Route:
    """Ordered waypoints of a planned path. Zero-length segments are allowed."""

    waypoints: tuple[Point2, ...]

    def __post_init__(self):
        object.__setattr__(self, "waypoints", tuple(self.waypoints))
        if not self.waypoints:
            raise ValidationError("route needs at least one waypoint")


def euclid(a: Point2, b: Point2) -> float:
    """Euclidean distance between two points in meters."""
    return math.hypot(a.x - b.x, a.y - b.y)


def _on_segment(p: Point2, a: Point2, b: Point2) -> bool:
    ax, ay = b.x - a.x, b.y - a.y
    px, py = p.x - a.x, p.y - a.y
    seg = math.hypot(ax, ay)
    cross = ax * py - ay * px
    if abs(cross) > _EDGE_EPS * max(seg, 1.0):
        return False
    dot = px * ax + py * ay
    return -_EDGE_EPS <= dot <= seg * seg + _EDGE_EPS


def point_in_polygon(p: Point2, poly: Polygon) -> bool:
    """Ray-casting containment test; points on the boundary count as inside.

    The fail-open boundary convention is deliberate: admitting a borderline
    vehicle is harmless because the QoS watchdog guards the service either way,
    and it makes the edge case deterministic.
    """
    verts = poly.vertices
    inside = False
    j = len(verts) - 1
    for i in range(len(verts)):
        a, b = verts[j], verts[i]
        if _on_segment(p, a, b):
            return True
        if (a.y > p.y) != (b.y > p.y):
            x_cross = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y)
            if p.x < x_cross:
                inside = not inside
        j = i
    return inside


def time_in_area(route: Route, poly: Polygon, v_c: float) -> float:
    """Seconds the route's leading in-area stretch takes at constant speed v_c.

    Sums segment lengths over the maximal prefix of waypoints inside the
    polygon and divides once by v_c. A route whose first waypoint is already
    outside (or a single-waypoint route) yields 0.
    """
    if v_c <= 0 or not math.isfinite(v_c):
        raise DomainError(f"constant speed must be positive, got {v_c}")
    wps = route.waypoints
    if not point_in_polygon(wps[0], poly):
        return 0.0
    length = 0.0
    prev = wps[0]
    for wp in wps[1:]:
        if not point_in_polygon(wp, poly):
            break
        length += euclid(prev, wp)
        prev = wp
    return length / v_c


def codm_accept(route: Route, poly: Polygon, map_id_known: bool, v_c: float, t_min: float) -> bool:
    """Provider-side decision: known map and at least t_min seconds inside the area."""
    if v_c <= 0 or not math.isfinite(v_c):
        raise DomainError(f"constant speed must be positive, got {v_c}")
    return bool(map_id_known) and time_in_area(route, poly, v_c) >= t_min


def lodm_distance(
    path: Route,
    pos_last: Point2,
    r_off: float,
    pos_sp: Point2,
    d_min: float,
    skip_to_radius: bool = False,
) -> tuple[bool, float]:
    """Requester-side decision with the accumulated distance it was based on.

    Walks the path while the current waypoint stays within r_off of the
    provider connection point, accumulating the distance travelled from the
    previous position; accepts as soon as more than d_min has been covered.
    Leaving the radius or exhausting the path declines. (Both inequalities
    are strict.)

    A path that starts outside r_off is declined even if it re-enters later;
    skip_to_radius=True instead fast-forwards to the first in-radius waypoint,
    rebasing pos_last to its predecessor.
    """
    if r_off <= 0:
        raise DomainError(f"offloading radius must be positive, got {r_off}")
    if d_min < 0:
        raise DomainError(f"minimum distance must be non-negative, got {d_min}")
    wps = path.waypoints
    start = 0
    if skip_to_radius:
        while start < len(wps) and euclid(wps[start], pos_sp) >= r_off:
            start += 1
        if start >= len(wps):
            return False, 0.0
        if start > 0:
            pos_last = wps[start - 1]
    d_passed = 0.0
    last = pos_last
    for curr in wps[start:]:
        if euclid(curr, pos_sp) >= r_off:
            return False, d_passed
        d_passed += euclid(curr, last)
        if d_passed > d_min:
            return True, d_passed
        last = curr
    return False, d_passed


def lodm_accept(
    path: Route,
    pos_last: Point2,
    r_off: float,
    pos_sp: Point2,
    d_min: float,
    skip_to_radius: bool = False,
) -> bool:
    """Boolean form of the local offloading decision."""
    return lodm_distance(path, pos_last, r_off, pos_sp, d_min, skip_to_radius)[0]


def nearest_waypoint_index(route: Route, pos: Point2) -> int:
    """Index of the waypoint closest to pos (first index on ties)."""
    best, best_d = 0, math.inf
    for i, wp in enumerate(route.waypoints):
        d = euclid(wp, pos)
        if d < best_d:
            best, best_d = i, d
    return best


def remaining_route(route: Route, pos: Point2) -> Route:
    """Suffix of the route from the waypoint nearest to pos onward."""
    return Route(route.waypoints[nearest_waypoint_index(route, pos):])
