"""Service lifecycle and the deterministic mock trajectory planner.

A ServiceInstance is a schedulable periodic task with a CPU-cost meter; the
same abstraction backs the vehicle-local planner and its remote counterpart.
The planner is a constant-speed polyline follower: deliberately trivial, so
runs are reproducible and the offloading machinery around it stays the part
under test. It accepts an environment model but ignores it.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass

from .errors import DomainError, ValidationError
from .geo import Point2, Route, euclid
from .messages import Track, TrajectoryPoint, VehicleState, check_service_id

# Distance over which the planner ramps speed down to zero at the route end.
_STOP_RAMP_M = 10.0

# Per-route polyline geometry (xs, ys, cumulative arc length), cached because
# planners run at tens of hertz over routes with thousands of waypoints. The
# route object is held strongly so its id stays valid for the cache's lifetime.
_POLYLINES: dict[int, tuple[Route, list[float], list[float], list[float]]] = {}


def _polyline(route: Route) -> tuple[list[float], list[float], list[float]]:
    entry = _POLYLINES.get(id(route))
    if entry is not None and entry[0] is route:
        return entry[1], entry[2], entry[3]
    xs = [p.x for p in route.waypoints]
    ys = [p.y for p in route.waypoints]
    cum = [0.0]
    for i in range(1, len(xs)):
        cum.append(cum[-1] + euclid(route.waypoints[i - 1], route.waypoints[i]))
    if len(_POLYLINES) > 64:
        _POLYLINES.clear()
    _POLYLINES[id(route)] = (route, xs, ys, cum)
    return xs, ys, cum


@dataclass(frozen=True)
class ServiceSpec:
    id: str
    period: int                  # ms between outputs
    cpu_cost_active: float       # percent of one core while running
    cpu_cost_deactivated: float  # percent of one core while stopped

    def __post_init__(self):
        check_service_id(self.id)
        if self.period <= 0:
            raise ValidationError(f"service period must be positive, got {self.period}")
        if self.cpu_cost_active < 0 or self.cpu_cost_deactivated < 0:
            raise ValidationError("cpu costs must be non-negative")


@dataclass(frozen=True)
class PlannerInput:
    ego: VehicleState
    env: tuple[Track, ...]
    route: Route


def plan(inp: PlannerInput, horizon: int, step: int) -> tuple[TrajectoryPoint, ...]:
    """Constant-speed route-following trajectory.

    Emits one point per step up to horizon, advancing ego.speed * dt of arc
    length along the route polyline starting from the waypoint nearest to the
    ego position. Within the final 10 m of the route the speed ramps linearly
    down to zero. The environment model is accepted but unused.
    """
    if step <= 0:
        raise DomainError(f"step must be positive, got {step}")
    if horizon < step:
        raise DomainError(f"horizon must be at least one step, got {horizon} < {step}")
    xs, ys, cum = _polyline(inp.route)
    total = cum[-1]
    px, py = inp.ego.position.x, inp.ego.position.y
    best, best_d = 0, float("inf")
    for i in range(len(xs)):
        dx = xs[i] - px
        dy = ys[i] - py
        d = dx * dx + dy * dy
        if d < best_d:
            best, best_d = i, d
    s = cum[best]
    points = []
    for k in range(1, horizon // step + 1):
        remaining = total - s
        speed = inp.ego.speed * min(1.0, remaining / _STOP_RAMP_M)
        s = min(total, s + speed * (step / 1000.0))
        points.append(TrajectoryPoint(t=inp.ego.timestamp + k * step, position=_point_at(xs, ys, cum, s), speed=speed))
    return tuple(points)


def _point_at(xs, ys, cum, s: float) -> Point2:
    if s <= 0.0:
        return Point2(xs[0], ys[0])
    i = bisect.bisect_left(cum, s)
    if i >= len(cum):
        return Point2(xs[-1], ys[-1])
    seg = cum[i] - cum[i - 1]
    while seg == 0.0 and i < len(cum) - 1:
        i += 1
        seg = cum[i] - cum[i - 1]
    if seg == 0.0:
        return Point2(xs[i], ys[i])
    f = (s - cum[i - 1]) / seg
    return Point2(xs[i - 1] + f * (xs[i] - xs[i - 1]), ys[i - 1] + f * (ys[i] - ys[i - 1]))


class ServiceInstance:
    """Periodic task handle with activation state and CPU-cost accounting."""

    def __init__(self, spec: ServiceSpec, now: int):
        self.spec = spec
        self.active = False
        self.next_due: int | None = None
        self._meter_at = now
        self.active_ms = 0
        self.inactive_ms = 0

    def _meter(self, now: int) -> None:
        elapsed = max(0, now - self._meter_at)
        if self.active:
            self.active_ms += elapsed
        else:
            self.inactive_ms += elapsed
        self._meter_at = now

    def activate(self, now: int) -> None:
        """Schedule the instance; first output due one period from now. Idempotent."""
        if self.active:
            return
        self._meter(now)
        self.active = True
        self.next_due = now + self.spec.period

    def deactivate(self, now: int) -> None:
        """Stop producing outputs. Idempotent."""
        if not self.active:
            return
        self._meter(now)
        self.active = False
        self.next_due = None

    def due_times(self, now: int) -> list[int]:
        """Pop every due time <= now, advancing the schedule (one per elapsed period)."""
        out = []
        while self.active and self.next_due <= now:
            out.append(self.next_due)
            self.next_due += self.spec.period
        return out

    def cpu_seconds(self, now: int) -> tuple[float, float]:
        """(active, deactivated) seconds metered up to now."""
        self._meter(now)
        return self.active_ms / 1000.0, self.inactive_ms / 1000.0

    def cpu_usage(self, now: int) -> float:
        """Integrated cost in percent-core-seconds up to now."""
        act, inact = self.cpu_seconds(now)
        return act * self.spec.cpu_cost_active + inact * self.spec.cpu_cost_deactivated


def activate(spec: ServiceSpec, now: int) -> ServiceInstance:
    """Create a service instance and schedule it."""
    inst = ServiceInstance(spec, now)
    inst.activate(now)
    return inst


def deactivate(handle: ServiceInstance | None, now: int) -> None:
    """Stop an instance; unknown (None) handles are a no-op."""
    if handle is not None:
        handle.deactivate(now)
