"""Service-provider runtime: CAM tracking, offers, admission, session management.

One Provider is a single logical actor; the hosting loop invokes its
operations sequentially. Per requester it keeps at most one non-terminated
SessionRecord. Admission uses the centralized location-based rule: the
requester's planned route must spend at least t_min seconds inside the
offloading area (at its current speed) on a known map. Termination toward the
requester is silent by design; the requester's inter-arrival watchdog turns
provider silence into a local fallback.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

from .geo import Point2, Polygon, Route, codm_accept, point_in_polygon
from .messages import (
    KIND_CAM,
    KIND_CPM,
    KIND_MCM,
    KIND_OFFER,
    KIND_REQUEST,
    KIND_TERMINATION,
    REASON_CAM_STALE,
    REASON_LEFT_AREA,
    Envelope,
    McmBody,
    OfferBody,
    RequestBody,
    TerminationBody,
    Track,
    VehicleState,
)
from .services import PlannerInput, ServiceInstance, ServiceSpec, plan

log = logging.getLogger(__name__)

OFFERED = "Offered"
ACTIVE = "Active"
TERMINATED = "Terminated"


@dataclass(frozen=True)
class ProviderConfig:
    station: int
    connection_point: Point2
    offloading_area: Polygon
    known_map_ids: frozenset[str]
    services: tuple[ServiceSpec, ...]
    t_min: float                        # s of in-area route required for admission
    cam_stale_after: int = 2000         # ms without a CAM before termination
    offer_repeat_interval: int = 1000   # ms between repeated offers to one station
    max_active_sessions: int | None = None
    plan_horizon: int = 1000            # ms, remote planner horizon
    plan_step: int = 100                # ms, remote planner step

    def __post_init__(self):
        object.__setattr__(self, "known_map_ids", frozenset(self.known_map_ids))
        object.__setattr__(self, "services", tuple(self.services))
        if self.t_min <= 0:
            raise ValueError(f"t_min must be positive, got {self.t_min}")
        if self.cam_stale_after <= 0:
            raise ValueError(f"cam_stale_after must be positive, got {self.cam_stale_after}")
        if self.offer_repeat_interval <= 0:
            raise ValueError(f"offer_repeat_interval must be positive, got {self.offer_repeat_interval}")


@dataclass
class SessionRecord:
    """State of one requester's offloaded service set on the provider."""

    requester: int
    state: str
    last_cam: VehicleState
    services: list[str] = field(default_factory=list)
    activated_at: int | None = None
    terminated_reason: str | None = None
    instances: dict[str, ServiceInstance] = field(default_factory=dict)
    planned_route: Route | None = None
    env_tracks: tuple[Track, ...] = ()


@dataclass(frozen=True)
class DecisionRecord:
    """One admission decision, kept for replay checks."""

    now: int
    requester: int
    request: RequestBody
    v_used: float
    map_known: bool
    decision: bool


class Provider:
    def __init__(self, config: ProviderConfig):
        self.config = config
        self._stations: dict[int, VehicleState] = {}
        self._last_offer: dict[int, int] = {}
        self.sessions: dict[int, SessionRecord] = {}
        self.session_history: list[SessionRecord] = []
        self.decision_log: list[DecisionRecord] = []
        self.discarded_cpm = 0
        self._offered_ids = tuple(s.id for s in config.services)
        self._specs = {s.id: s for s in config.services}

    # -- queries ------------------------------------------------------------

    def active_session_count(self) -> int:
        return sum(1 for rec in self.sessions.values() if rec.state == ACTIVE)

    def session_for(self, station: int) -> SessionRecord | None:
        return self.sessions.get(station)

    # -- message handling ---------------------------------------------------

    def handle(self, now: int, env: Envelope) -> list[Envelope]:
        """Dispatch one delivered envelope; returns envelopes to send."""
        if env.kind == KIND_CAM:
            return self.on_cam(now, env.payload)
        if env.kind == KIND_REQUEST:
            hint = self._stations.get(env.src)
            _, out = self.on_request(now, env.src, env.payload, hint.speed if hint else 0.0)
            return out
        if env.kind == KIND_CPM:
            self.on_cpm(now, env.src, env.payload)
            return []
        if env.kind == KIND_TERMINATION:
            self.on_termination(now, env.src, env.payload)
            return []
        return []

    def on_cam(self, now: int, cam: VehicleState) -> list[Envelope]:
        """Track the station and offer services to it when due."""
        station = cam.station
        known = station in self._stations
        if not known or cam.timestamp >= self._stations[station].timestamp:
            self._stations[station] = cam
        rec = self.sessions.get(station)
        if rec is not None and rec.state != TERMINATED:
            rec.last_cam = self._stations[station]
        offer_due = not known or (
            now - self._last_offer.get(station, -(1 << 62)) > self.config.offer_repeat_interval
            and (rec is None or rec.state != ACTIVE)
        )
        if not offer_due:
            return []
        self._last_offer[station] = now
        if rec is None or rec.state == TERMINATED:
            if rec is not None:
                self.session_history.append(rec)
            self.sessions[station] = SessionRecord(
                requester=station, state=OFFERED, last_cam=self._stations[station]
            )
        offer = OfferBody(
            provider_position=self.config.connection_point,
            services=self._offered_ids,
            map_ids=tuple(sorted(self.config.known_map_ids)),
        )
        return [Envelope(kind=KIND_OFFER, src=self.config.station, dst=station, sent_at=now, payload=offer)]

    def on_request(
        self, now: int, req_src: int, body: RequestBody, v_hint: float
    ) -> tuple[bool, list[Envelope]]:
        """Admit or decline one offloading request.

        The speed for the constant-velocity route analysis is the request's
        current_speed, falling back to the latest CAM speed when zero.
        """
        if req_src not in self._stations:
            log.warning("request from never-seen station %d ignored", req_src)
            return False, []
        rec = self.sessions.get(req_src)
        if rec is not None and rec.state == ACTIVE:
            log.warning("duplicate request from station %d with active session ignored", req_src)
            return False, []
        granted = [s for s in body.services if s in self._specs]
        capacity_ok = (
            self.config.max_active_sessions is None
            or self.active_session_count() < self.config.max_active_sessions
        )
        v = body.current_speed if body.current_speed > 0 else v_hint
        map_known = body.map_id in self.config.known_map_ids
        if granted and capacity_ok and v > 0:
            decision = codm_accept(body.planned_route, self.config.offloading_area, map_known, v, self.config.t_min)
        else:
            decision = False
        self.decision_log.append(
            DecisionRecord(now=now, requester=req_src, request=body, v_used=v, map_known=map_known, decision=decision)
        )
        last_cam = self._stations[req_src]
        if rec is None:
            rec = SessionRecord(requester=req_src, state=OFFERED, last_cam=last_cam)
            self.sessions[req_src] = rec
        if not decision:
            rec.state = TERMINATED
            return False, []
        rec.state = ACTIVE
        rec.activated_at = now
        rec.services = list(granted)
        rec.planned_route = body.planned_route
        rec.instances = {sid: ServiceInstance(self._specs[sid], now) for sid in granted}
        for inst in rec.instances.values():
            inst.activate(now)
        return True, []

    def on_cpm(self, now: int, src: int, body) -> None:
        """Store the requester's environment model for its active services."""
        rec = self.sessions.get(src)
        if rec is None or rec.state != ACTIVE:
            self.discarded_cpm += 1
            return
        rec.env_tracks = body.tracks

    def on_termination(self, now: int, src: int, body: TerminationBody) -> None:
        """Stop one service on the requester's demand; idempotent."""
        rec = self.sessions.get(src)
        if rec is None or rec.state != ACTIVE:
            return
        inst = rec.instances.pop(body.service, None)
        if inst is None:
            return
        inst.deactivate(now)
        rec.services = [s for s in rec.services if s != body.service]
        if not rec.instances:
            rec.state = TERMINATED
            rec.terminated_reason = body.reason

    # -- periodic work --------------------------------------------------------

    def tick(self, now: int) -> list[Envelope]:
        """Enforce CAM freshness and area residence, then run due services."""
        for rec in self.sessions.values():
            if rec.state != ACTIVE:
                continue
            if now - rec.last_cam.timestamp > self.config.cam_stale_after:
                self._terminate(rec, REASON_CAM_STALE, now)
            elif not point_in_polygon(rec.last_cam.position, self.config.offloading_area):
                self._terminate(rec, REASON_LEFT_AREA, now)
        out: list[Envelope] = []
        for rec in self.sessions.values():
            if rec.state != ACTIVE:
                continue
            for sid, inst in rec.instances.items():
                for due in inst.due_times(now):
                    body = self._plan_mcm(rec, sid, due)
                    if body is not None:
                        out.append(
                            Envelope(kind=KIND_MCM, src=self.config.station, dst=rec.requester, sent_at=now, payload=body)
                        )
        return out

    def _plan_mcm(self, rec: SessionRecord, sid: str, due: int) -> McmBody | None:
        if rec.planned_route is None:
            return None
        cam = rec.last_cam
        ego = VehicleState(
            station=cam.station, timestamp=due, position=cam.position, speed=cam.speed, heading=cam.heading
        )
        traj = plan(
            PlannerInput(ego=ego, env=rec.env_tracks, route=rec.planned_route),
            self.config.plan_horizon,
            self.config.plan_step,
        )
        return McmBody(service=sid, creation_time=due, trajectory=traj)

    def _terminate(self, rec: SessionRecord, reason: str, now: int) -> None:
        for inst in rec.instances.values():
            inst.deactivate(now)
        rec.state = TERMINATED
        rec.terminated_reason = reason
