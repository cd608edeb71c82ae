"""Service-requester runtime: offer evaluation, handover, QoS watchdog, fallback.

Per offloadable service the requester tracks one of four phases:

    Idle       local service running, no outstanding request
    Requested  request sent, waiting for first remote data (local still runs)
    Remote     remote data flowing, local service deactivated
    Fallback   QoS violated, local service reactivated

There is no accept/decline reply in the protocol: the first Mcm is the
implicit accept, and a request that stays silent past request_timeout is the
implicit decline. Because the provider also terminates silently, the
inter-arrival watchdog runs proactively on every tick, not just on arrival.
On fallback the local planner runs once immediately so the downstream
trajectory gap stays within dt_max plus one planner period.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .geo import Point2, Route, lodm_accept, remaining_route
from .messages import (
    KIND_MCM,
    KIND_OFFER,
    KIND_REQUEST,
    KIND_TERMINATION,
    REASON_QOS_INTER_ARRIVAL,
    REASON_QOS_LATENCY,
    Envelope,
    McmBody,
    OfferBody,
    RequestBody,
    TerminationBody,
    Track,
    VehicleState,
)
from .services import PlannerInput, ServiceInstance, ServiceSpec, plan

IDLE = "Idle"
REQUESTED = "Requested"
REMOTE = "Remote"
FALLBACK = "Fallback"


@dataclass(frozen=True)
class QosProfile:
    l_max: int   # ms, maximum trajectory latency
    dt_max: int  # ms, maximum inter-arrival time

    def __post_init__(self):
        if self.l_max <= 0 or self.dt_max <= 0:
            raise ValueError(f"QoS bounds must be positive, got l_max={self.l_max}, dt_max={self.dt_max}")


def qos_compliant(latency: int, gap: int, qos: QosProfile) -> bool:
    """Boundary-inclusive compliance: latency <= l_max and gap <= dt_max."""
    return latency <= qos.l_max and gap <= qos.dt_max


@dataclass(frozen=True)
class RequesterConfig:
    station: int
    r_off: float                     # m, offloading radius around the connection point
    d_min: float                     # m, minimum in-radius path length
    qos: dict[str, QosProfile]       # per offloadable service
    planned_route: Route
    map_id: str
    local_services: tuple[ServiceSpec, ...]
    request_timeout: int = 2000      # ms until a silent request counts as declined
    clock_skew_ms: int = 0           # constant receiver clock offset, for robustness tests
    lodm_skip_to_radius: bool = False
    plan_horizon: int = 1000         # ms, local planner horizon
    plan_step: int = 100             # ms, local planner step

    def __post_init__(self):
        object.__setattr__(self, "local_services", tuple(self.local_services))
        if self.r_off <= 0:
            raise ValueError(f"r_off must be positive, got {self.r_off}")
        if self.request_timeout <= 0:
            raise ValueError(f"request_timeout must be positive, got {self.request_timeout}")
        local_ids = {s.id for s in self.local_services}
        missing = set(self.qos) - local_ids
        if missing:
            raise ValueError(f"no local service configured for {sorted(missing)}")


@dataclass
class OffloadState:
    service: str
    phase: str = IDLE
    last_rx: int | None = None
    latency_log: list[tuple[int, int]] = field(default_factory=list)  # (rx_time, latency)
    requested_at: int | None = None
    provider: int | None = None
    fallback_count: int = 0


class Requester:
    """Single logical actor; the hosting loop calls operations sequentially.

    trajectory_sink(now, service, source, trajectory) receives every planned
    trajectory, local and remote, for the downstream consumer.
    """

    def __init__(self, config: RequesterConfig, trajectory_sink=None, now: int = 0):
        self.config = config
        self.states = {sid: OffloadState(service=sid) for sid in config.qos}
        self._local = {spec.id: ServiceInstance(spec, now) for spec in config.local_services}
        for inst in self._local.values():
            inst.activate(now)
        self._sink = trajectory_sink if trajectory_sink is not None else lambda *args: None
        self._ego: VehicleState | None = None
        self._env: tuple[Track, ...] = ()
        self.transitions: list[tuple[int, str, str, str, str | None]] = []
        self.arrival_log: list[tuple[int, int]] = []  # every processed Mcm: (rx_time, latency)
        self.discarded_mcm = 0

    # -- environment hooks ----------------------------------------------------

    def set_ego(self, state: VehicleState) -> None:
        self._ego = state

    def set_env(self, tracks: tuple[Track, ...]) -> None:
        self._env = tuple(tracks)

    def local_instance(self, service: str) -> ServiceInstance:
        return self._local[service]

    # -- message handling -------------------------------------------------------

    def handle(self, now: int, env: Envelope) -> list[Envelope]:
        """Dispatch one delivered envelope; returns envelopes to send."""
        if env.kind == KIND_OFFER:
            pos = self._ego.position if self._ego is not None else self.config.planned_route.waypoints[0]
            return self.on_offer(now, env.src, env.payload, pos)
        if env.kind == KIND_MCM:
            return self.on_mcm(now, env.payload)
        return []

    def on_offer(self, now: int, offer_src: int, body: OfferBody, current_pos: Point2) -> list[Envelope]:
        """Evaluate an offer with the local decision rule; request wanted services."""
        wanted = [sid for sid, st in self.states.items() if st.phase in (IDLE, FALLBACK) and sid in body.services]
        if not wanted:
            return []
        path = remaining_route(self.config.planned_route, current_pos)
        if not lodm_accept(
            path,
            current_pos,
            self.config.r_off,
            body.provider_position,
            self.config.d_min,
            self.config.lodm_skip_to_radius,
        ):
            return []
        for sid in wanted:
            self._transition(now, self.states[sid], REQUESTED)
            self.states[sid].requested_at = now
            self.states[sid].provider = offer_src
        request = RequestBody(
            services=tuple(wanted),
            planned_route=path,
            map_id=self.config.map_id,
            current_speed=self._ego.speed if self._ego is not None else 0.0,
        )
        return [Envelope(kind=KIND_REQUEST, src=self.config.station, dst=offer_src, sent_at=now, payload=request)]

    def on_mcm(self, now: int, body: McmBody) -> list[Envelope]:
        """Consume one remote trajectory, enforcing the QoS profile."""
        st = self.states.get(body.service)
        if st is None or st.phase in (IDLE, FALLBACK):
            self.discarded_mcm += 1
            return []
        latency = (now + self.config.clock_skew_ms) - body.creation_time
        qos = self.config.qos[body.service]
        if st.phase == REQUESTED:
            # first remote data: implicit accept, hand over from the local service
            self._transition(now, st, REMOTE)
            self._local[body.service].deactivate(now)
            st.last_rx = None  # fresh stream: no previous arrival to gap against
        if latency > qos.l_max:
            return [self._fallback(now, st, REASON_QOS_LATENCY)]
        if st.last_rx is not None and now - st.last_rx > qos.dt_max:
            return [self._fallback(now, st, REASON_QOS_INTER_ARRIVAL)]
        st.latency_log.append((now, latency))
        self.arrival_log.append((now, latency))
        st.last_rx = now
        self._sink(now, body.service, "remote", body.trajectory)
        return []

    # -- periodic work ----------------------------------------------------------

    def tick(self, now: int) -> list[Envelope]:
        """Expire silent requests, run the inter-arrival watchdog, run local planners."""
        out: list[Envelope] = []
        for st in self.states.values():
            if st.phase == REQUESTED and now - st.requested_at > self.config.request_timeout:
                self._transition(now, st, IDLE)  # implicit decline
                st.requested_at = None
            elif st.phase == REMOTE and now - st.last_rx > self.config.qos[st.service].dt_max:
                out.append(self._fallback(now, st, REASON_QOS_INTER_ARRIVAL))
        for sid, inst in self._local.items():
            for due in inst.due_times(now):
                self._run_local(due, sid)
        return out

    def _fallback(self, now: int, st: OffloadState, reason: str) -> Envelope:
        self._transition(now, st, FALLBACK, reason)
        st.fallback_count += 1
        inst = self._local[st.service]
        inst.activate(now)
        self._run_local(now, st.service)  # bridge the gap immediately
        return Envelope(
            kind=KIND_TERMINATION,
            src=self.config.station,
            dst=st.provider,
            sent_at=now,
            payload=TerminationBody(service=st.service, reason=reason),
        )

    def _run_local(self, now: int, service: str) -> None:
        if self._ego is None:
            return
        ego = VehicleState(
            station=self._ego.station,
            timestamp=now,
            position=self._ego.position,
            speed=self._ego.speed,
            heading=self._ego.heading,
        )
        traj = plan(
            PlannerInput(ego=ego, env=self._env, route=self.config.planned_route),
            self.config.plan_horizon,
            self.config.plan_step,
        )
        self._sink(now, service, "local", traj)

    def _transition(self, now: int, st: OffloadState, new_phase: str, reason: str | None = None) -> None:
        self.transitions.append((now, st.service, st.phase, new_phase, reason))
        st.phase = new_phase
