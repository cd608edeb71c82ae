"""Service-oriented function offloading for connected vehicles.

Provider/requester state machines with location-based offloading decisions,
QoS-watchdog fallback, a simplified V2X message codec, and a deterministic
discrete-event simulation harness with CPU break-even accounting.
"""

from .errors import DomainError, ValidationError
from .geo import Point2, Polygon, Route, codm_accept, euclid, lodm_accept, point_in_polygon, time_in_area
from .messages import BROADCAST, Envelope, decode, encode
from .netsim import LatencyModel, Network, sample_latency
from .provider import Provider, ProviderConfig, SessionRecord
from .requester import QosProfile, Requester, RequesterConfig, qos_compliant
from .scenario import (
    CpuTable,
    MetricsReport,
    ScenarioConfig,
    VehicleConfig,
    break_even_ratio,
    cpu_usage,
    run,
    sweep,
)
from .services import PlannerInput, ServiceInstance, ServiceSpec, plan

__version__ = "0.1.0"

__all__ = [
    "BROADCAST",
    "CpuTable",
    "DomainError",
    "Envelope",
    "LatencyModel",
    "MetricsReport",
    "Network",
    "PlannerInput",
    "Point2",
    "Polygon",
    "Provider",
    "ProviderConfig",
    "QosProfile",
    "Requester",
    "RequesterConfig",
    "Route",
    "ScenarioConfig",
    "ServiceInstance",
    "ServiceSpec",
    "SessionRecord",
    "ValidationError",
    "VehicleConfig",
    "break_even_ratio",
    "codm_accept",
    "cpu_usage",
    "decode",
    "encode",
    "euclid",
    "lodm_accept",
    "plan",
    "point_in_polygon",
    "qos_compliant",
    "run",
    "sample_latency",
    "sweep",
    "time_in_area",
]
