"""Scenario configuration loading and strict validation.

The config is one TOML document whose keys mirror the scenario dataclasses
(requester fields are flattened into the vehicle tables). Every key is
checked: unknown keys are errors, so typos never pass silently.
"""

from __future__ import annotations

from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .geo import Point2, Polygon, Route
from .netsim import LatencyModel
from .provider import ProviderConfig
from .requester import QosProfile, RequesterConfig
from .scenario import CpuTable, ScenarioConfig, VehicleConfig
from .services import ServiceSpec

_REQUIRED = object()


class ConfigError(ValueError):
    def __init__(self, message: str, key: str | None = None):
        super().__init__(message)
        self.key = key


class _Table:
    """One TOML table with consumption tracking; leftovers are unknown keys."""

    def __init__(self, data, where: str):
        if not isinstance(data, dict):
            raise ConfigError(f"'{where}' must be a table", key=where)
        self._data = dict(data)
        self._where = where

    def _key(self, name: str) -> str:
        return f"{self._where}.{name}" if self._where else name

    def take(self, name: str, default=_REQUIRED):
        if name in self._data:
            return self._data.pop(name)
        if default is _REQUIRED:
            raise ConfigError(f"missing key '{self._key(name)}'", key=self._key(name))
        return default

    def take_int(self, name: str, default=_REQUIRED) -> int:
        value = self.take(name, default)
        if value is default and default is not _REQUIRED:
            return value
        if not isinstance(value, int) or isinstance(value, bool):
            raise ConfigError(f"'{self._key(name)}' must be an integer, got {value!r}", key=self._key(name))
        return value

    def take_float(self, name: str, default=_REQUIRED) -> float:
        value = self.take(name, default)
        if value is default and default is not _REQUIRED:
            return value
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"'{self._key(name)}' must be a number, got {value!r}", key=self._key(name))
        return float(value)

    def take_str(self, name: str, default=_REQUIRED) -> str:
        value = self.take(name, default)
        if value is default and default is not _REQUIRED:
            return value
        if not isinstance(value, str):
            raise ConfigError(f"'{self._key(name)}' must be a string, got {value!r}", key=self._key(name))
        return value

    def take_bool(self, name: str, default=_REQUIRED) -> bool:
        value = self.take(name, default)
        if value is default and default is not _REQUIRED:
            return value
        if not isinstance(value, bool):
            raise ConfigError(f"'{self._key(name)}' must be a boolean, got {value!r}", key=self._key(name))
        return value

    def take_list(self, name: str, default=_REQUIRED) -> list:
        value = self.take(name, default)
        if value is default and default is not _REQUIRED:
            return value
        if not isinstance(value, list):
            raise ConfigError(f"'{self._key(name)}' must be a list, got {value!r}", key=self._key(name))
        return value

    def take_table(self, name: str, default=_REQUIRED) -> "_Table | None":
        value = self.take(name, default)
        if value is default and default is not _REQUIRED:
            return None
        return _Table(value, self._key(name))

    def keys(self) -> list[str]:
        return list(self._data)

    def finish(self) -> None:
        if self._data:
            key = self._key(sorted(self._data)[0])
            raise ConfigError(f"unknown key '{key}'", key=key)


def _as_point(value, key: str) -> Point2:
    if not isinstance(value, list) or len(value) != 2:
        raise ConfigError(f"'{key}' must be a [x, y] pair", key=key)
    x, y = value
    for v in (x, y):
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigError(f"'{key}' coordinates must be numbers", key=key)
    return Point2(float(x), float(y))


def _as_points(value, key: str) -> tuple[Point2, ...]:
    if not isinstance(value, list):
        raise ConfigError(f"'{key}' must be a list of [x, y] pairs", key=key)
    return tuple(_as_point(p, f"{key}[{i}]") for i, p in enumerate(value))


def _service_spec(tbl: _Table) -> ServiceSpec:
    spec = ServiceSpec(
        id=tbl.take_str("id"),
        period=tbl.take_int("period"),
        cpu_cost_active=tbl.take_float("cpu_cost_active"),
        cpu_cost_deactivated=tbl.take_float("cpu_cost_deactivated"),
    )
    tbl.finish()
    return spec


def _provider(tbl: _Table) -> ProviderConfig:
    services = tbl.take_list("services")
    specs = tuple(_service_spec(_Table(s, f"provider.services[{i}]")) for i, s in enumerate(services))
    map_ids = tbl.take_list("known_map_ids")
    for i, m in enumerate(map_ids):
        if not isinstance(m, str):
            raise ConfigError(f"'provider.known_map_ids[{i}]' must be a string", key="provider.known_map_ids")
    cfg = ProviderConfig(
        station=tbl.take_int("station"),
        connection_point=_as_point(tbl.take("connection_point"), "provider.connection_point"),
        offloading_area=Polygon(_as_points(tbl.take("offloading_area"), "provider.offloading_area")),
        known_map_ids=frozenset(map_ids),
        services=specs,
        t_min=tbl.take_float("t_min"),
        cam_stale_after=tbl.take_int("cam_stale_after", 2000),
        offer_repeat_interval=tbl.take_int("offer_repeat_interval", 1000),
        max_active_sessions=tbl.take_int("max_active_sessions", None),
        plan_horizon=tbl.take_int("plan_horizon", 1000),
        plan_step=tbl.take_int("plan_step", 100),
    )
    tbl.finish()
    return cfg


def _qos_map(tbl: _Table | None, where: str) -> dict[str, QosProfile]:
    if tbl is None:
        raise ConfigError(f"missing key '{where}'", key=where)
    out = {}
    for sid in tbl.keys():
        entry = tbl.take_table(sid)
        out[sid] = QosProfile(l_max=entry.take_int("l_max"), dt_max=entry.take_int("dt_max"))
        entry.finish()
    tbl.finish()
    return out


def _vehicle(tbl: _Table, index: int) -> VehicleConfig:
    where = f"vehicles[{index}]"
    route = Route(_as_points(tbl.take("route"), f"{where}.route"))
    services = tbl.take_list("services")
    specs = tuple(_service_spec(_Table(s, f"{where}.services[{i}]")) for i, s in enumerate(services))
    qos = _qos_map(tbl.take_table("qos", None), f"{where}.qos")
    requester = RequesterConfig(
        station=tbl.take_int("station"),
        r_off=tbl.take_float("r_off"),
        d_min=tbl.take_float("d_min"),
        qos=qos,
        planned_route=route,
        map_id=tbl.take_str("map_id"),
        local_services=specs,
        request_timeout=tbl.take_int("request_timeout", 2000),
        clock_skew_ms=tbl.take_int("clock_skew_ms", 0),
        lodm_skip_to_radius=tbl.take_bool("lodm_skip_to_radius", False),
        plan_horizon=tbl.take_int("plan_horizon", 1000),
        plan_step=tbl.take_int("plan_step", 100),
    )
    vc = VehicleConfig(
        requester=requester,
        route=route,
        spawn_offset_m=tbl.take_float("spawn_offset_m", 0.0),
        speed_mps=tbl.take_float("speed_mps", 10.0),
        cam_period_ms=tbl.take_int("cam_period_ms", 100),
        cpm_period_ms=tbl.take_int("cpm_period_ms", 100),
    )
    tbl.finish()
    return vc


def _latency(tbl: _Table | None) -> LatencyModel:
    if tbl is None:
        return LatencyModel()
    model = LatencyModel(
        base_mean=tbl.take_float("base_mean", 10.54),
        base_std=tbl.take_float("base_std", 9.83),
        per_session_mean=tbl.take_float("per_session_mean", 2.0),
        per_session_std=tbl.take_float("per_session_std", 3.0),
        drop_prob=tbl.take_float("drop_prob", 0.0),
    )
    tbl.finish()
    return model


def _cpu_table(tbl: _Table) -> CpuTable:
    table = CpuTable(
        tpl_active=tbl.take_float("TPLa"),
        tpl_deactivated=tbl.take_float("TPLd"),
        sofof_sr=tbl.take_float("SOFOF_SR"),
    )
    tbl.finish()
    return table


def parse_config(doc: dict) -> ScenarioConfig:
    root = _Table(doc, "")
    seed = root.take_int("seed")
    duration = root.take_int("duration", 300_000)  # 5 simulated minutes
    tick = root.take_int("tick", 10)
    fifo = root.take_bool("fifo", False)
    provider = _provider(root.take_table("provider"))
    vehicles_raw = root.take_list("vehicles")
    vehicles = tuple(_vehicle(_Table(v, f"vehicles[{i}]"), i) for i, v in enumerate(vehicles_raw))
    latency = _latency(root.take_table("latency", None))
    cpu = _cpu_table(root.take_table("cpu_table"))
    root.finish()
    try:
        return ScenarioConfig(
            seed=seed,
            duration=duration,
            provider=provider,
            vehicles=vehicles,
            latency=latency,
            cpu_table=cpu,
            tick=tick,
            fifo=fifo,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path: str | Path) -> ScenarioConfig:
    """Parse and validate a scenario config file."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    try:
        return parse_config(doc)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
