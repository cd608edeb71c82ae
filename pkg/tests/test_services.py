import math
import random

import pytest

from sofof.errors import DomainError, ValidationError
from sofof.geo import Point2, Route
from sofof.messages import VehicleState
from sofof.services import PlannerInput, ServiceSpec, activate, deactivate, plan

STRAIGHT = Route(tuple(Point2(float(x), 0.0) for x in range(0, 101, 10)))
SPEC = ServiceSpec(id="tpl", period=100, cpu_cost_active=19.5, cpu_cost_deactivated=8.5)


def ego_at(p: Point2, speed: float, t: int = 0) -> VehicleState:
    return VehicleState(station=1, timestamp=t, position=p, speed=speed, heading=0.0)


def dist_to_polyline(p: Point2, route: Route) -> float:
    best = math.inf
    wps = route.waypoints
    for a, b in zip(wps, wps[1:]):
        vx, vy = b.x - a.x, b.y - a.y
        seg2 = vx * vx + vy * vy
        t = 0.0 if seg2 == 0 else max(0.0, min(1.0, ((p.x - a.x) * vx + (p.y - a.y) * vy) / seg2))
        best = min(best, math.hypot(p.x - (a.x + t * vx), p.y - (a.y + t * vy)))
    return best


# --- plan ------------------------------------------------------------------

def test_constant_speed_spacing():
    traj = plan(PlannerInput(ego=ego_at(Point2(0, 0), 10.0), env=(), route=STRAIGHT), horizon=1000, step=100)
    assert len(traj) == 10
    # 10 m/s over 100 ms steps: 1 m apart along the straight route
    for k, pt in enumerate(traj, start=1):
        assert pt.position.x == pytest.approx(1.0 * k)
        assert pt.position.y == 0.0
        assert pt.t == 100 * k
        assert pt.speed == 10.0


def test_stationary_ego():
    traj = plan(PlannerInput(ego=ego_at(Point2(42, 3), 0.0), env=(), route=STRAIGHT), horizon=500, step=100)
    assert all(pt.position == Point2(40.0, 0.0) and pt.speed == 0.0 for pt in traj)


def test_minimal_horizon_single_point():
    traj = plan(PlannerInput(ego=ego_at(Point2(0, 0), 10.0), env=(), route=STRAIGHT), horizon=100, step=100)
    assert len(traj) == 1


def test_speed_ramps_down_near_route_end():
    # starting at the (90,0) waypoint, the second step is inside the 10 m stop ramp
    traj = plan(PlannerInput(ego=ego_at(Point2(90, 0), 10.0), env=(), route=STRAIGHT), horizon=5000, step=100)
    speeds = [pt.speed for pt in traj]
    assert speeds[0] == 10.0
    assert speeds[1] < 10.0
    assert all(b <= a for a, b in zip(speeds, speeds[1:]))
    assert speeds[-1] < 0.5
    assert traj[-1].position.x <= 100.0


def test_env_is_ignored():
    from sofof.messages import Track

    tracks = (Track(object_id=1, position=Point2(5, 5), speed=3.0, heading=0.0),)
    with_env = plan(PlannerInput(ego=ego_at(Point2(0, 0), 10.0), env=tracks, route=STRAIGHT), 1000, 100)
    without = plan(PlannerInput(ego=ego_at(Point2(0, 0), 10.0), env=(), route=STRAIGHT), 1000, 100)
    assert with_env == without


def test_determinism_bitwise():
    inp = PlannerInput(ego=ego_at(Point2(13.7, 0.2), 8.25), env=(), route=STRAIGHT)
    a = plan(inp, 1000, 50)
    b = plan(inp, 1000, 50)
    ser = lambda traj: ";".join(f"{p.t}:{p.position.x!r},{p.position.y!r}:{p.speed!r}" for p in traj)
    assert ser(a) == ser(b)


def test_points_stay_on_polyline():
    rng = random.Random(8)
    for _ in range(100):
        wps = [Point2(0.0, 0.0)]
        for _ in range(rng.randint(1, 8)):
            last = wps[-1]
            wps.append(Point2(last.x + rng.uniform(1, 30), last.y + rng.uniform(-20, 20)))
        route = Route(tuple(wps))
        start = wps[rng.randrange(len(wps))]
        traj = plan(PlannerInput(ego=ego_at(start, rng.uniform(0, 20)), env=(), route=route), 1000, 100)
        for pt in traj:
            assert dist_to_polyline(pt.position, route) < 1e-6


def test_bad_step_and_horizon():
    inp = PlannerInput(ego=ego_at(Point2(0, 0), 10.0), env=(), route=STRAIGHT)
    with pytest.raises(DomainError):
        plan(inp, 1000, 0)
    with pytest.raises(DomainError):
        plan(inp, 50, 100)


def test_spec_validation():
    with pytest.raises(ValidationError):
        ServiceSpec(id="tpl", period=0, cpu_cost_active=1.0, cpu_cost_deactivated=0.5)
    with pytest.raises(ValidationError):
        ServiceSpec(id="tpl", period=10, cpu_cost_active=-1.0, cpu_cost_deactivated=0.5)


# --- lifecycle ------------------------------------------------------------------

def test_first_due_one_period_after_activation():
    inst = activate(SPEC, now=0)
    assert inst.due_times(99) == []
    assert inst.due_times(100) == [100]


def test_double_activation_is_idempotent():
    inst = activate(SPEC, now=0)
    inst.activate(50)
    assert inst.due_times(100) == [100]


def test_reactivation_rebases_due_time():
    inst = activate(SPEC, now=0)
    inst.deactivate(30)
    inst.activate(70)
    assert inst.due_times(100) == []
    assert inst.due_times(170) == [170]


def test_deactivate_before_first_due_produces_nothing():
    inst = activate(SPEC, now=0)
    inst.deactivate(50)
    assert inst.due_times(10_000) == []


def test_catch_up_one_output_per_elapsed_period():
    inst = activate(SPEC, now=0)
    assert inst.due_times(300) == [100, 200, 300]
    assert inst.due_times(300) == []


def test_outputs_stop_after_deactivation():
    inst = activate(SPEC, now=0)
    trace = inst.due_times(250)
    assert trace == [100, 200]
    inst.deactivate(250)
    for t in range(300, 1000, 50):
        trace += inst.due_times(t)
    assert trace == [100, 200]


def test_periodicity_count_formula():
    rng = random.Random(77)
    for _ in range(200):
        period = rng.randint(1, 50)
        spec = ServiceSpec(id="tpl", period=period, cpu_cost_active=1.0, cpu_cost_deactivated=0.0)
        t0 = rng.randint(0, 100)
        inst = activate(spec, now=t0)
        due0 = t0 + period
        b = t0 + rng.randint(0, 500)
        expected = max(0, (b - due0) // period + 1)
        assert len(inst.due_times(b)) == expected


def test_deactivate_unknown_handle_is_noop():
    deactivate(None, 0)


def test_cpu_meter_integrates_both_costs():
    inst = activate(SPEC, now=0)
    inst.deactivate(2000)        # 2 s active
    act, inact = inst.cpu_seconds(5000)  # then 3 s deactivated
    assert act == pytest.approx(2.0)
    assert inact == pytest.approx(3.0)
    assert inst.cpu_usage(5000) == pytest.approx(2.0 * 19.5 + 3.0 * 8.5)
