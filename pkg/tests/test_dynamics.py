import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from billiards.dynamics import (
    BallState,
    CornerHit,
    LeakedBall,
    TangencyError,
    advance,
    check_trajectory,
    next_collision,
    positions_at,
    read_trajectory_csv,
    reflect,
    resample_path,
    simulate,
    trajectory_to_csv,
)
from billiards.geometry import Table, contains, make_sinai, make_square, make_stadium
from oracles import march_bounces, square_position

SQRT_HALF = math.sqrt(0.5)
SQUARE = make_square(1.0)
SINAI = make_sinai()
STADIUM = make_stadium(2.0, 1.0)

GENERIC = {
    "square": (SQUARE, BallState.from_angle((0.2, 0.3), 1.0)),
    "sinai": (SINAI, BallState.from_angle((0.1, 0.27), 0.9)),
    "stadium": (STADIUM, BallState.from_angle((0.1, 0.2), 0.7)),
}


@pytest.mark.parametrize("d, n, expected", [
    ((1.0, 0.0), (-1.0, 0.0), (-1.0, 0.0)),
    ((SQRT_HALF, SQRT_HALF), (0.0, -1.0), (SQRT_HALF, -SQRT_HALF)),
    ((1.0, 0.0), (-SQRT_HALF, -SQRT_HALF), (0.0, -1.0)),
])
def test_reflect_examples(d, n, expected):
    out = reflect(d, n)
    assert out == pytest.approx(expected, abs=1e-15)
    assert abs(math.hypot(*out) - 1) < 1e-15
    assert out[0] * n[0] + out[1] * n[1] > 0


@pytest.mark.parametrize("d", [(0.0, 1.0), (1.0, 0.0)])
def test_reflect_rejects_tangential_and_outgoing(d):
    with pytest.raises(TangencyError):
        reflect(d, (1.0, 0.0))


@settings(max_examples=200)
@given(a=st.floats(0, 2 * math.pi), b=st.floats(0, 2 * math.pi))
def test_reflect_properties(a, b):
    d = (math.cos(a), math.sin(a))
    n = (math.cos(b), math.sin(b))
    dn = d[0] * n[0] + d[1] * n[1]
    if dn > -1e-6:
        return
    out = reflect(d, n)
    assert abs(math.hypot(*out) - 1) < 1e-12
    assert out[0] * n[0] + out[1] * n[1] == pytest.approx(-dn, abs=1e-12)
    # tangential component preserved
    assert out[0] * n[1] - out[1] * n[0] == pytest.approx(d[0] * n[1] - d[1] * n[0], abs=1e-12)


def test_next_collision_examples():
    hit = next_collision(SQUARE, BallState((0.25, 0.5), (SQRT_HALF, SQRT_HALF)))
    assert hit.wall_id == 2
    assert hit.point == pytest.approx((0.75, 1.0), abs=1e-15)

    with pytest.raises(CornerHit) as info:
        next_collision(SQUARE, BallState((0.25, 0.25), (SQRT_HALF, SQRT_HALF)))
    assert info.value.point == pytest.approx((1.0, 1.0))

    hit = next_collision(SINAI, BallState((0.1, 0.5), (1.0, 0.0)))
    assert hit.wall_id == 4
    assert hit.point == pytest.approx((0.3, 0.5), abs=1e-15)


def test_leaked_ball_on_open_table():
    open_table = Table(SQUARE.walls[:3], SQUARE.bounding_box)
    with pytest.raises(LeakedBall):
        next_collision(open_table, BallState((0.5, 0.5), (-1.0, 0.0)))


def test_simulate_zero_bounces():
    traj = simulate(SQUARE, BallState((0.4, 0.6), (1.0, 0.0)), 0)
    assert traj.events == ()
    assert traj.final_state == traj.initial


def test_period_six_orbit():
    # unfolding: slope (1,2) closes after 2*1 + 2*2 = 6 bounces over length 2*sqrt(5)
    start = BallState.aimed((0.3, 0.3), (1, 2))
    length = 2 * math.sqrt(5)
    traj = simulate(SQUARE, start, 6)
    assert len(traj.events) == 6
    assert traj.events[-1].path_length_so_far < length
    end, _, bounces = advance(SQUARE, start, length)
    assert bounces == 6
    assert math.hypot(end.position[0] - 0.3, end.position[1] - 0.3) < 1e-8
    assert end.direction == pytest.approx(start.direction, abs=1e-10)
    # the seventh collision repeats the first
    again = simulate(SQUARE, start, 7)
    assert again.events[6].point == pytest.approx(again.events[0].point, abs=1e-8)
    assert again.events[6].path_length_so_far - again.events[0].path_length_so_far == \
        pytest.approx(length, abs=1e-8)


def test_sinai_two_bounces_by_hand():
    traj = simulate(SINAI, BallState((0.1, 0.5), (1.0, 0.0)), 2)
    first, second = traj.events
    assert first.wall_id == 4 and first.point == pytest.approx((0.3, 0.5))
    assert first.dir_out == pytest.approx((-1.0, 0.0))
    assert first.incidence_angle == pytest.approx(0.0, abs=1e-15)
    assert second.wall_id == 3 and second.point == pytest.approx((0.0, 0.5))
    assert second.path_length_so_far == pytest.approx(0.5)


def test_simulate_corner_truncation():
    start = BallState((0.25, 0.25), (SQRT_HALF, SQRT_HALF))
    with pytest.raises(CornerHit) as info:
        simulate(SQUARE, start, 5)
    assert info.value.index == 1
    assert info.value.trajectory.events == ()
    partial = simulate(SQUARE, start, 5, allow_truncation=True)
    assert partial.truncated
    # a corner hit after one clean bounce
    # right wall at (1, 0.5), then straight into the (0, 1) corner
    start = BallState.aimed((0.5, 0.25), (1, 0.5))
    partial = simulate(SQUARE, start, 5, allow_truncation=True)
    assert len(partial.events) == 1 and partial.truncation.index == 2


def test_simulate_is_deterministic():
    for table, start in GENERIC.values():
        a = simulate(table, start, 500)
        b = simulate(table, start, 500)
        assert a.events == b.events
        assert trajectory_to_csv(a) == trajectory_to_csv(b)


@pytest.mark.parametrize("name", list(GENERIC))
def test_trajectory_invariants(name):
    table, start = GENERIC[name]
    traj = simulate(table, start, 1000)
    check_trajectory(traj)
    for ev in traj.events:
        n = ev.normal
        ang_in = math.atan2(abs(-ev.dir_in[0] * n[1] + ev.dir_in[1] * n[0]),
                            -ev.dir_in[0] * n[0] - ev.dir_in[1] * n[1])
        ang_out = math.atan2(abs(ev.dir_out[0] * n[1] - ev.dir_out[1] * n[0]),
                             ev.dir_out[0] * n[0] + ev.dir_out[1] * n[1])
        assert abs(ang_in - ang_out) < 1e-9
        assert abs(ev.incidence_angle - ang_in) < 1e-12
        assert 0 <= ev.incidence_angle <= math.pi / 2
        assert abs(math.hypot(*ev.dir_out) - 1) < 1e-12


@pytest.mark.parametrize("name", list(GENERIC))
def test_time_reversal(name):
    table, start = GENERIC[name]
    n = 10
    forward = simulate(table, start, n)
    last = forward.events[-1]
    # the reversed motion leaves the last collision point along -dir_in
    back = simulate(table, BallState(last.point, (-last.dir_in[0], -last.dir_in[1])), n)
    fwd_pts = [ev.point for ev in forward.events[:-1]][::-1]
    back_pts = [ev.point for ev in back.events[:-1]]
    assert np.allclose(fwd_pts, back_pts, atol=1e-6, rtol=0)
    origin = positions_at(back, [forward.path_length])[0]
    assert origin == pytest.approx(start.position, abs=1e-6)


@pytest.mark.parametrize("name", list(GENERIC))
def test_matches_marching_oracle(name):
    table, start = GENERIC[name]
    engine = simulate(table, start, 10).points()[1:]
    oracle = march_bounces(table, start.position, start.direction, 10)
    assert np.abs(engine - oracle).max() < 1e-6


def test_square_matches_unfolding_oracle():
    start = BallState.from_angle((0.2, 0.3), 1.0)
    traj = simulate(SQUARE, start, 400)
    s = np.linspace(0, traj.path_length, 5001)
    assert np.abs(positions_at(traj, s) - square_position(start.position, start.direction, s)
                  ).max() < 1e-9


def test_resample_path():
    traj = simulate(SQUARE, BallState((0.0 + 0.5, 0.5), (1.0, 0.0)), 1)
    pts = resample_path(traj, 0.1)
    assert pts[0] == (0.5, 0.5) and pts[-1] == (1.0, 0.5)
    assert len(pts) >= 6

    seg = simulate(SQUARE, BallState((0.0 + 1e-3, 0.5), (1.0, 0.0)), 1)
    pts = resample_path(seg, 0.5)
    assert len(pts) >= 3

    traj = simulate(SQUARE, BallState.aimed((0.3, 0.3), (1, 2)), 6)
    coarse = resample_path(traj, 100.0)
    assert coarse == [tuple(p) for p in traj.points().tolist()]

    fine = resample_path(traj, 0.01)
    gaps = np.hypot(*np.diff(np.asarray(fine), axis=0).T)
    assert gaps.max() <= 0.01 + 1e-15
    for p in fine:
        assert contains(SQUARE, p) or min(w.distance(p) for w in SQUARE.walls) < 1e-9

    empty = simulate(SQUARE, BallState((0.5, 0.5), (1.0, 0.0)), 0)
    assert resample_path(empty, 0.1) == [(0.5, 0.5)]
    with pytest.raises(ValueError):
        resample_path(empty, 0.0)


def test_trajectory_csv_layout():
    traj = simulate(SQUARE, BallState.aimed((0.3, 0.3), (1, 2)), 300)
    text = trajectory_to_csv(traj)
    lines = text.splitlines()
    assert lines[0] == ("index,x,y,wall_id,dir_in_x,dir_in_y,dir_out_x,dir_out_y,"
                        "incidence_angle,path_length")
    rows = read_trajectory_csv(text)
    assert len(rows) == 301
    assert rows[0]["index"] == 0 and rows[0]["wall_id"] is None
    assert rows[0]["x"] == 0.3
    ev = traj.events[41]
    assert rows[42]["x"] == ev.point[0] and rows[42]["path_length"] == ev.path_length_so_far
