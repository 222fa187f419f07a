import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from propfilter.mobility import (
    MobilityParams,
    MobilityState,
    Model,
    contact_dwells,
    initial_state,
    pairwise_distances,
    step_mobility,
    vehicle_position,
)
from propfilter.radio import DELAY_MAX_S, EFFECTIVE_RADIUS_M

PARAMS = MobilityParams()


def test_straight_line_one_metre_per_tick(rng):
    m = MobilityState((0.0, 0.0), (10.0, 0.0), 1.0)
    for k in range(1, 6):
        m = step_mobility(m, 1.0, rng, PARAMS)
        assert m.position == pytest.approx((float(k), 0.0))


def test_arrival_starts_pause_within_bounds(rng):
    m = MobilityState((9.5, 0.0), (10.0, 0.0), 1.0)
    m = step_mobility(m, 1.0, rng, PARAMS)
    assert m.position == (10.0, 0.0)
    assert 0.0 < m.pause_remaining <= PARAMS.pause_max
    held = step_mobility(m, 1.0, rng, PARAMS)
    assert held.position == (10.0, 0.0)


def test_no_pause_retargets_immediately(rng):
    p = MobilityParams(pause_max=0.0)
    m = step_mobility(MobilityState((9.5, 0.0), (10.0, 0.0), 1.0), 1.0, rng, p)
    assert m.pause_remaining == 0.0 and m.waypoint != (10.0, 0.0)


def test_params_validation():
    with pytest.raises(ValueError):
        MobilityParams(v_min=0.0)
    with pytest.raises(ValueError):
        MobilityParams(pois=((500.0, 0.0),))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from(list(Model)), st.sampled_from([0.5, 1.0, 5.0]))
def test_positions_stay_in_area(seed, model, dt):
    params = MobilityParams(width=50, height=30, pois=((5.0, 5.0), (45.0, 25.0)), mean_dwell=20.0,
                            route=((0.0, 15.0), (50.0, 15.0)), ride_time=40.0, v_max=3.0)
    rng = np.random.default_rng(seed)
    m = initial_state(rng, params, model)
    for _ in range(300):
        m = step_mobility(m, dt, rng, params)
        assert params.contains(m.position)
        assert m.pause_remaining >= 0


def test_trajectories_are_seed_deterministic():
    def trace(seed):
        rng = np.random.default_rng(seed)
        m = initial_state(rng, PARAMS)
        out = []
        for _ in range(500):
            m = step_mobility(m, 1.0, rng, PARAMS)
            out.append(m.position)
        return out

    assert trace(4) == trace(4)
    assert trace(4) != trace(5)


def test_pairwise_three_four_five():
    d = pairwise_distances([(0, 0), (3, 4)])
    assert d.tolist() == [[0.0, 5.0], [5.0, 0.0]]


@given(st.lists(st.tuples(st.floats(-1e3, 1e3), st.floats(-1e3, 1e3)), min_size=1, max_size=8))
def test_pairwise_matches_loop(points):
    d = pairwise_distances(points)
    for i, (xi, yi) in enumerate(points):
        for j, (xj, yj) in enumerate(points):
            assert d[i, j] == pytest.approx(math.hypot(xi - xj, yi - yj), abs=1e-9)
    assert np.array_equal(d, d.T)


def test_contact_dwells_counts_runs():
    # two peers: together for 3 ticks, apart for 2, together for 1
    a = [(0.0, 0.0)] * 6
    b = [(1.0, 0.0)] * 3 + [(50.0, 0.0)] * 2 + [(1.0, 0.0)]
    traj = np.stack([np.array(a), np.array(b)], axis=1)
    assert contact_dwells(traj, 6.0) == [3.0, 1.0]


def test_vehicle_shuttles():
    p = MobilityParams(route=((0.0, 0.0), (80.0, 0.0)), vehicle_speed=8.0)
    assert vehicle_position(5.0, p) == pytest.approx((40.0, 0.0))
    assert vehicle_position(15.0, p) == pytest.approx((40.0, 0.0))
    assert vehicle_position(20.0, p) == pytest.approx((0.0, 0.0))


def test_transit_riders_colocated_then_disperse():
    p = MobilityParams(route=((10.0, 100.0), (190.0, 100.0)), ride_time=100.0)
    rngs = [np.random.default_rng(s) for s in range(3)]
    riders = [initial_state(r, p, Model.TRANSIT_LINE) for r in rngs]
    for t in range(99):
        riders = [step_mobility(m, 1.0, r, p) for m, r in zip(riders, rngs)]
        assert pairwise_distances([m.position for m in riders]).max() == 0.0
    for _ in range(200):
        riders = [step_mobility(m, 1.0, r, p) for m, r in zip(riders, rngs)]
    assert all(m.model is Model.RANDOM_WAYPOINT for m in riders)
    assert pairwise_distances([m.position for m in riders]).max() > 0.0


def trajectory(model: Model, params: MobilityParams, peers: int, ticks: int, seed: int) -> np.ndarray:
    rngs = [np.random.default_rng([seed, i]) for i in range(peers)]
    states = [initial_state(r, params, model) for r in rngs]
    frames = []
    for _ in range(ticks):
        states = [step_mobility(m, 1.0, r, params) for m, r in zip(states, rngs)]
        frames.append([m.position for m in states])
    return np.array(frames)


def long_contact_fraction(dwells) -> float:
    return sum(d >= DELAY_MAX_S for d in dwells) / len(dwells) if dwells else 0.0


def test_gathering_contacts_outlast_pedestrian_contacts():
    pois = ((40.0, 40.0), (160.0, 40.0), (100.0, 160.0))
    gather = MobilityParams(pois=pois, mean_dwell=300.0)
    walkers = MobilityParams(v_min=1.4, v_max=1.4, pause_max=0.0)
    wins = 0
    pooled_g, pooled_w = [], []
    for seed in range(10):
        g = contact_dwells(trajectory(Model.GATHERING, gather, 12, 900, seed), EFFECTIVE_RADIUS_M)
        w = contact_dwells(trajectory(Model.RANDOM_WAYPOINT, walkers, 12, 900, seed), EFFECTIVE_RADIUS_M)
        pooled_g += g
        pooled_w += w
        wins += long_contact_fraction(g) > long_contact_fraction(w)
    assert wins >= 9
    assert long_contact_fraction(pooled_g) > long_contact_fraction(pooled_w)
