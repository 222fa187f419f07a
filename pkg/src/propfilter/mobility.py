"""Peer movement: random waypoint roaming, gathering at points of interest,
and riding a shared vehicle.

All models are stepped on a fixed tick and stay inside a rectangular area.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace

import numpy as np

Point = tuple[float, float]


class Model(enum.Enum):
    RANDOM_WAYPOINT = "random_waypoint"
    GATHERING = "gathering"
    TRANSIT_LINE = "transit_line"


@dataclass(frozen=True)
class MobilityParams:
    width: float = 200.0
    height: float = 200.0
    v_min: float = 0.5
    v_max: float = 1.5
    pause_max: float = 120.0
    # gathering
    pois: tuple[Point, ...] = ()
    poi_radius: float = 1.5
    mean_dwell: float = 600.0  # seconds
    # transit: the vehicle shuttles along route[0] <-> route[1]
    route: tuple[Point, Point] | None = None
    vehicle_speed: float = 8.0
    ride_time: float = 300.0

    def __post_init__(self) -> None:
        if self.width <= 0 or self.height <= 0:
            raise ValueError("area dimensions must be positive")
        if not 0 < self.v_min <= self.v_max:
            raise ValueError("speeds must satisfy 0 < v_min <= v_max")
        if self.pause_max < 0 or self.mean_dwell <= 0 or self.poi_radius < 0:
            raise ValueError("pause_max, poi_radius must be >= 0 and mean_dwell > 0")
        for p in self.pois + (self.route or ()):
            if not self.contains(p):
                raise ValueError(f"point {p} lies outside the area")

    def contains(self, p: Point) -> bool:
        return 0 <= p[0] <= self.width and 0 <= p[1] <= self.height


@dataclass(frozen=True)
class MobilityState:
    position: Point
    waypoint: Point
    speed: float
    pause_remaining: float = 0.0
    model: Model = Model.RANDOM_WAYPOINT
    poi: int = -1
    elapsed: float = 0.0


def random_point(rng: np.random.Generator, params: MobilityParams) -> Point:
    return (float(rng.uniform(0, params.width)), float(rng.uniform(0, params.height)))


def random_speed(rng: np.random.Generator, params: MobilityParams) -> float:
    return float(rng.uniform(params.v_min, params.v_max))


def near_poi(rng: np.random.Generator, params: MobilityParams, index: int) -> Point:
    """A spot within ``poi_radius`` of the given point of interest."""
    cx, cy = params.pois[index]
    r = params.poi_radius * math.sqrt(float(rng.random()))
    a = float(rng.uniform(0, 2 * math.pi))
    x = min(max(cx + r * math.cos(a), 0.0), params.width)
    y = min(max(cy + r * math.sin(a), 0.0), params.height)
    return (x, y)


def vehicle_position(elapsed: float, params: MobilityParams) -> Point:
    (x0, y0), (x1, y1) = params.route
    length = math.hypot(x1 - x0, y1 - y0)
    if length == 0:
        return (x0, y0)
    s = (elapsed * params.vehicle_speed) % (2 * length)
    if s > length:
        s = 2 * length - s
    f = s / length
    return (x0 + f * (x1 - x0), y0 + f * (y1 - y0))


def _retarget(m: MobilityState, rng: np.random.Generator, params: MobilityParams) -> MobilityState:
    if m.model is Model.GATHERING and len(params.pois) > 1:
        nxt = int(rng.integers(len(params.pois) - 1))
        if nxt >= m.poi:
            nxt += 1
        return replace(m, waypoint=near_poi(rng, params, nxt), speed=random_speed(rng, params),
                       pause_remaining=0.0, poi=nxt)
    if m.model is Model.GATHERING and len(params.pois) == 1:
        return replace(m, waypoint=near_poi(rng, params, 0), speed=random_speed(rng, params),
                       pause_remaining=0.0, poi=0)
    return replace(m, waypoint=random_point(rng, params), speed=random_speed(rng, params),
                   pause_remaining=0.0)


def _arrival_pause(m: MobilityState, rng: np.random.Generator, params: MobilityParams) -> float:
    if m.model is Model.GATHERING:
        return float(rng.exponential(params.mean_dwell))
    if params.pause_max > 0:
        return float(rng.uniform(0, params.pause_max))
    return 0.0


def step_mobility(
    m: MobilityState, dt: float, rng: np.random.Generator, params: MobilityParams
) -> MobilityState:
    if dt <= 0:
        raise ValueError("dt must be positive")
    if m.model is Model.TRANSIT_LINE:
        elapsed = m.elapsed + dt
        if elapsed < params.ride_time:
            pos = vehicle_position(elapsed, params)
            return replace(m, position=pos, waypoint=pos, elapsed=elapsed)
        # ride over: everyone gets off at the same stop and roams
        off = replace(m, model=Model.RANDOM_WAYPOINT, elapsed=elapsed)
        return _retarget(off, rng, params)

    if m.pause_remaining > 0:
        left = m.pause_remaining - dt
        if left > 0:
            return replace(m, pause_remaining=left)
        return _retarget(m, rng, params)

    (x, y), (wx, wy) = m.position, m.waypoint
    dist = math.hypot(wx - x, wy - y)
    step = m.speed * dt
    if dist <= step:
        arrived = replace(m, position=m.waypoint)
        pause = _arrival_pause(arrived, rng, params)
        if pause > 0:
            return replace(arrived, pause_remaining=pause)
        return _retarget(arrived, rng, params)
    f = step / dist
    return replace(m, position=(x + f * (wx - x), y + f * (wy - y)))


def initial_state(
    rng: np.random.Generator, params: MobilityParams, model: Model = Model.RANDOM_WAYPOINT
) -> MobilityState:
    if model is Model.GATHERING:
        if not params.pois:
            raise ValueError("gathering mobility needs at least one point of interest")
        poi = int(rng.integers(len(params.pois)))
        pos = near_poi(rng, params, poi)
        return MobilityState(pos, pos, random_speed(rng, params),
                             float(rng.exponential(params.mean_dwell)), model, poi)
    if model is Model.TRANSIT_LINE:
        if params.route is None:
            raise ValueError("transit mobility needs a route")
        pos = vehicle_position(0.0, params)
        return MobilityState(pos, pos, random_speed(rng, params), 0.0, model)
    pos = random_point(rng, params)
    return MobilityState(pos, random_point(rng, params), random_speed(rng, params), 0.0, model)


def pairwise_distances(positions) -> np.ndarray:
    """Euclidean distance matrix of an (n, 2) array of positions."""
    p = np.asarray(positions, dtype=float).reshape(-1, 2)
    diff = p[:, None, :] - p[None, :, :]
    return np.sqrt((diff ** 2).sum(axis=-1))


def contact_dwells(trajectory, radius: float, dt: float = 1.0) -> list[float]:
    """Durations of contiguous in-range runs for every pair.

    ``trajectory`` has shape (ticks, peers, 2). A run still open at the last
    tick is counted with its observed length.
    """
    traj = np.asarray(trajectory, dtype=float)
    n = traj.shape[1]
    iu = np.triu_indices(n, k=1)
    run = np.zeros(len(iu[0]), dtype=int)
    dwells: list[float] = []
    for frame in traj:
        close = pairwise_distances(frame)[iu] <= radius
        ended = (~close) & (run > 0)
        dwells.extend((run[ended] * dt).tolist())
        run = np.where(close, run + 1, 0)
    dwells.extend((run[run > 0] * dt).tolist())
    return dwells
