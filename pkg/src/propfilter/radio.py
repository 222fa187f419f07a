"""Empirically calibrated device-to-device link model.

Connection success depends on distance at first contact (piecewise linear
through the field-measured anchors), connection set-up takes a uniformly
distributed delay, and advertising/discovery drains the battery at a constant
rate depending on whether sharing is switched on.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace

import numpy as np

# (distance m, success without obstacles, success with obstacles)
SUCCESS_ANCHORS: tuple[tuple[float, float, float], ...] = (
    (3.0, 1.00, 1.00),
    (6.0, 0.80, 0.70),
    (10.0, 0.20, 0.00),
    (12.0, 0.00, 0.00),
)
DELAY_MIN_S = 11.0
DELAY_MAX_S = 41.0
DRAIN_SHARING_ON = 5.77  # %/h
DRAIN_SHARING_OFF = 0.50  # %/h
EFFECTIVE_RADIUS_M = 6.0


@dataclass(frozen=True)
class RadioParams:
    anchors: tuple[tuple[float, float, float], ...] = SUCCESS_ANCHORS
    delay_min: float = DELAY_MIN_S
    delay_max: float = DELAY_MAX_S
    drain_on: float = DRAIN_SHARING_ON
    drain_off: float = DRAIN_SHARING_OFF
    radius: float = EFFECTIVE_RADIUS_M

    def __post_init__(self) -> None:
        anchors = tuple(tuple(float(v) for v in a) for a in self.anchors)
        if not anchors:
            raise ValueError("at least one success anchor is required")
        for a in anchors:
            if len(a) != 3:
                raise ValueError(f"anchor {a} must be (distance, p_no_obstacles, p_obstacles)")
            if a[0] < 0 or not (0 <= a[1] <= 1 and 0 <= a[2] <= 1):
                raise ValueError(f"anchor {a} out of range")
        for prev, cur in zip(anchors, anchors[1:]):
            if cur[0] <= prev[0]:
                raise ValueError("anchors must be sorted by strictly increasing distance")
            if cur[1] > prev[1] or cur[2] > prev[2]:
                raise ValueError("anchor probabilities must be non-increasing with distance")
        if not 0 <= self.delay_min <= self.delay_max:
            raise ValueError("delay bounds must satisfy 0 <= min <= max")
        if self.drain_on < 0 or self.drain_off < 0:
            raise ValueError("drain rates must be non-negative")
        if self.radius <= 0:
            raise ValueError("radius must be positive")
        object.__setattr__(self, "anchors", anchors)


DEFAULT_PARAMS = RadioParams()


def success_probability(d: float, obstacles: bool = False, params: RadioParams = DEFAULT_PARAMS) -> float:
    if d < 0:
        raise ValueError("distance must be >= 0")
    xs = [a[0] for a in params.anchors]
    ps = [a[2] if obstacles else a[1] for a in params.anchors]
    return float(np.interp(d, xs, ps))


def sample_delay(rng: np.random.Generator, params: RadioParams = DEFAULT_PARAMS) -> float:
    return float(rng.uniform(params.delay_min, params.delay_max))


class State(enum.Enum):
    IDLE = "idle"
    CONNECTING = "connecting"
    EXCHANGING = "exchanging"
    CLOSED = "closed"


class Outcome(enum.Enum):
    SUCCESS = "success"
    FAILED_RANGE = "failed_range"
    FAILED_DWELL = "failed_dwell"
    FAILED_PROBABILISTIC = "failed_probabilistic"


@dataclass(frozen=True)
class LinkSession:
    """One encounter between two peers.

    ``distance`` is the separation at first contact; ``dwell`` accumulates the
    in-range time spent connecting.
    """

    peers: tuple[str, str]
    distance: float = 0.0
    state: State = State.IDLE
    remaining: float = 0.0
    dwell: float = 0.0
    outcome: Outcome | None = None

    @property
    def closed(self) -> bool:
        return self.state is State.CLOSED


def _close(s: LinkSession, outcome: Outcome) -> LinkSession:
    return replace(s, state=State.CLOSED, remaining=0.0, outcome=outcome)


def step_session(
    s: LinkSession,
    dt: float,
    in_range: bool,
    rng: np.random.Generator,
    params: RadioParams = DEFAULT_PARAMS,
    obstacles: bool = False,
) -> LinkSession:
    if dt <= 0:
        raise ValueError("dt must be positive")
    if s.state is State.CLOSED:
        return s
    if s.state is State.IDLE:
        if not in_range:
            return _close(s, Outcome.FAILED_RANGE)
        # one success draw per encounter, at first-contact distance
        if rng.random() >= success_probability(s.distance, obstacles, params):
            return _close(s, Outcome.FAILED_PROBABILISTIC)
        return replace(s, state=State.CONNECTING, remaining=sample_delay(rng, params))
    if s.state is State.CONNECTING:
        if not in_range:
            return _close(s, Outcome.FAILED_DWELL)
        if s.remaining <= dt:
            return replace(s, state=State.EXCHANGING, remaining=0.0, dwell=s.dwell + dt)
        return replace(s, remaining=s.remaining - dt, dwell=s.dwell + dt)
    return _close(s, Outcome.SUCCESS)


class Mode(enum.Enum):
    SHARING_ON = "sharing_on"
    SHARING_OFF = "sharing_off"


@dataclass(frozen=True)
class EnergyState:
    battery_pct: float = 100.0
    mode: Mode = Mode.SHARING_ON

    def __post_init__(self) -> None:
        if not 0.0 <= self.battery_pct <= 100.0:
            raise ValueError("battery_pct outside [0, 100]")


def drain_rate(mode: Mode, params: RadioParams = DEFAULT_PARAMS) -> float:
    return params.drain_on if mode is Mode.SHARING_ON else params.drain_off


def energy_tick(e: EnergyState, dt_hours: float, params: RadioParams = DEFAULT_PARAMS) -> EnergyState:
    if dt_hours < 0:
        raise ValueError("dt must be >= 0")
    level = e.battery_pct - drain_rate(e.mode, params) * dt_hours
    return replace(e, battery_pct=max(0.0, level))
