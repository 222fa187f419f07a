"""Scenario files: schema, validation and bundled presets.

A scenario is a JSON object. Every key is optional; omitted keys take the
defaults below. Unknown keys, wrong types and out-of-range values are rejected
with the dotted path of the offending key.
"""

from __future__ import annotations

import copy
import json
from importlib import resources
from pathlib import Path
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from . import radio
from .mobility import MobilityParams, Model
from .radio import RadioParams

Point = tuple[float, float]


class ScenarioError(ValueError):
    """Validation failure; ``errors`` holds (key path, message) pairs."""

    def __init__(self, errors: list[tuple[str, str]]):
        self.errors = errors
        super().__init__("; ".join(f"{k}: {m}" for k, m in errors))


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", strict=True, frozen=True)


class AreaConfig(_Section):
    width: float = Field(200.0, gt=0, le=1e6)
    height: float = Field(200.0, gt=0, le=1e6)


class CommunityConfig(_Section):
    count: int = Field(1, ge=1, le=1000)
    items_per_community: int = Field(50, ge=1, le=100_000)
    ratings_per_peer: int = Field(10, ge=0)
    global_items: int = Field(0, ge=0, le=100_000)
    global_ratings_per_peer: int = Field(0, ge=0)
    rating_noise: int = Field(1, ge=0, le=4)
    # "random": every community draws its own taste for the shared items;
    # "polarized": community c loves shared item g when (g + c) is even, else hates it
    global_taste: Literal["random", "polarized"] = "random"
    # peers of a community rate non-overlapping slices of its pool
    disjoint: bool = False

    @model_validator(mode="after")
    def _fits(self):
        if self.ratings_per_peer > self.items_per_community:
            raise ValueError("ratings_per_peer must not exceed items_per_community")
        if self.global_ratings_per_peer > self.global_items:
            raise ValueError("global_ratings_per_peer must not exceed global_items")
        return self


class MobilityConfig(_Section):
    model: Literal["random_waypoint", "gathering", "transit_line"] = "random_waypoint"
    v_min: float = Field(0.5, gt=0, le=100)
    v_max: float = Field(1.5, gt=0, le=100)
    pause_max: float = Field(120.0, ge=0)
    pois: tuple[Point, ...] = ()
    poi_radius: float = Field(1.5, ge=0)
    mean_dwell: float = Field(600.0, gt=0)
    route: Optional[tuple[Point, Point]] = None
    vehicle_speed: float = Field(8.0, gt=0, le=100)
    ride_time: float = Field(300.0, ge=0)

    @model_validator(mode="after")
    def _consistent(self):
        if self.v_min > self.v_max:
            raise ValueError("v_min must not exceed v_max")
        if self.model == "gathering" and not self.pois:
            raise ValueError("gathering mobility needs at least one entry in pois")
        if self.model == "transit_line" and self.route is None:
            raise ValueError("transit_line mobility needs a route")
        return self


class PlacementConfig(_Section):
    position: Point
    waypoint: Optional[Point] = None
    speed: Optional[float] = Field(None, gt=0)
    pause: float = Field(0.0, ge=0)
    model: Optional[Literal["random_waypoint", "gathering", "transit_line"]] = None
    poi: Optional[int] = Field(None, ge=0)
    sharing: Optional[bool] = None


class RadioConfig(_Section):
    anchors: tuple[tuple[float, ...], ...] = tuple(radio.SUCCESS_ANCHORS)
    delay_min: float = Field(radio.DELAY_MIN_S, ge=0)
    delay_max: float = Field(radio.DELAY_MAX_S, ge=0)
    drain_on: float = Field(radio.DRAIN_SHARING_ON, ge=0)
    drain_off: float = Field(radio.DRAIN_SHARING_OFF, ge=0)
    radius: float = Field(radio.EFFECTIVE_RADIUS_M, gt=0)


class FilterConfig(_Section):
    k: int = Field(5, ge=1, le=10_000)
    capacity: int = Field(500, ge=1, le=1_000_000)
    n_draws: int = Field(500, ge=1, le=10_000_000)
    min_overlap: int = Field(2, ge=1)
    share_fraction: float = Field(1.0, ge=0, le=1)
    top_n: int = Field(10, ge=1)
    self_weight: float = Field(1.0, ge=0)


class OutputConfig(_Section):
    metrics_interval: float = Field(60.0, gt=0)
    inbox_limit: int = Field(64, ge=1)
    plots: bool = False


class ScenarioConfig(_Section):
    name: str = "custom"
    area: AreaConfig = AreaConfig()
    peers: int = Field(50, ge=1, le=10_000)
    communities: CommunityConfig = CommunityConfig()
    mobility: MobilityConfig = MobilityConfig()
    placements: tuple[PlacementConfig, ...] = ()
    radio: RadioConfig = RadioConfig()
    filter: FilterConfig = FilterConfig()
    sharing_fraction: float = Field(1.0, ge=0, le=1)
    duration: float = Field(3600.0, gt=0, le=1e7)
    tick: float = Field(1.0, gt=0)
    obstacles: bool = False
    output: OutputConfig = OutputConfig()

    @model_validator(mode="after")
    def _cross_checks(self):
        errors: list[tuple[str, str]] = []
        if self.communities.count > self.peers:
            errors.append(("communities.count", "more communities than peers leaves a community empty"))
        if len(self.placements) > self.peers:
            errors.append(("placements", "more placements than peers"))
        if self.radio.delay_min > self.radio.delay_max:
            errors.append(("radio.delay_min", "must not exceed radio.delay_max"))
        width = 3 if self.obstacles else 2
        for i, a in enumerate(self.radio.anchors):
            if len(a) < width or len(a) > 3:
                need = "(distance, p_no_obstacles, p_obstacles)" if self.obstacles else "(distance, p_no_obstacles[, p_obstacles])"
                errors.append((f"radio.anchors.{i}", f"expected {need}, got {len(a)} values"))
        for name, p in (("pois", self.mobility.pois), ("route", self.mobility.route or ())):
            for i, pt in enumerate(p):
                if not (0 <= pt[0] <= self.area.width and 0 <= pt[1] <= self.area.height):
                    errors.append((f"mobility.{name}.{i}", "point lies outside the area"))
        for i, pl in enumerate(self.placements):
            for key in ("position", "waypoint"):
                pt = getattr(pl, key)
                if pt is not None and not (0 <= pt[0] <= self.area.width and 0 <= pt[1] <= self.area.height):
                    errors.append((f"placements.{i}.{key}", "point lies outside the area"))
            if pl.speed is not None and not self.mobility.v_min <= pl.speed <= self.mobility.v_max:
                errors.append((f"placements.{i}.speed", "must lie within [mobility.v_min, mobility.v_max]"))
            if pl.poi is not None and pl.poi >= len(self.mobility.pois):
                errors.append((f"placements.{i}.poi", "no such point of interest"))
            if pl.model == "gathering" and not self.mobility.pois:
                errors.append((f"placements.{i}.model", "gathering needs mobility.pois"))
            if pl.model == "transit_line" and self.mobility.route is None:
                errors.append((f"placements.{i}.model", "transit_line needs mobility.route"))
        if errors:
            raise ScenarioError(errors)
        try:
            self.radio_params()
        except ValueError as exc:
            raise ScenarioError([("radio.anchors", str(exc))]) from None
        return self

    @property
    def ticks(self) -> int:
        return max(1, round(self.duration / self.tick))

    def radio_params(self) -> RadioParams:
        anchors = tuple((a[0], a[1], a[2] if len(a) > 2 else a[1]) for a in self.radio.anchors)
        return RadioParams(
            anchors=anchors,
            delay_min=self.radio.delay_min,
            delay_max=self.radio.delay_max,
            drain_on=self.radio.drain_on,
            drain_off=self.radio.drain_off,
            radius=self.radio.radius,
        )

    def mobility_params(self) -> MobilityParams:
        m = self.mobility
        return MobilityParams(
            width=self.area.width,
            height=self.area.height,
            v_min=m.v_min,
            v_max=m.v_max,
            pause_max=m.pause_max,
            pois=m.pois,
            poi_radius=m.poi_radius,
            mean_dwell=m.mean_dwell,
            route=m.route,
            vehicle_speed=m.vehicle_speed,
            ride_time=m.ride_time,
        )

    def mobility_model(self) -> Model:
        return Model(self.mobility.model)


def _loc(loc) -> str:
    return ".".join(str(p) for p in loc) or "<root>"


def validate(text: str | bytes) -> ScenarioConfig:
    """Parse and validate scenario JSON text."""
    try:
        return ScenarioConfig.model_validate_json(text, strict=True)
    except ScenarioError:
        raise
    except ValidationError as exc:
        errors = []
        for err in exc.errors():
            ctx_err = (err.get("ctx") or {}).get("error")
            if isinstance(ctx_err, ScenarioError):
                errors.extend(ctx_err.errors)
                continue
            msg = err["msg"]
            if err["type"] == "extra_forbidden":
                msg = "unknown key"
            errors.append((_loc(err["loc"]), msg))
        raise ScenarioError(errors) from None


def validate_dict(data: dict) -> ScenarioConfig:
    return validate(json.dumps(data))


PRESETS = ("bulk-1000", "four-device", "transit", "pedestrian-pass", "cafe", "two-communities")


def preset_text(name: str) -> str:
    if name not in PRESETS:
        raise KeyError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    return resources.files("propfilter").joinpath("presets").joinpath(f"{name}.json").read_text(encoding="utf-8")


def load_scenario(ref: str | Path) -> ScenarioConfig:
    """Load a preset by name or a scenario file by path."""
    if isinstance(ref, str) and ref in PRESETS:
        return validate(preset_text(ref))
    path = Path(ref)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ScenarioError([("<file>", f"cannot read {path}: {exc.strerror}")]) from None
    return validate(text)


def apply_overrides(config: ScenarioConfig, overrides: dict) -> ScenarioConfig:
    """Return a copy of ``config`` with dotted-path keys replaced."""
    data = config.model_dump(mode="json")
    for path, value in overrides.items():
        node = data
        parts = path.split(".")
        for p in parts[:-1]:
            if not isinstance(node, dict) or p not in node:
                raise ScenarioError([(path, "not a configuration path")])
            node = node[p]
        if not isinstance(node, dict) or parts[-1] not in node:
            raise ScenarioError([(path, "not a configuration path")])
        node[parts[-1]] = copy.deepcopy(value)
    return validate_dict(data)
