"""Lockstep simulation of peers that propagate and filter preference data.

Each tick moves every peer, detects who is within radio range, advances the
link sessions and, for sessions that finish connecting, performs a symmetric
exchange of encoded messages. Receivers run the filter pipeline on the bytes
they received and nothing else: there is no way for a peer to look at the
state of anyone it is not currently connected to.

Ground truth that the protocol must not see (community labels, which peers
originally rated an item, who was ever close to whom) is kept on the
``World`` for metrics only.
"""

from __future__ import annotations

import hashlib
import logging
import math
from collections import Counter, deque
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import wire
from .mobility import (
    MobilityParams,
    MobilityState,
    Model,
    initial_state,
    near_poi,
    pairwise_distances,
    random_point,
    random_speed,
    step_mobility,
)
from .prefs import (
    ContextData,
    NeighborhoodPreferenceList,
    PeerPreferenceList,
    SimilarityData,
    SimilarityStore,
    admit_to_store,
    cosine_similarity,
    predict_ratings,
    resample_neighborhood,
    shared_view,
)
from .radio import (
    EnergyState,
    LinkSession,
    Mode,
    Outcome,
    RadioParams,
    State,
    energy_tick,
    step_session,
)
from .scenario import FilterConfig, ScenarioConfig

log = logging.getLogger(__name__)

OUTCOMES = tuple(o.value for o in Outcome)


@dataclass(frozen=True)
class Received:
    """A message as stored by its receiver, stamped with local context."""

    message: wire.ExchangeMessage
    context: ContextData
    sha256: str


@dataclass
class PeerAgent:
    index: int
    pseudo_id: str
    prefs: PeerPreferenceList
    nbhd: NeighborhoodPreferenceList
    store: SimilarityStore
    mobility: MobilityState
    energy: EnergyState
    sharing_enabled: bool
    community_label: int
    rng: np.random.Generator = field(repr=False)
    move_rng: np.random.Generator = field(repr=False)
    inbox: deque = field(default_factory=deque, repr=False)
    recommendations: list = field(default_factory=list)

    @property
    def position(self) -> tuple[float, float]:
        return self.mobility.position


@dataclass(frozen=True)
class MetricsRecord:
    tick: int
    time: float
    battery: tuple[float, ...]
    outcomes: dict
    sessions_open: int
    bytes_exchanged: int
    coverage: dict
    within_coverage: float | None
    cross_coverage: float | None
    flow_ratio: float | None


@dataclass
class World:
    config: ScenarioConfig
    peers: list[PeerAgent]
    radio: RadioParams
    mobility: MobilityParams
    radio_rng: np.random.Generator = field(repr=False)
    item_community: dict[str, int | None] = field(default_factory=dict)
    tick: int = 0
    time: float = 0.0
    sessions: dict[tuple[int, int], LinkSession] = field(default_factory=dict)
    in_range: set[tuple[int, int]] = field(default_factory=set)
    encounter_start: dict[tuple[int, int], float] = field(default_factory=dict)
    session_opened: set[tuple[int, int]] = field(default_factory=set)
    contacts: set[tuple[int, int]] = field(default_factory=set)
    outcomes: Counter = field(default_factory=Counter)
    bytes_exchanged: int = 0
    success_payload_bytes: int = 0
    events: list[dict] = field(default_factory=list, repr=False)

    @property
    def origins(self) -> dict[str, frozenset[int]]:
        """Which peers rate each item themselves (ground truth)."""
        table: dict[str, set[int]] = {}
        for p in self.peers:
            for item in p.prefs.ratings:
                table.setdefault(item, set()).add(p.index)
        return {k: frozenset(v) for k, v in table.items()}

    def communities(self) -> list[int]:
        return sorted({p.community_label for p in self.peers})


def _pseudo_id(rng: np.random.Generator) -> str:
    b = bytearray(rng.bytes(16))
    b[6] = (b[6] & 0x0F) | 0x40
    b[8] = (b[8] & 0x3F) | 0x80
    h = b.hex()
    return f"{h[:8]}-{h[8:12]}-{h[12:16]}-{h[16:20]}-{h[20:]}"


def item_id(community: int | None, index: int) -> str:
    """IMDb-style token; community items are tt<cc><nnnnn>, global ones tt00<nnnnn>."""
    c = 0 if community is None else community + 1
    return f"tt{c:02d}{index:05d}"


def _community_of(i: int, peers: int, count: int) -> int:
    return i * count // peers


def _generate_ratings(config: ScenarioConfig, rng: np.random.Generator):
    """Per-peer rating tables drawn around a per-community taste profile."""
    cc = config.communities
    n = config.peers
    labels = [_community_of(i, n, cc.count) for i in range(n)]
    item_community: dict[str, int | None] = {}
    global_ids = [item_id(None, g) for g in range(cc.global_items)]
    for gid in global_ids:
        item_community[gid] = None
    pools = []
    tastes = []
    for c in range(cc.count):
        pool = [item_id(c, i) for i in range(cc.items_per_community)]
        for it in pool:
            item_community[it] = c
        pools.append(pool)
        taste = {it: int(rng.integers(1, 6)) for it in pool + global_ids}
        if cc.global_taste == "polarized":
            taste.update({gid: 5 if (g + c) % 2 == 0 else 1 for g, gid in enumerate(global_ids)})
        tastes.append(taste)
    members: dict[int, list[int]] = {}
    for i, c in enumerate(labels):
        members.setdefault(c, []).append(i)
    if cc.disjoint:
        for c, ms in members.items():
            if len(ms) * cc.ratings_per_peer > cc.items_per_community:
                raise ValueError(
                    f"community {c}: {len(ms)} peers x {cc.ratings_per_peer} disjoint ratings "
                    f"exceed items_per_community={cc.items_per_community}"
                )
    tables = []
    for i, c in enumerate(labels):
        pool = pools[c]
        if cc.disjoint:
            slot = members[c].index(i)
            chosen = pool[slot * cc.ratings_per_peer:(slot + 1) * cc.ratings_per_peer]
        else:
            idx = rng.choice(len(pool), size=cc.ratings_per_peer, replace=False)
            chosen = [pool[j] for j in sorted(idx)]
        gidx = rng.choice(len(global_ids), size=cc.global_ratings_per_peer, replace=False) if global_ids else []
        chosen = chosen + [global_ids[j] for j in sorted(gidx)]
        table = {}
        for it in chosen:
            noise = int(rng.integers(-cc.rating_noise, cc.rating_noise + 1)) if cc.rating_noise else 0
            table[it] = min(5, max(1, tastes[c][it] + noise))
        tables.append(table)
    return labels, tables, item_community


def _initial_mobility(config: ScenarioConfig, i: int, rng: np.random.Generator,
                      params: MobilityParams) -> tuple[MobilityState, bool | None]:
    default_model = config.mobility_model()
    if i >= len(config.placements):
        return initial_state(rng, params, default_model), None
    pl = config.placements[i]
    model = Model(pl.model) if pl.model else default_model
    pos = (float(pl.position[0]), float(pl.position[1]))
    poi = pl.poi if pl.poi is not None else -1
    if pl.waypoint is not None:
        waypoint = (float(pl.waypoint[0]), float(pl.waypoint[1]))
    elif model is Model.GATHERING and pl.pause == 0:
        poi = poi if poi >= 0 else int(rng.integers(len(params.pois)))
        waypoint = near_poi(rng, params, poi)
    elif model is Model.RANDOM_WAYPOINT and pl.pause == 0:
        waypoint = random_point(rng, params)
    else:
        waypoint = pos
    speed = pl.speed if pl.speed is not None else random_speed(rng, params)
    return MobilityState(pos, waypoint, speed, pl.pause, model, poi), pl.sharing


def build_world(config: ScenarioConfig, seed: int) -> World:
    """Instantiate peers and random streams for one run."""
    root = np.random.SeedSequence(seed)
    population_seq, radio_seq, *peer_seqs = root.spawn(2 + 2 * config.peers)
    population = np.random.default_rng(population_seq)
    rparams = config.radio_params()
    mparams = config.mobility_params()
    fc = config.filter
    labels, tables, item_community = _generate_ratings(config, population)
    peers = []
    for i in range(config.peers):
        pid = _pseudo_id(population)
        filter_rng = np.random.default_rng(peer_seqs[2 * i])
        move_rng = np.random.default_rng(peer_seqs[2 * i + 1])
        mob, sharing = _initial_mobility(config, i, move_rng, mparams)
        enabled = bool(population.random() < config.sharing_fraction) if sharing is None else sharing
        prefs = PeerPreferenceList(pid, tables[i], fc.share_fraction)
        store = SimilarityStore(fc.k)
        nbhd = resample_neighborhood(prefs, store, fc.capacity, fc.n_draws, filter_rng, fc.self_weight)
        peers.append(
            PeerAgent(
                index=i,
                pseudo_id=pid,
                prefs=prefs,
                nbhd=nbhd,
                store=store,
                mobility=mob,
                energy=EnergyState(100.0, Mode.SHARING_ON if enabled else Mode.SHARING_OFF),
                sharing_enabled=enabled,
                community_label=labels[i],
                rng=filter_rng,
                move_rng=move_rng,
                inbox=deque(maxlen=config.output.inbox_limit),
            )
        )
    return World(
        config=config,
        peers=peers,
        radio=rparams,
        mobility=mparams,
        radio_rng=np.random.default_rng(radio_seq),
        item_community=item_community,
    )


def outgoing_message(peer: PeerAgent, timestamp: float) -> wire.ExchangeMessage:
    shared = shared_view(peer.prefs, peer.rng)
    ctx = ContextData(peer.position, timestamp)
    return wire.build_message(peer.pseudo_id, ctx, shared, peer.nbhd)


@dataclass(frozen=True)
class FilterResult:
    score: float | None
    admitted: bool


def absorb(peer: PeerAgent, payload: bytes, stamp: ContextData, fc: FilterConfig) -> FilterResult:
    """Receive one encoded message and run the filter pipeline on it.

    Only the receiving peer and the bytes it was sent are visible here.
    """
    message = wire.decode(payload)
    peer.inbox.append(Received(message, stamp, hashlib.sha256(payload).hexdigest()))
    theirs = wire.records_to_similarity(message.similarity_payload)
    score = cosine_similarity(SimilarityData(peer.prefs.ratings), theirs, fc.min_overlap)
    if score is None:
        return FilterResult(None, False)
    snapshot = wire.records_to_neighborhood(message.neighborhood_payload, fc.capacity)
    peer.store, admitted = admit_to_store(peer.store, message.sender, score, snapshot)
    if admitted:
        peer.nbhd = resample_neighborhood(
            peer.prefs, peer.store, fc.capacity, fc.n_draws, peer.rng, fc.self_weight
        )
        peer.recommendations = predict_ratings(peer.prefs, peer.nbhd, fc.top_n)
    return FilterResult(score, admitted)


class PrivacyViolation(AssertionError):
    pass


def _exchange(world: World, pair: tuple[int, int]) -> None:
    session = world.sessions[pair]
    if session.state is not State.EXCHANGING or session.distance > world.radio.radius:
        raise PrivacyViolation(f"exchange on pair {pair} without an in-range session")
    a, b = world.peers[pair[0]], world.peers[pair[1]]
    msg_a = outgoing_message(a, world.time)
    msg_b = outgoing_message(b, world.time)
    bytes_a = wire.encode(msg_a)
    bytes_b = wire.encode(msg_b)
    fc = world.config.filter
    res_b = absorb(b, bytes_a, ContextData(b.position, world.time), fc)
    res_a = absorb(a, bytes_b, ContextData(a.position, world.time), fc)
    world.bytes_exchanged += len(bytes_a) + len(bytes_b)
    world.success_payload_bytes += wire.payload_size(msg_a) + wire.payload_size(msg_b)
    world.events.append({
        "t": world.time, "type": "exchange", "a": pair[0], "b": pair[1],
        "bytes_ab": len(bytes_a), "bytes_ba": len(bytes_b),
        "sha256_ab": hashlib.sha256(bytes_a).hexdigest(),
        "sha256_ba": hashlib.sha256(bytes_b).hexdigest(),
    })
    for receiver, sender, res in ((pair[1], pair[0], res_b), (pair[0], pair[1], res_a)):
        world.events.append({
            "t": world.time, "type": "filter", "receiver": receiver, "sender": sender,
            "score": res.score, "admitted": res.admitted,
        })


def step(world: World) -> None:
    cfg = world.config
    dt = cfg.tick
    world.tick += 1
    world.time = world.tick * dt
    for p in world.peers:
        p.mobility = step_mobility(p.mobility, dt, p.move_rng, world.mobility)

    n = len(world.peers)
    if n > 1:
        dist = pairwise_distances([p.position for p in world.peers])
        ii, jj = np.nonzero(np.triu(dist <= world.radio.radius, k=1))
        now = set(zip(ii.tolist(), jj.tolist()))
    else:
        dist = None
        now = set()

    for pair in sorted(now - world.in_range):
        d = float(dist[pair])
        world.encounter_start[pair] = world.time
        world.contacts.add(pair)
        world.events.append({"t": world.time, "type": "encounter_start", "a": pair[0], "b": pair[1], "distance": d})
    for pair in sorted(world.in_range - now):
        start = world.encounter_start.pop(pair)
        world.session_opened.discard(pair)
        world.events.append({"t": world.time, "type": "encounter_end", "a": pair[0], "b": pair[1],
                             "duration": world.time - start})
    world.in_range = now

    for pair in sorted(now):
        if pair in world.session_opened:
            continue
        a, b = world.peers[pair[0]], world.peers[pair[1]]
        if not (a.sharing_enabled and b.sharing_enabled):
            continue
        d = float(dist[pair])
        world.sessions[pair] = LinkSession((a.pseudo_id, b.pseudo_id), d)
        world.session_opened.add(pair)
        world.events.append({"t": world.time, "type": "session_open", "a": pair[0], "b": pair[1], "distance": d})

    exchanging = []
    for pair in sorted(world.sessions):
        s = step_session(world.sessions[pair], dt, pair in now, world.radio_rng, world.radio, cfg.obstacles)
        world.sessions[pair] = s
        if s.state is State.EXCHANGING:
            exchanging.append(pair)
    # message effects are applied at a barrier, in pair order
    for pair in exchanging:
        _exchange(world, pair)
        world.sessions[pair] = step_session(world.sessions[pair], dt, pair in now, world.radio_rng,
                                            world.radio, cfg.obstacles)

    for pair in sorted(world.sessions):
        s = world.sessions[pair]
        if s.closed:
            world.outcomes[s.outcome.value] += 1
            world.events.append({"t": world.time, "type": "session_close", "a": pair[0], "b": pair[1],
                                 "outcome": s.outcome.value, "dwell": s.dwell})
            del world.sessions[pair]

    dt_h = dt / 3600.0
    for p in world.peers:
        p.energy = energy_tick(p.energy, dt_h, world.radio)


def coverage(world: World, item: str) -> float:
    """Fraction of peers whose neighborhood list holds ``item``."""
    if not world.peers:
        return 0.0
    return sum(item in p.nbhd.entries for p in world.peers) / len(world.peers)


def _community_coverage(world: World) -> list[tuple[float, float | None]]:
    """Per community: (mean coverage of its items among members,
    same among non-members or None when there are none)."""
    out = []
    for c in world.communities():
        items = [it for it, ic in world.item_community.items() if ic == c]
        inside = [p for p in world.peers if p.community_label == c]
        outside = [p for p in world.peers if p.community_label != c]
        if not items:
            continue

        def mean_cov(group):
            hits = sum(1 for p in group for it in items if it in p.nbhd.entries)
            return hits / (len(group) * len(items))

        out.append((mean_cov(inside), mean_cov(outside) if outside else None))
    return out


def flow_ratio(world: World) -> float:
    """Within-community over cross-community coverage of community items,
    averaged over communities. ``math.inf`` when some cross coverage is 0."""
    if len(world.communities()) < 2:
        raise ValueError("flow_ratio needs at least two communities")
    ratios = []
    for within, cross in _community_coverage(world):
        if not cross:
            return math.inf
        ratios.append(within / cross)
    if not ratios:
        return math.inf
    return sum(ratios) / len(ratios)


def relay_reachability(world: World, events: list[dict] | None = None) -> int:
    """Count (receiver, item) pairs where the receiver holds an item none of
    whose raters it was ever within radio range of."""
    events = world.events if events is None else events
    met: dict[int, set[int]] = {p.index: set() for p in world.peers}
    for ev in events:
        if ev["type"] == "encounter_start":
            met[ev["a"]].add(ev["b"])
            met[ev["b"]].add(ev["a"])
    origins = world.origins
    count = 0
    for p in world.peers:
        for item in p.nbhd.entries:
            raters = origins.get(item, frozenset())
            if p.index in raters or not raters:
                continue
            if raters.isdisjoint(met[p.index]):
                count += 1
    return count


def snapshot_metrics(world: World) -> MetricsRecord:
    counts = Counter()
    for p in world.peers:
        counts.update(p.nbhd.entries.keys())
    n = len(world.peers)
    cov = {it: counts[it] / n for it in sorted(world.item_community)}
    per_comm = _community_coverage(world)
    within = cross = ratio = None
    if len(world.communities()) >= 2:
        ratio = flow_ratio(world)
        within = sum(w for w, _ in per_comm) / len(per_comm)
        cross = sum(c for _, c in per_comm) / len(per_comm)
    elif per_comm:
        within = per_comm[0][0]
    return MetricsRecord(
        tick=world.tick,
        time=world.time,
        battery=tuple(p.energy.battery_pct for p in world.peers),
        outcomes={o: world.outcomes[o] for o in OUTCOMES},
        sessions_open=len(world.sessions),
        bytes_exchanged=world.bytes_exchanged,
        coverage=cov,
        within_coverage=within,
        cross_coverage=cross,
        flow_ratio=ratio,
    )


def run(
    config: ScenarioConfig,
    seed: int,
    ticks: int | None = None,
    on_tick: Callable[[World], None] | None = None,
) -> tuple[World, list[MetricsRecord]]:
    """Run a scenario to completion.

    Metrics are sampled at tick 0, every ``output.metrics_interval`` seconds
    and at the final tick.
    """
    world = build_world(config, seed)
    total = config.ticks if ticks is None else ticks
    every = max(1, round(config.output.metrics_interval / config.tick))
    records = [snapshot_metrics(world)]
    log.info("running %s seed=%d for %d ticks", config.name, seed, total)
    for t in range(1, total + 1):
        step(world)
        if on_tick is not None:
            on_tick(world)
        if t % every == 0 or t == total:
            records.append(snapshot_metrics(world))
    return world, records
