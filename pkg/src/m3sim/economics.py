"""Operator economics: utilities, tessellation search, offload negotiation.

The macrocell operator (MNO) earns revenue on users relayed to the base
station; a small-scale operator (SSO) serves users around its access
point.  Offloading hands selected macrocell users to the access point
for a negotiated per-utility price, which both operators walk in fixed
increments until their utility offsets balance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Iterable, Mapping, Sequence

from .chains import AbsorbingChain, ChainStatistics, absorption_statistics
from .compression import (
    CompressedStateVector,
    FullStateVector,
    aggregate_availability,
    climb_topology,
)
from .grid import Destinations, GridParams, SubcellGrid
from .radio import LinkContext, RadioParams, link_capacity, link_sinr
from .routing import (
    LAR,
    MDR,
    MMDR,
    ProtocolConfig,
    Route,
    RouteSet,
    ScenarioOverlay,
    build_mdr_chain,
    extract_routes,
    schedule,
    start_state,
)


class EconError(ValueError):
    pass


class NegotiationError(RuntimeError):
    """Raised when the price walk exhausts its iteration budget."""

    def __init__(self, message: str, trace: Sequence[tuple[float, float, float]]):
        super().__init__(message)
        self.trace = tuple(trace)


@dataclass(frozen=True)
class EconParams:
    """Revenue rates and the knobs of the price negotiation.

    ``price_bounds`` defaults to [sso_revenue, mno_revenue]; scenarios may
    widen it when the two revenues coincide.
    """

    mno_revenue: float = 2.0
    sso_revenue: float = 2.0
    reward_scale: float = 1.0
    price_step: float = 0.01
    tol: float = 1e-9
    max_iter: int = 100_000
    price_bounds: tuple[float, float] | None = None

    def __post_init__(self):
        if not self.mno_revenue >= self.sso_revenue > 0:
            raise EconError(
                "revenues must satisfy mno_revenue >= sso_revenue > 0, got "
                f"{self.mno_revenue!r} / {self.sso_revenue!r}"
            )
        if self.price_step <= 0:
            raise EconError(f"price step must be positive, got {self.price_step!r}")
        if self.tol <= 0:
            raise EconError(f"tolerance must be positive, got {self.tol!r}")
        if self.max_iter < 1:
            raise EconError("negotiation needs at least one iteration")
        lo, hi = self.bounds
        if not 0 < lo <= hi:
            raise EconError(f"price bounds must satisfy 0 < lo <= hi, got {(lo, hi)!r}")

    @property
    def bounds(self) -> tuple[float, float]:
        return self.price_bounds or (self.sso_revenue, self.mno_revenue)


# --------------------------------------------------------------------------
# traffic bookkeeping


@dataclass(frozen=True)
class TrafficState:
    """User sets of one traffic instant plus the step deltas.

    ``offload`` names the macrocell users the operators negotiate over; it
    must be drawn from the current (non-departing) base-station users.
    """

    bs_users: frozenset[str] = frozenset()
    wlan_users: frozenset[str] = frozenset()
    bs_arrivals: frozenset[str] = frozenset()
    wlan_arrivals: frozenset[str] = frozenset()
    bs_departures: frozenset[str] = frozenset()
    wlan_departures: frozenset[str] = frozenset()
    offload: frozenset[str] = frozenset()

    def __post_init__(self):
        if self.bs_users & self.wlan_users:
            raise EconError("a user cannot sit in both networks at once")
        if self.bs_arrivals & (self.bs_users | self.wlan_users):
            raise EconError("base-station arrivals must be new users")
        if self.wlan_arrivals & (self.bs_users | self.wlan_users | self.bs_arrivals):
            raise EconError("WLAN arrivals must be new users")
        if not self.bs_departures <= self.bs_users:
            raise EconError("base-station departures must be current users")
        if not self.wlan_departures <= self.wlan_users:
            raise EconError("WLAN departures must be current users")
        if not self.offload <= self.bs_users - self.bs_departures:
            raise EconError("offload candidates must be staying base-station users")


def apply_traffic_step(state: TrafficState) -> tuple[frozenset[str], frozenset[str]]:
    """Next (base-station, WLAN) user sets after arrivals, departures, offload."""
    bs_next = (state.bs_users | state.bs_arrivals) - state.bs_departures - state.offload
    wlan_next = (
        (state.wlan_users | state.wlan_arrivals) - state.wlan_departures
    ) | state.offload
    return bs_next, wlan_next


# --------------------------------------------------------------------------
# per-route performance


@dataclass(frozen=True)
class RouteMetrics:
    """Bottleneck capacity, total slot delay and energy cost of one user's route."""

    user: str
    capacity: float
    delay: float
    cost: float
    hops: int
    routed: bool = True

    @property
    def rate(self) -> float:
        """Capacity per slot of delay and watt of cost; zero when unrouted."""
        if not self.routed or not math.isfinite(self.delay):
            return 0.0
        return self.capacity / (self.delay * self.cost)


def user_utility(capacity: float, delay: float, cost: float, revenue: float) -> float:
    """Revenue-weighted rate of one user: revenue * C / (D * cost)."""
    if capacity == 0.0 or math.isinf(delay):
        return 0.0
    if delay <= 0 or cost <= 0:
        raise EconError(f"delay and cost must be positive, got {delay!r}, {cost!r}")
    return revenue * capacity / (delay * cost)


def network_utility(metrics: Iterable[RouteMetrics], revenue: float) -> float:
    """Sum of per-user utilities; unrouted users contribute nothing."""
    total = 0.0
    for m in metrics:
        if m.routed:
            total += user_utility(m.capacity, m.delay, m.cost, revenue)
    return total


def route_capacity(
    route: Route,
    slots: Mapping[tuple[int, int], int],
    radio: RadioParams,
    grid: SubcellGrid,
) -> float:
    """Bottleneck link capacity of a scheduled route.

    Each link's SINR counts every other transmitter sharing its slot (the
    link's own endpoints excluded).  Incomplete routes carry no capacity.
    """
    if not route.complete or not route.links:
        return 0.0
    worst = math.inf
    for tx, rx in route.links:
        slot = slots[(tx, rx)]
        others = sorted(
            {a for (a, b), s in slots.items() if s == slot and (a, b) != (tx, rx)}
            - {tx, rx}
        )
        ctx = LinkContext(
            tx=grid.cell(tx),
            rx=grid.cell(rx),
            interferers=tuple(grid.cell(a) for a in others),
        )
        worst = min(worst, link_capacity(link_sinr(ctx, radio, grid), radio.log_base))
    return worst


def expected_route_delay(
    chain: AbsorbingChain,
    stats: ChainStatistics,
    origin: int,
    config: ProtocolConfig,
) -> float:
    """Mean slots until absorption for a route-discovery walk from ``origin``.

    Round-robin protocols pay the full cycle per hop on a unit-dwell chain;
    the two-mode chain already carries per-mode dwell times.  Origins that
    can only end at the no-route state get an infinite delay.
    """
    idx = chain.transient_index(start_state(config, origin))
    if stats.absorb_probs[idx, :-1].sum() <= 0.0:
        return math.inf
    tau = float(stats.tau[idx])
    if config.kind in (MDR, MMDR, LAR):
        return config.K * tau
    return tau


def scheduled_route_delay(route: Route, cycle_length: int) -> float:
    """Slots to drain a deterministic route: one cycle per hop."""
    if not route.complete:
        return math.inf
    return len(route.links) * cycle_length


def route_cost(route: Route, radio: RadioParams) -> float:
    """Transmit energy of one pass over the route (at least one transmission)."""
    return radio.power * max(len(route.links), 1)


def expected_route_cost(radio: RadioParams, tau: float) -> float:
    """Energy of the probabilistic route: power times mean hop count."""
    return radio.power * tau


def network_capacity_throughput(
    route_set: RouteSet, radio: RadioParams, grid: SubcellGrid
) -> tuple[float, float]:
    """Total capacity of the scheduled routes and its per-slot throughput."""
    slots = route_set.slot_of()
    total = sum(route_capacity(r, slots, radio, grid) for r in route_set.complete_routes)
    if route_set.cycle_length <= 0:
        return total, 0.0
    return total, total / route_set.cycle_length


# --------------------------------------------------------------------------
# tessellation search

# Fixed population of twelve terminals as (radius fraction, bearing degrees)
# around the base station; the same physical constellation re-snaps onto
# whatever subcell grid is being evaluated.
DEFAULT_USER_SITES: tuple[tuple[float, float], ...] = (
    (0.6227, 236.69),
    (0.7532, 51.34),
    (0.3074, 134.91),
    (0.4864, 291.73),
    (0.7696, 216.52),
    (0.6796, 238.08),
    (0.3988, 158.42),
    (0.4103, 326.15),
    (0.3400, 294.78),
    (0.3507, 247.30),
    (0.5292, 145.66),
    (0.8728, 6.70),
)


def snap_sites(
    grid: SubcellGrid, sites: Sequence[tuple[float, float]]
) -> list[int]:
    """Nearest subcell index for each physical (radius fraction, bearing) site."""
    out = []
    radius = grid.params.R

    def gap(cell, x: float, y: float) -> tuple[float, int]:
        cx, cy = grid.center_position(cell)
        return (cx - x) ** 2 + (cy - y) ** 2, cell.i

    for frac, bearing in sites:
        x = frac * radius * math.cos(math.radians(bearing))
        y = frac * radius * math.sin(math.radians(bearing))
        best = min((c for c in grid.cells if c.h > 0), key=lambda c: gap(c, x, y))
        out.append(best.i)
    return out


def macrocell_utility(
    h: int,
    power: float,
    *,
    sites: Sequence[tuple[float, float]] = DEFAULT_USER_SITES,
    availability: float = 1.0,
    macro_radius: float = 1000.0,
    cluster: int = 7,
    alpha: float = 2.0,
    noise: float = 1e-4,
    revenue: float = 2.0,
    log_base: float = 2.0,
) -> float:
    """Total uplink utility of the fixed user population on an H-ring grid.

    Users snap to their nearest subcell and relay to the base station over
    minimum-distance routes sharing the round-robin schedule; utility is
    revenue * C / (K*tau * P*tau) per occupied subcell, with tau the mean
    discovery time at the given availability.  Co-located users share their
    subcell's route, so each occupied subcell contributes once: a coarser
    grid merges users rather than multiplying demand.
    """
    grid = SubcellGrid(GridParams(H=h, R=macro_radius, K=cluster))
    dest = Destinations(bs=grid.cell(0))
    radio = RadioParams(power=power, alpha=alpha, noise=noise, log_base=log_base)
    config = ProtocolConfig(kind=MDR, p=availability, K=cluster)

    occupied = sorted(set(snap_sites(grid, sites)))
    overlay = ScenarioOverlay(sources=tuple(occupied))
    route_set = schedule(extract_routes(grid, dest, overlay, config), config, grid)
    slots = route_set.slot_of()

    chain = build_mdr_chain(grid, dest, availability)
    stats = absorption_statistics(chain)

    total = 0.0
    for route in route_set.routes:
        cap = route_capacity(route, slots, radio, grid)
        if cap <= 0.0:
            continue
        tau = float(stats.tau[chain.transient_index(route.source)])
        delay = cluster * tau
        cost = radio.power * tau
        total += user_utility(cap, delay, cost, revenue)
    return total


@dataclass(frozen=True)
class TessellationResult:
    """Exhaustive utility surface over (H, P) plus both search answers."""

    surface: Mapping[tuple[int, float], float]
    best: tuple[int, float]
    argmax_h: Mapping[float, int]
    climb_h: Mapping[float, int]


def optimize_tessellation(
    h_values: Sequence[int],
    powers: Sequence[float],
    **utility_kwargs,
) -> TessellationResult:
    """Evaluate the utility surface and locate the best ring count per power.

    Alongside the exhaustive argmax, a local hill climb over H (started from
    the middle of the range) is reported for comparison.
    """
    if not h_values or not powers:
        raise EconError("tessellation search needs at least one H and one power")
    hs = sorted(set(h_values))
    surface: dict[tuple[int, float], float] = {}
    for h in hs:
        for p in powers:
            surface[(h, p)] = macrocell_utility(h, p, **utility_kwargs)

    argmax_h = {}
    climb_h = {}
    for p in powers:
        argmax_h[p] = max(hs, key=lambda h: (surface[(h, p)], -h))
        cache = {h: surface[(h, p)] for h in hs}

        def utility(h: int, _power=p, _cache=cache) -> float:
            if h not in _cache:
                _cache[h] = macrocell_utility(h, _power, **utility_kwargs)
            return _cache[h]

        start = hs[len(hs) // 2]
        climb_h[p] = climb_topology(start, utility, h_min=min(hs), h_max=max(hs))

    best = max(surface, key=lambda hp: (surface[hp], -hp[0], -hp[1]))
    return TessellationResult(
        surface=surface, best=best, argmax_h=argmax_h, climb_h=climb_h
    )


def state_utility(
    vector: FullStateVector | CompressedStateVector,
    power: float,
    *,
    sites: Sequence[tuple[float, float]] = DEFAULT_USER_SITES,
    macro_radius: float = 1000.0,
    cluster: int = 7,
    alpha: float = 2.0,
    noise: float = 1e-4,
    revenue: float = 2.0,
) -> float:
    """Utility of the grid described by a full or compressed state vector.

    The full vector's availability is re-aggregated from its constituent
    probabilities; the compressed vector carries it directly.  Both forms
    must therefore score identically.
    """
    if isinstance(vector, FullStateVector):
        p = aggregate_availability(vector.p_a, vector.p_phi, vector.p_o)
    else:
        p = vector.p
    return macrocell_utility(
        vector.H,
        power,
        sites=sites,
        availability=p,
        macro_radius=macro_radius,
        cluster=cluster,
        alpha=alpha,
        noise=noise,
        revenue=revenue,
    )


# --------------------------------------------------------------------------
# availability sweeps


def expected_network_capacity(
    grid: SubcellGrid,
    dest: Destinations,
    radio: RadioParams,
    availability: float,
    cluster: int = 7,
) -> float:
    """Capacity deliverable from every subcell, weighted by discovery success.

    Each non-destination subcell contributes its scheduled route's bottleneck
    capacity times the probability that a discovery walk from it ends at a
    destination rather than the no-route state.
    """
    config = ProtocolConfig(kind=MDR, p=availability, K=cluster)
    sources = tuple(
        c.i for c in grid.cells if c.h > 0 and c.i not in dest.indices()
    )
    overlay = ScenarioOverlay(sources=sources)
    route_set = schedule(extract_routes(grid, dest, overlay, config), config, grid)
    slots = route_set.slot_of()

    chain = build_mdr_chain(grid, dest, availability)
    stats = absorption_statistics(chain)

    total = 0.0
    for route in route_set.routes:
        idx = chain.transient_index(route.source)
        success = float(stats.absorb_probs[idx, :-1].sum())
        total += success * route_capacity(route, slots, radio, grid)
    return total


def cooperation_capacity_ratio(
    grid: SubcellGrid,
    dest: Destinations,
    radio: RadioParams,
    *,
    idle: float = 0.6,
    visibility: float = 1.0,
    presence: float = 0.5,
    cluster: int = 7,
) -> tuple[float, float, float]:
    """Capacity gain from pooling two operators' subscribers.

    Returns (capacity ratio, single-operator availability, two-operator
    availability); the ratio compares expected network capacity at the two
    aggregated availabilities.
    """
    single = aggregate_availability(idle, visibility, [presence])
    double = aggregate_availability(idle, visibility, [presence, presence])
    c_single = expected_network_capacity(grid, dest, radio, single, cluster)
    c_double = expected_network_capacity(grid, dest, radio, double, cluster)
    if c_single <= 0.0:
        raise EconError("single-operator capacity vanished; cannot form a ratio")
    return c_double / c_single, single, double


# --------------------------------------------------------------------------
# offloading


@dataclass(frozen=True)
class OffloadContext:
    """Static side of an offload study: geometry, radio and user placement."""

    grid: SubcellGrid
    dest: Destinations
    radio: RadioParams
    placements: Mapping[str, int]

    def __post_init__(self):
        if not self.dest.aps:
            raise EconError("offloading needs at least one access point")
        blocked = self.dest.indices()
        for user, cell in self.placements.items():
            if not 0 < cell < len(self.grid.cells):
                raise EconError(f"user {user!r} placed on unknown subcell {cell!r}")
            if cell in blocked:
                raise EconError(f"user {user!r} sits on a destination subcell")

    @property
    def wlan_domain(self) -> frozenset[int]:
        """Subcells on WLAN spectrum: the access points and their coverage."""
        cells = {a.i for a in self.dest.aps}
        for cluster in self.dest.coverage:
            cells.update(c.i for c in cluster)
        return frozenset(cells)


def _routes_toward(ctx: OffloadContext, cells: Iterable[int], to_ap: bool) -> dict[int, Route]:
    cells = sorted(set(cells))
    if not cells:
        return {}
    if to_ap:
        dest = Destinations(bs=None, aps=ctx.dest.aps, coverage=ctx.dest.coverage)
    else:
        dest = Destinations(bs=ctx.dest.bs)
    config = ProtocolConfig(kind=MDR, p=1.0, K=ctx.grid.params.K)
    overlay = ScenarioOverlay(sources=tuple(cells))
    route_set = extract_routes(ctx.grid, dest, overlay, config)
    return {r.source: r for r in route_set.routes}


def _instant_metrics(
    ctx: OffloadContext, routes: Mapping[str, Route]
) -> tuple[dict[str, RouteMetrics], float, float, int]:
    """Metrics for every user of one traffic instant.

    Links whose endpoints both sit in the WLAN domain run on the access
    point's sequential schedule: every user's hop gets its own slot (a
    shared relay transmits once per user), so the cycle counts link
    instances and there is no co-slot interference.  All other links share
    the macrocell's color round robin.  Returns the per-user metrics plus
    the macro and WLAN capacity sums and the WLAN cycle length.
    """
    grid, radio = ctx.grid, ctx.radio
    domain = ctx.wlan_domain
    cluster = grid.params.K

    macro_links: list[tuple[int, int]] = []
    wlan_cycle = 0
    seen = set()
    for route in routes.values():
        for link in route.links:
            if link[0] in domain and link[1] in domain:
                wlan_cycle += 1
                seen.add(link)
            elif link not in seen:
                seen.add(link)
                macro_links.append(link)

    macro_slots = {l: grid.cluster_color(grid.cell(l[0])) for l in macro_links}
    by_slot: dict[int, set[int]] = {}
    for (tx, _rx), slot in macro_slots.items():
        by_slot.setdefault(slot, set()).add(tx)

    def link_perf(link: tuple[int, int]) -> tuple[float, float]:
        tx, rx = link
        if link[0] in domain and link[1] in domain:
            lctx = LinkContext(tx=grid.cell(tx), rx=grid.cell(rx))
            return link_capacity(link_sinr(lctx, radio, grid), radio.log_base), float(
                max(wlan_cycle, 1)
            )
        others = sorted(by_slot[macro_slots[link]] - {tx, rx})
        lctx = LinkContext(
            tx=grid.cell(tx),
            rx=grid.cell(rx),
            interferers=tuple(grid.cell(a) for a in others),
        )
        return link_capacity(link_sinr(lctx, radio, grid), radio.log_base), float(cluster)

    perf = {l: link_perf(l) for l in seen}

    metrics: dict[str, RouteMetrics] = {}
    macro_capacity = 0.0
    wlan_capacity = 0.0
    for user, route in routes.items():
        if not route.complete or not route.links:
            metrics[user] = RouteMetrics(user, 0.0, math.inf, radio.power, 0, routed=False)
            continue
        caps, waits = zip(*(perf[l] for l in route.links))
        cap = min(caps)
        metrics[user] = RouteMetrics(
            user=user,
            capacity=cap,
            delay=float(sum(waits)),
            cost=radio.power * len(route.links),
            hops=len(route.links),
        )
        if all(l[0] in domain and l[1] in domain for l in route.links):
            wlan_capacity += cap
        else:
            macro_capacity += cap
    return metrics, macro_capacity, wlan_capacity, wlan_cycle


@dataclass(frozen=True)
class OffloadBreakdown:
    """Price-independent rate sums of one offload step (before and after)."""

    bs_before: float
    wlan_before: float
    bs_after: float
    wlan_after: float
    offload_after: float
    metrics_before: Mapping[str, RouteMetrics]
    metrics_after: Mapping[str, RouteMetrics]
    macro_capacity: float
    wlan_capacity: float
    wlan_cycle: int


def offload_breakdown(ctx: OffloadContext, state: TrafficState) -> OffloadBreakdown:
    """Evaluate both traffic instants of one offload step.

    The price and revenues enter the offsets linearly, so everything
    price-dependent reduces to these per-group rate sums.
    """
    missing = (
        state.bs_users | state.wlan_users | state.bs_arrivals | state.wlan_arrivals
    ) - set(ctx.placements)
    if missing:
        raise EconError(f"users without placements: {sorted(missing)}")

    def rates(users: Iterable[str], metrics: Mapping[str, RouteMetrics]) -> float:
        return sum(metrics[u].rate for u in users)

    bs_routes = _routes_toward(ctx, (ctx.placements[u] for u in state.bs_users), False)
    ap_routes = _routes_toward(ctx, (ctx.placements[u] for u in state.wlan_users), True)
    routes_before: dict[str, Route] = {}
    for u in state.bs_users:
        routes_before[u] = bs_routes[ctx.placements[u]]
    for u in state.wlan_users:
        routes_before[u] = ap_routes[ctx.placements[u]]
    before, _, _, _ = _instant_metrics(ctx, routes_before)

    bs_next, wlan_next = apply_traffic_step(state)
    bs_routes2 = _routes_toward(ctx, (ctx.placements[u] for u in bs_next), False)
    ap_routes2 = _routes_toward(ctx, (ctx.placements[u] for u in wlan_next), True)
    routes_after: dict[str, Route] = {}
    for u in bs_next:
        routes_after[u] = bs_routes2[ctx.placements[u]]
    for u in wlan_next:
        routes_after[u] = ap_routes2[ctx.placements[u]]
    after, macro_cap, wlan_cap, wlan_link_count = _instant_metrics(ctx, routes_after)

    return OffloadBreakdown(
        bs_before=rates(state.bs_users, before),
        wlan_before=rates(state.wlan_users, before),
        bs_after=rates(bs_next, after),
        wlan_after=rates(wlan_next - state.offload, after),
        offload_after=rates(state.offload, after),
        metrics_before=before,
        metrics_after=after,
        macro_capacity=macro_cap,
        wlan_capacity=wlan_cap,
        wlan_cycle=wlan_link_count,
    )


def _check_price(chi: float, econ: EconParams) -> None:
    lo, hi = econ.bounds
    if not lo <= chi <= hi:
        raise EconError(f"price {chi!r} outside the agreed bounds [{lo}, {hi}]")


def mno_offset(
    ctx: OffloadContext, state: TrafficState, chi: float, econ: EconParams
) -> float:
    """Macrocell operator's utility change from the step at price ``chi``."""
    _check_price(chi, econ)
    b = offload_breakdown(ctx, state)
    return _mno_offset_from(b, chi, econ)


def sso_offset(
    ctx: OffloadContext, state: TrafficState, chi: float, econ: EconParams
) -> float:
    """Access-point operator's utility change from the step at price ``chi``."""
    _check_price(chi, econ)
    b = offload_breakdown(ctx, state)
    return _sso_offset_from(b, chi, econ)


def _mno_offset_from(b: OffloadBreakdown, chi: float, econ: EconParams) -> float:
    return (
        econ.mno_revenue * (b.bs_after - b.bs_before)
        + (econ.mno_revenue - chi) * b.offload_after
    )


def _sso_offset_from(b: OffloadBreakdown, chi: float, econ: EconParams) -> float:
    return (
        econ.sso_revenue * (b.wlan_after - b.wlan_before) + chi * b.offload_after
    )


@dataclass(frozen=True)
class OffloadReport:
    """Before/after utility accounting of one offload step at a fixed price."""

    mno_before: float
    mno_after: float
    sso_before: float
    sso_after: float
    delta_mno: float
    delta_sso: float
    capacity: float
    throughput: float
    per_user: Mapping[str, RouteMetrics]


def evaluate_offload(
    ctx: OffloadContext, state: TrafficState, chi: float, econ: EconParams
) -> OffloadReport:
    """Utility ledger of one offload step at price ``chi``."""
    _check_price(chi, econ)
    b = offload_breakdown(ctx, state)
    mno_after = econ.mno_revenue * b.bs_after + (econ.mno_revenue - chi) * b.offload_after
    sso_after = econ.sso_revenue * b.wlan_after + chi * b.offload_after
    throughput = b.macro_capacity / ctx.grid.params.K
    if b.wlan_cycle:
        throughput += b.wlan_capacity / b.wlan_cycle
    return OffloadReport(
        mno_before=econ.mno_revenue * b.bs_before,
        mno_after=mno_after,
        sso_before=econ.sso_revenue * b.wlan_before,
        sso_after=sso_after,
        delta_mno=_mno_offset_from(b, chi, econ),
        delta_sso=_sso_offset_from(b, chi, econ),
        capacity=b.macro_capacity + b.wlan_capacity,
        throughput=throughput,
        per_user=b.metrics_after,
    )


# --------------------------------------------------------------------------
# negotiation


@dataclass(frozen=True)
class NegotiationResult:
    """Outcome of the price walk.

    ``price`` is the best in-bounds offer; ``crossing`` estimates where the
    offsets actually meet (it may fall outside the bounds, in which case the
    verdict is "no-offload" whenever it exceeds the MNO revenue).
    """

    price: float
    crossing: float | None
    verdict: str
    offload: frozenset[str]
    delta_mno: float
    delta_sso: float
    iterations: int
    converged: bool
    trace: tuple[tuple[float, float, float], ...]


def _secant_crossing(
    a: tuple[float, float], b: tuple[float, float]
) -> float | None:
    (chi_a, gap_a), (chi_b, gap_b) = a, b
    if chi_a == chi_b or gap_a == gap_b:
        return None
    return chi_a - gap_a * (chi_b - chi_a) / (gap_b - gap_a)


def negotiate_price(
    delta_mno: Callable[[float, frozenset[str]], float],
    delta_sso: Callable[[float, frozenset[str]], float],
    econ: EconParams,
    *,
    offload: frozenset[str] = frozenset(),
    candidates: Sequence[str] = (),
    adapt_set: bool = False,
    chi0: float | None = None,
) -> NegotiationResult:
    """Walk the price in fixed steps until the two offsets balance.

    The offer moves down when the SSO's offset leads and up when it trails;
    in set-adapting mode each iteration additionally grows or shrinks the
    offload set by the user with the largest/smallest marginal MNO offset.
    The walk ends at equilibrium (within tolerance), when it starts cycling
    (the best probed point wins), or pinned at a bound, where the crossing
    is extrapolated from the last two probes.
    """
    lo, hi = econ.bounds
    step = econ.price_step
    if chi0 is None:
        chi0 = (lo + hi) / 2.0
    chi0 = min(max(chi0, lo), hi)
    current = frozenset(offload)
    pool = tuple(sorted(set(candidates) | current))

    def chi_at(k: int) -> float:
        return min(max(chi0 + k * step, lo), hi)

    k = 0
    visited: set[tuple[float, frozenset[str]]] = set()
    trace: list[tuple[float, float, float]] = []
    best: tuple[float, float, frozenset[str], float, float] | None = None
    prev: tuple[float, float, frozenset[str]] | None = None

    for _ in range(econ.max_iter):
        chi = chi_at(k)
        d_mno = delta_mno(chi, current)
        d_sso = delta_sso(chi, current)
        gap = d_mno - d_sso
        trace.append((chi, d_mno, d_sso))
        if best is None or abs(gap) < abs(best[1]):
            best = (chi, gap, current, d_mno, d_sso)

        if abs(gap) <= econ.tol:
            return NegotiationResult(
                price=chi,
                crossing=chi,
                verdict="offload",
                offload=current,
                delta_mno=d_mno,
                delta_sso=d_sso,
                iterations=len(trace) - 1,
                converged=True,
                trace=tuple(trace),
            )

        key = (chi, current)
        if key in visited:
            # The walk is cycling; settle on the best point probed so far.
            crossing = None
            if prev is not None and prev[2] == current and (prev[1] > 0) != (gap > 0):
                crossing = _secant_crossing((prev[0], prev[1]), (chi, gap))
            b_chi, b_gap, b_set, b_mno, b_sso = best
            return NegotiationResult(
                price=b_chi,
                crossing=crossing if crossing is not None else b_chi,
                verdict="offload",
                offload=b_set,
                delta_mno=b_mno,
                delta_sso=b_sso,
                iterations=len(trace) - 1,
                converged=True,
                trace=tuple(trace),
            )
        visited.add(key)

        k_next = k - 1 if d_sso > d_mno else k + 1
        next_set = current
        if adapt_set:
            next_set = _adjust_offload(delta_mno, chi, current, pool, d_mno, d_sso)

        if chi_at(k_next) == chi and next_set == current:
            # Pinned at a bound: estimate the out-of-bounds crossing.
            probe = chi - step if chi >= hi else chi + step
            probe = min(max(probe, lo), hi)
            crossing = None
            if probe != chi:
                gap_probe = delta_mno(probe, current) - delta_sso(probe, current)
                crossing = _secant_crossing((chi, gap), (probe, gap_probe))
            verdict = (
                "no-offload"
                if crossing is None or crossing > econ.mno_revenue
                else "offload"
            )
            return NegotiationResult(
                price=chi,
                crossing=crossing,
                verdict=verdict,
                offload=current,
                delta_mno=d_mno,
                delta_sso=d_sso,
                iterations=len(trace) - 1,
                converged=False,
                trace=tuple(trace),
            )

        prev = (chi, gap, current)
        k = k_next
        current = next_set

    raise NegotiationError(
        f"no equilibrium after {econ.max_iter} iterations", trace
    )


def _adjust_offload(
    delta_mno: Callable[[float, frozenset[str]], float],
    chi: float,
    current: frozenset[str],
    pool: Sequence[str],
    d_mno: float,
    d_sso: float,
) -> frozenset[str]:
    """One set move of the joint walk: grow when trailing, shrink when leading."""
    if d_sso > d_mno:
        additions = [u for u in pool if u not in current]
        if not additions:
            return current
        gains = {u: delta_mno(chi, current | {u}) - d_mno for u in additions}
        pick = max(additions, key=lambda u: (gains[u], u))
        return current | {pick}
    if len(current) > 1:
        losses = {u: d_mno - delta_mno(chi, current - {u}) for u in current}
        pick = min(sorted(current), key=lambda u: (losses[u], u))
        return current - {pick}
    return current


def negotiate(
    ctx: OffloadContext,
    state: TrafficState,
    econ: EconParams,
    mode: str = "price",
    chi0: float | None = None,
) -> NegotiationResult:
    """Negotiate the offload price (and optionally the set) for one step."""
    if mode not in ("price", "price-and-set"):
        raise EconError(f"unknown negotiation mode {mode!r}")
    if not state.offload:
        raise EconError("negotiation needs a non-empty starting offload set")

    cache: dict[frozenset[str], OffloadBreakdown] = {}

    def breakdown(off: frozenset[str]) -> OffloadBreakdown:
        if off not in cache:
            cache[off] = offload_breakdown(ctx, replace(state, offload=off))
        return cache[off]

    def d_mno(chi: float, off: frozenset[str]) -> float:
        return _mno_offset_from(breakdown(off), chi, econ)

    def d_sso(chi: float, off: frozenset[str]) -> float:
        return _sso_offset_from(breakdown(off), chi, econ)

    candidates: tuple[str, ...] = ()
    if mode == "price-and-set":
        candidates = tuple(sorted(state.bs_users - state.bs_departures))
    return negotiate_price(
        d_mno,
        d_sso,
        econ,
        offload=state.offload,
        candidates=candidates,
        adapt_set=(mode == "price-and-set"),
        chi0=chi0,
    )
