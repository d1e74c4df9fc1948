"""Route discovery protocols over the subcell lattice.

Two probabilistic protocols are modeled as absorbing chains:

* MDR (minimum-distance routing): every hop tries the neighbours in order
  of distance to the nearest destination; the n-th ranked neighbour relays
  with probability p(1-p)**(n-1), where p is the availability of a single
  terminal.  Transmissions ride a K-slot round-robin schedule, so each hop
  dwells K slots.
* LIR (low-interference routing): relaying prefers a coordinated mode in
  which every active transmitter hands over to a relay of one reuse color
  simultaneously, which costs a single slot but requires the whole color
  class to be available at once (probability q = p**N_color).  When
  coordination fails the protocol falls back to a plain minimum-distance
  hop for one round.  The chain doubles every subcell state into
  (coordinated, fallback) copies with dwell times 1 and K.

Their deterministic counterparts mMDR and mLIR route around an explicit
set of unavailable subcells, and LAR (load-aware routing) additionally
spreads routes by penalizing already-loaded relays.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Hashable

from .chains import NO_ROUTE, AbsorbingChain, build_chain
from .grid import Destinations, GridError, SubcellGrid, SubcellId

MDR = "MDR"
LIR = "LIR"
MMDR = "mMDR"
MLIR = "mLIR"
LAR = "LAR"

KINDS = (MDR, LIR, MMDR, MLIR, LAR)

# LIR state tags: coordinated same-color relaying vs minimum-distance fallback.
COORD = "coord"
FALLBACK = "fallback"


class RoutingError(ValueError):
    """Invalid protocol configuration or unroutable request."""


@dataclass(frozen=True)
class ProtocolConfig:
    """Protocol selection and its knobs.

    ``dwell_mdr`` defaults to the schedule cycle K; ``interference_threshold``
    is the center-distance ratio below which two links may not share a slot;
    ``relay_color`` pins the coordinated relay color (otherwise the most
    populated color class is assumed when sizing availability, and route
    extraction searches all colors); ``allow_fallback`` lets deterministic
    mLIR routes fall back to minimum-distance hops when no relay of the
    chosen color is reachable.
    """

    kind: str = MDR
    p: float = 1.0
    K: int = 7
    dwell_mdr: float | None = None
    dwell_lir: float = 1.0
    interference_threshold: float = 1.0
    relay_color: int | None = None
    allow_fallback: bool = True

    def __post_init__(self):
        if self.kind not in KINDS:
            raise RoutingError(f"unknown protocol kind {self.kind!r}, expected one of {KINDS}")
        if not 0.0 <= self.p <= 1.0:
            raise RoutingError(f"availability p must lie in [0, 1], got {self.p!r}")
        if self.K < 1:
            raise RoutingError(f"cycle length K must be >= 1, got {self.K!r}")
        if self.relay_color is not None and not 0 <= self.relay_color < 7:
            raise RoutingError(f"relay color must lie in 0..6, got {self.relay_color!r}")
        if self.interference_threshold < 0:
            raise RoutingError("interference threshold cannot be negative")

    @property
    def mdr_dwell(self) -> float:
        return float(self.K) if self.dwell_mdr is None else self.dwell_mdr


@dataclass(frozen=True)
class ScenarioOverlay:
    """Deterministic availability: sources and unavailable subcells by index.

    ``source_colors`` carries declared reuse colors for sources when a
    scenario file annotates them; ``k0`` optionally pins the mLIR relay
    color.
    """

    sources: tuple[int, ...]
    unavailable: frozenset[int] = frozenset()
    k0: int | None = None
    source_colors: tuple[int | None, ...] = ()
    name: str = ""

    def __post_init__(self):
        if set(self.sources) & self.unavailable:
            raise RoutingError("a source subcell cannot be unavailable")
        if len(set(self.sources)) != len(self.sources):
            raise RoutingError("duplicate source subcells")
        if self.k0 is not None and not 0 <= self.k0 < 7:
            raise RoutingError(f"k0 must lie in 0..6, got {self.k0!r}")


# --------------------------------------------------------------------------
# probabilistic transition models


def rank_probabilities(p: float, count: int) -> tuple[list[float], float]:
    """Geometric try-in-order law: n-th ranked candidate gets p(1-p)**(n-1).

    Returns the per-rank probabilities and the residual mass (no candidate
    available) that flows to the no-route state.
    """
    if not 0.0 <= p <= 1.0:
        raise RoutingError(f"availability p must lie in [0, 1], got {p!r}")
    probs = [p * (1.0 - p) ** n for n in range(count)]
    return probs, (1.0 - p) ** count


def mdr_transition_row(
    grid: SubcellGrid,
    dest: Destinations,
    cell: SubcellId,
    p: float,
) -> tuple[list[tuple[Hashable, float]], float]:
    """Outgoing MDR transitions of one subcell: ranked neighbours plus no-route."""
    if cell.i in dest.indices():
        raise RoutingError(f"subcell {cell.i} is a destination, not a relay source")
    ranked = grid.neighbors_ranked(cell, dest)
    probs, residual = rank_probabilities(p, len(ranked))
    row: list[tuple[Hashable, float]] = [(n.i, pr) for n, pr in zip(ranked, probs)]
    row.append((NO_ROUTE, residual))
    return row, residual


def coordination_probability(p: float, n_color: int) -> float:
    """Probability that a whole color class of n_color relays is available at once."""
    if n_color < 0:
        raise RoutingError(f"color population cannot be negative, got {n_color}")
    return p**n_color


def coordinated_color_population(
    grid: SubcellGrid, dest: Destinations, relay_color: int | None = None
) -> int:
    """Size of the color class that must be simultaneously available.

    Counted over ring subcells that are not destinations.  When no color is
    pinned the largest class is used, ties resolving to the smaller color.
    """
    pops = grid.color_populations(exclude=dest.indices())
    if relay_color is not None:
        return pops[relay_color]
    return max(pops)


def lir_transition_rows(
    grid: SubcellGrid,
    dest: Destinations,
    cell: SubcellId,
    p: float,
    n_color: int,
) -> dict[str, list[tuple[Hashable, float]]]:
    """Outgoing LIR transitions for both copies of one subcell state.

    From the coordinated copy, the n-th ranked neighbour receives
    q(1-q)**(n-1), split between staying coordinated (weight 1 - q0) and
    dropping to fallback (weight q0), where q = p**n_color and q0 is the
    residual of the coordinated law; the residual itself is lost to
    no-route.  The fallback copy relays by the plain availability law and
    returns to the coordinated copy with weight 1 - q0.  Destination
    neighbours absorb regardless of mode.
    """
    if cell.i in dest.indices():
        raise RoutingError(f"subcell {cell.i} is a destination, not a relay source")
    ranked = grid.neighbors_ranked(cell, dest)
    dest_idx = dest.indices()
    q = coordination_probability(p, n_color)
    coord_probs, coord_residual = rank_probabilities(q, len(ranked))
    fall_probs, fall_residual = rank_probabilities(p, len(ranked))

    def target(neighbor: SubcellId, mode: str) -> Hashable:
        return neighbor.i if neighbor.i in dest_idx else (neighbor.i, mode)

    coord_row: list[tuple[Hashable, float]] = []
    fall_row: list[tuple[Hashable, float]] = []
    for n, cp, fp in zip(ranked, coord_probs, fall_probs):
        coord_row.append((target(n, COORD), cp * (1.0 - coord_residual)))
        coord_row.append((target(n, FALLBACK), cp * coord_residual))
        fall_row.append((target(n, FALLBACK), fp * coord_residual))
        fall_row.append((target(n, COORD), fp * (1.0 - coord_residual)))
    coord_row.append((NO_ROUTE, coord_residual))
    fall_row.append((NO_ROUTE, fall_residual))
    return {COORD: coord_row, FALLBACK: fall_row}


def build_mdr_chain(
    grid: SubcellGrid,
    dest: Destinations,
    p: float,
    dwell: float = 1.0,
) -> AbsorbingChain:
    """MDR absorbing chain over all non-destination subcells.

    Absorbing states are the access points (in placement order), the base
    station, then no-route; state labels are linear subcell indices.
    """
    dest_idx = dest.indices()
    rows = {}
    for cell in grid.cells:
        if cell.i in dest_idx:
            continue
        row, _ = mdr_transition_row(grid, dest, cell, p)
        rows[cell.i] = row
    absorbing = [c.i for c in dest.absorbing_cells()] + [NO_ROUTE]
    return build_chain(rows, absorbing, dwell)


def build_lir_chain(
    grid: SubcellGrid,
    dest: Destinations,
    p: float,
    config: ProtocolConfig,
) -> AbsorbingChain:
    """LIR absorbing chain with doubled (coordinated, fallback) subcell states.

    Walks start in the coordinated copy; dwell is ``config.dwell_lir`` for
    coordinated states and the round-robin cycle for fallback states.
    """
    dest_idx = dest.indices()
    n_color = coordinated_color_population(grid, dest, config.relay_color)
    rows = {}
    dwell = {}
    for cell in grid.cells:
        if cell.i in dest_idx:
            continue
        pair = lir_transition_rows(grid, dest, cell, p, n_color)
        rows[(cell.i, COORD)] = pair[COORD]
        dwell[(cell.i, COORD)] = config.dwell_lir
        rows[(cell.i, FALLBACK)] = pair[FALLBACK]
        dwell[(cell.i, FALLBACK)] = config.mdr_dwell
    absorbing = [c.i for c in dest.absorbing_cells()] + [NO_ROUTE]
    return build_chain(rows, absorbing, dwell)


def start_state(config: ProtocolConfig, cell_index: int) -> Hashable:
    """Chain state in which a walk from the given subcell begins."""
    return (cell_index, COORD) if config.kind in (LIR, MLIR) else cell_index


# --------------------------------------------------------------------------
# deterministic route extraction


@dataclass(frozen=True)
class Route:
    """One extracted route: subcell index sequence from source to destination.

    ``reached`` is the destination index (None when the route dead-ends) and
    ``link_modes`` tags each hop with its scheduling mode (COORD hops ride
    the single coordinated slot, FALLBACK hops the round-robin cycle).
    """

    source: int
    cells: tuple[int, ...]
    reached: int | None
    link_modes: tuple[str, ...] = ()

    @property
    def complete(self) -> bool:
        return self.reached is not None

    @property
    def links(self) -> tuple[tuple[int, int], ...]:
        return tuple(zip(self.cells, self.cells[1:]))


@dataclass
class RouteSet:
    """Routes of one scenario plus their slot schedule once assigned."""

    routes: list[Route]
    kind: str
    k0: int | None = None
    slots: dict[int, list[tuple[int, int]]] = field(default_factory=dict)
    cycle_length: int = 0

    @property
    def complete_routes(self) -> list[Route]:
        return [r for r in self.routes if r.complete]

    def slot_of(self) -> dict[tuple[int, int], int]:
        return {link: s for s, links in self.slots.items() for link in links}


def _admissible(grid, overlay, visited, cell):
    out = []
    for n in grid.neighbors(cell):
        if n.i in overlay.unavailable or n.i in visited:
            continue
        out.append(n)
    return out


def _greedy_route(grid, dest, overlay, source_idx, load=None):
    """Minimum-distance route avoiding unavailable subcells; None-terminated.

    With a ``load`` map the hop choice minimizes (1 + load) * rank instead
    of plain rank, which is the load-aware variant.
    """
    dest_idx = dest.indices()
    cells = [source_idx]
    modes = []
    visited = {source_idx}
    current = grid.cell(source_idx)
    for _ in range(len(grid.cells)):
        candidates = _admissible(grid, overlay, visited, current)
        hits = [n for n in candidates if n.i in dest_idx]
        if hits:
            nxt = min(hits, key=lambda n: n.i)
        elif not candidates:
            return Route(source_idx, tuple(cells), None, tuple(modes))
        else:
            ranked = [n for n in grid.neighbors_ranked(current, dest) if n in candidates]
            if load is None:
                nxt = ranked[0]
            else:
                nxt = min(
                    ranked,
                    key=lambda n: ((1 + load.get(n.i, 0)) * (ranked.index(n) + 1), n.i),
                )
        cells.append(nxt.i)
        modes.append(FALLBACK)
        if nxt.i in dest_idx:
            return Route(source_idx, tuple(cells), nxt.i, tuple(modes))
        visited.add(nxt.i)
        current = nxt
    return Route(source_idx, tuple(cells), None, tuple(modes))


def _color_route(grid, dest, overlay, source_idx, k0, allow_fallback):
    """Alternating color-relay route: hop to the unique k0 neighbour, then re-aim.

    Every cell has exactly one neighbour of each other reuse color, so a
    coordinated hop is unambiguous; from a k0 cell (or when the k0 relay is
    unavailable and fallback is on) the hop follows the minimum-distance
    rule.  Without fallback such a hop strands the route.
    """
    dest_idx = dest.indices()
    cells = [source_idx]
    modes = []
    visited = {source_idx}
    current = grid.cell(source_idx)
    for _ in range(len(grid.cells)):
        candidates = _admissible(grid, overlay, visited, current)
        hits = [n for n in candidates if n.i in dest_idx]
        if hits:
            nxt, mode = min(hits, key=lambda n: n.i), FALLBACK
        elif not candidates:
            return Route(source_idx, tuple(cells), None, tuple(modes))
        else:
            typed = [n for n in candidates if grid.cluster_color(n) == k0]
            if grid.cluster_color(current) != k0 and typed:
                nxt, mode = typed[0], COORD
            elif grid.cluster_color(current) == k0 or allow_fallback:
                ranked = [n for n in grid.neighbors_ranked(current, dest) if n in candidates]
                nxt, mode = ranked[0], FALLBACK
            else:
                return Route(source_idx, tuple(cells), None, tuple(modes))
        cells.append(nxt.i)
        modes.append(mode)
        if nxt.i in dest_idx:
            return Route(source_idx, tuple(cells), nxt.i, tuple(modes))
        visited.add(nxt.i)
        current = nxt
    return Route(source_idx, tuple(cells), None, tuple(modes))


def lar_route(
    grid: SubcellGrid,
    dest: Destinations,
    overlay: ScenarioOverlay,
) -> RouteSet:
    """Load-aware routes: sources routed in order, relay loads updated between.

    The hop cost is (1 + load(target)) * distance rank, so later sources
    divert around relays already carrying traffic.  A single source sees
    zero loads and reproduces the plain minimum-distance route.
    """
    _check_overlay(grid, dest, overlay)
    load: dict[int, int] = {}
    routes = []
    for src in overlay.sources:
        route = _greedy_route(grid, dest, overlay, src, load=load)
        routes.append(route)
        if route.complete:
            for idx in route.cells[1:-1]:
                load[idx] = load.get(idx, 0) + 1
    return RouteSet(routes=routes, kind=LAR)


def _check_overlay(grid, dest, overlay):
    dest_idx = dest.indices()
    for idx in (*overlay.sources, *overlay.unavailable):
        if not 0 <= idx < len(grid.cells):
            raise RoutingError(f"overlay references unknown subcell {idx}")
    if dest_idx & overlay.unavailable:
        raise RoutingError("destinations cannot be marked unavailable")
    for src in overlay.sources:
        if src in dest_idx:
            raise RoutingError(f"source {src} is already a destination")


def extract_routes(
    grid: SubcellGrid,
    dest: Destinations,
    overlay: ScenarioOverlay,
    config: ProtocolConfig,
) -> RouteSet:
    """Deterministic routes for every overlay source under one protocol.

    MDR/mMDR take the minimum-distance hop among available neighbours; LAR
    additionally weighs relay load; LIR/mLIR alternate hops through relays
    of color k0.  When k0 is not pinned, the color completing the most
    routes wins (ties to the smallest color, evaluated without fallback
    first).  Routes never revisit a subcell; dead ends are returned as
    incomplete routes.
    """
    _check_overlay(grid, dest, overlay)
    if config.kind in (MDR, MMDR):
        return RouteSet(routes=[_greedy_route(grid, dest, overlay, s) for s in overlay.sources], kind=config.kind)
    if config.kind == LAR:
        return lar_route(grid, dest, overlay)
    if config.kind not in (LIR, MLIR):
        raise RoutingError(f"no deterministic extraction for protocol {config.kind!r}")

    k0 = overlay.k0 if overlay.k0 is not None else config.relay_color
    if k0 is None:
        # pick the color whose strict (fallback-free) routes complete most sources
        best_color, best_complete = 0, -1
        for color in range(7):
            strict = [_color_route(grid, dest, overlay, s, color, False) for s in overlay.sources]
            complete = sum(r.complete for r in strict)
            if complete > best_complete:
                best_color, best_complete = color, complete
        if best_complete < len(overlay.sources) and not config.allow_fallback:
            raise RoutingError(
                "every relay color strands at least one source and fallback is disabled"
            )
        k0 = best_color
    routes = [_color_route(grid, dest, overlay, s, k0, config.allow_fallback) for s in overlay.sources]
    return RouteSet(routes=routes, kind=config.kind, k0=k0)


# --------------------------------------------------------------------------
# slot scheduling


def _conflicts(grid, a, b, threshold):
    """Two links may not share a slot when they touch or sit too close."""
    (t1, r1), (t2, r2) = a, b
    if len({t1, r1, t2, r2}) < 4:
        return True
    z1 = grid.interference_distance(grid.cell(t1), grid.cell(r2))
    z2 = grid.interference_distance(grid.cell(t2), grid.cell(r1))
    return z1 <= threshold or z2 <= threshold


def schedule(route_set: RouteSet, config: ProtocolConfig, grid: SubcellGrid) -> RouteSet:
    """Assign every route link to a slot; fills ``slots`` and ``cycle_length``.

    MDR/LAR use the fixed K-slot round robin keyed by transmitter color.
    mMDR greedily colors the link conflict graph (two links conflict when
    they share a subcell or a transmitter sits within the interference
    threshold of the other receiver), giving a cycle of T_min <= K slots.
    LIR/mLIR put all coordinated hops in one slot and round-robin the rest.
    """
    links: list[tuple[int, int]] = []
    coord_links: set[tuple[int, int]] = set()
    seen = set()
    for route in route_set.routes:
        for link, mode in zip(route.links, route.link_modes):
            if link not in seen:
                seen.add(link)
                links.append(link)
            if mode == COORD:
                coord_links.add(link)

    slots: dict[int, list[tuple[int, int]]] = {}

    def put(slot, link):
        slots.setdefault(slot, []).append(link)

    if config.kind in (MDR, LAR):
        for link in links:
            put(grid.cluster_color(grid.cell(link[0])), link)
        cycle = config.K
    elif config.kind == MMDR:
        assigned: dict[tuple[int, int], int] = {}
        for link in links:
            used = {
                assigned[other]
                for other in assigned
                if _conflicts(grid, link, other, config.interference_threshold)
            }
            slot = next(s for s in range(len(links) + 1) if s not in used)
            assigned[link] = slot
            put(slot, link)
        cycle = max(slots) + 1 if slots else 0
    elif config.kind in (LIR, MLIR):
        fallback_links = [l for l in links if l not in coord_links]
        # Coordinated handovers share one slot, except that links touching a
        # common subcell (same relay receiving twice, or a cell asked to
        # transmit and receive at once) cannot physically coexist and spill
        # into further coordinated slots.
        groups: list[list[tuple[int, int]]] = []
        for link in sorted(coord_links):
            for group in groups:
                if all(not set(link) & set(other) for other in group):
                    group.append(link)
                    break
            else:
                groups.append([link])
        for s, group in enumerate(groups):
            for link in group:
                put(s, link)
        offset = len(groups)
        for link in fallback_links:
            put(offset + grid.cluster_color(grid.cell(link[0])), link)
        cycle = offset + (config.K if fallback_links else 0)
    else:
        raise RoutingError(f"no schedule rule for protocol {config.kind!r}")

    route_set.slots = slots
    route_set.cycle_length = cycle
    return route_set
