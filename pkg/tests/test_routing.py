"""Route discovery: transition laws, chain builders, extraction, scheduling."""

import pytest

from m3sim.chains import NO_ROUTE, absorption_statistics
from m3sim.grid import GridParams, SubcellGrid, make_destinations
from m3sim.routing import (
    COORD,
    FALLBACK,
    LAR,
    LIR,
    MDR,
    MLIR,
    MMDR,
    ProtocolConfig,
    RoutingError,
    ScenarioOverlay,
    build_lir_chain,
    build_mdr_chain,
    coordinated_color_population,
    coordination_probability,
    extract_routes,
    rank_probabilities,
    schedule,
    start_state,
)

GRID4 = SubcellGrid(GridParams(H=4))
DEST4 = make_destinations(GRID4)

# deterministic overlay reused across scheduling tests: six active sources,
# six unavailable relays, coordinated relays pinned to color 1
OVERLAY = ScenarioOverlay(
    sources=(25, 39, 41, 43, 44, 45),
    unavailable=frozenset({4, 7, 9, 11, 12, 17}),
    k0=1,
)


def test_rank_probabilities_geometric_law():
    probs, residual = rank_probabilities(0.8, 6)
    assert probs == pytest.approx([0.8, 0.16, 0.032, 0.0064, 0.00128, 0.000256])
    assert residual == pytest.approx(0.2**6)
    assert sum(probs) + residual == pytest.approx(1.0)
    with pytest.raises(RoutingError):
        rank_probabilities(1.2, 6)


def test_coordination_probability():
    assert coordination_probability(0.9, 9) == pytest.approx(0.9**9)
    assert coordination_probability(0.5, 0) == 1.0
    with pytest.raises(RoutingError):
        coordination_probability(0.5, -1)


def test_coordinated_color_population():
    # 60 ring subcells split 6/9/9/9/9/9/9 over the colors; the center's
    # class is the small one and it is color 0
    assert coordinated_color_population(GRID4, DEST4) == 9
    assert coordinated_color_population(GRID4, DEST4, relay_color=0) == 6


def test_mdr_chain_certain_relay_walks_straight_in():
    grid = SubcellGrid(GridParams(H=2))
    dest = make_destinations(grid)
    chain = build_mdr_chain(grid, dest, p=1.0)
    stats = absorption_statistics(chain)
    for cell in grid.cells[1:]:
        k = chain.transient_index(cell.i)
        assert stats.tau[k] == pytest.approx(cell.h)
        assert stats.absorb_probs[k, 0] == pytest.approx(1.0)
    assert chain.absorbing == (0, NO_ROUTE)


def test_mdr_chain_dwell_and_no_route_mass():
    grid = SubcellGrid(GridParams(H=2))
    dest = make_destinations(grid)
    unit = absorption_statistics(build_mdr_chain(grid, dest, p=0.7))
    slot = absorption_statistics(build_mdr_chain(grid, dest, p=0.7, dwell=7.0))
    assert slot.tau == pytest.approx(7.0 * unit.tau)
    # some probability always leaks to the no-route absorber when p < 1
    assert float(unit.absorb_dist[-1]) > 0.0
    assert float(unit.absorb_dist.sum()) == pytest.approx(1.0)


def test_lir_chain_doubles_states():
    grid = SubcellGrid(GridParams(H=2))
    dest = make_destinations(grid)
    config = ProtocolConfig(kind=LIR, p=0.9)
    chain = build_lir_chain(grid, dest, p=0.9, config=config)
    assert len(chain.transient) == 2 * 18
    assert (5, COORD) in chain.transient and (5, FALLBACK) in chain.transient
    k_coord = chain.transient_index((5, COORD))
    k_fall = chain.transient_index((5, FALLBACK))
    assert chain.dwell[k_coord] == 1.0
    assert chain.dwell[k_fall] == 7.0
    stats = absorption_statistics(chain)
    assert float(stats.absorb_dist.sum()) == pytest.approx(1.0)


def test_lir_coordination_beats_mdr_when_reliable():
    # with availability this high the coordinated single-slot hops dominate
    grid = SubcellGrid(GridParams(H=2))
    dest = make_destinations(grid)
    mdr = absorption_statistics(build_mdr_chain(grid, dest, p=0.999, dwell=7.0))
    lir = absorption_statistics(
        build_lir_chain(grid, dest, p=0.999, config=ProtocolConfig(kind=LIR, p=0.999))
    )
    k = build_mdr_chain(grid, dest, p=0.999).transient_index(7)
    k2 = build_lir_chain(
        grid, dest, p=0.999, config=ProtocolConfig(kind=LIR, p=0.999)
    ).transient_index((7, COORD))
    assert lir.tau[k2] < mdr.tau[k]


def test_start_state_dispatch():
    assert start_state(ProtocolConfig(kind=MDR), 9) == 9
    assert start_state(ProtocolConfig(kind=MMDR), 9) == 9
    assert start_state(ProtocolConfig(kind=MLIR), 9) == (9, COORD)


def test_greedy_route_descends_to_base_station():
    rs = extract_routes(GRID4, DEST4, ScenarioOverlay(sources=(39,)), ProtocolConfig(kind=MDR))
    route = rs.routes[0]
    assert route.cells == (39, 20, 8, 1, 0)
    assert route.complete and route.reached == 0
    rings = [GRID4.cell(i).h for i in route.cells]
    assert rings == [4, 3, 2, 1, 0]


def test_greedy_route_avoids_unavailable_cells():
    blocked = ScenarioOverlay(sources=(39,), unavailable=frozenset({20}))
    route = extract_routes(GRID4, DEST4, blocked, ProtocolConfig(kind=MMDR)).routes[0]
    assert route.complete
    assert 20 not in route.cells


def test_color_route_alternates_and_targets_k0():
    rs = extract_routes(GRID4, DEST4, ScenarioOverlay(sources=(25,), k0=1), ProtocolConfig(kind=MLIR))
    route = rs.routes[0]
    assert route.cells == (25, 12, 3, 0)
    assert route.link_modes == (COORD, FALLBACK, FALLBACK)
    for (tx, rx), mode in zip(route.links, route.link_modes):
        if mode == COORD:
            assert GRID4.cluster_color(GRID4.cell(rx)) == 1
    assert rs.k0 == 1


def test_color_route_auto_k0_completes_sources():
    rs = extract_routes(GRID4, DEST4, ScenarioOverlay(sources=(25, 41)), ProtocolConfig(kind=MLIR))
    assert rs.k0 is not None
    assert all(r.complete for r in rs.routes)


def test_fallback_disabled_strands_boxed_source():
    grid = SubcellGrid(GridParams(H=2))
    dest = make_destinations(grid)
    walls = frozenset(n.i for n in grid.neighbors(grid.cell(7)))
    boxed = ScenarioOverlay(sources=(7,), unavailable=walls)
    with pytest.raises(RoutingError, match="fallback"):
        extract_routes(grid, dest, boxed, ProtocolConfig(kind=MLIR, allow_fallback=False))
    rs = extract_routes(grid, dest, boxed, ProtocolConfig(kind=MLIR))
    assert not rs.routes[0].complete and rs.routes[0].reached is None


def test_lar_diverts_around_loaded_relay():
    pair = ScenarioOverlay(sources=(21, 40))
    mdr = extract_routes(GRID4, DEST4, pair, ProtocolConfig(kind=MDR))
    lar = extract_routes(GRID4, DEST4, pair, ProtocolConfig(kind=LAR))
    assert lar.routes[0].cells == mdr.routes[0].cells
    assert mdr.routes[1].cells == (40, 21, 9, 1, 0)
    assert lar.routes[1].cells == (40, 21, 8, 1, 0)  # 9 already carries traffic


def test_overlay_validation():
    with pytest.raises(RoutingError):
        ScenarioOverlay(sources=(5,), unavailable=frozenset({5}))
    with pytest.raises(RoutingError):
        ScenarioOverlay(sources=(5, 5))
    with pytest.raises(RoutingError):
        ScenarioOverlay(sources=(5,), k0=9)
    with pytest.raises(RoutingError):
        extract_routes(GRID4, DEST4, ScenarioOverlay(sources=(0,)), ProtocolConfig(kind=MDR))
    with pytest.raises(RoutingError):
        extract_routes(GRID4, DEST4, ScenarioOverlay(sources=(99,)), ProtocolConfig(kind=MDR))


def test_protocol_config_validation():
    with pytest.raises(RoutingError):
        ProtocolConfig(kind="DSR")
    with pytest.raises(RoutingError):
        ProtocolConfig(p=1.5)
    with pytest.raises(RoutingError):
        ProtocolConfig(K=0)
    with pytest.raises(RoutingError):
        ProtocolConfig(relay_color=7)
    assert ProtocolConfig(K=5).mdr_dwell == 5.0
    assert ProtocolConfig(dwell_mdr=3.0).mdr_dwell == 3.0


def test_round_robin_schedule_keys_slots_by_transmitter_color():
    config = ProtocolConfig(kind=MDR)
    rs = schedule(extract_routes(GRID4, DEST4, OVERLAY, config), config, GRID4)
    assert rs.cycle_length == 7
    for slot, links in rs.slots.items():
        for tx, _ in links:
            assert GRID4.cluster_color(GRID4.cell(tx)) == slot


def test_mmdr_schedule_is_conflict_free_and_compact():
    config = ProtocolConfig(kind=MMDR)
    rs = schedule(extract_routes(GRID4, DEST4, OVERLAY, config), config, GRID4)
    assert 0 < rs.cycle_length <= 7
    for links in rs.slots.values():
        for a in links:
            for b in links:
                if a >= b:
                    continue
                assert not set(a) & set(b)
                assert GRID4.interference_distance(GRID4.cell(a[0]), GRID4.cell(b[1])) > 1.0
                assert GRID4.interference_distance(GRID4.cell(b[0]), GRID4.cell(a[1])) > 1.0


def test_mlir_schedule_coordinated_slots_then_round_robin():
    config = ProtocolConfig(kind=MLIR)
    rs = schedule(extract_routes(GRID4, DEST4, OVERLAY, config), config, GRID4)
    coord_slots = rs.cycle_length - 7
    assert coord_slots >= 1
    slot_of = rs.slot_of()
    for route in rs.routes:
        for link, mode in zip(route.links, route.link_modes):
            if mode == COORD:
                assert slot_of[link] < coord_slots
    # links sharing a coordinated slot never touch a common subcell
    for s in range(coord_slots):
        links = rs.slots[s]
        for a in links:
            for b in links:
                if a < b:
                    assert not set(a) & set(b)


def test_single_route_needs_one_coordinated_slot():
    config = ProtocolConfig(kind=MLIR)
    rs = schedule(
        extract_routes(GRID4, DEST4, ScenarioOverlay(sources=(25,), k0=1), config), config, GRID4
    )
    assert rs.cycle_length == 8
    assert rs.slots[0] == [(25, 12)]
