"""Utility accounting, traffic bookkeeping, offloading and the price walk."""

import math

import pytest

from m3sim.economics import (
    DEFAULT_USER_SITES,
    EconError,
    EconParams,
    NegotiationError,
    OffloadContext,
    RouteMetrics,
    TrafficState,
    apply_traffic_step,
    cooperation_capacity_ratio,
    evaluate_offload,
    expected_network_capacity,
    expected_route_delay,
    macrocell_utility,
    negotiate,
    negotiate_price,
    network_utility,
    offload_breakdown,
    optimize_tessellation,
    route_cost,
    scheduled_route_delay,
    snap_sites,
    user_utility,
)
from m3sim.chains import absorption_statistics
from m3sim.grid import GridParams, SubcellGrid, make_destinations
from m3sim.radio import RadioParams
from m3sim.routing import MDR, LIR, ProtocolConfig, Route, build_mdr_chain

GRID4 = SubcellGrid(GridParams(H=4))


@pytest.fixture(scope="module")
def offload_ctx():
    dest = make_destinations(GRID4, [(3, 250)])
    radio = RadioParams(power=0.15, alpha=2.0, noise=1e-6)
    return OffloadContext(
        grid=GRID4,
        dest=dest,
        radio=radio,
        placements={"u1": 10, "u2": 27, "u4": 15, "u5": 16},
    )


@pytest.fixture(scope="module")
def offload_state():
    return TrafficState(
        bs_users=frozenset({"u1", "u2", "u4"}),
        wlan_users=frozenset({"u5"}),
        offload=frozenset({"u4"}),
    )


# -- utility algebra ---------------------------------------------------------


def test_user_utility():
    assert user_utility(3.0, 2.0, 1.0, 2.0) == pytest.approx(3.0)
    assert user_utility(0.0, 2.0, 1.0, 2.0) == 0.0
    assert user_utility(3.0, math.inf, 1.0, 2.0) == 0.0
    with pytest.raises(EconError):
        user_utility(3.0, 0.0, 1.0, 2.0)
    with pytest.raises(EconError):
        user_utility(3.0, 2.0, -1.0, 2.0)


def test_network_utility_skips_unrouted():
    routed = RouteMetrics("a", capacity=2.0, delay=4.0, cost=0.5, hops=2)
    stranded = RouteMetrics("b", capacity=0.0, delay=math.inf, cost=0.5, hops=0, routed=False)
    assert network_utility([routed, stranded], revenue=2.0) == pytest.approx(2.0)
    assert stranded.rate == 0.0
    assert routed.rate == pytest.approx(1.0)


def test_route_delay_and_cost_helpers():
    route = Route(source=9, cells=(9, 2, 0), reached=0)
    dead = Route(source=9, cells=(9,), reached=None)
    assert scheduled_route_delay(route, 7) == 14.0
    assert scheduled_route_delay(dead, 7) == math.inf
    radio = RadioParams(power=0.2)
    assert route_cost(route, radio) == pytest.approx(0.4)
    assert route_cost(dead, radio) == pytest.approx(0.2)  # at least one transmission


def test_expected_route_delay_pays_cycle_per_hop():
    grid = SubcellGrid(GridParams(H=2))
    dest = make_destinations(grid)
    chain = build_mdr_chain(grid, dest, p=1.0)
    stats = absorption_statistics(chain)
    config = ProtocolConfig(kind=MDR, p=1.0)
    assert expected_route_delay(chain, stats, 7, config) == pytest.approx(14.0)
    assert expected_route_delay(chain, stats, 1, config) == pytest.approx(7.0)


def test_econ_params_validation():
    assert EconParams(mno_revenue=2.0, sso_revenue=1.0).bounds == (1.0, 2.0)
    assert EconParams(price_bounds=(0.05, 2.0)).bounds == (0.05, 2.0)
    with pytest.raises(EconError):
        EconParams(mno_revenue=1.0, sso_revenue=2.0)
    with pytest.raises(EconError):
        EconParams(sso_revenue=0.0, mno_revenue=1.0)
    with pytest.raises(EconError):
        EconParams(price_step=0.0)
    with pytest.raises(EconError):
        EconParams(tol=-1.0)
    with pytest.raises(EconError):
        EconParams(max_iter=0)
    with pytest.raises(EconError):
        EconParams(price_bounds=(0.0, 1.0))


# -- traffic bookkeeping -----------------------------------------------------


def test_apply_traffic_step():
    state = TrafficState(
        bs_users=frozenset({"u1", "u2", "u3"}),
        wlan_users=frozenset({"u5"}),
        bs_arrivals=frozenset({"u4"}),
        wlan_arrivals=frozenset({"u6"}),
        bs_departures=frozenset({"u2"}),
        offload=frozenset({"u3"}),
    )
    bs_next, wlan_next = apply_traffic_step(state)
    assert bs_next == {"u1", "u4"}
    assert wlan_next == {"u5", "u6", "u3"}


def test_traffic_state_validation():
    with pytest.raises(EconError):
        TrafficState(bs_users=frozenset({"u"}), wlan_users=frozenset({"u"}))
    with pytest.raises(EconError):
        TrafficState(bs_users=frozenset({"u"}), bs_arrivals=frozenset({"u"}))
    with pytest.raises(EconError):
        TrafficState(wlan_users=frozenset({"u"}), wlan_departures=frozenset({"v"}))
    with pytest.raises(EconError):
        # offloading a departing user
        TrafficState(
            bs_users=frozenset({"u"}),
            bs_departures=frozenset({"u"}),
            offload=frozenset({"u"}),
        )


# -- macrocell tessellation utility ------------------------------------------


def test_snap_sites_frozen_constellation():
    assert snap_sites(GRID4, DEFAULT_USER_SITES) == [30, 40, 11, 33, 52, 53, 12, 18, 17, 15, 12, 37]
    coarse = SubcellGrid(GridParams(H=2))
    assert snap_sites(coarse, DEFAULT_USER_SITES) == [15, 9, 3, 5, 14, 15, 3, 6, 5, 5, 3, 7]


def test_macrocell_utility_merges_colocated_users():
    sites = tuple(DEFAULT_USER_SITES)
    assert macrocell_utility(4, 0.15, sites=sites + (sites[0],)) == macrocell_utility(
        4, 0.15, sites=sites
    )


def test_macrocell_utility_rises_with_availability():
    low = macrocell_utility(4, 0.15, availability=0.7)
    high = macrocell_utility(4, 0.15, availability=1.0)
    assert 0.0 < low < high


def test_optimize_tessellation_consistency():
    result = optimize_tessellation([2, 3, 4], [0.15])
    assert set(result.surface) == {(2, 0.15), (3, 0.15), (4, 0.15)}
    h_star = result.argmax_h[0.15]
    assert result.surface[(h_star, 0.15)] == max(result.surface.values())
    assert result.best == (h_star, 0.15)
    assert 2 <= result.climb_h[0.15] <= 4
    with pytest.raises(EconError):
        optimize_tessellation([], [0.15])


# -- availability sweeps -----------------------------------------------------


def test_expected_network_capacity_monotone_in_availability():
    grid = SubcellGrid(GridParams(H=2))
    dest = make_destinations(grid)
    radio = RadioParams(power=0.15, alpha=2.0, noise=1e-6)
    caps = [expected_network_capacity(grid, dest, radio, p) for p in (0.3, 0.6, 0.9)]
    assert 0.0 < caps[0] < caps[1] < caps[2]


def test_cooperation_ratio_pools_operators():
    grid = SubcellGrid(GridParams(H=2))
    dest = make_destinations(grid)
    radio = RadioParams(power=0.15, alpha=2.0, noise=1e-6)
    ratio, single, double = cooperation_capacity_ratio(grid, dest, radio)
    assert single == pytest.approx(0.3)
    assert double == pytest.approx(0.51)
    assert ratio > 1.0


# -- offloading --------------------------------------------------------------


def test_offload_context_validation():
    dest = make_destinations(GRID4, [(3, 250)])
    radio = RadioParams()
    with pytest.raises(EconError):
        OffloadContext(grid=GRID4, dest=make_destinations(GRID4), radio=radio, placements={})
    with pytest.raises(EconError):
        OffloadContext(grid=GRID4, dest=dest, radio=radio, placements={"u": 31})
    with pytest.raises(EconError):
        OffloadContext(grid=GRID4, dest=dest, radio=radio, placements={"u": 99})


def test_wlan_domain(offload_ctx):
    assert offload_ctx.wlan_domain == frozenset({31, 15, 16, 30, 32, 53, 54})


def test_offload_breakdown_wlan_schedule(offload_ctx, offload_state):
    b = offload_breakdown(offload_ctx, offload_state)
    # after the step u4 joins u5 on the access point: two WLAN link instances
    assert b.wlan_cycle == 2
    assert b.metrics_after["u4"].delay == 2.0
    assert b.metrics_after["u5"].delay == 2.0
    # same one-hop geometry, no co-slot interference: identical capacity
    assert b.metrics_after["u4"].capacity == pytest.approx(b.metrics_after["u5"].capacity)
    # macro users keep paying the full round robin per hop
    assert b.metrics_after["u1"].delay == 14.0
    assert b.metrics_after["u2"].delay == 21.0
    assert b.offload_after == pytest.approx(b.metrics_after["u4"].rate)


def test_offload_breakdown_requires_placements(offload_ctx):
    state = TrafficState(bs_users=frozenset({"u1", "ghost"}))
    with pytest.raises(EconError, match="ghost"):
        offload_breakdown(offload_ctx, state)


def test_evaluate_offload_ledger(offload_ctx, offload_state):
    econ = EconParams(price_step=0.002, price_bounds=(0.05, 2.0))
    report = evaluate_offload(offload_ctx, offload_state, 1.0, econ)
    assert report.delta_mno == pytest.approx(report.mno_after - report.mno_before)
    assert report.delta_sso == pytest.approx(report.sso_after - report.sso_before)
    cheap = evaluate_offload(offload_ctx, offload_state, 0.5, econ)
    dear = evaluate_offload(offload_ctx, offload_state, 1.5, econ)
    assert cheap.delta_mno > dear.delta_mno  # the buyer prefers low prices
    assert cheap.delta_sso < dear.delta_sso  # the seller prefers high ones
    with pytest.raises(EconError):
        evaluate_offload(offload_ctx, offload_state, 3.0, econ)


# -- price negotiation -------------------------------------------------------

ECON = EconParams(mno_revenue=2.0, sso_revenue=0.5, price_step=0.01)


def test_negotiation_converges_on_linear_offsets():
    result = negotiate_price(lambda chi, s: 3.0 - 2.0 * chi, lambda chi, s: chi, ECON)
    assert result.converged and result.verdict == "offload"
    assert result.crossing == pytest.approx(1.0, abs=1e-9)
    assert result.price == pytest.approx(1.0, abs=1e-9)
    assert result.iterations == 25  # from the midpoint 1.25 down in 0.01 steps


def test_negotiation_accepts_the_opening_offer():
    result = negotiate_price(lambda chi, s: 1.0, lambda chi, s: 1.0, ECON, chi0=0.9)
    assert result.iterations == 0
    assert result.price == 0.9 and result.crossing == 0.9
    assert result.converged


def test_negotiation_settles_oscillation_by_secant():
    # equilibrium at 1.005 sits between two grid points; the walk ping-pongs
    result = negotiate_price(lambda chi, s: 1.005, lambda chi, s: chi, ECON, chi0=1.0)
    assert result.converged and result.verdict == "offload"
    assert result.crossing == pytest.approx(1.005)
    assert result.price == pytest.approx(1.0)
    assert result.iterations == 2


def test_negotiation_pinned_above_revenue_means_no_offload():
    result = negotiate_price(lambda chi, s: 3.0, lambda chi, s: chi, ECON)
    assert not result.converged
    assert result.price == 2.0
    assert result.crossing == pytest.approx(3.0)
    assert result.verdict == "no-offload"


def test_negotiation_pinned_below_bounds_still_offloads():
    result = negotiate_price(lambda chi, s: 0.3, lambda chi, s: chi, ECON)
    assert not result.converged
    assert result.price == 0.5
    assert result.crossing == pytest.approx(0.3)
    assert result.verdict == "offload"


def test_negotiation_budget_exhaustion():
    tight = EconParams(
        mno_revenue=2.0, sso_revenue=0.5, price_step=0.01, max_iter=3, price_bounds=(0.5, 100.0)
    )
    with pytest.raises(NegotiationError) as err:
        negotiate_price(lambda chi, s: 50.0, lambda chi, s: chi, tight)
    assert len(err.value.trace) == 3


def test_joint_walk_adapts_the_offload_set():
    result = negotiate_price(
        lambda chi, s: len(s) - chi,
        lambda chi, s: chi,
        ECON,
        offload=frozenset({"a"}),
        candidates=("b", "c"),
        adapt_set=True,
    )
    assert result.offload == frozenset({"a", "c"})
    assert result.price == pytest.approx(1.24)
    assert result.iterations == 4
    assert result.converged and result.verdict == "offload"


def test_negotiate_end_to_end(offload_ctx, offload_state):
    econ = EconParams(price_step=0.002, price_bounds=(0.05, 2.0))
    result = negotiate(offload_ctx, offload_state, econ)
    assert result.verdict in ("offload", "no-offload")
    assert len(result.trace) == result.iterations + 1
    with pytest.raises(EconError):
        negotiate(offload_ctx, offload_state, econ, mode="auction")
    with pytest.raises(EconError):
        negotiate(
            offload_ctx,
            TrafficState(bs_users=frozenset({"u1"})),
            econ,
        )
