"""Absorbing-chain analytics against closed-form cases and Monte Carlo runs."""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from m3sim.chains import (
    ChainError,
    absorption_statistics,
    build_chain,
    canonical_form,
    simulate_walks,
    uniform_dwell_variance,
)


def geometric(p, dwell=1.0):
    return build_chain({"s": [("s", 1.0 - p), ("done", p)]}, ["done"], dwell=dwell)


def ladder(p=0.6):
    # s2 -> s1 -> done, each rung advancing with probability p
    return build_chain(
        {
            "s1": [("s1", 1.0 - p), ("done", p)],
            "s2": [("s2", 1.0 - p), ("s1", p)],
        },
        ["done"],
    )


def test_geometric_mean_and_variance():
    stats = absorption_statistics(geometric(0.5))
    assert stats.tau[0] == pytest.approx(2.0)
    assert stats.var_tau[0] == pytest.approx(2.0)
    stats = absorption_statistics(geometric(0.8))
    assert stats.tau[0] == pytest.approx(1.25)
    assert stats.var_tau[0] == pytest.approx(0.3125)
    assert stats.absorb_probs[0, 0] == pytest.approx(1.0)


def test_dwell_scales_mean_linearly_and_variance_quadratically():
    base = absorption_statistics(geometric(0.7))
    scaled = absorption_statistics(geometric(0.7, dwell=7.0))
    assert scaled.tau[0] == pytest.approx(7.0 * base.tau[0])
    assert scaled.var_tau[0] == pytest.approx(49.0 * base.var_tau[0])


def test_ladder_means():
    stats = absorption_statistics(ladder(0.6))
    assert_allclose(stats.tau, [1.0 / 0.6, 2.0 / 0.6], rtol=1e-12)
    # uniform start over both rungs
    assert stats.tau_mean == pytest.approx(1.5 / 0.6)


def test_split_absorption_probabilities():
    chain = build_chain(
        {"s": [("s", 0.2), ("a", 0.24), ("b", 0.56)]},
        ["a", "b"],
    )
    stats = absorption_statistics(chain)
    assert_allclose(stats.absorb_probs[0], [0.3, 0.7], rtol=1e-12)
    assert_allclose(stats.absorb_dist, [0.3, 0.7], rtol=1e-12)


def test_variance_identity_cross_check():
    chain = build_chain(
        {
            "a": [("a", 0.1), ("b", 0.5), ("out", 0.4)],
            "b": [("a", 0.3), ("out", 0.7)],
        },
        ["out"],
        dwell=3.0,
    )
    stats = absorption_statistics(chain)
    assert_allclose(stats.var_tau, uniform_dwell_variance(chain), rtol=1e-10)


def test_uniform_dwell_identity_rejects_mixed_dwell():
    chain = build_chain(
        {"a": [("out", 1.0)], "b": [("a", 1.0)]}, ["out"], dwell={"a": 1.0, "b": 2.0}
    )
    with pytest.raises(ChainError):
        uniform_dwell_variance(chain)


def test_build_chain_normalizes_within_tolerance():
    chain = build_chain({"s": [("s", 0.5 + 2e-10), ("done", 0.5)]}, ["done"])
    assert chain.matrix[0].sum() == pytest.approx(1.0, abs=1e-15)


@pytest.mark.parametrize(
    "rows, absorbing",
    [
        ({"s": [("elsewhere", 1.0)]}, ["done"]),  # unknown target
        ({"s": [("s", -0.2), ("done", 1.2)]}, ["done"]),  # negative probability
        ({"s": [("done", 0.8)]}, ["done"]),  # row sum off
        ({"s": [("s", 1.0)]}, ["s"]),  # state on both sides
    ],
)
def test_build_chain_rejects_bad_rows(rows, absorbing):
    with pytest.raises(ChainError):
        build_chain(rows, absorbing)


def test_build_chain_rejects_nonpositive_dwell():
    with pytest.raises(ChainError):
        build_chain({"s": [("done", 1.0)]}, ["done"], dwell=0.0)


def test_canonical_form_requires_reachable_absorption():
    chain = build_chain(
        {"trap": [("trap", 1.0)], "s": [("trap", 0.5), ("done", 0.5)]}, ["done"]
    )
    with pytest.raises(ChainError, match="unreachable"):
        canonical_form(chain)


def test_transient_index():
    chain = ladder()
    assert chain.transient_index("s2") == 1
    with pytest.raises(ChainError):
        chain.transient_index("s9")


def test_start_distribution_validation():
    chain = ladder()
    with pytest.raises(ChainError):
        absorption_statistics(chain, start=np.array([0.5, 0.6]))
    with pytest.raises(ChainError):
        absorption_statistics(chain, start=np.array([1.0]))


def test_simulation_is_seed_deterministic():
    chain = ladder(0.4)
    a = simulate_walks(chain, 5000, seed=11)
    b = simulate_walks(chain, 5000, seed=11)
    assert_allclose(a.tau, b.tau, rtol=0)
    assert np.array_equal(a.counts, b.counts)
    c = simulate_walks(chain, 5000, seed=12)
    assert not np.allclose(a.tau, c.tau)


def test_simulation_matches_analysis():
    chain = ladder(0.5)
    exact = absorption_statistics(chain)
    mc = simulate_walks(chain, 100_000, seed=7)
    for k in range(2):
        sigma = np.sqrt(exact.var_tau[k] / mc.counts[k])
        assert abs(mc.tau[k] - exact.tau[k]) < 4.0 * sigma
    assert mc.tau_mean == pytest.approx(exact.tau_mean, rel=0.02)
    assert mc.absorb_dist[0] == pytest.approx(1.0)


def test_simulation_start_distribution_and_guards():
    chain = ladder()
    pinned = simulate_walks(chain, 2000, seed=3, start=np.array([1.0, 0.0]))
    assert pinned.counts[0] == 2000 and pinned.counts[1] == 0
    assert np.isnan(pinned.tau[1])
    with pytest.raises(ChainError):
        simulate_walks(chain, 0, seed=1)
