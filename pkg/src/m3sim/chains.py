"""Absorbing Markov chain analytics for route discovery.

Route discovery is modeled as a walk over subcell states that ends either
at a destination (base station or access point) or in the dedicated
``NO_ROUTE`` state once no relay can be found.  With the transition matrix
in canonical form

    P = [[I, 0],
         [R, Q]]

the fundamental matrix (I - Q)^-1 yields mean absorption times, their
variances and the absorption probabilities.  All linear algebra goes
through one dense LU factorization; the matrix is never inverted
explicitly.

A seeded Monte Carlo walk simulator doubles as an independent oracle for
the analytic results.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Hashable, Iterable, Mapping, Sequence

import numpy as np
from scipy.linalg import lu_factor, lu_solve

NO_ROUTE = "nr"

_ROW_SUM_TOL = 1e-9


class ChainError(ValueError):
    """Malformed chain: bad rows, unknown states or unreachable absorption."""


@dataclass(frozen=True)
class AbsorbingChain:
    """Row-stochastic chain over transient states followed by absorbing states.

    ``matrix`` is ordered with the transient states first (in ``transient``
    order) and the absorbing states last; ``dwell`` holds the per-visit slot
    cost of each transient state.
    """

    transient: tuple[Hashable, ...]
    absorbing: tuple[Hashable, ...]
    matrix: np.ndarray
    dwell: np.ndarray

    def __post_init__(self):
        n, a = len(self.transient), len(self.absorbing)
        if self.matrix.shape != (n + a, n + a):
            raise ChainError(
                f"matrix shape {self.matrix.shape} does not match {n} transient + {a} absorbing states"
            )
        if self.dwell.shape != (n,):
            raise ChainError(f"dwell vector must have one entry per transient state")
        if np.any(self.dwell <= 0):
            raise ChainError("dwell times must be positive")

    def transient_index(self, label: Hashable) -> int:
        try:
            return self.transient.index(label)
        except ValueError:
            raise ChainError(f"unknown transient state {label!r}") from None


def build_chain(
    rows: Mapping[Hashable, Sequence[tuple[Hashable, float]]],
    absorbing: Sequence[Hashable],
    dwell: Mapping[Hashable, float] | float = 1.0,
) -> AbsorbingChain:
    """Assemble an AbsorbingChain from per-state target/probability rows.

    ``rows`` maps each transient state to its outgoing (target, probability)
    pairs; targets may be transient or absorbing.  ``dwell`` is a uniform
    slot cost or a per-state mapping.
    """
    transient = tuple(rows)
    absorbing = tuple(absorbing)
    if set(transient) & set(absorbing):
        raise ChainError("a state cannot be both transient and absorbing")
    index = {s: k for k, s in enumerate(transient)}
    for k, s in enumerate(absorbing):
        index[s] = len(transient) + k
    n = len(transient) + len(absorbing)
    matrix = np.zeros((n, n))
    for state, targets in rows.items():
        row = matrix[index[state]]
        for target, prob in targets:
            if target not in index:
                raise ChainError(f"row for {state!r} targets unknown state {target!r}")
            if prob < -_ROW_SUM_TOL:
                raise ChainError(f"negative probability {prob!r} in row for {state!r}")
            row[index[target]] += prob
        total = row.sum()
        if abs(total - 1.0) > _ROW_SUM_TOL:
            raise ChainError(f"row for {state!r} sums to {total!r}, expected 1")
        row /= total
    for k in range(len(transient), n):
        matrix[k, k] = 1.0
    if isinstance(dwell, Mapping):
        dwell_vec = np.array([dwell[s] for s in transient], dtype=float)
    else:
        dwell_vec = np.full(len(transient), float(dwell))
    return AbsorbingChain(transient=transient, absorbing=absorbing, matrix=matrix, dwell=dwell_vec)


def canonical_form(chain: AbsorbingChain) -> tuple[np.ndarray, np.ndarray]:
    """Extract (Q, R): transient-to-transient and transient-to-absorbing blocks.

    Validates row stochasticity and that absorption is reachable from every
    transient state (spectral radius of Q strictly below one).
    """
    n = len(chain.transient)
    sums = chain.matrix.sum(axis=1)
    bad = np.where(np.abs(sums - 1.0) > _ROW_SUM_TOL)[0]
    if bad.size:
        raise ChainError(f"row {bad[0]} sums to {sums[bad[0]]!r}, expected 1")
    if np.any(chain.matrix < -_ROW_SUM_TOL):
        raise ChainError("transition probabilities cannot be negative")
    Q = chain.matrix[:n, :n]
    R = chain.matrix[:n, n:]
    if n:
        radius = np.max(np.abs(np.linalg.eigvals(Q)))
        if radius >= 1.0 - 1e-12:
            raise ChainError(
                f"absorption unreachable from some state (spectral radius {radius!r})"
            )
    return Q, R


@dataclass(frozen=True)
class ChainStatistics:
    """Absorption statistics, analytic or empirical.

    tau/var_tau are per transient state; absorb_probs has one column per
    absorbing state.  tau_mean and absorb_dist aggregate over the initial
    distribution (or over all walks when empirical), and counts holds the
    per-state walk counts for empirical results.
    """

    tau: np.ndarray
    var_tau: np.ndarray
    absorb_probs: np.ndarray
    tau_mean: float
    absorb_dist: np.ndarray
    counts: np.ndarray | None = None


def _initial_distribution(chain: AbsorbingChain, start: np.ndarray | None) -> np.ndarray:
    n = len(chain.transient)
    if start is None:
        return np.full(n, 1.0 / n)
    f = np.asarray(start, dtype=float)
    if f.shape != (n,) or np.any(f < 0) or not np.isclose(f.sum(), 1.0, atol=_ROW_SUM_TOL):
        raise ChainError("initial distribution must be a probability vector over transient states")
    return f


def absorption_statistics(chain: AbsorbingChain, start: np.ndarray | None = None) -> ChainStatistics:
    """Mean/variance of time to absorption and absorption probabilities.

    Solves (I - Q) x = b by LU factorization for the dwell vector, its
    square and the R block; the variance follows the second-moment identity
    for per-state dwell costs.
    """
    Q, R = canonical_form(chain)
    n = len(chain.transient)
    eye = np.eye(n)
    lu = lu_factor(eye - Q)
    e = chain.dwell
    tau = lu_solve(lu, e)
    # var = 2 (I-Q)^-1 T Q tau + (I-Q)^-1 e^2 - tau^2, with T = diag(dwell)
    var = 2.0 * lu_solve(lu, e * (Q @ tau)) + lu_solve(lu, e * e) - tau * tau
    var = np.maximum(var, 0.0)
    absorb = lu_solve(lu, R)
    f = _initial_distribution(chain, start)
    return ChainStatistics(
        tau=tau,
        var_tau=var,
        absorb_probs=absorb,
        tau_mean=float(f @ tau),
        absorb_dist=f @ absorb,
    )


def uniform_dwell_variance(chain: AbsorbingChain) -> np.ndarray:
    """Variance of absorption time via the fundamental-matrix identity.

    Valid only for a uniform dwell T: var = ((2N - I) N 1 - (N 1)^2) T^2.
    Kept separate from absorption_statistics as a cross-check route.
    """
    t = chain.dwell[0]
    if not np.allclose(chain.dwell, t):
        raise ChainError("uniform-dwell variance requires equal dwell times")
    Q, _ = canonical_form(chain)
    n = len(chain.transient)
    fundamental = np.linalg.inv(np.eye(n) - Q)
    steps = fundamental @ np.ones(n)
    return ((2.0 * fundamental - np.eye(n)) @ steps - steps * steps) * t * t


_CHUNK = 200_000


def simulate_walks(
    chain: AbsorbingChain,
    n_walks: int,
    seed: int,
    start: np.ndarray | None = None,
) -> ChainStatistics:
    """Monte Carlo oracle: simulate ``n_walks`` absorption walks.

    Walks start from the ``start`` distribution (uniform by default), are
    partitioned into fixed-size chunks with seeds derived from ``seed`` and
    merged deterministically, so results are reproducible for a given seed
    regardless of chunking.
    """
    if n_walks < 1:
        raise ChainError(f"need at least one walk, got {n_walks}")
    Q, R = canonical_form(chain)
    n, a = Q.shape[0], R.shape[1]
    f = _initial_distribution(chain, start)
    cum = np.cumsum(np.hstack([Q, R]), axis=1)
    cum[:, -1] = 1.0
    dwell = chain.dwell

    counts = np.zeros(n, dtype=np.int64)
    time_sum = np.zeros(n)
    time_sqsum = np.zeros(n)
    absorb_counts = np.zeros((n, a), dtype=np.int64)

    chunks = [_CHUNK] * (n_walks // _CHUNK)
    if n_walks % _CHUNK:
        chunks.append(n_walks % _CHUNK)
    seeds = np.random.SeedSequence(seed).spawn(len(chunks))
    for size, chunk_seed in zip(chunks, seeds):
        rng = np.random.Generator(np.random.PCG64(chunk_seed))
        origin = rng.choice(n, size=size, p=f)
        state = origin.copy()
        elapsed = dwell[state].copy()
        active = np.arange(size)
        landed = np.empty(size, dtype=np.int64)
        while active.size:
            rows = cum[state[active]]
            step = (rows < rng.random((active.size, 1))).sum(axis=1)
            absorbed = step >= n
            hit = active[absorbed]
            landed[hit] = step[absorbed] - n
            moved = active[~absorbed]
            state[moved] = step[~absorbed]
            elapsed[moved] += dwell[state[moved]]
            active = moved
        np.add.at(counts, origin, 1)
        np.add.at(time_sum, origin, elapsed)
        np.add.at(time_sqsum, origin, elapsed * elapsed)
        np.add.at(absorb_counts, (origin, landed), 1)

    visited = counts > 0
    tau = np.full(n, np.nan)
    var = np.full(n, np.nan)
    tau[visited] = time_sum[visited] / counts[visited]
    twice = counts > 1
    var[twice] = (time_sqsum[twice] - counts[twice] * tau[twice] ** 2) / (counts[twice] - 1)
    probs = np.full((n, a), np.nan)
    probs[visited] = absorb_counts[visited] / counts[visited, None]
    return ChainStatistics(
        tau=tau,
        var_tau=var,
        absorb_probs=probs,
        tau_mean=float(time_sum.sum() / n_walks),
        absorb_dist=absorb_counts.sum(axis=0) / n_walks,
        counts=counts,
    )
