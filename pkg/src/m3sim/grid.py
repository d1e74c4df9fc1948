"""Hexagonal macrocell tessellation: subcell addressing, geometry, clustering.

A macrocell of radius R is split into H concentric rings of hexagonal
subcells of radius r = R/(2H); adjacent subcell centers sit d_r = sqrt(3)*r
apart.  Subcells are addressed three ways:

* linear index i (0 is the center subcell, occupied by the base station),
* ring/angle pair (h, theta) with theta in degrees counter-clockwise from
  the +x axis,
* axial lattice coordinates (q, r) used internally for exact arithmetic.

Ring h holds 6h subcells occupying linear indices 3h(h-1)+1 .. 3h(h+1);
within a ring, indices increase with theta.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

SQRT3 = math.sqrt(3.0)

# Axial steps to the six lattice neighbours (flat-top hexagons, so the
# neighbour directions sit at 30, 90, 150, 210, 270 and 330 degrees).
DIRECTIONS = ((1, 0), (0, 1), (-1, 1), (-1, 0), (0, -1), (1, -1))

NUM_COLORS = 7


class GridError(ValueError):
    """Invalid grid parameters or subcell reference."""


@dataclass(frozen=True)
class GridParams:
    """Macrocell tessellation parameters.

    H is the number of subcell rings, R the macrocell radius in meters and
    K the reuse-cluster size (only the rhombic 7-cell clustering is
    supported).
    """

    H: int
    R: float = 1000.0
    K: int = 7

    def __post_init__(self):
        if not isinstance(self.H, int) or self.H < 1:
            raise GridError(f"ring count H must be an integer >= 1, got {self.H!r}")
        if self.R <= 0:
            raise GridError(f"macrocell radius R must be positive, got {self.R!r}")
        if self.K != NUM_COLORS:
            raise GridError(f"only the {NUM_COLORS}-cell rhombic clustering is supported, got K={self.K!r}")

    @property
    def subcell_radius(self) -> float:
        return self.R / (2 * self.H)

    @property
    def relay_distance(self) -> float:
        """Distance in meters between adjacent subcell centers."""
        return SQRT3 * self.subcell_radius

    @property
    def subcell_count(self) -> int:
        """Number of ring subcells; the center subcell is not counted."""
        return 3 * self.H * (self.H + 1)


@dataclass(frozen=True)
class SubcellId:
    """One subcell: ring h, angle theta (degrees), linear index i, axial (q, r)."""

    h: int
    theta: float
    i: int
    q: int
    r: int


def ring_index_range(h: int) -> tuple[int, int]:
    """Inclusive linear index range (first, last) of ring h >= 1."""
    if h < 1:
        raise GridError(f"ring index must be >= 1, got {h}")
    return 3 * h * (h - 1) + 1, 3 * h * (h + 1)


def _axial_ring(q: int, r: int) -> int:
    return (abs(q) + abs(r) + abs(q + r)) // 2


def _unit_position(q: int, r: int) -> tuple[float, float]:
    # In units of the subcell radius.
    return 1.5 * q, SQRT3 * (r + 0.5 * q)


class SubcellGrid:
    """Immutable tessellation of one macrocell."""

    def __init__(self, params: GridParams):
        self.params = params
        H = params.H
        rings: list[list[tuple[float, int, int]]] = [[] for _ in range(H + 1)]
        for q in range(-H, H + 1):
            for r in range(max(-H, -q - H), min(H, -q + H) + 1):
                h = _axial_ring(q, r)
                if h == 0:
                    theta = 0.0
                else:
                    x, y = _unit_position(q, r)
                    theta = math.degrees(math.atan2(y, x)) % 360.0
                rings[h].append((theta, q, r))
        cells: list[SubcellId] = []
        for h, members in enumerate(rings):
            members.sort()
            for theta, q, r in members:
                cells.append(SubcellId(h=h, theta=theta, i=len(cells), q=q, r=r))
        self.cells: tuple[SubcellId, ...] = tuple(cells)
        self._by_axial = {(c.q, c.r): c for c in self.cells}
        self._rings: tuple[tuple[SubcellId, ...], ...] = tuple(
            tuple(self.cells[a] for a in range(*_ring_slice(h))) if h else (self.cells[0],)
            for h in range(H + 1)
        )

    # -- addressing ---------------------------------------------------------

    def __len__(self) -> int:
        return len(self.cells)

    def cell(self, i: int) -> SubcellId:
        if not 0 <= i < len(self.cells):
            raise GridError(f"subcell index {i} outside 0..{len(self.cells) - 1}")
        return self.cells[i]

    def ring(self, h: int) -> tuple[SubcellId, ...]:
        if not 0 <= h <= self.params.H:
            raise GridError(f"ring {h} outside 0..{self.params.H}")
        return self._rings[h]

    def at_axial(self, q: int, r: int) -> SubcellId | None:
        return self._by_axial.get((q, r))

    def polar_of(self, i: int) -> tuple[int, float]:
        c = self.cell(i)
        return c.h, c.theta

    def index_of(self, h: int, theta: float) -> int:
        """Exact lookup of a (h, theta) address; raises when no subcell matches."""
        cell, snap = self.nearest_in_ring(h, theta)
        if snap > 1e-9:
            raise GridError(f"no subcell at ring {h} angle {theta} (nearest is {cell.theta:.4f})")
        return cell.i

    def nearest_in_ring(self, h: int, theta: float) -> tuple[SubcellId, float]:
        """Subcell of ring h nearest to angle theta, with the angular snap in degrees.

        Ties resolve to the lower linear index.
        """
        if not 0 <= h <= self.params.H:
            raise GridError(f"ring {h} outside 0..{self.params.H}")
        theta = theta % 360.0
        best, best_gap = None, None
        for c in self._rings[h]:
            gap = abs(c.theta - theta)
            gap = min(gap, 360.0 - gap)
            if best is None or gap < best_gap - 1e-12:
                best, best_gap = c, gap
        return best, best_gap

    # -- geometry -----------------------------------------------------------

    def center_position(self, cell: SubcellId) -> tuple[float, float]:
        """Cartesian center of a subcell in meters, the base station at (0, 0)."""
        x, y = _unit_position(cell.q, cell.r)
        s = self.params.subcell_radius
        return x * s, y * s

    def squared_step_distance(self, a: SubcellId, b: SubcellId) -> int:
        """Exact squared center distance in units of the relay distance."""
        dq, dr = a.q - b.q, a.r - b.r
        return dq * dq + dr * dr + dq * dr

    def interference_distance(self, a: SubcellId, b: SubcellId) -> float:
        """Center distance between two distinct subcells in relay-distance units."""
        if a.i == b.i:
            raise GridError(f"subcell {a.i} cannot interfere with itself")
        return math.sqrt(self.squared_step_distance(a, b))

    def hop_distance(self, a: SubcellId, b: SubcellId) -> int:
        """Minimum number of lattice hops between two subcells."""
        return _axial_ring(a.q - b.q, a.r - b.r)

    def neighbors(self, cell: SubcellId) -> list[SubcellId]:
        """Existing lattice neighbours (at most six; fewer on the outer ring)."""
        out = []
        for dq, dr in DIRECTIONS:
            n = self._by_axial.get((cell.q + dq, cell.r + dr))
            if n is not None:
                out.append(n)
        return out

    def neighbors_ranked(self, cell: SubcellId, dest: "Destinations") -> list[SubcellId]:
        """Neighbours sorted by center distance to the nearest destination.

        Ties resolve to the lower linear index so rankings are reproducible.
        """
        targets = dest.absorbing_cells()
        return sorted(
            self.neighbors(cell),
            key=lambda n: (min(self.squared_step_distance(n, t) for t in targets), n.i),
        )

    # -- clustering ---------------------------------------------------------

    def cluster_color(self, cell: SubcellId) -> int:
        """Reuse color 0..6; the center has color 0 and no two neighbours share one."""
        return (cell.q + 5 * cell.r) % NUM_COLORS

    def color_populations(self, exclude: frozenset[int] = frozenset()) -> list[int]:
        """Ring-subcell count per color, skipping the center and excluded indices."""
        pops = [0] * NUM_COLORS
        for c in self.cells[1:]:
            if c.i not in exclude:
                pops[self.cluster_color(c)] += 1
        return pops


def _ring_slice(h: int) -> tuple[int, int]:
    first, last = ring_index_range(h)
    return first, last + 1


@dataclass(frozen=True)
class Destinations:
    """Route targets: the base station plus any access points with coverage.

    ``bs`` may be None for single-technology target sets (e.g. routes that
    terminate at an access point only).
    """

    bs: SubcellId | None
    aps: tuple[SubcellId, ...] = ()
    coverage: tuple[tuple[SubcellId, ...], ...] = ()

    def __post_init__(self):
        if self.bs is None and not self.aps:
            raise GridError("a destination set needs a base station or an access point")
        if len(self.coverage) not in (0, len(self.aps)):
            raise GridError("coverage must list one cluster per access point")
        for cluster in self.coverage:
            for c in cluster:
                if self.bs is not None and c.i == self.bs.i:
                    raise GridError("access-point coverage may not include the base station")

    def absorbing_cells(self) -> list[SubcellId]:
        """Destination subcells, access points first and the base station last."""
        cells = list(self.aps)
        if self.bs is not None:
            cells.append(self.bs)
        return cells

    def indices(self) -> frozenset[int]:
        return frozenset(c.i for c in self.absorbing_cells())

    def coverage_of(self, ap: SubcellId) -> tuple[SubcellId, ...]:
        for a, cluster in zip(self.aps, self.coverage):
            if a.i == ap.i:
                return cluster
        raise GridError(f"subcell {ap.i} is not an access point")


def make_destinations(
    grid: SubcellGrid,
    ap_polars: list[tuple[int, float]] | None = None,
    coverage: list[list[tuple[int, float]]] | None = None,
) -> Destinations:
    """Build a destination set from (h, theta) access-point placements.

    Placements snap to the nearest subcell of the requested ring.  Coverage
    defaults to each access point's lattice neighbours.
    """
    aps = []
    for h, theta in ap_polars or []:
        if h == 0:
            raise GridError("an access point cannot share the center subcell")
        cell, _ = grid.nearest_in_ring(h, theta)
        aps.append(cell)
    if len(set(a.i for a in aps)) != len(aps):
        raise GridError("duplicate access-point placements")
    if coverage is None:
        clusters = tuple(tuple(grid.neighbors(a)) for a in aps)
    else:
        if len(coverage) != len(aps):
            raise GridError("coverage must list one cluster per access point")
        clusters = tuple(
            tuple(grid.nearest_in_ring(h, theta)[0] for h, theta in cluster)
            for cluster in coverage
        )
    return Destinations(bs=grid.cell(0), aps=tuple(aps), coverage=clusters)
