"""Single-hop link physics: SINR, Shannon capacity, minimum transmit power.

Every hop spans adjacent subcells, so the useful path length is always the
relay distance d_r.  Interferer distances are expressed as multiples Z of
d_r, which turns the SINR into

    sinr = P / (sum_k P / Z_k**alpha  +  noise * d_r**alpha)

after normalizing by the direct-path gain 1/d_r**alpha.  No fading model is
applied; the geometry is the channel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .grid import GridParams, SubcellGrid, SubcellId


class RadioError(ValueError):
    """Invalid radio parameters or link geometry."""


@dataclass(frozen=True)
class RadioParams:
    """Transmit power (W), path-loss exponent, noise power (W) and sensitivity."""

    power: float = 0.15
    alpha: float = 2.0
    noise: float = 1e-4
    sensitivity: float = 1e-6
    log_base: float = 2.0
    noise_by_ring: dict[int, float] | None = None

    def __post_init__(self):
        if self.power <= 0:
            raise RadioError(f"transmit power must be positive, got {self.power!r}")
        if self.alpha <= 0:
            raise RadioError(f"path-loss exponent must be positive, got {self.alpha!r}")
        if self.noise < 0:
            raise RadioError(f"noise power cannot be negative, got {self.noise!r}")
        if self.log_base <= 1:
            raise RadioError(f"capacity log base must exceed 1, got {self.log_base!r}")

    def noise_at(self, ring: int) -> float:
        if self.noise_by_ring and ring in self.noise_by_ring:
            return self.noise_by_ring[ring]
        return self.noise


@dataclass(frozen=True)
class LinkContext:
    """One transmission: transmitter, its adjacent receiver, co-slot interferers."""

    tx: SubcellId
    rx: SubcellId
    interferers: tuple[SubcellId, ...] = ()


def link_sinr(ctx: LinkContext, radio: RadioParams, grid: SubcellGrid) -> float:
    """SINR at the receiver of a single relay hop.

    Interference is summed over the co-slot transmitters in ``ctx``; each
    must occupy a subcell distinct from the receiver.
    """
    if grid.squared_step_distance(ctx.tx, ctx.rx) != 1:
        raise RadioError(
            f"link {ctx.tx.i}->{ctx.rx.i} does not span adjacent subcells"
        )
    d_r = grid.params.relay_distance
    interference = 0.0
    for cell in ctx.interferers:
        if cell.i == ctx.rx.i:
            raise RadioError(f"interferer co-located with receiver {ctx.rx.i}")
        z = grid.interference_distance(cell, ctx.rx)
        interference += radio.power / z**radio.alpha
    noise = radio.noise_at(ctx.rx.h) * d_r**radio.alpha
    return radio.power / (interference + noise)


def link_capacity(sinr: float, log_base: float = 2.0) -> float:
    """Shannon capacity of a unit-bandwidth link, log_base(1 + sinr)."""
    if sinr < 0:
        raise RadioError(f"SINR cannot be negative, got {sinr!r}")
    return math.log1p(sinr) / math.log(log_base)


def min_power(params: GridParams, sensitivity: float, alpha: float) -> float:
    """Smallest transmit power that still reaches an adjacent subcell.

    With received power P/d_r**alpha and a receiver sensitivity floor, the
    minimum is sensitivity * d_r**alpha.
    """
    if sensitivity <= 0:
        raise RadioError(f"sensitivity must be positive, got {sensitivity!r}")
    if alpha <= 0:
        raise RadioError(f"path-loss exponent must be positive, got {alpha!r}")
    return sensitivity * params.relay_distance**alpha
