"""Porous-medium model of a cell spheroid and its surrounding fluid.

A spheroid of radius R packed with N cells of volume v is treated as a
homogeneous porous sphere immersed in free fluid:

    porosity        eps   = 1 - N*v / V_s,   V_s = (4/3) pi R^3
    tortuosity      tau   = eps**-0.5
    effective D     D_eff = (eps / tau) * D = eps**1.5 * D
    boundary jump   c_in = k * c_out at r = R, with k = sqrt(D / D_eff)

so k = eps**-0.75.  Signaling molecules inside the void space are removed
by an irreversible first-order reaction at rate ``k_f`` [1/s]; in the
frequency domain this is a constant sink (the only shipped implementation
of the pluggable sink interface used by the series solver).

All quantities are SI (m, s, m^3).  Unit conversion from micrometers is
done at the CLI boundary, never here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

__all__ = [
    "SphericalCoord",
    "SpheroidGeometry",
    "MediumModel",
    "FirstOrderSink",
    "porosity",
    "tortuosity",
    "effective_diffusion",
    "boundary_jump",
]


@dataclass(frozen=True)
class SphericalCoord:
    """Point in spherical coordinates (radial, elevation, azimuth), SI meters/radians."""

    r: float
    theta: float
    phi: float

    def to_cartesian(self) -> tuple[float, float, float]:
        st = math.sin(self.theta)
        return (
            self.r * st * math.cos(self.phi),
            self.r * st * math.sin(self.phi),
            self.r * math.cos(self.theta),
        )


def porosity(n_cells: float, cell_volume: float, radius: float) -> float:
    """Void fraction of a spheroid packed with ``n_cells`` cells.

    eps = 1 - n_cells * cell_volume / ((4/3) pi radius^3), in [0, 1].
    """
    if radius <= 0.0:
        raise ValueError(f"spheroid radius must be positive, got {radius}")
    if n_cells < 0 or cell_volume < 0:
        raise ValueError("cell count and cell volume must be non-negative")
    v_s = 4.0 / 3.0 * math.pi * radius**3
    packed = n_cells * cell_volume
    if packed > v_s:
        raise ValueError(
            f"cell matrix volume {packed:.4g} m^3 exceeds spheroid volume "
            f"{v_s:.4g} m^3 (porosity would be negative)"
        )
    return 1.0 - packed / v_s


def tortuosity(porosity: float) -> float:
    """Path-lengthening factor of the void space, modeled as porosity**-0.5."""
    if porosity <= 0.0:
        raise ValueError(f"porosity must be positive, got {porosity}")
    return porosity**-0.5


def effective_diffusion(d_free: float, porosity: float) -> float:
    """Macroscopic diffusivity inside the porous sphere.

    D_eff = (eps / tau) * D = eps**1.5 * D with tau = eps**-0.5.
    """
    if d_free <= 0.0:
        raise ValueError(f"free diffusion coefficient must be positive, got {d_free}")
    if not 0.0 < porosity <= 1.0:
        raise ValueError(f"porosity must be in (0, 1], got {porosity}")
    return porosity**1.5 * d_free


def boundary_jump(d_free: float, d_eff: float) -> float:
    """Equilibrium concentration ratio c_in/c_out at the porous interface.

    k = sqrt(D / D_eff); equals porosity**-0.75 when D_eff = eps**1.5 * D.
    The model assumes hindered interior diffusion, so D_eff <= D.
    """
    if d_eff <= 0.0:
        raise ValueError(f"effective diffusion coefficient must be positive, got {d_eff}")
    if d_eff > d_free:
        raise ValueError(
            f"d_eff={d_eff:.4g} exceeds d_free={d_free:.4g}; "
            "the porous interior must be the slower medium"
        )
    return math.sqrt(d_free / d_eff)


@dataclass(frozen=True)
class SpheroidGeometry:
    """Receiver sphere and transmitter location.

    Invariants: positive radius, strictly positive porosity (cells do not
    fill the sphere), and the transmitter strictly outside the sphere.
    """

    radius_m: float
    n_cells: float
    cell_volume_m3: float
    tx_position: SphericalCoord

    def __post_init__(self):
        if self.radius_m <= 0.0:
            raise ValueError(f"radius_m must be positive, got {self.radius_m}")
        if self.n_cells < 0 or self.cell_volume_m3 < 0:
            raise ValueError("n_cells and cell_volume_m3 must be non-negative")
        if self.n_cells * self.cell_volume_m3 >= self.volume_m3:
            raise ValueError(
                "n_cells * cell_volume_m3 must be smaller than the spheroid volume "
                "(porosity must stay positive)"
            )
        if self.tx_position.r <= self.radius_m:
            raise ValueError(
                f"transmitter radius {self.tx_position.r} must lie strictly outside "
                f"the spheroid radius {self.radius_m}"
            )

    @property
    def volume_m3(self) -> float:
        return 4.0 / 3.0 * math.pi * self.radius_m**3

    @property
    def porosity(self) -> float:
        return porosity(self.n_cells, self.cell_volume_m3, self.radius_m)

    @property
    def cell_volume_fraction(self) -> float:
        return 1.0 - self.porosity


@dataclass(frozen=True)
class MediumModel:
    """Diffusion environment inside and outside the spheroid.

    Constructed via :meth:`from_porosity` or :meth:`from_geometry` so the
    derived fields always satisfy, by construction,

        d_eff  = (porosity / tortuosity) * d_free
        tortuosity = porosity**-0.5
        jump_k = sqrt(d_free / d_eff) = porosity**-0.75
    """

    d_free: float
    porosity: float
    tortuosity: float
    d_eff: float
    jump_k: float
    k_f: float = 0.0

    def __post_init__(self):
        if self.d_free <= 0.0:
            raise ValueError("d_free must be positive")
        if not 0.0 < self.porosity <= 1.0:
            raise ValueError(f"porosity must be in (0, 1], got {self.porosity}")
        if self.k_f < 0.0:
            raise ValueError(f"k_f must be non-negative, got {self.k_f}")

    @classmethod
    def from_porosity(cls, d_free: float, porosity: float, k_f: float = 0.0) -> "MediumModel":
        d_eff = effective_diffusion(d_free, porosity)
        return cls(
            d_free=d_free,
            porosity=porosity,
            tortuosity=tortuosity(porosity),
            d_eff=d_eff,
            jump_k=boundary_jump(d_free, d_eff),
            k_f=k_f,
        )

    @classmethod
    def from_geometry(cls, d_free: float, geom: SpheroidGeometry, k_f: float = 0.0) -> "MediumModel":
        return cls.from_porosity(d_free, geom.porosity, k_f=k_f)

    @property
    def sink(self) -> "FirstOrderSink":
        return FirstOrderSink(self.k_f)


class FirstOrderSink:
    """Constant frequency-domain removal rate.

    The interior equation carries a sink term -rate(s) * c_s; a constant
    rate k_f is the transfer function of the irreversible first-order
    reaction A -> E.  Other sinks can implement the same one-argument
    callable protocol.
    """

    def __init__(self, k_f: float):
        if k_f < 0.0:
            raise ValueError(f"k_f must be non-negative, got {k_f}")
        self.k_f = k_f

    def __call__(self, s: complex) -> complex:
        return complex(self.k_f)

    def __repr__(self):
        return f"FirstOrderSink(k_f={self.k_f!r})"
