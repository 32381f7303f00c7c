"""Interconnect parasitics of crossbar metal lines.

Resistance follows R = rho * L / (W * T) with an optional narrow-wire
resistivity correction combining surface (Fuchs-Sondheimer) and grain
boundary (Mayadas-Shatzkes) scattering.  Capacitance per unit length uses
the Sakurai-Tamaru closed form for a line over a ground plane with one
coupled neighbour.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .config import InterconnectSpec
from .exceptions import DegenerateGeometry, ValidationError


@dataclass(frozen=True)
class WireSegment:
    length: float
    width: float
    thickness: float

    def __post_init__(self):
        if self.length < 0 or not (self.width > 0 and self.thickness > 0):
            raise ValidationError("segment dimensions must be positive", "segment")


@dataclass(frozen=True)
class ParasiticPair:
    resistance: float
    capacitance: float


def resistivity_ratio(width, mean_free_path, specular_p, reflection_r, grain_size):
    """rho / rho_bulk for a wire of the given width."""
    surface = 0.75 * (1.0 - specular_p) * mean_free_path / width
    if reflection_r == 0:
        return surface + 1.0
    alpha = (mean_free_path / grain_size) * reflection_r / (1.0 - reflection_r)
    bracket = (1.0 - 1.5 * alpha + 3.0 * alpha ** 2
               - 3.0 * alpha ** 3 * math.log(1.0 + 1.0 / alpha))
    if bracket <= 0:
        raise DegenerateGeometry(
            f"grain-boundary term is non-physical (bracket={bracket:.3g}, alpha={alpha:.3g})")
    return surface + 1.0 / bracket


def effective_resistivity(spec: InterconnectSpec) -> float:
    if not spec.scaling_enabled:
        return spec.bulk_resistivity
    return spec.bulk_resistivity * resistivity_ratio(
        spec.width,
        spec.mean_free_path_l0,
        spec.specular_fraction_p,
        spec.grain_reflection_r,
        spec.grain_size,
    )


def wire_resistance(seg: WireSegment, rho_eff: float) -> float:
    return rho_eff * seg.length / (seg.width * seg.thickness)


def wire_capacitance_per_length(spec: InterconnectSpec, spacing: float | None = None) -> float:
    """Capacitance per metre [F/m].

    ``spacing`` overrides ``spec.inter_wire_spacing_s``; one of them must be set.
    The coupling term is counted once (a single neighbour).
    """
    s = spacing if spacing is not None else spec.inter_wire_spacing_s
    if s is None:
        raise ValidationError("inter-wire spacing is not set", "interconnect.s")
    eps = spec.permittivity
    w_h = spec.width / spec.inter_metal_spacing_h
    t_h = spec.thickness / spec.inter_metal_spacing_h
    s_h = s / spec.inter_metal_spacing_h
    ground = 0.5 * eps * (1.15 * w_h + 2.8 * w_h ** 0.222)
    coupling = 2.0 * eps * s_h ** -1.34 * (0.03 * w_h + 0.83 * t_h - 0.07 * t_h ** 0.222)
    return ground + coupling


def segment_parasitics(seg: WireSegment, spec: InterconnectSpec,
                       spacing: float | None = None) -> ParasiticPair:
    if seg.length == 0:
        return ParasiticPair(0.0, 0.0)
    r = wire_resistance(seg, effective_resistivity(spec))
    c = wire_capacitance_per_length(spec, spacing) * seg.length
    return ParasiticPair(r, c)


def crossbar_segments(cfg) -> tuple[ParasiticPair, ParasiticPair]:
    """(row-line, column-line) parasitics of one bitcell-pitch segment for ``cfg``.

    Row lines run along the bitcell length, column lines along its width.
    """
    ic = cfg.interconnect
    spacing = cfg.wire_spacing
    row = segment_parasitics(WireSegment(cfg.bitcell.length, ic.width, ic.thickness), ic, spacing)
    col = segment_parasitics(WireSegment(cfg.bitcell.width, ic.width, ic.thickness), ic, spacing)
    return row, col


# --------------------------------------------------------------------------
# array forms, for sweeping geometry without Python loops

def _grain_bracket(alpha):
    """1 - 3a/2 + 3a^2 - 3a^3 ln(1 + 1/a), accurate for every a > 0.

    The closed form cancels badly once a grows past a few units, so large a
    uses its expansion in u = 1/a: 3 * sum_{k>=4} (-1)^k u^(k-3) / k.
    """
    alpha = np.asarray(alpha, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        direct = 1.0 + alpha * (-1.5 + alpha * (3.0 - 3.0 * alpha * np.log1p(1.0 / alpha)))
        u = 1.0 / alpha
        k = np.arange(4, 44)
        terms = (-1.0) ** k / k
        series = 3.0 * np.polynomial.polynomial.polyval(u, np.concatenate([[0.0], terms]))
    return np.where(alpha > 4.0, series, direct)


def resistivity_ratio_array(width, mean_free_path, specular_p, reflection_r, grain_size):
    """Vectorised :func:`resistivity_ratio`.

    Independent of the scalar form: the grain-boundary bracket switches to a
    series expansion for large alpha, where the closed form loses digits.
    """
    width, l0, p, r, d = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in
                                               (width, mean_free_path, specular_p,
                                                reflection_r, grain_size)))
    surface = 0.75 * (1.0 - p) * l0 / width
    with np.errstate(divide="ignore", invalid="ignore"):
        alpha = (l0 / d) * r / (1.0 - r)
        bracket = _grain_bracket(alpha)
        grain = np.where(r == 0, 1.0, 1.0 / bracket)
    if np.any((r != 0) & ~(bracket > 0)):
        raise DegenerateGeometry("grain-boundary term is non-physical for some inputs")
    return surface + grain


def capacitance_per_length_array(width, thickness, h, s, permittivity):
    """Vectorised :func:`wire_capacitance_per_length` (F/m)."""
    w, t, h, s, eps = (np.asarray(a, dtype=float) for a in (width, thickness, h, s, permittivity))
    ground = eps * (0.575 * w / h + 1.4 * np.exp(0.222 * np.log(w / h)))
    coupling = 2.0 * eps * np.exp(-1.34 * np.log(s / h)) * (
        0.03 * w / h + 0.83 * t / h - 0.07 * np.exp(0.222 * np.log(t / h)))
    return ground + coupling
