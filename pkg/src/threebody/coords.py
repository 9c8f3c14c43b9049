"""Center-of-mass frame, Jacobi and polar coordinates, and sector geometry.

Conventions (three equal masses ``m``)::

    R = (x1 + x2 + x3) / 3
    x = (x1 - x2) / sqrt(2)
    y = (x1 + x2 - 2 x3) / sqrt(6)
    x = r sin(phi),  y = r cos(phi)      (phi measured from +y toward +x)

Angles are reported in ``(-pi, pi]``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ValidationError

log = logging.getLogger(__name__)

SQRT2 = math.sqrt(2.0)
SQRT3 = math.sqrt(3.0)
SQRT6 = math.sqrt(6.0)
THIRD_PI = math.pi / 3.0

BOUNDARY = "boundary"


@dataclass(frozen=True)
class ParticleState:
    positions: tuple[float, float, float]
    momenta: tuple[float, float, float]
    time: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "positions", tuple(float(v) for v in self.positions))
        object.__setattr__(self, "momenta", tuple(float(v) for v in self.momenta))
        if len(self.positions) != 3 or len(self.momenta) != 3:
            raise ValidationError("ParticleState needs exactly three positions and momenta")


@dataclass(frozen=True)
class JacobiState:
    R: float
    x: float
    y: float
    P_R: float
    P_x: float
    P_y: float


@dataclass(frozen=True)
class PolarState:
    r: float
    phi: float
    p_r: float
    p_phi: float


@dataclass(frozen=True)
class SectorSpec:
    """One of the six angular sectors ``(-delta + q pi/3, pi/3 - delta + q pi/3)``."""

    delta: float
    q: int = 0
    width: float = THIRD_PI

    @property
    def bounds(self) -> tuple[float, float]:
        lo = -self.delta + self.q * self.width
        return lo, lo + self.width

    def contains(self, phi: float, tol: float = 1e-12) -> bool:
        return sector_of(phi, self.delta, tol=tol, width=self.width) == self.q % _count(self.width)


def wrap_angle(phi):
    """Map angles to ``(-pi, pi]``."""
    w = np.pi - np.mod(np.pi - np.asarray(phi, dtype=float), 2.0 * np.pi)
    return float(w) if np.ndim(w) == 0 else w


def to_cm_frame(state: ParticleState) -> ParticleState:
    x = np.asarray(state.positions)
    p = np.asarray(state.momenta)
    return ParticleState(tuple(x - x.mean()), tuple(p - p.mean()), state.time)


def jacobi_vectors(v) -> tuple:
    """Apply the Jacobi map to a trailing axis of length 3 (positions or momenta).

    Returns ``(mean, x, y)`` for positions; for momenta use :func:`jacobi_momenta`.
    """
    v = np.asarray(v, dtype=float)
    v1, v2, v3 = v[..., 0], v[..., 1], v[..., 2]
    return (v1 + v2 + v3) / 3.0, (v1 - v2) / SQRT2, (v1 + v2 - 2.0 * v3) / SQRT6


def jacobi_momenta(p) -> tuple:
    """Returns ``(P_R, P_x, P_y)``; ``P_R`` is the total momentum."""
    p = np.asarray(p, dtype=float)
    p1, p2, p3 = p[..., 0], p[..., 1], p[..., 2]
    return p1 + p2 + p3, (p1 - p2) / SQRT2, (p1 + p2 - 2.0 * p3) / SQRT6


def positions_from_jacobi(R, x, y) -> np.ndarray:
    x1 = R + x / SQRT2 + y / SQRT6
    x2 = R - x / SQRT2 + y / SQRT6
    x3 = R - 2.0 * y / SQRT6
    return np.stack(np.broadcast_arrays(x1, x2, x3), axis=-1)


def momenta_from_jacobi(P_R, P_x, P_y) -> np.ndarray:
    p1 = P_R / 3.0 + P_x / SQRT2 + P_y / SQRT6
    p2 = P_R / 3.0 - P_x / SQRT2 + P_y / SQRT6
    p3 = P_R / 3.0 - 2.0 * P_y / SQRT6
    return np.stack(np.broadcast_arrays(p1, p2, p3), axis=-1)


def jacobi_from_cartesian(state: ParticleState) -> JacobiState:
    R, x, y = jacobi_vectors(state.positions)
    P_R, P_x, P_y = jacobi_momenta(state.momenta)
    return JacobiState(float(R), float(x), float(y), float(P_R), float(P_x), float(P_y))


def cartesian_from_jacobi(j: JacobiState, time: float = 0.0) -> ParticleState:
    pos = positions_from_jacobi(j.R, j.x, j.y)
    mom = momenta_from_jacobi(j.P_R, j.P_x, j.P_y)
    return ParticleState(tuple(pos), tuple(mom), time)


def polar_angle(x, y):
    """Angle with ``x = r sin(phi)``, ``y = r cos(phi)``."""
    a = np.arctan2(x, y)
    return float(a) if np.ndim(a) == 0 else a


def polar_from_jacobi(j: JacobiState, m: float = 1.0) -> PolarState:
    """Polar phase-space point; ``p_r = m dr/dt`` and ``p_phi = m r^2 dphi/dt``.

    ``m`` is accepted for signature symmetry; the canonical momenta do not depend on it.
    """
    r = math.hypot(j.x, j.y)
    if r == 0.0:
        raise ValidationError("polar singularity: zero hyper-radius")
    phi = polar_angle(j.x, j.y)
    p_r = (j.x * j.P_x + j.y * j.P_y) / r
    # d(phi)/dt = (y dx/dt - x dy/dt) / r^2
    p_phi = j.y * j.P_x - j.x * j.P_y
    return PolarState(r, phi, p_r, p_phi)


def cartesian_from_polar(r: float, phi: float) -> np.ndarray:
    if np.any(np.asarray(r) < 0):
        raise ValidationError("hyper-radius must be non-negative")
    i = np.arange(1, 4)
    r = np.asarray(r, dtype=float)[..., None]
    phi = np.asarray(phi, dtype=float)[..., None]
    return -math.sqrt(2.0 / 3.0) * r * np.cos(phi + i * 2.0 * math.pi / 3.0)


def polar_from_cartesian(state: ParticleState) -> PolarState:
    return polar_from_jacobi(jacobi_from_cartesian(state))


def _count(width: float) -> int:
    return int(round(2.0 * math.pi / width))


def sector_of(phi: float, delta: float, tol: float = 1e-12, width: float = THIRD_PI):
    """Index ``q`` of the sector containing ``phi``, or ``BOUNDARY`` on a wall.

    Sector ``q`` is ``(-delta + q*width, -delta + (q+1)*width)`` modulo ``2 pi``.
    ``width`` is ``pi/3`` for the single-coupling families and ``pi/6`` for the
    two-coupling family.
    """
    s = (phi + delta) / width
    n = _count(width)
    k = math.floor(s)
    frac = s - k
    if min(frac, 1.0 - frac) * width <= tol:
        return BOUNDARY
    return int(k) % n


def _jacobi_direction(momenta: Sequence[float]) -> tuple[float, float]:
    p = np.asarray(momenta, dtype=float)
    scale = float(np.max(np.abs(p))) if p.size else 0.0
    if abs(p.sum()) > 1e-10 * max(scale, 1.0):
        raise ValidationError("momenta not in CM frame (nonzero total momentum)")
    _, P_x, P_y = jacobi_momenta(p)
    if math.hypot(P_x, P_y) == 0.0:
        raise ValidationError("no relative motion")
    return float(P_x), float(P_y)


def incoming_angle(momenta: Sequence[float]) -> float:
    """Asymptotic polar angle as ``t -> -inf`` for free motion with these momenta."""
    P_x, P_y = _jacobi_direction(momenta)
    return polar_angle(-P_x, -P_y)


def outgoing_angle(momenta: Sequence[float]) -> float:
    """Asymptotic polar angle as ``t -> +inf``."""
    P_x, P_y = _jacobi_direction(momenta)
    return polar_angle(P_x, P_y)


def ordering_diagnostic(positions: Sequence[float]) -> bool:
    """Particle-ordering inequalities characterising sector 0 at ``delta = 0``.

    Read as ``x1 > x3``, ``x3 < 0``, ``x2 > x3``, ``|x1 - x2| < x1 - x3`` and
    ``|x1 - x2| < x2 - x3`` for CM-frame positions. Disagreement with
    :func:`sector_of` is logged, never raised.
    """
    x1, x2, x3 = (float(v) for v in positions)
    ok = x1 > x3 and x3 < 0 and x2 > x3 and abs(x1 - x2) < x1 - x3 and abs(x1 - x2) < x2 - x3
    _, x, y = jacobi_vectors([x1, x2, x3])
    in_sector = sector_of(polar_angle(float(x), float(y)), 0.0) == 0
    if ok != in_sector:
        log.info("ordering diagnostic disagrees with sector_of for %s (ordering=%s, sector=%s)",
                 positions, ok, in_sector)
    return ok


