"""Closed-form scattering results for the interpolating and two-coupling families.

* the 3x3 momentum/offset transfer matrix and its canonical-delta reduction,
* the hyper-radial and angular classical orbit ``r(t)``, ``phi(t)``,
* the asymptotic angle reflection ``phi_out = pi/3 - 2 delta - phi_in``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .coords import THIRD_PI, BOUNDARY, PolarState, sector_of
from .errors import NumericalError, ValidationError
from .potentials import Family, PotentialSpec, conserved_quantities

_TWO_OVER_SQRT3 = 2.0 / math.sqrt(3.0)

# (SWAP12 v) swaps particles 1 and 2; (CYCLE v)_i = v_{i+1}.
SWAP12 = np.array([[0.0, 1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
CYCLE = np.array([[0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [1.0, 0.0, 0.0]])


@dataclass(frozen=True)
class TransferMatrix:
    entries: np.ndarray
    a: float
    b: float
    delta: float

    def __matmul__(self, v):
        return self.entries @ np.asarray(v, dtype=float)


@dataclass(frozen=True)
class OrbitConstants:
    E: float
    B: float
    t0: float
    tau: float
    gamma: float
    k: float
    sector: int = 0

    @property
    def B2(self) -> float:
        return self.B * self.B

    @property
    def r_min(self) -> float:
        return self.B / math.sqrt(self.E)


def canonicalize_delta(delta: float) -> tuple[float, bool, int]:
    """Reduce ``delta`` to ``[0, pi/6]``.

    Returns ``(delta_star, mirrored, q)`` with ``delta = q pi/3 + d`` and
    ``delta_star = d`` or, when ``d > pi/6``, ``pi/3 - d`` (``mirrored``).
    """
    q = math.floor(delta / THIRD_PI)
    d = delta - q * THIRD_PI
    if d >= THIRD_PI:  # rounding at the top edge
        q, d = q + 1, 0.0
    if d > math.pi / 6.0 + 1e-15:
        return THIRD_PI - d, True, q
    return min(d, math.pi / 6.0), False, q


def transfer_coefficients(delta: float) -> tuple[float, float]:
    return (_TWO_OVER_SQRT3 * math.sin(2.0 * delta),
            _TWO_OVER_SQRT3 * math.sin(THIRD_PI - 2.0 * delta))


def transfer_matrix(delta: float) -> TransferMatrix:
    """Momentum map for sector ``(-delta, pi/3 - delta)``, ``delta`` in ``[0, pi/6]``."""
    if not -1e-15 <= delta <= math.pi / 6.0 + 1e-15:
        raise ValidationError("transfer_matrix expects a canonical delta in [0, pi/6]")
    a, b = transfer_coefficients(delta)
    if delta == 0.0:
        a, b = 0.0, 1.0
    elif delta == math.pi / 6.0:
        a, b = 1.0, 0.0
    ent = np.array([[0.0, -a, b], [-a, b, 0.0], [b, 0.0, -a]])
    return TransferMatrix(ent, a, b, delta)


def sector_transfer_entries(delta: float) -> np.ndarray:
    """Transfer matrix for the canonical sector ``(-delta, pi/3 - delta)`` of any ``delta``.

    Built from the canonical representative: a mirrored delta relabels
    particles 1 and 2, and each ``pi/3`` shift relabels cyclically.
    """
    d_star, mirrored, q = canonicalize_delta(delta)
    M = transfer_matrix(d_star).entries
    if mirrored:
        M = SWAP12 @ M @ SWAP12
    Cq = np.linalg.matrix_power(CYCLE, q % 3)
    return Cq @ M @ Cq.T


def _check_zero_sum(v: np.ndarray) -> None:
    scale = max(float(np.max(np.abs(v))), 1.0)
    if abs(v.sum()) > 1e-10 * scale:
        raise ValidationError("not in CM frame: components must sum to zero")


def predict_outgoing(values, delta: float, family: Family | str = Family.A) -> np.ndarray:
    """Outgoing momenta (or asymptotic offsets) for incoming ``values``.

    Family A (and its Calogero/Wolfes limits, with delta 0 and pi/6) maps
    through the transfer matrix; family B reverses every component.
    """
    v = np.asarray(values, dtype=float)
    _check_zero_sum(v)
    family = family if isinstance(family, Family) else Family.parse(family)
    if family is Family.B:
        return -v
    if family is Family.CALOGERO:
        delta = 0.0
    elif family is Family.WOLFES:
        delta = math.pi / 6.0
    return sector_transfer_entries(delta) @ v


def angle_out(phi_in: float, delta: float, tol: float = 1e-12) -> float:
    """Outgoing asymptotic angle for an incoming angle inside ``(-delta, pi/3 - delta)``."""
    lo, hi = -delta, THIRD_PI - delta
    if not (lo + tol < phi_in < hi - tol):
        raise ValidationError("incoming angle must lie strictly inside the canonical sector")
    return THIRD_PI - 2.0 * delta - phi_in


def _theta(spec: PotentialSpec, phi: float) -> float:
    return 3.0 * (phi + spec.angle_shift)


def orbit_constants(spec: PotentialSpec, polar: PolarState, t: float) -> OrbitConstants:
    """Constants of the closed-form orbit through ``polar`` at time ``t``.

    The angular orbit is written ``cos 3(phi + delta) = k sin(gamma - 3 atan((t - t0)/tau))``.
    """
    if spec.family is Family.B:
        raise ValidationError("closed-form orbit is implemented for the single-coupling families")
    if spec.g <= 0 or spec.omega:
        raise ValidationError("closed-form orbit needs g > 0 and omega = 0")
    m = spec.m
    E, B2 = (float(v) for v in conserved_quantities(spec, polar))
    if E <= 0:
        raise ValidationError("closed-form orbit needs E > 0")
    B = math.sqrt(B2)
    k2 = 1.0 - 4.5 * spec.g / B2
    k = math.sqrt(max(k2, 0.0))
    t0 = float(t - polar.r * polar.p_r / (2.0 * E))
    tau = math.sqrt(m / 2.0) * B / E
    theta = _theta(spec, polar.phi)
    sector = math.floor(theta / math.pi)
    sgn = -1.0 if sector % 2 else 1.0
    u = math.cos(theta)
    A = 3.0 * math.atan((t - t0) / tau)
    if k == 0.0:
        return OrbitConstants(E, B, t0, tau, 0.0, 0.0, sector)
    ratio = u / k
    if abs(ratio) > 1.0 + 1e-9:
        raise NumericalError("state off the orbit manifold")
    ratio = max(-1.0, min(1.0, ratio))
    psi = math.asin(ratio)
    # d/dt cos(theta) = -3 sin(theta) dphi/dt must equal -k cos(gamma - A) dA/dt
    # with dA/dt > 0, so cos(gamma - A) has the sign of sin(theta) * p_phi.
    want = sgn * polar.p_phi
    if want < 0:
        psi = math.pi - psi
    gamma = psi + A
    return OrbitConstants(E, B, t0, tau, gamma, k, sector)


def analytic_state(c: OrbitConstants, spec: PotentialSpec, t):
    """``(r(t), phi(t))`` on the closed-form orbit; ``t`` may be an array."""
    t = np.asarray(t, dtype=float)
    m = spec.m
    r = np.sqrt((2.0 * c.E / m) * (t - c.t0) ** 2 + c.B2 / c.E)
    u = c.k * np.sin(c.gamma - 3.0 * np.arctan((t - c.t0) / c.tau))
    sgn = -1.0 if c.sector % 2 else 1.0
    theta = c.sector * math.pi + np.arccos(np.clip(sgn * u, -1.0, 1.0))
    phi = theta / 3.0 - spec.angle_shift
    phi = np.pi - np.mod(np.pi - phi, 2.0 * np.pi)
    if r.ndim == 0:
        return float(r), float(phi)
    return r, phi


def analytic_radial_momentum(c: OrbitConstants, spec: PotentialSpec, t):
    """``p_r = m dr/dt`` along the closed-form hyper-radius."""
    t = np.asarray(t, dtype=float)
    r, _ = analytic_state(c, spec, t)
    return 2.0 * c.E * (t - c.t0) / r


def in_canonical_sector(phi: float, delta: float, width: float = THIRD_PI, tol: float = 1e-12) -> bool:
    q = sector_of(phi, delta, tol=tol, width=width)
    return q != BOUNDARY and q == 0
