"""Inverse-square three-body potential families, forces and conserved quantities.

Every singular term has the form ``c / (w . x)^2`` with ``w`` a fixed 3-vector,
so energies and forces for all families share one code path.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .coords import SQRT3, PolarState, cartesian_from_polar
from .errors import SingularConfigurationError, ValidationError


class Family(str, enum.Enum):
    CALOGERO = "calogero"
    WOLFES = "wolfes"
    A = "A"
    B = "B"

    @classmethod
    def parse(cls, name: str) -> "Family":
        key = name.strip()
        for fam in cls:
            if key.lower() == fam.value.lower() or key.upper() == fam.name:
                return fam
        raise ValidationError(f"unknown potential family {name!r}")


class FamilyBVariant(str, enum.Enum):
    POLAR_CONSISTENT = "polar_consistent"
    AS_PRINTED = "as_printed"


# Cyclic permutations of (x1, x2, x3): (1,2,3), (2,3,1), (3,1,2).
_CYCLES = ((0, 1, 2), (1, 2, 0), (2, 0, 1))


def _cyclic(w) -> list[np.ndarray]:
    """Weight vectors of ``w . (x_i, x_j, x_k)`` for the three cyclic relabelings."""
    out = []
    for i, j, k in _CYCLES:
        v = np.zeros(3)
        v[i], v[j], v[k] = w
        out.append(v)
    return out


@dataclass(frozen=True)
class PotentialSpec:
    family: Family = Family.A
    g: float = 1.0
    f: float = 0.0
    delta: float = 0.0
    omega: float = 0.0
    m: float = 1.0
    hbar: float = 1.0
    familyB_variant: FamilyBVariant = FamilyBVariant.POLAR_CONSISTENT
    singular_tol: float = field(default=1e-12, compare=False)

    def __post_init__(self):
        if not isinstance(self.family, Family):
            object.__setattr__(self, "family", Family.parse(str(self.family)))
        object.__setattr__(self, "familyB_variant", FamilyBVariant(self.familyB_variant))
        if self.m <= 0 or self.hbar <= 0:
            raise ValidationError("mass and hbar must be positive")
        if self.omega < 0:
            raise ValidationError("omega must be non-negative")
        # g = 0 is allowed for family A only (bare walls / pure harmonic checks);
        # scattering runs reject it in validate_classical.
        if self.g == 0 and self.family is not Family.A:
            raise ValidationError(f"family {self.family.value} requires g != 0")
        if self.family is Family.B and self.f == 0:
            raise ValidationError("family B requires f != 0")
        if self.family is not Family.B and self.f != 0:
            raise ValidationError("coupling f is only meaningful for family B")

    def validate_classical(self) -> None:
        """Scattering runs need repulsive walls and no confinement."""
        if self.g <= 0 or (self.family is Family.B and self.f <= 0):
            raise ValidationError("classical scattering requires g > 0 (and f > 0 for family B)")
        if self.omega != 0:
            raise ValidationError("scattering runs require omega = 0")

    def validate_quantum(self) -> None:
        bound = -self.hbar ** 2 / (4.0 * self.m)
        if not self.g > bound or (self.family is Family.B and not self.f > bound):
            raise ValidationError(f"quantum couplings must exceed -hbar^2/4m = {bound}")

    @property
    def sector_width(self) -> float:
        return math.pi / 6.0 if self.family is Family.B else math.pi / 3.0

    @property
    def angle_shift(self) -> float:
        """Effective ``delta`` of the polar form (0 for Calogero, pi/6 for Wolfes)."""
        if self.family is Family.CALOGERO:
            return 0.0
        if self.family is Family.WOLFES:
            return math.pi / 6.0
        return self.delta

    @cached_property
    def terms(self) -> tuple[tuple[float, np.ndarray], ...]:
        """``(coefficient, weight-vector)`` pairs; ``V = sum c / (w . x)^2``."""
        fam = self.family
        if fam is Family.CALOGERO:
            return tuple((self.g, w) for w in _cyclic((1.0, -1.0, 0.0)))
        if fam is Family.WOLFES:
            return tuple((3.0 * self.g, w) for w in _cyclic((1.0, 1.0, -2.0)))
        c, s = math.cos(self.delta), math.sin(self.delta)
        w_g = (c + s / SQRT3, -c + s / SQRT3, -2.0 * s / SQRT3)
        out = [(self.g, w) for w in _cyclic(w_g)]
        if fam is Family.B:
            if self.familyB_variant is FamilyBVariant.POLAR_CONSISTENT:
                # (x1 + x2 - 2 x3) cos(delta) / sqrt3 - (x1 - x2) sin(delta)
                w_f = (c / SQRT3 - s, c / SQRT3 + s, -2.0 * c / SQRT3)
            else:
                # (x1 - x2) sin(delta) + (x1 + x2 - 2 x3) cos(delta) / sqrt3
                w_f = (s + c / SQRT3, -s + c / SQRT3, -2.0 * c / SQRT3)
            out += [(self.f, w) for w in _cyclic(w_f)]
        return tuple(out)

    @cached_property
    def _coef_weights(self) -> tuple[np.ndarray, np.ndarray]:
        return (np.array([c for c, _ in self.terms]),
                np.array([w for _, w in self.terms]))


def _scale(x: np.ndarray) -> np.ndarray:
    return np.max(np.abs(x - x.mean(axis=-1, keepdims=True)), axis=-1)


def _denominators(spec: PotentialSpec, x: np.ndarray) -> np.ndarray:
    _, W = spec._coef_weights
    u = x @ W.T
    tol = spec.singular_tol * _scale(x)
    if np.any(np.abs(u) <= np.maximum(tol, 1e-300)[..., None]):
        raise SingularConfigurationError("singular configuration")
    return u


def potential_energy(spec: PotentialSpec, positions) -> float | np.ndarray:
    """Total potential energy; ``positions`` may carry leading batch axes."""
    x = np.asarray(positions, dtype=float)
    C, _ = spec._coef_weights
    u = _denominators(spec, x)
    v = np.sum(C / u ** 2, axis=-1)
    if spec.omega:
        v = v + spec.omega ** 2 * _pair_sq(x)
    return float(v) if np.ndim(v) == 0 else v


def _pair_sq(x: np.ndarray) -> np.ndarray:
    x1, x2, x3 = x[..., 0], x[..., 1], x[..., 2]
    return (x1 - x2) ** 2 + (x2 - x3) ** 2 + (x3 - x1) ** 2


def forces(spec: PotentialSpec, positions) -> np.ndarray:
    """``F_k = -dV/dx_k`` from the closed-form derivative of each ``c/u^2`` term."""
    x = np.asarray(positions, dtype=float)
    C, W = spec._coef_weights
    u = _denominators(spec, x)
    F = (2.0 * C / u ** 3) @ W
    if spec.omega:
        F = F - 2.0 * spec.omega ** 2 * (3.0 * x - x.sum(axis=-1, keepdims=True))
    return F


def angular_potential(spec: PotentialSpec, phi) -> np.ndarray | float:
    """``r^2 V`` for the inverse-square part, as a function of the polar angle."""
    theta = 3.0 * (np.asarray(phi, dtype=float) + spec.angle_shift)
    if spec.family is Family.B and spec.familyB_variant is FamilyBVariant.AS_PRINTED:
        theta_f = 3.0 * (np.asarray(phi, dtype=float) - spec.delta)
    else:
        theta_f = theta
    g = spec.g
    val = 4.5 * g / np.sin(theta) ** 2
    if spec.family is Family.B:
        val = val + 4.5 * spec.f / np.cos(theta_f) ** 2
    return float(val) if np.ndim(val) == 0 else val


def potential_polar(spec: PotentialSpec, r, phi):
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0):
        raise ValidationError("potential_polar needs r > 0")
    theta = 3.0 * (np.asarray(phi, dtype=float) + spec.angle_shift)
    walls = np.abs(np.sin(theta))
    if spec.family is Family.B:
        walls = np.minimum(walls, np.abs(np.cos(theta)))
    if np.any(walls <= spec.singular_tol):
        raise SingularConfigurationError("singular configuration")
    v = angular_potential(spec, phi) / r ** 2
    if spec.omega:
        v = v + 3.0 * spec.omega ** 2 * r ** 2
    return float(v) if np.ndim(v) == 0 else v


def conserved_quantities(spec: PotentialSpec, polar: PolarState) -> tuple[float, float]:
    """Energy ``E`` and angular constant ``B^2`` at a phase-space point.

    ``B^2 = p_phi^2/2m + r^2 V`` which, for the scale-free families, equals
    ``p_phi^2/2m + 9g/(2 sin^2 3(phi+delta))`` (plus the ``f`` wall for family B).
    """
    if spec.omega:
        raise ValidationError("conserved_quantities assumes omega = 0")
    m = spec.m
    theta = 3.0 * (polar.phi + spec.angle_shift)
    if abs(math.sin(theta)) <= spec.singular_tol or (
            spec.family is Family.B and abs(math.cos(theta)) <= spec.singular_tol):
        raise SingularConfigurationError("singular configuration")
    B2 = polar.p_phi ** 2 / (2.0 * m) + angular_potential(spec, polar.phi)
    E = polar.p_r ** 2 / (2.0 * m) + B2 / polar.r ** 2
    return E, B2


def harmonic_only_energy(omega: float, positions) -> float | np.ndarray:
    """``omega^2 * sum_{i<j} (x_i - x_j)^2`` on its own."""
    v = omega ** 2 * _pair_sq(np.asarray(positions, dtype=float))
    return float(v) if np.ndim(v) == 0 else v


__all__ = [
    "Family", "FamilyBVariant", "PotentialSpec", "potential_energy", "potential_polar",
    "forces", "angular_potential", "conserved_quantities", "harmonic_only_energy",
    "cartesian_from_polar",
]
