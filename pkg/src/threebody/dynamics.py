"""Classical three-body scattering runs.

Hamilton's equations are integrated in Cartesian coordinates, but in the
free-motion ("interaction") picture: the state is ``(q, p)`` with
``x = q + p t / m``.  Far from the collision ``q`` tends to the asymptotic
offsets and stays O(1), so relative error control keeps the offsets
accurate even when the particles are millions of length units apart.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import minimize_scalar

from . import exact
from .coords import (BOUNDARY, ParticleState, PolarState, incoming_angle, jacobi_momenta,
                     jacobi_vectors, momenta_from_jacobi, outgoing_angle, polar_angle,
                     sector_of, wrap_angle)
from .errors import AsymptoticRegimeError, IntegrationError, SingularConfigurationError, ValidationError
from .potentials import Family, FamilyBVariant, PotentialSpec, angular_potential, potential_energy

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class IntegratorControls:
    rel_tol: float = 1e-10
    abs_tol: float = 1e-12
    max_step: float = math.inf
    r_stop_factor: float = 1e-12
    max_time: Optional[float] = None
    sample_stride: int = 1
    method: str = "DOP853"

    def __post_init__(self):
        if self.rel_tol <= 0 or self.abs_tol <= 0:
            raise ValidationError("integrator tolerances must be positive")
        if not 0 < self.r_stop_factor < 1:
            raise ValidationError("r_stop_factor must lie in (0, 1)")
        if self.sample_stride < 1:
            raise ValidationError("sample_stride must be >= 1")


@dataclass
class TrajectoryRecord:
    t: np.ndarray
    positions: np.ndarray
    momenta: np.ndarray
    offsets: np.ndarray
    r: np.ndarray
    phi: np.ndarray
    p_r: np.ndarray
    p_phi: np.ndarray
    E: np.ndarray
    B2: np.ndarray
    E_drift: float
    B2_drift: float
    closest_approach: tuple[float, float]
    sector: int
    dense: Callable[[float], np.ndarray] = field(repr=False)
    n_steps: int = 0
    m: float = 1.0

    def state_at(self, t: float) -> ParticleState:
        y = self.dense(t)
        q, p = y[:3], y[3:]
        return ParticleState(tuple(q + p * t / self.m), tuple(p), t)


@dataclass
class ScatterReport:
    spec: PotentialSpec
    p_in: np.ndarray
    a_in: np.ndarray
    p_out_numeric: np.ndarray
    p_out_predicted: np.ndarray
    a_out_numeric: np.ndarray
    a_out_predicted: np.ndarray
    max_p_error: float
    max_a_error: float
    phi_in: float
    phi_out_numeric: float
    phi_out_predicted: float
    E_drift: float
    B2_drift: float
    p_uncertainty: float = 0.0
    a_uncertainty: float = 0.0

    def to_dict(self) -> dict:
        s = self.spec
        return {
            "family": s.family.value,
            "delta": s.delta,
            "g": s.g,
            "f": s.f,
            "p_in": list(map(float, self.p_in)),
            "a_in": list(map(float, self.a_in)),
            "p_out_numeric": list(map(float, self.p_out_numeric)),
            "p_out_predicted": list(map(float, self.p_out_predicted)),
            "a_out_numeric": list(map(float, self.a_out_numeric)),
            "a_out_predicted": list(map(float, self.a_out_predicted)),
            "max_p_error": float(self.max_p_error),
            "max_a_error": float(self.max_a_error),
            "phi_in": float(self.phi_in),
            "phi_out_numeric": float(self.phi_out_numeric),
            "phi_out_predicted": float(self.phi_out_predicted),
            "e_drift": float(self.E_drift),
            "b2_drift": float(self.B2_drift),
        }


def _wall_width(spec: PotentialSpec) -> float:
    return spec.sector_width


def canonical_sector_bounds(spec: PotentialSpec) -> tuple[float, float]:
    lo = -spec.angle_shift
    return lo, lo + spec.sector_width


def _sector(spec: PotentialSpec, phi: float, tol: float = 1e-12):
    if spec.family is Family.B and spec.familyB_variant is FamilyBVariant.AS_PRINTED:
        # Walls at 3(phi+delta) = k pi and 3(phi-delta) = pi/2 + k pi; not evenly spaced.
        return _as_printed_sector(spec, phi)
    return sector_of(phi, spec.angle_shift, tol=tol, width=spec.sector_width)


def _as_printed_sector(spec: PotentialSpec, phi: float) -> int:
    walls = np.sort(np.mod(np.concatenate([
        -spec.delta + np.arange(6) * math.pi / 3,
        spec.delta + math.pi / 6 + np.arange(6) * math.pi / 3]), 2 * math.pi))
    return int(np.searchsorted(walls, phi % (2 * math.pi)))


def default_r0(spec: PotentialSpec, energy: float) -> float:
    """Starting hyper-radius: ``1e7`` interaction lengths ``sqrt(g/E)``."""
    g = max(spec.g, spec.f if spec.family is Family.B else 0.0)
    return 1e7 * math.sqrt(g / energy)


def _zero_sum(a, name: str) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.shape != (3,):
        raise ValidationError(f"{name} needs three components")
    if abs(a.sum()) > 1e-10 * max(1.0, float(np.max(np.abs(a)))):
        raise ValidationError(f"{name} must sum to zero")
    return a


def incoming_momenta(spec: PotentialSpec, phi_in: Optional[float] = None,
                     energy: Optional[float] = None, p_in=None) -> np.ndarray:
    """Asymptotic incoming momenta from ``(phi_in, energy)`` or explicit ``p_in``."""
    if p_in is not None:
        return _zero_sum(p_in, "incoming momenta")
    if phi_in is None or energy is None:
        raise ValidationError("need phi_in and energy, or p_in")
    if energy <= 0:
        raise ValidationError("energy must be positive")
    P = math.sqrt(2.0 * spec.m * energy)
    return np.asarray(momenta_from_jacobi(0.0, -P * math.sin(phi_in), -P * math.cos(phi_in)))


def incoming_history(spec: PotentialSpec, p: np.ndarray, a: np.ndarray, t: float):
    """First-order change of ``(q, p)`` accumulated on the free line before time ``t``.

    Along ``x = p s / m + a`` each term ``c / (w.x)^2`` has ``w.x = alpha s + beta`` and
    its force ``2 c w / (w.x)^3`` integrates in closed form.  Neglecting this leaves
    an offset error of order ``1/r0``; with it the error is second order.
    """
    m = spec.m
    dq = np.zeros(3)
    dp = np.zeros(3)
    for c, w in spec.terms:
        alpha = float(w @ p) / m
        beta = float(w @ a)
        u = alpha * t + beta
        i0 = -1.0 / (2.0 * alpha * u * u)
        i1 = (-1.0 / u + beta / (2.0 * u * u)) / (alpha * alpha)
        dp += 2.0 * c * w * i0
        dq -= 2.0 * c * w * i1 / m
    return dq, dp


def prepare_scattering_state(spec: PotentialSpec, phi_in: Optional[float] = None,
                             energy: Optional[float] = None, impact_offsets=(0.0, 0.0, 0.0),
                             r0: Optional[float] = None, p_in=None) -> ParticleState:
    """State at hyper-radius ``~r0`` on the orbit with incoming asymptote ``x_i = p_i t / m + a_i``.

    Either ``(phi_in, energy)`` or explicit CM-frame momenta ``p_in`` select the
    incoming direction.  The start time is ``t_start = -r0 m / sqrt(2 m E)``; the
    state includes the first-order effect of the potential on ``(-inf, t_start)``.
    """
    spec.validate_classical()
    m = spec.m
    a = _zero_sum(impact_offsets, "impact offsets")
    p = incoming_momenta(spec, phi_in, energy, p_in)
    phi_in = incoming_angle(p)
    energy = float(np.sum(p ** 2) / (2.0 * m))
    if _sector(spec, phi_in) != _sector(spec, canonical_sector_bounds(spec)[0] + 0.5 * spec.sector_width) \
            or _sector(spec, phi_in) == BOUNDARY:
        raise ValidationError("incoming angle must lie strictly inside the canonical sector")
    if r0 is None:
        r0 = default_r0(spec, energy)
    if angular_potential(spec, phi_in) / r0 ** 2 >= 1e-10 * energy:
        raise ValidationError("r0 too small: incoming state is not asymptotically free")
    t_start = -r0 * m / math.sqrt(2.0 * m * energy)
    x = p * t_start / m + a
    _, jx, jy = jacobi_vectors(x)
    if _sector(spec, polar_angle(float(jx), float(jy))) != _sector(spec, phi_in):
        raise ValidationError("offsets push the starting configuration out of the sector")
    dq, dp = incoming_history(spec, p, a, t_start)
    p_start = p + dp
    x = a + dq + p_start * t_start / m
    return ParticleState(tuple(x), tuple(p_start), t_start)


class _Rhs:
    """Right-hand side in the interaction picture, with a scalar fast path."""

    def __init__(self, spec: PotentialSpec):
        self.m = spec.m
        self.terms = [(float(c), float(w[0]), float(w[1]), float(w[2])) for c, w in spec.terms]
        self.omega2 = spec.omega ** 2
        self.tol = spec.singular_tol
        self.nfev = 0

    def forces(self, x1: float, x2: float, x3: float) -> tuple[float, float, float]:
        f1 = f2 = f3 = 0.0
        scale = max(abs(x1 - x2), abs(x2 - x3), abs(x3 - x1))
        for c, w1, w2, w3 in self.terms:
            u = w1 * x1 + w2 * x2 + w3 * x3
            if abs(u) <= self.tol * scale or u == 0.0:
                raise SingularConfigurationError("singular configuration")
            k = 2.0 * c / (u * u * u)
            f1 += k * w1
            f2 += k * w2
            f3 += k * w3
        if self.omega2:
            s = x1 + x2 + x3
            f1 -= 2.0 * self.omega2 * (3.0 * x1 - s)
            f2 -= 2.0 * self.omega2 * (3.0 * x2 - s)
            f3 -= 2.0 * self.omega2 * (3.0 * x3 - s)
        return f1, f2, f3

    def __call__(self, t, y):
        self.nfev += 1
        s = t / self.m
        f1, f2, f3 = self.forces(y[0] + y[3] * s, y[1] + y[4] * s, y[2] + y[5] * s)
        return np.array([-f1 * s, -f2 * s, -f3 * s, f1, f2, f3])


def _polar_arrays(x: np.ndarray, p: np.ndarray):
    _, jx, jy = jacobi_vectors(x)
    _, Px, Py = jacobi_momenta(p)
    r = np.hypot(jx, jy)
    phi = np.arctan2(jx, jy)
    p_r = (jx * Px + jy * Py) / r
    p_phi = jy * Px - jx * Py
    return r, phi, p_r, p_phi


def integrate(spec: PotentialSpec, state: ParticleState,
              controls: IntegratorControls = IntegratorControls()) -> TrajectoryRecord:
    """Integrate from ``state`` until the particles separate into free motion.

    Stops on the way out once the potential energy drops below
    ``r_stop_factor * E`` with the hyper-radius beyond its starting value.
    """
    spec.validate_classical()
    m = spec.m
    t_start = state.time
    x0 = np.asarray(state.positions, dtype=float)
    p0 = np.asarray(state.momenta, dtype=float)
    if abs(p0.sum()) > 1e-10 * max(1.0, float(np.max(np.abs(p0)))) or \
            abs(x0.sum()) > 1e-10 * max(1.0, float(np.max(np.abs(x0)))):
        raise ValidationError("initial state must be in the CM frame")
    V0 = potential_energy(spec, x0)
    E0 = float(np.sum(p0 ** 2) / (2.0 * m) + V0)
    r_init = float(np.hypot(*jacobi_vectors(x0)[1:]))
    speed = math.sqrt(2.0 * E0 / m)
    max_time = controls.max_time
    if max_time is None:
        max_time = 1e3 * max(r_init, 1.0) / speed
    rhs = _Rhs(spec)
    threshold = controls.r_stop_factor * E0

    def leave(t, y):
        s = t / m
        x = y[:3] + y[3:] * s
        try:
            v = potential_energy(spec, x)
        except SingularConfigurationError:
            return 1.0
        r = math.hypot(*(float(c) for c in jacobi_vectors(x)[1:]))
        # Negative only after closest approach, beyond r_init, with V small.
        if t <= 0 or r <= r_init:
            return 1.0
        return v - threshold

    leave.terminal = True
    leave.direction = -1

    y0 = np.concatenate([x0 - p0 * t_start / m, p0])
    try:
        sol = solve_ivp(rhs, (t_start, t_start + max_time), y0, method=controls.method,
                        rtol=controls.rel_tol, atol=controls.abs_tol, max_step=controls.max_step,
                        events=leave, dense_output=True)
    except SingularConfigurationError as exc:
        raise IntegrationError(f"integration failure: {exc}") from exc
    if sol.status == -1:
        raise IntegrationError(f"integration failure: {sol.message}")
    if sol.status == 0:
        raise AsymptoticRegimeError("did not reach asymptotic regime before max_time")

    t = sol.t
    q = sol.y[:3].T
    p = sol.y[3:].T
    x = q + p * (t[:, None] / m)
    r, phi, p_r, p_phi = _polar_arrays(x, p)
    V = potential_energy(spec, x)
    E = np.sum(p ** 2, axis=1) / (2.0 * m) + V
    B2 = p_phi ** 2 / (2.0 * m) + angular_potential(spec, phi)
    E_drift = float(np.max(np.abs(E - E[0])) / abs(E[0]))
    B2_drift = float(np.max(np.abs(B2 - B2[0])) / abs(B2[0]))

    sector0 = _sector(spec, float(phi[0]))
    sectors = {_sector(spec, float(v)) for v in phi}
    if sectors != {sector0}:
        raise IntegrationError("trajectory left its starting sector")

    i = int(np.argmin(r))
    lo, hi = t[max(i - 1, 0)], t[min(i + 1, len(t) - 1)]

    def radius(tt):
        y = sol.sol(tt)
        xx = y[:3] + y[3:] * (tt / m)
        return math.hypot(*(float(c) for c in jacobi_vectors(xx)[1:]))

    if hi > lo:
        res = minimize_scalar(radius, bounds=(lo, hi), method="bounded",
                              options={"xatol": 1e-12 * max(1.0, abs(hi - lo))})
        closest = (float(res.x), float(res.fun))
    else:
        closest = (float(t[i]), float(r[i]))

    keep = np.arange(0, len(t), controls.sample_stride)
    if keep[-1] != len(t) - 1:
        keep = np.append(keep, len(t) - 1)
    return TrajectoryRecord(
        t=t[keep], positions=x[keep], momenta=p[keep], offsets=q[keep], r=r[keep], phi=phi[keep],
        p_r=p_r[keep], p_phi=p_phi[keep], E=E[keep], B2=B2[keep], E_drift=E_drift,
        B2_drift=B2_drift, closest_approach=closest, sector=sector0, dense=sol.sol,
        n_steps=len(t) - 1, m=m)


def _neville_at_zero(s: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Polynomial extrapolation of ``v(s)`` to ``s = 0`` (rows of ``v`` per node)."""
    P = [np.array(row, dtype=float) for row in v]
    n = len(s)
    for k in range(1, n):
        for i in range(n - k):
            P[i] = (s[i + k] * P[i] - s[i] * P[i + 1]) / (s[i + k] - s[i])
    return P[0]


def extract_asymptotics(traj: TrajectoryRecord, spec: PotentialSpec, n_nodes: int = 4):
    """Outgoing momenta and offsets, Richardson-extrapolated in ``1/t``.

    Nodes are ``t_f / 2^j`` for ``j < n_nodes`` (inside the last decade).
    Returns ``(p_out, a_out, p_uncertainty, a_uncertainty)``.
    """
    t_f = float(traj.t[-1])
    if t_f <= 0 or n_nodes < 2 or t_f / 2 ** (n_nodes - 1) < 0.1 * t_f - 1e-12:
        raise AsymptoticRegimeError("insufficient asymptotic samples")
    m = spec.m
    nodes = t_f / 2.0 ** np.arange(n_nodes)
    if nodes[-1] <= max(0.0, traj.closest_approach[0]):
        raise AsymptoticRegimeError("insufficient asymptotic samples")
    ys = np.array([traj.dense(tt) for tt in nodes])
    s = 1.0 / nodes
    p_vals = ys[:, 3:]
    # Extrapolate differences from the last node: exact for free motion.
    dp = p_vals - p_vals[0]
    p_out = p_vals[0] + _neville_at_zero(s, dp)
    p_lower = p_vals[0] + _neville_at_zero(s[:-1], dp[:-1])
    # a(t) = x(t) - p_out t/m = q(t) + (p(t) - p_out) t/m
    a_vals = ys[:, :3] + (p_vals - p_out) * (nodes[:, None] / m)
    a_out = _neville_at_zero(s, a_vals)
    a_lower = _neville_at_zero(s[:-1], a_vals[:-1])
    return (p_out, a_out, float(np.max(np.abs(p_out - p_lower))),
            float(np.max(np.abs(a_out - a_lower))))


def predicted_outgoing_angle(spec: PotentialSpec, phi_in: float) -> float:
    if spec.family is Family.B:
        return phi_in
    return exact.angle_out(phi_in, spec.angle_shift)


def scatter_experiment(spec: PotentialSpec, phi_in: Optional[float] = None,
                       energy: Optional[float] = None, a_in=(0.0, 0.0, 0.0),
                       controls: IntegratorControls = IntegratorControls(),
                       r0: Optional[float] = None, p_in=None) -> ScatterReport:
    state = prepare_scattering_state(spec, phi_in, energy, a_in, r0=r0, p_in=p_in)
    p_in = incoming_momenta(spec, phi_in, energy, p_in)
    a_in = np.asarray(a_in, dtype=float)
    traj = integrate(spec, state, controls)
    p_out, a_out, dp, da = extract_asymptotics(traj, spec)
    delta = spec.angle_shift if spec.family is not Family.B else spec.delta
    p_pred = exact.predict_outgoing(p_in, delta, Family.B if spec.family is Family.B else Family.A)
    a_pred = exact.predict_outgoing(a_in, delta, Family.B if spec.family is Family.B else Family.A)
    p_scale = float(np.max(np.abs(p_in)))
    a_scale = max(float(np.max(np.abs(a_in))), 1.0)
    phi0 = incoming_angle(p_in)
    return ScatterReport(
        spec=spec, p_in=p_in, a_in=a_in, p_out_numeric=p_out, p_out_predicted=p_pred,
        a_out_numeric=a_out, a_out_predicted=a_pred,
        max_p_error=float(np.max(np.abs(p_out - p_pred)) / p_scale),
        max_a_error=float(np.max(np.abs(a_out - a_pred)) / a_scale),
        phi_in=phi0, phi_out_numeric=outgoing_angle(p_out - p_out.mean()),
        phi_out_predicted=wrap_angle(predicted_outgoing_angle(spec, phi0)),
        E_drift=traj.E_drift, B2_drift=traj.B2_drift, p_uncertainty=dp / p_scale,
        a_uncertainty=da / a_scale)


def random_initial_condition(spec: PotentialSpec, rng: np.random.Generator, margin: float = 0.1,
                             energy_range=(0.5, 2.0), offset_scale: float = 0.5):
    """Random ``(phi_in, energy, a_in)`` strictly inside the canonical sector."""
    lo, hi = canonical_sector_bounds(spec)
    w = hi - lo
    phi_in = float(rng.uniform(lo + margin * w, hi - margin * w))
    energy = float(rng.uniform(*energy_range))
    a = rng.normal(scale=offset_scale, size=3)
    a -= a.mean()
    return phi_in, energy, a


def time_reversed(state: ParticleState) -> ParticleState:
    return ParticleState(state.positions, tuple(-np.asarray(state.momenta)), -state.time)


__all__ = [
    "IntegratorControls", "TrajectoryRecord", "ScatterReport", "prepare_scattering_state",
    "incoming_momenta", "incoming_history",
    "integrate", "extract_asymptotics", "scatter_experiment", "random_initial_condition",
    "default_r0", "canonical_sector_bounds", "time_reversed",
]
