import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from threebody.coords import PolarState, incoming_angle, outgoing_angle
from threebody.errors import NumericalError, ValidationError
from threebody.exact import (OrbitConstants, analytic_radial_momentum, analytic_state, angle_out,
                             canonicalize_delta, orbit_constants, predict_outgoing,
                             sector_transfer_entries, transfer_matrix)
from threebody.potentials import Family, PotentialSpec, angular_potential

PI = math.pi
S3 = math.sqrt(3)


def literal_matrix(delta):
    a = 2 / S3 * math.sin(2 * delta)
    b = 2 / S3 * math.sin(PI / 3 - 2 * delta)
    return np.array([[0, -a, b], [-a, b, 0], [b, 0, -a]])


def zero_sum(rng, n):
    v = rng.normal(size=(n, 3))
    return v - v.mean(axis=1, keepdims=True)


@pytest.mark.parametrize("delta, expected", [
    (0.0, (0.0, False, 0)),
    (PI / 4, (PI / 12, True, 0)),
    (PI / 3 + PI / 12, (PI / 12, False, 1)),
    (PI / 6, (PI / 6, False, 0)),
    (-PI / 12, (PI / 12, True, -1)),
])
def test_canonicalize_delta(delta, expected):
    d, mirrored, q = canonicalize_delta(delta)
    assert d == pytest.approx(expected[0], abs=1e-15)
    assert (mirrored, q) == expected[1:]


def test_transfer_matrix_limits():
    assert np.array_equal(transfer_matrix(0.0).entries, [[0, 0, 1], [0, 1, 0], [1, 0, 0]])
    assert np.array_equal(transfer_matrix(PI / 6).entries, [[0, -1, 0], [-1, 0, 0], [0, 0, -1]])
    tm = transfer_matrix(PI / 12)
    assert tm.a == pytest.approx(1 / S3, rel=1e-15)
    assert tm.b == pytest.approx(1 / S3, rel=1e-15)
    with pytest.raises(ValidationError):
        transfer_matrix(0.6)


def test_momentum_maps_of_limits():
    p = np.array([-1.3, 0.4, 0.9])
    assert np.array_equal(predict_outgoing(p, 0.0), [p[2], p[1], p[0]])
    assert np.array_equal(predict_outgoing(p, PI / 6), [-p[1], -p[0], -p[2]])
    assert np.array_equal(predict_outgoing(p, 0.3, Family.CALOGERO), [p[2], p[1], p[0]])
    assert np.array_equal(predict_outgoing(p, 0.3, Family.WOLFES), [-p[1], -p[0], -p[2]])


def test_predict_outgoing_examples():
    assert predict_outgoing([-1, 0, 1], 0.0) == pytest.approx([1, 0, -1], abs=1e-15)
    out = predict_outgoing([-3, 1, 2], PI / 12)
    assert out == pytest.approx([1 / S3, 4 / S3, -5 / S3], rel=1e-14)
    assert np.sum(out ** 2) / 2 == pytest.approx(7.0, rel=1e-14)
    assert predict_outgoing([-1, -1, 2], 0.37, "B") == pytest.approx([1, 1, -2])
    with pytest.raises(ValidationError, match="not in CM frame"):
        predict_outgoing([1, 0, 0], 0.1)


def test_canonical_path_equals_literal_formula(rng):
    # Mirroring and pi/3 shifts relabel particles; the result must be the
    # literal matrix at the unreduced delta on the zero-sum subspace.
    v = zero_sum(rng, 50)
    for delta in np.linspace(-2 * PI, 2 * PI, 97):
        ours = v @ sector_transfer_entries(delta).T
        lit = v @ literal_matrix(delta).T
        assert np.allclose(ours, lit, atol=1e-13)


def test_mirrored_matrix_is_not_the_reduced_one(rng):
    # The pi/3 - delta rule holds only after swapping particles 1 and 2.
    v = zero_sum(rng, 5)
    d = 5 * PI / 24
    assert not np.allclose(v @ literal_matrix(PI / 3 - d).T, v @ literal_matrix(d).T)


def test_transfer_property_suite(rng):
    n = 10_000
    deltas = rng.uniform(0, PI / 6, 1000)
    mats = np.array([transfer_matrix(d).entries for d in deltas])
    v = zero_sum(rng, n)
    M = mats[np.arange(n) % 1000]
    out = np.einsum("nij,nj->ni", M, v)
    twice = np.einsum("nij,nj->ni", M, out)
    assert np.all(np.abs(out.sum(axis=1)) <= 1e-12 * np.abs(v).max(axis=1))
    assert np.allclose(np.linalg.norm(out, axis=1), np.linalg.norm(v, axis=1), rtol=1e-12)
    assert np.allclose(twice, v, atol=1e-12 * np.abs(v).max())
    rows = mats.sum(axis=2)
    assert np.allclose(rows, (rows[:, :1]), atol=1e-15)
    ab = np.array([[transfer_matrix(d).b - transfer_matrix(d).a] for d in deltas[:20]])
    assert np.allclose(rows[:20, :1], ab, atol=1e-15)


def test_angle_law_matches_matrix(rng):
    for _ in range(300):
        delta = rng.uniform(0, PI / 3)
        phi_in = rng.uniform(-delta + 0.05, PI / 3 - delta - 0.05)
        P = math.sqrt(2)
        Px, Py = -P * math.sin(phi_in), -P * math.cos(phi_in)
        p = np.array([Px / math.sqrt(2) + Py / math.sqrt(6), -Px / math.sqrt(2) + Py / math.sqrt(6),
                      -2 * Py / math.sqrt(6)])
        assert incoming_angle(p) == pytest.approx(phi_in, abs=1e-12)
        out = predict_outgoing(p, delta)
        assert outgoing_angle(out) == pytest.approx(angle_out(phi_in, delta), abs=1e-10)


@pytest.mark.parametrize("phi_in, delta, expected", [
    (PI / 6, 0.0, PI / 6),
    (0.0, PI / 6, 0.0),
    (PI / 6, PI / 12, 0.0),
])
def test_angle_out_examples(phi_in, delta, expected):
    assert angle_out(phi_in, delta) == pytest.approx(expected, abs=1e-15)


def test_angle_out_cross_check_with_matrix():
    out = predict_outgoing([-1, 0, 1], PI / 12)
    assert out == pytest.approx(np.array([1, 1, -2]) / S3, rel=1e-14)
    assert outgoing_angle(out) == pytest.approx(0.0, abs=1e-15)


@settings(max_examples=200)
@given(delta=st.floats(0, PI / 6), frac=st.floats(0.001, 0.999))
def test_angle_out_involution(delta, frac):
    phi = -delta + frac * PI / 3
    once = angle_out(phi, delta)
    assert -delta < once < PI / 3 - delta
    assert angle_out(once, delta) == pytest.approx(phi, abs=1e-14)


def test_angle_out_boundary():
    with pytest.raises(ValidationError):
        angle_out(0.0, 0.0)


SPEC = PotentialSpec(Family.A, g=1.0, delta=0.0)


def test_orbit_constants_examples():
    c = orbit_constants(SPEC, PolarState(2.0, PI / 6, -1.0, 0.5), 0.0)
    assert c.E == pytest.approx(1.65625, rel=1e-15)
    assert c.B2 == pytest.approx(4.625, rel=1e-14)
    assert c.t0 == pytest.approx(2.0 / 3.3125, rel=1e-14)
    assert c.t0 == pytest.approx(0.60377, abs=5e-6)
    assert c.r_min == pytest.approx(math.sqrt(4.625 / 1.65625), rel=1e-14)  # 1.671063
    r, _ = analytic_state(c, SPEC, c.t0)
    assert r == pytest.approx(c.r_min, rel=1e-15)


def test_closest_approach_anchor():
    c = orbit_constants(SPEC, PolarState(1.5, 0.4, 0.0, -0.3), 2.5)
    assert c.t0 == 2.5


def _check_orbit_identities(c, spec, ts):
    """p_r^2/2m + B^2/r^2 = E and p_phi^2/2m + r^2 V = B^2, with p_phi by differencing."""
    m = spec.m
    r, phi = analytic_state(c, spec, ts)
    p_r = analytic_radial_momentum(c, spec, ts)
    assert np.allclose(p_r ** 2 / (2 * m) + c.B2 / r ** 2, c.E, rtol=1e-9)
    h = 1e-6 * np.maximum(1.0, np.abs(ts - c.t0))
    _, fwd = analytic_state(c, spec, ts + h)
    _, bwd = analytic_state(c, spec, ts - h)
    p_phi = m * r ** 2 * (fwd - bwd) / (2 * h)
    B2 = p_phi ** 2 / (2 * m) + angular_potential(spec, phi)
    assert np.allclose(B2, c.B2, rtol=1e-6)


@pytest.mark.parametrize("delta, phi, p_phi", [(0.0, 0.4, 0.7), (0.2, 0.1, -1.1), (PI / 6, -0.3, 0.2),
                                              (0.9, -0.5, 0.3)])
def test_analytic_orbit_satisfies_conservation(delta, phi, p_phi):
    spec = PotentialSpec(Family.A, g=0.8, delta=delta, m=1.3)
    c = orbit_constants(spec, PolarState(2.0, phi, -0.6, p_phi), 0.3)
    ts = c.t0 + np.linspace(-30, 30, 121) * c.tau
    _check_orbit_identities(c, spec, ts)
    r, ph = analytic_state(c, spec, 0.3)
    assert r == pytest.approx(2.0, rel=1e-13)
    assert ph == pytest.approx(phi, abs=1e-12)


def test_analytic_asymptotics():
    spec = PotentialSpec(Family.A, g=1.0, delta=0.1)
    phi0 = 0.35
    c = orbit_constants(spec, PolarState(3.0, phi0, -0.9, 0.4), 0.0)
    T = 1e9
    r_plus, phi_plus = analytic_state(c, spec, T)
    _, phi_minus = analytic_state(c, spec, -T)
    assert r_plus / T == pytest.approx(math.sqrt(2 * c.E), rel=1e-8)
    assert phi_plus == pytest.approx(PI / 3 - 0.2 - phi_minus, abs=1e-8)


def test_orbit_manifold_guard(monkeypatch):
    import threebody.exact as ex
    assert OrbitConstants(E=1.0, B=3.0, t0=0.0, tau=1.0, gamma=0.0, k=0.1).r_min == 3.0
    # B^2 inconsistent with the angle: |cos 3(phi + delta)| exceeds k.
    monkeypatch.setattr(ex, "conserved_quantities", lambda s, p: (1.0, 4.5 / 0.99))
    with pytest.raises(NumericalError, match="off the orbit manifold"):
        orbit_constants(PotentialSpec(Family.A, g=1.0), PolarState(1.0, PI / 6 - 0.5, 0.0, 0.0), 0.0)


def test_orbit_constants_rejects_family_b():
    with pytest.raises(ValidationError):
        orbit_constants(PotentialSpec(Family.B, g=1, f=1), PolarState(1, 0.2, 0, 0), 0.0)
