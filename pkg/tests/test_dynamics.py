import math

import numpy as np
import pytest
from scipy.integrate import quad

from threebody.coords import sector_of
from threebody.dynamics import (IntegratorControls, canonical_sector_bounds, default_r0,
                                extract_asymptotics, incoming_history, incoming_momenta,
                                integrate, prepare_scattering_state, random_initial_condition,
                                scatter_experiment, time_reversed)
from threebody.errors import AsymptoticRegimeError, ValidationError
from threebody.exact import predict_outgoing
from threebody.potentials import Family, PotentialSpec, forces, potential_energy

PI = math.pi
CAL = PotentialSpec(Family.A, g=1.0, delta=0.0)


@pytest.fixture(scope="module")
def reference_run():
    state = prepare_scattering_state(CAL, PI / 6, 1.0, (0.0, 0.0, 0.0))
    return state, integrate(CAL, state)


def test_prepare_examples():
    assert incoming_momenta(CAL, PI / 6, 1.0) == pytest.approx((-1.0, 0.0, 1.0), abs=1e-15)
    # the start state differs from the asymptote by the O(1/r0^2) pre-start impulse
    s = prepare_scattering_state(CAL, PI / 6, 1.0)
    assert s.momenta == pytest.approx((-1.0, 0.0, 1.0), abs=1e-12)
    # phi_in = 0 is a wall at delta = 0, so use a sector that contains it
    spec = PotentialSpec(Family.A, g=1.0, delta=0.2)
    assert incoming_momenta(spec, 0.0, 3.0) == pytest.approx((-1.0, -1.0, 2.0), abs=1e-14)
    s = prepare_scattering_state(spec, 0.0, 3.0)
    assert s.momenta == pytest.approx((-1.0, -1.0, 2.0), abs=1e-12)
    E = sum(np.square(s.momenta)) / 2 + potential_energy(spec, s.positions)
    assert E == pytest.approx(3.0, rel=1e-14)


@pytest.mark.parametrize("family, delta", [(Family.A, 0.0), (Family.A, 0.3), (Family.B, 0.1)])
def test_incoming_history_against_quadrature(family, delta):
    spec = PotentialSpec(family, g=1.3, f=0.7 if family is Family.B else 0.0, delta=delta, m=1.7)
    p = incoming_momenta(spec, 0.2 + delta if family is Family.A else 0.15 - delta, 0.9)
    a = np.array([0.3, -0.5, 0.2])
    t = -40.0
    dq, dp = incoming_history(spec, p, a, t)
    line = lambda s: p * s / spec.m + a
    for i in range(3):
        fp = quad(lambda u: forces(spec, line(t - u))[i], 0, np.inf, epsabs=0, epsrel=1e-12)[0]
        fq = quad(lambda u: (t - u) * forces(spec, line(t - u))[i], 0, np.inf, epsabs=0,
                  epsrel=1e-12)[0]
        assert dp[i] == pytest.approx(fp, rel=1e-9, abs=1e-15)
        assert dq[i] == pytest.approx(-fq / spec.m, rel=1e-9, abs=1e-15)


def test_offsets_do_not_depend_on_start_radius():
    spec = PotentialSpec(Family.B, g=1.0, f=1.0, delta=0.0)
    a = (-0.37, 0.78, -0.41)
    r0 = default_r0(spec, 0.6)
    runs = [scatter_experiment(spec, 0.07, 0.6, a, r0=r0 * s) for s in (1, 3)]
    assert runs[0].max_a_error < 1e-7 and runs[1].max_a_error < 1e-7


def test_prepare_invariants(rng):
    for delta in (0.0, 0.2, PI / 6, 5 * PI / 24):
        spec = PotentialSpec(Family.A, g=1.0, delta=delta)
        for _ in range(10):
            phi, E, a = random_initial_condition(spec, rng)
            s = prepare_scattering_state(spec, phi, E, a)
            assert abs(sum(s.positions)) < 1e-8
            assert abs(sum(s.momenta)) < 1e-14
            x = np.asarray(s.positions)
            jx, jy = (x[0] - x[1]) / math.sqrt(2), (x[0] + x[1] - 2 * x[2]) / math.sqrt(6)
            assert sector_of(math.atan2(jx, jy), delta) == 0


def test_prepare_errors():
    with pytest.raises(ValidationError):
        prepare_scattering_state(CAL, 0.0, 1.0)
    with pytest.raises(ValidationError, match="r0 too small"):
        prepare_scattering_state(CAL, PI / 6, 1.0, r0=100.0)
    with pytest.raises(ValidationError):
        prepare_scattering_state(CAL, PI / 6, 1.0, (0.1, 0.0, 0.0))
    with pytest.raises(ValidationError):
        prepare_scattering_state(PotentialSpec(Family.A, g=1.0, omega=1.0), PI / 6, 1.0)
    with pytest.raises(ValidationError):
        PotentialSpec(Family.A, g=0.0).validate_classical()


def test_reference_run_conservation(reference_run):
    _, tr = reference_run
    assert tr.E_drift <= 1e-8
    assert tr.B2_drift <= 1e-8
    r_min_exact = math.sqrt(tr.B2[0] / tr.E[0])
    assert tr.closest_approach[1] == pytest.approx(r_min_exact, rel=1e-6)
    assert np.all(np.diff(tr.t) > 0)
    assert np.all((tr.phi > 0) & (tr.phi < PI / 3))
    assert np.max(np.abs(tr.momenta.sum(axis=1))) < 1e-12


def test_reference_run_asymptotics(reference_run):
    _, tr = reference_run
    p_out, a_out, dp, da = extract_asymptotics(tr, CAL)
    assert p_out == pytest.approx([1.0, 0.0, -1.0], abs=1e-6)
    assert dp < 1e-6


def test_offsets_follow_the_matrix():
    rep = scatter_experiment(CAL, PI / 6, 1.0, (0.3, -0.3, 0.0))
    assert rep.a_out_numeric == pytest.approx([0.0, -0.3, 0.3], abs=1e-5)
    assert rep.a_out_predicted == pytest.approx([0.0, -0.3, 0.3], abs=1e-15)


def test_free_motion_extraction():
    # Interaction-free harness: the dense solution is exact straight-line motion.
    from threebody.dynamics import TrajectoryRecord
    a = np.array([0.2, -0.5, 0.3])
    p = np.array([-0.7, 0.1, 0.6])
    t = np.linspace(-1e6, 1e6, 11)
    zeros = np.zeros_like(t)
    tr = TrajectoryRecord(
        t=t, positions=a + p * t[:, None], momenta=np.tile(p, (11, 1)), offsets=np.tile(a, (11, 1)),
        r=zeros, phi=zeros, p_r=zeros, p_phi=zeros, E=zeros, B2=zeros, E_drift=0.0, B2_drift=0.0,
        closest_approach=(0.0, 0.0), sector=0, dense=lambda tt: np.concatenate([a, p]))
    p_out, a_out, dp, da = extract_asymptotics(tr, CAL)
    # exact up to rounding in the extrapolation weights
    assert p_out == pytest.approx(p, abs=1e-15)
    assert a_out == pytest.approx(a, abs=1e-15)
    assert dp <= 1e-15


def test_family_b_confinement():
    spec = PotentialSpec(Family.B, g=1.0, f=1.0, delta=PI / 12)
    state = prepare_scattering_state(spec, p_in=(-1, -1, 2))
    tr = integrate(spec, state)
    assert np.all((tr.phi > -PI / 12) & (tr.phi < PI / 12))
    assert tr.B2_drift <= 1e-8


@pytest.mark.parametrize("spec, p_in, expected", [
    (PotentialSpec(Family.A, g=1.0, delta=PI / 12), (-1, 0, 1), np.array([1, 1, -2]) / math.sqrt(3)),
    (PotentialSpec(Family.B, g=1.0, f=1.0, delta=PI / 12), (-1, -1, 2), np.array([1, 1, -2])),
    (PotentialSpec(Family.CALOGERO, g=0.5), (-1, 0, 1), np.array([1, 0, -1])),
    (PotentialSpec(Family.WOLFES, g=2.0), (-1, -1, 2), np.array([1, 1, -2])),
])
def test_scatter_examples(spec, p_in, expected):
    a_in = (0.2, -0.1, -0.1)
    rep = scatter_experiment(spec, a_in=a_in, p_in=p_in)
    assert rep.p_out_numeric == pytest.approx(expected, abs=1e-6)
    assert rep.max_p_error <= 1e-6
    assert rep.max_a_error <= 1e-5
    assert rep.phi_out_numeric == pytest.approx(rep.phi_out_predicted, abs=1e-5)
    if spec.family is Family.B:
        assert rep.a_out_numeric == pytest.approx(-np.asarray(a_in), abs=1e-5)
        assert rep.phi_out_numeric == pytest.approx(rep.phi_in, abs=1e-5)


def test_time_reversal():
    spec = PotentialSpec(Family.A, g=1.0, delta=0.3)
    state = prepare_scattering_state(spec, 0.1, 1.4, (0.3, -0.1, -0.2))
    tr = integrate(spec, state)
    final = tr.state_at(float(tr.t[-1]))
    back = integrate(spec, time_reversed(final))
    p_back, _, _, _ = extract_asymptotics(back, spec)
    assert p_back == pytest.approx(-np.asarray(state.momenta), abs=1e-5)


@pytest.mark.parametrize("delta", [0.0, PI / 24, PI / 12, PI / 8, PI / 6])
def test_angle_law_grid(rng, delta):
    spec = PotentialSpec(Family.A, g=1.0, delta=delta)
    for _ in range(5):
        phi, E, a = random_initial_condition(spec, rng)
        rep = scatter_experiment(spec, phi, E, a)
        assert abs(rep.phi_out_numeric - (PI / 3 - 2 * delta - rep.phi_in)) <= 1e-5
        assert rep.E_drift <= 1e-8 and rep.B2_drift <= 1e-8


def test_delta_sweep_continuity():
    p_in = np.array([-1.0, 0.0, 1.0])
    deltas = np.linspace(0.0, PI / 6, 13)[1:-1]
    outs = []
    for d in deltas:
        spec = PotentialSpec(Family.A, g=1.0, delta=d)
        # keep the incoming direction inside every sector on the grid
        rep = scatter_experiment(spec, phi_in=PI / 6 - d, energy=1.0)
        outs.append(rep.p_out_numeric)
    outs = np.array(outs)
    step = deltas[1] - deltas[0]
    # |dM/ddelta| <= 4/sqrt(3) per entry, rows have at most two entries
    bound = 2 * (8 / math.sqrt(3)) * step * np.abs(p_in).max()
    assert np.max(np.abs(np.diff(outs, axis=0))) <= bound


def test_max_time_exceeded():
    state = prepare_scattering_state(CAL, PI / 6, 1.0)
    with pytest.raises(AsymptoticRegimeError):
        integrate(CAL, state, IntegratorControls(max_time=10.0))


def test_controls_validation():
    with pytest.raises(ValidationError):
        IntegratorControls(rel_tol=0)
    with pytest.raises(ValidationError):
        IntegratorControls(r_stop_factor=2.0)


def test_sample_stride(reference_run):
    state, full = reference_run
    tr = integrate(CAL, state, IntegratorControls(sample_stride=5))
    assert len(tr.t) == len(full.t[::5]) + (0 if (len(full.t) - 1) % 5 == 0 else 1)
    assert tr.t[-1] == full.t[-1]


def test_as_printed_variant_runs():
    # Exploratory only: no scattering law is asserted for the literal form.
    spec = PotentialSpec(Family.B, g=1.0, f=1.0, delta=PI / 12, familyB_variant="as_printed")
    rep = scatter_experiment(spec, phi_in=0.1, energy=1.0)
    assert rep.E_drift <= 1e-8
    assert np.sum(rep.p_out_numeric ** 2) == pytest.approx(np.sum(rep.p_in ** 2), rel=1e-8)
