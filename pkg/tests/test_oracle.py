"""Density-matrix oracle tests: physicality, closed-form limits, regressions.

Basis ordering is (ground, excited), so rho[..., 1, 1] is the excited
population.
"""

import math

import numpy as np
import pytest

from photonloop.oracle import (
    ConvergenceError,
    lindblad_solve,
    oracle_report,
    qrt_g2_zero,
    qrt_hom_areas,
    qrt_indistinguishability,
    smalldelay_feedback_rate,
    wavepacket_overlap,
)
from photonloop.params import PulseParams, SystemParams


def off_params(t_p=0.01, gamma0=0.0, gamma_prime=0.0):
    return SystemParams(
        gamma0=gamma0,
        gamma_prime=gamma_prime,
        feedback_enabled=False,
        pulse=PulseParams(t_p=t_p),
        T=20.0,
    )


def test_lindblad_states_are_physical():
    p = off_params(t_p=0.1, gamma0=0.1, gamma_prime=0.5)
    t = np.linspace(0.0, 8.0, 60)
    rho = lindblad_solve(p, t)
    tr = np.einsum("tii->t", rho)
    np.testing.assert_allclose(tr.real, 1.0, atol=1e-8)
    np.testing.assert_allclose(tr.imag, 0.0, atol=1e-10)
    np.testing.assert_allclose(rho, np.conj(np.transpose(rho, (0, 2, 1))), atol=1e-9)
    eigs = np.linalg.eigvalsh(rho)
    assert eigs.min() > -1e-9


def test_population_decay_rate_is_total_emission():
    # after the pulse the excited population falls at gamma + gamma0
    p = off_params(t_p=0.01, gamma0=0.2)
    t = np.array([1.0, 3.0])
    pop = lindblad_solve(p, t)[:, 1, 1].real
    rate = math.log(pop[0] / pop[1]) / (t[1] - t[0])
    assert rate == pytest.approx(1.2, rel=1e-3)


def test_coherence_decay_rate_includes_dephasing():
    # a half-area pulse leaves coherence, which decays at (gamma_t + gamma')/2
    p = SystemParams(
        gamma0=0.1,
        gamma_prime=0.5,
        feedback_enabled=False,
        pulse=PulseParams(t_p=0.01, area=math.pi / 2),
        T=20.0,
    )
    t = np.array([1.0, 3.0])
    coh = np.abs(lindblad_solve(p, t)[:, 0, 1])
    rate = math.log(coh[0] / coh[1]) / (t[1] - t[0])
    assert rate == pytest.approx((1.1 + 0.5) / 2.0, rel=1e-3)


def test_undriven_state_stays_ground():
    p = off_params()
    quiet = lambda t: 0.0 * np.asarray(t)
    with pytest.raises(ValueError, match="pulse_end"):
        lindblad_solve(p, np.array([0.0]), omega=quiet)
    rho = lindblad_solve(p, np.array([0.0, 1.0]), omega=quiet, pulse_end=0.1)
    assert rho[1, 0, 0].real == pytest.approx(1.0)
    assert rho[1, 1, 1].real == pytest.approx(0.0, abs=1e-12)


def test_lindblad_grid_validation():
    p = off_params()
    with pytest.raises(ValueError, match="non-empty"):
        lindblad_solve(p, np.zeros((2, 2)))
    with pytest.raises(ValueError, match="sorted"):
        lindblad_solve(p, np.array([1.0, 0.5]))


def test_smalldelay_rate_closed_form():
    assert smalldelay_feedback_rate(1.0, 0.0) == pytest.approx(2.0)
    assert smalldelay_feedback_rate(1.0, math.pi) == pytest.approx(0.0, abs=1e-15)
    assert smalldelay_feedback_rate(1.0, math.pi / 2) == pytest.approx(1.0)
    assert smalldelay_feedback_rate(2.5, 0.0) == pytest.approx(5.0)


def test_overlap_short_pulse_closed_form():
    # gamma_t / (gamma_t + gamma') for an effectively instantaneous pulse
    o = wavepacket_overlap(off_params(gamma0=0.1, gamma_prime=0.5))
    assert o == pytest.approx(1.1 / 1.6, rel=5e-3)
    o = wavepacket_overlap(off_params(gamma_prime=20.0))
    assert o == pytest.approx(1.0 / 21.0, rel=5e-2)
    # a finite pulse leaves residual timing jitter, so clean is just below 1
    o = wavepacket_overlap(off_params())
    assert o == pytest.approx(1.0, rel=5e-3)


def test_g2_values_and_pulse_width_trend():
    short = qrt_g2_zero(off_params(t_p=0.01))
    mid = qrt_g2_zero(off_params(t_p=0.1))
    assert short == pytest.approx(0.003072, rel=2e-3)
    assert mid == pytest.approx(0.0289, rel=2e-2)
    assert short < mid


def test_indistinguishability_values():
    clean = qrt_indistinguishability(off_params(t_p=0.01))
    assert clean == pytest.approx(0.99693, rel=1e-3)
    noisy = qrt_indistinguishability(off_params(gamma0=0.1, gamma_prime=0.5))
    assert noisy == pytest.approx(0.84091, rel=2e-3)
    # two-photon averaging: I is close to (1 + overlap) / 2 for a clean source
    o = wavepacket_overlap(off_params(gamma0=0.1, gamma_prime=0.5))
    assert noisy == pytest.approx((1 + o) / 2, abs=0.01)


def test_hom_areas_consistent_with_indistinguishability():
    p = off_params(gamma0=0.1, gamma_prime=0.5)
    a0, at = qrt_hom_areas(p)
    assert a0 > 0 and at > 0
    assert 1.0 - a0 / at == pytest.approx(qrt_indistinguishability(p), rel=1e-6)


def test_oracle_report_is_complete_and_consistent():
    p = off_params(gamma0=0.1, gamma_prime=0.5)
    rep = oracle_report(p)
    keys = {
        "g2",
        "indistinguishability",
        "wavepacket_overlap",
        "mean_photons",
        "hom_A0",
        "hom_AT",
        "smalldelay_rate_at_phi",
    }
    assert set(rep) == keys
    assert rep["g2"] == pytest.approx(qrt_g2_zero(p), rel=1e-9)
    assert rep["mean_photons"] == pytest.approx(1.0 / 1.1, rel=1e-3)
    clean = oracle_report(off_params())
    assert clean["mean_photons"] == pytest.approx(1.0, rel=3e-3)


def test_unresolved_drive_raises_convergence_error():
    p = off_params(t_p=0.1)
    osc = lambda t: 300.0 * np.sin(600.0 * np.asarray(t)) ** 2
    with pytest.raises(ConvergenceError, match="not converged"):
        qrt_g2_zero(p, omega=osc, pulse_end=0.3)
