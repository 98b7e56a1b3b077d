"""Fock-layer unit tests: enumeration, ladder operators, conveyor shift."""

import itertools
import math

import numpy as np
import pytest

from photonloop.basis import (
    FockBasis,
    FockConfig,
    Ket,
    ShiftContractError,
    apply_bin_annihilate,
    apply_bin_create,
    apply_sigma,
    basis_size,
    enumerate_basis,
    expectation,
    shift_bins,
)


def brute_force_states(N, n_max):
    """All (tls_bit, per-bin occupations) with total photons <= n_max."""
    states = set()
    for bit in (0, 1):
        for occ in itertools.product(range(n_max + 1), repeat=N):
            if sum(occ) <= n_max:
                states.add((bit, occ))
    return states


def occ_tuple(cfg, N):
    counts = [0] * N
    for b in cfg[1]:
        counts[b] += 1
    return cfg[0], tuple(counts)


def test_basis_sizes():
    assert enumerate_basis(3, 1).dim == 8
    assert enumerate_basis(3, 2).dim == 20
    assert enumerate_basis(1, 1).dim == 4
    assert basis_size(3, 2) == 2 * (1 + 3 + 6)


def test_enumeration_matches_brute_force():
    for N in range(1, 6):
        for n_max in range(1, 4):
            basis = enumerate_basis(N, n_max)
            assert basis.dim == basis_size(N, n_max)
            seen = {occ_tuple(cfg, N) for cfg in basis.configs}
            assert seen == brute_force_states(N, n_max)
            # round trip: every stored config maps back to its own index
            for i, cfg in enumerate(basis.configs):
                assert basis.index[cfg] == i


def test_rejects_degenerate_sizes():
    with pytest.raises(ValueError):
        enumerate_basis(0, 2)
    with pytest.raises(ValueError):
        enumerate_basis(3, 0)


def test_annihilate_examples():
    basis = enumerate_basis(3, 2)
    out = apply_bin_annihilate(basis.ket(bits=1, occ=(0,)), 0)
    np.testing.assert_allclose(out.psi, basis.ket(bits=1).psi)

    out = apply_bin_annihilate(basis.ket(bits=0), 0)
    assert np.all(out.psi == 0)

    out = apply_bin_annihilate(basis.ket(bits=0, occ=(0, 0)), 0)
    np.testing.assert_allclose(out.psi, math.sqrt(2) * basis.ket(occ=(0,)).psi)


def test_create_examples():
    basis = enumerate_basis(3, 2)
    out, dropped = apply_bin_create(basis.ket(), 2)
    np.testing.assert_allclose(out.psi, basis.ket(occ=(2,)).psi)
    assert dropped == 0.0

    out, dropped = apply_bin_create(basis.ket(occ=(2,)), 2)
    np.testing.assert_allclose(out.psi, math.sqrt(2) * basis.ket(occ=(2, 2)).psi)
    assert dropped == 0.0

    # the removed component is sqrt(3)|bin2:3>, so its squared norm is 3
    out, dropped = apply_bin_create(basis.ket(occ=(2, 2)), 2)
    assert np.all(out.psi == 0)
    assert dropped == pytest.approx(3.0)


def test_sigma_examples():
    basis = enumerate_basis(2, 1)
    out = apply_sigma(basis.ket(), "raise")
    np.testing.assert_allclose(out.psi, basis.ket(bits=1).psi)

    out = apply_sigma(basis.ket(bits=1), "raise")
    assert np.all(out.psi == 0)

    mixed = Ket(basis, (basis.ket().psi * 0.6 + basis.ket(bits=1).psi * 0.8))
    out = apply_sigma(mixed, "population")
    np.testing.assert_allclose(out.psi, 0.8 * basis.ket(bits=1).psi)


def test_shift_examples():
    basis = enumerate_basis(3, 2)
    out = shift_bins(basis.ket(occ=(2,)))
    np.testing.assert_allclose(out.psi, basis.ket(occ=(1,)).psi)

    # two photons each pick up one factor of the unit phase
    ph = np.exp(-1j * np.pi / 2)
    out = shift_bins(basis.ket(occ=(1, 2)), phase=ph)
    np.testing.assert_allclose(out.psi, ph**2 * basis.ket(occ=(0, 1)).psi)

    out = shift_bins(basis.ket(bits=1))
    np.testing.assert_allclose(out.psi, basis.ket(bits=1).psi)


def test_shift_precondition_violation():
    basis = enumerate_basis(3, 2)
    with pytest.raises(ShiftContractError):
        shift_bins(basis.ket(occ=(0,)))


def test_shift_cycle_accumulates_phase():
    N = 5
    basis = enumerate_basis(N, 2)
    ph = np.exp(-1j * 0.317)
    ket = basis.ket(occ=(N - 1,))
    for _ in range(N - 1):
        ket = shift_bins(ket, phase=ph)
        assert ket.norm() == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_allclose(ket.psi, ph ** (N - 1) * basis.ket(occ=(0,)).psi)
    with pytest.raises(ShiftContractError):
        shift_bins(ket, phase=ph)


def test_adjointness_random_kets():
    rng = np.random.default_rng(7)
    basis = enumerate_basis(4, 3)
    for mode in range(4):
        a = basis.bin_annihilate_map(mode).tocsr()
        c = basis.bin_create_map(mode).tocsr()
        for _ in range(5):
            phi = rng.normal(size=basis.dim) + 1j * rng.normal(size=basis.dim)
            psi = rng.normal(size=basis.dim) + 1j * rng.normal(size=basis.dim)
            lhs = np.vdot(phi, a @ psi)
            rhs = np.conj(np.vdot(psi, c @ phi))
            assert abs(lhs - rhs) < 1e-12 * np.linalg.norm(phi) * np.linalg.norm(psi)


def test_commutator_below_saturation():
    basis = enumerate_basis(3, 2)
    rng = np.random.default_rng(11)
    safe = basis.total_photons <= basis.config.n_max - 1
    for mode in range(3):
        a = basis.bin_annihilate_map(mode).tocsr()
        c = basis.bin_create_map(mode).tocsr()
        psi = np.where(safe, rng.normal(size=basis.dim), 0.0).astype(complex)
        np.testing.assert_allclose((a @ (c @ psi)) - (c @ (a @ psi)), psi, atol=1e-12)


def test_expectation_examples():
    basis = enumerate_basis(2, 2)
    pop = np.diag(basis.excited_mask().astype(float))
    n0 = np.diag(basis.occupation(0).astype(float))

    assert expectation(basis.ket(bits=1), pop).real == pytest.approx(1.0)

    plus = Ket(basis, (basis.ket(occ=(0,)).psi + basis.ket().psi) / math.sqrt(2))
    assert expectation(plus, n0).real == pytest.approx(0.5)

    assert expectation(basis.ket(occ=(0, 0)), n0).real == pytest.approx(2.0)
