"""Three-site single-particle matrix and its Fock-space embedding."""

import numpy as np
import pytest

from rcpump.hamiltonian import (D_CENTER, D_LEFT, D_RIGHT, NUMBER_SECTORS,
                                NUMBER_TOTAL, TQDParams, fock_hamiltonian,
                                number_diagonal_indices, tqd_matrix)
from rcpump.model import DrivingProtocol, LorentzianSD, rc_map_lorentzian


def make_params(bias=1.9, phi=0.3, lam=0.25, omega=1.9, a0=2.5, eps0=1.0,
                width=0.05):
    gamma = 2.0 * lam**2 / width
    drv = DrivingProtocol(omega=omega, a0=a0, phi=phi, eps0=eps0)
    sd_l = LorentzianSD(coupling=gamma, width=width, center=eps0 - bias / 2)
    sd_r = LorentzianSD(coupling=gamma, width=width, center=eps0 + bias / 2)
    return TQDParams(driving=drv, rc_left=rc_map_lorentzian(sd_l),
                     rc_right=rc_map_lorentzian(sd_r), bias=bias)


class TestSingleParticleMatrix:
    def test_site_energy_split(self):
        p = make_params(bias=1.9)
        assert p.eps_left == pytest.approx(1.0 - 0.95)
        assert p.eps_right == pytest.approx(1.0 + 0.95)

    def test_matrix_structure(self):
        p = make_params()
        h = tqd_matrix(p, 0.37)
        assert h.shape == (3, 3)
        np.testing.assert_allclose(h, h.T.conj())
        assert h[0, 2] == 0.0  # no direct left-right tunneling

    def test_central_energy_oscillates_sites_fixed(self):
        p = make_params(bias=2.0)
        t = np.linspace(0, p.driving.period, 7)
        for tj in t:
            h = tqd_matrix(p, tj)
            assert h[0, 0] == pytest.approx(p.eps_left)
            assert h[2, 2] == pytest.approx(p.eps_right)
            assert h[1, 1] == pytest.approx(p.driving.dot_energy(tj))

    def test_couplings_carry_the_drive(self):
        p = make_params(lam=0.5)
        h0 = tqd_matrix(p, 0.0)
        drv = p.driving
        assert abs(h0[0, 1]) == pytest.approx(0.5 * drv.left_factor(0.0))
        assert abs(h0[1, 2]) == pytest.approx(0.5 * drv.right_factor(0.0))
        # tunneling magnitudes swap when the factors swap (half period later)
        h_half = tqd_matrix(p, p.driving.period / 2)
        assert abs(h_half[0, 1]) == pytest.approx(abs(h0[1, 2]))


class TestFockEmbedding:
    def test_anticommutation(self):
        for a in (D_LEFT, D_CENTER, D_RIGHT):
            for b in (D_LEFT, D_CENTER, D_RIGHT):
                anti = a @ b.conj().T + b.conj().T @ a
                expect = np.eye(8) if a is b else np.zeros((8, 8))
                np.testing.assert_allclose(anti, expect, atol=1e-14)
                np.testing.assert_allclose(a @ b + b @ a, 0.0, atol=1e-14)

    def test_number_conservation(self):
        p = make_params()
        h = fock_hamiltonian(p, 0.73)
        comm = h @ NUMBER_TOTAL - NUMBER_TOTAL @ h
        np.testing.assert_allclose(comm, 0.0, atol=1e-13)

    def test_sector_dimensions(self):
        assert [len(s) for s in NUMBER_SECTORS] == [1, 3, 3, 1]

    def test_single_particle_sector_matches_matrix(self):
        p = make_params(bias=0.7, phi=1.1)
        t = 0.41
        h_fock = fock_hamiltonian(p, t)
        sector = np.asarray(NUMBER_SECTORS[1])
        block = h_fock[np.ix_(sector, sector)]
        # ascending Fock indices order the one-particle states (right,
        # center, left); flip to the (left, center, right) site ordering
        np.testing.assert_allclose(block, tqd_matrix(p, t)[::-1, ::-1],
                                   atol=1e-13)

    def test_number_diagonal_indices(self):
        idx = number_diagonal_indices()
        assert idx.size == 1 + 9 + 9 + 1
        n = np.diag(NUMBER_TOTAL)
        mask = (n[:, None] == n[None, :]).reshape(-1)
        assert np.all(mask[idx])
        assert idx.size == mask.sum()
