"""Spectral densities, reservoirs, driving, and the reaction-coordinate map."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rcpump.model import (DrivingProtocol, FlatSD, LorentzianSD, ReservoirSpec,
                          TabulatedSD, fermi, rc_map_generic,
                          rc_map_lorentzian, sd_eval)

finite = st.floats(allow_nan=False, allow_infinity=False)


class TestSpectralDensities:
    def test_lorentzian_peak_value_and_width(self):
        sd = LorentzianSD(coupling=2.5, width=0.05, center=1.0)
        assert sd_eval(sd, 1.0) == pytest.approx(2.5)
        assert sd_eval(sd, 1.05) == pytest.approx(1.25)

    def test_flat_is_constant(self):
        sd = FlatSD(0.1)
        assert np.all(sd_eval(sd, np.linspace(-50, 50, 7)) == 0.1)

    def test_tabulated_interpolates_and_rejects_outside(self):
        sd = TabulatedSD(np.array([0.0, 1.0, 2.0]), np.array([0.0, 2.0, 0.0]))
        assert sd_eval(sd, 0.5) == pytest.approx(1.0)
        with pytest.raises(ValueError, match="outside"):
            sd_eval(sd, 2.5)

    def test_invalid_parameters_rejected(self):
        with pytest.raises(ValueError):
            LorentzianSD(coupling=-1.0, width=0.1)
        with pytest.raises(ValueError):
            LorentzianSD(coupling=1.0, width=0.0)
        with pytest.raises(ValueError):
            TabulatedSD(np.array([0.0, 1.0]), np.array([1.0, -1.0]))
        with pytest.raises(ValueError):
            FlatSD(-0.5)

    @given(st.floats(0.01, 100), st.floats(0.001, 10), st.floats(-5, 5))
    @settings(max_examples=50, deadline=None)
    def test_lorentzian_positive_and_peaked(self, g, d, c):
        sd = LorentzianSD(coupling=g, width=d, center=c)
        w = np.linspace(c - 10 * d, c + 10 * d, 101)
        vals = sd_eval(sd, w)
        assert np.all(vals >= 0)
        assert np.max(vals) == pytest.approx(sd_eval(sd, c))


class TestFermi:
    def test_half_filling_at_mu(self):
        assert fermi(1.0, beta=3.3, mu=1.0) == 0.5

    @given(st.floats(-20, 20), st.floats(0.01, 50), st.floats(-5, 5))
    @settings(max_examples=100, deadline=None)
    def test_bounded_and_particle_hole_symmetric(self, w, beta, mu):
        f = fermi(w, beta=beta, mu=mu)
        assert 0.0 <= f <= 1.0
        assert f + fermi(2 * mu - w, beta=beta, mu=mu) == pytest.approx(1.0)

    def test_monotone_decreasing(self):
        w = np.linspace(-5, 5, 201)
        f = fermi(w, beta=2.0, mu=0.3)
        assert np.all(np.diff(f) < 0)

    def test_no_overflow_at_extreme_arguments(self):
        assert fermi(1e4, beta=100.0, mu=0.0) == 0.0
        assert fermi(-1e4, beta=100.0, mu=0.0) == 1.0

    def test_reservoir_spec_shortcut(self):
        res = ReservoirSpec(beta=4.0, mu=1.0, sd=FlatSD(0.1), label="L")
        assert fermi(0.7, res) == fermi(0.7, beta=4.0, mu=1.0)


class TestDriving:
    def test_dot_energy_phase_and_amplitude(self):
        drv = DrivingProtocol(omega=1.9, a0=2.5, phi=np.pi / 2, eps0=1.0)
        assert drv.dot_energy(0.0) == pytest.approx(1.0)
        quarter = drv.period / 4
        assert drv.dot_energy(quarter) == pytest.approx(1.0 - 2.5)

    def test_left_barrier_open_at_time_zero(self):
        drv = DrivingProtocol(omega=2.0, a_left=1.0, a_right=1.0)
        assert drv.left_factor(0.0) == pytest.approx(2.0)
        assert drv.right_factor(0.0) == pytest.approx(0.0)

    def test_factors_swap_after_half_period(self):
        drv = DrivingProtocol(omega=2.0, a_left=0.8, a_right=0.8)
        t = np.linspace(0, drv.period, 33)
        np.testing.assert_allclose(drv.left_factor(t + drv.period / 2),
                                   drv.right_factor(t), atol=1e-12)

    def test_periodicity(self):
        drv = DrivingProtocol(omega=1.9, a0=2.5, phi=0.3)
        t = np.linspace(0, 5, 17)
        np.testing.assert_allclose(drv.dot_energy(t + drv.period),
                                   drv.dot_energy(t), atol=1e-10)


class TestRCMapping:
    def test_closed_form_reference_point(self):
        # Gamma = 2.5, delta = 0.05: lam = sqrt(2.5 * 0.05 / 2) = 0.25 and
        # the residual density is flat with value 2 * 0.05 = 0.1
        rc = rc_map_lorentzian(LorentzianSD(coupling=2.5, width=0.05, center=1.0))
        assert rc.coupling == pytest.approx(0.25, abs=1e-15)
        assert isinstance(rc.residual, FlatSD)
        assert rc.residual.value == pytest.approx(0.1, abs=1e-15)
        assert rc.energy == 1.0

    @given(st.floats(0.01, 100), st.floats(0.005, 1))
    @settings(max_examples=50, deadline=None)
    def test_closed_form_scaling(self, g, d):
        rc = rc_map_lorentzian(LorentzianSD(coupling=g, width=d))
        assert rc.coupling == pytest.approx(np.sqrt(g * d / 2.0))
        rc2 = rc_map_lorentzian(LorentzianSD(coupling=g, width=2 * d))
        assert rc2.coupling == pytest.approx(np.sqrt(2.0) * rc.coupling)

    def test_generic_quadrature_matches_closed_form(self):
        sd = LorentzianSD(coupling=2.5, width=0.05, center=1.0)
        # dense grid across the peak, logarithmic tails far out: the tail
        # truncation error of the zeroth moment falls off as 1/window
        core = np.linspace(-3.0, 5.0, 6001)
        tail = 5.0 + np.geomspace(0.01, 300.0, 1500)
        w = np.unique(np.concatenate([(2.0 - tail)[::-1], core, tail]))
        tab = TabulatedSD(w, sd_eval(sd, w))
        rc_num = rc_map_generic(tab)
        rc_ref = rc_map_lorentzian(sd)
        assert rc_num.coupling == pytest.approx(rc_ref.coupling, rel=1e-4)
        assert rc_num.energy == pytest.approx(rc_ref.energy, abs=1e-6)
        # residual density flat to 1% away from the grid edges
        interior = np.linspace(0.0, 2.0, 101)
        resid = sd_eval(rc_num.residual, interior)
        np.testing.assert_allclose(resid, 0.1, rtol=1e-2)

    def test_generic_requires_tabulated_input(self):
        with pytest.raises(TypeError):
            rc_map_generic(LorentzianSD(coupling=1.0, width=0.1))
        with pytest.raises(TypeError):
            rc_map_lorentzian(FlatSD(0.1))
