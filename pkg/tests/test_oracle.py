"""Exact correlation-matrix benchmark for the quadratic models."""

import numpy as np
import pytest
from scipy.integrate import quad

from rcpump.model import (DrivingProtocol, FlatSD, LorentzianSD,
                          ReservoirSpec, fermi, sd_eval)
from rcpump.oracle import (DiscretizedBath, OracleModel, bath_current,
                           discretize, evolve, periodic_current_run,
                           single_dot_model, thermal_correlation)


def flat_bias_setup(mu_left=1.5, mu_right=0.5, n_k=120, window=4.0):
    """Static single dot between two biased Lorentzian reservoirs."""
    drv = DrivingProtocol(omega=2.0, a0=0.0, a_left=0.0, a_right=0.0, eps0=1.0)
    sd_l = LorentzianSD(coupling=2.5, width=0.05, center=0.05)
    sd_r = LorentzianSD(coupling=2.5, width=0.05, center=1.95)
    bl = discretize(sd_l, n_k, window, center=1.0, label="L")
    br = discretize(sd_r, n_k, window, center=1.0, label="R")
    model = single_dot_model(drv, bl, br)
    res_l = ReservoirSpec(beta=3.3, mu=mu_left, sd=sd_l, label="L")
    res_r = ReservoirSpec(beta=3.3, mu=mu_right, sd=sd_r, label="R")
    return model, res_l, res_r


class TestDiscretization:
    def test_coupling_sum_matches_integral(self):
        sd = LorentzianSD(coupling=2.5, width=0.05, center=1.0)
        bath = discretize(sd, 400, 3.0)
        integral = quad(lambda e: sd_eval(sd, e), -2.0, 4.0, limit=200)[0]
        assert bath.coupling_sum == pytest.approx(integral / (2.0 * np.pi),
                                                  rel=1e-3)

    def test_centers_on_lorentzian_peak(self):
        sd = LorentzianSD(coupling=1.0, width=0.1, center=0.7)
        bath = discretize(sd, 11, 2.0)
        assert bath.energies[5] == pytest.approx(0.7)

    def test_revival_time(self):
        bath = discretize(LorentzianSD(coupling=1.0, width=0.1, center=0.0),
                          101, 5.0)
        assert bath.revival_time == pytest.approx(2.0 * np.pi / bath.spacing)

    def test_rejects_single_level(self):
        sd = LorentzianSD(coupling=1.0, width=0.1, center=0.0)
        with pytest.raises(ValueError, match="at least two"):
            discretize(sd, 1, 2.0)

    def test_flat_density_needs_center(self):
        with pytest.raises(ValueError, match="center"):
            discretize(FlatSD(value=0.1), 10, 2.0)


class TestModelAssembly:
    def test_hamiltonian_structure(self):
        model, _, _ = flat_bias_setup(n_k=20)
        h = model.hamiltonian(0.3)
        np.testing.assert_allclose(h, h.conj().T)
        sl = model.bath_slice("L")
        np.testing.assert_allclose(np.diag(h)[sl], model.baths["L"].energies)
        # bath-bath block is diagonal: levels only couple through the dot
        block = h[sl, model.bath_slice("R")]
        np.testing.assert_allclose(block, 0.0)

    def test_driven_couplings_scale_with_factor(self):
        drv = DrivingProtocol(omega=2.0, a0=1.0, eps0=0.5)
        sd = LorentzianSD(coupling=1.0, width=0.1, center=0.5)
        bl = discretize(sd, 15, 2.0, label="L")
        br = discretize(sd, 15, 2.0, label="R")
        model = single_dot_model(drv, bl, br)
        t = 0.37
        h = model.hamiltonian(t)
        np.testing.assert_allclose(
            h[0, model.bath_slice("L")],
            bl.couplings * (1.0 + np.cos(drv.omega * t)))
        np.testing.assert_allclose(
            h[0, model.bath_slice("R")],
            br.couplings * (1.0 - np.cos(drv.omega * t)))

    def test_thermal_correlation_is_fermi_diagonal(self):
        model, res_l, res_r = flat_bias_setup(n_k=20)
        c = thermal_correlation(model, res_l, res_r)
        np.testing.assert_allclose(c, np.diag(np.diag(c)))
        sl = model.bath_slice("L")
        np.testing.assert_allclose(np.diag(c)[sl].real,
                                   fermi(model.baths["L"].energies, res_l))


class TestTransport:
    def test_bias_drives_left_to_right(self):
        # static dot, mu_L > mu_R: steady current flows out of the left
        # reservoir (positive) and into the right one (negative)
        model, res_l, res_r = flat_bias_setup()
        period = 2.0 * np.pi / 2.0
        res = periodic_current_run(model, res_l, res_r, period,
                                   n_relax=12, n_steps=64)
        assert res.charge_left > 0.0
        assert res.charge_right < 0.0
        assert res.charge_left == pytest.approx(-res.charge_right, rel=0.05)

    def test_charge_conservation(self):
        # integrated inflow from both reservoirs equals the change of the
        # system occupation over the measured period
        model, res_l, res_r = flat_bias_setup()
        period = 2.0 * np.pi / 2.0
        res = periodic_current_run(model, res_l, res_r, period,
                                   n_relax=12, n_steps=64)
        inflow = np.trapezoid(res.current_left + res.current_right, res.times)
        delta_n = res.occupation_sys[-1] - res.occupation_sys[0]
        assert inflow == pytest.approx(delta_n, abs=1e-8)

    def test_evolution_preserves_trace_and_hermiticity(self):
        model, res_l, res_r = flat_bias_setup(n_k=40)
        c0 = thermal_correlation(model, res_l, res_r)
        c1 = evolve(model, c0, 0.0, 3.0, 24)
        np.testing.assert_allclose(c1, c1.conj().T, atol=1e-12)
        assert c1.trace().real == pytest.approx(c0.trace().real)
        # current functional stays real and finite
        assert np.isfinite(bath_current(model, c1, 3.0, "L"))

    def test_revival_horizon_warns(self):
        model, res_l, res_r = flat_bias_setup(n_k=12, window=0.5)
        period = 2.0 * np.pi / 2.0
        with pytest.warns(RuntimeWarning, match="revival"):
            periodic_current_run(model, res_l, res_r, period,
                                 n_relax=40, n_steps=16)
