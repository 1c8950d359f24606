"""End-to-end checks of the package's headline results.

Each test prints exactly one ``CRITERION n: PASS/FAIL`` line (written
through the capture so it always reaches the terminal) and then asserts.
"""

import functools
import subprocess
import sys

import numpy as np
import pytest
from scipy.signal import find_peaks

from rcpump import fcs, fme
from rcpump.adiabatic import (adiabaticity_metric, channel_generator,
                              decompose_channels, total_cumulants)
from rcpump.floquet import floquet_modes, propagate_period
from rcpump.hamiltonian import (D_LEFT, D_RIGHT, NUMBER_SECTORS, TQDParams,
                                fock_hamiltonian, number_diagonal_indices)
from rcpump.model import (DrivingProtocol, LorentzianSD, ReservoirSpec,
                          TabulatedSD, rc_map_generic, rc_map_lorentzian,
                          sd_eval)
from rcpump.oracle import compare_representations

TWO_PI = 2.0 * np.pi


def report(capsys, n, ok, detail):
    with capsys.disabled():
        print(f"\nCRITERION {n}: {'PASS' if ok else 'FAIL'} - {detail}")


def make_params(bias, phi, lam, omega=1.9, a0=2.5, eps0=1.0, width=0.05):
    gamma = 2.0 * lam**2 / width
    drv = DrivingProtocol(omega=omega, a0=a0, phi=phi, eps0=eps0)
    sd_l = LorentzianSD(coupling=gamma, width=width, center=eps0 - bias / 2)
    sd_r = LorentzianSD(coupling=gamma, width=width, center=eps0 + bias / 2)
    p = TQDParams(driving=drv, rc_left=rc_map_lorentzian(sd_l),
                  rc_right=rc_map_lorentzian(sd_r), bias=bias)
    return p, sd_l, sd_r


@functools.lru_cache(maxsize=256)
def fme_solution(bias, phi, lam=0.25, omega=1.9, beta=3.3, mu=1.0, n_t=512):
    p, _, _ = make_params(bias, phi, lam, omega=omega)
    res_l = ReservoirSpec(beta=beta, mu=mu, sd=p.rc_left.residual, label="L")
    res_r = ReservoirSpec(beta=beta, mu=mu, sd=p.rc_right.residual, label="R")
    h = lambda t: fock_hamiltonian(p, t)
    u_p, u_g = propagate_period(h, p.driving.omega, n_t=n_t)
    basis = floquet_modes(u_p, u_g, p.driving.omega, blocks=NUMBER_SECTORS)
    rates = fme.build_dressed_rates(basis, {"L": D_LEFT, "R": D_RIGHT},
                                    {"L": res_l, "R": res_r})
    liouv = fme.build_liouvillian(rates, h)
    state = fme.solve_periodic_state(liouv, subspace=number_diagonal_indices())
    return p, state, rates


def fme_q(bias, phi, lam=0.25, **kw):
    p, state, rates = fme_solution(bias, round(phi % TWO_PI, 12), lam, **kw)
    return fme.pumped_charge(fme.matter_current(state, rates, "L"),
                             p.driving.omega)


@functools.lru_cache(maxsize=16)
def adiabatic_run(bias, phi, lam, omega=5e-5, width=0.03, beta=4.0,
                  grid=4097):
    p, _, _ = make_params(bias, phi, lam, omega=omega, width=width)
    res_l = ReservoirSpec(beta=beta, mu=1.0, sd=p.rc_left.residual, label="L")
    res_r = ReservoirSpec(beta=beta, mu=1.0, sd=p.rc_right.residual, label="R")
    dec = decompose_channels(p, grid=grid)
    q, dq2, records = total_cumulants(dec, res_l, res_r)
    return dec, res_l, res_r, q, dq2, records


def test_criterion_01_rc_map_exactness(capsys):
    rc = rc_map_lorentzian(LorentzianSD(coupling=2.5, width=0.05, center=1.0))
    exact = (abs(rc.coupling - 0.25) < 1e-15
             and abs(sd_eval(rc.residual, 1.3) - 0.1) < 1e-15)

    sd = LorentzianSD(coupling=2.5, width=0.05, center=1.0)
    core = np.linspace(-3.0, 5.0, 6001)
    tail = 5.0 + np.geomspace(0.01, 300.0, 1500)
    w = np.unique(np.concatenate([(2.0 - tail)[::-1], core, tail]))
    rc_num = rc_map_generic(TabulatedSD(w, sd_eval(sd, w)))
    lam_dev = abs(rc_num.coupling - 0.25) / 0.25
    resid = sd_eval(rc_num.residual, np.linspace(0.0, 2.0, 101))
    resid_dev = float(np.max(np.abs(resid - 0.1) / 0.1))
    ok = exact and lam_dev < 1e-4 and resid_dev < 1e-2
    report(capsys, 1, ok,
           f"closed form exact={exact}, quadrature lambda dev {lam_dev:.2e}, "
           f"residual flat to {resid_dev:.2e}")
    assert ok


def test_criterion_02_central_channel_annihilation(capsys):
    dec, _, _, _, _, records = adiabatic_run(0.0, np.pi / 2, 0.5)
    eps_dev = float(np.max(np.abs(dec.energies[:, 1] - 1.0)))
    q_c = records["c"].charge
    ok = eps_dev < 1e-12 and abs(q_c) < 1e-8
    report(capsys, 2, ok,
           f"max |eps_c - eps0| = {eps_dev:.2e}, |Q_c| = {abs(q_c):.2e}")
    assert ok


def test_criterion_03_single_electron_plateau(capsys):
    qs = {}
    for bias in (2.0, 3.0):
        _, _, _, q, _, _ = adiabatic_run(bias, np.pi / 2, 0.5)
        qs[bias] = q
    ok = all(abs(q - 1.0) < 0.1 for q in qs.values())
    detail = ", ".join(f"Q({b:g}) = {q:.4f}" for b, q in qs.items())
    report(capsys, 3, ok, detail + " (target 1 +- 0.1)")
    assert ok


def test_criterion_04_coupling_driven_reversal(capsys):
    phi = 1.52 * np.pi
    _, _, _, q_strong, _, _ = adiabatic_run(5.0, phi, 0.3)
    _, _, _, q_weak, _, _ = adiabatic_run(5.0, phi, 0.003)
    ok = q_strong < 0.0 < q_weak
    report(capsys, 4, ok,
           f"Q(lambda=0.3) = {q_strong:.4f} (< 0), "
           f"Q(lambda=0.003) = {q_weak:.4f} (> 0)")
    assert ok


def test_criterion_05_rectification(capsys):
    phis = np.linspace(0.0, TWO_PI, 13)
    q_plus = np.array([fme_q(1.9, phi) for phi in phis])
    q_minus = np.array([fme_q(-1.9, phi) for phi in phis])
    peak_plus = q_plus[np.argmax(np.abs(q_plus))]
    peak_minus = q_minus[np.argmax(np.abs(q_minus))]
    ok = (np.all(q_plus <= 0.0) and peak_plus < 0.0
          and np.all(q_minus >= 0.0) and peak_minus > 0.0)
    report(capsys, 5, ok,
           f"Q range at +Omega [{q_plus.min():.4f}, {q_plus.max():.4f}] "
           f"(required <= 0), at -Omega [{q_minus.min():.4f}, "
           f"{q_minus.max():.4f}] (required >= 0)")
    assert ok


def test_criterion_06_resonances(capsys):
    biases = np.round(np.arange(0.5, 6.01, 0.1), 10)
    q = np.array([fme_q(b, np.pi / 2) for b in biases])
    peaks, _ = find_peaks(np.abs(q), prominence=0.01)
    locations = biases[peaks]
    nearest = 1.9 * np.round(locations / 1.9)
    dev = np.abs(locations - nearest)
    ok = len(peaks) >= 2 and np.all(dev <= 0.1)
    report(capsys, 6, ok,
           f"|Q| maxima at Delta = {list(locations)} "
           f"(multiples of 1.9 within 0.1)")
    assert ok


def test_criterion_07_symmetry_suite(capsys):
    # mirror antisymmetry of the pumped charge
    worst = 0.0
    for bias in (-2.0, -1.0, 0.0, 1.0, 2.0):
        for phi in (0.0, np.pi / 2, np.pi, 1.5 * np.pi):
            worst = max(worst, abs(fme_q(bias, phi)
                                   + fme_q(-bias, phi + np.pi)))
    mirror_ok = worst < 1e-6

    # state invariants on a representative driven solution
    p, state, _ = fme_solution(1.9, round(np.pi, 12), 0.25)
    ts = np.linspace(0.0, p.driving.period, 40)
    trace_dev = max(abs(np.trace(state.rho_t(t)) - 1.0) for t in ts)
    herm_dev = max(np.max(np.abs(state.rho_t(t)
                                 - state.rho_t(t).conj().T)) for t in ts)
    state_ok = trace_dev < 1e-9 and herm_dev < 1e-9

    # auxiliary-operator tracelessness on the counting path
    gen, gamma_tot, n_target, _ = channel_generator(
        *_channel_fixture())
    n0 = n_target(0.0)
    x, _, drift = fcs.propagate_auxiliary(
        gen, lambda t: np.array([1.0 - n0, n0], dtype=complex),
        np.zeros(2, dtype=complex), 0.0, 5.0 / gamma_tot(0.0))
    aux_ok = abs(gen.trace_vec @ x) < 1e-10

    # channel escape rates into each reservoir sum to twice the width
    dec, _, _, _, dq2, records = adiabatic_run(2.0, np.pi / 2, 0.5)
    sum_dev = float(np.max(np.abs(dec.rates.sum(axis=1) - 0.06)))
    var_ok = dq2 >= 0.0 and all(r.variance >= 0.0 for r in records.values())
    rates_ok = sum_dev < 1e-12

    ok = mirror_ok and state_ok and aux_ok and var_ok and rates_ok
    report(capsys, 7, ok,
           f"mirror dev {worst:.2e}, trace dev {trace_dev:.2e}, "
           f"herm dev {herm_dev:.2e}, Tr X = {abs(gen.trace_vec @ x):.2e}, "
           f"rate-sum dev {sum_dev:.2e}, variances >= 0: {var_ok}")
    assert ok


def _channel_fixture():
    dec, res_l, res_r, _, _, _ = adiabatic_run(2.0, np.pi / 2, 0.5)
    return dec, "u", res_l, res_r


def test_criterion_08_oracle_agreement(capsys):
    p, sd_l, sd_r = make_params(1.9, np.pi, 0.25)
    res_l = ReservoirSpec(beta=3.3, mu=1.0, sd=sd_l, label="L")
    res_r = ReservoirSpec(beta=3.3, mu=1.0, sd=sd_r, label="R")
    rep = compare_representations(sd_l, sd_r, p, res_l, res_r,
                                  n_k=400, window=C8_WINDOW, n_relax=20,
                                  n_steps=C8_N_STEPS)
    map_dev = rep.charge_deviation / abs(rep.original.charge_left)
    q_fme = fme_q(1.9, np.pi)
    fme_dev = abs(q_fme - rep.mapped.charge_left) / abs(rep.mapped.charge_left)
    ok = map_dev < 0.05 and fme_dev < 0.10
    report(capsys, 8, ok,
           f"exact Q: original {rep.original.charge_left:.4f}, mapped "
           f"{rep.mapped.charge_left:.4f} (dev {map_dev:.1%}, limit 5%); "
           f"FME Q {q_fme:.4f} (dev {fme_dev:.1%}, limit 10%)")
    assert ok


def test_criterion_09_fcs_cross_validation(capsys):
    om = 1.0
    period = TWO_PI / om
    fl = lambda t: 0.4 + 0.3 * np.cos(om * np.asarray(t))
    fr = lambda t: 0.1 + 0.0 * np.asarray(t)
    el = lambda t: 0.6 - 0.3 * np.cos(om * np.asarray(t))
    er = lambda t: 0.2 + 0.0 * np.asarray(t)

    def liouville(t):
        fin, fout = fl(t) + fr(t), el(t) + er(t)
        return np.array([[-fin, fout], [fin, -fout]], dtype=complex)

    def jump_xi(t, xi):
        return np.array([[0.0, el(t) * (np.exp(-1j * xi) - 1.0)],
                         [fl(t) * (np.exp(1j * xi) - 1.0), 0.0]],
                        dtype=complex)

    jump_prime = lambda t: np.array([[0.0, -el(t)], [fl(t), 0.0]],
                                    dtype=complex)
    jump_second = lambda t: np.array([[0.0, el(t)], [fl(t), 0.0]],
                                     dtype=complex)
    gen = fcs.CountingGenerator(dim=2, liouville=liouville, jump_xi=jump_xi,
                                jump_prime=jump_prime,
                                jump_second=jump_second,
                                trace_vec=np.ones(2))

    from scipy.integrate import solve_ivp
    from scipy.interpolate import CubicSpline
    v = np.array([0.5, 0.5])
    for _ in range(60):
        sol = solve_ivp(lambda t, y: gen.liouville(t).real @ y, (0, period),
                        v, rtol=1e-12, atol=1e-14, method="BDF")
        v = sol.y[:, -1]
    grid_t = np.linspace(0.0, period, 513)
    sols = solve_ivp(lambda t, y: gen.liouville(t).real @ y, (0, period), v,
                     t_eval=grid_t, rtol=1e-12, atol=1e-14, method="BDF")
    spline = CubicSpline(grid_t, sols.y.T, bc_type="periodic")
    rho = lambda t: spline(np.mod(t, period)).astype(complex)

    rec = fcs.cumulants_periodic(gen, rho, om, n_t=513, x_tol=1e-10,
                                 rtol=1e-11, atol=1e-13)
    q_fd, dq2_fd = fcs.generating_function_cumulants(
        gen, v.astype(complex), om, xi=1e-4, n_periods=20,
        rtol=1e-12, atol=1e-14)
    fd_q_dev = abs(rec.charge - q_fd) / abs(rec.charge)
    fd_v_dev = abs(rec.variance - dq2_fd) / abs(rec.variance)

    n_meas = 60
    burn = 4 * period
    mc = fcs.mc_trajectory_oracle(fl, fr, el, er,
                                  horizon=burn + n_meas * period,
                                  n_samples=100_000, seed=20260826,
                                  burn_in=burn)
    window = n_meas * period
    q_sig = abs(mc.mean_rate - rec.charge / period) / mc.mean_err
    v_sig = abs(mc.var_rate - rec.variance / period) / mc.var_err
    ok = fd_q_dev < 1e-4 and fd_v_dev < 1e-4 and q_sig < 3.0 and v_sig < 3.0
    report(capsys, 9, ok,
           f"FD dev: Q {fd_q_dev:.2e}, dQ2 {fd_v_dev:.2e} (limit 1e-4); "
           f"MC (1e5 traj, {n_meas} periods): Q at {q_sig:.2f} sigma, "
           f"dQ2 at {v_sig:.2f} sigma (limit 3)")
    assert ok


def test_criterion_10_secular_failure(capsys):
    lam = 1.5247950681976907
    p, state, rates = fme_solution(0.0, round(np.pi / 2, 12), lam)
    q_ns = fme.pumped_charge(fme.matter_current(state, rates, "L"),
                             p.driving.omega)
    q_s = fme.secular_average_current(rates) * p.driving.period
    rel = abs(q_s - q_ns) / abs(q_ns)
    ok = rel > 0.1
    report(capsys, 10, ok,
           f"Q nonsecular {q_ns:.4f}, secular {q_s:.4f} "
           f"(rel diff {rel:.2f}, required > 0.1)")
    assert ok


def test_criterion_11_fluctuations_at_zero_bias(capsys):
    _, _, _, q_tot, _, records = adiabatic_run(0.0, np.pi / 2, 0.5)
    q_c = records["c"].charge
    dq2_c = records["c"].variance
    ok = abs(q_c) < 1e-3 and dq2_c > 0.05
    report(capsys, 11, ok,
           f"central channel: |Q_c| = {abs(q_c):.2e} (< 1e-3), "
           f"dQ2_c = {dq2_c:.3g} (> 0.05); totals Q = {q_tot:.3f}")
    assert ok


def test_criterion_12_rendering(capsys, tmp_path):
    import importlib.resources
    csv_path = importlib.resources.files("plots") / "examples" / "fig2e.csv"
    out_a = tmp_path / "a.png"
    out_b = tmp_path / "b.png"
    for out in (out_a, out_b):
        spec = tmp_path / f"{out.stem}.cfg"
        spec.write_text(
            "[plot]\n"
            "style = density\n"
            f"input = {csv_path}\n"
            f"output = {out}\n")
        r = subprocess.run([sys.executable, "-m", "plots", "render",
                            "--spec", str(spec)], capture_output=True,
                           text=True)
        assert r.returncode == 0, r.stderr
    identical = out_a.read_bytes() == out_b.read_bytes()

    from plots.render import load_table, symmetric_range
    table = load_table(str(csv_path))
    lo, hi = symmetric_range(table.values("Q"))
    centered = lo == -hi and hi >= float(np.nanmax(np.abs(table.values("Q"))))
    ok = identical and centered and out_a.stat().st_size > 0
    report(capsys, 12, ok,
           f"bytes identical: {identical}, color range [{lo:.3g}, {hi:.3g}] "
           f"centered on 0: {centered}")
    assert ok


# Oracle-comparison numerics for criterion 8: bath size and relaxation
# count are fixed by the criterion itself; window and step count chosen
# for best discretization accuracy within the runtime budget.
C8_WINDOW = 5.0
C8_N_STEPS = 512
