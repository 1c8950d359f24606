"""Non-secular Floquet master equation with counting field.

The dissipator couples the reaction-coordinate fermions d_L, d_R to flat
residual baths through Floquet-harmonic transition weights.  Collecting the
harmonic sums into two grid operators per reservoir,

    A(t) = sum_n e^{-i n w t} eta_n(t),   B(t) = sum_n e^{-i n w t} theta_n(t),

the generator takes the compact form

    L(t) rho = -i [H(t), rho] + sum_nu { [d+, rho A] + [B rho, d+]
                                         + [A+ rho, d] + [d, rho B+] },

and the counting-field derivatives at xi = 0 (field on one reservoir) are

    J' rho = d+ rho A + A+ rho d - d rho B+ - B rho d+,
    J'' rho = d+ rho A + A+ rho d + d rho B+ + B rho d+.

Positive current means electrons leaving the counted reservoir into the
system.  The long-time periodic state solves the harmonic-domain linear system
i n w rho_n = sum_k L_k rho_{n-k} with the n = 0 trace fixed to one.  The
principal-value (Lamb-shift) terms are dropped.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .floquet import FloquetBasis, HarmonicOperator, decompose_operator
from .model import ReservoirSpec, fermi, sd_eval

__all__ = [
    "DressedRates",
    "build_dressed_rates",
    "LiouvillianHarmonics",
    "build_liouvillian",
    "PeriodicState",
    "solve_periodic_state",
    "matter_current",
    "energy_current",
    "pumped_charge",
    "secular_generator",
    "secular_average_current",
]


def _kron_grid(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Batched Kronecker product over a leading grid axis."""
    t, d = a.shape[0], a.shape[1]
    return (a[:, :, None, :, None] * b[:, None, :, None, :]).reshape(t, d * d, d * d)


def _spre(a: np.ndarray) -> np.ndarray:
    d = a.shape[-1]
    eye = np.broadcast_to(np.eye(d), a.shape)
    return _kron_grid(a, eye)


def _spost(b: np.ndarray) -> np.ndarray:
    d = b.shape[-1]
    eye = np.broadcast_to(np.eye(d), b.shape)
    return _kron_grid(eye, np.swapaxes(b, -1, -2))


def _sandwich(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Superoperator of rho -> a rho b on the grid."""
    return _kron_grid(a, np.swapaxes(b, -1, -2))


@dataclass
class _ReservoirRates:
    """Per-reservoir harmonic weight data and assembled grid operators."""

    harm: HarmonicOperator
    d_op: np.ndarray
    deltas: np.ndarray        # (n, dim, dim): Delta_{k,l,n} laid out as [l, k]
    s_rev: np.ndarray         # (n, dim, dim): s_{l,k,-n} laid out as [l, k]
    n_eta: np.ndarray         # weight * s tensors, same layout
    n_theta: np.ndarray
    n_eta_en: np.ndarray
    n_theta_en: np.ndarray
    a_grid: np.ndarray        # (n_t, dim, dim)
    b_grid: np.ndarray
    a_en_grid: np.ndarray
    b_en_grid: np.ndarray


@dataclass
class DressedRates:
    """Reservoir-dressed transition operators on the Floquet time grid.

    All weights are evaluated with the residual spectral density of the
    mapped model (flat 2*delta for Lorentzian inputs), never the original one.
    """

    basis: FloquetBasis
    reservoirs: dict[str, ReservoirSpec]
    per_reservoir: dict[str, _ReservoirRates] = field(repr=False)

    def eta_sum(self, label: str) -> np.ndarray:
        """Grid operator A(t) = sum_n e^{-i n w t} eta_n(t)."""
        return self.per_reservoir[label].a_grid

    def theta_sum(self, label: str) -> np.ndarray:
        return self.per_reservoir[label].b_grid

    def eta_energy_sum(self, label: str) -> np.ndarray:
        return self.per_reservoir[label].a_en_grid

    def theta_energy_sum(self, label: str) -> np.ndarray:
        return self.per_reservoir[label].b_en_grid

    def eta_n(self, label: str, n: int) -> np.ndarray:
        """Single harmonic operator eta_n on the grid, shape (n_t, dim, dim)."""
        r = self.per_reservoir[label]
        i = n + r.harm.n_h
        if i < 0 or i >= r.n_eta.shape[0]:
            return np.zeros_like(r.a_grid)
        v = self.basis.modes
        return np.einsum("til,lk,tjk->tij", v, r.n_eta[i], v.conj())

    def theta_n(self, label: str, n: int) -> np.ndarray:
        r = self.per_reservoir[label]
        i = n + r.harm.n_h
        if i < 0 or i >= r.n_theta.shape[0]:
            return np.zeros_like(r.b_grid)
        v = self.basis.modes
        return np.einsum("til,lk,tjk->tij", v, r.n_theta[i], v.conj())


def build_dressed_rates(basis: FloquetBasis, coupling_ops: dict[str, np.ndarray],
                        reservoirs: dict[str, ReservoirSpec],
                        n_h: int | None = None, tol: float = 1e-8) -> DressedRates:
    """Assemble absorption / emission operators for each residual reservoir.

    `coupling_ops` maps reservoir labels to the system operator entering the
    interaction (the RC annihilators for the mapped pump).  Weights are
    J_res(Delta) f(Delta) / 2 for absorption and J_res(Delta) (1 - f_nu) / 2
    for emission; the energy-weighted families carry an extra factor Delta.
    """
    per = {}
    v = basis.modes
    times = basis.times
    for label, d_op in coupling_ops.items():
        res = reservoirs[label]
        harm = decompose_operator(d_op, basis, n_h=n_h, tol=tol)
        ns = harm.harmonics
        # layout [l, k]: Delta_{k,l,n} and s_{l,k,-n}
        deltas = np.stack([harm.delta(n).T for n in ns])
        s_rev = np.stack([harm.coeff(-n) for n in ns])
        jval = sd_eval(res.sd, deltas)
        occ = fermi(deltas, res)
        n_eta = 0.5 * jval * occ * s_rev
        n_theta = 0.5 * jval * (1.0 - occ) * s_rev
        n_eta_en = deltas * n_eta
        n_theta_en = deltas * n_theta
        phases = np.exp(-1j * np.outer(times, ns * basis.omega))  # (n_t, n)
        grids = []
        for tensor in (n_eta, n_theta, n_eta_en, n_theta_en):
            core = np.einsum("tn,nlk->tlk", phases, tensor)
            grids.append(np.einsum("til,tlk,tjk->tij", v, core, v.conj()))
        per[label] = _ReservoirRates(
            harm=harm, d_op=d_op, deltas=deltas, s_rev=s_rev,
            n_eta=n_eta, n_theta=n_theta, n_eta_en=n_eta_en,
            n_theta_en=n_theta_en,
            a_grid=grids[0], b_grid=grids[1],
            a_en_grid=grids[2], b_en_grid=grids[3],
        )
    return DressedRates(basis=basis, reservoirs=dict(reservoirs), per_reservoir=per)


@dataclass
class LiouvillianHarmonics:
    """Fourier components of the generator plus counting-field derivatives.

    `l_k[i]` is the superoperator component for harmonic `k_values[i]`; the
    retained band satisfies `truncation_resid` <= requested tolerance relative
    to the largest component.  Counting field sits on `counting` (left
    reservoir by default).
    """

    rates: DressedRates
    h_grid: np.ndarray = field(repr=False)
    l_grid: np.ndarray = field(repr=False)
    l_k: np.ndarray = field(repr=False)
    k_values: np.ndarray
    counting: str
    truncation_resid: float

    @property
    def omega(self) -> float:
        return self.rates.basis.omega

    @property
    def dim(self) -> int:
        return self.rates.basis.dim

    @property
    def n_t(self) -> int:
        return self.rates.basis.n_t

    def liouville_t(self, t: float) -> np.ndarray:
        """Generator at arbitrary t by Fourier interpolation of the band."""
        ph = np.exp(1j * self.k_values * self.omega * t)
        return np.einsum("k,kab->ab", ph, self.l_k)

    def _ab_at(self, t: float, label: str):
        r = self.rates.per_reservoir[label]
        basis = self.rates.basis
        n_t = basis.n_t
        # Fourier interpolation of the A / B grids (periodic, band-limited)
        for name in ("_ab_fft",):
            if not hasattr(r, name):
                setattr(r, name, (np.fft.fft(r.a_grid, axis=0) / n_t,
                                  np.fft.fft(r.b_grid, axis=0) / n_t))
        fa, fb = r._ab_fft
        ks = np.fft.fftfreq(n_t, d=1.0 / n_t)
        ph = np.exp(1j * ks * self.omega * t)
        return np.einsum("k,kij->ij", ph, fa), np.einsum("k,kij->ij", ph, fb)

    def jump_derivatives_t(self, t: float):
        """(J'(t), J''(t)) superoperators for the counted reservoir."""
        a, b = self._ab_at(t, self.counting)
        d_op = self.rates.per_reservoir[self.counting].d_op
        dd = d_op.conj().T
        absorb = (_sandwich(dd[None], a[None]) + _sandwich(a.conj().T[None], d_op[None]))[0]
        emit = (_sandwich(d_op[None], b.conj().T[None]) + _sandwich(b[None], dd[None]))[0]
        return absorb - emit, absorb + emit

    def jump_xi_t(self, t: float, xi: float) -> np.ndarray:
        """Full counting superoperator J(xi, t); satisfies J(0, t) = 0."""
        a, b = self._ab_at(t, self.counting)
        d_op = self.rates.per_reservoir[self.counting].d_op
        dd = d_op.conj().T
        absorb = (_sandwich(dd[None], a[None]) + _sandwich(a.conj().T[None], d_op[None]))[0]
        emit = (_sandwich(d_op[None], b.conj().T[None]) + _sandwich(b[None], dd[None]))[0]
        return (np.exp(1j * xi) - 1.0) * absorb + (np.exp(-1j * xi) - 1.0) * emit


def _dissipator_grid(d_op: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Grid superoperator of the four commutator groups for one reservoir."""
    n_t = a.shape[0]
    dd = np.broadcast_to(d_op.conj().T, a.shape)
    do = np.broadcast_to(d_op, a.shape)
    adag = np.swapaxes(a, -1, -2).conj()
    bdag = np.swapaxes(b, -1, -2).conj()
    out = _sandwich(dd, a)
    out -= _spost(np.einsum("tij,tjk->tik", a, dd))
    out += _sandwich(b, dd)
    out -= _spre(np.einsum("tij,tjk->tik", dd, b))
    out += _sandwich(adag, do)
    out -= _spre(np.einsum("tij,tjk->tik", do, adag))
    out += _sandwich(do, bdag)
    out -= _spost(np.einsum("tij,tjk->tik", bdag, do))
    return out


def build_liouvillian(rates: DressedRates, h_func, counting: str = "L",
                      k_tol: float = 1e-12) -> LiouvillianHarmonics:
    """Assemble the generator on the grid and extract its Fourier band.

    `h_func` maps a time array to the stacked system Hamiltonian; `counting`
    names the reservoir carrying the counting field.  Components below
    `k_tol` (relative to the largest one) are dropped from the band.
    """
    basis = rates.basis
    times = basis.times
    h_grid = np.asarray(h_func(times), dtype=complex)
    l_grid = -1j * (_spre(h_grid) - _spost(h_grid))
    for label, r in rates.per_reservoir.items():
        l_grid += _dissipator_grid(r.d_op, r.a_grid, r.b_grid)
    n_t = times.size
    l_all = np.fft.fft(l_grid, axis=0) / n_t
    norms = np.abs(l_all).max(axis=(1, 2))
    scale = norms.max()
    ks = np.fft.fftfreq(n_t, d=1.0 / n_t).astype(int)
    keep = norms > k_tol * scale
    k_max = int(np.abs(ks[keep]).max()) if keep.any() else 0
    k_values = np.arange(-k_max, k_max + 1)
    l_k = l_all[k_values % n_t]
    resid = float(norms[~np.isin(ks, k_values)].sum() / scale) if k_max * 2 + 1 < n_t else 0.0
    return LiouvillianHarmonics(
        rates=rates, h_grid=h_grid, l_grid=l_grid, l_k=l_k,
        k_values=k_values, counting=counting, truncation_resid=resid,
    )


@dataclass
class PeriodicState:
    """Fourier components rho_n of the long-time periodic density matrix."""

    omega: float
    rho_n: np.ndarray  # (2 n_max + 1, dim, dim), index n + n_max
    n_max: int
    tail_norm: float

    @property
    def dim(self) -> int:
        return self.rho_n.shape[-1]

    def component(self, n: int) -> np.ndarray:
        if abs(n) > self.n_max:
            return np.zeros_like(self.rho_n[0])
        return self.rho_n[n + self.n_max]

    def rho_t(self, t) -> np.ndarray:
        t = np.asarray(t, float)
        scalar = t.ndim == 0
        ns = np.arange(-self.n_max, self.n_max + 1)
        ph = np.exp(1j * np.outer(np.atleast_1d(t), ns * self.omega))
        out = np.einsum("tn,nij->tij", ph, self.rho_n)
        return out[0] if scalar else out

    def grid(self, n_t: int) -> np.ndarray:
        period = 2.0 * np.pi / self.omega
        return self.rho_t(np.arange(n_t) * period / n_t)

    def min_population(self, n_t: int = 256) -> float:
        """Most negative population over one period (positivity diagnostic)."""
        diag = np.diagonal(self.grid(n_t), axis1=-2, axis2=-1).real
        return float(diag.min())


def solve_periodic_state(liouv: LiouvillianHarmonics, n_max: int | None = None,
                         tail_tol: float = 1e-8, n_limit: int = 512,
                         subspace: np.ndarray | None = None) -> PeriodicState:
    """Solve i n w rho_n = sum_k L_k rho_{n-k} with Tr(rho_0) = 1.

    One scalar row of the n = 0 block is replaced by the normalization row.
    `n_max` grows geometrically until the relative tail norm ||rho_{n_max}||
    drops below `tail_tol` (or `n_limit` is reached, which raises).

    `subspace` may list vectorized-matrix indices of an invariant subspace
    (e.g. the number-block-diagonal part for a number-conserving model); the
    solve is then restricted to it, which is exact once the leak check passes.
    """
    dim = liouv.dim
    d2 = dim * dim
    omega = liouv.omega
    if subspace is None:
        idx = np.arange(d2)
    else:
        idx = np.asarray(subspace, dtype=int)
        comp = np.setdiff1d(np.arange(d2), idx)
        if comp.size:
            scale = np.abs(liouv.l_k).max()
            leak = np.abs(liouv.l_k[:, comp[:, None], idx[None, :]]).max()
            if leak > 1e-9 * scale:
                raise ValueError(
                    f"requested subspace is not invariant (leak {leak:.2e})"
                )
    d2e = idx.size
    blocks = liouv.l_k[:, idx[:, None], idx[None, :]]
    trace_pos = np.nonzero(np.isin(idx, np.arange(dim) * dim + np.arange(dim)))[0]
    k_max = (liouv.k_values.size - 1) // 2
    if n_max is None:
        n_max = max(2 * k_max, 4)
    n_max = min(n_max, n_limit)
    while True:
        nb = 2 * n_max + 1
        rows_idx, cols_idx, vals = [], [], []
        for i, k in enumerate(liouv.k_values):
            block = blocks[i]
            nz = np.nonzero(np.abs(block) > 1e-300)
            if nz[0].size == 0:
                continue
            for n in range(-n_max, n_max + 1):
                m = n - k
                if m < -n_max or m > n_max:
                    continue
                rows_idx.append(nz[0] + (n + n_max) * d2e)
                cols_idx.append(nz[1] + (m + n_max) * d2e)
                vals.append(block[nz])
        diag = np.arange(nb * d2e)
        rows_idx.append(diag)
        cols_idx.append(diag)
        vals.append(np.repeat(-1j * omega * np.arange(-n_max, n_max + 1), d2e))
        mat = sp.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows_idx), np.concatenate(cols_idx))),
            shape=(nb * d2e, nb * d2e), dtype=complex,
        ).tolil()
        norm_row = n_max * d2e  # first scalar equation of the n = 0 block
        mat.rows[norm_row] = list(n_max * d2e + trace_pos)
        mat.data[norm_row] = [1.0 + 0.0j] * trace_pos.size
        rhs = np.zeros(nb * d2e, dtype=complex)
        rhs[norm_row] = 1.0
        sol = spla.spsolve(mat.tocsc(), rhs)
        red = sol.reshape(nb, d2e)
        scale = np.linalg.norm(red[n_max])
        tail = max(np.linalg.norm(red[0]), np.linalg.norm(red[-1])) / scale
        if tail <= tail_tol or n_max >= n_limit:
            break
        n_max = min(max(int(n_max * 1.6) + 1, n_max + 4), n_limit)
    if tail > tail_tol:
        raise RuntimeError(
            f"harmonic tail {tail:.2e} above {tail_tol:.1e} at n_max = {n_max}; "
            "raise n_limit"
        )
    rho_n = np.zeros((nb, d2), dtype=complex)
    rho_n[:, idx] = red
    rho_n = rho_n.reshape(nb, dim, dim)
    return PeriodicState(omega=omega, rho_n=rho_n, n_max=n_max, tail_norm=float(tail))


def _current_grid(rho_grid, d_op, a_grid, b_grid) -> np.ndarray:
    dd = d_op.conj().T
    term = np.einsum("ij,tjk,tki->t", dd, rho_grid, a_grid)
    term += np.einsum("tij,tjk,ki->t", np.swapaxes(a_grid, 1, 2).conj(), rho_grid, d_op)
    term -= np.einsum("ij,tjk,tki->t", d_op, rho_grid, np.swapaxes(b_grid, 1, 2).conj())
    term -= np.einsum("tij,tjk,ki->t", b_grid, rho_grid, dd)
    return term.real


def matter_current(state: PeriodicState, rates: DressedRates, label: str = "L") -> np.ndarray:
    """Instantaneous matter current of one reservoir on the basis time grid.

    Positive values mean electrons leaving that reservoir into the system.
    """
    rho_grid = state.grid(rates.basis.n_t)
    r = rates.per_reservoir[label]
    return _current_grid(rho_grid, r.d_op, r.a_grid, r.b_grid)


def energy_current(state: PeriodicState, rates: DressedRates, label: str = "L") -> np.ndarray:
    """Energy current of one reservoir (positive = energy leaving the bath)."""
    rho_grid = state.grid(rates.basis.n_t)
    r = rates.per_reservoir[label]
    return _current_grid(rho_grid, r.d_op, r.a_en_grid, r.b_en_grid)


def pumped_charge(current: np.ndarray, omega: float) -> float:
    """Charge per period from a uniformly sampled periodic current."""
    return float(current.mean() * 2.0 * np.pi / omega)


def secular_generator(rates: DressedRates, counting: str = "L"):
    """Secularized generator and current superoperator in the mode frame.

    Keeping only matched transition-frequency pairs makes the generator
    time independent in the Floquet interaction picture: populations and
    coherences decouple.  Returns (l_sec, j_prime_sec) acting on vectorized
    mode-basis density matrices.
    """
    basis = rates.basis
    dim = basis.dim
    d2 = dim * dim
    l_sec = np.zeros((d2, d2), dtype=complex)
    j_prime = np.zeros((d2, d2), dtype=complex)
    eye = np.eye(dim)
    for label, r in rates.per_reservoir.items():
        jf = 2.0 * (r.n_eta * r.s_rev.conj()).real    # J f |s|^2, layout [n, l, k]
        jfbar = 2.0 * (r.n_theta * r.s_rev.conj()).real
        rab = jf.sum(axis=0)     # absorption rate for jump |l><k|
        rem = jfbar.sum(axis=0)  # emission rate for jump |k><l|
        gain = np.zeros((d2, d2))
        idx = np.arange(dim)
        pop_rows = (idx[:, None] * dim + idx[:, None]).repeat(dim, axis=1)
        pop_cols = (idx[None, :] * dim + idx[None, :]).repeat(dim, axis=0)
        gain[pop_rows, pop_cols] += rab + rem.T
        loss_k = rab.sum(axis=0) + rem.T.sum(axis=0)  # total escape rate of |k>
        g_op = np.diag(loss_k)
        l_sec += gain - 0.5 * (_spre(g_op[None])[0] + _spost(g_op[None])[0])
        if label == counting:
            cross = np.zeros((d2, d2))
            cross[pop_rows, pop_cols] += rab - rem.T
            j_prime += cross
    return l_sec, j_prime


def secular_average_current(rates: DressedRates, counting: str = "L") -> float:
    """Period-averaged counted current of the secular master equation."""
    l_sec, j_prime = secular_generator(rates, counting)
    dim = rates.basis.dim
    d2 = dim * dim
    mat = l_sec.copy()
    norm_row = 0
    mat[norm_row] = 0.0
    mat[norm_row, [i * dim + i for i in range(dim)]] = 1.0
    rhs = np.zeros(d2, dtype=complex)
    rhs[norm_row] = 1.0
    rho_ss = np.linalg.solve(mat, rhs)
    trace_vec = np.zeros(d2)
    trace_vec[[i * dim + i for i in range(dim)]] = 1.0
    return float((trace_vec @ (j_prime @ rho_ss)).real)
