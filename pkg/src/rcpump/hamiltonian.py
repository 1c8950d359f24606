"""Driven triple-quantum-dot Hamiltonians: 3x3 single-particle matrices and the
8-dimensional Fock-space lift.

Basis conventions, pinned for reproducibility: single-particle order
(d_L, d, d_R); Fock states are occupation bitstrings |n_L n n_R> indexed as
4 n_L + 2 n + n_R, with the Jordan-Wigner string ordered left -> center ->
right.  The 3x3 matrix carries the couplings with a minus sign and the Fock
Hamiltonian with a plus sign; the two conventions are related by the gauge
d -> -d on the central dot, under which every observable is invariant.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import DrivingProtocol, RCParameters

__all__ = [
    "TQDParams",
    "driving_eval",
    "tqd_matrix",
    "fock_operators",
    "fock_hamiltonian",
    "NUMBER_SECTORS",
    "number_diagonal_indices",
]

_A = np.array([[0.0, 1.0], [0.0, 0.0]])  # annihilator on one mode
_Z = np.diag([1.0, -1.0])  # Jordan-Wigner sign
_I2 = np.eye(2)


def _kron3(a, b, c):
    return np.kron(np.kron(a, b), c)


#: Fock annihilation operators in the fixed bitstring basis, order (d_L, d, d_R).
D_LEFT = _kron3(_A, _I2, _I2)
D_CENTER = _kron3(_Z, _A, _I2)
D_RIGHT = _kron3(_Z, _Z, _A)

NUMBER_TOTAL = sum(op.conj().T @ op for op in (D_LEFT, D_CENTER, D_RIGHT))

#: Fock indices grouped by total particle number (dims 1, 3, 3, 1).
NUMBER_SECTORS = tuple(
    tuple(np.nonzero(np.diag(NUMBER_TOTAL).round().astype(int) == n)[0])
    for n in range(4)
)

def number_diagonal_indices() -> np.ndarray:
    """Vectorized-matrix indices of the number-block-diagonal subspace.

    Coherences between different total particle numbers never develop
    under number-conserving dynamics, so the density matrix lives on
    these 20 of the 64 row-major positions.
    """
    n = np.diag(NUMBER_TOTAL).round().astype(int)
    keep = n[:, None] == n[None, :]
    return np.nonzero(keep.reshape(-1))[0]


def fock_operators():
    """Return the (d_L, d, d_R) annihilators on the 8-dim Fock space."""
    return D_LEFT.copy(), D_CENTER.copy(), D_RIGHT.copy()


@dataclass(frozen=True)
class TQDParams:
    """Driven triple quantum dot: central dot plus two reaction coordinates.

    The RC energies are offset symmetrically by the energy bias:
    eps_R = eps0 + bias / 2, eps_L = eps0 - bias / 2.  If the RCParameters
    carry explicit energies they are ignored in favour of this parametrization
    unless `use_rc_energies` is set.
    """

    driving: DrivingProtocol
    rc_left: RCParameters
    rc_right: RCParameters
    bias: float = 0.0
    use_rc_energies: bool = False

    @property
    def eps_left(self) -> float:
        if self.use_rc_energies:
            return self.rc_left.energy
        return self.driving.eps0 - self.bias / 2.0

    @property
    def eps_right(self) -> float:
        if self.use_rc_energies:
            return self.rc_right.energy
        return self.driving.eps0 + self.bias / 2.0


def driving_eval(p: TQDParams, t):
    """Instantaneous (eps(t), lambda_L(t), lambda_R(t)); broadcasts over t."""
    d = p.driving
    eps = d.dot_energy(t)
    lam_l = p.rc_left.coupling * d.left_factor(t)
    lam_r = p.rc_right.coupling * d.right_factor(t)
    return eps, lam_l, lam_r


def tqd_matrix(p: TQDParams, t) -> np.ndarray:
    """3x3 single-particle matrix in the (d_L, d, d_R) basis; batched over t.

    Returns shape (3, 3) for scalar t or (len(t), 3, 3) otherwise.
    """
    eps, lam_l, lam_r = driving_eval(p, t)
    eps = np.asarray(eps, float)
    scalar = eps.ndim == 0
    eps, lam_l, lam_r = np.atleast_1d(eps, lam_l, lam_r)
    n = eps.shape[0]
    h = np.zeros((n, 3, 3))
    h[:, 0, 0] = p.eps_left
    h[:, 1, 1] = eps
    h[:, 2, 2] = p.eps_right
    h[:, 0, 1] = h[:, 1, 0] = -lam_l
    h[:, 1, 2] = h[:, 2, 1] = -lam_r
    return h[0] if scalar else h


def fock_hamiltonian(p: TQDParams, t) -> np.ndarray:
    """8x8 Fock-space Hamiltonian (plus-lambda convention); batched over t."""
    eps, lam_l, lam_r = driving_eval(p, t)
    eps = np.asarray(eps, float)
    scalar = eps.ndim == 0
    eps, lam_l, lam_r = np.atleast_1d(eps, lam_l, lam_r)
    n_l = D_LEFT.conj().T @ D_LEFT
    n_c = D_CENTER.conj().T @ D_CENTER
    n_r = D_RIGHT.conj().T @ D_RIGHT
    hop_l = D_CENTER @ D_LEFT.conj().T + D_LEFT @ D_CENTER.conj().T
    hop_r = D_CENTER @ D_RIGHT.conj().T + D_RIGHT @ D_CENTER.conj().T
    h = (
        eps[:, None, None] * n_c
        + p.eps_left * n_l
        + p.eps_right * n_r
        + lam_l[:, None, None] * hop_l
        + lam_r[:, None, None] * hop_r
    )
    return h[0] if scalar else h
