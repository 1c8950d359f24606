"""Spectral densities, reservoirs, driving protocols and the reaction-coordinate mapping.

Unit conventions: all energies in units of the static dot energy, hbar = 1,
time in inverse energy.  Every type here is immutable and every function is
pure, so they are safe to share across sweep workers.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "LorentzianSD",
    "TabulatedSD",
    "FlatSD",
    "SpectralDensity",
    "ReservoirSpec",
    "DrivingProtocol",
    "RCParameters",
    "sd_eval",
    "rc_map_lorentzian",
    "rc_map_generic",
    "fermi",
    "load_tabulated_sd",
    "save_tabulated_sd",
]


@dataclass(frozen=True)
class LorentzianSD:
    """Lorentzian spectral density Gamma * delta^2 / ((w - center)^2 + delta^2).

    `coupling` is the peak value (the bare system-bath coupling strength),
    `width` the half-width at half maximum, `center` the peak position.
    """

    coupling: float
    width: float
    center: float = 0.0

    kind = "lorentzian"

    def __post_init__(self):
        if self.coupling < 0.0:
            raise ValueError(f"coupling must be >= 0, got {self.coupling}")
        if self.width <= 0.0:
            raise ValueError(f"width must be > 0, got {self.width}")


@dataclass(frozen=True)
class TabulatedSD:
    """Spectral density sampled on a strictly increasing frequency grid.

    Evaluated by linear interpolation inside the grid; treated as compactly
    supported (identically zero outside the grid) for all moment integrals.
    """

    omega: np.ndarray
    values: np.ndarray

    kind = "tabulated"

    def __post_init__(self):
        object.__setattr__(self, "omega", np.asarray(self.omega, dtype=float))
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))
        if self.omega.ndim != 1 or self.omega.shape != self.values.shape:
            raise ValueError("omega and values must be 1-d arrays of equal length")
        if self.omega.size < 2:
            raise ValueError("need at least two samples")
        if not np.all(np.diff(self.omega) > 0):
            raise ValueError("frequency grid must be strictly increasing")
        if np.any(self.values < 0):
            raise ValueError("tabulated spectral density must be non-negative")


@dataclass(frozen=True)
class FlatSD:
    """Frequency-independent spectral density (residual bath after the mapping)."""

    value: float

    kind = "flat"

    def __post_init__(self):
        if self.value < 0.0:
            raise ValueError(f"value must be >= 0, got {self.value}")


SpectralDensity = LorentzianSD | TabulatedSD | FlatSD


def sd_eval(sd: SpectralDensity, omega) -> np.ndarray | float:
    """Evaluate J(omega).  Accepts scalars or arrays of frequencies.

    Lorentzian and flat kinds are closed-form; tabulated kind is linearly
    interpolated and raises for frequencies outside its grid.
    """
    w = np.asarray(omega, dtype=float)
    if not np.all(np.isfinite(w)):
        raise ValueError("frequency must be finite")
    if sd.kind == "lorentzian":
        out = sd.coupling * sd.width**2 / ((w - sd.center) ** 2 + sd.width**2)
    elif sd.kind == "flat":
        out = np.broadcast_to(float(sd.value), w.shape).copy()
    else:
        if np.any(w < sd.omega[0]) or np.any(w > sd.omega[-1]):
            raise ValueError(
                f"frequency outside tabulated range [{sd.omega[0]}, {sd.omega[-1]}]"
            )
        out = np.interp(w, sd.omega, sd.values)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class ReservoirSpec:
    """Thermodynamic state and spectral density of one reservoir."""

    beta: float
    mu: float
    sd: SpectralDensity
    label: str = "L"

    def __post_init__(self):
        if self.beta <= 0.0:
            raise ValueError(f"inverse temperature must be > 0, got {self.beta}")
        if self.label not in ("L", "R"):
            raise ValueError(f"label must be 'L' or 'R', got {self.label!r}")


@dataclass(frozen=True)
class DrivingProtocol:
    """Harmonic driving of the dot energy and of both tunneling amplitudes.

    eps(t) = eps0 + a0 cos(Omega t + phi); the tunneling amplitudes factorize
    as t_k(t) = [1 +- a_(L/R) cos(Omega t)] t_k (plus for the left bath, so
    the left barrier is open at t = 0), and after the mapping only the
    couplings inherit the drive while the reaction-coordinate energies stay
    constant.  With this phase assignment phi = pi/2 pumps left to right in
    the slow-driving regime.
    """

    omega: float
    a0: float = 0.0
    phi: float = 0.0
    a_left: float = 1.0
    a_right: float = 1.0
    eps0: float = 1.0

    def __post_init__(self):
        if self.omega <= 0.0:
            raise ValueError(f"driving frequency must be > 0, got {self.omega}")

    @property
    def period(self) -> float:
        return 2.0 * np.pi / self.omega

    def dot_energy(self, t):
        return self.eps0 + self.a0 * np.cos(self.omega * np.asarray(t, float) + self.phi)

    def left_factor(self, t):
        return 1.0 + self.a_left * np.cos(self.omega * np.asarray(t, float))

    def right_factor(self, t):
        return 1.0 - self.a_right * np.cos(self.omega * np.asarray(t, float))


@dataclass(frozen=True)
class RCParameters:
    """Result of the reaction-coordinate mapping for one reservoir.

    `coupling` is the dot-RC tunneling amplitude, `energy` the RC level, and
    `residual` the spectral density seen by the RC (flat 2*delta for a
    Lorentzian input, tabulated otherwise).
    """

    coupling: float
    energy: float
    residual: SpectralDensity = field(default_factory=lambda: FlatSD(0.0))

    def __post_init__(self):
        if self.coupling < 0.0:
            raise ValueError(f"RC coupling must be >= 0, got {self.coupling}")


def rc_map_lorentzian(sd: LorentzianSD) -> RCParameters:
    """Closed-form mapping of a Lorentzian bath onto a reaction coordinate.

    coupling = sqrt(Gamma * delta / 2), RC energy = peak position, and the
    residual bath is exactly flat with value 2*delta.
    """
    if sd.kind != "lorentzian":
        raise TypeError("rc_map_lorentzian requires a Lorentzian spectral density")
    lam = np.sqrt(sd.coupling * sd.width / 2.0)
    return RCParameters(coupling=lam, energy=sd.center, residual=FlatSD(2.0 * sd.width))


def _trapz(y: np.ndarray, x: np.ndarray) -> float:
    return float(np.trapezoid(y, x))


def _principal_value(omega: np.ndarray, j: np.ndarray) -> np.ndarray:
    """P.V. of int J(w') / (w' - w) dw' for every grid point w, by singularity
    subtraction: the regularized integrand [J(w') - J(w)] / (w' - w) is
    integrated with the trapezoid rule and the removed pole contributes the
    analytic term J(w) * log((b - w) / (w - a)) on the truncated support.
    Interior points only; the endpoints reuse their neighbours' log argument
    clipped away from zero.
    """
    n = omega.size
    out = np.empty(n)
    a, b = omega[0], omega[-1]
    # slope used for the removable singularity at w' == w
    slope = np.gradient(j, omega)
    chunk = 256
    for start in range(0, n, chunk):
        sl = slice(start, min(start + chunk, n))
        w = omega[sl][:, None]
        diff = omega[None, :] - w
        with np.errstate(divide="ignore", invalid="ignore"):
            integrand = (j[None, :] - j[sl][:, None]) / diff
        rows, cols = np.nonzero(diff == 0.0)
        integrand[rows, cols] = slope[sl][rows]
        pv = np.trapezoid(integrand, omega, axis=1)
        # log term of the subtracted pole; guard the endpoints
        upper = np.maximum(b - omega[sl], 1e-300)
        lower = np.maximum(omega[sl] - a, 1e-300)
        out[sl] = pv + j[sl] * np.log(upper / lower)
    return out


def rc_map_generic(sd: TabulatedSD) -> RCParameters:
    """Quadrature-based mapping of a tabulated bath onto a reaction coordinate.

    coupling^2 and the RC energy are the zeroth and first moments of J / 2 pi;
    the residual density is 4 lam^2 J(w) / ([P.V. integral / pi]^2 + J(w)^2)
    evaluated on the input grid.
    """
    if sd.kind != "tabulated":
        raise TypeError("rc_map_generic requires a tabulated spectral density")
    w, j = sd.omega, sd.values
    zeroth = _trapz(j, w)
    if zeroth <= 0.0:
        raise ValueError("spectral density integrates to zero; nothing to map")
    lam_sq = zeroth / (2.0 * np.pi)
    energy = _trapz(w * j, w) / zeroth
    pv = _principal_value(w, j)
    denom = (pv / np.pi) ** 2 + j**2
    with np.errstate(divide="ignore", invalid="ignore"):
        resid = np.where(denom > 0.0, 4.0 * lam_sq * j / denom, 0.0)
    return RCParameters(
        coupling=float(np.sqrt(lam_sq)),
        energy=float(energy),
        residual=TabulatedSD(w.copy(), resid),
    )


def fermi(omega, res: ReservoirSpec | None = None, *, beta: float | None = None,
          mu: float | None = None):
    """Fermi function 1 / (exp(beta (w - mu)) + 1), overflow-safe.

    Pass either a ReservoirSpec or explicit beta / mu keywords.
    """
    if res is not None:
        beta, mu = res.beta, res.mu
    if beta is None or mu is None:
        raise TypeError("fermi needs a ReservoirSpec or beta and mu")
    x = beta * (np.asarray(omega, dtype=float) - mu)
    # tanh form is exact and symmetric: f(mu+x) + f(mu-x) == 1 in floating point
    out = 0.5 * (1.0 - np.tanh(0.5 * x))
    return out if out.ndim else float(out)


def load_tabulated_sd(path) -> TabulatedSD:
    """Read a two-column (omega, J) text file; '#' starts a comment line."""
    data = np.loadtxt(path, comments="#", ndmin=2)
    if data.shape[1] < 2:
        raise ValueError(f"{path}: expected two numeric columns")
    return TabulatedSD(data[:, 0], data[:, 1])


def save_tabulated_sd(sd: TabulatedSD, path, header: str = "") -> None:
    np.savetxt(path, np.column_stack([sd.omega, sd.values]), header=header)
