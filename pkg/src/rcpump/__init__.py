"""Electron pumping through a driven quantum dot strongly coupled to structured reservoirs.

Workflow: a Lorentzian (or tabulated) spectral density is mapped onto a
reaction coordinate, giving a driven triple quantum dot weakly coupled to flat
residual baths.  The high-frequency regime is handled by a non-secular Floquet
master equation with counting fields (`floquet`, `fme`), the low-frequency
regime by three parallel rate-equation channels (`adiabatic`), and both are
benchmarked against exact correlation-matrix dynamics with discretized baths
(`oracle`).  Charge and noise come from a generic counting-statistics engine
(`fcs`).  All energies are in units of the static dot energy, hbar = 1,
electron charge = 1.
"""

__version__ = "0.1.0"
