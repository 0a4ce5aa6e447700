"""Physical constants and unit conversions.

Repo-wide units: nm for lengths, ns for times, keV for photon energies,
rad for angles.  Rates are in ns^-1.
"""

import math

HBAR_NEV_NS = 658.2119569  # reduced Planck constant in neV*ns
HC_KEV_NM = 1.239841984  # h*c in keV*nm
C_NM_PER_NS = 2.99792458e8  # speed of light in nm/ns

FE57_ENERGY_KEV = 14.4125
FE57_GAMMA_NEV = 4.7
FE57_LAMBDA_RES_NM = 47.0

REPETITION_PERIOD_NS = 192.0


def wavelength(energy_kev):
    """Vacuum wavelength (nm) for a photon energy in keV."""
    return HC_KEV_NM / energy_kev


def wavenumber(energy_kev):
    """Vacuum wavenumber k0 = 2*pi/lambda (nm^-1)."""
    return 2.0 * math.pi / wavelength(energy_kev)


def linewidth_to_rate(gamma_nev):
    """Convert a natural linewidth hbar*gamma (neV) to a decay rate (ns^-1)."""
    return gamma_nev / HBAR_NEV_NS


def lifetime(gamma_nev):
    """Natural lifetime tau = hbar / (hbar*gamma) in ns."""
    return HBAR_NEV_NS / gamma_nev


FE57_GAMMA = linewidth_to_rate(FE57_GAMMA_NEV)
FE57_LIFETIME_NS = lifetime(FE57_GAMMA_NEV)
FE57_K0 = wavenumber(FE57_ENERGY_KEV)
