"""Unit conventions and conversions.

Internal unit system: lengths in um, time in s, optical power in mW,
intensity in mW/um^2, photon energy in eV, densities in um^-3, capture
coefficients in um^3/s.  Cross sections are configured in cm^2 and
converted to um^2 on ingestion.
"""

import numpy as np

# hc in eV*nm
HC_EV_NM = 1239.84

# 1 mW = 1e-3 J/s; 1 eV = 1.602176634e-19 J  ->  eV per s per mW
EV_PER_S_PER_MW = 1e-3 / 1.602176634e-19

CM2_TO_UM2 = 1e8

# vacuum permittivity in elementary charges per volt per um
EPS0_E_PER_V_UM = 8.8541878128e-12 / 1.602176634e-19 * 1e-6


def photon_energy(wavelength_nm):
    """Photon energy in eV for a wavelength in nm."""
    if np.any(np.asarray(wavelength_nm) <= 0):
        raise ValueError("wavelength must be positive")
    return HC_EV_NM / wavelength_nm


def ppb_to_density(concentration_ppb, host_atom_density_cm3):
    """Convert a ppb number fraction of host atoms to a density in um^-3."""
    if np.any(np.asarray(concentration_ppb) < 0):
        raise ValueError("concentration must be non-negative")
    return concentration_ppb * 1e-9 * host_atom_density_cm3 * 1e-12


def photon_flux(intensity_mw_um2, wavelength_nm):
    """Photon flux in photons/(um^2 s) for an intensity in mW/um^2."""
    return intensity_mw_um2 * EV_PER_S_PER_MW / photon_energy(wavelength_nm)
