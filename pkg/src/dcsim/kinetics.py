"""Local kinetic rates: beam intensity, photo-transition and capture rates.

Grid-level rate tables are precomputed here once per protocol step (beams
are static within a step) and handed to the kernels; the single-cell
``kinetics_substep`` entry point drives the same kernel on a 1x1 grid.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import ConfigError
from .units import photon_flux


@dataclass(frozen=True)
class Beam:
    wavelength_nm: float
    power_mw: float
    waist_um: float
    center_um: tuple = (0.0, 0.0)

    def __post_init__(self):
        if self.power_mw < 0:
            raise ConfigError("beam power must be >= 0")
        if self.waist_um <= 0:
            raise ConfigError("beam waist must be > 0")

    def peak_intensity(self):
        return 2.0 * self.power_mw / (np.pi * self.waist_um**2)


def beam_intensity(beam, x_um, y_um):
    """Gaussian intensity I(r) = (2P/(pi w^2)) exp(-2 r^2 / w^2) in mW/um^2."""
    r2 = (np.asarray(x_um) - beam.center_um[0]) ** 2 + (
        np.asarray(y_um) - beam.center_um[1]
    ) ** 2
    return beam.peak_intensity() * np.exp(-2.0 * r2 / beam.waist_um**2)


def photo_rate(transition, intensity_mw_um2, wavelength_nm, reference_intensity=1.0):
    """Transition rate in 1/s; zero below threshold, linear in intensity for
    single-photon transitions and quadratic for two-photon ones."""
    sigma = transition.cross_section_um2(wavelength_nm)
    rate = sigma * photon_flux(intensity_mw_um2, wavelength_nm)
    if transition.two_photon:
        rate = rate * (intensity_mw_um2 / reference_intensity)
    return rate


def capture_rate(channel, carrier_density_um3):
    """Capture rate per defect in 1/s for a carrier density in um^-3."""
    return channel.coefficient_um3_s * carrier_density_um3


def grid_coordinates(grid):
    """Cell-center coordinates (x, y) in um, origin at the grid center."""
    x = (np.arange(grid.nx) + 0.5) * grid.dx_um - grid.nx * grid.dx_um / 2.0
    y = (np.arange(grid.ny) + 0.5) * grid.dx_um - grid.ny * grid.dx_um / 2.0
    return x, y


def compute_rate_grids(registry, beams):
    """Per-transition photo-rate grids, tunnel gates, and the drive mask.

    Returns (ph_rate[T,ny,nx], tn_gate[K,ny,nx], drive_any[ny,nx] uint8).
    """
    grid = registry.grid
    tab = registry.tables
    T = len(tab.ph_from)
    K = len(tab.tn_src_from)
    ph = np.zeros((grid.ny, grid.nx, T))
    tn = np.zeros((grid.ny, grid.nx, K))
    if beams:
        x, y = grid_coordinates(grid)
        X, Y = np.meshgrid(x, y)
        iref = registry.medium.two_photon_reference_mw_um2
        floor_rel = registry.engine.intensity_floor_rel
        total_intensity = np.zeros((grid.ny, grid.nx))
        intensities = []
        for beam in beams:
            inten = beam_intensity(beam, X, Y)
            if floor_rel > 0:
                inten[inten < floor_rel * beam.peak_intensity()] = 0.0
            intensities.append(inten)
            total_intensity += inten
        transitions = list(registry.photo_transitions())
        for t, (sp, tr) in enumerate(transitions):
            acc = ph[:, :, t]
            for beam, inten in zip(beams, intensities):
                sigma = tr.cross_section_um2(beam.wavelength_nm)
                if sigma == 0.0:
                    continue
                rate = sigma * photon_flux(inten, beam.wavelength_nm)
                if tr.two_photon:
                    rate = rate * (inten / iref)
                acc += rate
        k = 0
        for sp in registry.species:
            if sp.is_trap and sp.tunnel_capture is not None:
                s = total_intensity / sp.tunnel_capture.saturation_intensity_mw_um2
                tn[:, :, k] = sp.tunnel_capture.coefficient_um3_s * (s / (1.0 + s))
                k += 1
    drive = np.zeros((grid.ny, grid.nx), dtype=np.uint8)
    if T:
        drive |= (ph > 0.0).any(axis=2)
    if K:
        drive |= (tn > 0.0).any(axis=2)
    return ph, tn, drive


def tunnel_bounds(registry):
    """Species total densities entering the tunnel-rate stability bound."""
    tab = registry.tables
    K = len(tab.tn_src_from)
    src_tot = np.zeros(K)
    trap_tot = np.zeros(K)
    for k in range(K):
        src_tot[k] = tab.species_density[tab.state_species[tab.tn_src_from[k]]]
        trap_tot[k] = tab.species_density[tab.state_species[tab.tn_empty[k]]]
    return src_tot, trap_tot


@dataclass
class CellKinetics:
    """State of a single cell: defect state densities, carriers, illumination."""

    densities: dict
    n_e: float = 0.0
    n_h: float = 0.0
    illumination: tuple = ()        # ((wavelength_nm, intensity_mw_um2), ...)


def kinetics_substep(cell, dt, registry):
    """Advance one cell by dt; returns (new CellKinetics, tally dict).

    Pure with respect to its arguments; sub-cycles internally so that the
    per-subcycle outflow fraction of any reservoir stays below the
    configured cap.
    """
    tab = registry.tables
    S = tab.n_states
    dens = np.zeros((1, 1, S))
    for label, value in cell.densities.items():
        dens[0, 0, tab.state_index(label)] = value
    ne = np.full((1, 1), cell.n_e)
    nh = np.full((1, 1), cell.n_h)

    T = len(tab.ph_from)
    ph = np.zeros((1, 1, T))
    iref = registry.medium.two_photon_reference_mw_um2
    for t, (sp, tr) in enumerate(registry.photo_transitions()):
        for lam, inten in cell.illumination:
            ph[0, 0, t] += photo_rate(tr, inten, lam, iref)
    K = len(tab.tn_src_from)
    tn = np.zeros((1, 1, K))
    total_i = sum(i for _, i in cell.illumination)
    k = 0
    for sp in registry.species:
        if sp.is_trap and sp.tunnel_capture is not None:
            s = total_i / sp.tunnel_capture.saturation_intensity_mw_um2
            tn[0, 0, k] = sp.tunnel_capture.coefficient_um3_s * (s / (1.0 + s))
            k += 1
    drive = np.ones((1, 1), dtype=np.uint8)
    src_tot, trap_tot = tunnel_bounds(registry)

    ledger = np.zeros(kernels.LEDGER_SLOTS)
    status = kernels.kinetics_grid(
        dens, ne, nh, drive,
        tab.ph_from, tab.ph_to, tab.ph_carrier, ph,
        tab.cp_from, tab.cp_to, tab.cp_carrier, tab.cp_coef,
        tab.tn_src_from, tab.tn_src_to, tab.tn_empty, tab.tn_filled,
        src_tot, trap_tot, tn,
        tab.rl_from, tab.rl_to, tab.rl_carrier, tab.rl_rate,
        dt, registry.engine.kinetics_rate_cap,
        registry.engine.max_kinetics_substeps, 0.0, ledger,
    )
    if status != 0:
        from .errors import StabilityViolation

        raise StabilityViolation(
            "kinetics sub-cycling exceeded the configured substep limit"
        )
    new = CellKinetics(
        densities={lbl: float(dens[0, 0, i]) for i, lbl in enumerate(tab.state_labels)},
        n_e=float(ne[0, 0]),
        n_h=float(nh[0, 0]),
        illumination=cell.illumination,
    )
    tally = {
        "created_e": ledger[0],
        "created_h": ledger[1],
        "captured_e": ledger[2],
        "captured_h": ledger[3],
        "clamp_events": ledger[6],
        "max_subcycles": ledger[7],
    }
    return new, tally
