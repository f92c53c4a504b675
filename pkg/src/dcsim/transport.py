"""Spatial coupling: carrier diffusion, optional space-charge drift, and the
carrier sub-stepping loop within a macro time step.

Defect densities are immobile; only the itinerant electron/hole fields are
transported.  Geometry is a 2-D thin slab; all densities stay volumetric
(um^-3).
"""

from __future__ import annotations

import hashlib

import numpy as np

from . import kernels
from .errors import NonConvergence, StabilityViolation
from .kinetics import compute_rate_grids, tunnel_bounds
from .units import EPS0_E_PER_V_UM


class SimulationState:
    """Mutable grid state: per-(species,state) densities plus carriers."""

    def __init__(self, registry, dens, n_e, n_h, time=0.0, rho0=None):
        self.registry = registry
        self.dens = dens
        self.n_e = n_e
        self.n_h = n_h
        self.time = time
        if rho0 is None:
            rho0 = charge_density(registry, dens, n_e, n_h)
        self.rho0 = rho0
        self.ledger = np.zeros(kernels.LEDGER_SLOTS)

    def copy(self):
        st = SimulationState(
            self.registry,
            self.dens.copy(),
            self.n_e.copy(),
            self.n_h.copy(),
            self.time,
            self.rho0.copy(),
        )
        st.ledger = self.ledger.copy()
        return st

    def state_hash(self):
        hsh = hashlib.sha256()
        hsh.update(self.dens.tobytes())
        hsh.update(self.n_e.tobytes())
        hsh.update(self.n_h.tobytes())
        hsh.update(repr(self.time).encode())
        return hsh.hexdigest()

    def species_cell_totals(self, species_name):
        tab = self.registry.tables
        isp = tab.species_names.index(species_name)
        lo, hi = tab.species_slices[isp]
        return self.dens[:, :, lo:hi].sum(axis=2)

    def density(self, label):
        return self.dens[:, :, self.registry.tables.state_index(label)]


def charge_density(registry, dens, n_e, n_h):
    """Net charge in e/um^3 carried by defects and itinerant carriers."""
    q = registry.tables.state_charge
    rho = dens @ q
    rho += n_h
    rho -= n_e
    return rho


def build_initial_state(registry) -> SimulationState:
    grid = registry.grid
    tab = registry.tables
    dens = np.zeros((grid.ny, grid.nx, tab.n_states))
    for isp, sp in enumerate(registry.species):
        total = tab.species_density[isp]
        for label, frac in sp.initial_fractions.items():
            dens[:, :, tab.state_index(label)] += frac * total
    for patch in registry.initial_patches:
        _apply_patch(registry, dens, patch)
    n_e = np.zeros((grid.ny, grid.nx))
    n_h = np.zeros((grid.ny, grid.nx))
    return SimulationState(registry, dens, n_e, n_h)


def _patch_mask(registry, patch):
    from .kinetics import grid_coordinates

    x, y = grid_coordinates(registry.grid)
    X, Y = np.meshgrid(x, y)
    shape = patch.get("shape", "disk")
    if shape == "disk":
        cx, cy = patch.get("center_um", [0.0, 0.0])
        r = float(patch["radius_um"])
        return (X - cx) ** 2 + (Y - cy) ** 2 <= r * r
    if shape == "rect":
        x0, y0, x1, y1 = patch["region_um"]
        return (X >= x0) & (X <= x1) & (Y >= y0) & (Y <= y1)
    from .errors import ConfigError

    raise ConfigError(f"unknown initial patch shape {shape!r}")


def _apply_patch(registry, dens, patch):
    tab = registry.tables
    mask = _patch_mask(registry, patch)
    sp = registry.species_by_name(patch["species"])
    isp = tab.species_names.index(sp.name)
    lo, hi = tab.species_slices[isp]
    total = tab.species_density[isp]
    fractions = patch.get("fractions", {})
    if abs(sum(fractions.values()) - 1.0) > 1e-9:
        from .errors import ConfigError

        raise ConfigError(f"patch fractions for {sp.name!r} must sum to 1")
    for s in range(lo, hi):
        dens[:, :, s][mask] = 0.0
    for label, frac in fractions.items():
        dens[:, :, tab.state_index(label)][mask] = frac * total


# ----------------------------------------------------------------------
# standalone spatial operators


def diffuse(field, diffusion, dt, dx, boundary="reflecting", r_number=1.0 / 6.0):
    """Diffuse a carrier field for dt; sub-steps to honor the CFL limit.

    Returns (new_field, boundary_outflow_mass_density).
    """
    field = np.array(field, dtype=np.float64)
    if diffusion <= 0 or dt <= 0:
        return field, 0.0
    dt_sub = r_number * dx * dx / diffusion
    nsteps = max(1, int(np.ceil(dt / dt_sub)))
    r = diffusion * (dt / nsteps) / (dx * dx)
    absorbing = boundary == "absorbing"
    buf = np.empty_like(field)
    outflow = 0.0
    for _ in range(nsteps):
        outflow += kernels.diffuse_step(field, buf, r, absorbing)
        field, buf = buf, field
    return field, outflow


def poisson_solve(rho, dx, eps_r, tol=1e-8, max_iter=50000):
    """Solve lap(phi) = -rho/(eps0 eps_r) with Dirichlet phi=0 boundary."""
    rhs_dx2 = (rho / (EPS0_E_PER_V_UM * eps_r)) * (dx * dx)
    phi = np.zeros_like(rhs_dx2)
    scale = np.abs(rhs_dx2).max()
    if scale == 0.0:
        return phi
    n = max(rho.shape)
    omega = 2.0 / (1.0 + np.sin(np.pi / (n + 1)))
    status, _, resid = kernels.sor_sweep_solve(
        phi, rhs_dx2, omega, tol * scale, max_iter
    )
    if status != 0:
        raise NonConvergence(
            f"SOR did not reach tolerance after {max_iter} iterations "
            f"(residual {resid:.3e}, target {tol * scale:.3e})"
        )
    return phi


def drift(field, phi, mobility, polarity, dt, dx, boundary="reflecting"):
    """Advect a carrier field along the field lines for dt.

    polarity is +1 for holes, -1 for electrons.  Sub-steps to keep the
    upwind scheme stable.  Returns (new_field, boundary_outflow).
    """
    field = np.array(field, dtype=np.float64)
    if mobility <= 0 or dt <= 0:
        return field, 0.0
    gx = np.abs(np.diff(phi, axis=1)).max() if phi.shape[1] > 1 else 0.0
    gy = np.abs(np.diff(phi, axis=0)).max() if phi.shape[0] > 1 else 0.0
    gb = np.abs(phi).max()  # boundary faces see the ghost value 0
    vmax = mobility * max(gx, gy, gb) / dx
    if vmax == 0.0:
        return field, 0.0
    dt_sub = 0.4 * dx / vmax
    nsteps = max(1, int(np.ceil(dt / dt_sub)))
    absorbing = boundary == "absorbing"
    mu_pol = polarity * mobility
    buf = np.empty_like(field)
    outflow = 0.0
    for _ in range(nsteps):
        outflow += kernels.drift_step(field, phi, mu_pol, dx, dt / nsteps, absorbing, buf)
        field, buf = buf, field
    return field, outflow


# ----------------------------------------------------------------------
# macro stepping


def _has_filled_traps(state):
    tab = state.registry.tables
    for l in range(len(tab.rl_from)):
        if state.dens[:, :, tab.rl_from[l]].max() > 0.0:
            return True
    return False


def carrier_macrostep(state, beams, dt_macro, carrier_cut=None):
    """Advance the full state by dt_macro under a fixed set of beams.

    Operator splitting per sub-step: local kinetics in every cell, then
    one diffusion step per carrier, then (if enabled) a Poisson solve and
    upwind drift.  Mutates and returns the state; accumulates the carrier
    ledger for the call in the returned array's companion.
    """
    reg = state.registry
    if dt_macro < 0:
        raise ValueError("dt_macro must be >= 0")
    if dt_macro == 0:
        return state, np.zeros(kernels.LEDGER_SLOTS)
    if not beams and state.n_e.max() == 0.0 and state.n_h.max() == 0.0 \
            and not _has_filled_traps(state):
        # nothing can evolve: advance the clock only
        state.time += dt_macro
        return state, np.zeros(kernels.LEDGER_SLOTS)

    tab = reg.tables
    grid = reg.grid
    med = reg.medium
    eng = reg.engine
    dx = grid.dx_um
    if carrier_cut is None:
        carrier_cut = eng.carrier_cut

    ph_rate, tn_gate, drive = compute_rate_grids(reg, beams)
    src_tot, trap_tot = tunnel_bounds(reg)

    dmax = max(med.diffusion_e_um2_s, med.diffusion_h_um2_s)
    dt_sub = eng.macro_dt_s
    if dmax > 0:
        dt_sub = min(dt_sub, eng.diffusion_number * dx * dx / dmax)
    nsteps = max(1, int(np.ceil(dt_macro / dt_sub)))
    dt_eff = dt_macro / nsteps
    r_e = med.diffusion_e_um2_s * dt_eff / (dx * dx)
    r_h = med.diffusion_h_um2_s * dt_eff / (dx * dx)
    absorbing = med.boundary == "absorbing"

    ledger = np.zeros(kernels.LEDGER_SLOTS)
    buf = np.empty_like(state.n_e)
    phi = None
    sc = reg.space_charge
    for step in range(nsteps):
        status = kernels.kinetics_grid(
            state.dens, state.n_e, state.n_h, drive,
            tab.ph_from, tab.ph_to, tab.ph_carrier, ph_rate,
            tab.cp_from, tab.cp_to, tab.cp_carrier, tab.cp_coef,
            tab.tn_src_from, tab.tn_src_to, tab.tn_empty, tab.tn_filled,
            src_tot, trap_tot, tn_gate,
            tab.rl_from, tab.rl_to, tab.rl_carrier, tab.rl_rate,
            dt_eff, eng.kinetics_rate_cap, eng.max_kinetics_substeps,
            carrier_cut, ledger,
        )
        if status != 0:
            raise StabilityViolation(
                "kinetics sub-cycling exceeded max_kinetics_substeps; "
                "reduce rates or raise engine.max_kinetics_substeps"
            )
        if r_e > 0:
            ledger[kernels.ABSORBED_E] += kernels.diffuse_step(
                state.n_e, buf, r_e, absorbing
            )
            state.n_e, buf = buf, state.n_e
        if r_h > 0:
            ledger[kernels.ABSORBED_H] += kernels.diffuse_step(
                state.n_h, buf, r_h, absorbing
            )
            state.n_h, buf = buf, state.n_h
        if sc.enabled:
            if phi is None or step % sc.update_every == 0:
                rho = charge_density(reg, state.dens, state.n_e, state.n_h)
                rho -= state.rho0
                phi = poisson_solve(
                    rho, dx, med.relative_permittivity,
                    sc.sor_tolerance, sc.sor_max_iterations,
                )
            if med.mobility_e_um2_vs > 0:
                state.n_e, out = drift(
                    state.n_e, phi, med.mobility_e_um2_vs, -1, dt_eff, dx,
                    med.boundary,
                )
                ledger[kernels.ABSORBED_E] += out
            if med.mobility_h_um2_vs > 0:
                state.n_h, out = drift(
                    state.n_h, phi, med.mobility_h_um2_vs, +1, dt_eff, dx,
                    med.boundary,
                )
                ledger[kernels.ABSORBED_H] += out

    state.time += dt_macro
    state.ledger += ledger
    return state, ledger
