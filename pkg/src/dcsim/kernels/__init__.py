"""Hot numeric kernels with numba and pure-numpy twins.

The active implementation is chosen at import time by :mod:`dcsim.backend`
(env flag ``DCSIM_NUMBA``).  Kernel contracts:

``kinetics_grid``
    One explicit-Euler kinetics substep on the whole grid with per-cell
    rate-capped subcycling; updates defect densities and carrier fields in
    place and accumulates the carrier ledger.

``diffuse_step``
    One 5-point stencil diffusion step; returns boundary outflow mass
    (zero under reflecting boundaries).

``sor_sweep_solve``
    Red-black SOR solve of the discrete Poisson equation with Dirichlet
    zero boundary.

``drift_step``
    One first-order upwind advection step along the electric field.

Ledger slot layout (float64[8]):
    0 created_e, 1 created_h, 2 captured_e, 3 captured_h,
    4 absorbed_e, 5 absorbed_h, 6 clamp_events, 7 max_subcycles.
"""

from ..backend import NUMBA_ENABLED

if NUMBA_ENABLED:
    from . import numba_impl as impl
else:
    from . import numpy_impl as impl

from . import numpy_impl as reference

kinetics_grid = impl.kinetics_grid
diffuse_step = impl.diffuse_step
sor_sweep_solve = impl.sor_sweep_solve
drift_step = impl.drift_step

LEDGER_SLOTS = 8
CREATED_E, CREATED_H, CAPTURED_E, CAPTURED_H = 0, 1, 2, 3
ABSORBED_E, ABSORBED_H, CLAMP_EVENTS, MAX_SUBCYCLES = 4, 5, 6, 7
