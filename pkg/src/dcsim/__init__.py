"""dcsim: defect charge-state conversion by photoactivated itinerant carriers.

Deterministic 2-D reaction-diffusion engine for photo-driven charge-state
kinetics of point defects, with readout imaging, quantitative analysis
(front growth, ionization decay, wavelength gating), and a stochastic
single-emitter telegraph module.
"""

__version__ = "0.1.0"

from .backend import NUMBA_ENABLED, backend_name
from .errors import DcsimError
from .kinetics import Beam, CellKinetics, beam_intensity, capture_rate, kinetics_substep, photo_rate
from .model import ModelRegistry, config_hash, validate_model
from .transport import SimulationState, build_initial_state, carrier_macrostep, diffuse, drift, poisson_solve
from .units import photon_energy, ppb_to_density

__all__ = [
    "Beam",
    "CellKinetics",
    "DcsimError",
    "ModelRegistry",
    "NUMBA_ENABLED",
    "SimulationState",
    "backend_name",
    "beam_intensity",
    "build_initial_state",
    "capture_rate",
    "carrier_macrostep",
    "config_hash",
    "diffuse",
    "drift",
    "kinetics_substep",
    "photon_energy",
    "photo_rate",
    "poisson_solve",
    "ppb_to_density",
    "validate_model",
    "__version__",
]
