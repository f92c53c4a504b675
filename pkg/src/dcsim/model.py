"""Declarative physical model: species, charge states, transitions, grid.

A raw configuration tree is validated into an immutable :class:`ModelRegistry`.
The registry owns the unit bookkeeping (ppb -> um^-3, cm^2 -> um^2) and the
compiled flat tables consumed by the simulation kernels.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ConfigError,
    DuplicateLabel,
    NegativeRate,
    ThresholdViolation,
    UnknownState,
)
from .units import CM2_TO_UM2, HC_EV_NM, photon_energy, ppb_to_density

SCHEMA_VERSION = 1

ELECTRON, HOLE = 0, 1
_CARRIER_NAMES = {"electron": ELECTRON, "hole": HOLE}
# charge carried away from / onto the defect by emission / capture
_CARRIER_CHARGE = {ELECTRON: -1, HOLE: +1}


@dataclass(frozen=True)
class ChargeStateSpec:
    label: str
    relative_charge: int
    # channel name -> emission coefficient, kcps per (um^-3 * mW/um^2)
    brightness: dict = field(default_factory=dict)


@dataclass(frozen=True)
class PhotoTransition:
    from_state: str
    to_state: str
    emitted_carrier: int          # ELECTRON or HOLE
    threshold_ev: float
    # piecewise-constant table: sigma(lam) = sigma_i for lam_i <= lam < lam_{i+1},
    # 0 below the first entry, last entry extends upward. Units cm^2.
    cross_section_cm2: tuple      # ((lam_nm, sigma_cm2), ...)
    two_photon: bool = False

    def cross_section_um2(self, wavelength_nm):
        """sigma at a wavelength, gated to zero below the energy threshold."""
        if photon_energy(wavelength_nm) < self.threshold_ev:
            return 0.0
        sigma = 0.0
        for lam, sig in self.cross_section_cm2:
            if wavelength_nm >= lam:
                sigma = sig
            else:
                break
        return sigma * CM2_TO_UM2


@dataclass(frozen=True)
class CaptureChannel:
    from_state: str
    to_state: str
    captured_carrier: int
    coefficient_um3_s: float


@dataclass(frozen=True)
class TunnelChannel:
    """Illumination-gated carrier tunneling from a source defect to a trap.

    The source defect's optically excited fraction s/(1+s), with
    s = I/saturation_intensity, transfers its carrier directly to an empty
    trap: source_from -> source_to together with empty -> filled.
    """

    source_from: str
    source_to: str
    carrier: int
    coefficient_um3_s: float
    saturation_intensity_mw_um2: float


@dataclass(frozen=True)
class SpeciesSpec:
    name: str
    total_concentration_ppb: float
    states: tuple                      # ChargeStateSpec, ordered
    photo_transitions: tuple = ()
    capture_channels: tuple = ()
    initial_fractions: dict = field(default_factory=dict)
    is_trap: bool = False
    release_lifetime_s: float = 0.0
    tunnel_capture: TunnelChannel | None = None

    def state_labels(self):
        return [s.label for s in self.states]


@dataclass(frozen=True)
class GridSpec:
    nx: int
    ny: int
    dx_um: float


@dataclass(frozen=True)
class MediumSpec:
    host_atom_density_cm3: float
    diffusion_e_um2_s: float
    diffusion_h_um2_s: float
    mobility_e_um2_vs: float
    mobility_h_um2_vs: float
    relative_permittivity: float
    boundary: str                      # "absorbing" | "reflecting"
    two_photon_reference_mw_um2: float


@dataclass(frozen=True)
class SpaceChargeSpec:
    enabled: bool
    update_every: int
    sor_tolerance: float
    sor_max_iterations: int


@dataclass(frozen=True)
class EngineSpec:
    diffusion_number: float            # r = D dt / dx^2 used to pick dt
    kinetics_rate_cap: float           # dt * max outflow rate per subcycle
    max_kinetics_substeps: int
    macro_dt_s: float
    intensity_floor_rel: float         # beam intensities below peak*floor -> 0
    carrier_cut: float                 # kinetics skips cells with carriers below


@dataclass(frozen=True)
class CompiledTables:
    """Flat arrays consumed by the numeric kernels."""

    n_states: int
    state_labels: tuple
    state_species: np.ndarray          # i4[S]
    state_charge: np.ndarray           # f8[S]
    species_names: tuple
    species_slices: tuple              # per species, (start, stop) into state axis
    species_density: np.ndarray        # f8[n_species], um^-3
    brightness: np.ndarray             # f8[S, n_channels]
    ph_from: np.ndarray
    ph_to: np.ndarray
    ph_carrier: np.ndarray
    ph_order: np.ndarray
    cp_from: np.ndarray
    cp_to: np.ndarray
    cp_carrier: np.ndarray
    cp_coef: np.ndarray
    tn_src_from: np.ndarray
    tn_src_to: np.ndarray
    tn_empty: np.ndarray
    tn_filled: np.ndarray
    tn_coef: np.ndarray
    tn_isat: np.ndarray
    tn_carrier: np.ndarray
    rl_from: np.ndarray
    rl_to: np.ndarray
    rl_rate: np.ndarray
    rl_carrier: np.ndarray

    def state_index(self, label):
        try:
            return self.state_labels.index(label)
        except ValueError:
            raise UnknownState(f"unknown state label {label!r}") from None


class ModelRegistry:
    """Validated, immutable simulation model."""

    def __init__(self, config):
        cfg = _canonical(config)
        self._config = cfg
        self.schema_version = cfg.get("schema_version", SCHEMA_VERSION)
        self.grid = _parse_grid(cfg.get("grid", {}))
        self.medium = _parse_medium(cfg.get("medium", {}))
        self.space_charge = _parse_space_charge(cfg.get("space_charge", {}))
        self.engine = _parse_engine(cfg.get("engine", {}))
        self.channels = tuple(cfg.get("channels", []))
        self.species = tuple(
            _parse_species(s, self.channels) for s in cfg.get("species", [])
        )
        self.initial_patches = tuple(cfg.get("initial_patches", []))
        _check_cross_species(self.species)
        self.tables = _compile(self)

    # -- queries -------------------------------------------------------

    def photo_transitions(self):
        for sp in self.species:
            for tr in sp.photo_transitions:
                yield sp, tr

    def channel_index(self, name):
        try:
            return self.channels.index(name)
        except ValueError:
            from .errors import UnknownChannel

            raise UnknownChannel(f"unknown detection channel {name!r}") from None

    def species_by_name(self, name):
        for sp in self.species:
            if sp.name == name:
                return sp
        raise ConfigError(f"unknown species {name!r}")

    # -- serialization -------------------------------------------------

    def to_config(self):
        """Plain JSON-safe tree; re-validating it reproduces this registry."""
        return json.loads(json.dumps(self._config))

    def config_hash(self):
        return config_hash(self._config)


def validate_model(config) -> ModelRegistry:
    """Validate a raw model description into an immutable registry."""
    return ModelRegistry(config)


def config_hash(config):
    """Content hash of a configuration tree, independent of formatting."""
    text = json.dumps(_canonical(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


# ----------------------------------------------------------------------
# parsing helpers


def _canonical(config):
    if not isinstance(config, dict):
        raise ConfigError("configuration root must be a mapping")
    return json.loads(json.dumps(config))


def _require_nonneg(value, what):
    v = float(value)
    if not np.isfinite(v) or v < 0:
        raise NegativeRate(f"{what} must be finite and >= 0, got {value!r}")
    return v


def _require_pos(value, what):
    v = float(value)
    if not np.isfinite(v) or v <= 0:
        raise ConfigError(f"{what} must be finite and > 0, got {value!r}")
    return v


def _parse_grid(g):
    nx = int(g.get("nx", 128))
    ny = int(g.get("ny", 128))
    dx = _require_pos(g.get("dx_um", 0.4), "grid.dx_um")
    if nx < 8 or ny < 8:
        raise ConfigError(f"grid must be at least 8x8, got {nx}x{ny}")
    return GridSpec(nx=nx, ny=ny, dx_um=dx)


def _parse_medium(m):
    d = m.get("diffusion_um2_per_s", {})
    mob = m.get("mobility_um2_per_vs", {})
    boundary = m.get("boundary", "absorbing")
    if boundary not in ("absorbing", "reflecting"):
        raise ConfigError(f"boundary must be absorbing|reflecting, got {boundary!r}")
    return MediumSpec(
        host_atom_density_cm3=_require_pos(
            m.get("host_atom_density_cm3", 1.763e23), "host_atom_density_cm3"
        ),
        diffusion_e_um2_s=_require_nonneg(d.get("electron", 5.0), "D_e"),
        diffusion_h_um2_s=_require_nonneg(d.get("hole", 5.0), "D_h"),
        mobility_e_um2_vs=_require_nonneg(mob.get("electron", 200.0), "mobility_e"),
        mobility_h_um2_vs=_require_nonneg(mob.get("hole", 200.0), "mobility_h"),
        relative_permittivity=_require_pos(
            m.get("relative_permittivity", 5.7), "relative_permittivity"
        ),
        boundary=boundary,
        two_photon_reference_mw_um2=_require_pos(
            m.get("two_photon_reference_mw_um2", 1.0), "two_photon_reference_mw_um2"
        ),
    )


def _parse_space_charge(s):
    return SpaceChargeSpec(
        enabled=bool(s.get("enabled", False)),
        update_every=max(1, int(s.get("update_every", 5))),
        sor_tolerance=_require_pos(s.get("sor_tolerance", 1e-8), "sor_tolerance"),
        sor_max_iterations=int(s.get("sor_max_iterations", 50000)),
    )


def _parse_engine(e):
    r = float(e.get("diffusion_number", 1.0 / 6.0))
    if not 0 < r <= 0.25:
        raise ConfigError(f"diffusion_number must be in (0, 0.25], got {r}")
    cap = float(e.get("kinetics_rate_cap", 0.1))
    if not 0 < cap <= 0.5:
        raise ConfigError(f"kinetics_rate_cap must be in (0, 0.5], got {cap}")
    return EngineSpec(
        diffusion_number=r,
        kinetics_rate_cap=cap,
        max_kinetics_substeps=int(e.get("max_kinetics_substeps", 65536)),
        macro_dt_s=_require_pos(e.get("macro_dt_s", 0.25), "macro_dt_s"),
        intensity_floor_rel=_require_nonneg(
            e.get("intensity_floor_rel", 1e-12), "intensity_floor_rel"
        ),
        carrier_cut=_require_nonneg(e.get("carrier_cut", 1e-8), "carrier_cut"),
    )


def _parse_carrier(name, what):
    if name not in _CARRIER_NAMES:
        raise ConfigError(f"{what}: carrier must be electron|hole, got {name!r}")
    return _CARRIER_NAMES[name]


def _split_table(table, threshold_ev, context):
    """Normalize a cross-section table: sort, check signs, zero below threshold.

    A listed point with sigma > 0 whose photon energy is below the threshold is
    a ThresholdViolation; a band that straddles the threshold wavelength is
    split so the serialized table is explicitly zero on the forbidden side.
    """
    entries = []
    for item in table:
        lam, sig = float(item[0]), float(item[1])
        if lam <= 0:
            raise ConfigError(f"{context}: wavelength must be > 0, got {lam}")
        if sig < 0:
            raise NegativeRate(f"{context}: cross section at {lam} nm is negative")
        entries.append((lam, sig))
    entries.sort(key=lambda e: e[0])
    lams = [e[0] for e in entries]
    if len(set(lams)) != len(lams):
        raise ConfigError(f"{context}: duplicate wavelength in cross-section table")
    lam_thr = HC_EV_NM / threshold_ev
    out = []
    for i, (lam, sig) in enumerate(entries):
        if sig > 0 and photon_energy(lam) < threshold_ev:
            raise ThresholdViolation(
                f"{context}: sigma > 0 at {lam} nm but photon energy "
                f"{photon_energy(lam):.4f} eV is below threshold {threshold_ev} eV"
            )
        out.append([lam, sig])
        nxt = entries[i + 1][0] if i + 1 < len(entries) else np.inf
        if sig > 0 and lam < lam_thr < nxt:
            out.append([lam_thr, 0.0])
    return tuple((lam, sig) for lam, sig in out)


def _parse_species(s, channels):
    name = s.get("name")
    if not name:
        raise ConfigError("species requires a name")
    conc = _require_nonneg(s.get("total_concentration_ppb", 0.0), f"{name} concentration")
    raw_states = s.get("states", [])
    if not raw_states:
        raise ConfigError(f"species {name!r} must declare at least one state")
    labels = [st.get("label") for st in raw_states]
    if len(set(labels)) != len(labels):
        raise DuplicateLabel(f"species {name!r} has duplicate state labels")
    states = []
    for st in raw_states:
        br = {k: _require_nonneg(v, f"brightness of {st['label']}") for k, v in
              st.get("brightness", {}).items()}
        for ch in br:
            if ch not in channels:
                raise ConfigError(
                    f"state {st['label']!r} emits into undeclared channel {ch!r}"
                )
        states.append(
            ChargeStateSpec(
                label=st["label"],
                relative_charge=int(st.get("relative_charge", 0)),
                brightness=br,
            )
        )
    label_set = set(labels)
    charge = {st.label: st.relative_charge for st in states}

    def _resolve(label, context):
        if label not in label_set:
            raise UnknownState(f"{context} references unknown state {label!r}")
        return label

    transitions = []
    for tr in s.get("photo_transitions", []):
        ctx = f"photo transition of {name!r}"
        frm = _resolve(tr.get("from"), ctx)
        to = _resolve(tr.get("to"), ctx)
        if frm == to:
            raise ConfigError(f"{ctx}: from and to must differ")
        carrier = _parse_carrier(tr.get("emits"), ctx)
        thr = _require_pos(tr.get("threshold_ev"), f"{ctx} threshold")
        expected = -_CARRIER_CHARGE[carrier]
        if charge[to] - charge[frm] != expected:
            raise ConfigError(
                f"{ctx}: emitting {'electron' if carrier == ELECTRON else 'hole'} "
                f"must change charge by {expected}, got {charge[to] - charge[frm]}"
            )
        table = _split_table(tr.get("cross_section_cm2", []), thr, ctx)
        transitions.append(
            PhotoTransition(
                from_state=frm,
                to_state=to,
                emitted_carrier=carrier,
                threshold_ev=thr,
                cross_section_cm2=table,
                two_photon=bool(tr.get("two_photon", False)),
            )
        )

    captures = []
    for ch in s.get("capture_channels", []):
        ctx = f"capture channel of {name!r}"
        frm = _resolve(ch.get("from"), ctx)
        to = _resolve(ch.get("to"), ctx)
        if frm == to:
            raise ConfigError(f"{ctx}: from and to must differ")
        carrier = _parse_carrier(ch.get("captures"), ctx)
        expected = _CARRIER_CHARGE[carrier]
        if charge[to] - charge[frm] != expected:
            raise ConfigError(
                f"{ctx}: capturing {'electron' if carrier == ELECTRON else 'hole'} "
                f"must change charge by {expected}, got {charge[to] - charge[frm]}"
            )
        captures.append(
            CaptureChannel(
                from_state=frm,
                to_state=to,
                captured_carrier=carrier,
                coefficient_um3_s=_require_nonneg(
                    ch.get("coefficient_um3_s"), f"{ctx} coefficient"
                ),
            )
        )

    fractions = {}
    for label, frac in s.get("initial_fractions", {}).items():
        _resolve(label, f"initial fractions of {name!r}")
        fractions[label] = _require_nonneg(frac, f"initial fraction of {label!r}")
    if fractions and abs(sum(fractions.values()) - 1.0) > 1e-9:
        raise ConfigError(f"initial fractions of {name!r} must sum to 1")
    if not fractions:
        fractions = {labels[0]: 1.0}

    is_trap = bool(s.get("is_trap", False))
    lifetime = 0.0
    tunnel = None
    if is_trap:
        if len(states) != 2:
            raise ConfigError(f"trap species {name!r} must have exactly two states")
        lifetime = _require_pos(s.get("release_lifetime_s"), f"{name} release lifetime")
        tc = s.get("tunnel_capture")
        if tc is not None:
            ctx = f"tunnel capture of {name!r}"
            carrier = _parse_carrier(tc.get("carrier", "hole"), ctx)
            tunnel = TunnelChannel(
                source_from=tc.get("source_from"),
                source_to=tc.get("source_to"),
                carrier=carrier,
                coefficient_um3_s=_require_nonneg(
                    tc.get("coefficient_um3_s"), f"{ctx} coefficient"
                ),
                saturation_intensity_mw_um2=_require_pos(
                    tc.get("saturation_intensity_mw_um2", 1.0), f"{ctx} saturation"
                ),
            )
        if transitions:
            raise ConfigError(f"trap species {name!r} cannot carry photo transitions")

    return SpeciesSpec(
        name=name,
        total_concentration_ppb=conc,
        states=tuple(states),
        photo_transitions=tuple(transitions),
        capture_channels=tuple(captures),
        initial_fractions=fractions,
        is_trap=is_trap,
        release_lifetime_s=lifetime,
        tunnel_capture=tunnel,
    )


def _check_cross_species(species):
    names = [sp.name for sp in species]
    if len(set(names)) != len(names):
        raise DuplicateLabel("duplicate species names")
    all_labels = [st.label for sp in species for st in sp.states]
    if len(set(all_labels)) != len(all_labels):
        raise DuplicateLabel("state labels must be globally unique")
    label_set = set(all_labels)
    charge = {st.label: st.relative_charge for sp in species for st in sp.states}
    for sp in species:
        tc = sp.tunnel_capture
        if tc is None:
            continue
        for lbl in (tc.source_from, tc.source_to):
            if lbl not in label_set:
                raise UnknownState(
                    f"tunnel capture of {sp.name!r} references unknown state {lbl!r}"
                )
        expected = -_CARRIER_CHARGE[tc.carrier]
        if charge[tc.source_to] - charge[tc.source_from] != expected:
            raise ConfigError(
                f"tunnel capture of {sp.name!r}: source charge change inconsistent"
            )
        empty, filled = sp.states
        if filled.relative_charge - empty.relative_charge != _CARRIER_CHARGE[tc.carrier]:
            raise ConfigError(
                f"trap {sp.name!r}: filled-empty charge difference inconsistent "
                f"with trapped carrier"
            )


def _compile(reg: ModelRegistry) -> CompiledTables:
    labels, state_species, state_charge = [], [], []
    slices = []
    density = []
    for isp, sp in enumerate(reg.species):
        start = len(labels)
        for st in sp.states:
            labels.append(st.label)
            state_species.append(isp)
            state_charge.append(float(st.relative_charge))
        slices.append((start, len(labels)))
        density.append(
            ppb_to_density(sp.total_concentration_ppb, reg.medium.host_atom_density_cm3)
        )
    index = {lbl: i for i, lbl in enumerate(labels)}
    nch = len(reg.channels)
    brightness = np.zeros((len(labels), nch))
    for sp in reg.species:
        for st in sp.states:
            for ch, b in st.brightness.items():
                brightness[index[st.label], reg.channels.index(ch)] = b

    ph_from, ph_to, ph_carrier, ph_order = [], [], [], []
    for sp, tr in reg.photo_transitions():
        ph_from.append(index[tr.from_state])
        ph_to.append(index[tr.to_state])
        ph_carrier.append(tr.emitted_carrier)
        ph_order.append(2 if tr.two_photon else 1)

    cp_from, cp_to, cp_carrier, cp_coef = [], [], [], []
    for sp in reg.species:
        for ch in sp.capture_channels:
            cp_from.append(index[ch.from_state])
            cp_to.append(index[ch.to_state])
            cp_carrier.append(ch.captured_carrier)
            cp_coef.append(ch.coefficient_um3_s)

    tn_src_from, tn_src_to, tn_empty, tn_filled = [], [], [], []
    tn_coef, tn_isat, tn_carrier = [], [], []
    rl_from, rl_to, rl_rate, rl_carrier = [], [], [], []
    for sp in reg.species:
        if not sp.is_trap:
            continue
        empty, filled = sp.states
        rl_from.append(index[filled.label])
        rl_to.append(index[empty.label])
        rl_rate.append(1.0 / sp.release_lifetime_s)
        carrier = sp.tunnel_capture.carrier if sp.tunnel_capture else HOLE
        rl_carrier.append(carrier)
        if sp.tunnel_capture:
            tc = sp.tunnel_capture
            tn_src_from.append(index[tc.source_from])
            tn_src_to.append(index[tc.source_to])
            tn_empty.append(index[empty.label])
            tn_filled.append(index[filled.label])
            tn_coef.append(tc.coefficient_um3_s)
            tn_isat.append(tc.saturation_intensity_mw_um2)
            tn_carrier.append(tc.carrier)

    def _arr(x, dtype):
        a = np.asarray(x, dtype=dtype)
        a.flags.writeable = False
        return a

    return CompiledTables(
        n_states=len(labels),
        state_labels=tuple(labels),
        state_species=_arr(state_species, np.int32),
        state_charge=_arr(state_charge, np.float64),
        species_names=tuple(sp.name for sp in reg.species),
        species_slices=tuple(slices),
        species_density=_arr(density, np.float64),
        brightness=_arr(brightness, np.float64),
        ph_from=_arr(ph_from, np.int32),
        ph_to=_arr(ph_to, np.int32),
        ph_carrier=_arr(ph_carrier, np.int32),
        ph_order=_arr(ph_order, np.int32),
        cp_from=_arr(cp_from, np.int32),
        cp_to=_arr(cp_to, np.int32),
        cp_carrier=_arr(cp_carrier, np.int32),
        cp_coef=_arr(cp_coef, np.float64),
        tn_src_from=_arr(tn_src_from, np.int32),
        tn_src_to=_arr(tn_src_to, np.int32),
        tn_empty=_arr(tn_empty, np.int32),
        tn_filled=_arr(tn_filled, np.int32),
        tn_coef=_arr(tn_coef, np.float64),
        tn_isat=_arr(tn_isat, np.float64),
        tn_carrier=_arr(tn_carrier, np.int32),
        rl_from=_arr(rl_from, np.int32),
        rl_to=_arr(rl_to, np.int32),
        rl_rate=_arr(rl_rate, np.float64),
        rl_carrier=_arr(rl_carrier, np.int32),
    )
