"""Scenario and experiment configuration: dataclasses, JSON I/O, presets.

A config document is versioned JSON. Parsing validates field by field and
reports violations with their full path (for example
``scenario.platoon.q0: must be an integer >= 0``).
"""

import dataclasses
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import SchemaError
from .geometry import GridSpec, Position3
from .priors import Hyperparams, PlatoonParams

CONFIG_VERSION = 1

SWEEP_AXES = ("none", "N", "nlos_paths", "grid_length", "slot_interval")
METHODS = ("tracker", "no-offgrid", "naive-vbi", "lasso", "map-grid")


@dataclass
class NlosParams:
    """Scatterer-path configuration shared by the direct and cascaded links."""

    l_bs: int = 1  # paths VUE -> BS
    l_ris: int = 1  # paths VUE -> RIS
    rel_power_db: float = -8.0  # per-path power relative to the link's LoS
    rho_corr: float = 0.3  # lag-1 support correlation across slots
    n_bs_angle_grid: int = 0  # 0 = K - 1
    n_ris_az_grid: int = 0  # 0 = N_h - 1
    n_ris_el_grid: int = 0  # 0 = N_v - 1


@dataclass
class ArmijoParams:
    init_step: float = 1.0
    contraction: float = 0.5
    c1: float = 1e-4
    max_backtracks: int = 20


@dataclass
class AlgoParams:
    """Iteration limits, convergence thresholds, and step-rule settings."""

    r_max: int = 30
    eps_mu_z: float = 1e-3  # relative change thresholds, outer loop
    eps_mu_v: float = 1e-3
    eps_sigma_z: float = 1e-3
    eps_sigma_v: float = 1e-3
    inner_iters: int = 12
    inner_tol: float = 1e-3
    m_substeps: int = 6  # gradient-ascent steps inside one offset update
    armijo: ArmijoParams = field(default_factory=ArmijoParams)
    top_p_location: int = 3  # grid cells per VUE whose offsets get estimated
    nlos_offset_threshold: float = 0.9  # support mass needed to tune an angle offset
    max_nlos_offsets: int = 4  # per VUE and angle grid
    cross_branch_residual: bool = True  # subtract the other branch's mean in updates
    estimate_offsets: bool = True
    fd_step_rel: float = 1e-5  # finite-difference step, relative to grid spacing


@dataclass
class ScenarioConfig:
    """All physical, grid, prior, and algorithmic parameters of one run."""

    n_vue: int = 4
    n_bs_antennas: int = 16
    n_ris_h: int = 16
    n_ris_v: int = 16
    n_grid: int = 240
    grid_length: float = 1.0
    slot_interval: float = 0.1
    n_slots: int = 100
    n_realizations: int = 200
    n_pilots: int = 16
    carrier_freq: float = 7e9
    noise_power_dbm: float | None = -100.0
    snr_db: float | None = None  # overrides noise_power_dbm when set
    zeta_bs: float = 3.0
    zeta_ris: float = 2.5
    zeta_ris_bs: float = 2.0
    bs_position: tuple[float, float, float] = (50.0, 100.0, 25.0)
    ris_position: tuple[float, float, float] = (150.0, 0.0, 25.0)
    road_origin: tuple[float, float, float] = (0.0, 10.0, 0.0)
    road_direction: tuple[float, float, float] = (1.0, 0.0, 0.0)
    platoon_varpi: float = 2.0
    platoon_lambda: float = 1.5
    platoon_q0: int = 2
    speed_mean: float = -18.0
    speed_std: float = 8.0
    nlos: NlosParams = field(default_factory=NlosParams)
    hyper: Hyperparams = field(default_factory=Hyperparams)
    algo: AlgoParams = field(default_factory=AlgoParams)
    ris_enabled: bool = True
    h_rb_rician: float = 0.2  # LoS power fraction of the BS-RIS link
    h_rb_normalization: str = "unit_column_gain"  # or "physical"
    seed: int = 0

    def __post_init__(self):
        counts = dict(
            n_vue=self.n_vue,
            n_bs_antennas=self.n_bs_antennas,
            n_ris_h=self.n_ris_h,
            n_ris_v=self.n_ris_v,
            n_grid=self.n_grid,
            n_slots=self.n_slots,
            n_realizations=self.n_realizations,
            n_pilots=self.n_pilots,
        )
        for name, v in counts.items():
            if v < 1:
                raise SchemaError(f"scenario.{name}", "must be a positive integer")
        if self.noise_power_dbm is None and self.snr_db is None:
            raise SchemaError("scenario.noise_power_dbm", "set noise_power_dbm or snr_db")
        if self.platoon_varpi < 1:
            raise SchemaError("scenario.platoon_varpi", "must be >= 1")
        if not 0 < self.nlos.rho_corr < 1:
            raise SchemaError("scenario.nlos.rho_corr", "must lie strictly in (0, 1)")
        if self.grid_length <= 0 or self.slot_interval <= 0 or self.carrier_freq <= 0:
            raise SchemaError("scenario", "lengths, intervals and frequency must be positive")
        if self.h_rb_normalization not in ("unit_column_gain", "balanced", "physical"):
            raise SchemaError("scenario.h_rb_normalization", "unknown normalization")

    @property
    def n_ris(self) -> int:
        return self.n_ris_h * self.n_ris_v

    @property
    def noise_power_w(self) -> float | None:
        if self.noise_power_dbm is None:
            return None
        return 10 ** (self.noise_power_dbm / 10) * 1e-3

    def platoon_params(self) -> PlatoonParams:
        return PlatoonParams(
            varpi=self.platoon_varpi,
            lam=self.platoon_lambda,
            q0=self.platoon_q0,
            v_mean=self.speed_mean,
            v_std=self.speed_std,
            dt=self.slot_interval,
            dl=self.grid_length,
        )

    def grid_spec(self) -> GridSpec:
        k_tilde = self.nlos.n_bs_angle_grid or max(self.n_bs_antennas - 1, 3)
        n_az = self.nlos.n_ris_az_grid or max(self.n_ris_h - 1, 3)
        n_el = self.nlos.n_ris_el_grid or max(self.n_ris_v - 1, 3)
        return GridSpec.build(
            road_origin=Position3(*self.road_origin),
            road_direction=np.asarray(self.road_direction),
            grid_count=self.n_grid,
            grid_length=self.grid_length,
            n_bs_angles=k_tilde,
            n_ris_az=n_az,
            n_ris_el=n_el,
        )


@dataclass
class ExperimentSpec:
    """One experiment: scenario, estimator methods, optional sweep, seeds."""

    scenario: ScenarioConfig
    methods: list[str] = field(default_factory=lambda: ["tracker"])
    sweep_axis: str = "none"
    sweep_values: list[float] = field(default_factory=list)
    seeds: list[int] = field(default_factory=lambda: [0])
    out_dir: str = "results"

    def __post_init__(self):
        if not self.methods:
            raise SchemaError("methods", "method list must be nonempty")
        for m in self.methods:
            if m not in METHODS:
                raise SchemaError("methods", f"unknown method {m!r}; known: {METHODS}")
        if self.sweep_axis not in SWEEP_AXES:
            raise SchemaError("sweep.axis", f"unknown axis {self.sweep_axis!r}")
        if self.sweep_axis != "none" and not self.sweep_values:
            raise SchemaError("sweep.values", "sweep values must be nonempty")
        if any(v <= 0 for v in self.sweep_values):
            raise SchemaError("sweep.values", "sweep values must be positive")
        if not self.seeds:
            raise SchemaError("seeds", "seed list must be nonempty")


def desk_preset(**overrides) -> ScenarioConfig:
    """Small scenario that exercises the full pipeline in minutes.

    Two vehicles, an 8-antenna array, and a 4x4 reflecting surface over a
    20-cell grid of 4 m cells beside the surface, at a 30 dB target SNR.
    With these apertures the location dictionary needs the coarser cells to
    stay resolvable, and the 80 m road window keeps the drifting platoon on
    the grid for all 20 slots.
    """
    base = dict(
        n_vue=2,
        n_bs_antennas=8,
        n_ris_h=4,
        n_ris_v=4,
        n_grid=20,
        grid_length=4.0,
        slot_interval=0.1,
        n_slots=20,
        n_realizations=20,
        n_pilots=16,
        noise_power_dbm=None,
        snr_db=30.0,
        road_origin=(110.0, 10.0, 0.0),
        h_rb_rician=0.2,
    )
    base.update(overrides)
    return ScenarioConfig(**base)


PRESETS = {
    "default": lambda **kw: ScenarioConfig(**kw),
    "desk": desk_preset,
}


def _enc(obj):
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: _enc(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, (tuple, list)):
        return [_enc(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return obj


def emit_spec(spec: ExperimentSpec) -> dict:
    """Serialize an ExperimentSpec to a plain JSON-ready dict."""
    doc = {"version": CONFIG_VERSION}
    doc.update(_enc(spec))
    return doc


def _expect(doc: dict, key: str, path: str, typ, default=None, required=False):
    if key not in doc:
        if required:
            raise SchemaError(f"{path}.{key}" if path else key, "missing required field")
        return default
    val = doc[key]
    if typ is float and isinstance(val, int) and not isinstance(val, bool):
        val = float(val)
    if typ is not None and val is not None and not isinstance(val, typ):
        raise SchemaError(
            f"{path}.{key}" if path else key,
            f"expected {getattr(typ, '__name__', typ)}, got {type(val).__name__}",
        )
    return val


def _build_dataclass(cls, doc: dict, path: str):
    if not isinstance(doc, dict):
        raise SchemaError(path, f"expected an object, got {type(doc).__name__}")
    kwargs = {}
    names = {f.name: f for f in dataclasses.fields(cls)}
    for key, val in doc.items():
        if key not in names:
            raise SchemaError(f"{path}.{key}" if path else key, "unknown field")
        f = names[key]
        sub = f"{path}.{key}" if path else key
        if dataclasses.is_dataclass(f.type if isinstance(f.type, type) else None):
            kwargs[key] = _build_dataclass(f.type, val, sub)
        elif key in ("nlos",):
            kwargs[key] = _build_dataclass(NlosParams, val, sub)
        elif key in ("hyper",):
            kwargs[key] = _build_dataclass(Hyperparams, val, sub)
        elif key in ("algo",):
            kwargs[key] = _build_dataclass(AlgoParams, val, sub)
        elif key in ("armijo",):
            kwargs[key] = _build_dataclass(ArmijoParams, val, sub)
        elif key in ("bs_position", "ris_position", "road_origin", "road_direction"):
            if not isinstance(val, (list, tuple)) or len(val) != 3:
                raise SchemaError(sub, "expected a 3-element array")
            kwargs[key] = tuple(float(v) for v in val)
        else:
            if isinstance(val, list):
                raise SchemaError(sub, "unexpected array")
            if isinstance(val, int) and not isinstance(val, bool):
                # promote to float where the dataclass default is a float
                d = names[key].default
                if isinstance(d, float):
                    val = float(val)
            kwargs[key] = val
    try:
        return cls(**kwargs)
    except SchemaError:
        raise
    except (TypeError, ValueError) as exc:
        raise SchemaError(path or cls.__name__, str(exc)) from exc


def parse_spec(doc: dict) -> ExperimentSpec:
    """Parse and validate a JSON config document into an ExperimentSpec."""
    if not isinstance(doc, dict):
        raise SchemaError("", "config root must be an object")
    version = _expect(doc, "version", "", int, default=CONFIG_VERSION)
    if version != CONFIG_VERSION:
        raise SchemaError("version", f"unsupported config version {version}")
    scen_doc = _expect(doc, "scenario", "", dict, default={})
    preset = _expect(doc, "preset", "", str)
    if preset is not None:
        if preset not in PRESETS:
            raise SchemaError("preset", f"unknown preset {preset!r}")
        scenario = PRESETS[preset]()
        scenario = _build_dataclass(
            ScenarioConfig, {**_enc(scenario), **scen_doc}, "scenario"
        )
    else:
        scenario = _build_dataclass(ScenarioConfig, scen_doc, "scenario")
    methods = _expect(doc, "methods", "", list, default=["tracker"])
    sweep_axis = _expect(doc, "sweep_axis", "", str, default="none")
    sweep_values = _expect(doc, "sweep_values", "", list, default=[])
    seeds = _expect(doc, "seeds", "", list, default=[scenario.seed])
    out_dir = _expect(doc, "out_dir", "", str, default="results")
    return ExperimentSpec(
        scenario=scenario,
        methods=[str(m) for m in methods],
        sweep_axis=sweep_axis,
        sweep_values=[float(v) for v in sweep_values],
        seeds=[int(s) for s in seeds],
        out_dir=out_dir,
    )


def load_spec(path: str) -> ExperimentSpec:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_spec(json.load(fh))


def dump_spec(spec: ExperimentSpec, path: str):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(emit_spec(spec), fh, indent=2, sort_keys=True)
        fh.write("\n")
