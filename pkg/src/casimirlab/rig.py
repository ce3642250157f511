"""Virtual calibration/measurement runs of the sphere-plate force set-up.

Signals are synthesised analytically: the sensor is quasi-static at both
excitation frequencies, so each lock-in output is a harmonic amplitude times
the conversion factor ``beta`` (V/N), plus Gaussian noise.
"""
from __future__ import annotations

import dataclasses
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import auxforce
from .lifshitz import GradientTable, LayeredMirror, Layer, MatsubaraGrid, QuadratureSpec, half_space
from .materials import MaterialLibrary

RMS_LIMIT = 80e-12  # m, quasi-static response bound


class ContactError(RuntimeError):
    """A set-point would put the sphere in contact with the plate."""


def _default_separations():
    return tuple(np.geomspace(1100e-9, 50e-9, 50))


@dataclass(frozen=True)
class RigConfig:
    """Parameters of one series of runs; ``beta`` and ``d0`` are hidden truth."""

    plate: str = "gold"
    sphere: str = "gold"
    R: float = 100e-6
    spring_constant: float = 1.0
    resonance_frequency: float = 1.9e3
    f1: float = 72.2
    f2: float = 119.0
    modulation_amplitude: float = 3.85e-9
    V_ac: float = 0.05
    d0: float = 1200e-9
    set_points: tuple = field(default_factory=lambda: tuple(1200e-9 - d for d in _default_separations()))
    dwell_time: float = 8.0
    beta: float = 5e7
    temperature: float = 300.0
    zero_frequency: str = "drude"
    ito_thickness: float = 190e-9
    viscosity: float = auxforce.AIR_VISCOSITY
    slip_length: float | None = None
    # noise std per channel, volts
    calib_noise: float = 0.0
    inphase_noise: float = 0.0
    quadrature_noise: float = 0.0
    v0_noise: float = 0.0
    drift_per_run: float = 0.0
    track_drift: bool = True
    artifact_slope: float = 0.0  # V per metre of piezo extension
    V0_base: float = 20e-3
    V0_span: float = 0.0
    feedback_gain: float = 0.3
    feedback_rate: float = 10.0  # controller updates per second
    v0_tolerance: float = 1e-4
    runs_per_series: int = 580

    def __post_init__(self):
        sp = np.asarray(self.set_points, dtype=float)
        object.__setattr__(self, "set_points", tuple(float(x) for x in sp))
        if sp.size < 2 or not (np.all(np.diff(sp) > 0) or np.all(np.diff(sp) < 0)):
            raise ValueError("set_points must be strictly monotonic with at least 2 entries")
        if self.f1 == self.f2:
            raise ValueError("f1 and f2 must differ")
        if max(self.f1, 2 * self.f1, self.f2) >= 0.5 * self.resonance_frequency:
            raise ValueError("excitation frequencies must lie well below the resonance")
        for name in ("R", "spring_constant", "modulation_amplitude", "dwell_time", "beta", "temperature"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        for name in ("calib_noise", "inphase_noise", "quadrature_noise", "v0_noise"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if not 0 < self.feedback_gain < 2:
            raise ValueError("feedback_gain must lie in (0, 2)")

    # transfer-function corrections of the quasi-static sensor
    def transfer(self, f):
        return 1.0 / (1.0 - (f / self.resonance_frequency) ** 2)

    @property
    def H_cal(self):
        """Response at 2*f1, where the calibration force oscillates."""
        return self.transfer(2.0 * self.f1)

    @property
    def H1(self):
        return self.transfer(self.f1)

    @property
    def H2(self):
        return self.transfer(self.f2)

    @property
    def omega1(self):
        return 2.0 * math.pi * self.f1

    @property
    def omega2(self):
        return 2.0 * math.pi * self.f2

    @property
    def hydro(self) -> auxforce.HydroConfig:
        return auxforce.HydroConfig(self.viscosity, self.slip_length, self.omega2, self.modulation_amplitude)

    @property
    def reflectivity_class(self) -> str:
        return "low" if self.plate == "ito" else "high"

    def replace(self, **changes) -> "RigConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["set_points"] = list(self.set_points)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "RigConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown rig keys: {sorted(unknown)}")
        data = dict(data)
        if "set_points" in data:
            data["set_points"] = tuple(data["set_points"])
        return cls(**data)


# Au slope puts the optical-lever background at 5% of the Au-Au in-phase
# signal at d = 120 nm (see tests/test_rig.py); ITO reflects ~10x less.
AU_ARTIFACT_SLOPE = 18.95
ITO_ARTIFACT_FRACTION = 0.1

# calibration noise dominates: it sets ~1.7 nm d0 scatter, i.e. ~5% at 80 nm
PAPER_NOISE = dict(calib_noise=80e-6, inphase_noise=10e-6, quadrature_noise=2e-6, v0_noise=1e-6)


def paper_scale(plate: str = "gold", **overrides) -> RigConfig:
    """Paper-scale configuration for an Au sphere against ``plate``."""
    base = dict(PAPER_NOISE)
    base.update(
        plate=plate,
        drift_per_run=0.1e-9 if plate == "gold" else 0.2e-9,
        V0_span=1e-3 if plate == "gold" else 3e-3,
        artifact_slope=AU_ARTIFACT_SLOPE if plate == "gold" else AU_ARTIFACT_SLOPE * ITO_ARTIFACT_FRACTION,
    )
    base.update(overrides)
    return RigConfig(**base)


def build_mirror(name: str, library: MaterialLibrary, ito_thickness: float = 190e-9) -> LayeredMirror:
    """Mirror for a named sample; ``"ito"`` is the film on float glass."""
    if name == "ito":
        return LayeredMirror(library["glass"], (Layer(library["ito"], ito_thickness),), name="ito")
    return half_space(library[name], name=name)


def casimir_gradient_model(cfg: RigConfig, library: MaterialLibrary | None = None, quad=None,
                           d_min=20e-9, d_max=2e-6, n=64, workers=1) -> GradientTable:
    library = library or MaterialLibrary()
    grid = MatsubaraGrid(cfg.temperature, cfg.zero_frequency)
    return GradientTable(
        cfg.R,
        build_mirror(cfg.sphere, library),
        build_mirror(cfg.plate, library, cfg.ito_thickness),
        grid,
        quad or QuadratureSpec(),
        d_min,
        d_max,
        n,
        workers,
    )


def zero_gradient(d):
    return np.zeros_like(np.asarray(d, dtype=float))


@dataclass
class TruthRecord:
    """Hidden ground truth of one run; for test assertions only."""

    run_index: int
    seed: int
    d0: float
    beta: float
    V0: np.ndarray
    d: np.ndarray

    def to_dict(self):
        return {
            "run_index": self.run_index,
            "seed": self.seed,
            "d0": self.d0,
            "beta": self.beta,
            "V0": self.V0.tolist(),
            "d": self.d.tolist(),
        }


@dataclass
class RunRecord:
    run_index: int
    seed: int
    d_pz: np.ndarray
    calib_2w1_amplitude: np.ndarray
    meas_inphase_w2: np.ndarray
    meas_quadrature_w2: np.ndarray
    compensated_V0_readback: np.ndarray
    timestamps: np.ndarray
    v0_converged: np.ndarray
    response_rms: np.ndarray
    config: dict = field(default_factory=dict)

    COLUMNS = (
        "d_pz",
        "calib_2w1_amplitude",
        "meas_inphase_w2",
        "meas_quadrature_w2",
        "compensated_V0_readback",
        "timestamps",
        "v0_converged",
        "response_rms",
    )

    @property
    def quasi_static_warning(self) -> bool:
        return bool(np.any(self.response_rms > RMS_LIMIT))

    def to_dict(self):
        out = {"run_index": self.run_index, "seed": self.seed}
        for col in self.COLUMNS:
            arr = getattr(self, col)
            out[col] = arr.astype(int).tolist() if arr.dtype == bool else arr.tolist()
        return out

    @classmethod
    def from_dict(cls, data: dict, config: dict | None = None) -> "RunRecord":
        kw = {col: np.asarray(data[col], dtype=bool if col == "v0_converged" else float) for col in cls.COLUMNS}
        return cls(int(data["run_index"]), int(data["seed"]), config=config or {}, **kw)


@dataclass(frozen=True)
class FeedbackResult:
    residual: float
    readback: float
    converged: bool


def v0_feedback(cfg: RigConfig, d: float, true_V0: float, rng: np.random.Generator | None = None,
                start: float = 0.0, G: float | None = None) -> FeedbackResult:
    """Integral controller that nulls the w1 lock-in component.

    The error signal is the w1/2w1 amplitude ratio, which equals
    ``4 * dV / V_ac`` independent of geometry and ``beta``. The controller
    starts from ``start`` and runs for one dwell time.
    """
    if cfg.V_ac <= 0:
        raise ValueError("V0 feedback needs the w1 excitation (V_ac > 0)")
    if G is None:
        G = auxforce.capacitance_force_coefficient(cfg.R, d)
    steps = max(1, int(round(cfg.dwell_time * cfg.feedback_rate)))
    a2 = cfg.beta * cfg.H_cal * abs(G) * 0.5 * cfg.V_ac**2
    comp = start
    estimate = 0.0
    for _ in range(steps):
        dv = true_V0 - comp
        a1 = cfg.beta * cfg.H1 * 2.0 * abs(G) * dv * cfg.V_ac
        if rng is not None and cfg.v0_noise > 0:
            a1 += rng.normal(0.0, cfg.v0_noise)
        estimate = a1 / a2 * cfg.V_ac / 4.0 * cfg.H_cal / cfg.H1
        comp += cfg.feedback_gain * estimate
    converged = abs(cfg.feedback_gain * estimate) <= cfg.v0_tolerance
    return FeedbackResult(true_V0 - comp, comp, converged)


def inject_artifact(cfg: RigConfig, d_pz, plate_reflectivity_class: str | None = None, slopes: dict | None = None):
    """Optical-lever background, linear in piezo extension (volts)."""
    if slopes is not None:
        slope = slopes[plate_reflectivity_class or cfg.reflectivity_class]
    else:
        slope = cfg.artifact_slope
    return slope * np.asarray(d_pz, dtype=float)


def v0_profile(cfg: RigConfig) -> np.ndarray:
    """Residual potential across the sweep: base plus a smooth rise of ``V0_span``."""
    n = len(cfg.set_points)
    s = np.arange(n) / max(n - 1, 1)
    return cfg.V0_base + cfg.V0_span * 0.5 * (1.0 - np.cos(math.pi * s))


def run_geometry(cfg: RigConfig, run_index: int):
    drift = cfg.drift_per_run * run_index
    d0 = cfg.d0 + drift
    d_pz = np.asarray(cfg.set_points) + (drift if cfg.track_drift else 0.0)
    return d0, d_pz, d0 - d_pz


def simulate_run(cfg: RigConfig, casimir_gradient: Callable = zero_gradient, seed: int = 0,
                 run_index: int = 0, rng: np.random.Generator | None = None) -> tuple[RunRecord, TruthRecord]:
    """Simulate one sweep; returns the observable record and the hidden truth.

    ``casimir_gradient`` maps separation (m) to the Casimir ``dF/dd`` (N/m),
    typically a :class:`~casimirlab.lifshitz.GradientTable`.
    """
    if rng is None:
        rng = np.random.default_rng(seed)
    d0, d_pz, d = run_geometry(cfg, run_index)
    if np.any(d <= 0):
        bad = int(np.argmin(d))
        raise ContactError(f"run {run_index}: set-point {bad} gives d = {d[bad]:.3e} m (contact)")
    n = d.size
    G = auxforce.capacitance_force_coefficient(cfg.R, d)
    Gp = auxforce.capacitance_force_coefficient_gradient(cfg.R, d)
    f_cas = np.asarray(casimir_gradient(d), dtype=float)
    V0 = v0_profile(cfg)

    readback = np.empty(n)
    residual = np.empty(n)
    converged = np.empty(n, dtype=bool)
    comp = 0.0
    for i in range(n):
        if cfg.V_ac > 0:
            fb = v0_feedback(cfg, d[i], V0[i], rng, start=comp, G=G[i])
            comp = fb.readback
            readback[i], residual[i], converged[i] = fb.readback, fb.residual, fb.converged
        else:
            readback[i], residual[i], converged[i] = 0.0, V0[i], False

    calib_force = np.abs(G) * 0.5 * cfg.V_ac**2
    grad_total = f_cas + Gp * (residual**2 + 0.5 * cfg.V_ac**2)
    calib = cfg.beta * cfg.H_cal * calib_force
    inphase = cfg.beta * cfg.H2 * grad_total * cfg.modulation_amplitude + inject_artifact(cfg, d_pz)
    hydro_amp = auxforce.hydrodynamic_quadrature_amplitude(cfg.hydro, cfg.R, d)
    quad = cfg.beta * cfg.H2 * hydro_amp

    # fixed draw order keeps runs bit-reproducible
    noise = rng.standard_normal((3, n))
    calib = calib + cfg.calib_noise * noise[0]
    inphase = inphase + cfg.inphase_noise * noise[1]
    quad = quad + cfg.quadrature_noise * noise[2]

    disp_cal = cfg.H_cal * calib_force / cfg.spring_constant
    disp_mod = cfg.H2 * np.abs(grad_total) * cfg.modulation_amplitude / cfg.spring_constant
    response_rms = np.maximum(disp_cal, disp_mod) / math.sqrt(2.0)

    run_duration = n * cfg.dwell_time
    t = run_index * run_duration + cfg.dwell_time * (np.arange(n) + 1.0)
    record = RunRecord(run_index, seed, d_pz, calib, inphase, quad, readback, t, converged, response_rms, cfg.to_dict())
    truth = TruthRecord(run_index, seed, d0, cfg.beta, V0, d)
    return record, truth


def run_seeds(seed: int, n_runs: int) -> list[int]:
    """Deterministic per-run seeds split from a master seed."""
    children = np.random.SeedSequence(seed).spawn(n_runs)
    return [int(c.generate_state(1, dtype=np.uint32)[0]) for c in children]


def simulate_series(cfg: RigConfig, casimir_gradient: Callable = zero_gradient, seed: int = 0,
                    n_runs: int | None = None, workers: int = 1):
    """Simulate ``n_runs`` independent runs; output is independent of ``workers``."""
    n_runs = cfg.runs_per_series if n_runs is None else n_runs
    seeds = run_seeds(seed, n_runs)

    def one(i):
        return simulate_run(cfg, casimir_gradient, seeds[i], run_index=i)

    if workers <= 1:
        results = [one(i) for i in range(n_runs)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(one, range(n_runs)))
    return [r for r, _ in results], [t for _, t in results]


def artifact_slope_for_threshold(cfg: RigConfig, casimir_gradient: Callable, threshold_d: float = 120e-9,
                                 fraction: float = 0.05) -> float:
    """Slope making the artifact ``fraction`` of the in-phase force signal at ``threshold_d``."""
    G = auxforce.capacitance_force_coefficient_gradient(cfg.R, threshold_d)
    signal = cfg.beta * cfg.H2 * cfg.modulation_amplitude * (float(casimir_gradient(threshold_d)) + G * 0.5 * cfg.V_ac**2)
    return fraction * signal / (cfg.d0 - threshold_d)
