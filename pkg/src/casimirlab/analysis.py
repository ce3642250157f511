"""Experimenter-side analysis of simulated (or recorded) runs.

The optical-lever artifact is deliberately neither fitted nor subtracted;
Au-plate data above ~120 nm carry it.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import auxforce
from .fitting import FitError, SingularJacobianError, levenberg_marquardt
from .rig import RigConfig, RunRecord

PROVENANCES = ("casimir", "electrostatic-background", "hydrodynamic")


class CalibrationError(RuntimeError):
    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class DegenerateSweepError(CalibrationError):
    pass


class CoverageError(ValueError):
    def __init__(self, message, missing=()):
        super().__init__(message)
        self.missing = list(missing)


@dataclass
class CalibrationResult:
    d0_est: float
    beta_est: float
    covariance: np.ndarray
    residual_norm: float
    set_points_used: int
    iterations: int = 0
    gradient_norm: float = 0.0

    @property
    def d0_sigma(self):
        return math.sqrt(self.covariance[0, 0])

    @property
    def beta_sigma(self):
        return math.sqrt(self.covariance[1, 1])

    def to_dict(self):
        return {
            "d0_est": self.d0_est,
            "beta_est": self.beta_est,
            "covariance": self.covariance.tolist(),
            "residual_norm": self.residual_norm,
            "set_points_used": self.set_points_used,
            "iterations": self.iterations,
            "gradient_norm": self.gradient_norm,
        }


@dataclass
class ForceCurve:
    """Separation-indexed curve.

    For ``casimir`` and ``electrostatic-background`` curves ``value`` is
    ``dF/dd / R`` in Pa; for ``hydrodynamic`` it is the force amplitude in N.
    """

    d: np.ndarray
    value: np.ndarray
    provenance: str
    run_id: int
    flags: np.ndarray = None

    def __post_init__(self):
        self.d = np.asarray(self.d, dtype=float)
        self.value = np.asarray(self.value, dtype=float)
        if self.provenance not in PROVENANCES:
            raise ValueError(f"provenance must be one of {PROVENANCES}")
        if np.any(self.d <= 0):
            raise ValueError("separations must be positive")
        if self.flags is None:
            self.flags = np.zeros(self.d.size, dtype=bool)

    @property
    def unit(self):
        return "N" if self.provenance == "hydrodynamic" else "Pa"

    @property
    def force_gradient_over_R(self):
        if self.provenance == "hydrodynamic":
            raise AttributeError("hydrodynamic curves hold force amplitudes")
        return self.value


def _calibration_model(cfg: RigConfig, d_pz, d0, beta):
    d = d0 - d_pz
    # trial steps into (or next to) contact are rejected by the fitter
    if np.any(d <= 1e-5 * cfg.R):
        return np.full(d_pz.shape, np.inf)
    G = auxforce.capacitance_force_coefficient(cfg.R, d)
    return beta * cfg.H_cal * np.abs(G) * 0.5 * cfg.V_ac**2


def fit_calibration(run: RunRecord, cfg: RigConfig, weighting: str = "uniform",
                    min_points: int = 10, min_span: float = 5.0) -> CalibrationResult:
    """Fit the 2w1 calibration amplitudes for ``(d0, beta)``.

    Damped Gauss-Newton with an analytic ``beta`` column and a central
    finite-difference ``d0`` column. ``weighting="relative"`` weights each
    point by the inverse of its signal.
    """
    x = np.asarray(run.d_pz, dtype=float)
    y = np.asarray(run.calib_2w1_amplitude, dtype=float)
    order = np.argsort(x, kind="stable")
    x, y = x[order], y[order]
    if x.size < min_points:
        raise DegenerateSweepError(f"need >= {min_points} set-points, got {x.size}")
    if cfg.V_ac <= 0:
        raise DegenerateSweepError("calibration needs a nonzero AC excitation")
    if weighting == "uniform":
        w = np.ones_like(y)
    elif weighting == "relative":
        w = 1.0 / np.maximum(np.abs(y), np.max(np.abs(y)) * 1e-6)
    else:
        raise ValueError("weighting must be 'uniform' or 'relative'")

    # initial guess: beyond the full sweep; beta is the least-squares signal
    # ratio at that d0 (a single far point is too noisy to trust)
    d0_init = float(np.max(x)) + 100e-9
    unit = _calibration_model(cfg, x, d0_init, 1.0)
    beta_init = float(np.sum(w * w * y * unit) / np.sum(w * w * unit * unit))
    if not beta_init > 0:
        raise DegenerateSweepError("calibration signal is not positive")

    d_scale = 1e-9
    b_scale = beta_init

    def unpack(p):
        return p[0] * d_scale, p[1] * b_scale

    def resid(p):
        d0, beta = unpack(p)
        return w * (_calibration_model(cfg, x, d0, beta) - y)

    def jac(p):
        d0, beta = unpack(p)
        J = np.empty((x.size, 2))
        h = 1e-3  # nm
        up = _calibration_model(cfg, x, d0 + h * d_scale, beta)
        dn = _calibration_model(cfg, x, d0 - h * d_scale, beta)
        J[:, 0] = w * (up - dn) / (2.0 * h)
        J[:, 1] = w * _calibration_model(cfg, x, d0, 1.0) * b_scale
        return J

    try:
        res = levenberg_marquardt(resid, jac, np.array([d0_init / d_scale, 1.0]))
    except SingularJacobianError as exc:
        raise DegenerateSweepError(str(exc), best=exc.best) from exc
    except FitError as exc:
        raise CalibrationError(str(exc), best=exc.best) from exc
    d0, beta = unpack(res.x)
    d = d0 - x
    if np.min(d) <= 0 or np.max(d) / np.min(d) < min_span:
        raise DegenerateSweepError(f"sweep spans only a factor {np.max(d) / np.min(d):.2f} in separation")
    dof = max(x.size - 2, 1)
    s2 = float(res.residual @ res.residual) / dof
    JtJ = res.jacobian.T @ res.jacobian
    try:
        cov_scaled = np.linalg.inv(JtJ) * s2
    except np.linalg.LinAlgError as exc:
        raise DegenerateSweepError("singular Jacobian at optimum") from exc
    S = np.diag([d_scale, b_scale])
    cov = S @ cov_scaled @ S
    resid_norm = float(np.linalg.norm(res.residual / w))
    return CalibrationResult(d0, beta, cov, resid_norm, int(x.size), res.iterations, res.gradient_norm)


def electrostatic_background(cfg: RigConfig, d):
    """``dF/dd`` of the AC calibration potential (N/m) at separations ``d``."""
    return auxforce.capacitance_force_coefficient_gradient(cfg.R, d) * 0.5 * cfg.V_ac**2


def extract_force_gradient(run: RunRecord, cal: CalibrationResult, cfg: RigConfig,
                           background_limit: float = 0.5) -> ForceCurve:
    """Casimir ``dF/dd / R`` with the calibration-potential background removed."""
    d = cal.d0_est - np.asarray(run.d_pz)
    if np.any(d <= 0):
        raise CalibrationError("calibration places set-points at or beyond contact")
    total = np.asarray(run.meas_inphase_w2) / (cal.beta_est * cfg.modulation_amplitude * cfg.H2)
    bg = electrostatic_background(cfg, d)
    flags = np.abs(bg) > background_limit * np.abs(total)
    return ForceCurve(d, (total - bg) / cfg.R, "casimir", run.run_index, flags)


def background_curve(run: RunRecord, cal: CalibrationResult, cfg: RigConfig) -> ForceCurve:
    d = cal.d0_est - np.asarray(run.d_pz)
    return ForceCurve(d, electrostatic_background(cfg, d) / cfg.R, "electrostatic-background", run.run_index)


def extract_hydrodynamic(run: RunRecord, cal: CalibrationResult, cfg: RigConfig) -> ForceCurve:
    """Hydrodynamic force amplitude (N) from the quadrature channel."""
    d = cal.d0_est - np.asarray(run.d_pz)
    if np.any(d <= 0):
        raise CalibrationError("calibration places set-points at or beyond contact")
    amp = np.asarray(run.meas_quadrature_w2) / (cal.beta_est * cfg.H2)
    return ForceCurve(d, amp, "hydrodynamic", run.run_index)


def interpolate_at(curve: ForceCurve, probe_d: float, window: float, exponent: float = 3.0):
    """Value at ``probe_d``, linear in ``d**-exponent`` between neighbours.

    Returns ``None`` when no point lies within ``window`` of ``probe_d`` or the
    probe is not bracketed.
    """
    d = curve.d
    if np.min(np.abs(d - probe_d)) > window:
        return None
    order = np.argsort(d)
    ds, vs = d[order], curve.value[order]
    hit = np.nonzero(ds == probe_d)[0]
    if hit.size:
        return float(vs[hit[0]])
    j = np.searchsorted(ds, probe_d)
    if j == 0 or j == ds.size:
        return None
    u = ds[j - 1 : j + 1] ** (-exponent)
    t = (probe_d ** (-exponent) - u[0]) / (u[1] - u[0])
    return float(vs[j - 1] + t * (vs[j] - vs[j - 1]))


@dataclass
class EnsembleStats:
    probe_d: float
    values: np.ndarray
    mean: float
    std: float
    sem: float
    bin_edges: np.ndarray
    counts: np.ndarray
    bin_rule: str = "freedman-diaconis"
    run_ids: list = field(default_factory=list)

    @property
    def count(self):
        return int(self.values.size)

    def to_dict(self):
        return {
            "probe_d": self.probe_d,
            "count": self.count,
            "mean": self.mean,
            "std": self.std,
            "sem": self.sem,
            "bin_rule": self.bin_rule,
            "bin_edges": self.bin_edges.tolist(),
            "counts": self.counts.tolist(),
            "values": self.values.tolist(),
            "run_ids": list(self.run_ids),
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            float(data["probe_d"]),
            np.asarray(data["values"], float),
            float(data["mean"]),
            float(data["std"]),
            float(data["sem"]),
            np.asarray(data["bin_edges"], float),
            np.asarray(data["counts"], int),
            data.get("bin_rule", "freedman-diaconis"),
            list(data.get("run_ids", [])),
        )


def summarize(values, probe_d, run_ids=()) -> EnsembleStats:
    v = np.asarray(values, dtype=float)
    mean = float(np.mean(v))
    # identical values: exact zero rather than rounding noise of the mean
    std = float(np.std(v, ddof=1)) if v.size > 1 and np.ptp(v) > 0 else 0.0
    sem = std / math.sqrt(v.size)
    if std == 0.0:
        edges = np.array([mean - 0.5, mean + 0.5]) if mean == 0 else np.array([mean, mean]) * [0.999, 1.001]
        edges = np.sort(edges)
        counts = np.array([v.size])
    else:
        counts, edges = np.histogram(v, bins="fd")
    return EnsembleStats(float(probe_d), v, mean, std, sem, edges, counts, run_ids=list(run_ids))


def ensemble_statistics(curves: Sequence[ForceCurve], probe_d: float, window: float,
                        exponent: float = 3.0, min_curves: int = 30) -> EnsembleStats:
    """Statistics of many curves at one separation (Freedman-Diaconis histogram)."""
    if len(curves) < min_curves:
        raise CoverageError(f"need >= {min_curves} curves, got {len(curves)}")
    vals, ids, missing = [], [], []
    for c in curves:
        v = interpolate_at(c, probe_d, window, exponent)
        if v is None:
            missing.append(c.run_id)
        else:
            vals.append(v)
            ids.append(c.run_id)
    if missing:
        raise CoverageError(f"{len(missing)} runs lack coverage near d = {probe_d:.3e} m: {missing[:20]}", missing)
    return summarize(vals, probe_d, ids)


@dataclass(frozen=True)
class Ratio:
    value: float
    uncertainty: float


def compare_pairs(stats_a: EnsembleStats, stats_b: EnsembleStats, rtol: float = 1e-9) -> Ratio:
    """``mean_b / mean_a`` with first-order propagated standard error."""
    if not math.isclose(stats_a.probe_d, stats_b.probe_d, rel_tol=rtol):
        raise ValueError("ensembles were probed at different separations")
    if stats_a.mean == 0:
        raise ZeroDivisionError("reference ensemble has zero mean")
    ratio = stats_b.mean / stats_a.mean
    rel_b = stats_b.sem / stats_b.mean if stats_b.mean != 0 else 0.0
    unc = abs(ratio) * math.hypot(stats_a.sem / stats_a.mean, rel_b)
    return Ratio(ratio, unc)


@dataclass
class RunAnalysis:
    calibration: CalibrationResult
    casimir: ForceCurve
    hydrodynamic: ForceCurve


def analyze_run(run: RunRecord, cfg: RigConfig, weighting: str = "uniform") -> RunAnalysis:
    cal = fit_calibration(run, cfg, weighting)
    return RunAnalysis(cal, extract_force_gradient(run, cal, cfg), extract_hydrodynamic(run, cal, cfg))


def drift_slope(d0_values: Sequence[float]) -> float:
    """Least-squares slope of fitted d0 against run index (m per run)."""
    y = np.asarray(d0_values, dtype=float)
    return float(np.polyfit(np.arange(y.size, dtype=float), y, 1)[0])


def mean_curve(curves: Sequence[ForceCurve], separations, window: float, exponent: float = 1.0) -> np.ndarray:
    """Ensemble mean at each separation (interpolated per curve)."""
    out = []
    for dp in separations:
        vals = [interpolate_at(c, dp, window, exponent) for c in curves]
        vals = [v for v in vals if v is not None]
        if not vals:
            raise CoverageError(f"no curve covers d = {dp:.3e} m")
        out.append(float(np.mean(vals)))
    return np.array(out)
