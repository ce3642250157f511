"""Electrostatic and hydrodynamic sphere-plate forces.

Forces are signed along the separation axis: negative values pull the
sphere toward the plate. Gradients are ``dF/dd``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.constants import epsilon_0

DEFAULT_SERIES_TOL = 1e-8
MAX_TERMS = 100_000
AIR_VISCOSITY = 1.85e-5  # Pa s at 300 K


class SeriesConvergenceError(ArithmeticError):
    def __init__(self, message, achieved_tolerance):
        super().__init__(message)
        self.achieved_tolerance = achieved_tolerance


@dataclass(frozen=True)
class ElectrostaticConfig:
    R: float
    V_ac_amplitude: float
    omega1: float
    residual_V0: float = 0.0
    series_tolerance: float = DEFAULT_SERIES_TOL

    def __post_init__(self):
        if self.R <= 0:
            raise ValueError("R must be positive")
        if not 0 < self.series_tolerance <= 1e-4:
            raise ValueError("series_tolerance must lie in (0, 1e-4]")
        if self.omega1 <= 0:
            raise ValueError("omega1 must be positive")


@dataclass(frozen=True)
class HydroConfig:
    viscosity: float = AIR_VISCOSITY
    slip_length: float | None = None
    omega2: float = 2 * math.pi * 119.0
    modulation_amplitude: float = 3.85e-9

    def __post_init__(self):
        if self.viscosity <= 0:
            raise ValueError("viscosity must be positive")
        if self.slip_length is not None and self.slip_length <= 0:
            raise ValueError("slip_length must be positive when given")


def _alpha(R, d):
    # cosh(alpha) = 1 + d/R, written to keep precision for d << R
    u = d / R
    return np.log1p(u + np.sqrt(u * (2.0 + u)))


def _series(R, d, tol, derivative):
    """Sum the bispherical series (and optionally its d-derivative) for arrays of d."""
    d = np.atleast_1d(np.asarray(d, dtype=float))
    if np.any(d <= 0) or R <= 0:
        raise ValueError("R and d must be positive")
    if np.any(d / R < 1e-6):
        raise SeriesConvergenceError(
            f"d/R = {float(np.min(d / R)):.2e} < 1e-6: series converges too slowly", achieved_tolerance=math.nan
        )
    a = _alpha(R, d)[:, None]
    coth_a = 1.0 / np.tanh(a)
    csch2_a = 1.0 / np.sinh(a) ** 2
    total = np.zeros(d.size)
    dtotal = np.zeros(d.size)
    last = np.zeros(d.size)
    chunk = 256
    n0 = 1
    done = np.zeros(d.size, dtype=bool)
    with np.errstate(over="ignore"):
        while not np.all(done):
            if n0 > MAX_TERMS:
                raise SeriesConvergenceError("electrostatic series hit the term cap", float(np.max(np.abs(last))))
            n = np.arange(n0, n0 + chunk, dtype=float)[None, :]
            na = np.minimum(n * a, 700.0)
            sh = np.sinh(na)
            cn = 1.0 / np.tanh(na)
            term = (coth_a - n * cn) / sh
            total = total + np.where(done, 0.0, term.sum(axis=1))
            if derivative:
                csch2_n = 1.0 / sh**2
                dterm = (-csch2_a + n * n * csch2_n) / sh - term * n * cn
                dtotal = dtotal + np.where(done, 0.0, dterm.sum(axis=1))
            # geometric tail estimate from the last two terms, once past the peak
            t1, t2 = np.abs(term[:, -2]), np.abs(term[:, -1])
            ratio = np.where(t1 > 0, t2 / np.where(t1 > 0, t1, 1.0), 0.0)
            tail = np.where(ratio < 1.0, t2 * ratio / np.maximum(1.0 - ratio, 1e-300), np.inf)
            past_peak = (n0 + chunk) * a[:, 0] > 1.0
            last = tail / np.maximum(np.abs(total), 1e-300)
            done |= past_peak & (last < tol)
            n0 += chunk
    dalpha_dd = 1.0 / (R * np.sinh(a[:, 0]))
    return total, dtotal * dalpha_dd


def capacitance_force_coefficient(R, d, tol=DEFAULT_SERIES_TOL):
    """``G(d) = F(d, 1 V)`` in N/V^2 from the exact sphere-plane series (array-aware)."""
    s, _ = _series(R, d, tol, derivative=False)
    out = 2.0 * math.pi * epsilon_0 * s
    return float(out[0]) if np.ndim(d) == 0 else out


def capacitance_force_coefficient_gradient(R, d, tol=DEFAULT_SERIES_TOL):
    """``dG/dd`` in N/(V^2 m), term-by-term derivative of the series."""
    _, ds = _series(R, d, tol, derivative=True)
    out = 2.0 * math.pi * epsilon_0 * ds
    return float(out[0]) if np.ndim(d) == 0 else out


def electrostatic_force_exact(R, d, V, tol=DEFAULT_SERIES_TOL):
    """Exact sphere-plane electrostatic force in N (negative, attractive)."""
    if V == 0:
        return 0.0 if np.ndim(d) == 0 else np.zeros(np.shape(d))
    return capacitance_force_coefficient(R, d, tol) * V * V


def electrostatic_force_gradient(R, d, V, tol=DEFAULT_SERIES_TOL):
    if V == 0:
        return 0.0 if np.ndim(d) == 0 else np.zeros(np.shape(d))
    return capacitance_force_coefficient_gradient(R, d, tol) * V * V


def electrostatic_force_pfa(R, d, V):
    return -math.pi * epsilon_0 * R * V * V / np.asarray(d, dtype=float)


@dataclass(frozen=True)
class Harmonics:
    F_dc: float
    F_omega1_amp: float
    F_2omega1_amp: float


def harmonics_from_coefficient(G, delta_V, V_ac) -> Harmonics:
    """Fourier content of ``G * (delta_V + V_ac cos w1 t)**2``."""
    return Harmonics(G * (delta_V**2 + 0.5 * V_ac**2), 2.0 * G * delta_V * V_ac, 0.5 * G * V_ac**2)


def electrostatic_harmonics(cfg: ElectrostaticConfig, d, compensation_V=0.0) -> Harmonics:
    G = capacitance_force_coefficient(cfg.R, d, cfg.series_tolerance)
    return harmonics_from_coefficient(G, cfg.residual_V0 - compensation_V, cfg.V_ac_amplitude)


def slip_factor(d, slip_length):
    """First-order slip correction of the Reynolds drag (1 for no slip)."""
    if slip_length is None:
        return np.ones_like(np.asarray(d, dtype=float)) if np.ndim(d) else 1.0
    x = np.asarray(d, dtype=float) / (6.0 * slip_length)
    return 2.0 * x * ((1.0 + x) * np.log1p(1.0 / x) - 1.0)


def hydrodynamic_drag_coefficient(cfg: HydroConfig, R, d):
    """``6 pi eta R^2 / d * f_slip`` in N s/m."""
    if np.any(np.asarray(d) <= 0):
        raise ValueError("d must be positive")
    return 6.0 * math.pi * cfg.viscosity * R * R / np.asarray(d, dtype=float) * slip_factor(d, cfg.slip_length)


def hydrodynamic_force(cfg: HydroConfig, R, d, plate_velocity):
    """Reynolds drag on the sphere for plate velocity ``v`` (positive = gap opening)."""
    out = -hydrodynamic_drag_coefficient(cfg, R, d) * plate_velocity
    return float(out) if np.ndim(out) == 0 else out


def hydrodynamic_quadrature_amplitude(cfg: HydroConfig, R, d):
    """Force amplitude for ``d(t) = d + a cos(w2 t)``; it lags displacement by 90 degrees."""
    return hydrodynamic_drag_coefficient(cfg, R, d) * cfg.omega2 * cfg.modulation_amplitude
