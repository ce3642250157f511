"""Finite-temperature Lifshitz pressure and energy between layered mirrors.

Sign conventions: pressures and energies are negative for attraction. The
sphere-plate force ``F = 2 pi R E`` is therefore negative, and its gradient
``dF/dd = -2 pi R P`` is positive.
"""
from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.constants import Boltzmann as KB
from scipy.constants import c as C_LIGHT
from scipy.constants import hbar as HBAR
from scipy.interpolate import CubicSpline

from .materials import IDEAL_METAL, MaterialError, eval_epsilon, static_response
from .quadrature import graded_laguerre_rule

ZERO_FREQ_POLICIES = ("drude", "plasma")
_EXP_CLAMP = 700.0


class LifshitzError(RuntimeError):
    """Numerical failure inside the Lifshitz engine."""


class ConvergenceError(LifshitzError):
    def __init__(self, message, achieved_error=None):
        super().__init__(message)
        self.achieved_error = achieved_error


class PFAValidityWarning(UserWarning):
    pass


@dataclass(frozen=True)
class Layer:
    material: object
    thickness: float

    def __post_init__(self):
        if not (math.isfinite(self.thickness) and self.thickness > 0):
            raise MaterialError("layer thickness must be positive and finite")
        if self.material is IDEAL_METAL:
            raise MaterialError("the ideal-metal sentinel can only be used as a substrate")


@dataclass(frozen=True)
class LayeredMirror:
    """Films (outermost first) on a semi-infinite substrate, facing vacuum."""

    substrate: object
    layers: tuple[Layer, ...] = ()
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))

    @property
    def is_ideal(self) -> bool:
        return self.substrate is IDEAL_METAL and not self.layers

    @property
    def media(self) -> tuple:
        return tuple(layer.material for layer in self.layers) + (self.substrate,)


def half_space(material, name: str = "") -> LayeredMirror:
    return LayeredMirror(material, (), name)


@dataclass(frozen=True)
class MatsubaraGrid:
    """Matsubara frequencies ``xi_l = 2 pi kB T l / hbar`` with cutoff policy."""

    temperature: float
    zero_frequency: str = "drude"
    rel_tol: float = 1e-8
    l_max_cap: int = 2000
    tail_window: int = 5

    def __post_init__(self):
        if not self.temperature > 0:
            raise ValueError("temperature must be positive")
        if self.zero_frequency not in ZERO_FREQ_POLICIES:
            raise ValueError(f"zero_frequency must be one of {ZERO_FREQ_POLICIES}")
        if self.l_max_cap < self.tail_window:
            raise ValueError("l_max_cap too small")

    @property
    def spacing(self) -> float:
        return 2.0 * math.pi * KB * self.temperature / HBAR

    def xi(self, l):
        return self.spacing * np.asarray(l, dtype=float)


def matsubara_frequencies(temperature: float, zero_frequency: str = "drude", **policy) -> MatsubaraGrid:
    return MatsubaraGrid(temperature, zero_frequency, **policy)


@dataclass(frozen=True)
class QuadratureSpec:
    rule: str = "graded-laguerre"
    nodes: int = 16
    tolerance: float = 1e-6
    max_nodes: int = 128

    def __post_init__(self):
        if self.rule != "graded-laguerre":
            raise ValueError(f"unknown quadrature rule {self.rule!r}")
        if self.nodes < 8:
            raise ValueError("node count must be >= 8")
        if not 0 < self.tolerance <= 1e-3:
            raise ValueError("tolerance must lie in (0, 1e-3]")
        if self.max_nodes < self.nodes:
            raise ValueError("max_nodes must be >= nodes")


# --------------------------------------------------------------------------
# reflection coefficients


def _tm_interface(eps_a, kap_a, eps_b, kap_b):
    num = eps_b * kap_a - eps_a * kap_b
    den = eps_b * kap_a + eps_a * kap_b
    return num / den


def _stack(r_if: list, kappas: list, thicknesses: list):
    """Bottom-up two-interface recursion.

    ``r_if[j]`` is the interface between medium ``j`` and ``j+1`` where
    medium 0 is the gap; ``kappas[j]`` belongs to layer ``j`` (1-based media).
    """
    r = r_if[-1]
    for j in range(len(thicknesses), 0, -1):
        arg = np.minimum(2.0 * kappas[j - 1] * thicknesses[j - 1], _EXP_CLAMP)
        ph = np.exp(-arg)
        top = r_if[j - 1]
        r = (top + r * ph) / (1.0 + top * r * ph)
    return r


def _reflect_dynamic(mirror: LayeredMirror, xi, q):
    """TE/TM coefficients for ``xi > 0``; ``xi`` broadcasts against ``q``."""
    if mirror.is_ideal:
        shape = np.broadcast(xi, q).shape
        return -np.ones(shape), np.ones(shape)
    xic = np.asarray(xi, dtype=float) / C_LIGHT
    xic2 = xic * xic
    kap_gap = np.broadcast_to(q, np.broadcast(xi, q).shape)
    eps_list = [1.0]
    kap_list = [kap_gap]
    ideal_sub = mirror.substrate is IDEAL_METAL
    media = mirror.media[:-1] if ideal_sub else mirror.media
    xi_arr = np.asarray(xi, dtype=float)
    for mat in media:
        eps = eval_epsilon(mat, xi_arr)
        eps_list.append(eps)
        kap_list.append(np.sqrt(q * q + (eps - 1.0) * xic2))
    r_te, r_tm = [], []
    for j in range(len(kap_list) - 1):
        ka, kb = kap_list[j], kap_list[j + 1]
        r_te.append((ka - kb) / (ka + kb))
        r_tm.append(_tm_interface(eps_list[j], ka, eps_list[j + 1], kb))
    if ideal_sub:
        r_te.append(-np.ones_like(kap_gap))
        r_tm.append(np.ones_like(kap_gap))
    thick = [layer.thickness for layer in mirror.layers]
    layer_kaps = kap_list[1 : 1 + len(thick)]
    te = _stack(r_te, layer_kaps, thick)
    tm = _stack(r_tm, layer_kaps, thick)
    return np.broadcast_to(te, kap_gap.shape), np.broadcast_to(tm, kap_gap.shape)


def _static_tm(sa, sb, policy):
    """TM interface coefficient at xi = 0 between static media ``sa`` -> ``sb``."""
    a_inf = sa is not None and sa.is_conductor
    b_inf = sb.is_conductor
    if not a_inf and not b_inf:
        ea = 1.0 if sa is None else sa.eps_static
        return (sb.eps_static - ea) / (sb.eps_static + ea)
    if b_inf and not a_inf:
        return 1.0
    if a_inf and not b_inf:
        return -1.0
    wa = sa.conductivity if policy == "drude" else sa.plasma_sq
    wb = sb.conductivity if policy == "drude" else sb.plasma_sq
    if math.isinf(wa) and math.isinf(wb):
        return 0.0
    if math.isinf(wb):
        return 1.0
    if math.isinf(wa):
        return -1.0
    return (wb - wa) / (wb + wa)


def _reflect_static(mirror: LayeredMirror, q, policy: str):
    """TE/TM coefficients of the ``l = 0`` term under the given policy."""
    q = np.asarray(q, dtype=float)
    if mirror.is_ideal:
        return -np.ones_like(q), np.ones_like(q)
    ideal_sub = mirror.substrate is IDEAL_METAL
    media = mirror.media[:-1] if ideal_sub else mirror.media
    statics = [static_response(m) for m in media]
    thick = [layer.thickness for layer in mirror.layers]
    # at xi = 0 the in-plane wavevector equals q in the gap
    if policy == "drude":
        kaps = [q] * (len(statics) + 1)
        te_if = [np.zeros_like(q) for _ in statics]
    else:
        kaps = [q] + [np.sqrt(q * q + s.plasma_sq / C_LIGHT**2) for s in statics]
        te_if = [(kaps[j] - kaps[j + 1]) / (kaps[j] + kaps[j + 1]) for j in range(len(statics))]
    tm_if = []
    prev = None
    for s in statics:
        tm_if.append(np.full_like(q, _static_tm(prev, s, policy)))
        prev = s
    if ideal_sub:
        te_if.append(-np.ones_like(q))
        tm_if.append(np.ones_like(q))
    layer_kaps = kaps[1 : 1 + len(thick)]
    return _stack(te_if, layer_kaps, thick), _stack(tm_if, layer_kaps, thick)


def reflection_coefficients(mirror: LayeredMirror, xi: float, k, zero_freq_policy: str | None = None):
    """``(r_TE, r_TM)`` of ``mirror`` at imaginary frequency ``xi`` and in-plane ``k``.

    ``xi = 0`` requires an explicit ``zero_freq_policy`` (``"drude"`` or
    ``"plasma"``).
    """
    k = np.asarray(k, dtype=float)
    if np.any(~(k > 0)):
        raise ValueError("k must be positive")
    if xi < 0:
        raise ValueError("xi must be non-negative")
    if xi == 0:
        if zero_freq_policy not in ZERO_FREQ_POLICIES:
            raise ValueError("xi = 0 needs zero_freq_policy 'drude' or 'plasma'")
        te, tm = _reflect_static(mirror, k, zero_freq_policy)
    else:
        q = np.sqrt(k * k + (xi / C_LIGHT) ** 2)
        te, tm = _reflect_dynamic(mirror, xi, q)
    te = np.array(te, dtype=float)
    tm = np.array(tm, dtype=float)
    if te.ndim == 0:
        return float(te), float(tm)
    return te, tm


# --------------------------------------------------------------------------
# Matsubara sum


def _round_trip(m1, m2, xi, q, policy):
    if np.ndim(xi) == 0 and xi == 0:
        te1, tm1 = _reflect_static(m1, q, policy)
        te2, tm2 = _reflect_static(m2, q, policy)
    else:
        te1, tm1 = _reflect_dynamic(m1, xi, q)
        te2, tm2 = _reflect_dynamic(m2, xi, q)
    return te1 * te2, tm1 * tm2


def _kernel(kind, rr, y):
    """Pressure kernel ``y^2 R e^-y/(1-R e^-y)`` or energy kernel ``y ln(1-R e^-y)``."""
    ey = np.exp(-np.minimum(y, _EXP_CLAMP))
    one_minus = (1.0 - rr) - rr * np.expm1(-np.minimum(y, _EXP_CLAMP))
    if kind == "pressure":
        return y * y * rr * ey / one_minus
    x = rr * ey
    return y * np.where(np.abs(x) < 0.5, np.log1p(-x), np.log(np.maximum(one_minus, 1e-300)))


def _term_integrals(kind, m1, m2, d, xis, policy, n):
    """k-integrals for each ``xi`` in ``xis`` with an ``n``-node rule (vectorised)."""
    s, w, _ = graded_laguerre_rule(n)
    y0 = 2.0 * xis * d / C_LIGHT
    y = y0[:, None] + s[None, :]
    q = y / (2.0 * d)
    out = np.empty(xis.size)
    zero = xis == 0
    if np.any(zero):
        qz = q[zero]
        te, tm = _round_trip(m1, m2, 0.0, qz, policy)
        yz = y[zero]
        out[zero] = (_kernel(kind, te, yz) + _kernel(kind, tm, yz)) @ w
    nz = ~zero
    if np.any(nz):
        te, tm = _round_trip(m1, m2, xis[nz][:, None], q[nz], policy)
        yn = y[nz]
        out[nz] = (_kernel(kind, te, yn) + _kernel(kind, tm, yn)) @ w
    return out


def _adaptive_terms(kind, m1, m2, d, xis, policy, quad: QuadratureSpec):
    # the error estimate needs two rules; with no room to refine, compare against half the nodes
    n = quad.nodes if quad.max_nodes > quad.nodes else quad.nodes // 2
    coarse = _term_integrals(kind, m1, m2, d, xis, policy, n)
    while True:
        n2 = min(2 * n, quad.max_nodes)
        fine = _term_integrals(kind, m1, m2, d, xis, policy, n2)
        err = np.abs(fine - coarse)
        # per-term target well below the global tolerance
        floor = 1e-6 * np.max(np.abs(fine)) if fine.size else 0.0
        target = 0.1 * quad.tolerance * np.maximum(np.abs(fine), max(floor, 1e-300))
        if np.all(err <= target):
            return fine, err, n2
        if n2 == quad.max_nodes:
            raise ConvergenceError(
                f"k-quadrature did not reach {quad.tolerance:g} with {n2} nodes at d={d:g} m",
                achieved_error=float(np.max(err / np.maximum(np.abs(fine), 1e-300))),
            )
        n, coarse = n2, fine


@dataclass(frozen=True)
class LifshitzResult:
    value: float
    error_estimate: float
    l_max: int
    nodes: int
    tail_closed: bool = False
    terms: np.ndarray = field(default=None, repr=False, compare=False)


_BLOCK = 32


def lifshitz_sum(kind: str, m1: LayeredMirror, m2: LayeredMirror, d: float,
                 grid: MatsubaraGrid, quad: QuadratureSpec | None = None) -> LifshitzResult:
    """Primed Matsubara sum of the pressure (Pa) or free energy (J/m^2) kernel."""
    if kind not in ("pressure", "energy"):
        raise ValueError("kind must be 'pressure' or 'energy'")
    if not 1e-9 <= d <= 1e-5:
        raise ValueError("separation must lie in [1 nm, 10 um]")
    quad = quad or QuadratureSpec()
    if kind == "pressure":
        scale = -KB * grid.temperature / (math.pi * 8.0 * d**3)
    else:
        scale = KB * grid.temperature / (2.0 * math.pi * 4.0 * d**2)
    for m in (m1, m2):
        if not m.layers and m.substrate is not IDEAL_METAL and _is_vacuum(m.substrate):
            return LifshitzResult(0.0, 0.0, 0, quad.nodes, terms=np.zeros(1))

    terms: list[float] = []
    errs: list[float] = []
    nodes_used = quad.nodes
    l_stop = None
    l_next = 0
    while l_stop is None and l_next <= grid.l_max_cap:
        ls = np.arange(l_next, min(l_next + _BLOCK, grid.l_max_cap + 1))
        vals, err, n_used = _adaptive_terms(kind, m1, m2, d, grid.xi(ls), grid.zero_frequency, quad)
        nodes_used = max(nodes_used, n_used)
        for v, e in zip(vals, err):
            l = len(terms)
            terms.append(0.5 * v if l == 0 else float(v))
            errs.append(0.5 * e if l == 0 else float(e))
            if l >= grid.tail_window and _tail_small(terms, grid):
                l_stop = l
                break
        l_next = ls[-1] + 1

    tail_closed = False
    if l_stop is None:
        l_stop = grid.l_max_cap
        tail, tail_err = _euler_maclaurin_tail(kind, m1, m2, d, grid, quad, terms)
        terms.append(tail)
        errs.append(tail_err)
        tail_closed = True

    arr = np.array(terms)
    total = math.fsum(terms)
    err_total = math.fsum(errs)
    rel = err_total / abs(total) if total != 0 else 0.0
    if rel > quad.tolerance:
        raise ConvergenceError(f"Lifshitz sum error {rel:.2e} exceeds tolerance", achieved_error=rel)
    return LifshitzResult(scale * total, abs(scale) * err_total, l_stop, nodes_used, tail_closed, scale * arr)


def _is_vacuum(model) -> bool:
    from .materials import Composite

    return isinstance(model, Composite) and not model.terms


def _tail_small(terms, grid: MatsubaraGrid) -> bool:
    last = terms[-grid.tail_window :]
    partial = abs(math.fsum(terms))
    if partial == 0:
        return True
    a, b = abs(last[0]), abs(last[-1])
    if b == 0:
        return True
    if a == 0 or b >= a:
        return False
    ratio = (b / a) ** (1.0 / (grid.tail_window - 1))
    tail = b * ratio / (1.0 - ratio)
    return tail < grid.rel_tol * partial


def _euler_maclaurin_tail(kind, m1, m2, d, grid, quad, terms):
    """Close the sum beyond the hard cap by Euler-Maclaurin.

    ``sum_{l>L} f(l) ~ int_L^inf f - f(L)/2 - f'(L)/12`` with the integral taken
    over continuous xi in the scaled variable ``y0 = 2 xi d / c``.
    """
    L = grid.l_max_cap
    dy0 = 2.0 * grid.spacing * d / C_LIGHT  # y0 step per unit l
    y_start = L * dy0
    n = 64
    results = []
    for nn in (n // 2, n):
        t, wt = np.polynomial.laguerre.laggauss(nn)
        xis = (y_start + t) * C_LIGHT / (2.0 * d)
        vals, _, _ = _adaptive_terms(kind, m1, m2, d, xis, grid.zero_frequency, quad)
        results.append(float(np.sum(wt * np.exp(t) * vals)) / dy0)
    integral = results[-1]
    f_l = terms[-1]
    f_prev = terms[-2]
    tail = integral - 0.5 * f_l - (f_l - f_prev) / 12.0
    return tail, abs(results[-1] - results[0])


def plate_plate_pressure(m1, m2, d, grid: MatsubaraGrid, quad: QuadratureSpec | None = None) -> float:
    """Casimir pressure in Pa between two parallel mirrors (negative = attractive)."""
    return lifshitz_sum("pressure", m1, m2, d, grid, quad).value


def plate_plate_free_energy(m1, m2, d, grid: MatsubaraGrid, quad: QuadratureSpec | None = None) -> float:
    """Casimir free energy per unit area in J/m^2."""
    return lifshitz_sum("energy", m1, m2, d, grid, quad).value


# --------------------------------------------------------------------------
# sphere-plate via PFA

PFA_LIMIT = 0.05


@dataclass(frozen=True)
class SpherePlateResult:
    value: float
    pfa_warning: bool

    def __float__(self):
        return self.value


def _pfa_check(R, d):
    if R <= 0 or d <= 0:
        raise ValueError("R and d must be positive")
    bad = d / R > PFA_LIMIT
    if bad:
        warnings.warn(f"d/R = {d / R:.3g} exceeds PFA validity {PFA_LIMIT}", PFAValidityWarning, stacklevel=3)
    return bad


def sphere_plate_force(R, d, m_sphere, m_plate, grid, quad=None) -> SpherePlateResult:
    """``F = 2 pi R E(d)`` in newtons; negative for attraction."""
    bad = _pfa_check(R, d)
    return SpherePlateResult(2.0 * math.pi * R * plate_plate_free_energy(m_sphere, m_plate, d, grid, quad), bad)


def sphere_plate_force_gradient(R, d, m_sphere, m_plate, grid, quad=None) -> SpherePlateResult:
    """``dF/dd = -2 pi R P(d)`` in N/m; positive for an attractive force."""
    bad = _pfa_check(R, d)
    return SpherePlateResult(-2.0 * math.pi * R * plate_plate_pressure(m_sphere, m_plate, d, grid, quad), bad)


def pressure_curve(m1, m2, separations: Sequence[float], grid, quad=None, kind="pressure", workers: int = 1) -> np.ndarray:
    """Evaluate the pressure (or energy) on many separations.

    Each separation is independent, so the result is identical for any
    ``workers`` count.
    """
    ds = [float(d) for d in separations]

    def one(d):
        return lifshitz_sum(kind, m1, m2, d, grid, quad).value

    if workers <= 1:
        return np.array([one(d) for d in ds])
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return np.array(list(ex.map(one, ds)))


class GradientTable:
    """Cached ``dF/dd`` of a sphere-plate pair, interpolated in log-log space.

    Built once from the Lifshitz engine so that many simulated runs can query
    the Casimir gradient at arbitrary separations cheaply.
    """

    def __init__(self, R, m_sphere, m_plate, grid, quad=None, d_min=20e-9, d_max=2e-6, n=64, workers=1):
        self.R = R
        self.d_grid = np.geomspace(d_min, d_max, n)
        p = pressure_curve(m_sphere, m_plate, self.d_grid, grid, quad, workers=workers)
        self.gradient_grid = -2.0 * math.pi * R * p
        if np.all(self.gradient_grid == 0):
            self._spline = None
        else:
            self._spline = CubicSpline(np.log(self.d_grid), np.log(self.gradient_grid))

    def __call__(self, d):
        d = np.asarray(d, dtype=float)
        if self._spline is None:
            return np.zeros_like(d)
        if np.any(d < self.d_grid[0]) or np.any(d > self.d_grid[-1]):
            raise ValueError("separation outside the tabulated range")
        return np.exp(self._spline(np.log(d)))
