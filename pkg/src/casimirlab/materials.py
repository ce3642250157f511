"""Dielectric response on the imaginary frequency axis.

All frequencies are angular frequencies in rad/s. Electron-volt values are
accepted only at the configuration boundary and converted with
:data:`EV_TO_RAD_S`.
"""
from __future__ import annotations

import configparser
import io
import math
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence, TextIO, Union

import numpy as np
from scipy.constants import c as C_LIGHT
from scipy.constants import epsilon_0

EV_TO_RAD_S = 1.519267e15


class MaterialError(ValueError):
    """Invalid material definition or evaluation request."""


class KKQualityWarning(UserWarning):
    """The tabulated grid is too coarse for the requested KK accuracy."""


@dataclass(frozen=True)
class Drude:
    plasma_frequency: float
    relaxation_rate: float

    def __post_init__(self):
        if self.plasma_frequency < 0 or self.relaxation_rate < 0:
            raise MaterialError("Drude parameters must be non-negative")


@dataclass(frozen=True)
class LorentzPole:
    strength: float
    resonance: float
    damping: float = 0.0

    def __post_init__(self):
        if self.strength < 0 or self.resonance <= 0 or self.damping < 0:
            raise MaterialError("Lorentz pole needs strength >= 0, resonance > 0, damping >= 0")


@dataclass(frozen=True)
class LorentzPoles:
    poles: tuple[LorentzPole, ...]

    def __post_init__(self):
        object.__setattr__(self, "poles", tuple(self.poles))


LOW_EXTENSIONS = ("drude", "constant", "zero")


@dataclass(frozen=True)
class TabulatedLoss:
    """Sampled loss spectrum ``eps''(omega)`` with explicit tail rules.

    Below the grid the loss continues either as ``A/omega`` matched at the
    lowest point (``"drude"``, for conductors), as a constant (``"constant"``)
    or as zero (``"zero"``). Above the grid it decays as ``omega**-3`` matched
    at the highest point.
    """

    omega_grid: np.ndarray
    eps_imag: np.ndarray
    low_freq_extension: str = "zero"
    high_freq_power: float = 3.0
    tolerance: float = 1e-6

    def __post_init__(self):
        w = np.array(self.omega_grid, dtype=float)
        e = np.array(self.eps_imag, dtype=float)
        if w.ndim != 1 or w.shape != e.shape:
            raise MaterialError("omega_grid and eps_imag must be 1-D and of equal length")
        if w.size < 2:
            raise MaterialError("tabulated loss needs at least 2 points")
        if not np.all(np.isfinite(w)) or not np.all(np.isfinite(e)):
            raise MaterialError("tabulated loss contains non-finite values")
        if w[0] <= 0 or np.any(np.diff(w) <= 0):
            raise MaterialError("omega_grid must be positive and strictly ascending")
        if np.any(e < 0):
            raise MaterialError("eps_imag must be non-negative")
        if self.low_freq_extension not in LOW_EXTENSIONS:
            raise MaterialError(f"low_freq_extension must be one of {LOW_EXTENSIONS}")
        if self.high_freq_power <= 1:
            raise MaterialError("high_freq_power must exceed 1")
        w.setflags(write=False)
        e.setflags(write=False)
        object.__setattr__(self, "omega_grid", w)
        object.__setattr__(self, "eps_imag", e)


@dataclass(frozen=True)
class Composite:
    terms: tuple

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))


class _IdealMetal:
    """Sentinel for a perfect reflector; never evaluated as a permittivity."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "IDEAL_METAL"

    def __reduce__(self):
        return (_IdealMetal, ())


IDEAL_METAL = _IdealMetal()

DielectricModel = Union[Drude, LorentzPoles, TabulatedLoss, Composite]

VACUUM = Composite(())


def eval_epsilon(model: DielectricModel, xi):
    """Permittivity ``eps(i xi)`` for ``xi > 0`` (scalar or array).

    The zero-frequency term of a Matsubara sum is not handled here; see
    :func:`static_response`.
    """
    xi_arr = np.asarray(xi, dtype=float)
    if np.any(~(xi_arr > 0)):
        raise MaterialError("eval_epsilon requires xi > 0")
    out = 1.0 + _susceptibility(model, xi_arr)
    return float(out) if np.ndim(out) == 0 else out


def _susceptibility(model, xi):
    if model is IDEAL_METAL:
        raise MaterialError("the ideal-metal sentinel has no permittivity")
    if isinstance(model, Drude):
        if model.plasma_frequency == 0:
            return np.zeros_like(xi)
        return model.plasma_frequency**2 / (xi * (xi + model.relaxation_rate))
    if isinstance(model, LorentzPoles):
        total = np.zeros_like(xi)
        for p in model.poles:
            w0sq = p.resonance**2
            total = total + p.strength * w0sq / (w0sq + xi**2 + p.damping * xi)
        return total
    if isinstance(model, TabulatedLoss):
        return kk_to_imag_axis(model, xi) - 1.0
    if isinstance(model, Composite):
        total = np.zeros_like(xi)
        for term in model.terms:
            total = total + _susceptibility(term, xi)
        return total
    raise MaterialError(f"unsupported dielectric model {type(model).__name__}")


def _kk_segments(omega, eps2, xi):
    """Exact KK integral of the piecewise-linear interpolant of ``eps2``.

    Returns ``int omega * eps2(omega) / (omega**2 + xi**2) domega`` over the grid
    for each ``xi`` (1-D array).
    """
    wa = omega[:-1][None, :]
    wb = omega[1:][None, :]
    ea = eps2[:-1][None, :]
    eb = eps2[1:][None, :]
    slope = (eb - ea) / (wb - wa)
    icpt = ea - slope * wa
    x = xi[:, None]
    xsq = x * x
    log_term = np.log1p((wb * wb - wa * wa) / (wa * wa + xsq))
    datan = np.arctan2((wb - wa) * x, xsq + wa * wb)
    # dw - x*datan cancels badly for x >> w; use its series there
    dw = wb - wa
    r = np.maximum(wb, wa) / x
    direct = dw - x * datan
    # int_a^b w^2/(w^2+x^2) dw = sum_k (-1)^k (b^(2k+3)-a^(2k+3)) / ((2k+3) x^(2k+2))
    series = np.zeros_like(direct)
    rb = np.minimum(wb / x, 1.0)
    ra = np.minimum(wa / x, 1.0)
    for k in range(8):
        p = 2 * k + 3
        series = series + (-1) ** k * x * (rb**p - ra**p) / p
    quad_part = np.where(r < 1e-2, series, direct)
    seg = 0.5 * icpt * log_term + slope * quad_part
    return seg.sum(axis=1)


def _low_tail(tab: TabulatedLoss, xi):
    w0 = tab.omega_grid[0]
    e0 = tab.eps_imag[0]
    if tab.low_freq_extension == "zero" or e0 == 0:
        return np.zeros_like(xi)
    if tab.low_freq_extension == "constant":
        return 0.5 * e0 * np.log1p((w0 / xi) ** 2)
    amp = e0 * w0  # eps2 = amp / omega
    return amp / xi * np.arctan(w0 / xi)


def _high_tail(tab: TabulatedLoss, xi):
    w1 = tab.omega_grid[-1]
    e1 = tab.eps_imag[-1]
    if e1 == 0:
        return np.zeros_like(xi)
    p = tab.high_freq_power
    if p == 3.0:
        amp = e1 * w1**3
        x = xi / w1
        # (x - atan x)/x^3 with a series near 0
        small = x < 1e-3
        xs = np.where(small, 1.0, x)
        val = np.where(small, 1.0 / 3.0 - x**2 / 5.0 + x**4 / 7.0, (xs - np.arctan(xs)) / xs**3)
        return amp / w1**3 * val
    from scipy.integrate import quad

    out = np.empty_like(xi)
    for i, x in enumerate(xi):
        out[i] = quad(lambda w: e1 * (w1 / w) ** p * w / (w * w + x * x), w1, np.inf, limit=200)[0]
    return out


def kk_to_imag_axis(tab: TabulatedLoss, xi):
    """Kramers-Kronig continuation of a sampled loss to ``eps(i xi)``.

    The integral ``1 + (2/pi) int_0^inf omega eps''(omega)/(omega**2 + xi**2)``
    is evaluated exactly for the piecewise-linear interpolant of the table plus
    the analytic tails. A :class:`KKQualityWarning` is issued when halving the
    grid resolution moves the result by more than ``tab.tolerance``.
    """
    if not isinstance(tab, TabulatedLoss):
        raise MaterialError("kk_to_imag_axis needs a TabulatedLoss")
    xi_arr = np.atleast_1d(np.asarray(xi, dtype=float))
    if np.any(~(xi_arr > 0)):
        raise MaterialError("kk_to_imag_axis requires xi > 0")
    tails = _low_tail(tab, xi_arr) + _high_tail(tab, xi_arr)
    full = _kk_segments(tab.omega_grid, tab.eps_imag, xi_arr) + tails
    eps = 1.0 + (2.0 / math.pi) * full
    if tab.omega_grid.size >= 5:
        # coarse estimate keeps both endpoints so the tails are unchanged
        idx = np.unique(np.r_[np.arange(0, tab.omega_grid.size, 2), tab.omega_grid.size - 1])
        coarse = _kk_segments(tab.omega_grid[idx], tab.eps_imag[idx], xi_arr) + tails
        err = np.abs(full - coarse) / 3.0 * (2.0 / math.pi)
        if np.any(err > tab.tolerance * eps):
            warnings.warn(
                f"tabulated grid too sparse: estimated KK relative error "
                f"{float(np.max(err / eps)):.2e} > {tab.tolerance:.1e}",
                KKQualityWarning,
                stacklevel=2,
            )
    return float(eps[0]) if np.ndim(xi) == 0 else eps


@dataclass(frozen=True)
class StaticResponse:
    """Zero-frequency limits needed by the Lifshitz ``l = 0`` term.

    ``conductivity`` is the DC conductivity in S/m (0 for insulators),
    ``plasma_sq`` the summed squared Drude plasma frequencies (plasma
    prescription), and ``eps_static`` the finite static permittivity of the
    non-conducting part (``inf`` if it diverges without free carriers).
    """

    conductivity: float
    plasma_sq: float
    eps_static: float

    @property
    def is_conductor(self) -> bool:
        return self.conductivity > 0 or self.plasma_sq > 0 or math.isinf(self.eps_static)


def static_response(model: DielectricModel) -> StaticResponse:
    if isinstance(model, Drude):
        wp2 = model.plasma_frequency**2
        if wp2 == 0:
            return StaticResponse(0.0, 0.0, 1.0)
        sigma = math.inf if model.relaxation_rate == 0 else epsilon_0 * wp2 / model.relaxation_rate
        return StaticResponse(sigma, wp2, 1.0)
    if isinstance(model, LorentzPoles):
        return StaticResponse(0.0, 0.0, 1.0 + sum(p.strength for p in model.poles))
    if isinstance(model, TabulatedLoss):
        if model.low_freq_extension == "drude" and model.eps_imag[0] > 0:
            amp = model.eps_imag[0] * model.omega_grid[0]
            return StaticResponse(epsilon_0 * amp, 0.0, math.inf)
        if model.low_freq_extension == "constant" and model.eps_imag[0] > 0:
            return StaticResponse(0.0, 0.0, math.inf)
        w = model.omega_grid
        e = model.eps_imag
        # (2/pi) int eps2/omega over the interpolant plus the omega^-p tail
        grid_part = np.trapz(e / w, w)
        tail = e[-1] / model.high_freq_power
        return StaticResponse(0.0, 0.0, 1.0 + (2.0 / math.pi) * (grid_part + tail))
    if isinstance(model, Composite):
        sigma = 0.0
        wp2 = 0.0
        eps = 1.0
        for term in model.terms:
            s = static_response(term)
            sigma += s.conductivity
            wp2 += s.plasma_sq
            eps += s.eps_static - 1.0
        return StaticResponse(sigma, wp2, eps)
    raise MaterialError(f"unsupported dielectric model {type(model).__name__}")


def eps_imag_on_real_axis(model: DielectricModel, omega):
    """Analytic loss ``eps''(omega)`` of Drude / Lorentz / composite models."""
    omega = np.asarray(omega, dtype=float)
    if isinstance(model, Drude):
        wp, g = model.plasma_frequency, model.relaxation_rate
        return wp**2 * g / (omega * (omega**2 + g**2))
    if isinstance(model, LorentzPoles):
        out = np.zeros_like(omega)
        for p in model.poles:
            w0sq = p.resonance**2
            out = out + p.strength * w0sq * p.damping * omega / ((w0sq - omega**2) ** 2 + (p.damping * omega) ** 2)
        return out
    if isinstance(model, Composite):
        out = np.zeros_like(omega)
        for term in model.terms:
            out = out + eps_imag_on_real_axis(term, omega)
        return out
    raise MaterialError(f"no analytic loss for {type(model).__name__}")


# --------------------------------------------------------------------------
# n,k tables

_NK_COLUMNS = {"wavelength_nm", "omega_rad_s", "n", "k"}


def _split(line: str) -> list[str]:
    if "," in line:
        return [p.strip() for p in line.split(",")]
    if ";" in line:
        return [p.strip() for p in line.split(";")]
    return line.split()


def ingest_nk_table(source: Union[TextIO, str], low_freq_extension: str = "zero") -> TabulatedLoss:
    """Read an ``n, k`` table into a :class:`TabulatedLoss`.

    The first non-comment line is a header naming the columns; exactly one of
    ``wavelength_nm`` / ``omega_rad_s`` must be present, plus ``n`` and ``k``.
    Lines starting with ``#`` are ignored. Commas, semicolons or whitespace
    delimit fields.
    """
    if isinstance(source, str):
        source = io.StringIO(source)
    header = None
    rows = []
    for raw in source:
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = _split(line)
        if header is None:
            header = [p.lower() for p in parts]
            unknown = set(header) - _NK_COLUMNS
            if unknown:
                raise MaterialError(f"unknown n,k columns: {sorted(unknown)}")
            continue
        if len(parts) != len(header):
            raise MaterialError(f"row has {len(parts)} fields, header has {len(header)}: {line!r}")
        try:
            rows.append([float(p) for p in parts])
        except ValueError as exc:
            raise MaterialError(f"non-numeric row {line!r}") from exc
    if header is None:
        raise MaterialError("n,k table has no header")
    has_wl = "wavelength_nm" in header
    has_om = "omega_rad_s" in header
    if has_wl == has_om:
        raise MaterialError("header must declare exactly one of wavelength_nm or omega_rad_s")
    if "n" not in header or "k" not in header:
        raise MaterialError("header must declare n and k columns")
    if len(rows) < 2:
        raise MaterialError("n,k table needs at least 2 rows")
    data = np.array(rows, dtype=float)
    n = data[:, header.index("n")]
    k = data[:, header.index("k")]
    if np.any(n < 0) or np.any(k < 0):
        raise MaterialError("negative n or k in table")
    if has_wl:
        lam = data[:, header.index("wavelength_nm")] * 1e-9
        if np.any(lam <= 0):
            raise MaterialError("wavelengths must be positive")
        omega = 2.0 * math.pi * C_LIGHT / lam
    else:
        omega = data[:, header.index("omega_rad_s")]
    order = np.argsort(omega, kind="stable")
    omega = omega[order]
    eps2 = (2.0 * n * k)[order]
    if np.any(np.diff(omega) == 0):
        raise MaterialError("duplicate frequency in n,k table")
    return TabulatedLoss(omega, eps2, low_freq_extension=low_freq_extension)


# --------------------------------------------------------------------------
# material library

# Literature-typical gold (not fitted to any particular sample).
GOLD = Drude(9.0 * EV_TO_RAD_S, 0.035 * EV_TO_RAD_S)

ITO_RESISTIVITY = 1.6e-6  # ohm m

# Free-carrier plasma frequency typical of sputtered ITO; the damping follows
# from the 1.6e-4 ohm cm resistivity (eps0 wp^2 / gamma = 1/rho). The UV pole
# carries the interband background.
_ITO_WP = 1.5 * EV_TO_RAD_S
ITO = Composite(
    (
        Drude(_ITO_WP, epsilon_0 * _ITO_WP**2 * ITO_RESISTIVITY),
        LorentzPoles((LorentzPole(1.5, 6.0 * EV_TO_RAD_S, 0.5 * EV_TO_RAD_S),)),
    )
)

GLASS = LorentzPoles((LorentzPole(1.1, 13.0 * EV_TO_RAD_S, 0.0),))


class MaterialLibrary(Mapping):
    """Named dielectric models; ``"ideal-metal"`` maps to the sentinel."""

    def __init__(self, models: Mapping[str, object] | None = None, include_defaults: bool = True):
        self._models: dict[str, object] = {}
        if include_defaults:
            self._models.update(
                {
                    "gold": GOLD,
                    "ito": ITO,
                    "glass": GLASS,
                    "vacuum": VACUUM,
                    "ideal-metal": IDEAL_METAL,
                }
            )
        if models:
            self._models.update(models)

    def __getitem__(self, name):
        try:
            return self._models[name]
        except KeyError:
            raise MaterialError(f"unknown material {name!r}; known: {sorted(self._models)}") from None

    def __iter__(self):
        return iter(self._models)

    def __len__(self):
        return len(self._models)

    def with_overrides(self, models: Mapping[str, object]) -> "MaterialLibrary":
        lib = MaterialLibrary(self._models, include_defaults=False)
        lib._models.update(models)
        return lib

    @classmethod
    def from_config(cls, text: str, base_dir: str | None = None) -> "MaterialLibrary":
        """Build a library from INI text; see ``docs/materials.md`` for the schema."""
        parser = configparser.ConfigParser()
        parser.optionxform = str
        parser.read_string(text)
        defs = {}
        for section in parser.sections():
            if not section.startswith("material."):
                raise MaterialError(f"unexpected section [{section}] in material config")
            defs[section[len("material."):]] = dict(parser[section])
        lib = cls()
        built: dict[str, object] = {}

        def build(name, stack=()):
            if name in built:
                return built[name]
            if name not in defs:
                return lib[name]
            if name in stack:
                raise MaterialError(f"cyclic composite definition at {name!r}")
            model = _model_from_section(name, defs[name], lambda n: build(n, stack + (name,)), base_dir)
            built[name] = model
            return model

        for name in defs:
            build(name)
        return lib.with_overrides(built)


def _take_float(sec: dict, key: str, name: str) -> float:
    try:
        return float(sec.pop(key))
    except KeyError:
        raise MaterialError(f"material {name!r}: missing key {key!r}") from None
    except ValueError:
        raise MaterialError(f"material {name!r}: {key!r} is not a number") from None


def _freq(sec: dict, key: str, name: str) -> float:
    if key + "_ev" in sec:
        return _take_float(sec, key + "_ev", name) * EV_TO_RAD_S
    return _take_float(sec, key + "_rad_s", name)


def _model_from_section(name, sec, resolve, base_dir):
    sec = dict(sec)
    kind = sec.pop("type", None)
    if kind == "drude":
        model = Drude(_freq(sec, "plasma_frequency", name), _freq(sec, "relaxation_rate", name))
    elif kind == "lorentz":
        strengths = [float(v) for v in sec.pop("strengths", "").split(",") if v.strip()]
        unit = "ev" if "resonances_ev" in sec else "rad_s"
        scale = EV_TO_RAD_S if unit == "ev" else 1.0
        res = [float(v) * scale for v in sec.pop(f"resonances_{unit}", "").split(",") if v.strip()]
        damp_raw = sec.pop(f"dampings_{unit}", "")
        damp = [float(v) * scale for v in damp_raw.split(",") if v.strip()] or [0.0] * len(res)
        if not (len(strengths) == len(res) == len(damp)) or not res:
            raise MaterialError(f"material {name!r}: strengths/resonances/dampings lengths differ")
        model = LorentzPoles(tuple(LorentzPole(f, w, g) for f, w, g in zip(strengths, res, damp)))
    elif kind == "composite":
        names = [v.strip() for v in sec.pop("terms", "").split(",") if v.strip()]
        model = Composite(tuple(resolve(n) for n in names))
    elif kind == "nk-table":
        import os

        path = sec.pop("file", None)
        if path is None:
            raise MaterialError(f"material {name!r}: nk-table needs 'file'")
        if base_dir and not os.path.isabs(path):
            path = os.path.join(base_dir, path)
        ext = sec.pop("low_freq_extension", "zero")
        with open(path, encoding="utf-8") as fh:
            model = ingest_nk_table(fh, low_freq_extension=ext)
    else:
        raise MaterialError(f"material {name!r}: unknown type {kind!r}")
    if sec:
        raise MaterialError(f"material {name!r}: unknown keys {sorted(sec)}")
    return model


def lorentz_pole_table(poles: LorentzPoles, omega: np.ndarray, low_freq_extension: str = "zero") -> TabulatedLoss:
    """Sample the analytic loss of ``poles`` on ``omega`` (testing helper)."""
    return TabulatedLoss(np.asarray(omega, float), eps_imag_on_real_axis(poles, omega), low_freq_extension)
