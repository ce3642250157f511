"""Independent reference implementations used only by the tests.

The Lifshitz oracle integrates in the in-plane wave number ``k`` (the main
engine integrates in a rescaled normal wave number with an adaptive
composite rule), uses a fixed large Matsubara cutoff and writes the film
reflection in closed Airy form instead of a recursion.
"""
from __future__ import annotations

import math

import mpmath
import numpy as np
from scipy.constants import c, hbar, k as k_B, epsilon_0

from casimirlab.materials import IDEAL_METAL, eval_epsilon, static_response


def _half_space_r(eps, kap0, kap1):
    r_te = (kap0 - kap1) / (kap0 + kap1)
    r_tm = (eps * kap0 - kap1) / (eps * kap0 + kap1)
    return r_te, r_tm


def _mirror_r(mirror, xi, k):
    """TE/TM reflection of a half-space or a single film on a substrate, for ``xi > 0``."""
    if mirror.substrate is IDEAL_METAL:
        return -np.ones_like(k), np.ones_like(k)
    kap0 = np.sqrt(k * k + (xi / c) ** 2)
    eps_s = eval_epsilon(mirror.substrate, xi)
    kap_s = np.sqrt(k * k + eps_s * (xi / c) ** 2)
    if not mirror.layers:
        return _half_space_r(eps_s, kap0, kap_s)
    (layer,) = mirror.layers
    eps_f = eval_epsilon(layer.material, xi)
    kap_f = np.sqrt(k * k + eps_f * (xi / c) ** 2)
    a_te, a_tm = _half_space_r(eps_f, kap0, kap_f)
    # film/substrate interface
    b_te = (kap_f - kap_s) / (kap_f + kap_s)
    b_tm = (eps_s * kap_f - eps_f * kap_s) / (eps_s * kap_f + eps_f * kap_s)
    ph = np.exp(-2.0 * kap_f * layer.thickness)
    return (a_te + b_te * ph) / (1 + a_te * b_te * ph), (a_tm + b_tm * ph) / (1 + a_tm * b_tm * ph)


def _static_r(mirror, policy):
    """(r_TE, r_TM) of the zero-frequency term for conductor/ideal mirrors."""
    if mirror.substrate is IDEAL_METAL:
        return -1.0, 1.0
    conductor = any(static_response(m).is_conductor for m in mirror.media)
    if conductor and policy == "drude":
        return 0.0, 1.0
    raise NotImplementedError("oracle only covers conductors under the Drude policy")


def lifshitz_oracle(kind, m1, m2, d, temperature=300.0, policy="drude", l_max=3000, nodes=400):
    """Brute-force Lifshitz pressure (Pa) or energy (J/m^2) between two plates.

    For each Matsubara term the integral over ``k`` is mapped to ``x = 2 kappa_0 d``
    on ``[x0, inf)`` and evaluated with a fixed ``nodes``-point Gauss-Legendre rule
    on ``t in (0, 1)``, ``x = x0 + t / (1 - t)``. Terms with ``x0 > 700`` are dropped.
    """
    t, w = np.polynomial.legendre.leggauss(nodes)
    t = 0.5 * (t + 1.0)
    w = 0.5 * w
    # grade toward t = 0 where the l = 0 integrand carries its log singularity
    s = t**2
    ws = w * 2 * t
    xi1 = 2 * math.pi * k_B * temperature / hbar
    total = 0.0
    for l in range(l_max + 1):
        xi = l * xi1
        x0 = 2 * xi * d / c
        if x0 > 700:
            break
        x = x0 + s / (1 - s)
        jac = ws / (1 - s) ** 2
        kap0 = x / (2 * d)
        if l == 0:
            rte1, rtm1 = _static_r(m1, policy)
            rte2, rtm2 = _static_r(m2, policy)
            rr = [rte1 * rte2 * np.ones_like(x), rtm1 * rtm2 * np.ones_like(x)]
        else:
            k = np.sqrt(np.maximum(kap0**2 - (xi / c) ** 2, 0.0))
            a = _mirror_r(m1, xi, k)
            b = _mirror_r(m2, xi, k)
            rr = [a[0] * b[0], a[1] * b[1]]
        e = np.exp(-x)
        acc = np.zeros_like(x)
        for r in rr:
            if kind == "pressure":
                acc += x * x * r * e / (1 - r * e)
            else:
                acc += x * np.log1p(-r * e)
        val = float(np.sum(acc * jac))
        total += 0.5 * val if l == 0 else val
    if kind == "pressure":
        return -k_B * temperature / (8 * math.pi * d**3) * total
    return k_B * temperature / (8 * math.pi * d**2) * total


def ideal_pressure(d):
    return -math.pi**2 * hbar * c / (240 * d**4)


def ideal_energy(d):
    return -math.pi**2 * hbar * c / (720 * d**3)


def sphere_plane_force_mp(R, d, V, dps=30):
    """Electrostatic sphere-plane force from the capacitance series, in mpmath.

    ``C = 4 pi eps0 R sinh(a) sum 1/sinh(n a)`` with ``cosh a = 1 + d/R``;
    ``F = (V^2 / 2) dC/dd`` differentiated numerically at high precision.
    """
    with mpmath.workdps(dps):
        R_, V_ = mpmath.mpf(R), mpmath.mpf(V)

        def cap(dd):
            a = mpmath.acosh(1 + dd / R_)
            return 4 * mpmath.pi * mpmath.mpf(epsilon_0) * R_ * mpmath.sinh(a) * mpmath.nsum(
                lambda n: 1 / mpmath.sinh(n * a), [1, mpmath.inf]
            )

        return float(V_**2 / 2 * mpmath.diff(cap, mpmath.mpf(d)))
