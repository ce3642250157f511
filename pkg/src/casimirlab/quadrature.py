"""Fixed-order rules for integrands decaying like ``exp(-y)`` on ``[y0, inf)``."""
from __future__ import annotations

from functools import lru_cache

import numpy as np

HEAD_WIDTH = 1.0


@lru_cache(maxsize=None)
def graded_laguerre_rule(n: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Nodes ``s`` and weights for ``int_0^inf f(s) ds`` on a composite rule.

    ``[0, 1]`` is covered by ``n``-point Gauss-Legendre in ``u`` with
    ``s = u**3``, which absorbs ``s log s`` type endpoint behaviour.
    ``[1, inf)`` uses ``n``-point Gauss-Laguerre with the ``exp(-t)`` weight
    folded back into the weights, so callers evaluate ``f`` directly.

    Returns ``(s, w, decay)`` where ``decay = exp(-(s - 1))`` on tail nodes and
    1 on head nodes; ``w`` already includes ``1/decay`` so that
    ``sum(w * f(s))`` approximates the integral.
    """
    if n < 2 or n > 150:
        raise ValueError("rule order must be in [2, 150]")
    u, wu = np.polynomial.legendre.leggauss(n)
    u = 0.5 * (u + 1.0)
    wu = 0.5 * wu
    s_head = HEAD_WIDTH * u**3
    w_head = HEAD_WIDTH * 3.0 * u**2 * wu
    t, wt = np.polynomial.laguerre.laggauss(n)
    s_tail = HEAD_WIDTH + t
    w_tail = wt * np.exp(t)
    s = np.concatenate([s_head, s_tail])
    w = np.concatenate([w_head, w_tail])
    decay = np.concatenate([np.ones(n), np.exp(-t)])
    for arr in (s, w, decay):
        arr.setflags(write=False)
    return s, w, decay
