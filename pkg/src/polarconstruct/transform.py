"""Minus/plus polarization of BSC mixtures.

Feeding two independent uses of a mixture into the 2x2 kernel gives, for
each pair of component BSCs with crossovers ``a`` and ``b``:

* minus: a single BSC with crossover ``a(1-b) + b(1-a)``;
* plus: with probability ``ab + (1-a)(1-b)`` the two observations agree and
  the crossover is ``ab / q``; otherwise they disagree and the crossover is
  ``a(1-b) / q`` (folded).

Pairs are swept unordered with doubled weight off the diagonal.
"""

from __future__ import annotations

import numpy as np

from . import _kernels
from .channel import DEDUP_TOL, MassDistribution, InvalidDistribution


def _finish(raw_p: np.ndarray, raw_x: np.ndarray, bounds: np.ndarray, nr: int,
            tol: float) -> MassDistribution:
    out_p = np.empty(max(bounds[nr], 1))
    out_x = np.empty_like(out_p)
    m = _kernels.canonicalize_runs(raw_p, raw_x, bounds, nr, out_p, out_x, tol)
    if m < 0:
        raise InvalidDistribution("transform produced no mass")
    return MassDistribution(out_p[:m].copy(), out_x[:m].copy())


def minus(w: MassDistribution, tol: float = DEDUP_TOL) -> MassDistribution:
    m = len(w)
    raw_p = np.empty(m * (m + 1) // 2)
    raw_x = np.empty_like(raw_p)
    bounds = np.empty(m + 1, np.int64)
    nr = _kernels.minus_raw(w.p, w.x, m, raw_p, raw_x, bounds)
    return _finish(raw_p, raw_x, bounds, nr, tol)


def plus(w: MassDistribution, tol: float = DEDUP_TOL) -> MassDistribution:
    m = len(w)
    raw_p = np.empty(m * (m + 1))
    raw_x = np.empty_like(raw_p)
    bounds = np.empty(2 * m + 1, np.int64)
    nr = _kernels.plus_raw(w.p, w.x, m, raw_p, raw_x, bounds)
    return _finish(raw_p, raw_x, bounds, nr, tol)


def transform_pair(w: MassDistribution, tol: float = DEDUP_TOL) -> tuple[MassDistribution, MassDistribution]:
    """Left (minus) and right (plus) children of ``w``."""
    return minus(w, tol), plus(w, tol)
