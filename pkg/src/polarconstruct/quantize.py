"""Greedy output-alphabet reduction for BSC mixtures.

Three reductions, each repeating a locally cheapest move until only ``k``
masses remain:

* :func:`transport_degrade` pushes a whole mass onto its right neighbour
  (the result stochastically dominates the input);
* :func:`merge_degrade` replaces two adjacent masses by one at their
  mass-weighted mean crossover;
* :func:`split_upgrade` dissolves an interior mass into its two neighbours
  keeping the mean crossover fixed.

Costs are the change of ``E[f(crossover)]`` for the chosen kernel ``f``.
Ties go to the leftmost candidate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .channel import Kernel, MassDistribution, random_mixture


@dataclass(frozen=True)
class QuantizeReport:
    """Bookkeeping for one reduction.

    ``cumulative_loss`` and ``max_step_loss`` are magnitudes in kernel units;
    ``direction`` says which way ``E[f]`` moved (``+1`` degrade, ``-1``
    upgrade, ``0`` when nothing was done).
    """

    steps: int = 0
    cumulative_loss: float = 0.0
    max_step_loss: float = 0.0
    direction: int = 0

    @property
    def signed_change(self) -> float:
        return self.direction * self.cumulative_loss


def _reduce(w: MassDistribution, k: int, algo: int, kernel: Kernel | str, direction: int):
    kernel = Kernel.parse(kernel)
    if len(w) <= k:
        return w, QuantizeReport()
    p = w.p.copy()
    x = w.x.copy()
    stats = np.zeros(3)
    m = _kernels.reduce_masses(p, x, len(w), k, algo, kernel.value, stats)
    out = MassDistribution(p[:m].copy(), x[:m].copy())
    return out, QuantizeReport(int(stats[0]), float(stats[1]), float(stats[2]), direction)


def transport_degrade(w: MassDistribution, k: int, kernel: Kernel | str = Kernel.BHATTACHARYYA):
    """Reduce to ``min(len(w), k)`` masses by rightward mass moves.

    Each step picks the entry minimizing ``p_i (f(x_{i+1}) - f(x_i))`` and
    adds its mass to the right neighbour.

    Returns
    -------
    (MassDistribution, QuantizeReport)
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    return _reduce(w, k, _kernels.TRANSPORT, kernel, +1)


def merge_degrade(w: MassDistribution, k: int, kernel: Kernel | str = Kernel.BHATTACHARYYA):
    """Reduce to ``min(len(w), k)`` masses by merging adjacent pairs.

    The merged mass sits at the weighted mean, so the mean crossover is
    preserved and ``E[f]`` can only grow.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    return _reduce(w, k, _kernels.MERGE, kernel, +1)


def split_upgrade(w: MassDistribution, k: int, kernel: Kernel | str = Kernel.BHATTACHARYYA):
    """Reduce to ``min(len(w), k)`` masses by splitting interior masses.

    The split mass goes to the neighbours with weights ``1 - t`` and ``t``,
    ``t = (x_i - x_{i-1}) / (x_{i+1} - x_{i-1})``. The extreme entries are
    never removed, hence ``k >= 2``.
    """
    if k < 2:
        raise ValueError("k must be at least 2 for upgrading")
    return _reduce(w, k, _kernels.SPLIT, kernel, -1)


QUANTIZERS = {
    "transport": transport_degrade,
    "merge": merge_degrade,
    "split": split_upgrade,
}


def transport_costs(w: MassDistribution, kernel: Kernel | str = Kernel.BHATTACHARYYA) -> np.ndarray:
    """``p_i (f(x_{i+1}) - f(x_i))`` for every entry but the last."""
    f = Kernel.parse(kernel)(w.x)
    return w.p[:-1] * np.diff(f)


def merge_costs(w: MassDistribution, kernel: Kernel | str = Kernel.BHATTACHARYYA) -> np.ndarray:
    """Increase of ``E[f]`` from merging each adjacent pair."""
    kern = Kernel.parse(kernel)
    p0, p1 = w.p[:-1], w.p[1:]
    x0, x1 = w.x[:-1], w.x[1:]
    xbar = (p0 * x0 + p1 * x1) / (p0 + p1)
    fbar = kern(xbar)
    return p0 * (fbar - kern(x0)) - p1 * (kern(x1) - fbar)


@dataclass
class StepBoundResult:
    m: int
    min_transport_cost: float
    bound: float
    provable_bound: float
    pairwise_ok: bool
    worst_pair_gap: float

    @property
    def bound_ok(self) -> bool:
        return self.min_transport_cost <= self.bound

    @property
    def provable_ok(self) -> bool:
        return self.min_transport_cost <= self.provable_bound

    @property
    def ok(self) -> bool:
        return self.bound_ok and self.pairwise_ok


def step_cost_bound_check(w: MassDistribution, kernel: Kernel | str = Kernel.BHATTACHARYYA,
                          slack: float = 1e-15) -> StepBoundResult:
    """Check the per-step transport bound and merge-vs-transport domination.

    ``bound`` is ``1/m**2``. With only ``m - 1`` candidate moves the
    Cauchy-Schwarz argument yields ``1/(m-1)**2``, reported as
    ``provable_bound``. ``pairwise_ok`` holds when every adjacent merge cost
    is at most the matching transport cost.
    """
    m = len(w)
    if m < 2:
        raise ValueError("need at least two masses")
    tc = transport_costs(w, kernel)
    mc = merge_costs(w, kernel)
    gap = float(np.max(mc - tc))
    return StepBoundResult(
        m=m,
        min_transport_cost=float(tc.min()),
        bound=1.0 / m**2,
        provable_bound=1.0 / (m - 1) ** 2,
        pairwise_ok=bool(gap <= slack),
        worst_pair_gap=gap,
    )


@dataclass
class DecayTable:
    ks: list[int]
    losses: list[float]
    slope: float

    @property
    def monotone(self) -> bool:
        return all(b <= a for a, b in zip(self.losses, self.losses[1:]))

    def rows(self):
        return list(zip(self.ks, self.losses))


def fit_loglog_slope(ks, losses) -> float:
    lk = np.log(np.asarray(ks, dtype=float))
    ll = np.log(np.asarray(losses, dtype=float))
    return float(np.polyfit(lk, ll, 1)[0])


def decay_diagnostic(channels, ks, kernel: Kernel | str = Kernel.ENTROPY, quantizer: str = "merge") -> DecayTable:
    """Mean cumulative loss of ``quantizer`` for each target size in ``ks``.

    ``channels`` is an iterable of distributions; losses are averaged over
    it and a log-log slope is fitted to the result.
    """
    ks = sorted(int(k) for k in ks)
    reduce = QUANTIZERS[quantizer]
    channels = list(channels)
    losses = []
    for k in ks:
        total = 0.0
        for w in channels:
            total += reduce(w, k, kernel)[1].cumulative_loss
        losses.append(total / len(channels))
    positive = [(k, v) for k, v in zip(ks, losses) if v > 0]
    slope = fit_loglog_slope(*zip(*positive)) if len(positive) >= 2 else math.nan
    return DecayTable(ks, losses, slope)


def random_channels(seed: int, count: int, m: int):
    rng = np.random.default_rng(seed)
    return [random_mixture(rng, m) for _ in range(count)]
