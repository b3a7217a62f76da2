"""Binary memoryless symmetric channels as finite mixtures of BSCs.

A discrete BMS channel is a random choice among binary symmetric channels:
BSC ``i`` is used with probability ``p[i]`` and has crossover ``x[i]``. The
receiver sees which BSC was used, so the channel is fully described by the
law of the crossover. Because BSC(x) and BSC(1-x) are equivalent, every
crossover is folded into ``[0, 1/2]``.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np
from scipy.optimize import brentq

from . import _kernels

DEDUP_TOL = 1e-12


class InvalidDistribution(ValueError):
    """Raised when a mass list cannot be turned into a channel."""


class Kernel(enum.Enum):
    """Increasing concave functionals on ``[0, 1/2]`` with f(0)=0, f(1/2)=1."""

    BHATTACHARYYA = _kernels.BHATTACHARYYA
    ENTROPY = _kernels.ENTROPY

    @classmethod
    def parse(cls, name: str | Kernel) -> Kernel:
        if isinstance(name, Kernel):
            return name
        key = name.strip().lower()
        for kern in cls:
            if kern.name.lower() == key or kern.name.lower().startswith(key):
                return kern
        raise ValueError(f"unknown kernel {name!r}")

    def __call__(self, x):
        """Evaluate the kernel; accepts scalars or arrays."""
        x = np.clip(np.asarray(x, dtype=float), 0.0, 0.5)
        with np.errstate(divide="ignore", invalid="ignore"):
            if self is Kernel.BHATTACHARYYA:
                out = 2.0 * np.sqrt(x * (1.0 - x))
            else:
                out = -(x * np.log(x) + (1.0 - x) * np.log1p(-x)) / math.log(2.0)
        out = np.where(x <= 0.0, 0.0, np.where(x >= 0.5, 1.0, out))
        return float(out) if out.ndim == 0 else out

    def derivative(self, x: float) -> float:
        """First derivative on the open interval (0, 1/2)."""
        if self is Kernel.BHATTACHARYYA:
            return (1.0 - 2.0 * x) / math.sqrt(x * (1.0 - x))
        return math.log2((1.0 - x) / x)

    def second_derivative(self, x: float) -> float:
        if self is Kernel.BHATTACHARYYA:
            return -0.5 / (x * (1.0 - x)) ** 1.5
        return -1.0 / (x * (1.0 - x) * math.log(2.0))


def binary_entropy(x: float) -> float:
    """h(x) in bits, with h(0) = h(1) = 0."""
    if x <= 0.0 or x >= 1.0:
        return 0.0
    return -x * math.log2(x) - (1.0 - x) * math.log2(1.0 - x)


@dataclass(frozen=True, eq=False)
class MassDistribution:
    """Canonical BSC mixture: ascending distinct crossovers, positive masses.

    Build instances through :func:`canonicalize` or the ``from_*``
    constructors; the raw constructor does not validate.
    """

    p: np.ndarray
    x: np.ndarray

    def __post_init__(self):
        self.p.setflags(write=False)
        self.x.setflags(write=False)

    def __len__(self) -> int:
        return len(self.p)

    def __iter__(self):
        return iter(zip(self.p.tolist(), self.x.tolist()))

    def __eq__(self, other) -> bool:
        if not isinstance(other, MassDistribution):
            return NotImplemented
        return np.array_equal(self.p, other.p) and np.array_equal(self.x, other.x)

    def __repr__(self) -> str:
        body = ", ".join(f"({p:.6g}, {x:.6g})" for p, x in self)
        return f"MassDistribution([{body}])"

    @property
    def entries(self) -> list[tuple[float, float]]:
        return list(self)

    def allclose(self, other: MassDistribution, atol: float = 1e-12) -> bool:
        return (
            len(self) == len(other)
            and np.allclose(self.p, other.p, rtol=0, atol=atol)
            and np.allclose(self.x, other.x, rtol=0, atol=atol)
        )

    def cdf(self, t) -> np.ndarray:
        """P(crossover <= t), vectorized over ``t``."""
        cum = np.concatenate([[0.0], np.cumsum(self.p)])
        return cum[np.searchsorted(self.x, np.asarray(t, dtype=float), side="right")]

    def expect(self, fn) -> float:
        """Expectation of ``fn(crossover)``."""
        return float(np.dot(self.p, np.asarray(fn(self.x), dtype=float)))

    def is_bec(self) -> bool:
        return bool(np.all((self.x == 0.0) | (self.x == 0.5)))


def _from_arrays(p: np.ndarray, x: np.ndarray, tol: float = DEDUP_TOL) -> MassDistribution:
    p = np.ascontiguousarray(p, dtype=np.float64).copy()
    x = np.ascontiguousarray(x, dtype=np.float64).copy()
    m = len(p)
    out_p = np.empty(max(m, 1))
    out_x = np.empty(max(m, 1))
    c = _kernels.canonicalize_into(p, x, m, out_p, out_x, tol) if m else -1
    if c < 0:
        raise InvalidDistribution("distribution has no positive mass")
    return MassDistribution(out_p[:c].copy(), out_x[:c].copy())


def canonicalize(raw: Iterable[tuple[float, float]], tol: float = DEDUP_TOL) -> MassDistribution:
    """Fold, sort, merge near-duplicate crossovers and renormalize.

    Crossovers above 1/2 are replaced by ``1 - x``. Entries whose positions
    differ by at most ``tol`` collapse into one entry at their mass-weighted
    mean; zero masses are dropped.

    >>> canonicalize([(0.3, 0.4), (0.7, 0.1)]).entries
    [(0.7, 0.1), (0.3, 0.4)]
    """
    pairs = [(float(p), float(x)) for p, x in raw]
    if not pairs:
        raise InvalidDistribution("empty mass list")
    arr = np.array(pairs, dtype=float)
    p, x = arr[:, 0], arr[:, 1]
    if np.any(~np.isfinite(arr)) or np.any(p < 0) or np.any((x < 0) | (x > 1)):
        raise InvalidDistribution("masses must be >= 0 and crossovers in [0, 1]")
    return _from_arrays(p, x, tol)


def from_bsc(p: float) -> MassDistribution:
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"crossover must lie in [0, 1], got {p}")
    return MassDistribution(np.array([1.0]), np.array([min(p, 1.0 - p)]))


def from_bec(eps: float) -> MassDistribution:
    if not 0.0 <= eps <= 1.0:
        raise ValueError(f"erasure probability must lie in [0, 1], got {eps}")
    p = np.empty(2)
    x = np.empty(2)
    m = _kernels._write_bec(p, x, eps)
    return MassDistribution(p[:m].copy(), x[:m].copy())


def bsc_for_capacity(capacity: float, xtol: float = 1e-15) -> float:
    """Crossover in [0, 1/2] of the BSC whose capacity is ``capacity``."""
    if not 0.0 <= capacity <= 1.0:
        raise ValueError("capacity must lie in [0, 1]")
    if capacity == 1.0:
        return 0.0
    if capacity == 0.0:
        return 0.5
    return brentq(lambda q: 1.0 - binary_entropy(q) - capacity, 0.0, 0.5, xtol=xtol, rtol=1e-15)


def bhattacharyya(w: MassDistribution) -> float:
    return _kernels.bhattacharyya_of(w.p, w.x, len(w))


def mutual_info(w: MassDistribution) -> float:
    return _kernels.mutual_info_of(w.p, w.x, len(w))


def mean_crossover(w: MassDistribution) -> float:
    return float(np.dot(w.p, w.x))


def expected_kernel(w: MassDistribution, kernel: Kernel) -> float:
    return float(sum(p * _kernels.kernel_value(x, kernel.value) for p, x in w))


def read_csv(path: str | Path) -> MassDistribution:
    """Load a ``p,x`` CSV with one mass per row."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != ["p", "x"]:
            raise InvalidDistribution(f"{path}: expected header 'p,x'")
        rows = [(float(r["p"]), float(r["x"])) for r in reader]
    return canonicalize(rows)


def write_csv(w: MassDistribution, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["p", "x"])
        for p, x in w:
            out.writerow([repr(p), repr(x)])


def parse_channel(spec: str) -> MassDistribution:
    """Parse ``bsc:<p>``, ``bec:<e>`` or ``file:<path>``.

    >>> parse_channel("bec:0.3").entries
    [(0.7, 0.0), (0.3, 0.5)]
    """
    kind, sep, arg = spec.partition(":")
    if not sep:
        raise ValueError(f"channel spec {spec!r} is not of the form kind:value")
    kind = kind.strip().lower()
    if kind == "bsc":
        return from_bsc(float(arg))
    if kind == "bec":
        return from_bec(float(arg))
    if kind == "file":
        return read_csv(arg)
    raise ValueError(f"unknown channel kind {kind!r}")


def random_mixture(rng: np.random.Generator, m: int) -> MassDistribution:
    """Random mixture with ``m`` entries: Dirichlet masses, uniform crossovers."""
    p = rng.dirichlet(np.ones(m))
    x = rng.uniform(0.0, 0.5, size=m)
    return _from_arrays(p, x)

