"""Reference computations for testing.

The raw transforms enumerate explicit transition matrices literally and
never see the mixture form. The unquantized evolution keeps every mass and
sums leaf functionals with compensated summation. The Monte-Carlo estimator
samples the channel itself rather than averaging the closed-form kernel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .channel import MassDistribution, canonicalize
from .transform import minus, plus

MAX_ALPHABET = 64
MAX_EXACT_DEPTH = 5
MAX_EXACT_MASSES = 10**6


class OracleRefused(RuntimeError):
    """A request would blow past the oracle's size limits."""


@dataclass(frozen=True)
class ExplicitChannel:
    """Binary-input channel given by its transition matrix.

    ``P[u, y]`` is the probability of output ``y`` given input ``u``.
    ``pairing[y]`` is the symmetric partner of ``y``, with
    ``P[0, y] == P[1, pairing[y]]``.
    """

    P: np.ndarray
    pairing: np.ndarray

    def __post_init__(self):
        P = np.asarray(self.P, dtype=float)
        pairing = np.asarray(self.pairing, dtype=np.int64)
        if P.ndim != 2 or P.shape[0] != 2:
            raise ValueError("P must have shape (2, |Y|)")
        if pairing.shape != (P.shape[1],):
            raise ValueError("pairing must have one entry per output")
        if np.any(P < 0) or not np.allclose(P.sum(axis=1), 1.0, rtol=0, atol=1e-12):
            raise ValueError("rows of P must be probability vectors")
        if np.any(pairing[pairing] != np.arange(len(pairing))):
            raise ValueError("pairing must be an involution")
        if not np.allclose(P[0], P[1, pairing], rtol=0, atol=1e-12):
            raise ValueError("pairing is not a symmetry of P")
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "pairing", pairing)

    @property
    def outputs(self) -> int:
        return self.P.shape[1]

    @classmethod
    def bsc(cls, x: float) -> ExplicitChannel:
        return cls(np.array([[1 - x, x], [x, 1 - x]]), np.array([1, 0]))

    @classmethod
    def bec(cls, eps: float) -> ExplicitChannel:
        """Three outputs: 0, erasure, 1."""
        return cls(np.array([[1 - eps, eps, 0.0], [0.0, eps, 1 - eps]]), np.array([2, 1, 0]))

    @classmethod
    def from_mixture(cls, w: MassDistribution) -> ExplicitChannel:
        """Two outputs per component: (i, agree) and (i, flip)."""
        m = len(w)
        P = np.empty((2, 2 * m))
        P[0, 0::2] = w.p * (1 - w.x)
        P[0, 1::2] = w.p * w.x
        P[1, 0::2] = w.p * w.x
        P[1, 1::2] = w.p * (1 - w.x)
        pairing = np.arange(2 * m) ^ 1
        return cls(P, pairing)

    def to_mixture(self) -> MassDistribution:
        """Collapse each output orbit {y, pairing[y]} into one BSC."""
        raw = []
        for y in range(self.outputs):
            partner = self.pairing[y]
            if partner < y:
                continue
            if partner == y:
                raw.append((self.P[0, y], 0.5))
                continue
            a, b = self.P[0, y], self.P[0, partner]
            if a + b > 0:
                raw.append((a + b, min(a, b) / (a + b)))
        return canonicalize(raw)

    def bhattacharyya(self) -> float:
        return math.fsum(np.sqrt(self.P[0] * self.P[1]).tolist())

    def mutual_info(self) -> float:
        """Mutual information in bits under a uniform input."""
        mix = 0.5 * (self.P[0] + self.P[1])
        terms = []
        for u in (0, 1):
            for pu, q in zip(self.P[u].tolist(), mix.tolist()):
                if pu > 0:
                    terms.append(0.5 * pu * math.log2(pu / q))
        return math.fsum(terms)


def _check_alphabet(ch: ExplicitChannel) -> None:
    if ch.outputs > MAX_ALPHABET:
        raise OracleRefused(f"alphabet of {ch.outputs} outputs exceeds {MAX_ALPHABET}")


def raw_minus(ch: ExplicitChannel) -> ExplicitChannel:
    """P-(y1, y2 | u1) = sum_u2 1/2 P(y1 | u1 ^ u2) P(y2 | u2), output y1 * |Y| + y2."""
    _check_alphabet(ch)
    P = ch.P
    Y = ch.outputs
    out = np.zeros((2, Y * Y))
    for u1 in (0, 1):
        for u2 in (0, 1):
            out[u1] += 0.5 * np.outer(P[u1 ^ u2], P[u2]).ravel()
    y1, y2 = np.divmod(np.arange(Y * Y), Y)
    pairing = ch.pairing[y1] * Y + y2
    return ExplicitChannel(out, pairing)


def raw_plus(ch: ExplicitChannel) -> ExplicitChannel:
    """P+(y1, y2, u1 | u2) = 1/2 P(y1 | u1 ^ u2) P(y2 | u2), output (u1 * |Y| + y1) * |Y| + y2."""
    _check_alphabet(ch)
    P = ch.P
    Y = ch.outputs
    out = np.zeros((2, 2 * Y * Y))
    for u2 in (0, 1):
        blocks = [0.5 * np.outer(P[u1 ^ u2], P[u2]).ravel() for u1 in (0, 1)]
        out[u2] = np.concatenate(blocks)
    idx = np.arange(2 * Y * Y)
    u1, rest = np.divmod(idx, Y * Y)
    y1, y2 = np.divmod(rest, Y)
    pairing = (u1 * Y + ch.pairing[y1]) * Y + ch.pairing[y2]
    return ExplicitChannel(out, pairing)


def _z_exact(w: MassDistribution) -> float:
    return math.fsum((w.p * 2.0 * np.sqrt(w.x * (1.0 - w.x))).tolist())


def _i_exact(w: MassDistribution) -> float:
    terms = []
    for p, x in w:
        if 0.0 < x < 1.0:
            terms.append(p * (-x * math.log2(x) - (1 - x) * math.log2(1 - x)))
    return 1.0 - math.fsum(terms)


@dataclass
class ExactLeaves:
    z: list[float]
    info: list[float]
    sizes: list[int]


def exact_evolve(w0: MassDistribution, n: int, max_masses: int = MAX_EXACT_MASSES) -> ExactLeaves:
    """Unquantized evolution to depth ``n`` (at most 5), leaves minus-first.

    Every node keeps all its masses. A level is refused up front if some
    node could produce more than ``max_masses`` entries. ``sizes`` holds the
    largest node per level.
    """
    if not 0 <= n <= MAX_EXACT_DEPTH:
        raise OracleRefused(f"exact evolution supports 0 <= n <= {MAX_EXACT_DEPTH}, got {n}")
    level = [w0]
    sizes = [len(w0)]
    for depth in range(1, n + 1):
        biggest = max(len(w) for w in level)
        if biggest * (biggest + 1) > max_masses:
            raise OracleRefused(
                f"level {depth}: a node of {biggest} masses may grow to "
                f"{biggest * (biggest + 1)} > {max_masses}"
            )
        level = [child for w in level for child in (minus(w), plus(w))]
        sizes.append(max(len(w) for w in level))
    return ExactLeaves([_z_exact(w) for w in level], [_i_exact(w) for w in level], sizes)


@dataclass(frozen=True)
class MonteCarloEstimate:
    mean: float
    stderr: float
    samples: int

    def agrees(self, value: float, sigmas: float = 4.0) -> bool:
        return abs(self.mean - value) <= sigmas * self.stderr + 1e-15


def monte_carlo_Z(w: MassDistribution, samples: int = 100_000, seed: int = 0,
                  chunk: int = 1 << 18) -> MonteCarloEstimate:
    """Estimate Z by sending 0 through the channel.

    A draw picks component ``i`` and flips the bit with probability
    ``x_i``; the output is (i, flip). The estimate averages
    ``sqrt(P(y|1) / P(y|0))``.
    """
    if samples < 1:
        raise ValueError("samples must be at least 1")
    rng = np.random.default_rng(seed)
    cum = np.cumsum(w.p)
    cum[-1] = 1.0
    total = 0.0
    total_sq = 0.0
    left = samples
    while left:
        size = min(left, chunk)
        comp = np.searchsorted(cum, rng.random(size), side="right")
        x = w.x[comp]
        flip = rng.random(size) < x
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(flip, (1 - x) / x, x / (1 - x))
        lr = np.sqrt(ratio)
        total += float(lr.sum())
        total_sq += float((lr * lr).sum())
        left -= size
    mean = total / samples
    var = max(total_sq / samples - mean * mean, 0.0)
    stderr = math.sqrt(var / samples) if samples > 1 else math.inf
    return MonteCarloEstimate(mean, stderr, samples)
