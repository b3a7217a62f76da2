"""Quantized evolution of the polarization tree and index selection.

Every node is reduced to at most ``k`` masses before it is split, the root
included. The sweep is depth first so that only one distribution per level
is alive at a time; leaves come out minus-first, i.e. left to right.
"""

from __future__ import annotations

import csv
import json
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Iterator

import numpy as np

from . import _kernels
from .channel import (
    DEDUP_TOL,
    Kernel,
    MassDistribution,
    bhattacharyya,
    from_bec,
    mutual_info,
)

MODES = ("degrade", "upgrade")
DEGRADE_QUANTIZERS = {"merge": _kernels.MERGE, "transport": _kernels.TRANSPORT}
INDEX_ORDERS = ("natural", "bit-reversed")
ZERO_FLOOR = 1e-300
SPLIT_DEPTH = 6
THREADS_ENV = "POLARCONSTRUCT_THREADS"


class InvalidConfig(ValueError):
    pass


@dataclass(frozen=True)
class ConstructionConfig:
    n: int
    k: int
    mode: str = "degrade"
    quantizer: str = "merge"
    kernel: Kernel = Kernel.BHATTACHARYYA
    delta: float | None = None
    index_order: str = "natural"
    tol: float = DEDUP_TOL

    def __post_init__(self):
        object.__setattr__(self, "kernel", Kernel.parse(self.kernel))
        if self.n < 0:
            raise InvalidConfig("n must be non-negative")
        if self.mode not in MODES:
            raise InvalidConfig(f"mode must be one of {MODES}")
        if self.mode == "upgrade":
            if self.k < 2:
                raise InvalidConfig("upgrade mode needs k >= 2")
            object.__setattr__(self, "quantizer", "split")
        else:
            if self.k < 1:
                raise InvalidConfig("degrade mode needs k >= 1")
            if self.quantizer not in DEGRADE_QUANTIZERS:
                raise InvalidConfig(f"degrade quantizer must be one of {tuple(DEGRADE_QUANTIZERS)}")
        if self.delta is not None and not 0.0 <= self.delta <= 1.0:
            raise InvalidConfig("delta must lie in [0, 1]")
        if self.index_order not in INDEX_ORDERS:
            raise InvalidConfig(f"index_order must be one of {INDEX_ORDERS}")

    @property
    def N(self) -> int:
        return 1 << self.n

    @property
    def algo(self) -> int:
        return _kernels.SPLIT if self.mode == "upgrade" else DEGRADE_QUANTIZERS[self.quantizer]

    def as_dict(self) -> dict:
        d = asdict(self)
        d["kernel"] = self.kernel.name.lower()
        return d


@dataclass(frozen=True)
class LeafReport:
    """Per-leaf statistics; ``Pe`` is the error probability (mean crossover)."""

    index: int
    Z: float
    I: float
    Pe: float = math.nan


@dataclass
class Construction:
    """Leaf statistics of one run, indexed in the configured order.

    ``level_*`` arrays have one slot per depth ``0..n``: the summed mutual
    information of the quantized nodes, the summed mutual-information loss
    of quantization plus relaxation at that depth (both only with
    ``track=True``), and the summed kernel-unit quantizer loss.
    """

    config: ConstructionConfig
    z: np.ndarray
    info: np.ndarray
    err: np.ndarray
    root_info: float
    level_sum_info: np.ndarray
    level_info_loss: np.ndarray
    level_kernel_loss: np.ndarray
    tracked: bool
    elapsed: float = 0.0

    def __len__(self) -> int:
        return len(self.z)

    def __getitem__(self, i: int) -> LeafReport:
        return LeafReport(int(i), float(self.z[i]), float(self.info[i]), float(self.err[i]))

    def __iter__(self) -> Iterator[LeafReport]:
        for i in range(len(self)):
            yield self[i]


def bit_reverse_indices(n: int) -> np.ndarray:
    """Permutation sending ``i`` to the integer with ``i``'s n bits reversed."""
    if n < 0:
        raise ValueError("n must be non-negative")
    idx = np.arange(1 << n, dtype=np.int64)
    out = np.zeros_like(idx)
    for b in range(n):
        out |= ((idx >> b) & 1) << (n - 1 - b)
    return out


def bec_relax(w: MassDistribution, delta: float) -> MassDistribution:
    """Swap ``w`` for BEC(Z(w)) once ``Z(w) < delta``."""
    z = bhattacharyya(w)
    return from_bec(z) if z < delta else w


def _reachable_size(m: int, levels: int, k: int) -> int:
    size = max(m, 2)
    for _ in range(levels):
        if size >= k:
            return max(k, 2)
        size = size * (size + 1)
    return min(max(k, 2), size)


def _thread_count(threads: int | None) -> int:
    if threads is None:
        threads = int(os.environ.get(THREADS_ENV, "1") or 1)
    return max(1, int(threads))


def evolve(w0: MassDistribution, cfg: ConstructionConfig, *, track: bool = False,
           threads: int | None = None) -> Construction:
    """Run the quantized polarization tree to depth ``cfg.n``.

    With ``track=True`` the mutual information before and after every
    reduction is recorded per level, which :func:`conservation_audit` needs;
    it costs one extra entropy pass per node.

    Subtrees below a fixed split depth run independently, on up to
    ``threads`` threads (default from ``POLARCONSTRUCT_THREADS``). The split
    depth does not depend on the thread count, so results are identical for
    any thread count.
    """
    start = time.perf_counter()
    n = cfg.n
    kind = cfg.kernel.value
    algo = cfg.algo
    delta = -1.0 if cfg.delta is None else float(cfg.delta)
    k = _reachable_size(len(w0), n, cfg.k)

    level_sum = np.zeros(n + 1)
    level_loss_i = np.zeros(n + 1)
    level_loss_f = np.zeros(n + 1)
    stats = np.zeros(3)
    cap = max(len(w0), 2)
    can_p = np.empty(cap * (cap + 1) + 2)
    can_x = np.empty_like(can_p)

    def settle(raw_p, raw_x, bounds, nr, level):
        dst_p = np.empty(max(k, 2))
        dst_x = np.empty(max(k, 2))
        m = _kernels._process_child(raw_p, raw_x, bounds, nr, can_p, can_x, dst_p, dst_x, k, algo,
                                    kind, delta, cfg.tol, track, level, level_loss_i,
                                    level_loss_f, stats)
        node = (dst_p[:m].copy(), dst_x[:m].copy())
        if track:
            level_sum[level] += _kernels.mutual_info_of(node[0], node[1], m)
        return node

    # a canonical root is a single sorted run
    frontier = [settle(w0.p.copy(), w0.x.copy(), np.array([0, len(w0)]), 1, 0)]
    split = min(n, SPLIT_DEPTH)
    kcap = max(k, 2)
    can_p = np.empty(kcap * (kcap + 1) + 2)
    can_x = np.empty_like(can_p)
    raw_p = np.empty_like(can_p)
    raw_x = np.empty_like(can_p)
    bounds = np.empty(2 * kcap + 1, np.int64)
    for depth in range(1, split + 1):
        nxt = []
        for p, x in frontier:
            for op in (_kernels.minus_raw, _kernels.plus_raw):
                nr = op(p, x, len(p), raw_p, raw_x, bounds)
                nxt.append(settle(raw_p, raw_x, bounds, nr, depth))
        frontier = nxt

    levels = n - split
    width = 1 << levels
    z_tree = np.empty(1 << n)
    i_tree = np.empty(1 << n)
    e_tree = np.empty(1 << n)

    def run(j):
        p, x = frontier[j]
        ls, li, lf = np.zeros(levels + 1), np.zeros(levels + 1), np.zeros(levels + 1)
        sl = slice(j * width, (j + 1) * width)
        _kernels.evolve_subtree(p, x, levels, k, algo, kind, delta, cfg.tol, track,
                                z_tree[sl], i_tree[sl], e_tree[sl], ls, li, lf, ZERO_FLOOR)
        return ls, li, lf

    nthreads = _thread_count(threads)
    if nthreads > 1 and len(frontier) > 1:
        with ThreadPoolExecutor(nthreads) as pool:
            parts = list(pool.map(run, range(len(frontier))))
    else:
        parts = [run(j) for j in range(len(frontier))]
    for ls, li, lf in parts:
        level_sum[split + 1:] += ls[1:]
        level_loss_i[split + 1:] += li[1:]
        level_loss_f[split + 1:] += lf[1:]

    if levels == 0:
        for j, (p, x) in enumerate(frontier):
            z = _kernels.bhattacharyya_of(p, x, len(p))
            z_tree[j] = 0.0 if z < ZERO_FLOOR else z
            i_tree[j] = _kernels.mutual_info_of(p, x, len(p))
            e = _kernels.mean_crossover_of(p, x, len(p))
            e_tree[j] = 0.0 if e < ZERO_FLOOR else e

    if cfg.index_order == "bit-reversed":
        perm = bit_reverse_indices(n)
        z_out, i_out, e_out = np.empty_like(z_tree), np.empty_like(i_tree), np.empty_like(e_tree)
        z_out[perm] = z_tree
        i_out[perm] = i_tree
        e_out[perm] = e_tree
    else:
        z_out, i_out, e_out = z_tree, i_tree, e_tree

    return Construction(
        config=cfg,
        z=z_out,
        info=i_out,
        err=e_out,
        root_info=mutual_info(w0),
        level_sum_info=level_sum,
        level_info_loss=level_loss_i,
        level_kernel_loss=level_loss_f,
        tracked=track,
        elapsed=time.perf_counter() - start,
    )


# ---------------------------------------------------------------------------
# selection


METRICS = ("pe", "z")


@dataclass
class CodeDesign:
    """Chosen information set.

    ``z_sum`` is the Bhattacharyya sum and ``pe_sum`` the summed error
    probability over ``info_set``; both bound the successive-cancellation
    block error. ``metric`` names the one that was held to ``budget``.
    """

    info_set: list[int]
    rate: float
    z_sum: float
    budget: float | None
    N: int
    pe_sum: float = math.nan
    metric: str = "z"

    def frozen_set(self) -> list[int]:
        chosen = set(self.info_set)
        return [i for i in range(self.N) if i not in chosen]


def _leaf_arrays(leaves) -> tuple[np.ndarray, np.ndarray | None, np.ndarray | None]:
    """(Z, Pe, I) arrays from a run, LeafReports, or a bare sequence of Z."""
    if isinstance(leaves, Construction):
        return leaves.z, leaves.err, leaves.info
    if isinstance(leaves, np.ndarray):
        return leaves.astype(float), None, None
    leaves = list(leaves)
    if leaves and isinstance(leaves[0], LeafReport):
        z = np.empty(len(leaves))
        pe = np.empty(len(leaves))
        info = np.empty(len(leaves))
        for leaf in leaves:
            z[leaf.index] = leaf.Z
            pe[leaf.index] = leaf.Pe
            info[leaf.index] = leaf.I
        return z, pe, info
    return np.asarray(leaves, dtype=float), None, None


def _scores(leaves, metric: str) -> tuple[np.ndarray, np.ndarray, np.ndarray | None]:
    if metric not in METRICS:
        raise ValueError(f"metric must be one of {METRICS}")
    z, pe, _ = _leaf_arrays(leaves)
    if pe is not None and np.isnan(pe).any():
        pe = None
    if metric == "pe" and pe is not None:
        return pe, z, pe
    # bare score arrays are taken as-is whatever the metric
    return z, z, pe


def _by_reliability(score: np.ndarray) -> np.ndarray:
    # stable sort keeps the lower index first among equal scores
    return np.argsort(score, kind="stable")


def _design(chosen, z, pe, budget, metric) -> CodeDesign:
    return CodeDesign(
        info_set=sorted(int(i) for i in chosen),
        rate=len(chosen) / len(z),
        z_sum=math.fsum(z[chosen]),
        budget=budget,
        N=len(z),
        pe_sum=math.fsum(pe[chosen]) if pe is not None else math.nan,
        metric=metric,
    )


def select_by_error_budget(leaves, budget: float = 1e-3, metric: str = "pe") -> CodeDesign:
    """Longest run of most reliable indices whose summed score fits ``budget``.

    ``metric="pe"`` ranks and sums leaf error probabilities, ``"z"`` the
    Bhattacharyya parameters. A bare sequence of numbers is used directly as
    the score.
    """
    if not budget > 0:
        raise ValueError("budget must be positive")
    score, z, pe = _scores(leaves, metric)
    order = _by_reliability(score)
    prefix = np.cumsum(score[order])
    count = int(np.searchsorted(prefix, budget, side="right"))
    return _design(order[:count], z, pe, budget, metric)


def select_by_rate(leaves, rate: float, metric: str = "z") -> CodeDesign:
    """The ``floor(N * rate)`` most reliable indices (smallest Z by default)."""
    if not 0.0 <= rate <= 1.0:
        raise ValueError("rate must lie in [0, 1]")
    score, z, pe = _scores(leaves, metric)
    count = int(math.floor(len(score) * rate + 1e-9))
    return _design(_by_reliability(score)[:count], z, pe, None, metric)


def good_fraction(leaves, threshold: float = 0.5) -> float:
    """Fraction of leaves whose mutual information exceeds ``threshold``."""
    _, _, info = _leaf_arrays(leaves)
    if info is None:
        info = np.asarray(leaves, dtype=float)
    return float(np.count_nonzero(info > threshold)) / len(info)


# ---------------------------------------------------------------------------
# diagnostics


@dataclass
class AuditRow:
    level: int
    sum_info: float
    deficit: float
    reported_loss: float
    predicted_deficit: float


@dataclass
class ConservationAudit:
    rows: list[AuditRow] = field(default_factory=list)
    mode: str = "degrade"

    @property
    def max_residual(self) -> float:
        return max((abs(r.deficit - r.predicted_deficit) / 2**r.level for r in self.rows), default=0.0)

    def monotone(self, slack: float = 1e-9) -> bool:
        d = [r.deficit for r in self.rows]
        if self.mode == "degrade":
            return all(b >= a - slack * 2**i for i, (a, b) in enumerate(zip(d, d[1:]), start=1))
        return all(b <= a + slack * 2**i for i, (a, b) in enumerate(zip(d, d[1:]), start=1))

    def ok(self, tol: float = 1e-9) -> bool:
        return self.monotone(tol) and self.max_residual <= tol


def conservation_audit(run: Construction) -> ConservationAudit:
    """Compare per-level mutual-information totals with the doubling rule.

    Splitting preserves total mutual information times two, so at depth
    ``l`` the shortfall against ``2**l * I(W)`` must equal the quantization
    losses pushed down from above: ``D_l = 2 D_{l-1} + loss_l``.
    ``max_residual`` is measured per node (scaled by ``2**-l``).
    """
    if not run.tracked:
        raise ValueError("conservation_audit needs a run made with track=True")
    audit = ConservationAudit(mode=run.config.mode)
    predicted = 0.0
    for level in range(run.config.n + 1):
        loss = float(run.level_info_loss[level])
        predicted = 2.0 * predicted + loss
        total = float(run.level_sum_info[level])
        audit.rows.append(AuditRow(
            level=level,
            sum_info=total,
            deficit=2**level * run.root_info - total,
            reported_loss=loss,
            predicted_deficit=predicted,
        ))
    return audit


# ---------------------------------------------------------------------------
# file outputs


def design_record(design: CodeDesign, cfg: ConstructionConfig) -> dict:
    return {
        "n": cfg.n,
        "k": cfg.k,
        "mode": cfg.mode,
        "kernel": cfg.kernel.name.lower(),
        "budget": design.budget,
        "metric": design.metric,
        "rate": design.rate,
        "z_sum": design.z_sum,
        "pe_sum": None if math.isnan(design.pe_sum) else design.pe_sum,
        "info_set": design.info_set,
    }


def write_design_json(design: CodeDesign, cfg: ConstructionConfig, path: str | Path, **extra) -> None:
    record = design_record(design, cfg)
    record.update(extra)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(record, fh, indent=2)
        fh.write("\n")


def write_leaf_csv(run: Construction, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["index", "Z", "I", "Pe"])
        for i, (z, info, pe) in enumerate(zip(run.z.tolist(), run.info.tolist(), run.err.tolist())):
            out.writerow([i, repr(z), repr(info), repr(pe)])


def read_leaf_csv(path: str | Path) -> list[LeafReport]:
    with open(path, newline="") as fh:
        return [
            LeafReport(int(r["index"]), float(r["Z"]), float(r["I"]), float(r.get("Pe") or "nan"))
            for r in csv.DictReader(fh)
        ]
