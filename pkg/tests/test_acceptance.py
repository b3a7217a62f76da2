"""End-to-end acceptance checks, one test per criterion.

Each test records a one-line verdict that the terminal summary prints
under "acceptance criteria". The table runs are shared between tests
through module fixtures; the slowest (table 3, about an hour on one core)
only runs with POLARCONSTRUCT_EXTENDED=1 and otherwise checks the
committed full-scale output in results/table3.csv.
"""

import csv
import json
import math
import time
from pathlib import Path

import numpy as np
import pytest

from polarconstruct.channel import (
    Kernel,
    bhattacharyya,
    bsc_for_capacity,
    from_bsc,
    mutual_info,
    random_mixture,
)
from polarconstruct.construct import ConstructionConfig, evolve, select_by_error_budget
from polarconstruct.oracle import (
    MAX_ALPHABET,
    ExplicitChannel,
    exact_evolve,
    monte_carlo_Z,
    raw_minus,
    raw_plus,
)
from polarconstruct.quantize import decay_diagnostic, random_channels, step_cost_bound_check
from polarconstruct.transform import minus, plus

from conftest import EXTENDED

RESULTS = Path(__file__).resolve().parent.parent / "results"

TABLE1_K = [2, 4, 8, 16, 32, 64]
TABLE1 = {
    "degrade": [0.2895, 0.3667, 0.3774, 0.3795, 0.3799, 0.3800],
    "upgrade": [0.4590, 0.3943, 0.3836, 0.3808, 0.3802, 0.3801],
}
TABLE2_N = [5, 8, 11, 14, 17, 20]
TABLE2 = {
    "degrade": [0.1250, 0.2109, 0.2969, 0.3620, 0.4085, 0.4403],
    "upgrade": [0.1250, 0.2109, 0.2974, 0.3633, 0.4102, 0.4423],
}
TABLE3_N = [21, 22, 23, 24, 25]
TABLE3 = {
    "degrade": [0.4484, 0.4555, 0.4616, 0.4669, 0.4715],
    "upgrade": [0.4504, 0.4575, 0.4636, 0.4689, 0.4735],
}
MODES = ("degrade", "upgrade")


def timed_rate(w0, n, k, mode):
    start = time.perf_counter()
    run = evolve(w0, ConstructionConfig(n, k, mode))
    rate = select_by_error_budget(run, 1e-3).rate
    return rate, time.perf_counter() - start


def sweep(points):
    """Rates and wall times for (n, k) points, both modes."""
    w0 = from_bsc(bsc_for_capacity(0.5))
    evolve(w0, ConstructionConfig(2, 2))  # load compiled kernels outside the timings
    rates = {m: [] for m in MODES}
    times = {m: [] for m in MODES}
    for n, k in points:
        for mode in MODES:
            r, t = timed_rate(w0, n, k, mode)
            rates[mode].append(r)
            times[mode].append(t)
    return rates, times


def worst_gap(got, want):
    return max(abs(g - w) for m in MODES for g, w in zip(got[m], want[m]))


def fmt(rates):
    return " ".join(f"{d:.4f}/{u:.4f}" for d, u in zip(rates["degrade"], rates["upgrade"]))


@pytest.fixture(scope="module")
def table1():
    return sweep([(15, k) for k in TABLE1_K])


@pytest.fixture(scope="module")
def table2():
    return sweep([(n, 16) for n in TABLE2_N])


@pytest.mark.criterion(1)
def test_table1_reproduction(table1, record_property):
    rates, times = table1
    total = sum(times["degrade"]) + sum(times["upgrade"])
    gap = worst_gap(rates, TABLE1)
    record_property("detail", f"Table 1 worst gap {gap:.4f} (tol 0.0010), sweep {total:.0f}s "
                              f"(limit 300s): {fmt(rates)}")
    assert gap <= 1e-3 + 1e-12
    assert total <= 300


@pytest.mark.criterion(2)
def test_table2_reproduction(table2, record_property):
    rates, times = table2
    t20 = times["degrade"][-1] + times["upgrade"][-1]
    gap = worst_gap(rates, TABLE2)
    record_property("detail", f"Table 2 worst gap {gap:.4f} (tol 0.0010), n=20 both modes "
                              f"{t20:.0f}s (limit 120s): {fmt(rates)}")
    assert gap <= 1e-3 + 1e-12
    assert t20 <= 120


@pytest.mark.criterion(3)
def test_table3_reproduction(record_property):
    if EXTENDED:
        rates, times = sweep([(n, 16) for n in TABLE3_N])
        source = f"fresh run, {sum(times['degrade']) + sum(times['upgrade']):.0f}s"
    else:
        path = RESULTS / "table3.csv"
        if not path.exists():
            pytest.skip("no recorded full-scale run; set POLARCONSTRUCT_EXTENDED=1")
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert [int(r["n"]) for r in rows] == TABLE3_N
        rates = {m: [float(r[m]) for r in rows] for m in MODES}
        manifest = json.loads((RESULTS / "table3.csv.manifest.json").read_text())
        assert manifest["config"]["scale"] == "full"
        source = (f"recorded full-scale run ({manifest['wall_clock'] / 60:.0f} min); "
                  f"set POLARCONSTRUCT_EXTENDED=1 to recompute")
    gap = worst_gap(rates, TABLE3)
    spread = rates["upgrade"][-1] - rates["degrade"][-1]
    record_property("detail", f"Table 3 worst gap {gap:.4f} (tol 0.0020), n=25 degrade-upgrade "
                              f"gap {spread:.4f} (limit 0.0025), {source}: {fmt(rates)}")
    assert gap <= 2e-3 + 1e-12
    assert spread <= 2.5e-3 + 1e-12


@pytest.mark.criterion(4)
def test_oracle_equivalence(record_property):
    rng = np.random.default_rng(2024)
    worst = 0.0
    compared = 0

    def check(raw, mix):
        nonlocal worst, compared
        worst = max(worst, abs(raw.bhattacharyya() - bhattacharyya(mix)),
                    abs(raw.mutual_info() - mutual_info(mix)))
        compared += 1

    for _ in range(100):
        w = random_mixture(rng, int(rng.integers(1, 5)))
        ch = ExplicitChannel.from_mixture(w)
        for raw_op, op in ((raw_minus, minus), (raw_plus, plus)):
            raw1, mix1 = raw_op(ch), op(w)
            check(raw1, mix1)
            if raw1.outputs > MAX_ALPHABET:
                continue
            for raw_op2, op2 in ((raw_minus, minus), (raw_plus, plus)):
                check(raw_op2(raw1), op2(mix1))
    record_property("detail", f"{compared} transforms on 100 channels (m<=4, n<=2), "
                              f"worst |dZ|,|dI| {worst:.1e} (tol 1e-10)")
    assert worst <= 1e-10


@pytest.mark.criterion(5)
def test_sandwich(record_property):
    rng = np.random.default_rng(55)
    roots = [from_bsc(x) for x in rng.uniform(0.0, 0.5, size=20)]
    slack = 1e-10
    leaves = 0
    for w0 in roots:
        exact = exact_evolve(w0, 4)
        ez, ei = np.array(exact.z), np.array(exact.info)
        for k in (2, 4, 8):
            down = evolve(w0, ConstructionConfig(4, k, "degrade"))
            up = evolve(w0, ConstructionConfig(4, k, "upgrade"))
            assert np.all(down.z >= ez - slack) and np.all(ez >= up.z - slack)
            assert np.all(down.info <= ei + slack) and np.all(ei <= up.info + slack)
            leaves += len(ez)
    record_property("detail", f"{leaves} leaf checks: 20 random BSC roots x k in {{2,4,8}} at n=4, "
                              f"slack 1e-10")


@pytest.mark.criterion(6)
def test_conservation(record_property):
    rng = np.random.default_rng(66)
    worst_i = worst_z = 0.0
    for _ in range(1000):
        w = random_mixture(rng, int(rng.integers(1, 65)))
        lo, hi = minus(w), plus(w)
        worst_i = max(worst_i, abs(mutual_info(lo) + mutual_info(hi) - 2 * mutual_info(w)))
        worst_z = max(worst_z, abs(bhattacharyya(hi) - bhattacharyya(w) ** 2))
    record_property("detail", f"1000 channels (m<=64): worst I gap {worst_i:.1e}, "
                              f"worst Z^2 gap {worst_z:.1e} (tol 1e-9)")
    assert worst_i <= 1e-9 and worst_z <= 1e-9


@pytest.mark.criterion(7)
def test_step_bounds(record_property):
    rng = np.random.default_rng(77)
    worst_ratio = -math.inf
    worst_pair = -math.inf
    failures = 0
    for _ in range(1000):
        w = random_mixture(rng, int(rng.integers(2, 257)))
        res = step_cost_bound_check(w)
        worst_ratio = max(worst_ratio, res.min_transport_cost * res.m**2)
        worst_pair = max(worst_pair, res.worst_pair_gap)
        failures += not res.ok
    record_property("detail", f"1000 instances m in 2..256: max m^2*min p_i d_i {worst_ratio:.3f} "
                              f"(<= 1), max merge-minus-transport {worst_pair:.1e} (<= 0)")
    assert failures == 0


@pytest.mark.criterion(8)
def test_decay(record_property):
    chans = random_channels(88, 5, 1024)
    ks = [8, 16, 32, 64, 128]
    tables = {kern: decay_diagnostic(chans, ks, kern) for kern in Kernel}
    bh, en = tables[Kernel.BHATTACHARYYA], tables[Kernel.ENTROPY]
    record_property("detail", f"slopes: bhattacharyya {bh.slope:.2f}, entropy {en.slope:.2f} "
                              f"(<= -1.0), both monotone {bh.monotone and en.monotone}")
    for table in tables.values():
        assert table.monotone
        assert table.slope <= -1.0


@pytest.mark.criterion(9)
def test_complexity(table1, record_property):
    # doubling at the top of the sweep, where the k^2 term dominates fixed costs;
    # each wall time is the faster of the sweep's run and one repeat
    _, times = table1
    w0 = from_bsc(bsc_for_capacity(0.5))
    best = {}
    for k in (32, 64):
        idx = TABLE1_K.index(k)
        first = times["degrade"][idx] + times["upgrade"][idx]
        again = sum(timed_rate(w0, 15, k, mode)[1] for mode in MODES)
        best[k] = min(first, again)
    ratio = best[64] / best[32]
    record_property("detail", f"n=15 wall time k=32 {best[32]:.1f}s, k=64 {best[64]:.1f}s, "
                              f"ratio {ratio:.2f} (limit 4.5)")
    assert ratio <= 4.5


@pytest.mark.criterion(10)
def test_monte_carlo(record_property):
    rng = np.random.default_rng(1010)
    worst = 0.0
    for seed in range(50):
        w = random_mixture(rng, int(rng.integers(1, 65)))
        est = monte_carlo_Z(w, 100_000, seed=seed)
        worst = max(worst, abs(est.mean - bhattacharyya(w)) / est.stderr)
        assert est.agrees(bhattacharyya(w), 4.0)
    record_property("detail", f"50 channels, 1e5 samples each: worst deviation {worst:.2f} sigma (<= 4)")


# invariants on the same sweeps


def test_table1_monotone_in_k(table1):
    rates, _ = table1
    assert rates["degrade"] == sorted(rates["degrade"])
    assert rates["upgrade"] == sorted(rates["upgrade"], reverse=True)


@pytest.mark.parametrize("fixture", ["table1", "table2"])
def test_degrade_never_above_upgrade(fixture, request):
    rates, _ = request.getfixturevalue(fixture)
    assert all(d <= u for d, u in zip(rates["degrade"], rates["upgrade"]))
