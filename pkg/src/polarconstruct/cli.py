"""Command-line front end.

Subcommands:

    construct   evolve one channel and write the chosen information set
    table       regenerate the rate tables as CSV
    diagnose    run an invariant suite; exit 1 on the first violation

Exit codes: 0 success, 1 invariant failure, 2 bad arguments, 3 refused
(too large for this tool, or table 3 at ci scale).
"""

from __future__ import annotations

import argparse
import csv
import json
import platform
import sys
import time
from dataclasses import asdict, dataclass, field
from importlib import metadata
from pathlib import Path

import numpy as np

from . import oracle
from .channel import (
    InvalidDistribution,
    Kernel,
    MassDistribution,
    bhattacharyya,
    bsc_for_capacity,
    from_bsc,
    mutual_info,
    parse_channel,
    random_mixture,
)
from .construct import (
    INDEX_ORDERS,
    METRICS,
    ConstructionConfig,
    InvalidConfig,
    conservation_audit,
    evolve,
    select_by_error_budget,
    write_design_json,
    write_leaf_csv,
)
from .quantize import decay_diagnostic, random_channels, step_cost_bound_check
from .transform import minus, plus

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_REFUSED = 0, 1, 2, 3
MAX_N = 30

TABLE_SWEEPS = {
    1: ("k", [2, 4, 8, 16, 32, 64], lambda v: (15, v)),
    2: ("n", [5, 8, 11, 14, 17, 20], lambda v: (v, 16)),
    3: ("n", [21, 22, 23, 24, 25], lambda v: (v, 16)),
}
CI_MAX_N = 20


class Refused(Exception):
    pass


class UsageError(Exception):
    pass


@dataclass
class RunManifest:
    command: str
    config: dict
    channel: str
    versions: dict
    wall_clock: float
    outputs: list[str] = field(default_factory=list)

    def write(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(asdict(self), fh, indent=2)
            fh.write("\n")


def _versions() -> dict:
    out = {"python": platform.python_version()}
    for dist in ("artifact", "numpy", "scipy", "numba"):
        try:
            out[dist] = metadata.version(dist)
        except metadata.PackageNotFoundError:
            out[dist] = None
    return out


def _manifest_path(out: Path) -> Path:
    return out.with_name(out.name + ".manifest.json")


def capacity_half_bsc() -> MassDistribution:
    return from_bsc(bsc_for_capacity(0.5))


def _rate(w0: MassDistribution, n: int, k: int, mode: str, budget: float, metric: str,
          threads: int | None) -> float:
    run = evolve(w0, ConstructionConfig(n, k, mode), threads=threads)
    return select_by_error_budget(run, budget, metric).rate


def table_rows(which: int, scale: str = "full", budget: float = 1e-3, metric: str = "pe",
               threads: int | None = None, log=None):
    """Yield ``(axis value, degrade rate, upgrade rate)`` for one table."""
    if which not in TABLE_SWEEPS:
        raise UsageError(f"unknown table {which}")
    axis, values, nk = TABLE_SWEEPS[which]
    if scale == "ci" and any(nk(v)[0] > CI_MAX_N for v in values):
        raise Refused(f"table {which} needs n > {CI_MAX_N}; run it with --scale full")
    w0 = capacity_half_bsc()
    for v in values:
        n, k = nk(v)
        start = time.perf_counter()
        rates = [_rate(w0, n, k, mode, budget, metric, threads) for mode in ("degrade", "upgrade")]
        if log:
            log(f"{axis}={v}: {rates[0]:.4f} {rates[1]:.4f} ({time.perf_counter() - start:.1f}s)")
        yield v, rates[0], rates[1]


# ---------------------------------------------------------------------------
# subcommands


def cmd_construct(args) -> int:
    if args.n > MAX_N:
        raise Refused(f"n={args.n} exceeds the supported maximum {MAX_N}")
    w0 = parse_channel(args.channel)
    cfg = ConstructionConfig(
        n=args.n,
        k=args.k,
        mode=args.mode,
        quantizer=args.quantizer,
        kernel=args.kernel,
        delta=args.delta,
        index_order=args.order,
    )
    start = time.perf_counter()
    run = evolve(w0, cfg, threads=args.threads)
    design = select_by_error_budget(run, args.budget, args.metric)
    outputs = []
    if args.out:
        out = Path(args.out)
        write_design_json(design, cfg, out, channel=args.channel)
        outputs.append(str(out))
    if args.leaves:
        write_leaf_csv(run, args.leaves)
        outputs.append(str(args.leaves))
    elapsed = time.perf_counter() - start
    if args.out:
        RunManifest("construct", cfg.as_dict() | {"budget": args.budget, "metric": args.metric},
                    args.channel, _versions(), elapsed, outputs).write(_manifest_path(Path(args.out)))
    print(f"rate {design.rate:.4f}")
    print(f"info bits {len(design.info_set)} of {design.N}, z_sum {design.z_sum:.3e}, "
          f"pe_sum {design.pe_sum:.3e}", file=sys.stderr)
    return EXIT_OK


def cmd_table(args) -> int:
    start = time.perf_counter()
    log = (lambda s: print(s, file=sys.stderr)) if args.verbose else None
    rows = list(table_rows(args.which, args.scale, args.budget, args.metric, args.threads, log))
    axis = TABLE_SWEEPS[args.which][0]
    fh = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([axis, "degrade", "upgrade"])
        for v, d, u in rows:
            writer.writerow([v, f"{d:.4f}", f"{u:.4f}"])
    finally:
        if args.out:
            fh.close()
    if args.out:
        config = {"which": args.which, "scale": args.scale, "budget": args.budget,
                  "metric": args.metric, "kernel": "bhattacharyya",
                  "rates": [[v, d, u] for v, d, u in rows]}
        RunManifest("table", config, f"bsc:{bsc_for_capacity(0.5)!r}", _versions(),
                    time.perf_counter() - start, [args.out]).write(_manifest_path(Path(args.out)))
    return EXIT_OK


def _fail(suite: str, instance: dict) -> int:
    print(json.dumps({"suite": suite, "violation": instance}, indent=2), file=sys.stderr)
    print(f"{suite}: FAIL")
    return EXIT_FAIL


def _diag_step_bounds(args) -> int:
    rng = np.random.default_rng(args.seed)
    worst = 0.0
    for t in range(args.count):
        w = random_mixture(rng, args.m)
        res = step_cost_bound_check(w, args.kernel)
        worst = max(worst, res.min_transport_cost * res.m**2)
        if not res.ok:
            return _fail("step-bounds", {"trial": t, "p": w.p.tolist(), "x": w.x.tolist(),
                                         **asdict(res)})
    print(f"step-bounds: {args.count} instances, m={args.m}, max m^2 * min p_i d_i = {worst:.4f}")
    print("step-bounds: PASS")
    return EXIT_OK


def _diag_decay(args) -> int:
    chans = random_channels(args.seed, args.count, args.m)
    table = decay_diagnostic(chans, [8, 16, 32, 64, 128], args.kernel, args.quantizer)
    for k, loss in table.rows():
        print(f"k={k:4d} loss={loss:.6e}")
    print(f"slope {table.slope:.3f}")
    if not table.monotone:
        return _fail("decay", {"ks": table.ks, "losses": table.losses})
    print("decay: PASS")
    return EXIT_OK


def _diag_conservation(args) -> int:
    w0 = parse_channel(args.channel)
    run = evolve(w0, ConstructionConfig(args.n, args.k, args.mode), track=True)
    audit = conservation_audit(run)
    for r in audit.rows:
        print(f"level {r.level:2d} deficit {r.deficit:.3e} predicted {r.predicted_deficit:.3e}")
    if not audit.ok():
        return _fail("conservation", {"rows": [asdict(r) for r in audit.rows]})
    print("conservation: PASS")
    return EXIT_OK


def _diag_sandwich(args) -> int:
    w0 = parse_channel(args.channel)
    exact = oracle.exact_evolve(w0, args.n)
    down = evolve(w0, ConstructionConfig(args.n, args.k, "degrade"))
    up = evolve(w0, ConstructionConfig(args.n, max(args.k, 2), "upgrade"))
    slack = 1e-10
    for i in range(len(exact.z)):
        ok = (down.z[i] >= exact.z[i] - slack and exact.z[i] >= up.z[i] - slack
              and down.info[i] <= exact.info[i] + slack and exact.info[i] <= up.info[i] + slack)
        if not ok:
            return _fail("sandwich", {"leaf": i, "z": [down.z[i], exact.z[i], up.z[i]],
                                      "I": [down.info[i], exact.info[i], up.info[i]]})
    print(f"sandwich: {len(exact.z)} leaves, n={args.n}, k={args.k}")
    print("sandwich: PASS")
    return EXIT_OK


def _diag_oracle(args) -> int:
    rng = np.random.default_rng(args.seed)
    worst = 0.0
    for t in range(args.count):
        w = random_mixture(rng, int(rng.integers(1, 5)))
        ch = oracle.ExplicitChannel.from_mixture(w)
        for name, mix, raw in (("minus", minus, oracle.raw_minus), ("plus", plus, oracle.raw_plus)):
            a, b = mix(w), raw(ch)
            gap = max(abs(bhattacharyya(a) - b.bhattacharyya()), abs(mutual_info(a) - b.mutual_info()))
            worst = max(worst, gap)
            if gap > 1e-10:
                return _fail("oracle", {"trial": t, "op": name, "p": w.p.tolist(),
                                        "x": w.x.tolist(), "gap": gap})
    print(f"oracle: {args.count} channels, worst gap {worst:.2e}")
    print("oracle: PASS")
    return EXIT_OK


SUITES = {
    "step-bounds": _diag_step_bounds,
    "decay": _diag_decay,
    "conservation": _diag_conservation,
    "sandwich": _diag_sandwich,
    "oracle": _diag_oracle,
}


SUITE_DEFAULTS = {
    "step-bounds": {"count": 100, "m": 32, "kernel": "bhattacharyya"},
    "decay": {"count": 5, "m": 1024, "kernel": "entropy"},
    "conservation": {"kernel": "bhattacharyya"},
    "sandwich": {"kernel": "bhattacharyya"},
    "oracle": {"count": 100, "kernel": "bhattacharyya"},
}


def cmd_diagnose(args) -> int:
    return SUITES[args.suite](args)


# ---------------------------------------------------------------------------
# argument parsing


def _positive_float(s: str) -> float:
    v = float(s)
    if not v > 0:
        raise argparse.ArgumentTypeError("must be positive")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="polarconstruct", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("construct", help="construct one code")
    p.add_argument("--channel", required=True, help="bsc:<p>, bec:<e> or file:<csv>")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--k", type=int, default=16)
    p.add_argument("--mode", choices=("degrade", "upgrade"), default="degrade")
    p.add_argument("--quantizer", choices=("merge", "transport"), default="merge")
    p.add_argument("--kernel", choices=("bhattacharyya", "entropy"), default="bhattacharyya")
    p.add_argument("--budget", type=_positive_float, default=1e-3)
    p.add_argument("--metric", choices=METRICS, default="pe")
    p.add_argument("--delta", type=float, default=None)
    p.add_argument("--order", choices=INDEX_ORDERS, default="natural")
    p.add_argument("--out", help="design JSON path")
    p.add_argument("--leaves", help="leaf CSV path")
    p.add_argument("--threads", type=int, default=None)
    p.set_defaults(func=cmd_construct)

    p = sub.add_parser("table", help="regenerate a rate table")
    p.add_argument("--which", type=int, choices=(1, 2, 3), required=True)
    p.add_argument("--scale", choices=("full", "ci"), default="ci")
    p.add_argument("--budget", type=_positive_float, default=1e-3)
    p.add_argument("--metric", choices=METRICS, default="pe")
    p.add_argument("--out", help="CSV path (default stdout)")
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("-v", "--verbose", action="store_true")
    p.set_defaults(func=cmd_table)

    p = sub.add_parser("diagnose", help="run an invariant suite")
    p.add_argument("--suite", choices=tuple(SUITES), required=True)
    p.add_argument("--channel", default="bsc:0.3")
    p.add_argument("--n", type=int, default=4)
    p.add_argument("--k", type=int, default=4)
    p.add_argument("--mode", choices=("degrade", "upgrade"), default="degrade")
    p.add_argument("--kernel", choices=("bhattacharyya", "entropy"), default=None)
    p.add_argument("--quantizer", choices=("merge", "transport"), default="merge")
    p.add_argument("--count", type=int, default=None, help="instances (suite default)")
    p.add_argument("--m", type=int, default=None, help="masses per instance (suite default)")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_diagnose)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "diagnose":
        for key, value in SUITE_DEFAULTS[args.suite].items():
            if getattr(args, key) is None:
                setattr(args, key, value)
    if hasattr(args, "kernel"):
        args.kernel = Kernel.parse(args.kernel)
    try:
        return args.func(args)
    except Refused as exc:
        print(f"refused: {exc}", file=sys.stderr)
        return EXIT_REFUSED
    except oracle.OracleRefused as exc:
        print(f"refused: {exc}", file=sys.stderr)
        return EXIT_REFUSED
    except (InvalidConfig, InvalidDistribution, UsageError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
