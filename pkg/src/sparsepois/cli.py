"""Command-line front end: data generation, screening, solving, model export and sweeps."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import statistics
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .bnb import Status, branch_and_bound
from .conic import build_conic_model, export_model, format_model
from .dataset import GenerationConfig, generate_synthetic, load_csv, save_csv
from .errors import POS_INF, SparsePoisError
from .screen import safe_screen

log = logging.getLogger(__name__)

__all__ = ["BenchConfig", "bench_sweep", "histogram_rows", "main", "resolve_gamma", "run_command"]

DEFAULT_REGIMES = ((0.35, 0.01), (0.35, 0.10), (0.35, 1.00), (0.70, 0.01), (0.70, 0.10), (0.70, 1.00))

SUMMARY_COLUMNS = [
    "n", "gamma_mult", "rho", "sigma2",
    "fixed1_mean", "fixed1_sd", "fixed0_mean", "fixed0_sd",
    "time_mean", "time_sd", "gap_mean", "gap_sd", "nodes_mean", "nodes_sd",
    "ot_count", "failed_count",
]


def resolve_gamma(gamma, n: int, multiplier: float = 1.0) -> float:
    """``"auto"`` means ``multiplier / sqrt(n)``; anything else is parsed as a positive number."""
    if isinstance(gamma, str) and gamma.strip().lower() == "auto":
        return multiplier / math.sqrt(n)
    g = float(gamma)
    if not g > 0 or not math.isfinite(g):
        raise ValueError(f"gamma must be positive and finite, got {gamma!r}")
    return g * multiplier


def _portable(obj):
    """Replace non-finite floats by tagged strings so the JSON stays standard."""
    if obj is POS_INF:
        return POS_INF.to_json()
    if isinstance(obj, float):
        if math.isnan(obj):
            return "nan"
        if math.isinf(obj):
            return "+inf" if obj > 0 else "-inf"
        return obj
    if isinstance(obj, dict):
        return {str(k): _portable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_portable(v) for v in obj]
    return obj


def _write_json(payload, path) -> None:
    text = json.dumps(_portable(payload), indent=2, allow_nan=False)
    if path is None or str(path) == "-":
        sys.stdout.write(text + "\n")
    else:
        Path(path).write_text(text + "\n", encoding="utf-8")


# --------------------------------------------------------------------------- #
# sweep


@dataclass(frozen=True)
class BenchConfig:
    m: int = 10000
    n: tuple[int, ...] = (1000, 2000)
    k: int = 30
    k_true: int = 30
    y_max: int = 10
    gamma_multipliers: tuple[float, ...] = (1.0, 4.0, 16.0)
    regimes: tuple[tuple[float, float], ...] = DEFAULT_REGIMES
    trials: int = 5
    time_limit_s: float = 600.0
    seed_base: int = 0
    solve: bool = False

    def __post_init__(self):
        for name in ("m", "k", "k_true", "y_max", "trials"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if not self.n or min(self.n) < 1:
            raise ValueError("n must be a non-empty list of positive integers")
        if not self.gamma_multipliers or min(self.gamma_multipliers) <= 0:
            raise ValueError("gamma multipliers must be positive")
        if not self.regimes:
            raise ValueError("at least one regime is required")
        for rho, s2 in self.regimes:
            if not (0 <= rho < 1 and s2 >= 0):
                raise ValueError(f"bad regime ({rho}, {s2})")
        if not self.time_limit_s > 0:
            raise ValueError("time limit must be positive")
        if self.seed_base < 0:
            raise ValueError("seed_base must be unsigned")


@dataclass(frozen=True)
class _Trial:
    n: int
    rho: float
    sigma2: float
    trial: int
    multipliers: tuple[float, ...]
    cfg: BenchConfig = field(repr=False)


def _run_trial(t: _Trial) -> list[dict]:
    """One dataset, screened (and optionally solved) for every gamma multiplier."""
    cfg = t.cfg
    seed = cfg.seed_base + t.trial
    base = {"n": t.n, "m": cfg.m, "k": cfg.k, "rho": t.rho, "sigma2": t.sigma2,
            "trial": t.trial, "seed": seed}
    try:
        d = generate_synthetic(GenerationConfig(m=cfg.m, n=t.n, k_true=cfg.k_true, rho=t.rho,
                                                sigma2=t.sigma2, y_max=cfg.y_max, seed=seed))
    except Exception as exc:  # recorded and skipped, the sweep continues
        return [dict(base, gamma_mult=g, error=f"{type(exc).__name__}: {exc}") for g in t.multipliers]
    out = []
    for mult in t.multipliers:
        rec = dict(base, gamma_mult=mult, gamma=mult / math.sqrt(t.n))
        try:
            t0 = time.perf_counter()
            scr = safe_screen(d, rec["gamma"], cfg.k)
            rec["screen"] = scr.to_dict()
            rec["screen_time_s"] = time.perf_counter() - t0
            rec["fixed0"] = len(scr.fixed0)
            rec["fixed1"] = len(scr.fixed1)
            rec["time_s"] = rec["screen_time_s"]
            if cfg.solve:
                rep = branch_and_bound(d, rec["gamma"], cfg.k, time_limit_s=cfg.time_limit_s)
                rec["solve"] = rep.to_dict()
                rec["time_s"] = rep.wall_time_s
                rec["gap_percent"] = rep.gap_percent
                rec["nodes"] = rep.nodes
                rec["over_time"] = rep.status is Status.TIME_LIMIT
        except Exception as exc:
            rec["error"] = f"{type(exc).__name__}: {exc}"
        out.append(rec)
    return out


def _mean_sd(values):
    if not values:
        return "", ""
    mean = statistics.fmean(values)
    sd = statistics.stdev(values) if len(values) > 1 else ""
    return mean, sd


def _summarize(records, cfg: BenchConfig):
    rows = []
    for n in cfg.n:
        for mult in cfg.gamma_multipliers:
            for rho, s2 in cfg.regimes:
                cell = [r for r in records
                        if r["n"] == n and r["gamma_mult"] == mult and r["rho"] == rho and r["sigma2"] == s2]
                ok = [r for r in cell if "error" not in r]
                row = {"n": n, "gamma_mult": mult, "rho": rho, "sigma2": s2}
                for key, col in (("fixed1", "fixed1"), ("fixed0", "fixed0"), ("time_s", "time"),
                                 ("gap_percent", "gap"), ("nodes", "nodes")):
                    vals = [float(r[key]) for r in ok if key in r]
                    row[f"{col}_mean"], row[f"{col}_sd"] = _mean_sd(vals)
                row["ot_count"] = sum(1 for r in ok if r.get("over_time"))
                row["failed_count"] = len(cell) - len(ok)
                rows.append(row)
    return rows


def histogram_rows(totals, m: int, buckets: int = 10):
    """Counts of total fixed variables: exact 0, ``buckets`` equal-width bins, exact ``m``.

    Bin ``i`` holds ``i*m/buckets <= c < (i+1)*m/buckets`` for ``0 < c < m``.
    """
    rows = [{"bin": "exact_0", "lower": 0, "upper": 0, "count": 0}]
    width = m / buckets
    for i in range(buckets):
        rows.append({"bin": f"b{i}", "lower": i * width, "upper": (i + 1) * width, "count": 0})
    rows.append({"bin": "exact_m", "lower": m, "upper": m, "count": 0})
    for c in totals:
        if c == 0:
            rows[0]["count"] += 1
        elif c == m:
            rows[-1]["count"] += 1
        else:
            i = min(int(c // width), buckets - 1)
            rows[1 + i]["count"] += 1
    total = max(len(totals), 1)
    for r in rows:
        r["fraction"] = r["count"] / total
    return rows


def _workers() -> int:
    raw = os.environ.get("SPARSEPOIS_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        log.warning("ignoring non-integer SPARSEPOIS_THREADS=%r", raw)
        return 1


def bench_sweep(cfg: BenchConfig, out_dir) -> list[dict]:
    """Run the sweep; writes ``summary.csv``, ``histogram.csv`` and ``trials/*.json`` under ``out_dir``."""
    out_dir = Path(out_dir)
    trial_dir = out_dir / "trials"
    trial_dir.mkdir(parents=True, exist_ok=True)
    jobs = [_Trial(n, rho, s2, t, tuple(cfg.gamma_multipliers), cfg)
            for n in cfg.n for rho, s2 in cfg.regimes for t in range(cfg.trials)]
    workers = min(_workers(), len(jobs))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_trial, jobs))
    else:
        results = [_run_trial(j) for j in jobs]
    records = [r for batch in results for r in batch]
    records.sort(key=lambda r: (r["n"], r["rho"], r["sigma2"], r["gamma_mult"], r["trial"]))
    for r in records:
        name = f"n{r['n']}_rho{r['rho']}_s2{r['sigma2']}_g{r['gamma_mult']}_t{r['trial']}.json"
        _write_json(r, trial_dir / name)

    summary = _summarize(records, cfg)
    with (out_dir / "summary.csv").open("w", encoding="utf-8", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=SUMMARY_COLUMNS)
        w.writeheader()
        w.writerows(summary)
    totals = [r["fixed0"] + r["fixed1"] for r in records if "error" not in r]
    with (out_dir / "histogram.csv").open("w", encoding="utf-8", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["bin", "lower", "upper", "count", "fraction"])
        w.writeheader()
        w.writerows(histogram_rows(totals, cfg.m))
    _write_json({"config": asdict(cfg), "summary": summary}, out_dir / "summary.json")
    return summary


# --------------------------------------------------------------------------- #
# argument parsing


def _regime(text: str):
    try:
        rho, s2 = (float(v) for v in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"regime must look like RHO:SIGMA2, got {text!r}") from None
    return rho, s2


def _gamma_arg(text: str):
    if text.strip().lower() == "auto":
        return "auto"
    try:
        g = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"gamma must be a number or 'auto', got {text!r}") from None
    if not g > 0 or not math.isfinite(g):
        raise argparse.ArgumentTypeError("gamma must be positive")
    return g


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError("expected a positive integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sparsepois", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a synthetic dataset as CSV plus a meta sidecar")
    g.add_argument("--m", type=_positive_int, required=True)
    g.add_argument("--n", type=_positive_int, required=True)
    g.add_argument("--k-true", type=_positive_int, required=True)
    g.add_argument("--rho", type=float, required=True)
    g.add_argument("--sigma2", type=float, required=True)
    g.add_argument("--y-max", type=_positive_int, default=10)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("-o", "--output", required=True)

    def model_args(sp):
        sp.add_argument("data", help="CSV dataset")
        sp.add_argument("--k", type=_positive_int, required=True)
        sp.add_argument("--gamma", type=_gamma_arg, default="auto", help="number or 'auto' (= mult/sqrt(n))")
        sp.add_argument("--gamma-mult", type=float, default=1.0)
        sp.add_argument("-o", "--output", default="-")

    s = sub.add_parser("screen", help="safe screening; JSON report")
    model_args(s)
    s.add_argument("--rounds", type=_positive_int, default=1)

    v = sub.add_parser("solve", help="branch-and-bound; JSON report")
    model_args(v)
    v.add_argument("--time-limit", type=float, default=600.0)
    v.add_argument("--node-limit", type=_positive_int, default=None)
    v.add_argument("--gap-tol", type=float, default=1e-6)
    v.add_argument("--no-screen", action="store_true")
    v.add_argument("--node-screening", action="store_true")

    e = sub.add_parser("export", help="write the mixed-integer conic model as text")
    model_args(e)
    e.add_argument("--screen", action="store_true", help="add the screening fixings to the model")

    b = sub.add_parser("bench", help="screening (and optional solve) sweep over regimes and gamma")
    b.add_argument("--m", type=_positive_int, default=10000)
    b.add_argument("--n", type=_positive_int, nargs="+", default=[1000, 2000])
    b.add_argument("--k", type=_positive_int, default=30)
    b.add_argument("--k-true", type=_positive_int, default=30)
    b.add_argument("--y-max", type=_positive_int, default=10)
    b.add_argument("--gamma-mults", type=float, nargs="+", default=[1.0, 4.0, 16.0])
    b.add_argument("--regimes", type=_regime, nargs="+", default=list(DEFAULT_REGIMES),
                   help="RHO:SIGMA2 pairs")
    b.add_argument("--trials", type=_positive_int, default=5)
    b.add_argument("--time-limit", type=float, default=600.0)
    b.add_argument("--seed-base", type=int, default=0)
    b.add_argument("--solve", action="store_true", help="also run branch-and-bound")
    b.add_argument("-o", "--out-dir", required=True)
    return p


def _dispatch(args) -> None:
    if args.command == "generate":
        cfg = GenerationConfig(m=args.m, n=args.n, k_true=args.k_true, rho=args.rho,
                               sigma2=args.sigma2, y_max=args.y_max, seed=args.seed)
        save_csv(generate_synthetic(cfg), args.output)
        return
    if args.command == "bench":
        cfg = BenchConfig(m=args.m, n=tuple(args.n), k=args.k, k_true=args.k_true, y_max=args.y_max,
                          gamma_multipliers=tuple(args.gamma_mults),
                          regimes=tuple(tuple(r) for r in args.regimes), trials=args.trials,
                          time_limit_s=args.time_limit, seed_base=args.seed_base, solve=args.solve)
        bench_sweep(cfg, args.out_dir)
        return

    d = load_csv(args.data)
    gamma = resolve_gamma(args.gamma, d.n, args.gamma_mult)
    if args.command == "screen":
        scr = safe_screen(d, gamma, args.k, rounds=args.rounds)
        _write_json(dict(scr.to_dict(), gamma=gamma, k=args.k, greedy_support=list(scr.greedy_support)),
                    args.output)
    elif args.command == "solve":
        rep = branch_and_bound(d, gamma, args.k, time_limit_s=args.time_limit,
                               node_limit=args.node_limit, gap_tol_rel=args.gap_tol,
                               screen_first=not args.no_screen, node_screening=args.node_screening)
        _write_json(dict(rep.to_dict(), gamma=gamma, k=args.k), args.output)
    elif args.command == "export":
        f0, f1 = (), ()
        if args.screen:
            scr = safe_screen(d, gamma, args.k)
            f0, f1 = scr.fixed0, scr.fixed1
        model = build_conic_model(d, gamma, args.k, f0, f1)
        if args.output == "-":
            sys.stdout.write(format_model(model))
        else:
            export_model(model, args.output)


def run_command(argv=None) -> int:
    """Run one subcommand; returns 0 on success, 2 on usage errors and 1 on runtime errors."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        _dispatch(args)
    except (SparsePoisError, ValueError, OSError, FloatingPointError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


def main() -> None:
    sys.exit(run_command())


if __name__ == "__main__":
    main()
