"""``dp-audit`` command-line entry points."""

from __future__ import annotations

import argparse
import csv
import io
import math
import sys
import time
from pathlib import Path

import numpy as np

from dpaudit.config import AuditConfig, ConfigError, load_config
from dpaudit.data import DataError
from dpaudit.detector import AuditError, SweepConfig, epsilon_sweep
from dpaudit.mechanisms import NoisyCount, bernoulli_pair, broken_noisy_count
from dpaudit.pipeline import audit_ml_pipeline
from dpaudit.report import ReportError, ReportFile, atomic_write_text, from_sweep, read_report, write_report
from dpaudit.resampling import ResampleConfig, ResampleError
from dpaudit.streams import Streams, resolve_workers
from dpaudit.svg import pvalue_chart, trend_chart

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3
SUITES = ("laplace", "bernoulli", "broken", "group")
DEFAULT_RATIOS = "0.15,0.25,0.5,0.75,1.0"


def _err(msg: str) -> None:
    print(f"dp-audit: {msg}", file=sys.stderr)


def _grid(start, stop, step):
    n = int(round((stop - start) / step)) + 1
    return tuple(round(start + i * step, 10) for i in range(n))


def format_table(report: ReportFile) -> str:
    lines = [f"{'epsilon':>10} {'p_top':>10} {'p_bottom':>10} {'p_min':>10} {'c1':>8} {'c2':>8} {'n':>8}"]
    for r in report.records:
        p_min = min(r["p_top"], r["p_bottom"])
        mark = " *" if p_min < report.alpha else ""
        lines.append(
            f"{r['epsilon']:>10.4g} {r['p_top']:>10.4g} {r['p_bottom']:>10.4g} {p_min:>10.4g} "
            f"{r['c1']:>8d} {r['c2']:>8d} {r['n']:>8d}{mark}"
        )
    return "\n".join(lines)


def measured_text(report: ReportFile) -> str:
    m = report.measured_epsilon
    if m["status"] == "below-grid":
        value = f"0 (no rejection; <= grid start {m['value']:g})"
    elif m["status"] == "above-grid":
        value = f"> {m['value']:g} (rejected across the whole grid)"
    else:
        value = f"{m['value']:g}"
    return f"measured {report.measured_label}: {value}"


def run_config_audit(
    cfg: AuditConfig,
    seed: int,
    workers: int,
    resample: ResampleConfig | None = None,
    epsilon0: float | None = None,
    record_time: bool = False,
) -> ReportFile:
    """Load the dataset and audit the configured pipeline."""
    d = cfg.load_dataset()
    resample = cfg.resample if resample is None else resample
    t0 = time.perf_counter()
    sweep = audit_ml_pipeline(
        d,
        cfg.model,
        resample,
        cfg.sweep_config(),
        cfg.train_config(epsilon0),
        seed=seed,
        workers=workers,
        n_bootstrap=cfg.n_bootstrap,
        output_decimals=cfg.output_decimals,
        resample_seeding=cfg.resample_seeding,
    )
    elapsed = time.perf_counter() - t0 if record_time else None
    snap = cfg.snapshot()
    if epsilon0 is not None:
        snap["epsilon0"] = epsilon0 if math.isfinite(epsilon0) else "inf"
    return from_sweep(sweep, snap, elapsed)


# audit --------------------------------------------------------------------------


def cmd_audit(args) -> int:
    try:
        cfg = load_config(args.config)
        workers = resolve_workers(args.workers)
    except (ConfigError, ValueError) as exc:
        _err(f"config error: {exc}")
        return EXIT_CONFIG
    seed = cfg.seed if args.seed is None else args.seed
    try:
        report = run_config_audit(cfg, seed, workers, record_time=args.record_wall_clock)
    except (DataError, ConfigError) as exc:
        _err(f"config error: {exc}")
        return EXIT_CONFIG
    except (AuditError, ResampleError, ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
        _err(f"audit failed: {exc}")
        return EXIT_RUNTIME
    write_report(report, args.out)
    print(measured_text(report))
    print(format_table(report))
    for w in report.warnings:
        print(f"warning: {w}")
    return EXIT_OK


# validate -----------------------------------------------------------------------


def _reference_sweep(mech, grid, n, seed, workers, k=1, candidates=3):
    cfg = SweepConfig(grid=grid, n_iterations=n, n_candidates=candidates, strategy="random", batch_size=1, k=k)
    return from_sweep(epsilon_sweep(mech, cfg, seed, workers))


def _check(name, ok, detail):
    print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
    return ok


def suite_laplace(seed, workers):
    r = _reference_sweep(NoisyCount(1.0), _grid(0.2, 1.8, 0.1), 100_000, seed, workers)
    p = dict(zip(r.grid, r.p_values))
    rejects = all(p[e] < r.alpha for e in r.grid if e <= 0.7 + 1e-9)
    clean = all(p[e] > r.alpha for e in r.grid if e >= 1.0 - 1e-9)
    ok = _check("laplace", rejects and clean, f"true 1.0, measured {r.measured_epsilon['rendered']}")
    return {"laplace": r}, ok


def suite_bernoulli(seed, workers):
    r = _reference_sweep(bernoulli_pair(0.5, 0.2), _grid(0.05, 1.0, 0.05), 200_000, seed, workers)
    m = r.measured_epsilon
    ok = m["status"] == "in-grid" and abs(m["value"] - 0.5) <= 0.2 * 0.5 + 1e-9
    _check("bernoulli", ok, f"true 0.5, measured {m['rendered']} (tolerance +-20%)")
    return {"bernoulli": r}, ok


def suite_broken(seed, workers):
    grid = _grid(0.1, 2.0, 0.1)
    r = _reference_sweep(broken_noisy_count(0.5), grid, 100_000, seed, workers)
    p = dict(zip(r.grid, r.p_values))
    m = r.measured_epsilon
    within = m["status"] == "in-grid" and abs(m["value"] - 1.0) <= 0.1 + 1e-9
    ok = p[0.5] < r.alpha and within
    _check("broken", ok, f"claimed 0.5, analytic 1.0, p at claim {p[0.5]:.3g}, measured {m['rendered']}")
    return {"broken": r}, ok


def suite_group(seed, workers):
    r1 = _reference_sweep(NoisyCount(1.0), _grid(0.1, 4.0, 0.1), 100_000, seed, workers, k=1)
    r2 = _reference_sweep(NoisyCount(1.0), _grid(0.1, 4.0, 0.1), 100_000, seed, workers, k=2)
    a, b = r1.measured_epsilon["rendered"], r2.measured_epsilon["rendered"]
    ratio = b / a if a else math.inf
    ok = r1.measured_epsilon["status"] == r2.measured_epsilon["status"] == "in-grid" and 1.6 <= ratio <= 2.4
    _check("group", ok, f"k=1 measured {a}, k=2 measured {b}, ratio {ratio:.3g} (expected ~2)")
    return {"group-k1": r1, "group-k2": r2}, ok


SUITE_RUNNERS = {"laplace": suite_laplace, "bernoulli": suite_bernoulli, "broken": suite_broken, "group": suite_group}


def cmd_validate(args) -> int:
    names = SUITES if args.suite == "all" else (args.suite,)
    if args.suite != "all" and args.suite not in SUITE_RUNNERS:
        _err(f"unknown suite {args.suite!r}; choose from {', '.join(SUITES)} or all")
        return EXIT_CONFIG
    try:
        workers = resolve_workers(args.workers)
    except ValueError as exc:
        _err(str(exc))
        return EXIT_CONFIG
    out = Path(args.out)
    all_ok = True
    for name in names:
        reports, ok = SUITE_RUNNERS[name](args.seed, workers)
        all_ok &= ok
        for stem, rep in reports.items():
            write_report(rep, out / f"{stem}.json")
            atomic_write_text(out / f"{stem}.svg", pvalue_chart(rep.grid, rep.p_values, rep.alpha, rep.measured_epsilon, title=stem))
    return EXIT_OK if all_ok else EXIT_FAIL


# resample-study -----------------------------------------------------------------


def parse_ratios(text: str) -> list:
    parts = [p.strip() for p in text.split(",") if p.strip()]
    if not parts:
        raise ConfigError("ratio list is empty")
    ratios = []
    for p in parts:
        try:
            r = float(p)
        except ValueError:
            raise ConfigError(f"ratio {p!r} is not a number") from None
        if not 0 < r <= 1:
            raise ConfigError(f"ratio {r} must be in (0, 1]")
        ratios.append(r)
    return ratios


def cell_seed(master: int, method: str, ratio, epsilon0: float) -> int:
    return Streams(master).child(method, repr(ratio), repr(float(epsilon0))).derive_seed()


def _eps_label(e):
    return "inf" if not math.isfinite(e) else f"{e:g}"


def run_study(cfg: AuditConfig, ratios, out: Path, seed: int, workers: int, log=print) -> list:
    """Every (method, ratio, epsilon0) cell plus one baseline per epsilon0.

    A failing cell is recorded and the study moves on.
    """
    cells = []
    for eps0 in cfg.study_epsilon0s:
        cells.append(("none", None, eps0))
        cells.extend((m, r, eps0) for m in cfg.study_methods for r in ratios)
    rows = []
    for method, ratio, eps0 in cells:
        s = cell_seed(seed, method, "baseline" if ratio is None else ratio, eps0)
        rc = ResampleConfig() if ratio is None else ResampleConfig(method, ratio, cfg.resample.k_neighbors, cfg.resample.smote_target)
        name = f"{method}_r{'base' if ratio is None else f'{ratio:g}'}_e{_eps_label(eps0)}"
        row = {"method": method, "ratio": "" if ratio is None else ratio, "epsilon0": _eps_label(eps0), "seed": s}
        try:
            rep = run_config_audit(cfg, s, workers, resample=rc, epsilon0=eps0)
        except (AuditError, ResampleError, DataError, ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
            row.update(status="failed", measured_epsilon="", error=str(exc))
            log(f"{name}: FAILED ({exc})")
        else:
            write_report(rep, out / "cells" / f"{name}.json")
            m = rep.measured_epsilon
            row.update(status=m["status"], measured_epsilon=m["rendered"] if m["rendered"] is not None else "", error="")
            log(f"{name}: {measured_text(rep)}")
        rows.append(row)
    return rows


TREND_FIELDS = ("method", "ratio", "epsilon0", "seed", "status", "measured_epsilon", "error")


def write_trend(rows, out: Path, methods) -> None:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=TREND_FIELDS, lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    atomic_write_text(out / "trend.csv", buf.getvalue())

    baselines = {}
    for r in rows:
        if r["method"] == "none" and r["status"] != "failed" and r["measured_epsilon"] != "":
            baselines[f"epsilon0={r['epsilon0']}"] = float(r["measured_epsilon"])
    for method in methods:
        series = {}
        for r in rows:
            if r["method"] != method:
                continue
            v = None if r["status"] == "failed" or r["measured_epsilon"] == "" else float(r["measured_epsilon"])
            series.setdefault(f"epsilon0={r['epsilon0']}", []).append((float(r["ratio"]), v))
        atomic_write_text(out / f"trend_{method}.svg", trend_chart(series, baselines, f"measured epsilon vs ratio: {method}"))


def cmd_resample_study(args) -> int:
    try:
        ratios = parse_ratios(args.ratios)
        cfg = load_config(args.config)
        workers = resolve_workers(args.workers)
        if cfg.task != "regression":
            raise ConfigError("the resampling study needs a regression dataset")
        cfg.load_dataset()
    except (ConfigError, DataError, ValueError) as exc:
        _err(f"config error: {exc}")
        return EXIT_CONFIG
    seed = cfg.seed if args.seed is None else args.seed
    out = Path(args.out)
    rows = run_study(cfg, ratios, out, seed, workers)
    write_trend(rows, out, cfg.study_methods)
    failed = sum(r["status"] == "failed" for r in rows)
    print(f"{len(rows)} cells, {failed} failed; table at {out / 'trend.csv'}")
    return EXIT_OK if failed < len(rows) else EXIT_RUNTIME


# plot ---------------------------------------------------------------------------


def cmd_plot(args) -> int:
    try:
        rep = read_report(args.report)
        svg = pvalue_chart(rep.grid, rep.p_values, rep.alpha, rep.measured_epsilon, x_label=rep.measured_label)
    except (ReportError, ValueError, TypeError, KeyError) as exc:
        _err(f"malformed report: {exc}")
        return EXIT_CONFIG
    atomic_write_text(args.out, svg)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dp-audit", description="Empirical differential-privacy auditing by counterexample search.")
    sub = p.add_subparsers(dest="command", required=True)

    a = sub.add_parser("audit", help="audit the pipeline described by a config file")
    a.add_argument("--config", required=True)
    a.add_argument("--out", required=True)
    a.add_argument("--seed", type=int)
    a.add_argument("--workers", type=int)
    a.add_argument("--record-wall-clock", action="store_true", help="store elapsed seconds in the report (breaks byte-identity)")
    a.set_defaults(func=cmd_audit)

    v = sub.add_parser("validate", help="calibrate the detector on reference mechanisms")
    v.add_argument("--suite", required=True, help=f"one of {', '.join(SUITES)} or all")
    v.add_argument("--out", required=True)
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--workers", type=int)
    v.set_defaults(func=cmd_validate)

    s = sub.add_parser("resample-study", help="measured epsilon across resampling methods and ratios")
    s.add_argument("--config", required=True)
    s.add_argument("--ratios", default=DEFAULT_RATIOS)
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int)
    s.add_argument("--workers", type=int)
    s.set_defaults(func=cmd_resample_study)

    pl = sub.add_parser("plot", help="render a report as an SVG p-value chart")
    pl.add_argument("--report", required=True)
    pl.add_argument("--out", required=True)
    pl.set_defaults(func=cmd_plot)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
