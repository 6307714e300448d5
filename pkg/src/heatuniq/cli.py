"""Command-line front end.

    heatuniq SUBCOMMAND --config PATH --out DIR [--seed N] [--threads K] [--tol X]

Every run writes ``results.json`` (sorted keys), one CSV per table and a
gnuplot script ``plot.gp`` into ``--out``.  Exit status: 0 success,
1 a verdict failed or the numerics broke down, 2 usage or config error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import __version__
from .config import (ConfigError, data_from_config, get_bool, get_float, get_floats, get_int,
                     get_points, growth_section, read_config, spiked_from_config)
from .estimator import (Region, envelope_samples, linf_envelope_fn, plot_script,
                        pointwise_envelope_check, reports_to_csv, spacetime_integrals)
from .growth import classify_curvature, classify_osgood, doubling_table
from .kernel import DEFAULT_RTOL, SolutionHandle, _axial
from .quadrature import QuadratureError
from .schedule import ScheduleParams, build_schedule, small_time_vanishing_probe
from .spikes import verify_example

log = logging.getLogger("heatuniq")

SUBCOMMANDS = ("osgood", "schedule", "evolve", "estimate", "example", "report")
CHUNK = 64  # evolve points per worker task; fixed so results never depend on --threads


class Run:
    """Collects tables, plot commands and the JSON summary of one run."""

    def __init__(self, cfg: dict, args):
        self.cfg = cfg
        self.args = args
        self.tables: dict[str, str] = {}
        self.plots: list[str] = []
        self.failures: list[str] = []

    @property
    def rtol(self) -> float:
        return DEFAULT_RTOL if self.args.tol is None else self.args.tol

    def table(self, name: str, header, rows) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\r\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_cell(v) for v in row])
        fname = f"{name}.csv"
        self.tables[fname] = buf.getvalue()
        return fname

    def fail(self, msg: str):
        self.failures.append(msg)


def _same(expected: str, actual: str) -> bool:
    """Case-insensitive match; ``_`` stands for a space so shorthand lines work."""
    norm = lambda s: " ".join(str(s).replace("_", " ").lower().split())
    return norm(expected) == norm(actual)


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def _clean(obj):
    """JSON-safe copy: non-finite floats become strings, tuples become lists."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else ("inf" if v > 0 else "-inf" if v < 0 else "nan")
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _plot(title: str, csv_name: str, x: int, y: int, xlabel: str, ylabel: str, logx=False) -> str:
    lines = [f"set title '{title}'", f"set xlabel '{xlabel}'", f"set ylabel '{ylabel}'"]
    lines.append("set logscale x" if logx else "unset logscale x")
    lines.append(f"plot '{csv_name}' using {x}:{y} with linespoints")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# subcommands


def do_osgood(run: Run) -> dict:
    sec = run.cfg.get("osgood", {})
    kind = str(sec.get("kind", "growth")).lower()
    numeric = get_bool(sec, "numeric")
    fam = growth_section(run.cfg, "osgood", "growth")
    if kind == "growth":
        verdict = classify_osgood(fam, numeric=numeric)
        ks, partials, incs = doubling_table(fam.ln_eval, 1.0)
    elif kind == "curvature":
        verdict = classify_curvature(fam, numeric=numeric)
        ks, partials, incs = doubling_table(fam.ln_eval, 0.0)
    else:
        raise ConfigError("osgood kind must be 'growth' or 'curvature'")
    rows = [(k, 2.0 ** k, p, inc) for k, p, inc in zip(ks, partials, incs + [float("nan")])]
    name = run.table("osgood", ["k", "r_max", "partial_integral", "increment"], rows)
    run.plots.append(_plot("Osgood partial integrals", name, 2, 3, "r_max", "partial integral", True))
    expect = sec.get("expect")
    if expect is not None and not _same(expect, verdict.verdict):
        run.fail(f"osgood verdict {verdict.verdict}, expected {expect}")
    out = verdict.to_json()
    out["growth"] = fam.to_config()
    return out


def do_schedule(run: Run) -> dict:
    sec = run.cfg.get("schedule", {})
    L = growth_section(run.cfg, "schedule", "growth")
    try:
        params = ScheduleParams(R0=get_float(sec, "r0", 1.0), tau0=get_float(sec, "tau0", 1.0),
                                m=get_float(sec, "m", 2.0), a=get_float(sec, "a", 0.5), L=L,
                                max_steps=get_int(sec, "max_steps", 100_000))
    except ValueError as exc:
        raise ConfigError(f"[schedule]: {exc}") from exc
    res = build_schedule(params)
    run.tables["schedule.csv"] = res.to_csv()
    run.plots.append(_plot("proof schedule", "schedule.csv", 1, 3, "step i", "tau_i"))
    out = res.summary()
    out["rows"] = len(res.rows)
    if "expect_terminated" in sec and get_bool(sec, "expect_terminated") != res.terminated:
        run.fail(f"schedule terminated={res.terminated}, expected {sec['expect_terminated']}")
    return out


def _evolve_chunk(sol, zs, rhos, ts):
    ln, sg = sol.ln_u(zs, rhos, ts)
    return np.asarray(ln, dtype=float), np.asarray(sg, dtype=float)


def do_evolve(run: Run) -> dict:
    data = data_from_config(run.cfg)
    sol = SolutionHandle(data, run.rtol)
    sec = run.cfg.get("evolve", {})
    out = {"data": data.to_config()}
    if "points" in sec:
        pts = get_points(sec, "points")
        times = get_floats(sec, "times", [1.0])
        if any(t <= 0 for t in times):
            raise ConfigError("evolve times must be positive")
        try:
            axial = [_axial(p, data.n) for p in pts]
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        jobs = [(k, p, t) for t in times for k, p in enumerate(pts)]
        z = np.array([axial[k][0] for k, _, _ in jobs])
        rho = np.array([axial[k][1] for k, _, _ in jobs])
        ts = np.array([t for _, _, t in jobs])
        chunks = [slice(i, i + CHUNK) for i in range(0, len(jobs), CHUNK)]
        with ThreadPoolExecutor(max_workers=run.args.threads) as pool:
            parts = list(pool.map(lambda s: _evolve_chunk(sol, z[s], rho[s], ts[s]), chunks))
        ln = np.concatenate([p[0] for p in parts]) if parts else np.zeros(0)
        sg = np.concatenate([p[1] for p in parts]) if parts else np.zeros(0)
        header = ["point", "t"] + [f"x{j + 1}" for j in range(data.n)] + ["sign", "ln_abs_u"]
        rows = []
        for (k, p, t), l, s in zip(jobs, ln, sg):
            rows.append([k, t, *p, int(s), l if s else float("-inf")])
        name = run.table("evolve", header, rows)
        run.plots.append(_plot("log |u|", name, 2, data.n + 4, "t", "ln |u|", True))
        out["evaluations"] = len(rows)
    if "probe_radius" in sec:
        R = get_float(sec, "probe_radius")
        times = get_floats(sec, "probe_times", []) or None
        probe = small_time_vanishing_probe(sol, R, times)
        name = run.table("probe", ["t", "probe_value"], zip(probe.times, probe.values))
        run.plots.append(_plot("small-time probe", name, 1, 2, "t", "t^-1 int u^2", True))
        out["probe"] = probe.to_json()
        out["probe"]["radius"] = R
        expect = sec.get("expect_probe")
        if expect is not None and not _same(expect, probe.verdict):
            run.fail(f"probe verdict {probe.verdict!r}, expected {expect!r}")
    return out


def do_estimate(run: Run) -> dict:
    data = data_from_config(run.cfg)
    sol = SolutionHandle(data, run.rtol)
    sec = run.cfg.get("estimate", {})
    mode = str(sec.get("mode", "weighted")).lower()
    radii = get_floats(sec, "radii", [1.0])
    if mode == "weighted":
        a, power = get_float(sec, "a", 2.0), 2.0
    elif mode == "lp":
        a, power = 0.0, get_float(sec, "p", 1.0)
        if not 0 < power <= 1:
            raise ConfigError("lp mode needs 0 < p <= 1")
    else:
        raise ConfigError("estimate mode must be 'weighted' or 'lp'")
    try:
        reps = spacetime_integrals(sol, [Region("ball", r) for r in radii], a=a, power=power, mode=mode)
    except ValueError as exc:
        raise ConfigError(f"[estimate]: {exc}") from exc
    L = None
    if "family" in sec or "family" in run.cfg.get("growth", {}):
        L = growth_section(run.cfg, "estimate", "growth")
        reps = [r.compared(L) for r in reps]
    run.tables["estimate.csv"] = reports_to_csv(reps)
    run.plots.append(plot_script("estimate.csv").rstrip("\n"))
    out = {"data": data.to_config(), "reports": [r.to_json() for r in reps]}
    if L is not None:
        out["growth"] = L.to_config()
        if get_bool(sec, "assert_inside") and not all(r.inside for r in reps):
            run.fail("class membership violated")
    samples = get_int(sec, "envelope_samples", 0)
    if samples > 0:
        env = linf_envelope_fn(sol)
        if env is None:
            out["envelope"] = {"applicable": False}
        else:
            chk = pointwise_envelope_check(sol, env, envelope_samples(sol, samples, run.args.seed))
            out["envelope"] = chk.to_json()
            if not chk.ok:
                run.fail("pointwise envelope violated")
    return out


def do_example(run: Run) -> dict:
    sec = dict(run.cfg.get("spiked", {}))
    sec.update(run.cfg.get("example", {}))
    cfg = spiked_from_config(sec)
    rep = verify_example(cfg, a=get_float(sec, "a", 2.0),
                         C_grid=tuple(get_floats(sec, "c_grid", (0.25, 0.5, 1.0))),
                         samples=get_int(sec, "samples", 1000), seed=run.args.seed,
                         i_limit=get_int(sec, "i_limit", 10), rtol=run.rtol)
    run.tables["example.csv"] = rep.to_csv()
    run.plots.append("\n".join([
        "set title 'spiked example: closed-form minorant vs computed'",
        "set xlabel 'i'", "set ylabel 'log value'", "unset logscale x",
        "plot 'example.csv' using 1:2 with linespoints title 'ln lower bound', \\",
        "     'example.csv' using 1:3 with linespoints title 'ln computed (plateau)', \\",
        "     'example.csv' using 1:5 with lines title 'target exponent'",
    ]))
    for c in rep.checks:
        if not c.passed:
            run.fail(f"example check {c.name} failed")
    return rep.to_json()


HANDLERS = {
    "osgood": do_osgood,
    "schedule": do_schedule,
    "evolve": do_evolve,
    "estimate": do_estimate,
    "example": do_example,
}

def do_report(run: Run) -> dict:
    """Run every subcommand whose section appears in the config.

    ``[spiked]`` alone only supplies data; the example checks run when an
    ``[example]`` section is present.
    """
    out = {}
    for name in ("osgood", "schedule", "evolve", "estimate", "example"):
        if name in run.cfg:
            out[name] = HANDLERS[name](run)
    if not out:
        raise ConfigError("report found no subcommand sections in the config")
    return out


HANDLERS["report"] = do_report


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="heatuniq",
                                description="Heat-equation uniqueness-class numerics.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("subcommand", choices=SUBCOMMANDS)
    p.add_argument("--config", required=True, help="INI-style configuration file")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=0, help="seed for random sampling")
    p.add_argument("--threads", type=int, default=1, help="worker threads")
    p.add_argument("--tol", type=float, default=None, help="relative quadrature tolerance")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def write_outputs(out_dir: str, summary: dict, run: Run):
    os.makedirs(out_dir, exist_ok=True)
    for name, text in sorted(run.tables.items()):
        with open(os.path.join(out_dir, name), "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    plot = ["set datafile separator ','", "set key autotitle columnhead", "set terminal pngcairo",
            "set output 'plot.png'"]
    if len(run.plots) > 1:
        plot.append(f"set multiplot layout {len(run.plots)},1")
    plot += run.plots
    if len(run.plots) > 1:
        plot.append("unset multiplot")
    with open(os.path.join(out_dir, "plot.gp"), "w", encoding="utf-8") as fh:
        fh.write("\n".join(plot) + "\n")
    with open(os.path.join(out_dir, "results.json"), "w", encoding="utf-8") as fh:
        json.dump(_clean(summary), fh, sort_keys=True, indent=2, ensure_ascii=False, allow_nan=False)
        fh.write("\n")


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s")
    if args.threads < 1:
        print("heatuniq: --threads must be at least 1", file=sys.stderr)
        return 2
    if args.tol is not None and not 0 < args.tol < 1:
        print("heatuniq: --tol must lie in (0, 1)", file=sys.stderr)
        return 2
    try:
        cfg = read_config(args.config)
        run = Run(cfg, args)
        with np.errstate(all="ignore"):
            result = HANDLERS[args.subcommand](run)
    except ConfigError as exc:
        print(f"heatuniq: config error: {exc}", file=sys.stderr)
        return 2
    except (QuadratureError, FloatingPointError, ArithmeticError, RuntimeError, ValueError) as exc:
        print(f"heatuniq: numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    summary = {
        "subcommand": args.subcommand,
        "seed": args.seed,
        "tol": run.rtol,
        "config": cfg,
        "passed": not run.failures,
        "failures": run.failures,
        "results": result,
    }
    write_outputs(args.out, summary, run)
    for msg in run.failures:
        print(f"heatuniq: {msg}", file=sys.stderr)
    log.info("wrote %s", args.out)
    return 1 if run.failures else 0


if __name__ == "__main__":
    sys.exit(main())
