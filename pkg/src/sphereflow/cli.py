"""Command-line entry point: ``sphereflow {simulate,check-compat,sweep-eps,converge,longrun}``.

Exit codes: 0 when the verdict passes, 1 when it fails, 2 on usage or
configuration errors.  ``simulate`` exits 0 whenever the integration
completes, even for data that fail a compatibility check.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from .compatibility import (check_cc0, check_cc1_intrinsic, check_cc_strong, check_cc_tilde,
                            generate_initial_data)
from .experiments import SweepPlan, global_existence_proxy, mesh_convergence, viscosity_sweep
from .integrators import FlowState, advance
from .invariants import InvariantMonitor
from .io import (ConfigError, RunConfig, parse_config, write_manifest, write_reports,
                 write_snapshot, write_timeseries)

log = logging.getLogger("sphereflow")

PASS, FAIL, USAGE = 0, 1, 2


def _write_rows(path: Path, header, rows) -> Path:
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow(["" if v is None else ("%.17g" % v if isinstance(v, float) else v) for v in row])
    return path


def compat_sequence(u0, k: int):
    """CC0, CC1, CC_strong(k) and (1D) CC_tilde(k), stopping at the first failure."""
    checks = [check_cc0, check_cc1_intrinsic, lambda u: check_cc_strong(u, k)]
    if u0.grid.dims == 1:
        checks.append(lambda u: check_cc_tilde(u, k))
    reports = []
    for check in checks:
        reports.append(check(u0))
        if not reports[-1].passed:
            break
    return reports


def cmd_simulate(cfg: RunConfig, out: Path) -> tuple[int, list]:
    u0 = generate_initial_data(cfg.initial, cfg.grid)
    reports = [check_cc0(u0)]
    if not reports[0].passed:
        log.warning("initial data fail CC0 (residual %.3e); simulating anyway", reports[0].max_residual())
    traj = advance(FlowState(0.0, u0), cfg.flow, cfg.t_final, cfg.monitor_stride,
                   InvariantMonitor(cfg.flow.eps))
    outputs = [write_timeseries(traj.records, out / "timeseries.csv"),
               write_snapshot(u0, out / "initial.spf"),
               write_reports(reports, out / "compat.json")]
    if traj.final is not None:
        outputs.append(write_snapshot(traj.final.u, out / "final.spf"))
    if not traj.ok:
        log.error("simulation failed: %s", traj.failure)
        return FAIL, outputs
    return PASS, outputs


def cmd_check_compat(cfg: RunConfig, out: Path) -> tuple[int, list]:
    u0 = generate_initial_data(cfg.initial, cfg.grid)
    reports = compat_sequence(u0, cfg.compat_k)
    for r in reports:
        log.info("%-16s %s  max residual %.3e", r.condition, "PASS" if r.passed else "FAIL", r.max_residual())
    ok = all(r.passed for r in reports)
    return (PASS if ok else FAIL), [write_reports(reports, out / "compat.json")]


def cmd_sweep(cfg: RunConfig, out: Path) -> tuple[int, list]:
    plan = SweepPlan(cfg.eps_list, cfg.n, cfg.dims, cfg.t_final, cfg.flow, cfg.initial, cfg.monitor_stride)
    res = viscosity_sweep(plan)
    outputs = []
    for i, (e, tr) in enumerate(res.trajectories.items()):
        run_dir = out / f"run{i:02d}_eps{e:g}"
        run_dir.mkdir(parents=True, exist_ok=True)
        outputs.append(write_timeseries(tr.records, run_dir / "timeseries.csv"))
    positive = [e for e in res.eps_list if e > 0 and e in res.distances]
    order_of = dict(zip(positive, res.orders))
    rows = [(e, res.distances.get(e), order_of.get(e)) for e in res.eps_list]
    outputs.append(_write_rows(out / "sweep.csv", ("eps", "distance", "order_to_next"), rows))
    if res.failure:
        log.error("sweep aborted: %s", res.failure)
        return FAIL, outputs
    for e, d in res.distances.items():
        log.info("eps=%-8g d=%.6e", e, d)
    return (PASS if res.monotone() else FAIL), outputs


def cmd_converge(cfg: RunConfig, out: Path) -> tuple[int, list]:
    res = mesh_convergence(cfg.n_list, cfg.initial, cfg.t_final, cfg.flow.eps, cfg.dt_ratio,
                           cfg.dims, cfg.flow.scheme, cfg.monitor_stride)
    rows = []
    for i, n in enumerate(res.n_list):
        rows.append((n, res.dts[i] if i < len(res.dts) else None,
                     res.errors[i] if i < len(res.errors) else None,
                     res.field_orders[i] if i < len(res.field_orders) else None,
                     res.drifts["dirichlet_energy"][i] if i < len(res.drifts["dirichlet_energy"]) else None))
    outputs = [_write_rows(out / "convergence.csv", ("n", "dt", "error", "field_order", "energy_drift"), rows)]
    if res.failure:
        log.error("convergence study failed: %s", res.failure)
        return FAIL, outputs
    orders = [o for o in res.field_orders if np.isfinite(o)]
    return (PASS if all(o >= 1.8 for o in orders) else FAIL), outputs


def cmd_longrun(cfg: RunConfig, out: Path) -> tuple[int, list]:
    u0 = generate_initial_data(cfg.initial, cfg.grid)
    res = global_existence_proxy(u0, cfg.t_long, cfg.monitor_stride, replace(cfg.flow, eps=0.0))
    rows = zip(res.times.tolist(), res.h1.tolist(), res.h2.tolist(), res.h3.tolist(), res.kinetic.tolist())
    outputs = [_write_rows(out / "longrun.csv", ("t", "h1", "h2", "h3", "kinetic"), rows)]
    log.info("verdict %s: sup %.6e <= bound %.6e, flatness %.6f", res.verdict, res.sup_value, res.bound,
             res.flatness)
    return (PASS if res.verdict == "PASS" else FAIL), outputs


COMMANDS = {"simulate": cmd_simulate, "check-compat": cmd_check_compat, "sweep-eps": cmd_sweep,
            "converge": cmd_converge, "longrun": cmd_longrun}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sphereflow", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, help="INI run configuration")
        p.add_argument("--out", type=Path, help="output directory (overrides run.output_dir)")
        p.add_argument("--quiet", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(message)s")
    try:
        cfg = parse_config(args.config.read_text(encoding="utf-8")) if args.config else RunConfig()
    except OSError as exc:
        print(f"cannot read config: {exc}", file=sys.stderr)
        return USAGE
    except ConfigError as exc:
        print(exc, file=sys.stderr)
        return USAGE
    cfg = replace(cfg, experiment=args.command)
    out = args.out or Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    try:
        code, outputs = COMMANDS[args.command](cfg, out)
    except ValueError as exc:
        # semantic misuse the parser cannot see, e.g. a 2D longrun or non-nesting n_list
        print(f"{args.command}: {exc}", file=sys.stderr)
        return USAGE
    write_manifest(out / "manifest.txt", cfg, outputs, time.perf_counter() - start)
    return code


if __name__ == "__main__":
    sys.exit(main())
