"""Command line entry points: ``run``, ``refine`` and ``check``.

Exit status is 0 only if every enabled check passes; 1 on a failed check,
2 on a configuration or usage error and 3 when the solver itself fails.
"""
from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from contextlib import nullcontext
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import io
from .circuit import rlc_closed_form
from .config import ConfigError, RunConfig, dump_config, parse_config, parse_config_text
from .diagnostics import Verdict, dual_proxy_norms, monitor_fourth_estimate, run_checks
from .scheme import SchemeError, exponent_pair, run, tau_refinement_study

OUTPUT_ENV = "THERMISTOR_OUTPUT_DIR"
ANALYTIC_TOL = 1e-3


def output_dir(cfg: RunConfig) -> Path:
    return Path(os.environ.get(OUTPUT_ENV) or cfg.directory)


def _executor(threads: int):
    return ThreadPoolExecutor(max_workers=threads) if threads > 1 else nullcontext(None)


def _load(args) -> RunConfig:
    cfg = parse_config(args.config)
    changes = {}
    if args.snapshots:
        try:
            changes["snapshots"] = tuple(float(s) for s in args.snapshots.split(","))
        except ValueError as e:
            raise ConfigError([f"--snapshots: expected comma-separated times ({e})"]) from e
    if args.no_checks:
        changes["checks"] = False
    if changes:
        # re-validate so the overrides obey the same constraints as the file
        cfg = parse_config_text(dump_config(replace(cfg, **changes)))
    return cfg


def analytic_verdict(cfg: RunConfig, laws, state) -> Verdict:
    if not laws.sigma_constant:
        return Verdict("compare_analytic", False, "closed form needs a temperature-independent conductivity")
    g = cfg.grid
    c = laws.sigma_lo * g.base_area / g.ell
    exact = rlc_closed_form(cfg.circuit, c, state.t)
    scale = float(np.max(np.abs(exact)))
    err = float(np.max(np.abs(state.V - exact)))
    rel = err / scale if scale > 0 else err
    return Verdict("compare_analytic", rel <= ANALYTIC_TOL, f"relative sup error {rel:.6e} vs {ANALYTIC_TOL:g}", {"rel": rel})


def _summary(cfg: RunConfig, state, verdicts) -> list[str]:
    rec = state.record
    p, q = exponent_pair(cfg.scheme.alpha)
    lines = [
        f"grid {cfg.grid.nx}x{cfg.grid.ny}x{cfg.grid.nz}, tau={cfg.scheme.tau!r}, dt={cfg.scheme.dt!r}, T={cfg.scheme.T_final!r}",
        f"tau* = {rec.meta['tau_star']!r}",
        f"nodes {len(rec)}, slabs {int(rec.column('slab_index').max()) + 1}",
        f"final V = {state.V[-1]:.17g}, min theta = {rec.column('min_theta').min():.17g}",
        f"grad z norm = {rec.column('z_norm_grad')[-1]:.17g}, L^(4p/3) norm of u = {rec.column('lp_norm_u')[-1]:.17g}",
        "time-derivative proxies (informational): "
        + ", ".join(f"{k}={v:.6g}" for k, v in dual_proxy_norms(rec, p).items()),
    ]
    lines += [v.line() for v in verdicts]
    return lines


def cmd_run(args) -> int:
    cfg = _load(args)
    laws = cfg.laws()
    theta0, tgam = cfg.data()
    out = output_dir(cfg)
    with _executor(args.threads) as ex:
        state = run(cfg.scheme, cfg.circuit, laws, cfg.grid, theta0, tgam, executor=ex, snapshot_times=cfg.snapshots)
    verdicts = run_checks(state.record, cfg.circuit, laws, cfg.grid, cfg.theta_star) if cfg.checks else []
    if args.compare_analytic:
        verdicts.append(analytic_verdict(cfg, laws, state))
    io.write_record(out, state.record, dump_config(cfg))
    for t, snap in state.snapshots.items():
        for name, values in snap.items():
            io.write_snapshot(out / io.snapshot_name(name, t), cfg.grid, values)
    lines = _summary(cfg, state, verdicts)
    io.write_report(out / io.REPORT, lines)
    print("\n".join(lines))
    return 0 if all(v.passed for v in verdicts) else 1


def cmd_refine(args) -> int:
    cfg = _load(args)
    finest = cfg.scheme.tau / 4
    try:
        cfg.scheme.with_tau(finest)
    except ValueError as e:
        raise ConfigError([f"scheme.tau: the refinement level tau/4 = {finest!r} is invalid ({e})"]) from e
    laws = cfg.laws()
    out = output_dir(cfg)
    with _executor(min(args.threads, 3)) as ex:
        rep = tau_refinement_study(cfg.scheme, cfg.circuit, laws, cfg.grid, cfg.data(), executor=ex)
    verdicts = []
    for k, rec in enumerate(rep.records):
        sub = out / f"tau_{k}"
        io.write_record(sub, rec, dump_config(replace(cfg, scheme=cfg.scheme.with_tau(rep.taus[k]))))
        if cfg.checks:
            for v in run_checks(rec, cfg.circuit, laws, cfg.grid, cfg.theta_star):
                verdicts.append(replace(v, name=f"tau_{k}.{v.name}"))
    monitors = monitor_fourth_estimate(rep.records, cfg.scheme.alpha, enforce=False)
    lines = rep.lines() + [monitors.line()] + [v.line() for v in verdicts]
    io.write_report(out / "refinement_report.txt", lines)
    print("\n".join(lines))
    return 0 if all(v.passed for v in verdicts) else 1


def cmd_check(args) -> int:
    record, text = io.read_record(args.record_dir)
    cfg = parse_config_text(text)
    verdicts = run_checks(record, cfg.circuit, cfg.laws(), cfg.grid, cfg.theta_star)
    for v in verdicts:
        print(v.line())
    return 0 if all(v.passed for v in verdicts) else 1


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="thermistor", description="Delay-scheme solver for the RLC thermistor model.")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, fn, helptext in (
        ("run", cmd_run, "run one simulation"),
        ("refine", cmd_refine, "run the tau, tau/2, tau/4 refinement study"),
    ):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("config")
        p.add_argument("--threads", type=int, default=1)
        p.add_argument("--snapshots", default="", help="comma-separated snapshot times")
        p.add_argument("--compare-analytic", action="store_true", help="compare V with the closed-form RLC solution")
        p.add_argument("--no-checks", action="store_true")
        p.set_defaults(func=fn)
    p = sub.add_parser("check", help="replay diagnostics on a saved record directory")
    p.add_argument("record_dir")
    p.set_defaults(func=cmd_check)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "threads", 1) < 1:
        print("error: --threads must be at least 1", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (SchemeError, OSError, ValueError) as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
