"""Command line entry point: ``kcqf run | figure | list-presets``."""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import bench


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="kcqf", description="Key conditional quotient filter benchmarks")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a Monte Carlo scenario and write CSV")
    src = run.add_mutually_exclusive_group(required=True)
    src.add_argument("--preset")
    src.add_argument("--scenario", type=Path, help="TOML scenario file")
    run.add_argument("--filter", action="append", dest="filters", choices=bench.FILTER_IDS)
    run.add_argument("--d", action="append", type=int, dest="ds")
    run.add_argument("--samples", type=int)
    run.add_argument("--mc-runs", type=int)
    run.add_argument("--seed", type=int)
    run.add_argument("--out", type=Path)
    run.add_argument("--no-timing", action="store_true", help="omit wall-clock column (reproducible output)")

    fig = sub.add_parser("figure", help="write plot data for one figure")
    fig.add_argument("--id", required=True, dest="figure_id")
    fig.add_argument("--preset", required=True)
    fig.add_argument("--out", type=Path, required=True)
    fig.add_argument("--mc-runs", type=int)
    fig.add_argument("--seed", type=int)

    sub.add_parser("list-presets", help="print available presets")
    return p


def _select_filters(cfg: bench.ScenarioConfig, ids, ds) -> bench.ScenarioConfig:
    if not ids and not ds:
        return cfg
    ids = ids or [f.id for f in cfg.filters]
    specs = []
    for fid in dict.fromkeys(ids):
        existing = next((f for f in cfg.filters if f.id == fid), None)
        if fid == "kcqf":
            d = tuple(ds) if ds else (existing.d if existing else (2,))
            specs.append(bench.FilterSpec("kcqf", d=d, window_len=existing.window_len if existing else None))
        else:
            specs.append(existing or bench.FilterSpec(fid))
    return replace(cfg, filters=tuple(specs))


def _cmd_run(args) -> int:
    cfg = bench.preset_scenarios(args.preset) if args.preset else bench.load_scenario(args.scenario)
    cfg = _select_filters(cfg, args.filters, args.ds)
    cfg = cfg.with_overrides(sample_count=args.samples, mc_runs=args.mc_runs, seed=args.seed)
    report = bench.run_scenario(cfg)
    out = args.out or (Path(cfg.out_csv) if cfg.out_csv else Path(f"{cfg.name}.csv"))
    bench.emit_csv(report, out, timing=not args.no_timing)
    for r in report.results:
        status = f"error: {r.error}" if r.error else f"{r.erms_bar:.4f}"
        print(f"{r.label:10s} {status}")
    return 0


def _cmd_figure(args) -> int:
    fid = args.figure_id
    if fid not in bench.FIGURE_IDS:
        raise ValueError(f"unknown figure {fid!r}; valid: {', '.join(bench.FIGURE_IDS)}")
    cfg = bench.preset_scenarios(args.preset).with_overrides(mc_runs=args.mc_runs, seed=args.seed)
    seed = cfg.seed
    if fid in ("fig1", "fig2", "fig3"):
        if fid == "fig1":
            cfg = replace(cfg, filters=tuple(f for f in cfg.filters if f.id == "kcqf"))
        data = bench.run_scenario(cfg)
    elif fid in ("fig4", "fig6"):
        ds = (2, 3) if fid == "fig4" else (2, 3, 4)
        data = bench.sample_sweep(cfg, ds)
    elif fid == "fig5a":
        from .ssm import KLUniform

        if not isinstance(cfg.proc, KLUniform):
            raise ValueError("fig5a needs a preset with K-L process noise (example-b)")
        data = bench.fig5a_data(cfg.proc.basis, seed=seed)
    else:
        data = bench.fig5b_data(cfg.init, cfg.proc, seed=seed)
    for path in bench.emit_plotdata(data, fid, args.out):
        print(path)
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "list-presets":
            for name in bench.PRESETS:
                print(name)
            return 0
        if args.command == "run":
            return _cmd_run(args)
        return _cmd_figure(args)
    except (ValueError, OSError) as exc:
        print(f"kcqf: error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
