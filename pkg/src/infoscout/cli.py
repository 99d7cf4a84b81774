"""Command line: ``infoscout run``, ``infoscout map gen``, ``infoscout ablate``, ``infoscout config``."""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .bench import (RunConfig, WorldConfig, ablate_epochs, benchmark_checks, config_to_ini, format_ablation,
                    load_config, run_benchmark)
from .world import generate_structured, generate_unstructured, save_map


def _base_config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    if getattr(args, "engines", None):
        cfg = replace(cfg, engines=tuple(e.strip() for e in args.engines.split(",") if e.strip()))
    if getattr(args, "trials", None):
        cfg = replace(cfg, trials=args.trials)
    if getattr(args, "out", None):
        cfg = replace(cfg, output_dir=args.out)
    cfg.validate()
    return cfg


def _cmd_run(args) -> int:
    cfg = _base_config(args)
    agg = run_benchmark(cfg, serial=args.serial)
    print(agg.summary_table())
    print(f"outputs written to {cfg.output_dir}")
    if not args.check:
        return 0
    failed = 0
    for name, ok, detail in benchmark_checks(agg):
        print(f"{'SKIP' if ok is None else 'PASS' if ok else 'FAIL'}  {name}  ({detail})")
        failed += ok is False
    return 1 if failed else 0


def _cmd_ablate(args) -> int:
    cfg = _base_config(args)
    epochs = [int(v) for v in args.epochs.split(",") if v.strip()]
    engines = tuple(e.strip() for e in (args.engines or "bkio").split(",") if e.strip())
    rows = ablate_epochs(cfg, epochs, engines=engines, serial=args.serial)
    print(format_ablation(rows))
    return 0


def _cmd_map_gen(args) -> int:
    if args.kind == "structured":
        world = generate_structured(args.width, args.height, args.resolution, seed=args.seed)
    else:
        world = generate_unstructured(args.width, args.height, args.resolution, args.obstacles, seed=args.seed)
    save_map(world, args.out)
    print(f"{args.kind} map {world.width_cells}x{world.height_cells} cells written to {args.out}")
    return 0


def _cmd_config(args) -> int:
    text = config_to_ini(load_config(args.config) if args.config else RunConfig())
    if args.write:
        Path(args.write).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="infoscout", description="Information-driven exploration benchmark.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run the Monte Carlo benchmark")
    run.add_argument("--config")
    run.add_argument("--engines", help="comma separated subset of ng,gpbo,bkio")
    run.add_argument("--trials", type=int)
    run.add_argument("--serial", action="store_true", help="run trials one after another")
    run.add_argument("--check", action="store_true", help="exit nonzero if a relative check fails")
    run.add_argument("--out")
    run.set_defaults(func=_cmd_run)

    abl = sub.add_parser("ablate", help="compare epoch counts")
    abl.add_argument("--config")
    abl.add_argument("--epochs", default="1,30,60")
    abl.add_argument("--engines", help="comma separated, default bkio")
    abl.add_argument("--trials", type=int)
    abl.add_argument("--serial", action="store_true")
    abl.add_argument("--out")
    abl.set_defaults(func=_cmd_ablate)

    mp = sub.add_parser("map", help="map utilities")
    msub = mp.add_subparsers(dest="map_command", required=True)
    gen = msub.add_parser("gen", help="generate a synthetic map file")
    gen.add_argument("--kind", choices=("structured", "unstructured"), default="structured")
    gen.add_argument("--width", type=float, default=WorldConfig.width)
    gen.add_argument("--height", type=float, default=WorldConfig.height)
    gen.add_argument("--resolution", type=float, default=WorldConfig.resolution)
    gen.add_argument("--obstacles", type=int, default=WorldConfig.n_obstacles)
    gen.add_argument("--seed", type=int, default=WorldConfig.seed)
    gen.add_argument("--out", required=True)
    gen.set_defaults(func=_cmd_map_gen)

    conf = sub.add_parser("config", help="print or write the full default configuration")
    conf.add_argument("--config", help="normalize an existing file instead of the defaults")
    conf.add_argument("--write")
    conf.set_defaults(func=_cmd_config)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"infoscout: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
