"""Command line entry point: run, sweep, verify and gen-workload."""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .config import RunConfig, load_config
from .errors import ConfigurationError, InvariantViolation
from .metrics import write_events, write_summaries
from .runner import SWEEP_LABELS, SWEEP_LAMBDAS, config_for, run_scenario, sweep
from .verify import SUITES, run_suites
from .workload import sawtooth_workload, write_trace

OUTPUT_ENV = "NOAHSIM_OUTPUT"

MIN_REPLICATIONS = 30
EXIT_OK, EXIT_CONFIG, EXIT_VERIFY, EXIT_INVARIANT = 0, 1, 2, 3


def _out_dir(arg: str | None) -> Path:
    path = Path(arg or os.environ.get(OUTPUT_ENV) or "noahsim-out")
    path.mkdir(parents=True, exist_ok=True)
    return path


def _base_config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    changes = {}
    if getattr(args, "seed", None) is not None:
        changes["scenario.seed"] = args.seed
    if getattr(args, "lambda_max", None) is not None:
        changes["scenario.lambda_max"] = args.lambda_max
    return cfg.with_(**changes) if changes else cfg


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma separated list of numbers: {text!r}")


def cmd_run(args) -> int:
    cfg = _base_config(args)
    if args.scheduler:
        cfg = config_for(args.scheduler, cfg)
    out = _out_dir(args.out)
    events = sawtooth_workload(cfg.scenario)
    result = run_scenario(cfg, events=events)
    write_trace(events, out / "workload.csv")
    write_events(result.records, out / "events.csv")
    write_summaries([result.summary.row()], out / "summary.csv")
    (out / "summary.json").write_text(json.dumps(
        {"config": cfg.to_dict(), "summary": result.summary.to_dict()}, indent=2, sort_keys=True))
    s = result.summary
    print(f"{s.scheduler} lambda={s.lambda_max:g} seed={s.seed}: {s.events} events, "
          f"mean response {s.avg_response:.4f}s, {s.workers_covered} workers, "
          f"{s.total_instances} instances -> {out}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _base_config(args)
    labels = args.schedulers.split(",") if args.schedulers else list(SWEEP_LABELS)
    for label in labels:
        config_for(label, cfg)
    lambdas = args.lambdas or list(SWEEP_LAMBDAS)
    rows = sweep(cfg, labels, lambdas, range(args.seeds), jobs=args.jobs)
    out = _out_dir(args.out)
    write_summaries(rows, out / "summary.csv")
    (out / "summary.json").write_text(json.dumps({"config": cfg.to_dict(), "rows": rows},
                                                 indent=2, sort_keys=True))
    print(f"{len(rows)} runs -> {out / 'summary.csv'}")
    return EXIT_OK


def cmd_verify(args) -> int:
    names = args.suite.split(",") if args.suite != "all" else list(SUITES)
    unknown = [n for n in names if n not in SUITES]
    if unknown:
        raise ConfigurationError(f"unknown suite(s) {unknown}; choose from {sorted(SUITES)}")
    if args.replications < MIN_REPLICATIONS and {"mm1", "mmc"} & set(names):
        raise ConfigurationError(f"--reps must be >= {MIN_REPLICATIONS}")
    results = run_suites(names, args.replications, args.executions, args.seed)
    for r in results:
        print(r.line())
    return EXIT_OK if all(r.passed for r in results) else EXIT_VERIFY


def cmd_gen_workload(args) -> int:
    cfg = _base_config(args)
    events = sawtooth_workload(cfg.scenario)
    path = write_trace(events, args.out)
    print(f"{len(events)} events -> {path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="noahsim", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out_help="output directory (default: $NOAHSIM_OUTPUT or ./noahsim-out)"):
        sp.add_argument("--config", help="JSON run configuration")
        sp.add_argument("--lambda-max", "--lambda", dest="lambda_max", type=float, help="peak per-class rate")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out", help=out_help)

    run = sub.add_parser("run", help="simulate one scenario")
    common(run)
    run.add_argument("--scheduler", help="scheduler name, or noah:<alpha>")
    run.set_defaults(fn=cmd_run)

    sw = sub.add_parser("sweep", help="simulate schedulers x lambdas x seeds")
    common(sw)
    sw.add_argument("--schedulers", help="comma separated labels (default: all seven)")
    sw.add_argument("--lambda-max-list", "--lambdas", dest="lambdas", type=_floats, help="comma separated peak rates")
    sw.add_argument("--seeds", type=int, default=5)
    sw.add_argument("--jobs", type=int, default=1)
    sw.set_defaults(fn=cmd_sweep)

    ver = sub.add_parser("verify", help="queueing model checks of the engine")
    ver.add_argument("--suite", default="all", help=f"all or comma separated {sorted(SUITES)}")
    ver.add_argument("--reps", "--replications", dest="replications", type=int, default=100,
                     help="replications for mm1/mmc (at least 30)")
    ver.add_argument("--executions", type=int, default=10_000)
    ver.add_argument("--seed", type=int, default=0)
    ver.set_defaults(fn=cmd_verify)

    gen = sub.add_parser("gen-workload", help="write the sawtooth arrival trace")
    common(gen, out_help="trace CSV path")
    gen.set_defaults(fn=cmd_gen_workload)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "gen-workload" and not args.out:
        parser.error("gen-workload needs --out")
    try:
        return args.fn(args)
    except ConfigurationError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ValueError, KeyError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InvariantViolation as exc:
        print(f"invariant violated: {exc}", file=sys.stderr)
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
