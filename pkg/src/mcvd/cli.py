"""Command-line entry point: ``mcvd run | plot | validate``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from mcvd import experiment
from mcvd.errors import ConfigError, McvdError


def _threads(value):
    if value is not None:
        return value
    try:
        return max(1, int(os.environ.get("MCVD_THREADS", "1")))
    except ValueError:
        raise ConfigError("MCVD_THREADS must be an integer") from None


def _overrides(args):
    over = {}
    if getattr(args, "moment_mode", None):
        over["moment_mode"] = args.moment_mode
    return over


def _cmd_run(args):
    exp = experiment.load_experiment(args.config, args.preset, _overrides(args))
    rows = experiment.run(exp, threads=_threads(args.threads), seed=args.seed)
    if args.out:
        with open(args.out, "w", newline="") as fh:
            experiment.write_csv(exp, rows, fh)
        logging.getLogger("mcvd").info("wrote %d rows to %s", len(rows), args.out)
    else:
        experiment.write_csv(exp, rows, sys.stdout)
    return 0


def _cmd_validate(args):
    exp = experiment.load_experiment(args.config, args.preset, _overrides(args))
    summary = {
        "ok": True,
        "scenario": exp.scenario.value if exp.scenario else None,
        "omega_m2_s": exp.channel.diffusion_coefficient,
        "transmitters": exp.layout.r,
        "schemes": [s.value for s in exp.schemes],
        "moment_mode": exp.moment_mode.value,
        "sweep_variable": exp.sweep.variable,
        "sweep_points": len(exp.sweep.grid),
        "simulation": exp.sim is not None,
    }
    print(json.dumps(summary))
    return 0


def _cmd_plot(args):
    script = experiment.plot_script(args.csv)
    out = args.out or args.csv.rsplit(".", 1)[0] + ".gp"
    with open(out, "w") as fh:
        fh.write(script)
    print(out)
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="mcvd", description="TDMA molecular-communication release scheduling")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="solve a configured experiment and write CSV")
    run.add_argument("config", nargs="?", help="YAML config (merged over the preset)")
    run.add_argument("--preset", choices=experiment.preset_names())
    run.add_argument("--out", help="CSV path (default: stdout)")
    run.add_argument("--seed", type=int, help="required when the config has a sim section")
    run.add_argument("--moment-mode", choices=["paper", "corrected"])
    run.add_argument("--threads", type=int)
    run.set_defaults(func=_cmd_run)

    val = sub.add_parser("validate", help="check a config and print a JSON summary")
    val.add_argument("config", nargs="?")
    val.add_argument("--preset", choices=experiment.preset_names())
    val.add_argument("--moment-mode", choices=["paper", "corrected"])
    val.set_defaults(func=_cmd_validate)

    plot = sub.add_parser("plot", help="emit a gnuplot script for a results CSV")
    plot.add_argument("csv")
    plot.add_argument("--out")
    plot.set_defaults(func=_cmd_plot)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR, format="%(levelname)s %(name)s: %(message)s")
    if args.command in ("run", "validate") and not (args.config or args.preset):
        parser.error(f"{args.command} needs a config file or --preset")
    if getattr(args, "threads", None) is not None and args.threads < 1:
        parser.error("--threads must be >= 1")
    try:
        return args.func(args)
    except McvdError as exc:
        err = {"error": type(exc).__name__, "message": str(exc), "exit_code": exc.exit_code}
        diag = getattr(exc, "diagnostics", None)
        if diag:
            err["diagnostics"] = {k: repr(v) for k, v in diag.items()}
        print(json.dumps(err), file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
