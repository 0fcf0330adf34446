"""dbar-bie command-line interface.

    dbar-bie <command> [--config FILE] [--grid 4,6,8] [--eps-levels N]
             [--field NAME ...] [--out DIR] [--seed N] [--tol-profile P]

Flags override the JSON config file.  Writes <out>/<command>.json and CSV
artifacts; exit status 0 iff every check passes, 1 if a check fails,
2 on usage errors.
"""
import argparse
import json
import logging
import sys

from .catalog import CATALOG, UnknownField
from .experiments import COMMANDS, ExperimentConfig, run, schema_hint, TOLERANCES
from .geometry import ConfigurationError

log = logging.getLogger("dbar_bie")


def _int_list(text):
    try:
        return [int(x) for x in text.replace(" ", "").split(",") if x]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def build_parser():
    p = argparse.ArgumentParser(
        prog="dbar-bie",
        description="Boundary integral equations for the dbar-Neumann problem on the unit ball in C^2.",
        epilog=f"fields: {', '.join(CATALOG)}, holo-poly:<expr>, u:<s>;<t>, kmh:<i>")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", help="JSON file with ExperimentConfig fields")
    p.add_argument("--grid", type=_int_list, help="grid degrees, strictly increasing (e.g. 4,6,8)")
    p.add_argument("--eps-levels", type=int, help="number of epsilon levels (extrapolation method)")
    p.add_argument("--field", action="append", help="catalog field; repeat for several")
    p.add_argument("--out", help="output directory")
    p.add_argument("--seed", type=int, help="random seed")
    p.add_argument("--tol-profile", choices=sorted(TOLERANCES))
    p.add_argument("--method", choices=("direct", "extrapolate"), help="singular quadrature")
    p.add_argument("--no-csv", action="store_true", help="skip CSV artifacts")
    p.add_argument("-q", "--quiet", action="store_true")
    return p


def make_config(args):
    cfg = {}
    if args.config:
        try:
            with open(args.config) as fh:
                cfg = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigurationError(f"cannot read config {args.config}: {exc}; schema: {schema_hint()}")
        if not isinstance(cfg, dict):
            raise ConfigurationError(f"config must be a JSON object; schema: {schema_hint()}")
        cfg.pop("command", None)
    overrides = {"grids": args.grid, "eps_levels": args.eps_levels, "fields": args.field,
                 "out": args.out, "seed": args.seed, "tol_profile": args.tol_profile,
                 "method": args.method}
    cfg.update({k: v for k, v in overrides.items() if v is not None})
    if args.no_csv:
        cfg["write_csv"] = False
    return ExperimentConfig.from_dict({**cfg, "command": args.command})


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(message)s")
    try:
        cfg = make_config(args)
    except (ConfigurationError, UnknownField, TypeError) as exc:
        msg = exc.args[0] if exc.args else str(exc)
        parser.print_usage(sys.stderr)
        print(f"dbar-bie: error: {msg}", file=sys.stderr)
        return 2
    report = run(args.command, cfg)
    path = report.write(cfg.out)
    if not args.quiet:
        for line in report.summary_lines():
            print(line)
    print(f"{'PASS' if report.passed else 'FAIL'} {args.command}: "
          f"{sum(c.passed for c in report.checks)}/{len(report.checks)} checks; report {path}")
    return 0 if report.passed else 1


if __name__ == "__main__":
    sys.exit(main())
