"""Command-line entry point: ``hyperwave <subcommand> CONFIG [--out DIR] ...``.

Exit codes: 0 all checks pass, 1 a check failed, 2 configuration error,
3 numerical blow-up.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

EXIT_OK, EXIT_CHECK, EXIT_CONFIG, EXIT_BLOWUP = 0, 1, 2, 3
SUBCOMMANDS = ("stability", "heatflow", "wavemap", "gauge", "spectrum", "decay-fit", "audit")

log = logging.getLogger("hyperwave")


def build_parser():
    p = argparse.ArgumentParser(prog="hyperwave", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        sp = sub.add_parser(name)
        if name == "decay-fit":
            sp.add_argument("series", help="CSV with s in the first column")
            sp.add_argument("--window", nargs=2, type=float, default=(2.0, 10.0),
                            metavar=("S0", "S1"))
            sp.add_argument("--column", default=None, help="value column (default: second)")
            sp.add_argument("--config", default=None)
        else:
            sp.add_argument("config", help="experiment JSON")
        sp.add_argument("--out", default=None, help="output directory (overrides the config)")
        sp.add_argument("--threads", type=int, default=None)
        sp.add_argument("--resolution-scale", type=float, default=None, dest="scale",
                        help="node spacing factor; 4 coarsens each axis 4x")
        sp.add_argument("-v", "--verbose", action="store_true")
    return p


def _set_threads(n):
    if n is None:
        return
    if n < 1:
        raise ValueError(f"--threads must be positive, got {n}")
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS",
                "NUMBA_NUM_THREADS"):
        os.environ[var] = str(n)


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        _set_threads(args.threads)
    except ValueError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    # heavy imports after the thread environment is fixed
    from .config import ExperimentConfig
    from .errors import BlowUpError, ConfigError, FitDomainError, HyperwaveError
    from .experiments import COMMANDS

    cfg_path = args.config
    try:
        cfg = ExperimentConfig.from_json(cfg_path) if cfg_path else None
        if cfg is not None and args.scale is not None:
            cfg = cfg.with_resolution_scale(args.scale)
        if cfg is not None and args.out is not None:
            cfg.output = args.out
        out = args.out or (cfg.output if cfg else ".")
        os.makedirs(out, exist_ok=True)
        fn = COMMANDS[args.command]
        if args.command == "decay-fit":
            rep = fn(cfg, out, args.series, tuple(args.window), args.column)
        else:
            from . import io
            from .config import config_hash
            io.write_json(os.path.join(out, "config.json"), cfg.to_dict(), config_hash(cfg))
            rep = fn(cfg, out)
    except (ConfigError, FitDomainError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except HyperwaveError as exc:
        partial = getattr(exc, "report", None)
        if partial is not None:
            partial.write(out)
        stage = f" in stage {partial.failed_stage}" if partial is not None else ""
        if isinstance(exc, BlowUpError):
            print(f"numerical blow-up{stage}: {exc}", file=sys.stderr)
            return EXIT_BLOWUP
        print(f"error{stage}: {exc}", file=sys.stderr)
        return EXIT_CHECK
    path = rep.write(out)
    for c in rep.checks:
        print(c.line())
    if rep.command_output():
        print(rep.command_output())
    log.info("report written to %s", path)
    return EXIT_OK if rep.passed else EXIT_CHECK


if __name__ == "__main__":
    sys.exit(main())
