"""command line interface: ``ebsmooth <command> CONFIG [options]``"""

import argparse
import logging
import sys
import time

import ebsmooth
from ebsmooth._config import config_hash, load_config, parse_override
from ebsmooth._errors import ConfigError, DomainError, NumericalError
from ebsmooth._experiments import (
    run_certification_curve,
    run_certify,
    run_gen_data,
    run_oracle_check,
    run_train_energy,
    run_train_xhat,
    run_walk_jump,
)
from ebsmooth._report import write_manifest

logger = logging.getLogger(__name__)

COMMANDS = {
    "gen-data": (run_gen_data, "generate the train and test splits"),
    "train-energy": (run_train_energy, "fit an energy by denoising least squares"),
    "train-xhat": (run_train_xhat, "train the soft classifier (XHAT and baselines)"),
    "certify": (run_certify, "certify the test split"),
    "curve": (run_certification_curve, "certified accuracy over a radius grid"),
    "walk-jump": (run_walk_jump, "walk-jump sampling from noisy test points"),
    "oracle-check": (run_oracle_check, "compare certification with analytic values"),
}

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NUMERICAL = 2
EXIT_IO = 3

LOG_FORMAT = "%(asctime)s %(name)s %(levelname)s %(message)s"


def build_parser():
    parser = argparse.ArgumentParser(
        prog="ebsmooth",
        description="Certified classification with empirical Bayes smoothing.",
    )
    parser.add_argument("--version", action="version", version=ebsmooth.__version__)

    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument(
        "-v", "--verbose", action="store_true", help="log debug messages"
    )
    verbosity.add_argument(
        "-q", "--quiet", action="store_true", help="log warnings only"
    )

    subparsers = parser.add_subparsers(dest="command", required=True)

    for name, (_, help_text) in COMMANDS.items():
        sub = subparsers.add_parser(name, help=help_text)
        sub.add_argument("config", help="experiment configuration (YAML)")
        sub.add_argument(
            "--set",
            dest="overrides",
            action="append",
            default=[],
            metavar="KEY=VALUE",
            help="override a configuration key, e.g. --set confidence.nc=10000",
        )
        sub.add_argument("--seed", type=int, help="same as --set seed=SEED")
        sub.add_argument("--sigma", type=float, help="same as --set sigma=SIGMA")
        sub.add_argument("--workers", type=int, help="same as --set workers=WORKERS")
        sub.add_argument("--output-dir", help="same as --set output_dir=OUTPUT_DIR")

    return parser


def _overrides(args):
    overrides = [parse_override(text) for text in args.overrides]

    for key in ("seed", "sigma", "workers", "output_dir"):
        value = getattr(args, key)
        if value is not None:
            overrides.append((key, value))

    return overrides


def _setup_logging(args):
    if args.verbose:
        level = logging.DEBUG
    elif args.quiet:
        level = logging.WARNING
    else:
        level = logging.INFO

    logging.basicConfig(level=level, format=LOG_FORMAT)
    logging.captureWarnings(True)


def run(args):
    """run the command of the parsed arguments ``args`` and write the manifest"""

    cfg = load_config(args.config, _overrides(args))
    func, _ = COMMANDS[args.command]

    logger.info(f"ebsmooth {ebsmooth.__version__}: {args.command} {args.config}")
    start = time.perf_counter()

    outputs = func(cfg)

    path = write_manifest(
        cfg.output_dir,
        command=args.command,
        config_hash=config_hash(cfg),
        seed=cfg.seed,
        version=ebsmooth.__version__,
        wall_time=time.perf_counter() - start,
        outputs=outputs,
    )
    logger.info(f"wrote {path}")


def main(argv=None):
    """entry point; returns the exit code"""

    args = build_parser().parse_args(argv)
    _setup_logging(args)

    try:
        run(args)
    except NumericalError as err:
        logger.error(str(err))
        return EXIT_NUMERICAL
    except OSError as err:
        logger.error(str(err))
        return EXIT_IO
    except (ConfigError, DomainError) as err:
        logger.error(str(err))
        return EXIT_CONFIG

    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
