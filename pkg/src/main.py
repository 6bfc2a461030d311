"""
Command-line entry point.
Runs individual pipeline phases or the full experiment: ``python -m src.main <command>``.
"""

import argparse
import sys
from typing import List, Optional

from pydantic import ValidationError

from config.settings import ExperimentConfig, get_settings
from src.services import dataset_service, pipeline_service
from src.utils.errors import SpadeError
from src.utils.logging import get_logger, setup_logging

logger = get_logger(__name__)

PHASE_COMMANDS = ("train", "embed", "knn", "eigs", "score", "prune", "retrain", "attack", "eval")


def add_config_arguments(parser: argparse.ArgumentParser) -> None:
    """
    Add ``--config`` plus one ``--key value`` flag per experiment setting.

    Flags are kept as strings; the settings model does the type coercion.
    """
    parser.add_argument("--config", help="Flat key=value configuration file")
    for name, field in ExperimentConfig.model_fields.items():
        flags = [f"--{name}"]
        if "_" in name:
            flags.append(f"--{name.replace('_', '-')}")
        parser.add_argument(*flags, dest=name, default=None, help=field.description or f"override '{name}'")


def create_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spade-prune",
        description="Spade edge-robustness scoring, pruning and attack evaluation for GCNs",
    )
    commands = parser.add_subparsers(dest="command", required=True)

    convert = commands.add_parser("convert", help="Convert public Planetoid files to the portable layout")
    convert.add_argument("--raw-dir", required=True, help="Directory with ind.<name>.* files")
    convert.add_argument("--name", default="citeseer", help="Dataset name")
    convert.add_argument("--out", required=True, help="Destination dataset directory")

    for command in PHASE_COMMANDS:
        add_config_arguments(commands.add_parser(command, help=f"Run the '{command}' phase"))
    add_config_arguments(commands.add_parser("run", help="Run the full pipeline"))
    return parser


def load_config(args: argparse.Namespace) -> ExperimentConfig:
    overrides = {
        name: getattr(args, name)
        for name in ExperimentConfig.model_fields
        if getattr(args, name, None) is not None
    }
    return ExperimentConfig.from_sources(args.config, overrides)


def dispatch(args: argparse.Namespace) -> None:
    if args.command == "convert":
        dataset_service.convert_planetoid(args.raw_dir, args.name, args.out)
        return

    cfg = load_config(args)
    if args.command == "run":
        if cfg.seeds > 1:
            pipeline_service.run_seed_sweep(cfg)
        else:
            pipeline_service.run_pipeline(cfg)
        return
    pipeline_service.run_phase(args.command, cfg)


def main(argv: Optional[List[str]] = None) -> int:
    """
    Parse arguments, run the command and map failures to exit codes.

    Returns:
        0 on success, 1 on validation or configuration errors, 2 on numeric
        or convergence failures and unexpected errors
    """
    setup_logging(get_settings())
    args = create_parser().parse_args(argv)
    try:
        dispatch(args)
    except ValidationError as e:
        logger.error(f"Invalid configuration: {e}")
        return 1
    except FileNotFoundError as e:
        logger.error(str(e))
        return 1
    except SpadeError as e:
        logger.error(str(e), extra={"error_type": type(e).__name__, "exit_code": e.exit_code})
        return e.exit_code
    except Exception as e:
        logger.error(f"Unhandled exception: {e}", exc_info=True)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
