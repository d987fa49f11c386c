import argparse
from collections.abc import Callable, Sequence
from pathlib import Path
import sys
from typing import Any

from loguru import logger
from pydantic import ValidationError

from lakeflow.commands import (
    CommandArgs,
    cmd_fit,
    cmd_generate_synthetic,
    cmd_mpc,
    cmd_optimize,
    cmd_sensitivity,
    tool_version,
)
from lakeflow.contracts.errors import InputError, LakeflowError
from lakeflow.infrastructure.env_config import EnvConfig
from lakeflow.services import Services, services_factory

EXIT_OK = 0
EXIT_INPUT = InputError.exit_code

COMMANDS: dict[str, Callable[[Services, CommandArgs], Any]] = {
    "fit": cmd_fit,
    "optimize": cmd_optimize,
    "mpc": cmd_mpc,
    "sensitivity": cmd_sensitivity,
    "generate-synthetic": cmd_generate_synthetic,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lakeflow",
        description="Water levels and releases for a chain of five lakes.",
    )
    parser.add_argument("--version", action="version", version=tool_version())
    parser.add_argument("command", choices=list(COMMANDS))
    parser.add_argument(
        "--config",
        type=Path,
        help="run config (optimize, mpc, sensitivity) or topology (fit, generate-synthetic)",
    )
    parser.add_argument("--data", type=Path, help="historical record, long-format CSV")
    parser.add_argument("--out", type=Path, default=Path("out"), help="report directory")
    parser.add_argument("--seed", type=int, help="overrides the configured seed")
    return parser


def main(argv: Sequence[str] | None = None, env: EnvConfig | None = None) -> int:
    args = build_parser().parse_args(argv)
    command = COMMANDS[args.command]
    command_args = CommandArgs(config=args.config, data=args.data, out=args.out, seed=args.seed)

    try:
        config = env if env is not None else EnvConfig()
        config.log_set_vars()
        with services_factory(config, command_args.out) as services:
            command(services, command_args)
    except LakeflowError as e:
        logger.opt(exception=e).error("{} failed: {}", args.command, str(e))
        return e.exit_code
    except ValidationError as e:
        logger.opt(exception=e).error("Invalid document: {}", str(e))
        return EXIT_INPUT
    except (OSError, ValueError) as e:
        logger.opt(exception=e).error("Bad input: {}", str(e))
        return EXIT_INPUT

    logger.info("{} finished, reports in {}", args.command, command_args.out)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
