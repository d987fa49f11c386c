from collections.abc import Iterator
import os
from pathlib import Path
import sys

import dotenv
from loguru import logger

from lakeflow.contracts.repos import ConfigRepository
from lakeflow.util import Environment


class EnvConfig(ConfigRepository):
    """
    Process environment layered over an optional .env file; the environment wins.

    Building one (re)configures the loguru sink from LOGURU_LEVEL and LAKEFLOW_LOG_JSON.
    """

    def __init__(
        self, dotenv_path: str | Path | None = None, env: Environment | None = None
    ):
        self.__dotenv = {
            k: v for k, v in dotenv.dotenv_values(dotenv_path).items() if v is not None
        }
        self.__env = env if env is not None else self.__resolve_environment()
        self.configure_logging()

    def __resolve_environment(self) -> Environment:
        raw = self.get(Environment.var_key())
        return Environment.PROD if raw is None else Environment.from_arg(raw)

    def configure_logging(self) -> None:
        # backtrace=False stops loguru at the handler instead of dumping every frame
        logger.configure(
            handlers=[
                {
                    "sink": sys.stderr,
                    "backtrace": False,
                    "level": self.get(type(self).LOG_LEVEL_KEY, "INFO").upper(),
                    "serialize": self.get_as_bool(type(self).LOG_JSON_KEY, False),
                }
            ]
        )

    def __iter__(self) -> Iterator[str]:
        return iter(self.__dotenv)

    def __getitem__(self, key: str) -> str:
        if (val := os.environ.get(key)) is not None:
            return val
        return self.__dotenv[key]

    def __len__(self) -> int:
        return len(self.__dotenv)

    @property
    def environment(self) -> Environment:
        return self.__env
