from abc import ABC, abstractmethod
from collections.abc import Mapping

from loguru import logger
import pandas as pd
from pydantic import BaseModel

from lakeflow.util import Environment


class ConfigRepository(ABC, Mapping[str, str]):
    LOG_LEVEL_KEY = "LOGURU_LEVEL"
    """
    Minimum level logged to stderr. Defaults to INFO.
    """

    LOG_JSON_KEY = "LAKEFLOW_LOG_JSON"
    """
    Emit one JSON object per log record instead of text.

    Defaults to false.
    """

    ANNEAL_WORKERS_KEY = "LAKEFLOW_ANNEAL_WORKERS"
    """
    Threads used to run independent annealing restarts. Results do not depend on it.

    Defaults to 1.
    """

    def log_set_vars(self):
        for key in [
            type(self).LOG_LEVEL_KEY,
            type(self).LOG_JSON_KEY,
            type(self).ANNEAL_WORKERS_KEY,
        ]:
            logger.info(
                "{}: {}",
                key,
                self.get(key, None),
            )

    @property
    @abstractmethod
    def environment(self) -> Environment: ...

    def get_as_bool(self, key: str, default: bool | None = None) -> bool:
        try:
            val = self[key]
        except KeyError:
            if default is not None:
                return default
            raise
        val = val.strip().lower()
        match val:
            case "true" | "yes" | "1":
                return True
            case "false" | "no" | "0":
                return False
            case _:
                raise ValueError(f"Invalid boolean value: {val}")

    def get_as_int(self, key: str, default: int | None = None) -> int:
        try:
            val = self[key]
        except KeyError:
            if default is not None:
                return default
            raise
        try:
            return int(val.strip())
        except ValueError:
            raise ValueError(f"Invalid integer value for {key}: {val}")

    def anneal_workers(self, default: int = 1) -> int:
        workers = self.get_as_int(type(self).ANNEAL_WORKERS_KEY, default)
        if workers < 1:
            raise ValueError(f"{type(self).ANNEAL_WORKERS_KEY} must be at least 1")
        return workers


class ReportRepository(ABC, Mapping[str, str]):
    """
    Where a command leaves its reports, keyed by file name.
    """

    @property
    @abstractmethod
    def location(self) -> str: ...

    @abstractmethod
    def save(self, name: str, text: str) -> None: ...

    def write_model(self, name: str, model: BaseModel) -> None:
        self.save(name, model.model_dump_json(indent=2) + "\n")

    def write_table(self, name: str, frame: pd.DataFrame) -> None:
        self.save(name, frame.to_csv(index=False, lineterminator="\n"))

    def read_model[M: BaseModel](self, name: str, model_type: type[M]) -> M:
        return model_type.model_validate_json(self[name])
