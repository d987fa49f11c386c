from collections.abc import Iterator
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path

from loguru import logger

from lakeflow.contracts.repos import ConfigRepository, ReportRepository
from lakeflow.infrastructure.env_config import EnvConfig
from lakeflow.infrastructure.report_store import ReportDirectory


@dataclass
class Services:
    config: ConfigRepository
    reports: ReportRepository

    def summary_of_implementations(self) -> str:
        return (
            "\n"
            f"  config:  {type(self.config).__name__} ({self.config.environment.value})\n"
            f"  reports: {type(self.reports).__name__} at {self.reports.location}"
        )


@contextmanager
def services_factory(config: EnvConfig, out_dir: Path | str) -> Iterator[Services]:
    services = Services(config=config, reports=ReportDirectory(out_dir))
    logger.debug("Services: {}", services.summary_of_implementations())
    yield services
