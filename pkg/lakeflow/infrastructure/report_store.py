from collections.abc import Iterator
from pathlib import Path

from loguru import logger

from lakeflow.contracts.repos import ReportRepository


class ReportDirectory(ReportRepository):
    """
    Reports as files in one output directory, created on first write.
    """

    def __init__(self, path: Path | str):
        self.__path = Path(path)

    @property
    def location(self) -> str:
        return str(self.__path)

    def save(self, name: str, text: str) -> None:
        self.__path.mkdir(parents=True, exist_ok=True)
        target = self.__path / name
        target.write_text(text)
        logger.info("Wrote {}", target)

    def __getitem__(self, key: str) -> str:
        target = self.__path / key
        if not target.is_file():
            raise KeyError(key)
        return target.read_text()

    def __iter__(self) -> Iterator[str]:
        if not self.__path.is_dir():
            return iter(())
        return iter(sorted(p.name for p in self.__path.iterdir() if p.is_file()))

    def __len__(self) -> int:
        return sum(1 for _ in self)
