from collections.abc import Iterator

from lakeflow.contracts.repos import ReportRepository


class InMemoryReportStore(ReportRepository):
    def __init__(self, data: dict[str, str] | None = None):
        self.__data: dict[str, str] = data or {}

    @property
    def location(self) -> str:
        return "<memory>"

    def save(self, name: str, text: str) -> None:
        self.__data[name] = text

    def __getitem__(self, key: str) -> str:
        return self.__data[key]

    def __iter__(self) -> Iterator[str]:
        return iter(self.__data)

    def __len__(self) -> int:
        return len(self.__data)
