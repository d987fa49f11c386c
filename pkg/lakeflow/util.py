from enum import Enum
import hashlib
from pathlib import Path


class Environment(Enum):
    """
    Where lakeflow runs, read from LAKEFLOW_ENV (prod, dev or test).
    """

    PROD = "prod"
    DEV = "dev"
    TEST = "test"

    @classmethod
    def var_key(cls) -> str:
        return "LAKEFLOW_ENV"

    @classmethod
    def from_arg(cls, arg: str) -> "Environment":
        """
        Raises:
            ValueError: If `arg` is not one of prod, dev, test (case-insensitive).
        """
        try:
            return cls(arg.strip().lower())
        except ValueError:
            raise ValueError(f"Invalid {cls.var_key()}: {arg!r}") from None


def file_sha256(path: Path | str) -> str:
    digest = hashlib.sha256()
    with Path(path).open("rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()
