from importlib.resources import files
from pathlib import Path

from loguru import logger
from pydantic import BaseModel, ValidationError

from lakeflow.contracts.errors import SchemaError
from lakeflow.contracts.models import NetworkTopology

DEFAULT_TOPOLOGY = "topology.json"


def _validate[M: BaseModel](text: str, model_type: type[M], source: str) -> M:
    try:
        return model_type.model_validate_json(text)
    except ValidationError as e:
        errs = e.errors(include_url=False)
        logger.debug("Validation of {} failed: {}", source, errs)
        details = "; ".join(
            f"{'.'.join(str(p) for p in err['loc']) or '<root>'}: {err['msg']}" for err in errs
        )
        raise SchemaError(f"{source}: {details}") from e


def default_topology() -> NetworkTopology:
    """The topology shipped with the package."""
    text = files("lakeflow.data").joinpath(DEFAULT_TOPOLOGY).read_text()
    return _validate(text, NetworkTopology, f"<package>/{DEFAULT_TOPOLOGY}")


class JsonDocuments:
    """
    JSON documents under one directory; relative names resolve against it.
    """

    def __init__(self, root: Path | str = "."):
        self.__root = Path(root)

    def path(self, name: str | Path) -> Path:
        return self.__root / name

    def load[M: BaseModel](self, name: str | Path, model_type: type[M]) -> M:
        path = self.path(name)
        text = path.read_text()
        return _validate(text, model_type, str(path))

    def topology(self, name: str | Path | None) -> NetworkTopology:
        if name is None:
            return default_topology()
        return self.load(name, NetworkTopology)
