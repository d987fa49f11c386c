from pathlib import Path

import pytest

GOLDEN_DIR = Path(__file__).parent / "golden"


def pytest_addoption(parser: pytest.Parser):
    parser.addoption(
        "--update-golden",
        action="store_true",
        default=False,
        help="rewrite tests/golden from this run instead of comparing against it",
    )


class GoldenFiles:
    """
    Text outputs pinned under tests/golden. A missing or different file fails
    unless the run was started with --update-golden.
    """

    def __init__(self, directory: Path, update: bool):
        self.directory = directory
        self.update = update

    def check(self, name: str, payload: str):
        path = self.directory / name
        if self.update:
            self.directory.mkdir(exist_ok=True)
            path.write_text(payload)
            return
        if not path.is_file():
            pytest.fail(f"no golden file {path}; run pytest --update-golden to create it")
        assert payload == path.read_text(), f"{name} differs from its golden file"


@pytest.fixture(scope="session")
def golden(pytestconfig: pytest.Config) -> GoldenFiles:
    return GoldenFiles(GOLDEN_DIR, bool(pytestconfig.getoption("--update-golden")))
