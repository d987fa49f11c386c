from pathlib import Path

import pandas as pd
import pytest

from lakeflow.contracts.errors import SchemaError
from lakeflow.contracts.models import LakeId, MonthStamp, RiverId
from lakeflow.infrastructure.csv_store import (
    history_frame,
    parse_history,
    plan_frame,
    read_history,
    write_history,
)
from lakeflow.infrastructure.json_file import default_topology
from lakeflow.logic.synthetic import generate_synthetic
from tests.factories import START, constant_plan

HEADER = "date,series_id,kind,value\n"


def write(tmp_path: Path, body: str) -> Path:
    path = tmp_path / "history.csv"
    path.write_text(body)
    return path


def test_reads_aligned_series(tmp_path: Path):
    path = write(
        tmp_path,
        HEADER
        + "2006-01,A,level,183.41\n2006-02,A,level,183.38\n"
        + "2006-01,a,flow,2517.3\n2006-02,a,flow,2490.0\n",
    )
    history = read_history(path)
    assert history.start == MonthStamp(year=2006, month=1)
    assert history.level(LakeId.SUPERIOR).values == (183.41, 183.38)
    assert history.flow(RiverId.ST_MARYS).values == (2517.3, 2490.0)


def test_empty_file_is_a_schema_error(tmp_path: Path):
    with pytest.raises(SchemaError):
        read_history(write(tmp_path, ""))
    with pytest.raises(SchemaError):
        read_history(write(tmp_path, HEADER))


def test_missing_column(tmp_path: Path):
    with pytest.raises(SchemaError):
        read_history(write(tmp_path, "date,series_id,value\n2006-01,A,183.4\n"))


@pytest.mark.parametrize(
    "row",
    [
        "2006-02,X,level,183.4",
        "2006-02,A,flow,183.4",
        "2006-13,A,level,183.4",
        "Feb 2006,A,level,183.4",
        "2006-02,A,level,high",
        "2006-02,A,level,nan",
        "2006-03,A,level,183.4",
        "2006-01,A,level,183.4",
    ],
)
def test_bad_row_is_reported_with_its_line(tmp_path: Path, row: str):
    path = write(tmp_path, HEADER + "2006-01,A,level,183.41\n" + row + "\n")
    with pytest.raises(SchemaError) as e:
        read_history(path)
    assert e.value.row == 3
    assert "row 3" in str(e.value)


def test_series_must_cover_the_same_months(tmp_path: Path):
    path = write(
        tmp_path,
        HEADER + "2006-01,A,level,183.4\n2006-02,A,level,183.4\n2006-01,B,level,176.4\n",
    )
    with pytest.raises(SchemaError):
        read_history(path)


def test_synthetic_record_survives_the_file(tmp_path: Path):
    history = generate_synthetic(0, default_topology()).history
    path = tmp_path / "history.csv"
    write_history(path, history)
    assert read_history(path) == history
    assert parse_history(history_frame(history)) == history


def test_plan_frame_has_a_row_per_month_and_river():
    frame = plan_frame(constant_plan(3), START)
    assert list(frame.columns) == ["date", "river", "release_m3s"]
    assert len(frame) == 6
    assert frame.iloc[0].tolist() == ["2017-01", "a", 2500.0]
    assert frame.iloc[-1].tolist() == ["2017-03", "e", 7000.0]


def test_parse_accepts_a_dataframe():
    frame = pd.DataFrame(
        [("2010-05", "E", "level", "74.9")], columns=["date", "series_id", "kind", "value"]
    )
    history = parse_history(frame)
    assert history.level(LakeId.ONTARIO).values == (74.9,)
    assert history.flows == {}
