import numpy as np
import pytest

from tfwlab.common import FormatError
from tfwlab.fieldio import (
    HEADER,
    RunWriter,
    load_field,
    read_csv,
    read_json,
    sha256_file,
    store_field,
)
from tfwlab.grid import Grid, ScalarField


@pytest.fixture
def field():
    grid = Grid(4, 2.0)
    return ScalarField(grid, np.arange(64, dtype=float).reshape(grid.shape))


def test_store_and_load(field, tmp_path):
    path = store_field(field, tmp_path / "f.tfwf")
    loaded = load_field(path)
    assert loaded.grid == field.grid
    assert np.array_equal(loaded.values, field.values)


def test_layout_is_x_fastest(field, tmp_path):
    data = store_field(field, tmp_path / "f.tfwf").read_bytes()
    assert data[:4] == b"TFWF"
    assert len(data) == HEADER.itemsize + 8 * 64
    second = np.frombuffer(data, dtype="<f8", count=2, offset=HEADER.itemsize)
    assert second[1] == field.values[1, 0, 0]


def _corrupt(path, data):
    path.write_bytes(data)
    return path


def test_bad_magic(field, tmp_path):
    data = store_field(field, tmp_path / "f.tfwf").read_bytes()
    with pytest.raises(FormatError, match="magic"):
        load_field(_corrupt(tmp_path / "g.tfwf", b"XXXX" + data[4:]))


def test_version_mismatch(field, tmp_path):
    data = bytearray(store_field(field, tmp_path / "f.tfwf").read_bytes())
    data[4] = 2
    with pytest.raises(FormatError, match="version 2"):
        load_field(_corrupt(tmp_path / "g.tfwf", bytes(data)))


def test_truncated_header(tmp_path):
    with pytest.raises(FormatError, match="offset 10"):
        load_field(_corrupt(tmp_path / "g.tfwf", b"TFWF" + bytes(6)))


def test_truncated_data(field, tmp_path):
    data = store_field(field, tmp_path / "f.tfwf").read_bytes()
    with pytest.raises(FormatError, match="Truncated data"):
        load_field(_corrupt(tmp_path / "g.tfwf", data[:-8]))


def test_trailing_bytes(field, tmp_path):
    data = store_field(field, tmp_path / "f.tfwf").read_bytes()
    with pytest.raises(FormatError, match="Trailing"):
        load_field(_corrupt(tmp_path / "g.tfwf", data + b"\0"))


def test_run_writer_records_hashes(field, tmp_path):
    writer = RunWriter(tmp_path / "run")
    writer.field("fields/u.tfwf", field)
    writer.json("state.json", {"theta": np.float64(1.5), "roots": np.arange(2)})
    writer.csv("curves/c.csv", ["r", "y"], [[0.5, np.float64(1.0)]])
    writer.report({"passed": True})

    report = read_json(tmp_path / "run" / "report.json")
    assert list(report["artifacts"]) == ["curves/c.csv", "fields/u.tfwf", "state.json"]
    assert report["artifacts"]["state.json"] == sha256_file(tmp_path / "run" / "state.json")
    assert read_json(tmp_path / "run" / "state.json")["roots"] == [0, 1]
    assert read_csv(tmp_path / "run" / "curves" / "c.csv") == [["r", "y"], ["0.5", "1.0"]]
