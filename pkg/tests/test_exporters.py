"""
CSV, JSON és strukturált rács kiírás
"""
import csv
import json

import numpy as np
import pytest

from src.core.errors import GridError
from src.core.fields import Field, Grid2, identity_field
from src.utils.exporters import (
    merge_csv,
    read_structured,
    write_field_csv,
    write_json,
    write_rows_csv,
    write_structured,
)


@pytest.fixture
def small_grid():
    return Grid2.build(0.0, 1.0, 0.0, 1.0, margin=0.0, nodes=16)


def test_structured_dump_restores_grid_and_fields(tmp_path):
    grid = Grid2.build(0.0, 1.0, 0.0, 0.5, margin=0.1, nodes=16)
    v = Field.from_function(grid, lambda x1, x2: np.stack([x1, x2 ** 2], axis=-1))
    A = identity_field(grid, 0.3)
    phi = Field.from_function(grid, lambda x1, x2: np.sin(x1) * x2)
    directory = write_structured({"v": v, "A": A, "phi": phi}, tmp_path / "fields.grid")

    restored = read_structured(directory)
    assert set(restored) == {"v", "A", "phi"}
    assert restored["v"].grid.same_as(grid)
    assert restored["v"].grid.margin == pytest.approx(grid.margin)
    assert np.array_equal(restored["v"].data, v.data)
    assert np.array_equal(restored["phi"].data, phi.data)
    assert restored["A"].value_shape == (2, 2)
    assert restored["phi"].value_shape == ()


def test_structured_dump_is_plain_text(small_grid, tmp_path):
    v = Field.from_function(small_grid, lambda x1, x2: np.stack([x1, x2], axis=-1))
    directory = write_structured({"v": v}, tmp_path / "fields.grid")

    lines = (directory / "v.txt").read_text(encoding="utf-8").splitlines()
    nx, ny, h, x0, y0, shape = lines[0].split()
    assert (int(nx), int(ny), shape) == (16, 16, "2")
    assert float(h) == pytest.approx(small_grid.h)
    assert (float(x0), float(y0)) == (0.0, 0.0)
    assert lines[1].startswith("# domain")
    assert len(lines) == 2 + 16 * 16
    # sor-főrend: a második sor az (i=0, j=1) csomópont
    assert [float(t) for t in lines[3].split()] == pytest.approx([0.0, small_grid.h])
    table = np.loadtxt(directory / "v.txt", skiprows=1)
    assert table.shape == (16 * 16, 2)


def test_structured_reader_accepts_plain_header(tmp_path):
    path = tmp_path / "external" / "u.txt"
    path.parent.mkdir()
    values = "\n".join(str(float(n)) for n in range(72))
    path.write_text(f"8 9 0.25 -1 2 scalar\n{values}\n", encoding="utf-8")

    u = read_structured(path.parent)["u"]
    assert u.grid.margin == 0.0
    assert u.grid.origin == (-1.0, 2.0)
    assert u.data.shape == (8, 9)
    assert u.data[1, 0] == 9.0


def test_structured_reader_rejects_short_table(tmp_path):
    path = tmp_path / "bad" / "u.txt"
    path.parent.mkdir()
    path.write_text("8 8 0.25 0 0 scalar\n1\n2\n3\n", encoding="utf-8")
    with pytest.raises(GridError):
        read_structured(path.parent)


def test_field_csv_layout(small_grid, tmp_path):
    v = Field.zeros(small_grid, (2,))
    A = identity_field(small_grid)
    path = write_field_csv({"v": v, "A": A}, tmp_path / "fields.csv")
    with open(path, newline="", encoding="utf-8") as f:
        rows = list(csv.reader(f))
    assert rows[0] == ["x1", "x2", "v_1", "v_2", "A_11", "A_12", "A_21", "A_22"]
    assert len(rows) == 1 + small_grid.nx * small_grid.ny
    assert float(rows[1][4]) == 1.0


def test_fields_on_different_grids(small_grid, tmp_path):
    other = Grid2.build(0.0, 1.0, 0.0, 1.0, margin=0.0, nodes=20)
    with pytest.raises(GridError):
        write_structured({"a": Field.zeros(small_grid), "b": Field.zeros(other)}, tmp_path / "x.grid")


def test_json_is_sorted_and_plain(tmp_path):
    path = write_json({"b": np.float64(1.5), "a": [np.int64(2)], "c": float("inf")}, tmp_path / "s.json")
    text = path.read_text(encoding="utf-8")
    assert text.index('"a"') < text.index('"b"') < text.index('"c"')
    assert json.loads(text) == {"a": [2], "b": 1.5, "c": "inf"}


def test_merge_keeps_order_and_single_header(tmp_path):
    first = write_rows_csv([{"lam": 40.0, "deficit": 0.1}], tmp_path / "a.csv")
    second = write_rows_csv([{"lam": 80.0, "deficit": 0.05}], tmp_path / "b.csv")
    merged = merge_csv([first, second], tmp_path / "sweep.csv")
    with open(merged, newline="", encoding="utf-8") as f:
        rows = list(csv.DictReader(f))
    assert [float(r["lam"]) for r in rows] == [40.0, 80.0]
