"""
Mezők és riportok kiírása (CSV, strukturált szöveges rács, JSON)
"""
import csv
import json
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Sequence

import numpy as np

from src.core.errors import GridError
from src.core.fields import Field, Grid2
from src.utils.logger import get_logger

logger = get_logger()


def _component_names(name: str, value_shape) -> List[str]:
    if not value_shape:
        return [name]
    return [f"{name}_" + "".join(str(i + 1) for i in index) for index in np.ndindex(*value_shape)]


def write_field_csv(fields: Mapping[str, Field], path: Path) -> Path:
    """
    Mezők csomópontonként egy sorban: x1, x2, majd a komponensek

    Args:
        fields: név → mező, mind ugyanazon a rácson
        path: cél fájl
    """
    items = list(fields.items())
    grid = items[0][1].grid
    for name, f in items:
        if not f.grid.same_as(grid):
            raise GridError(f"A(z) {name} mező más rácson van")

    x1, x2 = grid.coordinates()
    header = ["x1", "x2"]
    columns = [x1.ravel(), x2.ravel()]
    for name, f in items:
        header.extend(_component_names(name, f.value_shape))
        flat = f.data.reshape(grid.nx * grid.ny, -1)
        columns.extend(flat[:, c] for c in range(flat.shape[1]))

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    table = np.column_stack(columns)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(header)
        for row in table:
            writer.writerow(f"{value:.17g}" for value in row)

    logger.debug(f"Mező CSV mentve: {path} ({len(header) - 2} oszlop)")
    return path


_SCALAR = "scalar"
_SUFFIX = ".txt"


def _shape_token(value_shape) -> str:
    return "x".join(str(n) for n in value_shape) if value_shape else _SCALAR


def _parse_shape(token: str):
    if token == _SCALAR:
        return ()
    return tuple(int(n) for n in token.split("x"))


def write_structured(fields: Mapping[str, Field], directory: Path) -> Path:
    """
    Strukturált rács dump szövegesen, mezőnként egy fájl (<név>.txt)

    Formátum:
        nx ny h x_min y_min shape      (x_min, y_min: a bal alsó csomópont)
        # domain x_min x_max y_min y_max margin
        értékek soronként egy csomópont, sor-főrendben (x index a külső)

    Args:
        fields: név → mező, mind ugyanazon a rácson
        directory: cél könyvtár
    """
    items = list(fields.items())
    grid = items[0][1].grid
    for name, f in items:
        if not f.grid.same_as(grid):
            raise GridError(f"A(z) {name} mező más rácson van")

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    x0, y0 = grid.origin
    for name, f in items:
        header = (
            f"{grid.nx} {grid.ny} {grid.h:.17g} {x0:.17g} {y0:.17g} {_shape_token(f.value_shape)}\n"
            f"# domain {grid.x_min:.17g} {grid.x_max:.17g} {grid.y_min:.17g} {grid.y_max:.17g} "
            f"{grid.margin:.17g}"
        )
        np.savetxt(
            directory / f"{name}{_SUFFIX}",
            f.data.reshape(grid.nx * grid.ny, -1),
            fmt="%.17g",
            header=header,
            comments=""
        )
    logger.debug(f"Strukturált rács mentve: {directory} ({len(items)} mező)")
    return directory


def _read_grid_file(path: Path):
    with open(path, encoding="utf-8") as f:
        first = f.readline().split()
        second = f.readline().split()
    if len(first) != 6:
        raise GridError(f"Hibás fejléc: {path}")
    nx, ny = int(first[0]), int(first[1])
    h, x0, y0 = (float(t) for t in first[2:5])
    shape = _parse_shape(first[5])

    if second[:2] == ["#", "domain"] and len(second) == 7:
        x_min, x_max, y_min, y_max, margin = (float(t) for t in second[2:])
    else:
        # külső fájl: margó nélküli rács
        x_min, y_min, margin = x0, y0, 0.0
        x_max, y_max = x0 + (nx - 1) * h, y0 + (ny - 1) * h
    grid = Grid2(x_min=x_min, x_max=x_max, y_min=y_min, y_max=y_max, margin=margin, nx=nx, ny=ny, h=h)

    values = np.loadtxt(path, skiprows=1, ndmin=2)
    if values.shape[0] != nx * ny:
        raise GridError(f"{path}: {values.shape[0]} sor, várt {nx * ny}")
    return grid, values.reshape((nx, ny) + shape)


def read_structured(directory: Path) -> Dict[str, Field]:
    """
    write_structured párja

    Returns:
        név → mező
    """
    paths = sorted(Path(directory).glob(f"*{_SUFFIX}"))
    if not paths:
        raise GridError(f"Nincs rács fájl: {directory}")
    fields: Dict[str, Field] = {}
    grid = None
    for path in paths:
        g, data = _read_grid_file(path)
        grid = grid or g
        fields[path.stem] = Field(grid, data)
    return fields


def write_rows_csv(rows: Sequence[Mapping[str, Any]], path: Path) -> Path:
    """Dictionary sorok CSV-be; az oszlopok az első előfordulás sorrendjében"""
    header: List[str] = []
    for row in rows:
        for key in row:
            if key not in header:
                header.append(key)

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.DictWriter(f, fieldnames=header)
        writer.writeheader()
        for row in rows:
            writer.writerow({key: _format(value) for key, value in row.items()})
    return path


def _format(value: Any) -> Any:
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.12g}"
    return value


def _jsonable(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, float) and not np.isfinite(value):
        return str(value)
    return value


def write_json(summary: Mapping[str, Any], path: Path) -> Path:
    """JSON összefoglaló, rendezett kulcsokkal (reprodukálható byte-ra)"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_jsonable(dict(summary)), indent=2, sort_keys=True, ensure_ascii=False), encoding="utf-8")
    return path


def write_text(text: str, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")
    return path


def merge_csv(parts: Iterable[Path], path: Path) -> Path:
    """Feladatonkénti CSV-k összefűzése a megadott sorrendben (egy fejléccel)"""
    rows: List[Dict[str, Any]] = []
    for part in parts:
        with open(part, newline="", encoding="utf-8") as f:
            rows.extend(csv.DictReader(f))
    return write_rows_csv(rows, path)
