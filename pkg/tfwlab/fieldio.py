from __future__ import annotations
from typing import Dict, List, Sequence, Union
import csv
import hashlib
import json
import logging
import numpy as np
from pathlib import Path

from .common import FormatError
from .grid import Grid, ScalarField

logger = logging.getLogger(__name__)

MAGIC = b"TFWF"
VERSION = 1
HEADER = np.dtype(
    [("magic", "S4"), ("version", "<u4"), ("n", "<u4"), ("reserved", "<u4"), ("L", "<f8")]
)


def store_field(field: ScalarField, path: Union[str, Path]) -> Path:
    """Writes a field as a TFWF dump: 24-byte header, then n^3 little-endian
    doubles with x varying fastest."""
    path = Path(path)
    header = np.zeros(1, dtype=HEADER)
    header["magic"], header["version"] = MAGIC, VERSION
    header["n"], header["L"] = field.grid.n, field.grid.L

    with open(path, "wb") as out:
        out.write(header.tobytes())
        out.write(field.values.ravel(order="F").astype("<f8").tobytes())

    return path


def load_field(path: Union[str, Path]) -> ScalarField:
    """Reads a TFWF dump.

    Raises:
        FormatError: on a bad magic, a version mismatch, a truncated file or
            trailing bytes.

    """
    data = Path(path).read_bytes()
    if len(data) < HEADER.itemsize:
        raise FormatError(
            f"Truncated header: file ends at byte offset {len(data)}, "
            + f"header needs {HEADER.itemsize} bytes."
        )

    header = np.frombuffer(data, dtype=HEADER, count=1)[0]
    if header["magic"] != MAGIC:
        raise FormatError(f"Bad magic {header['magic']!r} at byte offset 0, expected {MAGIC!r}.")

    version = int(header["version"])
    if version != VERSION:
        raise FormatError(f"Version mismatch: file has version {version}, reader supports {VERSION}.")

    n = int(header["n"])
    expected = HEADER.itemsize + 8 * n ** 3
    if len(data) < expected:
        raise FormatError(
            f"Truncated data: file ends at byte offset {len(data)}, expected {expected} bytes."
        )
    if len(data) > expected:
        raise FormatError(f"Trailing bytes after byte offset {expected}.")

    try:
        grid = Grid(n, float(header["L"]))
    except ValueError as e:
        raise FormatError(f"Invalid grid in header: {e}") from e

    values = np.frombuffer(data, dtype="<f8", count=n ** 3, offset=HEADER.itemsize)
    return ScalarField(grid, values.reshape(grid.shape, order="F"))


def _builtin(obj: object) -> object:
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    raise TypeError(f"Object of type {type(obj).__name__} is not JSON serializable")


def write_json(data: Dict, path: Union[str, Path]) -> Path:
    path = Path(path)
    with open(path, "w") as out:
        json.dump(data, out, indent=2, default=_builtin)
    return path


def write_csv(header: Sequence[str], rows: Sequence[Sequence], path: Union[str, Path]) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as out:
        writer = csv.writer(out)
        writer.writerow(header)
        for row in rows:
            writer.writerow([x if isinstance(x, (str, int, float)) else _builtin(x) for x in row])
    return path


def sha256_file(path: Union[str, Path]) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as infile:
        for chunk in iter(lambda: infile.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


class RunWriter:
    """Writes the artifacts of one run and records their hashes.

    Attributes:
        root (Path): run directory.
        artifacts (Dict[str, str]): relative path -> SHA-256 of every file written.

    """

    __slots__ = ["root", "artifacts"]

    def __init__(self, root: Union[str, Path]) -> None:
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.artifacts: Dict[str, str] = {}

    def _target(self, rel: str) -> Path:
        path = self.root / rel
        path.parent.mkdir(parents=True, exist_ok=True)
        return path

    def _register(self, path: Path) -> Path:
        self.artifacts[path.relative_to(self.root).as_posix()] = sha256_file(path)
        logger.debug("Wrote %s.", path)
        return path

    def field(self, rel: str, field: ScalarField) -> Path:
        return self._register(store_field(field, self._target(rel)))

    def json(self, rel: str, data: Dict) -> Path:
        return self._register(write_json(data, self._target(rel)))

    def csv(self, rel: str, header: Sequence[str], rows: Sequence[Sequence]) -> Path:
        return self._register(write_csv(header, rows, self._target(rel)))

    def report(self, data: Dict) -> Path:
        """Writes report.json listing every artifact written so far."""
        payload = dict(data)
        payload["artifacts"] = dict(sorted(self.artifacts.items()))
        return write_json(payload, self.root / "report.json")


def read_json(path: Union[str, Path]) -> Dict:
    with open(path) as f:
        return json.load(f)


def read_csv(path: Union[str, Path]) -> List[List[str]]:
    with open(path, newline="") as f:
        return list(csv.reader(f))
