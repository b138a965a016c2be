import csv
from contextlib import contextmanager
from pathlib import Path
from typing import Any, Iterable, Iterator

import numpy as np


def format_cell(value: Any) -> str:
    """repr for floats so reruns are byte-identical; booleans as pass/fail flags."""
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, np.integer):
        return str(int(value))
    return str(value)


class RowWriter:
    def __init__(self, writer, width: int):
        self._writer = writer
        self.width = width
        self.rows = 0

    def writerow(self, values: Iterable[Any]):
        cells = [format_cell(v) for v in values]
        if len(cells) != self.width:
            raise ValueError(f"row has {len(cells)} cells, header has {self.width}")
        self._writer.writerow(cells)
        self.rows += 1

    def writerows(self, rows: Iterable[Iterable[Any]]):
        for row in rows:
            self.writerow(row)


@contextmanager
def get_csv_writer(path: Path, header: list[str]) -> Iterator[RowWriter]:
    """
    Context manager for a CSV report file.
    Args:
        path (Path): Target file; parent directories are created and an
            existing file is replaced.
        header (list[str]): Column names, always written as the first row.
    Yields:
        RowWriter: Writer that formats every cell with ``format_cell``.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        yield RowWriter(writer, len(header))


def read_rows(path: Path) -> list[dict[str, str]]:
    with open(path, newline="", encoding="utf-8") as f:
        return list(csv.DictReader(f))
