"""Named-column sample matrices and their CSV representation."""

from __future__ import annotations

import io
import os
from dataclasses import dataclass, field
from typing import Mapping, Sequence, TextIO, Union

import numpy as np

from .errors import ConfigError

PathOrBuffer = Union[str, os.PathLike, TextIO]


@dataclass(frozen=True)
class Dataset:
    """An ``(n, p)`` matrix of draws with one name per column.

    ``meta`` holds scalar annotations (for interventional data, the
    intervention value ``a``).  They are written as ``# key=value`` lines
    ahead of the CSV header.
    """

    columns: tuple[str, ...]
    values: np.ndarray
    meta: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        columns = tuple(self.columns)
        values = np.array(self.values, dtype=float, copy=True)
        if values.ndim == 1 and values.size == 0:
            values = values.reshape(0, len(columns))
        if values.ndim != 2 or values.shape[1] != len(columns):
            raise ValueError(f"values of shape {values.shape} do not match {len(columns)} columns")
        if len(set(columns)) != len(columns):
            raise ValueError(f"duplicate column names in {columns}")
        values.setflags(write=False)
        object.__setattr__(self, "columns", columns)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "meta", dict(self.meta))

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def __len__(self):
        return self.n

    def __getitem__(self, name: str) -> np.ndarray:
        try:
            return self.values[:, self.columns.index(name)]
        except ValueError:
            raise KeyError(name) from None

    def select(self, names: Sequence[str]) -> np.ndarray:
        """Return the named columns as an ``(n, len(names))`` array."""
        missing = [name for name in names if name not in self.columns]
        if missing:
            raise KeyError(", ".join(missing))
        return self.values[:, [self.columns.index(name) for name in names]]

    def with_column(self, name: str, values) -> "Dataset":
        values = np.asarray(values, dtype=float).reshape(self.n, 1)
        return Dataset(self.columns + (name,), np.hstack([self.values, values]), self.meta)

    def to_csv(self, target: PathOrBuffer) -> None:
        """Write with a header row and round-trip (shortest ``repr``) floats."""
        if isinstance(target, (str, os.PathLike)):
            with open(target, "w", newline="") as fh:
                self._write(fh)
        else:
            self._write(target)

    def to_csv_string(self) -> str:
        buf = io.StringIO()
        self._write(buf)
        return buf.getvalue()

    def _write(self, fh: TextIO) -> None:
        for key, value in self.meta.items():
            fh.write(f"# {key}={float(value)!r}\n")
        fh.write(",".join(self.columns) + "\n")
        for row in self.values.tolist():
            fh.write(",".join(map(repr, row)) + "\n")

    @classmethod
    def from_csv(cls, source: PathOrBuffer) -> "Dataset":
        if isinstance(source, (str, os.PathLike)):
            with open(source, newline="") as fh:
                return cls._read(fh)
        return cls._read(source)

    @classmethod
    def _read(cls, fh: TextIO) -> "Dataset":
        meta = {}
        header = None
        rows = []
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                key, sep, value = line[1:].strip().partition("=")
                if not sep:
                    raise ConfigError(f"line {lineno}: malformed metadata row {line!r}")
                meta[key.strip()] = float(value)
            elif header is None:
                header = tuple(name.strip() for name in line.split(","))
            else:
                fields = line.split(",")
                if len(fields) != len(header):
                    raise ConfigError(f"line {lineno}: expected {len(header)} fields, got {len(fields)}")
                try:
                    rows.append([float(x) for x in fields])
                except ValueError as exc:
                    raise ConfigError(f"line {lineno}: {exc}") from None
        if header is None:
            raise ConfigError("CSV has no header row")
        values = np.array(rows, dtype=float).reshape(len(rows), len(header))
        return cls(header, values, meta)
