"""
Artifact writers: CSV reports, deterministic JSON, FOUF field snapshots and
the run manifest.
"""

import csv
import gzip
import json
import logging
import math
import struct
from enum import Enum
from pathlib import Path
from typing import Any, Iterable, Sequence, TextIO

import numpy as np
import scipy

from .errors import OutputError
from .models import Field, Grid, RunStats

FOUF_MAGIC = b'FOUF'
FOUF_VERSION = 1
_HEADER = struct.Struct('<4sHH')
_AXIS = struct.Struct('<Id')


def write_fouf(path: Path, field: Field) -> Path:
    """Write a physical-domain field as a FOUF snapshot."""
    grid = field.grid
    try:
        with open(path, 'wb') as f:
            f.write(_HEADER.pack(FOUF_MAGIC, FOUF_VERSION, grid.n))
            for count, length in zip(grid.N, grid.L):
                f.write(_AXIS.pack(count, length))
            f.write(np.ascontiguousarray(field.values, dtype='<c16').tobytes())
    except OSError as e:
        raise OutputError(f"Cannot write field to {path}: {e}") from e
    return path


def read_fouf(path: Path) -> Field:
    """Parse a FOUF snapshot back into a field."""
    try:
        data = Path(path).read_bytes()
    except OSError as e:
        raise OutputError(f"Cannot read field from {path}: {e}") from e
    if len(data) < _HEADER.size:
        raise OutputError(f"{path} is too short for a FOUF header")
    magic, version, n = _HEADER.unpack_from(data, 0)
    if magic != FOUF_MAGIC:
        raise OutputError(f"{path} has magic {magic!r}, expected {FOUF_MAGIC!r}")
    if version != FOUF_VERSION:
        raise OutputError(f"{path} has FOUF version {version}, expected {FOUF_VERSION}")
    offset = _HEADER.size
    if len(data) < offset + n * _AXIS.size:
        raise OutputError(f"{path} is truncated inside the axis table")
    counts, lengths = [], []
    for _ in range(n):
        count, length = _AXIS.unpack_from(data, offset)
        counts.append(count)
        lengths.append(length)
        offset += _AXIS.size
    expected = int(np.prod(counts)) * 16
    if len(data) - offset != expected:
        raise OutputError(f"{path} carries {len(data) - offset} payload bytes, expected {expected}")
    values = np.frombuffer(data, dtype='<c16', offset=offset).reshape(counts)
    return Field(Grid(L=tuple(lengths), N=tuple(counts)), values)


def _sanitize(obj: Any) -> Any:
    """Plain JSON types; non-finite floats become strings."""
    if isinstance(obj, dict):
        return {str(k): _sanitize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_sanitize(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _sanitize(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        value = float(obj)
        return value if math.isfinite(value) else str(value)
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    if isinstance(obj, Enum):
        return obj.value
    return obj


def dumps_json(data: Any) -> str:
    """Deterministic JSON text."""
    return json.dumps(_sanitize(data), sort_keys=True, indent=2) + '\n'


class ReportWriter:
    """Writes the artifacts of one run into its output directory."""

    def __init__(self, output_settings: dict[str, Any]):
        self.output_settings = output_settings
        self.directory = Path(output_settings.get('directory', './runs'))
        self.compress = bool(output_settings.get('compress', False))
        self.written: list[str] = []

    def prepare(self) -> None:
        try:
            self.directory.mkdir(parents=True, exist_ok=True)
        except OSError as e:
            raise OutputError(f"Cannot create output directory {self.directory}: {e}") from e

    def _open_output_file(self, output_path: Path) -> tuple[Path, TextIO]:
        """Open output file with optional compression."""
        if self.compress:
            output_path = Path(str(output_path) + '.gz')
            file_handle = gzip.open(output_path, 'wt', encoding='utf-8', newline='')
        else:
            file_handle = open(output_path, 'w', encoding='utf-8', newline='')

        return output_path, file_handle

    def _record(self, path: Path) -> Path:
        self.written.append(path.name)
        logging.debug(f"Wrote {path}")
        return path

    def write_csv(self, name: str, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
        """Write a CSV table; floats use repr so output is reproducible."""
        self.prepare()
        try:
            output_path, file_handle = self._open_output_file(self.directory / f"{name}.csv")
            try:
                writer = csv.writer(file_handle, quoting=csv.QUOTE_MINIMAL, lineterminator='\n')
                writer.writerow(header)
                writer.writerows([self._format_cell(v) for v in row] for row in rows)
            finally:
                file_handle.close()
        except OSError as e:
            raise OutputError(f"Cannot write {name}.csv: {e}") from e
        return self._record(output_path)

    @staticmethod
    def _format_cell(value: Any) -> Any:
        if isinstance(value, (float, np.floating)):
            return repr(float(value))
        if value is None:
            return ''
        return value

    def write_scan(self, report) -> Path:
        """One row per abscissa of a ScanReport."""
        return self.write_csv(report.name, ['abscissa', 'value'],
                              [(row['abscissa'], row['value']) for row in report.rows()])

    def write_json(self, name: str, data: Any) -> Path:
        self.prepare()
        path = self.directory / f"{name}.json"
        try:
            path.write_text(dumps_json(data), encoding='utf-8')
        except OSError as e:
            raise OutputError(f"Cannot write {path}: {e}") from e
        return self._record(path)

    def write_field(self, name: str, field: Field) -> Path:
        self.prepare()
        return self._record(write_fouf(self.directory / f"{name}.fouf", field))

    def export_field_csv(self, name: str, field: Field) -> Path:
        """One row per grid point: coordinates, then real and imaginary parts."""
        points = field.grid.points().reshape(-1, field.grid.n)
        values = field.values.reshape(-1)
        header = [f"x{j}" for j in range(field.grid.n)] + ['re', 'im']
        rows = (list(point) + [value.real, value.imag] for point, value in zip(points, values))
        return self.write_csv(name, header, rows)

    def write_manifest(self, stats: RunStats, config: dict[str, Any], seed: int) -> Path:
        """Deterministic manifest: config verbatim, versions, verdicts, error codes."""
        from . import __version__

        manifest = {
            'command': stats.command,
            'config': config,
            'seed': seed,
            'versions': {'package': __version__, 'numpy': np.__version__, 'scipy': scipy.__version__},
            'verdicts': [{'name': v.name, 'passed': v.passed, 'detail': v.detail} for v in stats.verdicts],
            'results': stats.results,
            'artifacts': sorted(set(stats.artifacts)),
            'errors': stats.errors,
            'exit_code': int(stats.exit_code),
        }
        return self.write_json('manifest', manifest)

    def write_timings(self, stats: RunStats) -> Path:
        return self.write_json('timings', stats.timings)
