"""ADDT data ingestion, validation, and Arrhenius stress transforms."""

from __future__ import annotations

import io
from dataclasses import dataclass
from typing import Iterable, TextIO

import numpy as np

from .errors import CsvParseError, ValidationError

__all__ = [
    "AddtDataset",
    "StressSet",
    "DEFAULT_KELVIN_OFFSET",
    "arrhenius_x",
    "stress_set",
    "load_addt_csv",
    "dump_addt_csv",
]

# Eq.-of-record offset for the Celsius -> Kelvin conversion; simulation
# scenarios override it to 273.15 where the studies are stated that way.
DEFAULT_KELVIN_OFFSET = 273.16

_CSV_HEADER = ("temperature", "time", "response")


class AddtDataset:
    """Destructive degradation readings grouped into (level, time) cells.

    Levels are ordered by ascending temperature and time points ascend
    within each level.  The object is immutable after construction and
    safe to share across threads.

    Attributes
    ----------
    temps_c : (I,) float array, ascending test temperatures in Celsius.
    cell_level : (C,) int array, level index of each cell.
    cell_time : (C,) float array, time point of each cell.
    cell_size : (C,) int array, replicate count n_ij per cell.
    cell_start : (C,) int array, offset of each cell in `y`.
    y : (n,) float array, readings flattened in (i, j, k) order.
    """

    def __init__(self, temps_c, cell_level, cell_time, cell_size, y, time_unit="hours"):
        self.temps_c = np.asarray(temps_c, dtype=float)
        self.cell_level = np.asarray(cell_level, dtype=np.intp)
        self.cell_time = np.asarray(cell_time, dtype=float)
        self.cell_size = np.asarray(cell_size, dtype=np.intp)
        self.y = np.asarray(y, dtype=float)
        self.cell_start = np.concatenate(([0], np.cumsum(self.cell_size)[:-1]))
        self.time_unit = str(time_unit)
        self._validate()
        for arr in (self.temps_c, self.cell_level, self.cell_time,
                    self.cell_size, self.cell_start, self.y):
            arr.flags.writeable = False

    def _validate(self) -> None:
        if self.temps_c.size < 1:
            raise ValidationError("need at least one acceleration level")
        if not np.all(np.isfinite(self.temps_c)):
            raise ValidationError("temperatures must be finite")
        if np.any(self.temps_c <= -273.16):
            raise ValidationError("temperatures must exceed absolute zero (-273.16 C)")
        if np.any(np.diff(self.temps_c) <= 0):
            raise ValidationError("levels must have strictly increasing temperatures")
        if self.cell_size.size == 0 or np.any(self.cell_size < 1):
            raise ValidationError("every cell needs at least one reading")
        if self.y.size != int(self.cell_size.sum()):
            raise ValidationError("reading count does not match cell sizes")
        if not np.all(np.isfinite(self.y)):
            raise ValidationError("readings must be finite")
        if not np.all(np.isfinite(self.cell_time)):
            raise ValidationError("time points must be finite")
        for i in range(self.temps_c.size):
            times_i = self.cell_time[self.cell_level == i]
            if times_i.size == 0:
                raise ValidationError(f"level {i} has no cells")
            if np.any(np.diff(times_i) <= 0):
                raise ValidationError(
                    f"time points within level {i} must be strictly increasing"
                )
        if np.unique(self.cell_time).size < 2:
            raise ValidationError("need at least 2 distinct time points overall")

    @classmethod
    def from_rows(cls, temperatures, times, responses, time_unit="hours") -> "AddtDataset":
        """Group one-reading-per-row data into cells by exact (temp, time) equality."""
        temperatures = np.asarray(temperatures, dtype=float)
        times = np.asarray(times, dtype=float)
        responses = np.asarray(responses, dtype=float)
        if not (temperatures.shape == times.shape == responses.shape):
            raise ValidationError("temperature/time/response columns differ in length")
        if temperatures.size == 0:
            raise ValidationError("no data rows")
        temps_c = np.unique(temperatures)
        cells: dict[tuple[float, float], list[float]] = {}
        for t, tm, r in zip(temperatures, times, responses):
            cells.setdefault((t, tm), []).append(r)
        keys = sorted(cells.keys())
        level_of = {t: i for i, t in enumerate(temps_c)}
        cell_level = [level_of[t] for t, _ in keys]
        cell_time = [tm for _, tm in keys]
        cell_size = [len(cells[k]) for k in keys]
        y = [r for k in keys for r in cells[k]]
        return cls(temps_c, cell_level, cell_time, cell_size, y, time_unit=time_unit)

    @property
    def n_levels(self) -> int:
        return int(self.temps_c.size)

    @property
    def n_cells(self) -> int:
        return int(self.cell_size.size)

    @property
    def n(self) -> int:
        return int(self.y.size)

    @property
    def block_sizes(self) -> tuple[int, ...]:
        return tuple(int(s) for s in self.cell_size)

    def cell_readings(self, c: int) -> np.ndarray:
        s = int(self.cell_start[c])
        return self.y[s : s + int(self.cell_size[c])]

    def times_for_level(self, i: int) -> np.ndarray:
        return self.cell_time[self.cell_level == i]

    def reading_cell_index(self) -> np.ndarray:
        """(n,) array mapping each reading to its cell index."""
        return np.repeat(np.arange(self.n_cells), self.cell_size)

    def cell_means(self) -> np.ndarray:
        sums = np.add.reduceat(self.y, self.cell_start)
        return sums / self.cell_size

    def __eq__(self, other) -> bool:
        if not isinstance(other, AddtDataset):
            return NotImplemented
        return (
            self.time_unit == other.time_unit
            and np.array_equal(self.temps_c, other.temps_c)
            and np.array_equal(self.cell_level, other.cell_level)
            and np.array_equal(self.cell_time, other.cell_time)
            and np.array_equal(self.cell_size, other.cell_size)
            and np.array_equal(self.y, other.y)
        )

    def __repr__(self) -> str:
        return (
            f"AddtDataset(levels={self.n_levels}, cells={self.n_cells}, "
            f"n={self.n}, time_unit={self.time_unit!r})"
        )


def arrhenius_x(temp_c: float, kelvin_offset: float = DEFAULT_KELVIN_OFFSET):
    """Transformed stress -11605 / (temp_c + kelvin_offset).

    11605 is the reciprocal Boltzmann constant in 1/eV; the result is an
    energy-scaled reciprocal absolute temperature, increasing in temp_c.
    """
    temp_c = np.asarray(temp_c, dtype=float)
    abs_temp = temp_c + kelvin_offset
    if np.any(abs_temp <= 0.0):
        raise ValidationError(
            f"absolute temperature must be positive, got {abs_temp} K"
        )
    out = -11605.0 / abs_temp
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class StressSet:
    """Transformed stresses x_i, their maximum, and distances s_i = x_max - x_i."""

    x: tuple[float, ...]
    x_max: float
    s: tuple[float, ...]
    kelvin_offset: float

    def __post_init__(self):
        if any(si < 0 for si in self.s):
            raise ValidationError("stress distances must be nonnegative")


def stress_set(data: AddtDataset, kelvin_offset: float = DEFAULT_KELVIN_OFFSET) -> StressSet:
    """Arrhenius-transform every level; the hottest level gets distance 0."""
    x = arrhenius_x(data.temps_c, kelvin_offset)
    x = np.atleast_1d(x)
    x_max = float(x.max())
    s = x_max - x
    return StressSet(
        x=tuple(float(v) for v in x),
        x_max=x_max,
        s=tuple(float(v) for v in s),
        kelvin_offset=kelvin_offset,
    )


def _open_text(source) -> TextIO:
    if hasattr(source, "read"):
        return source
    return open(source, "r", encoding="utf-8")


def load_addt_csv(source, time_unit: str = "hours") -> AddtDataset:
    """Read long-format CSV with header ``temperature,time,response``.

    One reading per row; lines starting with ``#`` are comments.  Errors
    carry the 1-based physical line number of the offending row.
    """
    stream = _open_text(source)
    close = stream is not source
    try:
        temps: list[float] = []
        times: list[float] = []
        resps: list[float] = []
        header_seen = False
        for lineno, raw in enumerate(stream, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            fields = [f.strip() for f in line.split(",")]
            if [f.lower() for f in fields] == list(_CSV_HEADER):
                if header_seen:
                    raise CsvParseError("duplicate header", row=lineno)
                header_seen = True
                continue
            if not header_seen:
                raise CsvParseError(
                    "expected header 'temperature,time,response'", row=lineno
                )
            if len(fields) != 3:
                raise CsvParseError(
                    f"expected 3 fields, got {len(fields)}", row=lineno
                )
            try:
                vals = [float(f) for f in fields]
            except ValueError as exc:
                raise CsvParseError(str(exc), row=lineno) from None
            if not all(np.isfinite(vals)):
                raise CsvParseError(f"non-finite value in {fields}", row=lineno)
            temps.append(vals[0])
            times.append(vals[1])
            resps.append(vals[2])
        if not header_seen:
            raise CsvParseError("empty file: missing header")
        if not temps:
            raise CsvParseError("no data rows after header")
    finally:
        if close:
            stream.close()
    return AddtDataset.from_rows(temps, times, resps, time_unit=time_unit)


def dump_addt_csv(data: AddtDataset, sink=None) -> str | None:
    """Write the dataset back to long CSV; floats use repr for exact round trip."""
    buf = io.StringIO()
    buf.write(",".join(_CSV_HEADER) + "\n")
    for c in range(data.n_cells):
        temp = float(data.temps_c[data.cell_level[c]])
        time = float(data.cell_time[c])
        for r in data.cell_readings(c):
            buf.write(f"{temp!r},{time!r},{float(r)!r}\n")
    text = buf.getvalue()
    if sink is None:
        return text
    if hasattr(sink, "write"):
        sink.write(text)
    else:
        with open(sink, "w", encoding="utf-8") as fh:
            fh.write(text)
    return None
