"""Loading long-format group/auxiliary count data into panels.

Input files have the header ``year,series,count``; ``series`` is a group
label or the reserved label ``AUX`` for the auxiliary population. Group
years without a row are filled with zero (structural zeros before a group
forms or after it splits).
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import IntervalViolationWarning, LoadError
from .model import InitConvention, Panel, indicator_track

AUX_LABEL = "AUX"
HEADER = ("year", "series", "count")


@dataclass
class RawDataset:
    group_rows: list = field(default_factory=list)  # (year, group_id, count)
    aux_rows: list = field(default_factory=list)  # (year, count)
    provenance: str = ""


@dataclass(frozen=True, eq=False)
class IndicatorTrack:
    """Formation (A), not-yet-formed (B) and combined (C) indicators, each ``(g, T+1)``."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    group_labels: tuple
    violations: tuple = ()
    metadata: dict = field(default_factory=dict)

    @classmethod
    def from_panel(cls, panel, init_convention=InitConvention.NOT_YET_FORMED):
        tracks = [indicator_track(row, init_convention) for row in panel.x]
        A, B, C = (np.stack([t[k] for t in tracks]) for k in range(3))
        violations = tuple(
            (panel.group_labels[i], int(panel.times[t])) for i, t in panel.interval_violations()
        )
        return cls(A=A, B=B, C=C, group_labels=panel.group_labels, violations=violations,
                   metadata={"init_convention": InitConvention(init_convention).value})

    def __eq__(self, other):
        if not isinstance(other, IndicatorTrack):
            return NotImplemented
        return (
            np.array_equal(self.A, other.A)
            and np.array_equal(self.B, other.B)
            and np.array_equal(self.C, other.C)
            and self.group_labels == other.group_labels
        )

    __hash__ = None


def read_long_csv(path, provenance=""):
    """Parse a ``year,series,count`` file; errors carry the 1-based file line number."""
    path = Path(path)
    raw = RawDataset(provenance=provenance or str(path))
    seen = set()
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise LoadError(f"{path} is empty") from None
        if tuple(h.strip().lower() for h in header) != HEADER:
            raise LoadError(f"header must be {','.join(HEADER)}, got {','.join(header)}", row=1)
        for line, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != 3:
                raise LoadError(f"expected 3 fields, got {len(row)}", row=line)
            year_s, series, count_s = (cell.strip() for cell in row)
            try:
                year = int(year_s)
                count = int(count_s)
            except ValueError:
                raise LoadError(f"cannot parse {row!r} as year,series,count", row=line) from None
            if not series:
                raise LoadError("empty series label", row=line)
            if count < 0:
                raise LoadError(f"negative count {count}", row=line)
            key = (year, series)
            if key in seen:
                raise LoadError(f"duplicate entry for series {series!r} in year {year}", row=line)
            seen.add(key)
            if series == AUX_LABEL:
                raw.aux_rows.append((year, count))
            else:
                raw.group_rows.append((year, series, count))
    return raw


def assemble(raw):
    """Build a :class:`Panel` from parsed rows, zero-filling missing group years."""
    if not raw.aux_rows:
        raise LoadError("the auxiliary series (label AUX) is empty; the model requires it")
    if not raw.group_rows:
        raise LoadError("no group series found")
    years = sorted({r[0] for r in raw.group_rows} | {r[0] for r in raw.aux_rows})
    first, last = years[0], years[-1]
    if len(years) != last - first + 1:
        missing = sorted(set(range(first, last + 1)) - set(years))
        raise LoadError(f"years are not contiguous; missing {missing}")
    labels = list(dict.fromkeys(r[1] for r in raw.group_rows))
    col = {lab: k for k, lab in enumerate(labels)}
    n = last - first + 1
    x = np.zeros((len(labels), n), dtype=np.int64)
    y = np.full(n, -1, dtype=np.int64)
    for year, series, count in raw.group_rows:
        x[col[series], year - first] = count
    for year, count in raw.aux_rows:
        y[year - first] = count
    if np.any(y < 0):
        gaps = [first + int(k) for k in np.flatnonzero(y < 0)]
        raise LoadError(f"auxiliary series has no value for years {gaps}")
    return Panel(x=x, y=y, group_labels=tuple(labels), times=np.arange(first, last + 1))


def load_panel(path, init_convention=InitConvention.NOT_YET_FORMED):
    """Read a long-format file; returns the panel and its formation/splitting indicators.

    Groups whose positive counts are not contiguous are reported with an
    :class:`~coupledar.exceptions.IntervalViolationWarning` naming the group
    and the year it reappears.
    """
    panel = assemble(read_long_csv(path))
    track = IndicatorTrack.from_panel(panel, init_convention)
    track.metadata["missing_cells"] = "structural zeros"
    for label, year in track.violations:
        warnings.warn(
            f"group {label!r} reappears in {year} after dropping to zero",
            IntervalViolationWarning,
            stacklevel=2,
        )
    return panel, track


def export_long_csv(panel, path):
    """Write ``panel`` in the long ``year,series,count`` format, one row per cell."""
    if AUX_LABEL in panel.group_labels:
        raise ValueError(f"group label {AUX_LABEL!r} is reserved for the auxiliary series")
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(HEADER)
        for k, year in enumerate(panel.times):
            for i, label in enumerate(panel.group_labels):
                writer.writerow([int(year), label, int(panel.x[i, k])])
            writer.writerow([int(year), AUX_LABEL, int(panel.y[k])])
    return path
