"""Input side of the figure kit: panel descriptions and CSV loading.

The kit consumes only the documented CSV formats written by the photonloop
CLI — a sweep summary (``value,feedback,g2,g2_err,I,I_err,eta``) and
coincidence histograms (``t_prime_over_gamma,counts``).  Nothing here imports
the simulator; the file format is the component boundary.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class FigureKitError(Exception):
    """Base class for all figure-kit input problems."""


class MissingColumnError(FigureKitError):
    def __init__(self, path, column, available):
        self.path = str(path)
        self.column = column
        super().__init__(
            f"{path}: missing column {column!r} (available: {', '.join(available) or 'none'})"
        )


class EmptyDataError(FigureKitError):
    def __init__(self, path):
        self.path = str(path)
        super().__init__(f"{path}: no data rows")


class GridMismatchError(FigureKitError):
    pass


Y_CHOICES = ("g2", "I")


@dataclass(frozen=True)
class PanelSpec:
    """One panel of a sweep figure.

    ``y`` selects the figure of merit ("g2" or "I"); its error bars come from
    the matching ``<y>_err`` column.  ``split`` names the column whose values
    separate the series drawn in the panel (the feedback flag in CLI sweeps).
    ``out`` is the image path base for the figure this panel belongs to; the
    grid renderer takes it from the first panel.
    """

    csv_path: str
    x: str = "value"
    y: str = "g2"
    split: str = "feedback"
    xscale: str = "linear"
    yscale: str = "linear"
    xlabel: str | None = None
    ylabel: str | None = None
    title: str | None = None
    out: str | None = None

    def __post_init__(self):
        if self.y not in Y_CHOICES:
            raise FigureKitError(
                f"panel y-variable must be one of {Y_CHOICES}, got {self.y!r}"
            )
        for name, value in (("xscale", self.xscale), ("yscale", self.yscale)):
            if value not in ("linear", "log"):
                raise FigureKitError(f"panel {name} must be 'linear' or 'log', got {value!r}")

    @property
    def y_err(self) -> str:
        return f"{self.y}_err"


@dataclass
class Series:
    key: str
    x: np.ndarray
    y: np.ndarray
    err: np.ndarray


@dataclass
class PanelData:
    spec: PanelSpec
    series: list[Series] = field(default_factory=list)


def load_panel(spec: PanelSpec) -> PanelData:
    """Read and validate one panel's CSV; raises before any file is written."""
    path = Path(spec.csv_path)
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        names = reader.fieldnames or []
        for column in (spec.x, spec.y, spec.y_err, spec.split):
            if column not in names:
                raise MissingColumnError(path, column, names)
        rows = list(reader)
    if not rows:
        raise EmptyDataError(path)

    data = PanelData(spec=spec)
    # Series in first-appearance order keeps the CSV author in control.
    for key in dict.fromkeys(r[spec.split] for r in rows):
        sub = [r for r in rows if r[spec.split] == key]
        try:
            xs = np.array([float(r[spec.x]) for r in sub])
            ys = np.array([float(r[spec.y]) for r in sub])
            es = np.array([float(r[spec.y_err]) for r in sub])
        except ValueError as exc:
            raise FigureKitError(f"{path}: non-numeric cell in series {key!r}: {exc}") from exc
        order = np.argsort(xs, kind="stable")
        data.series.append(Series(key=key, x=xs[order], y=ys[order], err=es[order]))
    return data


HIST_COLUMNS = ("t_prime_over_gamma", "counts")


def load_histogram_csv(path) -> tuple[np.ndarray, np.ndarray]:
    """Read a coincidence histogram CSV as (bin centers, counts)."""
    path = Path(path)
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None) or []
        for column in HIST_COLUMNS:
            if column not in header:
                raise MissingColumnError(path, column, header)
        it, ic = header.index(HIST_COLUMNS[0]), header.index(HIST_COLUMNS[1])
        rows = [(float(r[it]), float(r[ic])) for r in reader if r]
    if not rows:
        raise EmptyDataError(path)
    t = np.array([r[0] for r in rows])
    n = np.array([r[1] for r in rows])
    return t, n


def require_same_grid(path1, t1: np.ndarray, path2, t2: np.ndarray) -> None:
    if len(t1) != len(t2):
        raise GridMismatchError(
            f"histogram grids differ: {path1} has {len(t1)} bins, {path2} has {len(t2)}"
        )
    if not np.array_equal(t1, t2):
        i = int(np.flatnonzero(t1 != t2)[0])
        raise GridMismatchError(
            f"histogram bin centers differ at index {i}: "
            f"{path1} has {t1[i]:g}, {path2} has {t2[i]:g}"
        )
