"""Coincidence histograms and the g2(0) / indistinguishability estimators.

Single-pulse trajectories are concatenated with one pulse period T between
them.  For the intensity interferometer every detected photon is assigned to
the start or stop detector by an independent fair coin (its own seeded stream,
so reassignment is reproducible); the two-source interferometer's records
already carry start/stop labels from the rotated-basis bin measurement.  All
start-stop pairs within |t'| <= t_max enter the histogram, and peak areas are
window sums on the fixed grid.

Estimators (with A0 the central peak area and AT the average of the two
first side peaks):

    g2(0)  = A0 / AT,   one-sigma error  g2 * sqrt(1/A0 + 1/AT)
    I      = 1 - g2     (two-source interferometer)

When A0 = 0 the error formula degenerates; by convention the result is then
reported as g2 = 0 with g2_err = 1/AT, i.e. a one-sigma upper bound.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass

import numpy as np

from .engine import LABEL_OUTPUT, LABEL_START, LABEL_STOP
from .ensemble import DetectionTable, EnsembleResult
from .rng import Pcg32


@dataclass
class CoincidenceHistogram:
    bin_width: float
    t_max: float
    counts: np.ndarray  # int64, symmetric grid over [-t_max, t_max]
    total_starts: int
    total_stops: int
    period: float

    def __post_init__(self):
        n = round(self.t_max / self.bin_width)
        if abs(n * self.bin_width - self.t_max) > 1e-9 * self.t_max:
            raise ValueError("bin_width must divide t_max")
        k = round(self.period / self.bin_width)
        if abs(k * self.bin_width - self.period) > 1e-9 * self.period:
            raise ValueError("bin_width must divide the pulse period")
        if len(self.counts) != 2 * n:
            raise ValueError(
                f"counts length {len(self.counts)} != {2 * n} expected from grid"
            )

    @property
    def edges(self) -> np.ndarray:
        n = round(self.t_max / self.bin_width)
        return (np.arange(2 * n + 1) - n) * self.bin_width

    @property
    def centers(self) -> np.ndarray:
        e = self.edges
        return 0.5 * (e[:-1] + e[1:])


def _assign_hbt(records: DetectionTable, assign_seed: int):
    """Split each detected photon to start/stop with an independent fair coin.

    Draws come from a per-trajectory counter-seeded stream in record order, so
    the assignment is reproducible and independent of how records are chunked.
    """
    out = records.label == LABEL_OUTPUT
    idx = np.flatnonzero(out)
    starts, stops = [], []
    rng = None
    rng_traj = -1
    for i in idx:
        t = records.time[i] + records.traj_id[i] * records.period
        if records.traj_id[i] != rng_traj:
            rng_traj = int(records.traj_id[i])
            rng = Pcg32(assign_seed, rng_traj)
        for _ in range(int(records.mult[i])):
            (starts if rng.uniform() < 0.5 else stops).append(t)
    return np.array(starts), np.array(stops)


def _labeled_times(records: DetectionTable):
    offs = records.time + records.traj_id.astype(float) * records.period
    starts = np.repeat(
        offs[records.label == LABEL_START],
        records.mult[records.label == LABEL_START].astype(np.int64),
    )
    stops = np.repeat(
        offs[records.label == LABEL_STOP],
        records.mult[records.label == LABEL_STOP].astype(np.int64),
    )
    return starts, stops


def _pair_histogram(
    starts: np.ndarray, stops: np.ndarray, period: float, bin_width: float, t_max: float
) -> CoincidenceHistogram:
    n = round(t_max / bin_width)
    edges = (np.arange(2 * n + 1) - n) * bin_width
    counts = np.zeros(2 * n, dtype=np.int64)
    if len(starts) and len(stops):
        stops_sorted = np.sort(stops)
        lo = np.searchsorted(stops_sorted, starts - t_max, side="left")
        hi = np.searchsorted(stops_sorted, starts + t_max, side="right")
        spans = hi - lo
        total = int(spans.sum())
        if total:
            rep = np.repeat(np.arange(len(starts)), spans)
            flat = np.concatenate([np.arange(a, b) for a, b in zip(lo, hi) if b > a])
            diffs = stops_sorted[flat] - starts[rep]
            # half-open bins [edge, edge) keep t'=0 in the central window
            which = np.clip(np.floor((diffs + t_max) / bin_width).astype(int), 0, 2 * n - 1)
            np.add.at(counts, which, 1)
    return CoincidenceHistogram(
        bin_width=bin_width,
        t_max=t_max,
        counts=counts,
        total_starts=len(starts),
        total_stops=len(stops),
        period=period,
    )


def _resolve_grid(period: float, bin_width, t_max):
    if bin_width is None:
        bin_width = period / 200.0
    if t_max is None:
        t_max = 5.0 * period
    return bin_width, t_max


def hbt_correlate(
    result: EnsembleResult,
    assign_seed: int = 0,
    bin_width: float | None = None,
    t_max: float | None = None,
) -> CoincidenceHistogram:
    """Intensity-interferometer histogram from unlabeled output detections."""
    records = result.records
    bin_width, t_max = _resolve_grid(records.period, bin_width, t_max)
    if len(records) == 0:
        warnings.warn("empty detection record: histogram has no counts", stacklevel=2)
        return _pair_histogram(
            np.array([]), np.array([]), records.period, bin_width, t_max
        )
    starts, stops = _assign_hbt(records, assign_seed)
    return _pair_histogram(starts, stops, records.period, bin_width, t_max)


def hom_correlate(
    result: EnsembleResult,
    bin_width: float | None = None,
    t_max: float | None = None,
) -> CoincidenceHistogram:
    """Two-source-interferometer histogram from start/stop-labeled detections."""
    records = result.records
    bin_width, t_max = _resolve_grid(records.period, bin_width, t_max)
    if len(records) == 0:
        warnings.warn("empty detection record: histogram has no counts", stacklevel=2)
        return _pair_histogram(
            np.array([]), np.array([]), records.period, bin_width, t_max
        )
    starts, stops = _labeled_times(records)
    return _pair_histogram(starts, stops, records.period, bin_width, t_max)


def peak_areas(
    h: CoincidenceHistogram, period: float | None = None, window: float | None = None
) -> tuple[float, float]:
    """(A0, AT): central window sum and the average of the +T and -T windows."""
    T = h.period if period is None else period
    if window is None:
        window = T / 2.0
    if window > T / 2.0 + 1e-12:
        raise ValueError(f"window {window} overlaps neighbouring peaks (> T/2)")
    c = h.centers
    a0 = float(h.counts[np.abs(c) <= window].sum())
    a_plus = float(h.counts[np.abs(c - T) <= window].sum())
    a_minus = float(h.counts[np.abs(c + T) <= window].sum())
    at = 0.5 * (a_plus + a_minus)
    if at == 0.0:
        raise ValueError("side peaks are empty: estimator undefined (AT = 0)")
    return a0, at


@dataclass
class CorrelationResult:
    kind: str  # "hbt" | "hom"
    A0: float
    AT: float
    g2: float
    g2_err: float
    indistinguishability: float | None = None

    def to_dict(self) -> dict:
        d = {
            "kind": self.kind,
            "A0": self.A0,
            "AT": self.AT,
            "g2": self.g2,
            "g2_err": self.g2_err,
        }
        if self.indistinguishability is not None:
            d["indistinguishability"] = self.indistinguishability
        return d


def g2_from_areas(A0: float, AT: float, kind: str) -> CorrelationResult:
    kind = kind.lower()
    if kind not in ("hbt", "hom"):
        raise ValueError(f"kind must be 'hbt' or 'hom', got {kind!r}")
    if A0 < 0 or AT < 0:
        raise ValueError("peak areas must be non-negative")
    if AT == 0:
        raise ValueError("AT = 0: estimator undefined")
    g2 = A0 / AT
    if A0 > 0:
        err = g2 * np.sqrt(1.0 / A0 + 1.0 / AT)
    else:
        err = 1.0 / AT  # one-sigma upper bound for an empty central peak
    return CorrelationResult(
        kind=kind,
        A0=A0,
        AT=AT,
        g2=g2,
        g2_err=float(err),
        indistinguishability=(1.0 - g2) if kind == "hom" else None,
    )


def correlation_from_histogram(
    h: CoincidenceHistogram, kind: str, window: float | None = None
) -> CorrelationResult:
    a0, at = peak_areas(h, window=window)
    return g2_from_areas(a0, at, kind)


def side_peak_spread(h: CoincidenceHistogram) -> float:
    """RMS deviation of side-peak counts from their window centers kT (k != 0).

    A sharper emission time distribution gives a smaller spread.
    """
    T = h.period
    w = T / 2.0
    c = h.centers
    k = np.rint(c / T)
    dev = c - k * T
    mask = (k != 0) & (np.abs(dev) <= w)
    total = h.counts[mask].sum()
    if total == 0:
        raise ValueError("no side-peak counts: spread undefined")
    return float(np.sqrt(np.sum(h.counts[mask] * dev[mask] ** 2) / total))


def counts_outside_peak_windows(h: CoincidenceHistogram, window: float | None = None) -> int:
    """Counts falling outside every window centered at integer multiples of T."""
    T = h.period
    if window is None:
        window = T / 2.0
    c = h.centers
    k = np.rint(c / T)
    inside = np.abs(c - k * T) <= window
    return int(h.counts[~inside].sum())


def save_histogram(h: CoincidenceHistogram, path) -> None:
    with open(path, "w", newline="") as f:
        wr = csv.writer(f)
        wr.writerow(["t_prime_over_gamma", "counts"])
        for t, n in zip(h.centers, h.counts):
            wr.writerow([f"{t:.10g}", int(n)])


def load_histogram(path) -> tuple[np.ndarray, np.ndarray]:
    """Read a histogram CSV back as (bin centers, counts)."""
    with open(path, newline="") as f:
        rd = csv.reader(f)
        header = next(rd)
        if header[:2] != ["t_prime_over_gamma", "counts"]:
            raise ValueError(f"{path}: unexpected histogram header {header!r}")
        rows = [(float(a), int(b)) for a, b, *_ in rd]
    t = np.array([r[0] for r in rows])
    n = np.array([r[1] for r in rows], dtype=np.int64)
    return t, n
