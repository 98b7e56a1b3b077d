"""Seeded parallel trajectory ensembles and their reductions.

Trajectories are partitioned into fixed-size blocks (independent of the worker
count) and each block runs through the compiled kernel.  Per-block partial
results are merged in block order, so the reduced EnsembleResult is
bit-identical for any parallelism.  The kernel releases the GIL, so a plain
thread pool gives real concurrency without any shared mutable state.

Detection records are kept columnar — (trajectory id: u64, event time: f64,
detector label: u8, multiplicity: u8) — and can be spilled to / reloaded from
a small versioned binary format, which is also the interchange format between
the CLI and the correlators.
"""

from __future__ import annotations

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .engine import Engine, build_engine
from .kernels import EVENT_CAP_PER_TRAJ, pack_kernel_args, run_block
from .params import SystemParams

BLOCK_SIZE = 256

SPILL_MAGIC = b"PLRECS01"


@dataclass
class DetectionTable:
    """Columnar pool of detection events for a whole ensemble."""

    traj_id: np.ndarray  # u64
    time: np.ndarray  # f64, units of 1/gamma
    label: np.ndarray  # u8 detector label
    mult: np.ndarray  # u8 photon multiplicity
    M: int  # trajectory count (ids run 0..M-1)
    period: float  # pulse repetition period the times refer to

    def __len__(self) -> int:
        return len(self.time)

    def for_trajectory(self, i: int) -> np.ndarray:
        return np.flatnonzero(self.traj_id == i)

    def clicks_per_trajectory(self) -> np.ndarray:
        counts = np.zeros(self.M, dtype=np.int64)
        np.add.at(counts, self.traj_id.astype(np.int64), self.mult.astype(np.int64))
        return counts


def save_records(table: DetectionTable, path) -> None:
    """Write the versioned columnar spill file (magic PLRECS01)."""
    with open(path, "wb") as f:
        f.write(SPILL_MAGIC)
        np.array([len(table), table.M], dtype="<u8").tofile(f)
        np.array([table.period], dtype="<f8").tofile(f)
        table.traj_id.astype("<u8").tofile(f)
        table.time.astype("<f8").tofile(f)
        table.label.astype("u1").tofile(f)
        table.mult.astype("u1").tofile(f)


def load_records(path) -> DetectionTable:
    with open(path, "rb") as f:
        magic = f.read(8)
        if magic != SPILL_MAGIC:
            raise ValueError(
                f"{path}: not a detection-record file (magic {magic!r})"
            )
        n, M = (int(x) for x in np.fromfile(f, dtype="<u8", count=2))
        period = float(np.fromfile(f, dtype="<f8", count=1)[0])
        traj = np.fromfile(f, dtype="<u8", count=n)
        time = np.fromfile(f, dtype="<f8", count=n)
        label = np.fromfile(f, dtype="u1", count=n)
        mult = np.fromfile(f, dtype="u1", count=n)
        if len(mult) != n:
            raise ValueError(f"{path}: truncated record file")
    return DetectionTable(traj, time, label, mult, M=M, period=period)


@dataclass
class EnsembleResult:
    params: SystemParams
    M: int
    master_seed: int
    n_copies: int
    records: DetectionTable
    t_grid: np.ndarray
    mean_population: np.ndarray
    population_stderr: np.ndarray
    efficiency: float
    efficiency_stderr: float
    mean_clicks: float
    truncation_mean: float
    truncation_max: float
    closure_dev_max: float
    norm_dev_max: float
    pjump_max: float
    warnings: list[str] = field(default_factory=list)


def efficiency(result: EnsembleResult) -> tuple[float, float]:
    """Fraction of trajectories with at least one detected photon, with stderr."""
    return result.efficiency, result.efficiency_stderr


def _run_one_block(args: dict, lo: int, hi: int, master_seed: int, n_steps: int):
    nb = hi - lo
    cap = nb * EVENT_CAP_PER_TRAJ
    out = dict(
        pop_sum=np.zeros(n_steps + 1),
        pop_sumsq=np.zeros(n_steps + 1),
        ev_traj=np.zeros(cap, dtype=np.int64),
        ev_time=np.zeros(cap),
        ev_label=np.zeros(cap, dtype=np.uint8),
        ev_mult=np.zeros(cap, dtype=np.uint8),
        clicks_per_traj=np.zeros(nb, dtype=np.int32),
        trunc_per_traj=np.zeros(nb),
        closure_dev=np.zeros(nb),
        norm_dev=np.zeros(nb),
        pjump_max=np.zeros(nb),
    )
    n_ev, err = run_block(lo, hi, master_seed, **args, **out)
    return lo, n_ev, err, out


def run_ensemble(
    params: SystemParams,
    M: int,
    master_seed: int,
    parallelism: int = 1,
    n_copies: int = 1,
    engine: Engine | None = None,
    spill_path=None,
) -> EnsembleResult:
    """Run M seeded trajectories and reduce them deterministically.

    The result depends only on (params, M, master_seed, n_copies); block
    partials are merged in block order, so any worker count gives bit-identical
    output.  A worker failure aborts with a report of how far the run got.
    """
    if M < 1:
        raise ValueError("M must be >= 1")
    if parallelism < 1:
        raise ValueError("parallelism must be >= 1")
    if engine is None:
        engine = build_engine(params, n_copies=n_copies)
    args = pack_kernel_args(engine)
    n_steps = params.n_steps
    blocks = [(lo, min(lo + BLOCK_SIZE, M)) for lo in range(0, M, BLOCK_SIZE)]

    partials: list[tuple[int, int, int, dict] | None] = [None] * len(blocks)
    if parallelism == 1 or len(blocks) == 1:
        for b, (lo, hi) in enumerate(blocks):
            partials[b] = _run_one_block(args, lo, hi, master_seed, n_steps)
    else:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            futs = [
                pool.submit(_run_one_block, args, lo, hi, master_seed, n_steps)
                for lo, hi in blocks
            ]
            for b, fut in enumerate(futs):
                try:
                    partials[b] = fut.result()
                except Exception as exc:  # worker failure: abort with context
                    done = sum(1 for p in partials if p is not None)
                    raise RuntimeError(
                        f"trajectory block {b} (of {len(blocks)}) failed after "
                        f"{done} completed blocks: {exc}"
                    ) from exc

    pop_sum = np.zeros(n_steps + 1)
    pop_sumsq = np.zeros(n_steps + 1)
    ev_chunks = []
    clicks = np.zeros(M, dtype=np.int64)
    trunc = np.zeros(M)
    cdev = 0.0
    ndev = 0.0
    pjm = 0.0
    for b, (lo, hi) in enumerate(blocks):
        blo, n_ev, err, out = partials[b]
        if err == 1:
            raise RuntimeError(
                f"detection-event buffer overflow in trajectories [{lo},{hi}); "
                f"a trajectory produced more than {EVENT_CAP_PER_TRAJ} events"
            )
        if err != 0:
            raise FloatingPointError(
                f"state norm collapsed in trajectory block [{lo},{hi})"
            )
        pop_sum += out["pop_sum"]
        pop_sumsq += out["pop_sumsq"]
        ev_chunks.append(
            (
                out["ev_traj"][:n_ev],
                out["ev_time"][:n_ev],
                out["ev_label"][:n_ev],
                out["ev_mult"][:n_ev],
            )
        )
        clicks[lo:hi] = out["clicks_per_traj"]
        trunc[lo:hi] = out["trunc_per_traj"]
        cdev = max(cdev, float(out["closure_dev"].max(initial=0.0)))
        ndev = max(ndev, float(out["norm_dev"].max(initial=0.0)))
        pjm = max(pjm, float(out["pjump_max"].max(initial=0.0)))

    records = DetectionTable(
        traj_id=np.concatenate([c[0] for c in ev_chunks]).astype(np.uint64),
        time=np.concatenate([c[1] for c in ev_chunks]),
        label=np.concatenate([c[2] for c in ev_chunks]),
        mult=np.concatenate([c[3] for c in ev_chunks]),
        M=M,
        period=params.period,
    )

    mean_pop = pop_sum / M
    if M > 1:
        var = np.maximum(pop_sumsq - pop_sum**2 / M, 0.0) / (M - 1)
        stderr = np.sqrt(var / M)
    else:
        stderr = np.zeros_like(mean_pop)

    eta = float(np.mean(clicks >= 1))
    eta_err = float(np.sqrt(max(eta * (1.0 - eta), 0.0) / M))

    warns: list[str] = []
    if float(trunc.mean()) > 1e-3:
        warns.append(
            f"cutoff warning: mean truncated probability {trunc.mean():.2e} > 1e-3; "
            "increase n_max"
        )
    if pjm > 0.1:
        warns.append(
            f"step-size warning: per-step jump probability reached {pjm:.3f} > 0.1"
        )
    if cdev > 1e-8:
        warns.append(f"probability-closure audit failed: max deviation {cdev:.2e}")
    if ndev > 1e-10:
        warns.append(f"norm audit failed: max deviation {ndev:.2e}")
    if mean_pop[-1] > 1e-4:
        warns.append(
            f"window warning: excited population {mean_pop[-1]:.2e} > 1e-4 at the "
            "period end; increase T"
        )
    for w in warns:
        warnings.warn(w, stacklevel=2)

    result = EnsembleResult(
        params=params,
        M=M,
        master_seed=master_seed,
        n_copies=engine.n_copies,
        records=records,
        t_grid=np.arange(n_steps + 1) * params.dt,
        mean_population=mean_pop,
        population_stderr=stderr,
        efficiency=eta,
        efficiency_stderr=eta_err,
        mean_clicks=float(clicks.mean()),
        truncation_mean=float(trunc.mean()),
        truncation_max=float(trunc.max()),
        closure_dev_max=cdev,
        norm_dev_max=ndev,
        pjump_max=pjm,
        warnings=warns,
    )
    if spill_path is not None:
        save_records(records, spill_path)
    return result


def run_hom_ensemble(
    params: SystemParams,
    M: int,
    master_seed: int,
    parallelism: int = 1,
    drive_mask: tuple[bool, ...] | None = None,
) -> EnsembleResult:
    """Two identical copies interfering on the 50:50 splitter; start/stop labels."""
    engine = build_engine(params, n_copies=2, drive_mask=drive_mask)
    return run_ensemble(
        params, M, master_seed, parallelism=parallelism, n_copies=2, engine=engine
    )
