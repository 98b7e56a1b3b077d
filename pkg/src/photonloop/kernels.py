"""Compiled per-trajectory stepping loop.

One numba kernel advances a block of trajectories through the full window:
for every bin step it draws the jump channel from a single uniform variate,
applies the (sub-stepped) second-order no-jump propagator, measures the
outgoing bin(s) in the detector basis, and advances the conveyor.  The kernel
is nogil so thread pools give real concurrency, and all randomness comes from
a counter-seeded PCG32 stream per trajectory, so results are independent of
scheduling.

The pure-python reference implementation in dynamics.py mirrors this loop
operation for operation (same draw order, same summation order) and is used to
cross-check it in the tests.
"""

from __future__ import annotations

import numpy as np
from numba import njit

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MASK64 = np.uint64(0xFFFFFFFFFFFFFFFF)

# Event buffer capacity per trajectory (mean occupancy is ~1-3 events/pulse;
# a trajectory that overflows this flags an error rather than dropping data).
EVENT_CAP_PER_TRAJ = 64


@njit(cache=True, nogil=True, inline="always")
def _splitmix64(x):
    z = (x + _GOLDEN) & _MASK64
    z = ((z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)) & _MASK64
    z = ((z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)) & _MASK64
    return (z ^ (z >> np.uint64(31))) & _MASK64


@njit(cache=True, nogil=True, inline="always")
def _pcg32(rng):
    old = rng[0]
    rng[0] = (old * np.uint64(6364136223846793005) + rng[1]) & _MASK64
    xorshifted = np.uint32(((old >> np.uint64(18)) ^ old) >> np.uint64(27))
    rot = np.uint32(old >> np.uint64(59))
    return np.uint32(
        (xorshifted >> rot) | (xorshifted << ((np.uint32(32) - rot) & np.uint32(31)))
    )


@njit(cache=True, nogil=True, inline="always")
def _uniform53(rng):
    a = np.uint64(_pcg32(rng) >> np.uint32(5))
    b = np.uint64(_pcg32(rng) >> np.uint32(6))
    return ((a * np.uint64(1 << 26)) + b) * (1.0 / 9007199254740992.0)


@njit(cache=True, nogil=True)
def _seed_rng(master, traj_id, rng):
    m = np.uint64(master)
    k = np.uint64(traj_id)
    rng[0] = _splitmix64((m + (np.uint64(2) * k + np.uint64(1)) * _GOLDEN) & _MASK64)
    rng[1] = _splitmix64((m + (np.uint64(2) * k + np.uint64(2)) * _GOLDEN) & _MASK64) | np.uint64(1)
    _pcg32(rng)
    _pcg32(rng)


@njit(cache=True, nogil=True, inline="always")
def _csr_matvec(data, indices, indptr, x, out):
    n = out.shape[0]
    for i in range(n):
        acc = 0.0 + 0.0j
        for jj in range(indptr[i], indptr[i + 1]):
            acc += data[jj] * x[indices[jj]]
        out[i] = acc


@njit(cache=True, nogil=True)
def run_block(
    traj_lo,
    traj_hi,
    master_seed,
    dim,
    n_steps,
    dt,
    init_index,
    # H0 and drive operator (CSR)
    h0_data,
    h0_indices,
    h0_indptr,
    hd_data,
    hd_indices,
    hd_indptr,
    # substep schedule: per-step count and flat midpoint Rabi amplitudes
    nsub,
    om_off,
    om_vals,
    # jump channels (concatenated CSR segments + diagonals of C^dag C)
    ch_n,
    ch_data,
    ch_indices,
    ch_indptr,
    ch_off,
    ch_diag,
    ch_has_diag,
    ch_label,
    # outgoing-bin measurement
    meas_enabled,
    n_classes,
    class_of,
    rest_of,
    rot,
    clicks,
    click_labels,
    # conveyor shift
    shift_src,
    shift_dst,
    shift_phase,
    # diagnostics
    trunc_w,
    popw,
    # outputs
    pop_sum,
    pop_sumsq,
    ev_traj,
    ev_time,
    ev_label,
    ev_mult,
    clicks_per_traj,
    trunc_per_traj,
    closure_dev,
    norm_dev,
    pjump_max,
):
    """Advance trajectories [traj_lo, traj_hi); returns (event_count, error).

    error codes: 0 ok, 1 event-buffer overflow, 2 state norm collapsed.
    """
    rng = np.empty(2, dtype=np.uint64)
    psi = np.empty(dim, dtype=np.complex128)
    w1 = np.empty(dim, dtype=np.complex128)
    w2 = np.empty(dim, dtype=np.complex128)
    w3 = np.empty(dim, dtype=np.complex128)
    scratch = np.empty(dim, dtype=np.complex128)
    tmp = np.zeros(dim * n_classes, dtype=np.complex128)
    tmp2 = np.zeros(dim * n_classes, dtype=np.complex128)
    visited = np.zeros(dim, dtype=np.uint8)
    touched = np.empty(dim, dtype=np.int64)
    probs = np.empty(max(n_classes, 1), dtype=np.float64)
    pk = np.empty(max(ch_n, 1), dtype=np.float64)

    ev_cap = ev_traj.shape[0]
    n_ev = 0
    err = 0

    for traj in range(traj_lo, traj_hi):
        j = traj - traj_lo
        _seed_rng(master_seed, traj, rng)
        psi[:] = 0.0
        psi[init_index] = 1.0
        trunc = 0.0
        cdev = 0.0
        ndev = 0.0
        pjm = 0.0
        nclicks = 0

        p0 = 0.0
        for i in range(dim):
            p0 += popw[i] * (psi[i].real * psi[i].real + psi[i].imag * psi[i].imag)
        pop_sum[0] += p0
        pop_sumsq[0] += p0 * p0

        for step in range(n_steps):
            t_end = dt * (step + 1.0)

            # ---- 1. jump draw (single uniform, mutually exclusive) -------
            u = _uniform53(rng)
            p_total = 0.0
            fired = -1
            for k in range(ch_n):
                if ch_has_diag[k] == 1:
                    acc = 0.0
                    for i in range(dim):
                        acc += ch_diag[k * dim + i] * (
                            psi[i].real * psi[i].real + psi[i].imag * psi[i].imag
                        )
                    pchan = acc * dt
                else:
                    base = ch_off[k]
                    accn = 0.0
                    for i in range(dim):
                        a = 0.0 + 0.0j
                        for jj in range(
                            ch_indptr[k * (dim + 1) + i], ch_indptr[k * (dim + 1) + i + 1]
                        ):
                            a += ch_data[base + jj] * psi[ch_indices[base + jj]]
                        scratch[i] = a
                        accn += a.real * a.real + a.imag * a.imag
                    pchan = accn * dt
                pk[k] = pchan
                p_total += pchan
                if fired < 0 and u < p_total:
                    fired = k
            if p_total > pjm:
                pjm = p_total
            if fired >= 0:
                base = ch_off[fired]
                accn = 0.0
                for i in range(dim):
                    a = 0.0 + 0.0j
                    for jj in range(
                        ch_indptr[fired * (dim + 1) + i],
                        ch_indptr[fired * (dim + 1) + i + 1],
                    ):
                        a += ch_data[base + jj] * psi[ch_indices[base + jj]]
                    w1[i] = a
                    accn += a.real * a.real + a.imag * a.imag
                if accn <= 0.0:
                    err = 2
                    break
                inv = 1.0 / np.sqrt(accn)
                for i in range(dim):
                    psi[i] = w1[i] * inv
                if ch_label[fired] >= 0:
                    if n_ev >= ev_cap:
                        err = 1
                        break
                    ev_traj[n_ev] = traj
                    ev_time[n_ev] = t_end
                    ev_label[n_ev] = ch_label[fired]
                    ev_mult[n_ev] = 1
                    n_ev += 1
                    nclicks += 1

            # ---- 2. second-order no-jump propagator ----------------------
            K = nsub[step]
            h = dt / K
            for sub in range(K):
                om = om_vals[om_off[step] + sub]
                _csr_matvec(h0_data, h0_indices, h0_indptr, psi, w1)
                if om != 0.0:
                    _csr_matvec(hd_data, hd_indices, hd_indptr, psi, w2)
                    for i in range(dim):
                        w1[i] += om * w2[i]
                _csr_matvec(h0_data, h0_indices, h0_indptr, w1, w3)
                if om != 0.0:
                    _csr_matvec(hd_data, hd_indices, hd_indptr, w1, w2)
                    for i in range(dim):
                        w3[i] += om * w2[i]
                hh = 0.5 * h * h
                for i in range(dim):
                    psi[i] = psi[i] - 1j * h * w1[i] - hh * w3[i]

            # first-order tally of amplitude dropped at the photon cutoff
            tw = 0.0
            for i in range(dim):
                tw += trunc_w[i] * (psi[i].real * psi[i].real + psi[i].imag * psi[i].imag)
            trunc += tw * dt * dt

            nrm2 = 0.0
            for i in range(dim):
                nrm2 += psi[i].real * psi[i].real + psi[i].imag * psi[i].imag
            if nrm2 <= 0.0:
                err = 2
                break
            inv = 1.0 / np.sqrt(nrm2)
            for i in range(dim):
                psi[i] *= inv

            # ---- 3. measure the outgoing bin(s) in the detector basis ----
            u2 = _uniform53(rng)
            if meas_enabled == 1:
                nt = 0
                for i in range(dim):
                    r = rest_of[i]
                    if visited[r] == 0:
                        visited[r] = 1
                        touched[nt] = r
                        nt += 1
                    tmp[r * n_classes + class_of[i]] = psi[i]
                for m in range(n_classes):
                    probs[m] = 0.0
                for q in range(nt):
                    r = touched[q]
                    for m in range(n_classes):
                        a = 0.0 + 0.0j
                        for c in range(n_classes):
                            a += rot[m, c] * tmp[r * n_classes + c]
                        tmp2[r * n_classes + m] = a
                        probs[m] += a.real * a.real + a.imag * a.imag
                ptot = 0.0
                for m in range(n_classes):
                    ptot += probs[m]
                # closure audit: jump partition + measured distribution
                cd = abs(p_total + (1.0 - p_total) * ptot - 1.0)
                if cd > cdev:
                    cdev = cd
                sel = -1
                acc = 0.0
                for m in range(n_classes):
                    acc += probs[m]
                    if sel < 0 and u2 < acc:
                        sel = m
                if sel < 0:
                    for m in range(n_classes - 1, -1, -1):
                        if probs[m] > 0.0:
                            sel = m
                            break
                inv = 1.0 / np.sqrt(probs[sel])
                for i in range(dim):
                    psi[i] = 0.0
                for q in range(nt):
                    r = touched[q]
                    psi[r] = tmp2[r * n_classes + sel] * inv
                    for c in range(n_classes):
                        tmp[r * n_classes + c] = 0.0
                        tmp2[r * n_classes + c] = 0.0
                    visited[r] = 0
                ca = clicks[sel, 0]
                cb = clicks[sel, 1]
                if ca > 0:
                    if n_ev >= ev_cap:
                        err = 1
                        break
                    ev_traj[n_ev] = traj
                    ev_time[n_ev] = t_end
                    ev_label[n_ev] = click_labels[0]
                    ev_mult[n_ev] = ca
                    n_ev += 1
                    nclicks += ca
                if cb > 0:
                    if n_ev >= ev_cap:
                        err = 1
                        break
                    ev_traj[n_ev] = traj
                    ev_time[n_ev] = t_end
                    ev_label[n_ev] = click_labels[1]
                    ev_mult[n_ev] = cb
                    n_ev += 1
                    nclicks += cb
            else:
                cd = abs(p_total + (1.0 - p_total) - 1.0)
                if cd > cdev:
                    cdev = cd

            # ---- 4. conveyor shift --------------------------------------
            for i in range(dim):
                w1[i] = 0.0
            for q in range(shift_src.shape[0]):
                w1[shift_dst[q]] = psi[shift_src[q]] * shift_phase[q]
            nrm2 = 0.0
            for i in range(dim):
                psi[i] = w1[i]
                nrm2 += psi[i].real * psi[i].real + psi[i].imag * psi[i].imag
            nd = abs(nrm2 - 1.0)
            if nd > ndev:
                ndev = nd

            # ---- 5. observables -----------------------------------------
            p0 = 0.0
            for i in range(dim):
                p0 += popw[i] * (psi[i].real * psi[i].real + psi[i].imag * psi[i].imag)
            pop_sum[step + 1] += p0
            pop_sumsq[step + 1] += p0 * p0

        if err != 0:
            break
        clicks_per_traj[j] = nclicks
        trunc_per_traj[j] = trunc
        closure_dev[j] = cdev
        norm_dev[j] = ndev
        pjump_max[j] = pjm

    return n_ev, err


def pack_kernel_args(engine) -> dict:
    """Flatten an Engine into the array arguments run_block expects."""
    p = engine.params
    dim = engine.dim
    h0 = engine.h0
    hd = engine.hd

    nsub = engine.nsub.astype(np.int64)
    om_off = np.zeros(len(nsub) + 1, dtype=np.int64)
    np.cumsum(nsub, out=om_off[1:])
    om_vals = np.zeros(int(om_off[-1]))
    dt = p.dt
    for step in range(len(nsub)):
        K = int(nsub[step])
        mids = (step + (np.arange(K) + 0.5) / K) * dt
        vals = engine.omega(mids)
        om_vals[om_off[step] : om_off[step + 1]] = np.where(vals * dt > 1e-14, vals, 0.0)

    ch_n = len(engine.channels)
    ch_data = []
    ch_indices = []
    ch_indptr = np.zeros(max(ch_n, 1) * (dim + 1), dtype=np.int64)
    ch_off = np.zeros(max(ch_n, 1), dtype=np.int64)
    ch_diag = np.zeros(max(ch_n, 1) * dim)
    ch_has_diag = np.zeros(max(ch_n, 1), dtype=np.uint8)
    ch_label = np.full(max(ch_n, 1), -1, dtype=np.int8)
    off = 0
    for k, ch in enumerate(engine.channels):
        m = ch.op
        ch_data.append(m.data.astype(np.complex128))
        ch_indices.append(m.indices.astype(np.int64))
        ch_indptr[k * (dim + 1) : (k + 1) * (dim + 1)] = m.indptr
        ch_off[k] = off
        off += m.nnz
        if ch.diag is not None:
            ch_diag[k * dim : (k + 1) * dim] = ch.diag
            ch_has_diag[k] = 1
        ch_label[k] = ch.label
    ch_data = np.concatenate(ch_data) if ch_data else np.zeros(0, dtype=np.complex128)
    ch_indices = (
        np.concatenate(ch_indices) if ch_indices else np.zeros(0, dtype=np.int64)
    )

    meas = engine.measurement
    if meas is not None:
        meas_args = dict(
            meas_enabled=1,
            n_classes=meas.n_classes,
            class_of=meas.class_of.astype(np.int64),
            rest_of=meas.rest_of.astype(np.int64),
            rot=meas.rotation,
            clicks=meas.clicks.astype(np.int64),
            click_labels=np.array(meas.labels, dtype=np.int64),
        )
    else:
        meas_args = dict(
            meas_enabled=0,
            n_classes=1,
            class_of=np.zeros(dim, dtype=np.int64),
            rest_of=np.arange(dim, dtype=np.int64),
            rot=np.eye(1, dtype=complex),
            clicks=np.zeros((1, 2), dtype=np.int64),
            click_labels=np.zeros(2, dtype=np.int64),
        )

    shift_phase = np.exp(-1j * p.delta * p.dt * engine.shift_photons.astype(float))
    popw = engine.excited_cols.astype(float).sum(axis=0) / engine.n_copies

    return dict(
        dim=dim,
        n_steps=p.n_steps,
        dt=p.dt,
        init_index=engine.init_index,
        h0_data=h0.data.astype(np.complex128),
        h0_indices=h0.indices.astype(np.int64),
        h0_indptr=h0.indptr.astype(np.int64),
        hd_data=hd.data.astype(np.complex128),
        hd_indices=hd.indices.astype(np.int64),
        hd_indptr=hd.indptr.astype(np.int64),
        nsub=nsub,
        om_off=om_off,
        om_vals=om_vals,
        ch_n=ch_n,
        ch_data=ch_data,
        ch_indices=ch_indices,
        ch_indptr=ch_indptr,
        ch_off=ch_off,
        ch_diag=ch_diag,
        ch_has_diag=ch_has_diag,
        ch_label=ch_label,
        **meas_args,
        shift_src=engine.shift_src.astype(np.int64),
        shift_dst=engine.shift_dst.astype(np.int64),
        shift_phase=shift_phase,
        trunc_w=engine.trunc_weights,
        popw=popw,
    )
