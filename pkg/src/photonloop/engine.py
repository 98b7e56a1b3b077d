"""Assembly of the per-step evolution operators for one or two emitter+loop copies.

Everything the stepping loop needs is precomputed here as sparse-matrix /
index-array data:

  * H0: the time-independent part of the effective Hamiltonian, including the
    bin couplings sqrt(gamma/(2 dt)) (sigma^+ B_{N-1} + e^{i phi} sigma^+ B_0 + h.c.)
    and the non-Hermitian -i/2 sum_k C_k^dag C_k term;
  * Hd: the drive operator sum_c (sigma^+_c + sigma^-_c)/2, multiplied by
    Omega(t) at step time;
  * the jump channels with their detector labels;
  * the outgoing-bin measurement layout (class/rest decomposition and the
    detector-basis rotation blocks);
  * the conveyor-shift permutation;
  * the per-step substep counts that keep the second-order propagator inside
    its small-angle regime during the pump pulse.

With feedback disabled there are no bin modes at all: the loop is replaced by
a Markovian collapse channel sqrt(gamma) sigma^- whose jumps are recorded as
output detections (mixed through a 50:50 splitter for the two-copy setup).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .basis import FockBasis, FockConfig, LinearMap
from .params import PulseParams, SystemParams, pulse_amplitude

# Detector labels used in detection records (u8 in the spill format).
LABEL_OUTPUT = 0
LABEL_START = 1
LABEL_STOP = 2

# Substep cap: max rotation angle (rad) a single second-order substep may carry.
SUBSTEP_CAP = 0.025
MAX_SUBSTEPS = 200_000


@dataclass
class JumpChannel:
    """One collapse channel C_k with optional detection side effects."""

    name: str
    op: sp.csr_matrix
    diag: np.ndarray | None  # C^dag C diagonal when it is diagonal, else None
    label: int = -1  # detector label recorded on a jump; -1 records nothing


@dataclass
class Measurement:
    """Projective number measurement of the outgoing bin(s) in the detector basis."""

    n_classes: int
    class_of: np.ndarray  # int32[dim]: measured-occupation class per basis index
    rest_of: np.ndarray  # int32[dim]: basis index with the measured modes emptied
    rotation: np.ndarray  # complex[n_classes, n_classes], block-diag by photon total
    clicks: np.ndarray  # int32[n_classes, 2]: multiplicities for (label_a, label_b)
    labels: tuple[int, int]


@dataclass
class Engine:
    params: SystemParams
    pulse: PulseParams
    n_copies: int
    basis: FockBasis
    h0: sp.csr_matrix
    hd: sp.csr_matrix
    channels: list[JumpChannel]
    measurement: Measurement | None
    shift_src: np.ndarray
    shift_dst: np.ndarray
    shift_photons: np.ndarray
    trunc_weights: np.ndarray  # first-order cutoff-overflow weight per basis index
    excited_cols: np.ndarray  # int32[n_copies, ?]: indices with copy c excited
    nsub: np.ndarray  # int32[n_steps]: substep counts
    drive_on: np.ndarray  # bool[n_steps]
    init_index: int

    @property
    def dim(self) -> int:
        return self.basis.dim

    @property
    def n_steps(self) -> int:
        return self.params.n_steps

    def omega(self, t):
        return pulse_amplitude(t, self.pulse)


def _measurement_classes(n_modes: int, n_max: int) -> list[tuple[int, ...]]:
    """Occupation tuples of the measured modes, grouped by total photon number."""
    out: list[tuple[int, ...]] = []
    for k in range(n_max + 1):
        if n_modes == 1:
            out.append((k,))
        else:
            for n1 in range(k, -1, -1):
                out.append((n1, k - n1))
    return out


def _splitter_rotation(classes: list[tuple[int, ...]]) -> np.ndarray:
    """Change of basis from bin-mode occupations to 50:50-splitter occupations.

    For one measured mode this is the identity.  For two modes the blocks are
    the photon-number-sector matrices of B_1 -> (B_s + B_t)/sqrt2,
    B_2 -> (B_s - B_t)/sqrt2.
    """
    C = len(classes)
    U = np.zeros((C, C), dtype=complex)
    if len(classes[0]) == 1:
        return np.eye(C, dtype=complex)
    pos = {c: i for i, c in enumerate(classes)}
    for (n1, n2), col in pos.items():
        k = n1 + n2
        # coefficient of Bs^dag^ms Bt^dag^mt in ((Bs+Bt)/sqrt2)^n1 ((Bs-Bt)/sqrt2)^n2
        for ms in range(k + 1):
            mt = k - ms
            coeff = 0.0
            for j in range(ms + 1):
                l = ms - j
                if j > n1 or l > n2:
                    continue
                coeff += math.comb(n1, j) * math.comb(n2, l) * (-1) ** (n2 - l)
            if coeff == 0.0:
                continue
            amp = (
                coeff
                * math.sqrt(math.factorial(ms) * math.factorial(mt))
                / math.sqrt(math.factorial(n1) * math.factorial(n2))
                * 2.0 ** (-k / 2.0)
            )
            U[pos[(ms, mt)], col] = amp
    return U


def _empty_csr(dim: int) -> sp.csr_matrix:
    return sp.csr_matrix((dim, dim), dtype=complex)


def build_engine(
    params: SystemParams,
    n_copies: int = 1,
    drive_mask: tuple[bool, ...] | None = None,
) -> Engine:
    """Precompute all operators for `n_copies` identical emitter+loop copies.

    n_copies=2 builds the two-source interferometer: the joint photon cutoff is
    params.n_max, and the two outgoing bins are measured in the rotated
    start/stop basis.  drive_mask selectively disables the pump on some copies
    (used e.g. to check the one-armed interferometer limit).
    """
    if n_copies not in (1, 2):
        raise ValueError(f"n_copies must be 1 or 2, got {n_copies}")
    p = params
    pulse = p.pulse
    if drive_mask is None:
        drive_mask = (True,) * n_copies
    if len(drive_mask) != n_copies:
        raise ValueError("drive_mask length must equal n_copies")
    dt = p.dt

    n_bins = p.N if p.feedback_enabled else 0
    basis = FockBasis(FockConfig(N=n_bins * n_copies, n_max=p.n_max, n_tls=n_copies))
    dim = basis.dim

    lower = [basis.sigma_map("lower", c) for c in range(n_copies)]
    raise_ = [basis.sigma_map("raise", c) for c in range(n_copies)]
    exc_masks = [basis.excited_mask(c) for c in range(n_copies)]

    # ---- effective Hamiltonian -------------------------------------------
    rows, cols, vals = [], [], []

    def add(m: LinearMap, coef: complex):
        rows.append(m.dst)
        cols.append(m.src)
        vals.append(m.amp.astype(complex) * coef)

    g = math.sqrt(p.gamma / (2.0 * dt)) if p.feedback_enabled else 0.0
    trunc_w = np.zeros(dim)
    at_cutoff = basis.total_photons == p.n_max

    for c in range(n_copies):
        exc_idx = np.flatnonzero(exc_masks[c])
        proj = LinearMap(dim, exc_idx, exc_idx, np.ones(len(exc_idx)))
        # detuning and the non-Hermitian half of the collapse channels
        decay = p.gamma0 + p.gamma_prime + (0.0 if p.feedback_enabled else p.gamma)
        add(proj, p.delta - 0.5j * decay)
        if p.feedback_enabled:
            mode_in = c * p.N + (p.N - 1)
            mode_out = c * p.N + 0
            for mode, coef in ((mode_in, g), (mode_out, g * np.exp(1j * p.phi))):
                emit = basis.bin_annihilate_map(mode).then(raise_[c])  # sigma^+ B
                add(emit, coef)
                add(emit.adjoint(), np.conj(coef))
                # creation beyond the cutoff is dropped by the matrix; tally its
                # first-order weight so runs can report truncated probability
                occ = basis.occupation(mode)
                trunc_w += np.where(at_cutoff & exc_masks[c], abs(coef) ** 2 * (occ + 1), 0.0)

    h0 = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(dim, dim),
    ).tocsr()

    drows, dcols, dvals = [], [], []
    for c in range(n_copies):
        if not drive_mask[c]:
            continue
        for m in (raise_[c], lower[c]):
            drows.append(m.dst)
            dcols.append(m.src)
            dvals.append(m.amp.astype(complex) * 0.5)
    hd = sp.coo_matrix(
        (np.concatenate(dvals), (np.concatenate(drows), np.concatenate(dcols))),
        shape=(dim, dim),
    ).tocsr()

    # ---- jump channels ----------------------------------------------------
    channels: list[JumpChannel] = []
    if not p.feedback_enabled:
        s = math.sqrt(p.gamma)
        if n_copies == 1:
            channels.append(
                JumpChannel(
                    "output",
                    lower[0].scaled(s).tocsr(),
                    p.gamma * exc_masks[0].astype(float),
                    LABEL_OUTPUT,
                )
            )
        else:
            # 50:50 splitter mix of the two emission channels
            for sign, name, label in ((+1.0, "start", LABEL_START), (-1.0, "stop", LABEL_STOP)):
                m = sp.coo_matrix(
                    (
                        np.concatenate(
                            [
                                lower[0].amp * (s / math.sqrt(2.0)),
                                lower[1].amp * (sign * s / math.sqrt(2.0)),
                            ]
                        ).astype(complex),
                        (
                            np.concatenate([lower[0].dst, lower[1].dst]),
                            np.concatenate([lower[0].src, lower[1].src]),
                        ),
                    ),
                    shape=(dim, dim),
                ).tocsr()
                channels.append(JumpChannel(name, m, None, label))
    for c in range(n_copies):
        if p.gamma0 > 0:
            channels.append(
                JumpChannel(
                    f"offchip{c}" if n_copies > 1 else "offchip",
                    lower[c].scaled(math.sqrt(p.gamma0)).tocsr(),
                    p.gamma0 * exc_masks[c].astype(float),
                )
            )
    for c in range(n_copies):
        if p.gamma_prime > 0:
            exc_idx = np.flatnonzero(exc_masks[c])
            proj = LinearMap(dim, exc_idx, exc_idx, np.ones(len(exc_idx)))
            channels.append(
                JumpChannel(
                    f"dephase{c}" if n_copies > 1 else "dephase",
                    proj.scaled(math.sqrt(p.gamma_prime)).tocsr(),
                    p.gamma_prime * exc_masks[c].astype(float),
                )
            )

    # ---- outgoing-bin measurement ----------------------------------------
    measurement = None
    if p.feedback_enabled:
        measured_modes = [c * p.N + 0 for c in range(n_copies)]
        classes = _measurement_classes(n_copies, p.n_max)
        cls_pos = {c: i for i, c in enumerate(classes)}
        occs = [basis.occupation(m) for m in measured_modes]
        class_of = np.empty(dim, dtype=np.int32)
        rest_of = np.empty(dim, dtype=np.int32)
        for i, (bits, occ) in enumerate(basis.configs):
            key = tuple(int(o[i]) for o in occs)
            class_of[i] = cls_pos[key]
            rest = tuple(b for b in occ if b not in measured_modes)
            rest_of[i] = basis.index[(bits, rest)]
        if n_copies == 1:
            clicks = np.array([[c[0], 0] for c in classes], dtype=np.int32)
            labels = (LABEL_OUTPUT, LABEL_OUTPUT)
        else:
            clicks = np.array([[c[0], c[1]] for c in classes], dtype=np.int32)
            labels = (LABEL_START, LABEL_STOP)
        measurement = Measurement(
            n_classes=len(classes),
            class_of=class_of,
            rest_of=rest_of,
            rotation=_splitter_rotation(classes),
            clicks=clicks,
            labels=labels,
        )

    # ---- conveyor shift ---------------------------------------------------
    shift = basis.shift_map()
    shift_src = shift.src.astype(np.int32)
    shift_dst = shift.dst.astype(np.int32)
    shift_photons = basis.total_photons[shift.src].astype(np.int32)

    # ---- substep schedule -------------------------------------------------
    n_steps = p.n_steps
    t_edges = np.arange(n_steps + 1) * dt
    om = np.maximum(
        np.maximum(pulse_amplitude(t_edges[:-1], pulse), pulse_amplitude(t_edges[1:], pulse)),
        pulse_amplitude(t_edges[:-1] + 0.5 * dt, pulse),
    )
    base_rate = abs(p.delta) + 0.5 * (p.gamma0 + p.gamma_prime + (0 if p.feedback_enabled else p.gamma))
    angle = (0.5 * om + base_rate) * dt
    nsub = np.maximum(1, np.ceil(angle / SUBSTEP_CAP)).astype(np.int32)
    if int(nsub.max(initial=1)) > MAX_SUBSTEPS:
        raise ValueError(
            "pulse is too intense for the step size: "
            f"needs {int(nsub.max())} substeps in one bin step"
        )
    drive_on = (om * dt) > 1e-14

    excited_cols = np.zeros((n_copies, dim), dtype=bool)
    for c in range(n_copies):
        excited_cols[c] = exc_masks[c]

    return Engine(
        params=p,
        pulse=pulse,
        n_copies=n_copies,
        basis=basis,
        h0=h0,
        hd=hd,
        channels=channels,
        measurement=measurement,
        shift_src=shift_src,
        shift_dst=shift_dst,
        shift_photons=shift_photons,
        trunc_weights=trunc_w,
        excited_cols=excited_cols,
        nsub=nsub,
        drive_on=drive_on,
        init_index=basis.vacuum_index(0),
    )
