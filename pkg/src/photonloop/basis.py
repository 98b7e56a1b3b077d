"""Truncated Fock space for emitters coupled to a chain of waveguide time bins.

The Hilbert space is (C^2)^{n_tls} (x) F_{n_max}(N), where F_{n_max}(N) is the
bosonic Fock space over N discrete time-bin modes truncated at *total* photon
number n_max.  States are enumerated sparsely: a basis configuration stores the
emitter bits and the sorted multiset of occupied bin indices, so the dimension
grows like N^n_max instead of (n_max+1)^N.

All operators are expressed as index maps (src, dst, amplitude) over the
enumerated basis; these back both the pure-function operator applications used
in tests and the sparse matrices consumed by the dynamics engine.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations_with_replacement

import numpy as np
import scipy.sparse as sp


class ShiftContractError(RuntimeError):
    """Raised when shift_bins is applied to a state with weight in bin 0."""


@dataclass(frozen=True)
class FockConfig:
    """Dimensions of the truncated space: N time bins, total photon cutoff n_max."""

    N: int
    n_max: int
    n_tls: int = 1

    def __post_init__(self):
        if self.N < 0:
            raise ValueError(f"negative mode count N={self.N}")
        if self.n_max < 1 and self.N > 0:
            raise ValueError(f"need photon cutoff n_max >= 1, got n_max={self.n_max}")
        if self.n_tls < 1:
            raise ValueError(f"need at least one emitter, got n_tls={self.n_tls}")


@dataclass
class LinearMap:
    """Sparse operator as parallel index arrays: |dst[k]> <- amp[k] * |src[k]>."""

    dim: int
    src: np.ndarray
    dst: np.ndarray
    amp: np.ndarray

    def apply(self, psi: np.ndarray) -> np.ndarray:
        out = np.zeros(self.dim, dtype=complex)
        np.add.at(out, self.dst, self.amp * psi[self.src])
        return out

    def adjoint(self) -> "LinearMap":
        return LinearMap(self.dim, self.dst.copy(), self.src.copy(), np.conj(self.amp))

    def scaled(self, factor: complex) -> "LinearMap":
        return LinearMap(self.dim, self.src, self.dst, self.amp * factor)

    def then(self, other: "LinearMap") -> "LinearMap":
        """Composition other∘self (apply self first)."""
        pos = np.full(self.dim, -1, dtype=np.int64)
        pos[other.src] = np.arange(len(other.src))
        hit = pos[self.dst] >= 0
        k = pos[self.dst[hit]]
        return LinearMap(self.dim, self.src[hit], other.dst[k], self.amp[hit] * other.amp[k])

    def tocsr(self) -> sp.csr_matrix:
        m = sp.coo_matrix(
            (np.asarray(self.amp, dtype=complex), (self.dst, self.src)),
            shape=(self.dim, self.dim),
        )
        return m.tocsr()


@dataclass
class Ket:
    """Dense complex state vector in an enumerated FockBasis."""

    basis: "FockBasis"
    psi: np.ndarray

    def norm(self) -> float:
        return float(np.linalg.norm(self.psi))

    def normalized(self) -> "Ket":
        n = self.norm()
        if n == 0.0:
            raise ValueError("cannot normalize a zero vector")
        return Ket(self.basis, self.psi / n)

    def copy(self) -> "Ket":
        return Ket(self.basis, self.psi.copy())


class FockBasis:
    """Enumerated basis of emitter bits x occupied-bin multisets.

    Configurations are ordered by total photon number, then by the occupied-bin
    multiset (lexicographic), then by the emitter bit pattern; the ordering is
    part of the public contract since indices identify states in records.
    """

    def __init__(self, config: FockConfig):
        self.config = config
        self.N = config.N
        self.n_max = config.n_max if config.N > 0 else 0
        self.n_tls = config.n_tls
        configs = []
        for k in range(self.n_max + 1):
            for occ in combinations_with_replacement(range(self.N), k):
                for bits in range(1 << self.n_tls):
                    configs.append((bits, occ))
        self.configs: list[tuple[int, tuple[int, ...]]] = configs
        self.dim = len(configs)
        self.index: dict[tuple[int, tuple[int, ...]], int] = {
            c: i for i, c in enumerate(configs)
        }
        self._map_cache: dict[tuple, LinearMap] = {}
        # Per-index totals, used by measurement grouping and truncation tallies.
        self.total_photons = np.array([len(occ) for _, occ in configs], dtype=np.int64)

    # -- state constructors -------------------------------------------------

    def vacuum_index(self, excited_bits: int = 0) -> int:
        return self.index[(excited_bits, ())]

    def ket(self, bits: int = 0, occ: tuple[int, ...] = ()) -> Ket:
        psi = np.zeros(self.dim, dtype=complex)
        psi[self.index[(bits, tuple(sorted(occ)))]] = 1.0
        return Ket(self, psi)

    # -- elementary operator maps -------------------------------------------

    def _cached(self, key, builder) -> LinearMap:
        if key not in self._map_cache:
            self._map_cache[key] = builder()
        return self._map_cache[key]

    def bin_annihilate_map(self, mode: int) -> LinearMap:
        """B_mode: removes one photon from `mode` with the usual sqrt(count) factor."""
        self._check_mode(mode)

        def build():
            src, dst, amp = [], [], []
            for i, (bits, occ) in enumerate(self.configs):
                c = occ.count(mode)
                if c == 0:
                    continue
                rem = list(occ)
                rem.remove(mode)
                src.append(i)
                dst.append(self.index[(bits, tuple(rem))])
                amp.append(math.sqrt(c))
            return LinearMap(
                self.dim,
                np.array(src, dtype=np.int64),
                np.array(dst, dtype=np.int64),
                np.array(amp, dtype=float),
            )

        return self._cached(("ann", mode), build)

    def bin_create_map(self, mode: int) -> LinearMap:
        """B_mode^dag below the cutoff.  Components that would exceed n_max are
        absent from the map; callers tally that weight via `overflow_weights`."""
        self._check_mode(mode)

        def build():
            src, dst, amp = [], [], []
            for i, (bits, occ) in enumerate(self.configs):
                if len(occ) >= self.n_max:
                    continue
                c = occ.count(mode)
                add = tuple(sorted(occ + (mode,)))
                src.append(i)
                dst.append(self.index[(bits, add)])
                amp.append(math.sqrt(c + 1))
            return LinearMap(
                self.dim,
                np.array(src, dtype=np.int64),
                np.array(dst, dtype=np.int64),
                np.array(amp, dtype=float),
            )

        return self._cached(("cre", mode), build)

    def overflow_weights(self, mode: int) -> np.ndarray:
        """|amp|^2 that B_mode^dag would have produced from each at-cutoff state."""
        w = np.zeros(self.dim)
        for i, (bits, occ) in enumerate(self.configs):
            if len(occ) == self.n_max:
                w[i] = occ.count(mode) + 1
        return w

    def sigma_map(self, which: str, emitter: int = 0) -> LinearMap:
        """sigma^- ("lower"), sigma^+ ("raise"), or sigma^+ sigma^- ("population")."""
        self._check_emitter(emitter)
        if which not in ("lower", "raise", "population"):
            raise ValueError(
                f"which must be 'lower', 'raise' or 'population', got {which!r}"
            )

        def build():
            bit = 1 << emitter
            src, dst = [], []
            for i, (bits, occ) in enumerate(self.configs):
                if which == "lower" and (bits & bit):
                    src.append(i)
                    dst.append(self.index[(bits & ~bit, occ)])
                elif which == "raise" and not (bits & bit):
                    src.append(i)
                    dst.append(self.index[(bits | bit, occ)])
                elif which == "population" and (bits & bit):
                    src.append(i)
                    dst.append(i)
            return LinearMap(
                self.dim,
                np.array(src, dtype=np.int64),
                np.array(dst, dtype=np.int64),
                np.ones(len(src)),
            )

        return self._cached(("sigma", which, emitter), build)

    def excited_mask(self, emitter: int = 0) -> np.ndarray:
        self._check_emitter(emitter)
        bit = 1 << emitter
        return np.array([(bits & bit) != 0 for bits, _ in self.configs])

    def occupation(self, mode: int) -> np.ndarray:
        """Photon count in `mode` for every basis index."""
        self._check_mode(mode)
        return np.array([occ.count(mode) for _, occ in self.configs], dtype=np.int64)

    def shift_map(self) -> LinearMap:
        """Conveyor shift bin n -> n-1 for every photon (defined off bin 0).

        For composite systems (n_tls copies, each with N bins laid out
        contiguously), the shift acts per copy-block of N modes.
        """

        def build():
            src, dst = [], []
            n_bins = self.N if self.n_tls == 1 else self.N // self.n_tls
            for i, (bits, occ) in enumerate(self.configs):
                if any((b % n_bins) == 0 for b in occ):
                    continue  # bin 0 occupied: outside the shift's domain
                moved = tuple(sorted(b - 1 for b in occ))
                src.append(i)
                dst.append(self.index[(bits, moved)])
            return LinearMap(
                self.dim,
                np.array(src, dtype=np.int64),
                np.array(dst, dtype=np.int64),
                np.ones(len(src)),
            )

        return self._cached(("shift",), build)

    # -- checks -------------------------------------------------------------

    def _check_mode(self, mode: int):
        if not (0 <= mode < self.N):
            raise ValueError(f"bin index {mode} outside 0..{self.N - 1}")

    def _check_emitter(self, emitter: int):
        if not (0 <= emitter < self.n_tls):
            raise ValueError(f"emitter index {emitter} outside 0..{self.n_tls - 1}")


def enumerate_basis(N: int, n_max: int) -> FockBasis:
    """Complete, duplicate-free basis for one emitter and N bins at cutoff n_max."""
    if N < 1:
        raise ValueError(f"need N >= 1 time bins, got {N}")
    if n_max < 1:
        raise ValueError(f"need n_max >= 1, got {n_max}")
    return FockBasis(FockConfig(N=N, n_max=n_max))


def basis_size(N: int, n_max: int, n_tls: int = 1) -> int:
    """2^n_tls * sum_k C(N+k-1, k): the closed-form dimension."""
    return (1 << n_tls) * sum(math.comb(N + k - 1, k) for k in range(n_max + 1))


def apply_bin_annihilate(ket: Ket, mode: int) -> Ket:
    return Ket(ket.basis, ket.basis.bin_annihilate_map(mode).apply(ket.psi))


def apply_bin_create(ket: Ket, mode: int) -> tuple[Ket, float]:
    """Returns (B_mode^dag |ket>, truncated weight dropped at the cutoff)."""
    basis = ket.basis
    out = basis.bin_create_map(mode).apply(ket.psi)
    w = basis.overflow_weights(mode)
    dropped = float(np.sum(w * np.abs(ket.psi) ** 2))
    return Ket(basis, out), dropped


def apply_sigma(ket: Ket, which: str, emitter: int = 0) -> Ket:
    return Ket(ket.basis, ket.basis.sigma_map(which, emitter).apply(ket.psi))


def shift_bins(ket: Ket, phase: complex = 1.0, tol: float = 1e-12) -> Ket:
    """Advance the conveyor: every photon moves bin n -> n-1 and acquires
    the unit phase factor (exp(-i*delta*dt) in the stepping loop) once per
    photon; bin N-1 is refilled with vacuum implicitly.  Requires bin 0
    (per copy) to be empty."""
    basis = ket.basis
    m = basis.shift_map()
    covered = np.zeros(basis.dim, dtype=bool)
    covered[m.src] = True
    residual = float(np.sum(np.abs(ket.psi[~covered]) ** 2))
    if residual > tol:
        raise ShiftContractError(
            f"shift_bins called with bin 0 occupied: residual weight {residual:.3e}"
        )
    out = np.zeros(basis.dim, dtype=complex)
    phases = np.asarray(phase, dtype=complex) ** basis.total_photons[m.src]
    out[m.dst] = ket.psi[m.src] * phases
    return Ket(basis, out)


def expectation(ket: Ket, op) -> complex:
    """<psi| op |psi> for a LinearMap, sparse matrix, or dense array."""
    if isinstance(op, LinearMap):
        return complex(np.vdot(ket.psi, op.apply(ket.psi)))
    return complex(np.vdot(ket.psi, op @ ket.psi))
