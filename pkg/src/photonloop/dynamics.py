"""Reference trajectory stepper (pure python + scipy).

This is the readable twin of the compiled kernel: identical draw order (one
uniform for the jump partition, one for the outgoing-bin measurement, both
consumed every step), identical operation order (jump, sub-stepped coherent
propagation, cutoff tally, normalise, measure, shift).  Floating-point
summation order differs from the kernel (scipy/numpy reductions), so states
agree to rounding noise rather than bit-for-bit; the tests assert agreement
of every sampled decision and of amplitudes to ~1e-10.

Use it for unit tests, audits and debugging; ensembles go through the kernel.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .engine import Engine
from .kernels import pack_kernel_args
from .rng import Pcg32


@dataclass(frozen=True)
class DetectionRecord:
    """One detector click: which trajectory, when, which detector, how many."""

    traj_id: int
    time: float
    label: int
    multiplicity: int


@dataclass
class StepOutcome:
    """Per-step audit record from the reference path."""

    jump_channel: int | None
    jump_probs: np.ndarray
    measured_class: int | None
    class_probs: np.ndarray | None
    closure: float


@dataclass
class TrajectoryResult:
    traj_id: int
    events: list[DetectionRecord]
    population: np.ndarray  # emitter excited-state population, n_steps+1 samples
    truncation_weight: float
    closure_dev: float
    norm_dev: float
    pjump_max: float
    psi: np.ndarray
    outcomes: list[StepOutcome] = field(default_factory=list)


class ReferenceStepper:
    """Step-by-step evolution of one trajectory on a prepared Engine."""

    def __init__(self, engine: Engine):
        self.engine = engine
        self.args = pack_kernel_args(engine)
        self.dt = engine.params.dt
        self.n_steps = engine.params.n_steps
        self.dim = engine.dim
        self._h0 = engine.h0
        self._hd = engine.hd
        self._ch_ops = [ch.op for ch in engine.channels]
        self._ch_diag = [ch.diag for ch in engine.channels]
        self._ch_label = [ch.label for ch in engine.channels]
        self._popw = self.args["popw"]
        self._trunc_w = engine.trunc_weights
        self._shift_src = engine.shift_src
        self._shift_dst = engine.shift_dst
        self._shift_phase = self.args["shift_phase"]

    def initial_state(self) -> np.ndarray:
        psi = np.zeros(self.dim, dtype=complex)
        psi[self.engine.init_index] = 1.0
        return psi

    def jump_probabilities(self, psi: np.ndarray) -> np.ndarray:
        """Channel jump probabilities dt*<C^dag C> for the current state."""
        p = np.empty(len(self._ch_ops))
        absq = psi.real**2 + psi.imag**2
        for k, op in enumerate(self._ch_ops):
            d = self._ch_diag[k]
            if d is not None:
                p[k] = float(d @ absq) * self.dt
            else:
                v = op @ psi
                p[k] = float(np.vdot(v, v).real) * self.dt
        return p

    def maybe_jump(self, psi: np.ndarray, u: float):
        """Partition one uniform across the channels; apply the winner if any.

        Returns (psi, fired_channel_or_None, probabilities).
        """
        probs = self.jump_probabilities(psi)
        acc = 0.0
        fired = None
        for k, pk in enumerate(probs):
            acc += pk
            if fired is None and u < acc:
                fired = k
        if fired is None:
            return psi, None, probs
        v = self._ch_ops[fired] @ psi
        nrm = np.linalg.norm(v)
        if nrm <= 0.0:
            raise FloatingPointError("jump applied to a state with zero weight")
        return v / nrm, fired, probs

    def coherent_step(self, psi: np.ndarray, step: int) -> np.ndarray:
        """Sub-stepped second-order no-jump propagation across one bin step.

        Returns the unnormalised propagated state (norm decay carries the
        no-event record information).
        """
        nsub = int(self.args["nsub"][step])
        off = int(self.args["om_off"][step])
        h = self.dt / nsub
        for sub in range(nsub):
            om = self.args["om_vals"][off + sub]
            w1 = self._h0 @ psi
            if om != 0.0:
                w1 = w1 + om * (self._hd @ psi)
            w3 = self._h0 @ w1
            if om != 0.0:
                w3 = w3 + om * (self._hd @ w1)
            psi = psi - 1j * h * w1 - 0.5 * h * h * w3
        return psi

    def measure_output_bin(self, psi: np.ndarray, u: float):
        """Projectively measure the outgoing bin(s) in the detector basis.

        Expects a normalised state.  Returns (collapsed_state, class_index,
        class_probabilities); classes follow the engine's Measurement table.
        """
        meas = self.engine.measurement
        if meas is None:
            return psi, None, None
        C = meas.n_classes
        tmp = np.zeros((self.dim, C), dtype=complex)
        tmp[meas.rest_of, meas.class_of] = psi
        rotated = tmp @ meas.rotation.T
        probs = np.einsum("rc,rc->c", rotated.real, rotated.real) + np.einsum(
            "rc,rc->c", rotated.imag, rotated.imag
        )
        acc = 0.0
        sel = -1
        for m in range(C):
            acc += probs[m]
            if sel < 0 and u < acc:
                sel = m
        if sel < 0:
            nz = np.nonzero(probs > 0.0)[0]
            sel = int(nz[-1])
        out = rotated[:, sel] / np.sqrt(probs[sel])
        return out, sel, probs

    def shift(self, psi: np.ndarray) -> np.ndarray:
        """Advance the bin conveyor by one slot (detuning phase included)."""
        out = np.zeros_like(psi)
        out[self._shift_dst] = psi[self._shift_src] * self._shift_phase
        return out

    def population(self, psi: np.ndarray) -> float:
        absq = psi.real**2 + psi.imag**2
        return float(self._popw @ absq)

    def run_trajectory(
        self,
        traj_id: int,
        master_seed: int,
        keep_outcomes: bool = False,
        n_pulses: int = 1,
    ) -> TrajectoryResult:
        """Evolve one full window (or several back-to-back pulse periods).

        With n_pulses > 1 the same drive schedule repeats every period and the
        state carries over, which is the literal concatenated-pulse protocol
        (used to cross-check that single-pulse concatenation is equivalent).
        """
        if n_pulses < 1:
            raise ValueError("n_pulses must be >= 1")
        rng = Pcg32(master_seed, traj_id)
        eng = self.engine
        meas = eng.measurement
        psi = self.initial_state()
        events: list[DetectionRecord] = []
        pop = np.empty(n_pulses * self.n_steps + 1)
        pop[0] = self.population(psi)
        trunc = 0.0
        cdev = 0.0
        ndev = 0.0
        pjm = 0.0
        outcomes: list[StepOutcome] = []

        for gstep in range(n_pulses * self.n_steps):
            step = gstep % self.n_steps
            t_end = self.dt * (gstep + 1.0)
            u = rng.uniform()
            psi, fired, probs = self.maybe_jump(psi, u)
            p_total = float(probs.sum())
            pjm = max(pjm, p_total)
            if fired is not None and self._ch_label[fired] >= 0:
                events.append(DetectionRecord(traj_id, t_end, self._ch_label[fired], 1))

            psi = self.coherent_step(psi, step)
            absq = psi.real**2 + psi.imag**2
            trunc += float(self._trunc_w @ absq) * self.dt * self.dt
            nrm2 = float(absq.sum())
            if nrm2 <= 0.0:
                raise FloatingPointError("state norm collapsed")
            psi = psi / np.sqrt(nrm2)

            u2 = rng.uniform()
            sel = None
            cprobs = None
            if meas is not None:
                psi, sel, cprobs = self.measure_output_bin(psi, u2)
                closure = p_total + (1.0 - p_total) * float(cprobs.sum())
                ca, cb = int(meas.clicks[sel, 0]), int(meas.clicks[sel, 1])
                if ca > 0:
                    events.append(DetectionRecord(traj_id, t_end, meas.labels[0], ca))
                if cb > 0:
                    events.append(DetectionRecord(traj_id, t_end, meas.labels[1], cb))
            else:
                closure = 1.0
            cdev = max(cdev, abs(closure - 1.0))

            psi = self.shift(psi)
            ndev = max(ndev, abs(float(np.vdot(psi, psi).real) - 1.0))
            pop[gstep + 1] = self.population(psi)
            if keep_outcomes:
                outcomes.append(StepOutcome(fired, probs, sel, cprobs, closure))

        return TrajectoryResult(
            traj_id=traj_id,
            events=events,
            population=pop,
            truncation_weight=trunc,
            closure_dev=cdev,
            norm_dev=ndev,
            pjump_max=pjm,
            psi=psi,
            outcomes=outcomes,
        )


def run_trajectory(
    engine: Engine,
    traj_id: int,
    master_seed: int,
    keep_outcomes: bool = False,
    n_pulses: int = 1,
) -> TrajectoryResult:
    """Evolve a single trajectory with the reference stepper."""
    return ReferenceStepper(engine).run_trajectory(
        traj_id, master_seed, keep_outcomes, n_pulses
    )
