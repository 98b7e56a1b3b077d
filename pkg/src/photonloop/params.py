"""Physical parameters for the emitter + feedback-loop system and the pump pulse.

Times are carried in units of 1/gamma whenever gamma=1 (the default); nothing
below assumes that, all stability checks are expressed through dimensionless
products like gamma*dt.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

# FWHM -> Gaussian sigma conversion factor, 2*sqrt(2 ln 2)
_FWHM = 2.0 * math.sqrt(2.0 * math.log(2.0))


@dataclass
class PulseParams:
    """Gaussian pump pulse Omega(t) = (area/(sigma sqrt(2 pi))) exp(-(t-t0)^2/2 sigma^2).

    t_p is the intensity FWHM; the default center t0 = 6 sigma keeps the
    turn-on tail below ~1e-8 of the peak.
    """

    t_p: float
    area: float = math.pi
    t0: float | None = None

    def __post_init__(self):
        if self.t_p <= 0:
            raise ValueError(f"pulse width t_p must be positive, got {self.t_p}")
        if self.area < 0:
            raise ValueError(f"pulse area must be >= 0, got {self.area}")
        if self.t0 is None:
            self.t0 = 6.0 * self.sigma
        if self.t0 < 5.0 * self.sigma:
            raise ValueError(
                f"pulse center t0={self.t0:.4g} clips the turn-on tail; "
                f"need t0 >= 5 sigma = {5 * self.sigma:.4g}"
            )

    @property
    def sigma(self) -> float:
        return self.t_p / _FWHM

    @property
    def peak(self) -> float:
        return self.area / (self.sigma * math.sqrt(2.0 * math.pi))

    def envelope_end(self, n_sigma: float = 8.0) -> float:
        return self.t0 + n_sigma * self.sigma


def pulse_amplitude(t, pulse: PulseParams):
    """Rabi amplitude Omega(t); accepts scalars or arrays."""
    s = pulse.sigma
    return pulse.peak * np.exp(-((np.asarray(t, dtype=float) - pulse.t0) ** 2) / (2 * s * s))


@dataclass
class SystemParams:
    """Emitter rates, the pump pulse, and feedback-loop geometry.

    gamma        waveguide (detected) emission rate
    gamma0       off-chip loss rate, collapse sqrt(gamma0) sigma^-
    gamma_prime  pure dephasing rate, collapse sqrt(gamma') sigma^+ sigma^-
    delta        emitter-laser detuning
    tau, N       loop round-trip delay and its time-bin discretization (dt = tau/N)
    phi          round-trip feedback phase on the returning-bin coupling
    pulse        Gaussian pump parameters (default: pi pulse, t_p = 0.1/gamma)
    n_max        total photon cutoff of the truncated bin space
    feedback_enabled
                 when False the loop is replaced by a Markovian sigma^- collapse
                 at rate gamma whose jumps are recorded as output detections
    T            pulse period / trajectory window length
    """

    gamma: float = 1.0
    gamma0: float = 0.0
    gamma_prime: float = 0.0
    delta: float = 0.0
    tau: float = 0.1
    N: int = 20
    phi: float = 0.0
    pulse: PulseParams = field(default_factory=lambda: PulseParams(t_p=0.1))
    n_max: int = 2
    feedback_enabled: bool = True
    T: float = 20.0

    def __post_init__(self):
        if self.gamma <= 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")
        for name in ("gamma0", "gamma_prime"):
            v = getattr(self, name)
            if v < 0:
                raise ValueError(f"{name} must be >= 0, got {v}")
        if self.tau <= 0:
            raise ValueError(f"loop delay tau must be positive, got {self.tau}")
        if self.N < 1:
            raise ValueError(f"need at least one time bin, got N={self.N}")
        if self.n_max < 1:
            raise ValueError(f"need photon cutoff n_max >= 1, got {self.n_max}")
        if self.T <= 0:
            raise ValueError(f"pulse period T must be positive, got {self.T}")
        gdt = self.gamma * self.dt
        if gdt > 0.02:
            raise ValueError(
                f"gamma*dt = {gdt:.4g} too coarse for the second-order step; "
                f"need <= 0.02 (increase N or decrease tau)"
            )
        if gdt > 0.01:
            warnings.warn(
                f"gamma*dt = {gdt:.4g} > 0.01: bin discretization error may be visible",
                stacklevel=2,
            )
        if abs(self.T - self.n_steps * self.dt) > 1e-9 * self.T:
            warnings.warn(
                f"period T={self.T} is not a multiple of dt={self.dt:.6g}; "
                f"using T={self.period:.9g}",
                stacklevel=2,
            )

    @property
    def dt(self) -> float:
        return self.tau / self.N

    @property
    def n_steps(self) -> int:
        return max(1, round(self.T / self.dt))

    @property
    def period(self) -> float:
        """The realized window length n_steps * dt (== T up to rounding)."""
        return self.n_steps * self.dt
