"""Markovian reference solutions for the emitter without the feedback loop.

A 2x2 Lindblad master equation (waveguide emission at rate gamma, off-chip
loss gamma0, pure dephasing gamma_prime, detuning delta, Gaussian drive) is
solved to high accuracy, and two-time correlators are propagated with the
regression recipe.  From these the module computes the quantities the
trajectory interferometers estimate:

    mu    = gamma * Int n(t) dt                  (mean collected photons/pulse)
    g2(0) = 2 gamma^2 II_{t''>t} G2(t,t'') / mu^2

with G2(t,t'') = <s+(t) s+(t'') s-(t'') s-(t)>, the standard pulsed-source
second-order coherence; and for two identical independent copies interfering
on a 50:50 splitter, the start/stop coincidence peak areas

    A0 = gamma^2 II_{t''>t} [ G2 + n(t) n(t'') - |g|^2 - |w|^2 ] dt dt''
    AT = mu^2 - varsigma^2

where g(t,t'') = <s+(t'') s-(t)>, w(t,t'') = <s-(t'') s-(t)>, and
varsigma = gamma * Int |<s->(t)|^2 dt accounts for the transient coherent
amplitude imprinted by the drive (the odd-moment terms cancel between the two
detector orderings).  qrt_indistinguishability returns 1 - A0/AT — the value
the histogram estimator converges to.

That estimator differs from the single-photon wavepacket overlap

    wavepacket_overlap = II |g|^2 / II n(t) n(t'')

(for pure single-photon wavepackets 1 - A0/AT ~= (1 + overlap)/2): a fully
dephased source still bunches half the time, so the estimator floors at 1/2
while the overlap goes to 0.  Both are exposed.

Note the dephasing normalization: the jump operator is sqrt(gamma') s+s-, so
the dipole coherence decays at gamma_t/2 + gamma'/2 and the instantaneous-
pulse overlap is gamma_t/(gamma_t + gamma').  Conventions that write the
dephasing Lindblad operator as sqrt(2 gamma') s+s- would give the familiar
gamma_t/(gamma_t + 2 gamma') instead; the operator here is the one whose jump
probability per step is gamma' dt, matching the trajectory engine.

Everything here ignores feedback by construction: with feedback the regression
recipe is invalid, which is the reason the trajectory interferometers exist.
While the drive is on, the full propagator of the master equation is
integrated once with a high-order adaptive scheme; past the drive the
Liouvillian is constant and is applied through its eigendecomposition, so the
long emission tail costs nothing and carries no step error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from .params import SystemParams, pulse_amplitude

SIGMA_M = np.array([[0.0, 1.0], [0.0, 0.0]], dtype=complex)  # |g><e|, basis (g, e)
SIGMA_P = SIGMA_M.T.conj()
PROJ_E = np.array([[0.0, 0.0], [0.0, 1.0]], dtype=complex)
EYE2 = np.eye(2, dtype=complex)


class ConvergenceError(RuntimeError):
    """Raised when halving the integration grids moves the result by > 1%."""


def _dissipator_superop(c: np.ndarray) -> np.ndarray:
    cd_c = c.conj().T @ c
    return (
        np.kron(c, c.conj())
        - 0.5 * np.kron(cd_c, EYE2)
        - 0.5 * np.kron(EYE2, cd_c.T)
    )


def _hamiltonian_superop(h: np.ndarray) -> np.ndarray:
    return -1j * (np.kron(h, EYE2) - np.kron(EYE2, h.T))


def _liouvillians(p: SystemParams):
    """(L0, Ld): constant part and the drive part to be scaled by Omega(t)."""
    l0 = _hamiltonian_superop(p.delta * PROJ_E)
    l0 = l0 + _dissipator_superop(math.sqrt(p.gamma) * SIGMA_M)
    if p.gamma0 > 0:
        l0 = l0 + _dissipator_superop(math.sqrt(p.gamma0) * SIGMA_M)
    if p.gamma_prime > 0:
        l0 = l0 + _dissipator_superop(math.sqrt(p.gamma_prime) * PROJ_E)
    ld = _hamiltonian_superop(0.5 * (SIGMA_P + SIGMA_M))
    return l0, ld


def _solve_propagator(p, omega, t_eval: np.ndarray, l0, ld, max_step: float):
    """Propagator P(t) of dX/dt = L(t) X with P(0) = 1, on t_eval points.

    Returns an array of shape (len(t_eval), 4, 4) acting on row-major
    vectorized 2x2 operators.
    """

    def rhs(t, y):
        pm = y.view(complex).reshape(4, 4)
        return ((l0 + omega(t) * ld) @ pm).reshape(-1).view(float)

    y0 = np.eye(4, dtype=complex).reshape(-1).view(float)
    sol = solve_ivp(
        rhs,
        (0.0, float(t_eval[-1])),
        y0,
        t_eval=t_eval,
        method="DOP853",
        rtol=1e-10,
        atol=1e-12,
        max_step=max_step,
    )
    if not sol.success:
        raise RuntimeError(f"master-equation solve failed: {sol.message}")
    return sol.y.T.copy().view(complex).reshape(len(t_eval), 4, 4)


@dataclass
class _Eig:
    vals: np.ndarray  # (4,)
    vecs: np.ndarray  # (4, 4)
    inv: np.ndarray  # (4, 4)

    def series_vec(self, a: np.ndarray, v: np.ndarray) -> np.ndarray:
        """c_k with Tr[a . unvec(exp(L0 dt) v)] = sum_k c_k exp(lambda_k dt)."""
        return (a.T.reshape(4) @ self.vecs) * (self.inv @ v)

    def propagate(self, v: np.ndarray, dts: np.ndarray) -> np.ndarray:
        """exp(L0 dt) v for each dt; returns (len(dts), 4)."""
        coef = self.inv @ v
        return (self.vecs @ (coef[:, None] * np.exp(np.outer(self.vals, dts)))).T


def _eig(l0: np.ndarray) -> _Eig:
    vals, vecs = np.linalg.eig(l0)
    return _Eig(vals=vals, vecs=vecs, inv=np.linalg.inv(vecs))


def _drive_window(p: SystemParams, omega, pulse_end):
    if omega is None:
        return (lambda t: pulse_amplitude(t, p.pulse)), p.pulse.envelope_end(10.0)
    if pulse_end is None:
        raise ValueError("pulse_end is required with a custom drive")
    return omega, float(pulse_end)


def lindblad_solve(params: SystemParams, t_grid, omega=None, pulse_end: float | None = None):
    """Density matrices rho(t) on t_grid, starting from the ground state at t=0.

    Basis ordering is (ground, excited): rho[..., 1, 1] is the excited
    population.  Past the end of the drive the constant Liouvillian is applied
    exactly (eigenbasis), before that an adaptive high-order solver is used.
    """
    p = params
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.ndim != 1 or len(t_grid) == 0:
        raise ValueError("t_grid must be a non-empty 1-D array")
    if np.any(t_grid < 0) or np.any(np.diff(t_grid) < 0):
        raise ValueError("t_grid must be non-negative and sorted")
    om, t_e = _drive_window(p, omega, pulse_end)
    l0, ld = _liouvillians(p)
    rho0 = np.array([1.0, 0.0, 0.0, 0.0], dtype=complex)  # vec(|g><g|)
    max_step = max(p.pulse.sigma / 4.0, 1e-6)

    n_early = int(np.searchsorted(t_grid, t_e, side="right"))
    late = t_grid[n_early:]
    out = np.empty((len(t_grid), 4), dtype=complex)
    eval_early = t_grid[:n_early]
    if len(late) and (n_early == 0 or eval_early[-1] < t_e):
        eval_early = np.append(eval_early, t_e)
    mask0 = eval_early > 0.0
    if mask0.any():
        prop = _solve_propagator(p, om, eval_early[mask0], l0, ld, max_step)
        vals = prop @ rho0
    else:
        vals = np.zeros((0, 4), dtype=complex)
    rho_early = np.empty((len(eval_early), 4), dtype=complex)
    rho_early[~mask0] = rho0
    rho_early[mask0] = vals
    out[:n_early] = rho_early[:n_early]
    if len(late):
        eig = _eig(l0)
        out[n_early:] = eig.propagate(rho_early[-1], late - t_e)
    return out.reshape(len(t_grid), 2, 2)


def smalldelay_feedback_rate(gamma: float, phi: float) -> float:
    """Effective emission rate gamma (1 + cos phi) of the short-loop limit."""
    return gamma * (1.0 + math.cos(phi))


def _grids(p: SystemParams, refine: int, t_e: float):
    """(pulse_grid, delta_template): absolute times covering the drive window
    and relative offsets covering the free-decay tail on two scales (the fast
    scale resolves dephasing/detuning transients, the slow one the gamma_t
    emission envelope)."""
    sigma = p.pulse.sigma
    h_pulse = sigma / (6.0 * refine)
    n_pulse = max(2, int(math.ceil(t_e / h_pulse)))
    pulse_grid = np.linspace(0.0, t_e, n_pulse + 1)

    gamma_t = p.gamma + p.gamma0
    fast = gamma_t + p.gamma_prime + abs(p.delta)
    h1 = 0.04 / (fast * refine)
    end1 = 12.0 / fast
    seg1 = h1 * np.arange(1, int(math.ceil(end1 / h1)) + 1)
    end2 = 40.0 / gamma_t
    if seg1[-1] < end2:
        h2 = 0.04 / (gamma_t * refine)
        n2 = int(math.ceil((end2 - seg1[-1]) / h2))
        seg2 = seg1[-1] + (end2 - seg1[-1]) * np.arange(1, n2 + 1) / n2
        template = np.concatenate([seg1, seg2])
    else:
        template = seg1
    return pulse_grid, template


def _qrt_integrals(p: SystemParams, refine: int, omega=None, pulse_end: float | None = None):
    """Half-plane (t'' > t) integrals of G2, n n'', |g|^2, |w|^2 and the
    single-time integrals n1 = Int n dt, s2 = Int |s|^2 dt."""
    om, t_e = _drive_window(p, omega, pulse_end)
    l0, ld = _liouvillians(p)
    eig = _eig(l0)
    pulse_grid, template = _grids(p, refine, t_e)
    decay_grid = t_e + template
    grid = np.concatenate([pulse_grid, decay_grid])
    npu = len(pulse_grid)

    max_step = max(p.pulse.sigma / 4.0, 1e-6)
    prop = np.empty((npu, 4, 4), dtype=complex)
    prop[0] = np.eye(4)
    prop[1:] = _solve_propagator(p, om, pulse_grid[1:], l0, ld, max_step)
    prop_inv = np.linalg.inv(prop)

    rho0 = np.array([1.0, 0.0, 0.0, 0.0], dtype=complex)
    rho_pulse = prop @ rho0  # (npu, 4) row-major vecs
    rho_decay = eig.propagate(rho_pulse[-1], template)
    rho_vec = np.concatenate([rho_pulse, rho_decay])
    n_all = rho_vec[:, 3].real
    s_all = rho_vec[:, 2]  # <sigma^-> = rho_eg = rho[1,0] -> vec index 2

    # seeds, as vectorized operators: s1 = sm rho sp, s2 = sm rho
    # row-major vec: (sm X sp) = kron(sm, sm.conj) vec; (sm X) = kron(sm, I)
    k1 = np.kron(SIGMA_M, SIGMA_M.conj())
    k2 = np.kron(SIGMA_M, EYE2)
    seed1 = rho_vec @ k1.T
    seed2 = rho_vec @ k2.T

    # Tr[A unvec(v)] = vec(A^T) . v
    a_e = PROJ_E.T.reshape(4)
    a_p = SIGMA_P.T.reshape(4)
    a_m = SIGMA_M.T.reshape(4)

    # pulse-region two-time blocks via the propagator: value(x, y) = wA(y) . m(x)
    w_e = np.einsum("i,tij->tj", a_e, prop)
    w_p = np.einsum("i,tij->tj", a_p, prop)
    w_m = np.einsum("i,tij->tj", a_m, prop)
    m1 = np.einsum("tij,tj->ti", prop_inv, seed1[:npu])
    m2 = np.einsum("tij,tj->ti", prop_inv, seed2[:npu])

    # exp(lambda_k Delta) on the shared tail template
    ex = np.exp(np.outer(eig.vals, template))  # (4, K)

    inner_g2 = np.empty(len(grid))
    inner_nn = np.empty(len(grid))
    inner_gg = np.empty(len(grid))
    inner_ww = np.empty(len(grid))

    for i in range(len(grid)):
        if i < npu:
            # inner points: rest of the pulse grid, then t_e + template
            s1_e = prop[-1] @ m1[i]
            s2_e = prop[-1] @ m2[i]
            row_g2 = np.concatenate(
                [(w_e[i:] @ m1[i]).real, (eig.series_vec(PROJ_E, s1_e) @ ex).real]
            )
            row_g = np.concatenate([w_p[i:] @ m2[i], eig.series_vec(SIGMA_P, s2_e) @ ex])
            row_w = np.concatenate([w_m[i:] @ m2[i], eig.series_vec(SIGMA_M, s2_e) @ ex])
            row_n = np.concatenate([n_all[i:npu], (eig.series_vec(PROJ_E, rho_pulse[-1]) @ ex).real])
            sub = np.concatenate([pulse_grid[i:], decay_grid])
        else:
            # both times in free decay: offsets follow the shared template
            row_g2 = np.concatenate(
                [[np.real(a_e @ seed1[i])], (eig.series_vec(PROJ_E, seed1[i]) @ ex).real]
            )
            row_g = np.concatenate([[a_p @ seed2[i]], eig.series_vec(SIGMA_P, seed2[i]) @ ex])
            row_w = np.concatenate([[a_m @ seed2[i]], eig.series_vec(SIGMA_M, seed2[i]) @ ex])
            row_n = np.concatenate(
                [[n_all[i]], (eig.series_vec(PROJ_E, rho_vec[i]) @ ex).real]
            )
            sub = grid[i] + np.concatenate([[0.0], template])
        inner_g2[i] = np.trapezoid(row_g2, sub)
        inner_nn[i] = n_all[i] * np.trapezoid(row_n, sub)
        inner_gg[i] = np.trapezoid(np.abs(row_g) ** 2, sub)
        inner_ww[i] = np.trapezoid(np.abs(row_w) ** 2, sub)

    return dict(
        g2=float(np.trapezoid(inner_g2, grid)),
        nn=float(np.trapezoid(inner_nn, grid)),
        gg=float(np.trapezoid(inner_gg, grid)),
        ww=float(np.trapezoid(inner_ww, grid)),
        n1=float(np.trapezoid(n_all, grid)),
        s2=float(np.trapezoid(np.abs(s_all) ** 2, grid)),
    )


def _converged(p, omega, pulse_end, extract):
    v1 = extract(_qrt_integrals(p, 1, omega, pulse_end))
    v2 = extract(_qrt_integrals(p, 2, omega, pulse_end))
    if abs(v2 - v1) > 0.01 * max(abs(v2), 1e-12):
        raise ConvergenceError(
            f"regression integrals not converged: {v1:.6g} -> {v2:.6g} on grid halving"
        )
    return v2


def qrt_g2_zero(params: SystemParams, omega=None, pulse_end: float | None = None) -> float:
    """Pulsed second-order coherence of the no-feedback source."""
    p = params

    def extract(I):
        mu = p.gamma * I["n1"]
        return 2.0 * p.gamma**2 * I["g2"] / mu**2

    return _converged(p, omega, pulse_end, extract)


def qrt_hom_areas(params: SystemParams, omega=None, pulse_end: float | None = None):
    """(A0, AT) per collected pulse pair for the two-source interferometer."""
    p = params
    I = _qrt_integrals(p, 2, omega, pulse_end)
    mu = p.gamma * I["n1"]
    vs = p.gamma * I["s2"]
    a0 = p.gamma**2 * (I["g2"] + I["nn"] - I["gg"] - I["ww"])
    return a0, mu**2 - vs**2


def qrt_indistinguishability(params: SystemParams, omega=None, pulse_end: float | None = None) -> float:
    """1 - A0/AT: the value the two-source histogram estimator converges to."""
    p = params

    def extract(I):
        mu = p.gamma * I["n1"]
        vs = p.gamma * I["s2"]
        a0 = p.gamma**2 * (I["g2"] + I["nn"] - I["gg"] - I["ww"])
        return 1.0 - a0 / (mu**2 - vs**2)

    return _converged(p, omega, pulse_end, extract)


def wavepacket_overlap(params: SystemParams, omega=None, pulse_end: float | None = None) -> float:
    """Mean two-photon wavefunction overlap II |g|^2 / II n n''.

    For an instantaneous pulse this has the closed form
    gamma_t/(gamma_t + gamma') under the sqrt(gamma') s+s- dephasing operator
    used throughout; see the module docstring for how it relates to the
    histogram estimator.
    """

    def extract(I):
        return I["gg"] / I["nn"]

    return _converged(params, omega, pulse_end, extract)


def oracle_report(params: SystemParams) -> dict:
    """All reference values as a plain dict (CLI JSON output)."""
    p = params
    I = _qrt_integrals(p, 2)
    mu = p.gamma * I["n1"]
    vs = p.gamma * I["s2"]
    a0 = p.gamma**2 * (I["g2"] + I["nn"] - I["gg"] - I["ww"])
    at = mu**2 - vs**2
    return {
        "g2": 2.0 * p.gamma**2 * I["g2"] / mu**2,
        "indistinguishability": 1.0 - a0 / at,
        "wavepacket_overlap": I["gg"] / I["nn"],
        "mean_photons": mu,
        "hom_A0": a0,
        "hom_AT": at,
        "smalldelay_rate_at_phi": smalldelay_feedback_rate(p.gamma, p.phi),
    }
