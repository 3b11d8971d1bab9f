"""Radiative decay of one shared excitation.

With at most one excitation the master equation closes on the vacuum plus
the N single-excitation states. The coherence block ``rho[i, j] =
<i|rho|j>`` then obeys

    d rho / dt = -(M rho + rho M^dagger) / 2,    M = Gamma - i G,

and the vacuum picks up whatever trace the block loses.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import integrate, linalg

from .emission import EmissionConfig, dipole_pattern
from .errors import ConvergenceFailure, InvalidArgument
from .geometry import AtomGeometry
from .grid import AngularGrid


@dataclass(frozen=True)
class DecayKernel:
    """Pairwise decay rates ``gamma_ij`` and dipole-dipole shifts ``g_ij``."""

    gamma_ij: np.ndarray
    g_ij: np.ndarray
    form: str = "scalar"

    @property
    def n_atoms(self) -> int:
        return self.gamma_ij.shape[0]

    @property
    def generator(self) -> np.ndarray:
        return self.gamma_ij - 1j * self.g_ij


@dataclass
class SingleExcitationState:
    """Coherence block of the single-excitation sector plus vacuum population."""

    coherences: np.ndarray
    vacuum_pop: float = 0.0

    @classmethod
    def spin_wave(cls, geom: AtomGeometry, k0) -> "SingleExcitationState":
        """The pure state ``sum_j exp(-i k0.r_j) |j> / sqrt(N)``."""
        v = np.exp(-1j * geom.positions @ _momentum(k0)) / np.sqrt(geom.n_atoms)
        return cls(np.outer(v, v.conj()), 0.0)

    def population(self) -> float:
        return float(np.trace(self.coherences).real)

    def check(self, tol: float = 1e-10):
        rho = self.coherences
        if abs(self.population() + self.vacuum_pop - 1.0) > tol:
            raise InvalidArgument("trace of coherences plus vacuum population must be 1")
        if np.max(np.abs(rho - rho.conj().T)) > tol:
            raise InvalidArgument("coherence block must be Hermitian")
        if np.linalg.eigvalsh(rho).min() < -tol:
            raise InvalidArgument("coherence block must be positive semidefinite")


def _momentum(k0) -> np.ndarray:
    return np.broadcast_to(np.asarray(k0, float), 3)


def _sinc(x):
    return np.sinc(np.asarray(x) / np.pi)


def gamma_kernel(geom: AtomGeometry, cfg: EmissionConfig, form: str = "scalar",
                 with_shift: bool = False) -> DecayKernel:
    """Pairwise decay kernel of atoms coupled to the free radiation field.

    ``scalar`` gives ``Gamma sinc(k r_ij)``: the mode sum with the dipole
    factor dropped. ``vector`` is the usual kernel of parallel point dipoles
    oriented along ``cfg.n_eg``, including near-field terms; only then can
    ``with_shift`` fill in the dipole-dipole shifts ``g_ij``.
    """
    gam = cfg.gamma
    n = geom.n_atoms
    r = geom.pair_distances()
    off = ~np.eye(n, dtype=bool)
    if form == "scalar":
        gamma_ij = gam * _sinc(cfg.k * r)
        np.fill_diagonal(gamma_ij, gam)
        return DecayKernel(gamma_ij, np.zeros((n, n)), "scalar")
    if form != "vector":
        raise InvalidArgument(f"unknown kernel form {form!r}")
    if np.any(r[off] <= 0):
        raise InvalidArgument("coincident atoms: the vector kernel is singular")
    diff = geom.positions[:, None, :] - geom.positions[None, :, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        cos2 = (diff @ cfg.n_eg) ** 2 / r**2
        x = cfg.k * r
        s, c = np.sin(x), np.cos(x)
        gamma_ij = 1.5 * gam * ((1 - cos2) * s / x + (1 - 3 * cos2) * (c / x**2 - s / x**3))
        shift = -1.5 * gam * ((1 - cos2) * c / x - (1 - 3 * cos2) * (s / x**2 + c / x**3))
    np.fill_diagonal(gamma_ij, gam)
    np.fill_diagonal(shift, 0.0)
    g_ij = shift if with_shift else np.zeros((n, n))
    return DecayKernel(gamma_ij, g_ij, "vector")


def collective_rate(kernel: DecayKernel, k0, geom: AtomGeometry) -> float:
    """Decay rate of the spin wave with momentum ``k0``.

    ``(1/N) sum_ij Gamma_ij exp(i k0.(r_i - r_j))``. On translation-invariant
    arrangements this equals the single-index sum ``sum_j Gamma_ij ...``.
    """
    if kernel.n_atoms != geom.n_atoms:
        raise InvalidArgument("kernel and geometry sizes differ")
    v = np.exp(1j * geom.positions @ _momentum(k0))
    val = v @ kernel.gamma_ij @ v.conj() / geom.n_atoms
    if abs(val.imag) > 1e-10 * max(1.0, abs(val.real)):
        raise InvalidArgument("collective rate came out complex; kernel not symmetric?")
    return float(val.real)


def evolve_closed(gamma_k0: float, t):
    """Populations ``(p_k0, p_vacuum)`` of the two-state decay at time ``t``."""
    t = np.asarray(t, float)
    if np.any(t < 0):
        raise InvalidArgument("time must be >= 0")
    p = np.exp(-gamma_k0 * t)
    return p, 1.0 - p


def master_solve(kernel: DecayKernel, initial: SingleExcitationState, t_grid,
                 method: str = "expm", rtol: float = 1e-10, atol: float = 1e-12):
    """Trajectory of the single-excitation sector on ``t_grid``.

    ``method="expm"`` propagates exactly with ``exp(-M t / 2)``. ``"ode"``
    integrates the same equation with an adaptive Runge-Kutta scheme and
    serves as a cross-check.
    """
    initial.check()
    t_grid = np.asarray(t_grid, float)
    if t_grid[0] != 0 or np.any(np.diff(t_grid) < 0):
        raise InvalidArgument("t_grid must start at 0 and be ascending")
    rho0 = initial.coherences
    total = initial.population() + initial.vacuum_pop
    m = kernel.generator
    out = []
    if method == "expm":
        for t in t_grid:
            u = linalg.expm(-0.5 * m * t)
            rho = u @ rho0 @ u.conj().T
            rho = 0.5 * (rho + rho.conj().T)
            out.append(SingleExcitationState(rho, total - float(np.trace(rho).real)))
        return out
    if method != "ode":
        raise InvalidArgument(f"unknown method {method!r}")
    n = kernel.n_atoms

    def rhs(_, y):
        rho = y.reshape(n, n)
        return (-0.5 * (m @ rho + rho @ m.conj().T)).ravel()

    sol = integrate.solve_ivp(rhs, (0.0, t_grid[-1]), rho0.astype(complex).ravel(),
                              t_eval=t_grid, method="DOP853", rtol=rtol, atol=atol)
    if not sol.success:
        raise ConvergenceFailure(f"master equation integration failed: {sol.message}")
    for y in sol.y.T:
        rho = y.reshape(n, n)
        rho = 0.5 * (rho + rho.conj().T)
        out.append(SingleExcitationState(rho, total - float(np.trace(rho).real)))
    return out


def subspace_report(trajectory, geom: AtomGeometry, k0):
    """Population of ``|k0>`` and the Frobenius norm of everything else.

    Returns arrays ``(p_k0, p_vacuum, leakage)`` along the trajectory.
    """
    v = np.exp(-1j * geom.positions @ _momentum(k0)) / np.sqrt(geom.n_atoms)
    proj = np.outer(v, v.conj())
    p_k0, p_vac, leak = [], [], []
    for st in trajectory:
        p = float((v.conj() @ st.coherences @ v).real)
        p_k0.append(p)
        p_vac.append(st.vacuum_pop)
        leak.append(float(np.linalg.norm(st.coherences - p * proj)))
    return np.array(p_k0), np.array(p_vac), np.array(leak)


def two_time_correlator(gamma_k0: float, k0, geom: AtomGeometry, tau1: float,
                        tau2: float) -> np.ndarray:
    """``<sigma_i^dag(tau1) sigma_j(tau2)>`` for a decaying spin wave."""
    if tau1 < 0 or tau2 < 0:
        raise InvalidArgument("times must be >= 0")
    ph = np.exp(1j * geom.positions @ _momentum(k0))
    return np.exp(-gamma_k0 * (tau1 + tau2) / 2) * np.outer(ph, ph.conj()) / geom.n_atoms


def regression_correlator(kernel: DecayKernel, initial: SingleExcitationState,
                          tau1: float, tau2: float) -> np.ndarray:
    """Same correlator from the master equation and the quantum regression theorem.

    For ``tau1 >= tau2``, ``sigma_j rho(tau2)`` is a vacuum/single-excitation
    coherence whose single-excitation side evolves with ``exp(-M^dag t / 2)``.
    """
    if tau1 < tau2:
        return regression_correlator(kernel, initial, tau2, tau1).conj().T
    m = kernel.generator
    rho2 = master_solve(kernel, initial, [0.0, tau2])[-1].coherences
    prop = linalg.expm(-0.5 * m.conj().T * (tau1 - tau2))
    return (rho2 @ prop).T


def photon_distribution_numeric(kernel: DecayKernel, cfg: EmissionConfig, k0,
                                geom: AtomGeometry, grid: AngularGrid,
                                correlator: str = "closed",
                                initial: SingleExcitationState | None = None) -> np.ndarray:
    """Angular photon distribution from the one-photon density matrix.

    The double time integral of the correlator against
    ``exp(-i delta (tau1 - tau2))`` is integrated numerically over the
    detuning ``delta`` (narrow band: phases use ``|k| = k_L``). With
    ``correlator="closed"`` the spin-wave correlator is used; with
    ``"master"`` the time integral ``int rho(t) dt`` comes from a Lyapunov
    solve with the full kernel, so boundary effects are kept.

    Returns the intensity per node normalised to unit total probability.
    """
    k0 = _momentum(k0)
    if correlator == "closed":
        g_k0 = collective_rate(kernel, k0, geom)
        # int d delta int int dtau1 dtau2 e^{-i delta (t1 - t2)} e^{-g (t1 + t2)/2}
        spectral, _ = integrate.quad(lambda d: 1.0 / (d**2 + g_k0**2 / 4), -np.inf, np.inf,
                                     epsabs=0, epsrel=1e-13, limit=200)
        ph = np.exp(1j * geom.positions @ k0)
        weight = spectral * np.outer(ph, ph.conj()) / geom.n_atoms
    elif correlator == "master":
        st = initial if initial is not None else SingleExcitationState.spin_wave(geom, k0)
        m = kernel.generator
        # int_0^inf rho(t) dt solves (M/2) X + X (M^dag/2) = rho(0)
        x = linalg.solve_continuous_lyapunov(0.5 * m, st.coherences)
        weight = 2 * np.pi * x.T
    else:
        raise InvalidArgument(f"unknown correlator {correlator!r}")
    q = cfg.transfer(grid.nodes)
    e = np.exp(-1j * q @ geom.positions.T)
    # sum_ij e^{-i q (r_i - r_j)} W_ij
    interference = np.einsum("mi,ij,mj->m", e, weight, e.conj()).real
    intensity = (1.0 - (grid.nodes @ cfg.n_eg) ** 2) * interference
    return intensity / grid.integrate(intensity)


def intensity_closed_form(cfg: EmissionConfig, gamma_k0: float, f_total, grid) -> np.ndarray:
    """Dipole factor times interference pattern, normalised like the numeric route."""
    i = dipole_pattern(cfg, gamma_k0, grid) * f_total
    return i / grid.integrate(i)
