"""Angular emission patterns of a single collective excitation.

The pattern ``f(n)`` is proportional to the probability density that the
photon leaves in direction ``n`` when the dipole factor is ignored. It is the
sum of a coherent part, which carries the forward-scattering cone, and an
incoherent, nearly isotropic part that appears whenever positions fluctuate.

Conventions: ``k_L`` is the read-out laser wavevector, ``k0`` the momentum
written into the atomic spin wave, and ``dk = |k_L| n - k_L`` the momentum
transferred to the emitted photon. The coherent peak sits where
``dk = k0``.
"""

from __future__ import annotations

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import optimize

from .errors import InvalidArgument, NoPeakError
from .geometry import AtomGeometry, FluctuationModel, iter_sample_blocks
from .grid import AngularGrid, orthonormal_frame

# keep (samples x atoms x nodes) phase arrays near this many complex entries
_CHUNK_ENTRIES = 2_000_000


class MomentumMismatchWarning(UserWarning):
    """|k_L + k0| differs from |k_L| by more than 1%: no on-shell emission direction."""


@dataclass(frozen=True)
class EmissionConfig:
    """Read-out drive and spin-wave momentum.

    Attributes
    ----------
    k_L : ndarray (3,)
        Laser wavevector, ``|k_L| = 2 pi / wavelength``.
    k0 : ndarray (3,)
        Momentum of the collective state.
    n_eg : ndarray (3,)
        Unit vector of the emitting dipole.
    gamma : float
        Single-atom decay rate; only ratios are ever used.
    """

    k_L: np.ndarray
    k0: np.ndarray = field(default_factory=lambda: np.zeros(3))
    n_eg: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 1.0]))
    gamma: float = 1.0

    def __post_init__(self):
        for name in ("k_L", "k0", "n_eg"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), float).reshape(3))
        if not np.linalg.norm(self.k_L) > 0:
            raise InvalidArgument("|k_L| must be > 0")
        if abs(np.linalg.norm(self.n_eg) - 1.0) > 1e-12:
            raise InvalidArgument("n_eg must be a unit vector")
        if not self.momentum_consistent:
            warnings.warn(
                f"|k_L + k0| = {np.linalg.norm(self.k_L + self.k0):.6g} differs from "
                f"|k_L| = {self.k:.6g} by more than 1%", MomentumMismatchWarning, stacklevel=3)

    @classmethod
    def along(cls, direction, wavelength: float = 1.0, k0=(0.0, 0.0, 0.0),
              n_eg=(0.0, 0.0, 1.0), gamma: float = 1.0):
        """Laser of the given wavelength propagating along ``direction``."""
        d = np.asarray(direction, float)
        n = np.asarray(n_eg, float)
        return cls(2 * np.pi / wavelength * d / np.linalg.norm(d), np.asarray(k0, float),
                   n / np.linalg.norm(n), gamma)

    @property
    def k(self) -> float:
        return float(np.linalg.norm(self.k_L))

    @property
    def wavelength(self) -> float:
        return 2 * np.pi / self.k

    @property
    def momentum_consistent(self) -> bool:
        return abs(np.linalg.norm(self.k_L + self.k0) - self.k) <= 0.01 * self.k

    def transfer(self, directions) -> np.ndarray:
        """Photon momentum transfer ``k n - k_L`` for each direction."""
        return self.k * np.asarray(directions, float) - self.k_L


@dataclass
class EmissionPattern:
    """Coherent and incoherent pattern sampled on an angular grid.

    ``coh_fn`` evaluates the coherent part at arbitrary directions; it is
    what the cone-width scan uses between grid nodes.
    """

    grid: AngularGrid
    f_coh: np.ndarray
    f_inc: np.ndarray
    n_atoms: int
    mc_stderr: np.ndarray | None = None
    coh_fn: Callable | None = None
    meta: dict = field(default_factory=dict)

    @property
    def f_total(self) -> np.ndarray:
        return self.f_coh + self.f_inc


@dataclass(frozen=True)
class EmissionSummary:
    error_probability: float
    fwhm_rad: float | None
    peak_direction: np.ndarray
    peak_value: float


# ---------------------------------------------------------------------------
# direct sums


def _amplitudes(positions, phase0, q):
    """``sum_j exp(-i q.r_j + i phase0_j)`` for each row of ``q``."""
    out = np.empty(len(q), complex)
    step = max(1, _CHUNK_ENTRIES // max(1, positions.shape[0]))
    w = np.exp(1j * phase0)
    for s in range(0, len(q), step):
        ph = q[s:s + step] @ positions.T
        out[s:s + step] = np.exp(-1j * ph) @ w
    return out


def _block_moments(samples, phase0, q):
    """Per-node sums over one sample block: sum A, mean/M2 of |A|^2."""
    n_s, n_a, _ = samples.shape
    w = np.exp(1j * phase0)
    amp = np.empty((n_s, len(q)), complex)
    per = max(1, _CHUNK_ENTRIES // (n_a * len(q)))
    for s in range(0, n_s, per):
        ph = samples[s:s + per] @ q.T
        amp[s:s + per] = np.einsum("snm,n->sm", np.exp(-1j * ph), w)
    inten = amp.real**2 + amp.imag**2
    mean = inten.mean(axis=0)
    m2 = ((inten - mean) ** 2).sum(axis=0)
    return n_s, amp.sum(axis=0), mean, m2


def _combine(parts):
    """Merge per-block moments in block order (Chan et al. pairwise update)."""
    n, sum_a, mean, m2 = 0, 0.0, 0.0, 0.0
    for n_b, sa_b, mean_b, m2_b in parts:
        tot = n + n_b
        delta = mean_b - mean
        mean = mean + delta * (n_b / tot)
        m2 = m2 + m2_b + delta**2 * (n * n_b / tot)
        sum_a = sum_a + sa_b
        n = tot
    return n, sum_a, mean, m2


def f_direct(geom: AtomGeometry, model: FluctuationModel, cfg: EmissionConfig,
             grid: AngularGrid, seed: int = 0, n_samples: int = 100_000,
             jobs: int = 1) -> EmissionPattern:
    """Emission pattern from the explicit double sum over atom pairs.

    For fluctuating positions the pair average is the empirical mean over
    ``n_samples`` position samples. The coherent part is the squared modulus
    of the sample-averaged amplitude; the incoherent part is the remainder.
    Per-node standard errors of the total are returned in ``mc_stderr``.
    """
    n = geom.n_atoms
    if n == 0:
        raise InvalidArgument("geometry has no atoms")
    r0 = geom.positions
    phase0 = r0 @ cfg.k0
    q = cfg.transfer(grid.nodes)

    if model.kind == "fixed":
        def coh_fn(directions):
            amp = _amplitudes(r0, phase0, cfg.transfer(np.atleast_2d(directions)))
            return (amp.real**2 + amp.imag**2) / n

        f_coh = coh_fn(grid.nodes)
        return EmissionPattern(grid, f_coh, np.zeros_like(f_coh), n, coh_fn=coh_fn,
                               meta={"model": "fixed"})

    if n_samples < 100:
        raise InvalidArgument("sampled models need n_samples >= 100")

    def run(q_nodes):
        def one(item):
            b, samples = item
            return _block_moments(samples, phase0, q_nodes)

        blocks = iter_sample_blocks(geom, model, seed, n_samples)
        if jobs > 1:
            with ThreadPoolExecutor(jobs) as pool:
                parts = list(pool.map(one, blocks))
        else:
            parts = [one(b) for b in blocks]
        return _combine(parts)

    n_tot, sum_a, mean_i, m2 = run(q)
    mean_a = sum_a / n_tot
    f_total = mean_i / n
    f_coh = (mean_a.real**2 + mean_a.imag**2) / n
    f_inc = np.maximum(f_total - f_coh, 0.0)
    stderr = np.sqrt(m2 / (n_tot - 1) / n_tot) / n

    def coh_fn(directions):
        _, sa, _, _ = run(cfg.transfer(np.atleast_2d(directions)))
        ma = sa / n_tot
        return (ma.real**2 + ma.imag**2) / n

    return EmissionPattern(grid, f_coh, f_inc, n, mc_stderr=stderr, coh_fn=coh_fn,
                           meta={"model": model.kind, "n_samples": n_tot, "seed": seed})


# ---------------------------------------------------------------------------
# closed forms


def interference_factor(x, n: int):
    """``sin^2(n x / 2) / sin^2(x / 2)`` with its limit ``n^2`` at Bragg points."""
    x = np.asarray(x, float)
    if n == 1:
        return np.ones_like(x)
    s = np.sin(x / 2)
    out = np.empty_like(x)
    near = np.abs(s) < 1e-8
    far = ~near
    out[far] = np.sin(n * x[far] / 2) ** 2 / s[far] ** 2
    dx = x[near] - 2 * np.pi * np.round(x[near] / (2 * np.pi))
    out[near] = n**2 * (1.0 - (n**2 - 1) * dx**2 / 12.0)
    return out


def f0_values(cfg: EmissionConfig, dims, d0: float, directions) -> np.ndarray:
    dims = tuple(int(d) for d in dims)
    n = int(np.prod(dims))
    x = (cfg.transfer(np.atleast_2d(directions)) - cfg.k0) * d0
    out = np.full(x.shape[0], 1.0 / n)
    for axis, n_a in enumerate(dims):
        out *= interference_factor(x[:, axis], n_a)
    return out


def _check_lattice(dims, d0):
    if len(dims) != 3 or min(int(d) for d in dims) < 1:
        raise InvalidArgument(f"lattice dims must be three counts >= 1, got {dims}")
    if not d0 > 0:
        raise InvalidArgument("spacing must be > 0")


def f0_lattice(cfg: EmissionConfig, dims, d0: float, grid: AngularGrid) -> EmissionPattern:
    """Closed-form pattern of a rectangular lattice at fixed positions."""
    _check_lattice(dims, d0)
    n = int(np.prod(dims))

    def coh_fn(directions):
        return f0_values(cfg, dims, d0, directions)

    f = coh_fn(grid.nodes)
    return EmissionPattern(grid, f, np.zeros_like(f), n, coh_fn=coh_fn,
                           meta={"model": "fixed", "d0": d0, "dims": tuple(dims)})


def xi_thermal(x0, n_T) -> np.ndarray:
    """Thermal fluctuation length per axis, ``x0 sqrt(1 + 2 n_T)``."""
    x0 = np.asarray(x0, float)
    n_T = np.asarray(n_T, float)
    if np.any(x0 < 0) or np.any(n_T < 0):
        raise InvalidArgument("x0 and n_T must be >= 0")
    return x0 * np.sqrt(1.0 + 2.0 * n_T)


def g_thermal(cfg: EmissionConfig, xi, directions) -> np.ndarray:
    """Debye-Waller factor ``exp(-sum_a (dk_a xi_a)^2)``."""
    dk = cfg.transfer(np.atleast_2d(directions))
    return np.exp(-np.sum((dk * np.asarray(xi, float)) ** 2, axis=1))


def f_thermal(cfg: EmissionConfig, dims, d0: float, xi, grid: AngularGrid) -> EmissionPattern:
    """Lattice of independently trapped atoms with Gaussian position spread ``xi``."""
    _check_lattice(dims, d0)
    xi = np.broadcast_to(np.asarray(xi, float), 3)
    if np.any(xi < 0):
        raise InvalidArgument("xi components must be >= 0")
    n = int(np.prod(dims))

    def coh_fn(directions):
        return f0_values(cfg, dims, d0, directions) * g_thermal(cfg, xi, directions)

    g = g_thermal(cfg, xi, grid.nodes)
    return EmissionPattern(grid, f0_values(cfg, dims, d0, grid.nodes) * g, 1.0 - g, n,
                           coh_fn=coh_fn,
                           meta={"model": "thermal", "d0": d0, "dims": tuple(dims),
                                 "xi": tuple(xi)})


def g_box(cfg: EmissionConfig, box, directions) -> np.ndarray:
    """``prod_a sinc^2(dk_a L_a / 2)``: squared characteristic function of a uniform box.

    The half-width argument is what a uniform distribution of side ``L``
    produces; the Monte Carlo tests pin this convention.
    """
    dk = cfg.transfer(np.atleast_2d(directions))
    arg = dk * np.asarray(box, float) / 2.0
    return np.prod(np.sinc(arg / np.pi) ** 2, axis=1)


def f_box(cfg: EmissionConfig, n_atoms: int, box, grid: AngularGrid) -> EmissionPattern:
    """Atoms uniformly distributed in a box, spin wave written along the laser.

    The closed form assumes the state carries no extra momentum (``k0 = 0``);
    ``cfg.k0`` is ignored.
    """
    if n_atoms < 1:
        raise InvalidArgument("n_atoms must be >= 1")
    box = np.broadcast_to(np.asarray(box, float), 3)
    if np.any(box <= 0):
        raise InvalidArgument("box side lengths must be > 0")

    def coh_fn(directions):
        return n_atoms * g_box(cfg, box, directions)

    g = g_box(cfg, box, grid.nodes)
    return EmissionPattern(grid, n_atoms * g, 1.0 - g, n_atoms, coh_fn=coh_fn,
                           meta={"model": "box", "box": tuple(box),
                                 "sinc_argument": "dk*L/2"})


# ---------------------------------------------------------------------------
# figures of merit


def error_probability(p: EmissionPattern) -> float:
    """Fraction of the emitted probability that goes into the incoherent part."""
    total = p.grid.integrate(p.f_total)
    if not total > 0:
        raise InvalidArgument("pattern integrates to zero")
    return float(min(1.0, max(0.0, p.grid.integrate(p.f_inc) / total)))


def multiphoton_error_bound(err: float, n_a: int, n_b: int) -> float:
    if not 0.0 <= err <= 1.0:
        raise InvalidArgument("err must lie in [0, 1]")
    return 1.0 - (1.0 - err) ** (n_a + n_b)


def dipole_pattern(cfg: EmissionConfig, gamma_k0: float, grid: AngularGrid) -> np.ndarray:
    """Dipole factor ``3/(8 pi) (gamma/gamma_k0) (1 - (n_eg.n)^2)`` per node."""
    if not gamma_k0 > 0:
        raise InvalidArgument("gamma_k0 must be > 0")
    c = grid.nodes @ cfg.n_eg
    return 3.0 / (8.0 * np.pi) * (cfg.gamma / gamma_k0) * (1.0 - c**2)


def _tangent_direction(p, u, v, ab):
    n = p + ab[0] * u + ab[1] * v
    return n / np.linalg.norm(n)


def find_peak(p: EmissionPattern, cfg: EmissionConfig):
    """Direction and value of the coherent maximum.

    Starts from the best grid node and from the momentum-matched direction
    ``k_L + k0``, keeps the better one (ties go to the matched direction)
    and polishes it with a local search on the tangent plane.
    """
    if p.coh_fn is None:
        raise InvalidArgument("pattern carries no coherent evaluator")
    mean = p.grid.integrate(p.f_coh) / (4 * np.pi)
    i_best = int(np.argmax(p.f_coh))
    start, best = p.grid.nodes[i_best], float(p.f_coh[i_best])
    target = cfg.k_L + cfg.k0
    if np.linalg.norm(target) > 0:
        matched = target / np.linalg.norm(target)
        val = float(p.coh_fn(matched)[0])
        if val >= best * (1 - 1e-9):
            start, best = matched, val
    if not best > mean * (1 + 1e-9):
        raise NoPeakError("coherent pattern is flat: no peak above the mean")

    u, v = orthonormal_frame(start)
    res = optimize.minimize(
        lambda ab: -float(p.coh_fn(_tangent_direction(start, u, v, ab))[0]),
        np.zeros(2), method="Nelder-Mead",
        options={"initial_simplex": [[0, 0], [1e-3, 0], [0, 1e-3]],
                 "xatol": 1e-10, "fatol": 1e-14 * best, "maxiter": 400})
    if -res.fun > best:
        start, best = _tangent_direction(start, u, v, res.x), float(-res.fun)
    return start, best


def _half_crossing(fun, half, step):
    t_prev, t = 0.0, step
    while t <= np.pi:
        if fun(t) < half:
            return optimize.brentq(lambda s: fun(s) - half, t_prev, t, xtol=1e-13)
        t_prev, t = t, t + step
    return np.pi


def angular_width(p: EmissionPattern, cfg: EmissionConfig, step: float = np.pi / 2000,
                  peak=None) -> float:
    """Full width at half maximum of the coherent cone along a great circle.

    The scan step is refined until it is at most 1/50 of the width found.
    """
    direction, value = peak if peak is not None else find_peak(p, cfg)
    u, _ = orthonormal_frame(direction)

    def along(sign):
        return lambda t: float(p.coh_fn(np.cos(t) * direction + sign * np.sin(t) * u)[0])

    half = value / 2.0
    while True:
        width = _half_crossing(along(1.0), half, step) + _half_crossing(along(-1.0), half, step)
        if step <= width / 50.0:
            return float(min(width, np.pi))
        step = width / 50.0


def summarize(p: EmissionPattern, cfg: EmissionConfig) -> EmissionSummary:
    """Error probability plus cone width and peak; width is ``None`` if no peak exists."""
    err = error_probability(p)
    try:
        peak = find_peak(p, cfg)
        width = angular_width(p, cfg, peak=peak)
        direction, value = peak
    except NoPeakError:
        i = int(np.argmax(p.f_total))
        direction, value, width = p.grid.nodes[i], float(p.f_total[i]), None
    return EmissionSummary(err, width, np.asarray(direction, float), float(value))


def axial_scan(p_or_fn, axis, plane_vector, n_points: int = 4001, total: bool = False):
    """Pattern along the half great circle from ``axis`` (theta=0) to ``-axis``.

    Returns ``(theta, values)``. ``p_or_fn`` is a pattern (its coherent
    evaluator is used) or any callable on directions.
    """
    fn = p_or_fn.coh_fn if isinstance(p_or_fn, EmissionPattern) else p_or_fn
    a = np.asarray(axis, float)
    a /= np.linalg.norm(a)
    w = np.asarray(plane_vector, float)
    w = w - a * (w @ a)
    w /= np.linalg.norm(w)
    theta = np.linspace(0.0, np.pi, n_points)
    dirs = np.cos(theta)[:, None] * a + np.sin(theta)[:, None] * w
    return theta, fn(dirs)


def count_maxima(values, rel_threshold: float = 0.1) -> list:
    """Indices of local maxima (endpoints included) above ``rel_threshold * max``."""
    v = np.asarray(values, float)
    floor = rel_threshold * v.max()
    idx = []
    for i in range(len(v)):
        left = v[i - 1] if i > 0 else -np.inf
        right = v[i + 1] if i < len(v) - 1 else -np.inf
        if v[i] >= floor and v[i] > left and v[i] >= right:
            idx.append(i)
    return idx
