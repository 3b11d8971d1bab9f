"""Atomic position configurations.

Lengths are in units of the emission wavelength unless stated otherwise.
Chains lie along the x axis (``dims = (N, 1, 1)``).
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import spatial

from .errors import ConvergenceFailure, InvalidArgument

SAMPLE_BLOCK = 1024


@dataclass(frozen=True)
class AtomGeometry:
    """Equilibrium positions of N atoms.

    Attributes
    ----------
    positions : ndarray, shape (N, 3)
    dims : tuple of int
        Lattice extent per axis, or ``(N, 1, 1)`` for a chain.
    spacing : float or None
        Declared lattice spacing; ``None`` for irregular arrangements.
    period : float or None
        If set, the chain is closed into a ring of this circumference and
        pairwise distances are chords of that circle. Positions then hold
        arc-length coordinates along x.
    """

    positions: np.ndarray
    dims: tuple = (1, 1, 1)
    spacing: float | None = None
    period: float | None = None

    def __post_init__(self):
        pos = np.array(self.positions, dtype=float).reshape(-1, 3)
        if len(pos) > 1:
            nearest, _ = spatial.cKDTree(pos).query(pos, k=2)
            if not np.min(nearest[:, 1]) > 0:
                raise InvalidArgument("atom positions must be pairwise distinct")
        pos.setflags(write=False)
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))

    @property
    def n_atoms(self) -> int:
        return self.positions.shape[0]

    @property
    def is_chain(self) -> bool:
        return self.dims[1] == 1 and self.dims[2] == 1

    def pair_distances(self) -> np.ndarray:
        """Matrix of pairwise distances, using chord length on a ring."""
        diff = self.positions[:, None, :] - self.positions[None, :, :]
        dist = np.linalg.norm(diff, axis=-1)
        if self.period is not None:
            dist = self.period / np.pi * np.abs(np.sin(np.pi * dist / self.period))
        return dist

    def translated(self, shift) -> "AtomGeometry":
        return AtomGeometry(self.positions + np.asarray(shift, float), self.dims,
                            self.spacing, self.period)

    def scaled(self, factor: float) -> "AtomGeometry":
        spacing = None if self.spacing is None else self.spacing * factor
        period = None if self.period is None else self.period * factor
        return AtomGeometry(self.positions * factor, self.dims, spacing, period)


@dataclass(frozen=True)
class FluctuationModel:
    """How positions are distributed during emission.

    ``kind`` is one of ``"fixed"``, ``"thermal"`` (Gaussian with per-axis
    standard deviation ``xi``) or ``"box"`` (uniform in a box of side
    lengths ``box`` centred at the origin).
    """

    kind: str = "fixed"
    xi: tuple = (0.0, 0.0, 0.0)
    box: tuple = (1.0, 1.0, 1.0)

    def __post_init__(self):
        if self.kind not in ("fixed", "thermal", "box"):
            raise InvalidArgument(f"unknown fluctuation model {self.kind!r}")
        xi = tuple(float(v) for v in np.broadcast_to(self.xi, 3))
        box = tuple(float(v) for v in np.broadcast_to(self.box, 3))
        if self.kind == "thermal" and min(xi) < 0:
            raise InvalidArgument("thermal xi components must be >= 0")
        if self.kind == "box" and min(box) <= 0:
            raise InvalidArgument("box side lengths must be > 0")
        object.__setattr__(self, "xi", xi)
        object.__setattr__(self, "box", box)

    @classmethod
    def fixed(cls):
        return cls("fixed")

    @classmethod
    def thermal(cls, xi):
        return cls("thermal", xi=xi)

    @classmethod
    def uniform_box(cls, box):
        return cls("box", box=box)


@dataclass(frozen=True)
class TrapParams:
    n_ions: int
    tolerance: float = 1e-10
    length_scale: float = 1.0
    max_iter: int = 500

    def __post_init__(self):
        if self.n_ions < 1:
            raise InvalidArgument("n_ions must be >= 1")
        if self.tolerance <= 0:
            raise InvalidArgument("tolerance must be > 0")


def build_lattice(dims, d0: float) -> AtomGeometry:
    """Rectangular grid with spacing ``d0`` on every axis, centred at the origin."""
    dims = tuple(int(d) for d in dims)
    if len(dims) != 3 or min(dims) < 1:
        raise InvalidArgument(f"lattice dims must be three counts >= 1, got {dims}")
    if not d0 > 0:
        raise InvalidArgument(f"spacing must be > 0, got {d0}")
    axes = [(np.arange(n) - (n - 1) / 2.0) * d0 for n in dims]
    grid = np.meshgrid(*axes, indexing="ij")
    positions = np.stack([g.ravel() for g in grid], axis=1)
    return AtomGeometry(positions, dims, float(d0))


def build_chain(n: int, d0: float) -> AtomGeometry:
    return build_lattice((n, 1, 1), d0)


def build_ring(n: int, d0: float) -> AtomGeometry:
    """Chain of ``n`` atoms closed into a ring of circumference ``n * d0``.

    Pair distances are chords, so any distance-dependent kernel is circulant
    and physically realisable.
    """
    geom = build_chain(n, d0)
    return AtomGeometry(geom.positions, geom.dims, geom.spacing, period=n * d0)


def coulomb_forces(u: np.ndarray) -> np.ndarray:
    """Dimensionless force on each ion: harmonic restoring plus Coulomb repulsion."""
    diff = u[:, None] - u[None, :]
    np.fill_diagonal(diff, np.inf)
    return -u + np.sum(np.sign(diff) / diff**2, axis=1)


def _coulomb_jacobian(u):
    diff = u[:, None] - u[None, :]
    np.fill_diagonal(diff, np.inf)
    off = 2.0 / np.abs(diff) ** 3
    jac = off.copy()
    np.fill_diagonal(jac, -1.0 - off.sum(axis=1))
    return jac


def solve_coulomb_chain(params: TrapParams) -> AtomGeometry:
    """Equilibrium of N ions in a harmonic well with Coulomb repulsion.

    Minimises ``sum(u**2)/2 + sum_{i<j} 1/|u_i - u_j|`` by damped Newton
    iteration on the force equations. Positions come back sorted and scaled
    by ``params.length_scale``.
    """
    n = params.n_ions
    if n == 1:
        return AtomGeometry(np.zeros((1, 3)), (1, 1, 1))

    # uniform-density start, spacing from the known N^-0.56 scaling of the central gap
    gap = 2.018 / n**0.559
    u = (np.arange(n) - (n - 1) / 2.0) * gap * 1.2
    residual = np.max(np.abs(coulomb_forces(u)))
    for _ in range(params.max_iter):
        if residual <= params.tolerance:
            break
        step = np.linalg.solve(_coulomb_jacobian(u), -coulomb_forces(u))
        damping = 1.0
        while True:
            trial = u + damping * step
            if np.all(np.diff(trial) > 0):
                trial_res = np.max(np.abs(coulomb_forces(trial)))
                if trial_res < residual or damping < 1e-6:
                    break
            damping *= 0.5
            if damping < 1e-12:
                raise ConvergenceFailure("line search failed in Coulomb solver", residual)
        u, residual = trial, trial_res
    # the exact equilibrium is antisymmetric; remove roundoff asymmetry
    u = 0.5 * (u - u[::-1])
    residual = np.max(np.abs(coulomb_forces(u)))
    if residual > params.tolerance:
        raise ConvergenceFailure(
            f"Coulomb chain did not converge within {params.max_iter} iterations "
            f"(residual {residual:.3e})", residual)
    positions = np.zeros((n, 3))
    positions[:, 0] = u * params.length_scale
    return AtomGeometry(positions, (n, 1, 1))


def coulomb_chain_with_spacing(n: int, mean_spacing: float, tolerance=1e-10) -> AtomGeometry:
    """Coulomb chain rescaled so its mean nearest-neighbour distance is ``mean_spacing``."""
    geom = solve_coulomb_chain(TrapParams(n, tolerance))
    return geom.scaled(mean_spacing / average_spacing(geom))


def average_spacing(geom: AtomGeometry) -> float:
    """Mean nearest-neighbour distance along a chain, or the declared lattice spacing."""
    if geom.n_atoms < 2:
        raise InvalidArgument("average spacing needs at least two atoms")
    if geom.spacing is not None:
        return geom.spacing
    if not geom.is_chain:
        raise InvalidArgument("average spacing is defined for chains or regular lattices")
    x = np.sort(geom.positions[:, 0])
    return float((x[-1] - x[0]) / (len(x) - 1))


def _block_rng(seed: int, block: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(block,)))


def sample_block(geom: AtomGeometry, model: FluctuationModel, seed: int, block: int,
                 size: int) -> np.ndarray:
    """Samples ``block*SAMPLE_BLOCK ... + size`` of the stream for ``seed``.

    Every block owns an independent generator keyed by (seed, block index),
    so results never depend on how blocks are distributed over workers.
    """
    r0 = geom.positions
    if model.kind == "fixed":
        return np.broadcast_to(r0, (size,) + r0.shape).copy()
    rng = _block_rng(seed, block)
    if model.kind == "thermal":
        noise = rng.standard_normal((SAMPLE_BLOCK,) + r0.shape)[:size]
        return r0 + noise * np.asarray(model.xi)
    uni = rng.random((SAMPLE_BLOCK,) + r0.shape)[:size]
    return (uni - 0.5) * np.asarray(model.box)


def iter_sample_blocks(geom, model, seed, n_samples):
    """Yield ``(block_index, samples)`` covering ``n_samples`` samples in order."""
    n_blocks = -(-n_samples // SAMPLE_BLOCK)
    for b in range(n_blocks):
        size = min(SAMPLE_BLOCK, n_samples - b * SAMPLE_BLOCK)
        yield b, sample_block(geom, model, seed, b, size)


def sample_positions(geom: AtomGeometry, model: FluctuationModel, seed: int,
                     n_samples: int) -> np.ndarray:
    """Position samples, shape ``(n_samples, N, 3)``."""
    if n_samples < 1:
        raise InvalidArgument("n_samples must be >= 1")
    return np.concatenate([s for _, s in iter_sample_blocks(geom, model, seed, n_samples)])


def save_geometry(geom: AtomGeometry, path) -> None:
    header = f"dims {' '.join(map(str, geom.dims))}"
    if geom.spacing is not None:
        header += f"\nspacing {geom.spacing!r}"
    np.savetxt(path, geom.positions, fmt="%.17g", header=header)


def load_geometry(path) -> AtomGeometry:
    """Read a whitespace table of x y z rows; ``#`` lines are comments."""
    dims, spacing = None, None
    for line in Path(path).read_text().splitlines():
        if line.startswith("#"):
            parts = line[1:].split()
            if parts[:1] == ["dims"]:
                dims = tuple(int(p) for p in parts[1:4])
            elif parts[:1] == ["spacing"]:
                spacing = float(parts[1])
    positions = np.loadtxt(path, comments="#", ndmin=2)
    if positions.shape[1] != 3:
        raise InvalidArgument(f"geometry table needs 3 columns, got {positions.shape[1]}")
    if dims is None or np.prod(dims) != len(positions):
        dims = (len(positions), 1, 1)
    return AtomGeometry(positions, dims, spacing)
