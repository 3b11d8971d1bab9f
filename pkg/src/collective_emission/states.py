"""Dense collective states of three-level atoms and their MPS structure.

Each site has the local basis ``g, s_a, s_b`` (indices 0, 1, 2). A state of
``n`` sites is a complex array of shape ``(3,) * n`` stored flat.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgument, ResourceLimit
from .geometry import AtomGeometry

MAX_SITES = 12
_SPECIES = {"a": 1, "b": 2}


@dataclass(frozen=True)
class Term:
    amplitude: complex
    n_a: int
    n_b: int
    k_a: tuple = (0.0, 0.0, 0.0)
    k_b: tuple = (0.0, 0.0, 0.0)


@dataclass(frozen=True)
class CollectiveSpec:
    """Superposition of spin-wave Fock states with ``n_a`` and ``n_b`` excitations."""

    terms: tuple

    def __post_init__(self):
        terms = tuple(t if isinstance(t, Term) else Term(*t) for t in self.terms)
        if not terms:
            raise InvalidArgument("a collective spec needs at least one term")
        norm = sum(abs(t.amplitude) ** 2 for t in terms)
        if abs(norm - 1.0) > 1e-12:
            raise InvalidArgument(f"term amplitudes must be normalised, got {norm}")
        object.__setattr__(self, "terms", terms)

    @property
    def M(self) -> int:
        return len(self.terms)

    def bond_bound(self) -> int:
        """Sum of per-term bounds; equals ``M (n_a+1)(n_b+1)`` for uniform terms."""
        return sum((t.n_a + 1) * (t.n_b + 1) for t in self.terms)


@dataclass
class DenseState:
    n_sites: int
    amplitudes: np.ndarray
    raw_norm: float = 1.0

    def tensor(self) -> np.ndarray:
        return self.amplitudes.reshape((3,) * self.n_sites)


@dataclass
class SchmidtReport:
    cut_ranks: list
    max_rank: int
    tolerance: float
    bound: int | None = None

    def to_dict(self) -> dict:
        return {"cuts": [{"position": c, "rank": r} for c, r in self.cut_ranks],
                "max_rank": self.max_rank, "bound": self.bound}


def raise_collective(psi: np.ndarray, species: str, k, positions) -> np.ndarray:
    """Apply ``sum_j exp(-i k.r_j) sigma^dag_{x,j} / sqrt(N)`` to a state tensor.

    A site already holding an excitation is annihilated by further raising.
    """
    n = psi.ndim
    level = _SPECIES[species]
    phases = np.exp(-1j * np.asarray(positions) @ np.asarray(k, float)) / np.sqrt(n)
    out = np.zeros_like(psi)
    for j in range(n):
        src = [slice(None)] * n
        dst = [slice(None)] * n
        src[j], dst[j] = 0, level
        out[tuple(dst)] += phases[j] * psi[tuple(src)]
    return out


def vacuum(n_sites: int) -> np.ndarray:
    psi = np.zeros((3,) * n_sites, complex)
    psi[(0,) * n_sites] = 1.0
    return psi


def _guard(n):
    if n > MAX_SITES:
        raise ResourceLimit(f"dense states are limited to {MAX_SITES} sites, got {n}")


def build_collective_state(spec: CollectiveSpec, positions: AtomGeometry) -> DenseState:
    """Explicit amplitudes of a superposition of collective Fock states.

    Each term is ``(sigma^dag_a)^n_a (sigma^dag_b)^n_b |0> / sqrt(n_a! n_b!)``.
    The sum is normalised at the end; at finite N the unnormalised norm
    differs from 1 and is kept in ``raw_norm``.
    """
    n = positions.n_atoms
    _guard(n)
    r = positions.positions
    total = np.zeros((3,) * n, complex)
    for t in spec.terms:
        if t.n_a + t.n_b > n:
            raise InvalidArgument(f"{t.n_a + t.n_b} excitations do not fit on {n} sites")
        psi = vacuum(n)
        for _ in range(t.n_b):
            psi = raise_collective(psi, "b", t.k_b, r)
        for _ in range(t.n_a):
            psi = raise_collective(psi, "a", t.k_a, r)
        total += t.amplitude * psi / math.sqrt(math.factorial(t.n_a) * math.factorial(t.n_b))
    flat = total.ravel()
    norm = float(np.linalg.norm(flat))
    if norm == 0:
        raise InvalidArgument("the superposition vanishes")
    return DenseState(n, flat / norm, norm)


def _cut_singular_values(state: DenseState, cut: int) -> np.ndarray:
    if not 1 <= cut <= state.n_sites - 1:
        raise InvalidArgument(f"cut must lie in [1, {state.n_sites - 1}]")
    mat = state.amplitudes.reshape(3**cut, 3 ** (state.n_sites - cut))
    return np.linalg.svd(mat, compute_uv=False)


def schmidt_rank(state: DenseState, cut: int, tolerance: float = 1e-10) -> int:
    s = _cut_singular_values(state, cut)
    return int(np.sum(s > tolerance * s[0]))


def schmidt_report(state: DenseState, tolerance: float = 1e-10, bound=None) -> SchmidtReport:
    cuts = [(c, schmidt_rank(state, c, tolerance)) for c in range(1, state.n_sites)]
    return SchmidtReport(cuts, max((r for _, r in cuts), default=1), tolerance, bound)


def bond_dimension_bound(M: int, n_a: int, n_b: int) -> int:
    if M < 1:
        raise InvalidArgument("M must be >= 1")
    return M * (n_a + 1) * (n_b + 1)


def gate_qubits(bond_dim: int) -> int:
    """Width ``floor(log2 D) + 1`` of the sequential preparation gates."""
    return int(math.floor(math.log2(bond_dim))) + 1


@dataclass
class MPS:
    """Site tensors of shape ``(D_left, 3, D_right)`` and the bond dimensions between them."""

    tensors: list
    bond_dims: list = field(default_factory=list)

    def to_dense(self) -> np.ndarray:
        out = self.tensors[0]
        for t in self.tensors[1:]:
            out = np.tensordot(out, t, axes=([-1], [0]))
        return out.reshape(-1)

    @property
    def max_bond(self) -> int:
        return max(self.bond_dims, default=1)


def mps_from_dense(state: DenseState, tolerance: float = 1e-10) -> MPS:
    """Left-canonical MPS by sequential SVD, truncating relative to the largest value."""
    _guard(state.n_sites)
    n = state.n_sites
    rest = state.amplitudes.reshape(1, -1)
    tensors, bonds = [], []
    d_left = 1
    for site in range(n - 1):
        mat = rest.reshape(d_left * 3, -1)
        u, s, vh = np.linalg.svd(mat, full_matrices=False)
        keep = int(np.sum(s > tolerance * s[0]))
        tensors.append(u[:, :keep].reshape(d_left, 3, keep))
        bonds.append(keep)
        rest = s[:keep, None] * vh[:keep]
        d_left = keep
    tensors.append(rest.reshape(d_left, 3, 1))
    return MPS(tensors, bonds)


def fidelity(a: DenseState, b: DenseState) -> float:
    if a.n_sites != b.n_sites:
        raise InvalidArgument("states live on different numbers of sites")
    return float(min(1.0, abs(np.vdot(a.amplitudes, b.amplitudes)) ** 2))


def spin_wave_pair_spec(k, q, relative_phase: float = 0.0) -> CollectiveSpec:
    """``(|k^a, q^b> + e^{i phi} |q^a, k^b>) / sqrt(2)``: two photons entangled in direction."""
    c = 1 / math.sqrt(2)
    return CollectiveSpec((Term(c, 1, 1, tuple(k), tuple(q)),
                           Term(c * np.exp(1j * relative_phase), 1, 1, tuple(q), tuple(k))))
