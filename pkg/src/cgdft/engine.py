"""Few-fermion Hamiltonians on the fine grid.

Spinless fermions live on the antisymmetric basis of ordered site tuples
``i1 < i2 < ... < iN``.  A nearest-neighbour hop never moves one particle
past another in one dimension, so every kinetic matrix element carries the
same sign and the ground state is non-degenerate and positive.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .model import FineDensity, Grid, Potential, ScaleHierarchy

__all__ = [
    "ModelSpec",
    "EnsembleState",
    "GroundSpace",
    "MAX_DIMENSION",
    "assemble_hamiltonian",
    "ground_space",
    "density_of",
    "intrinsic_energy_of",
    "f_max",
    "soft_coulomb",
]

MAX_DIMENSION = 20_000
DENSE_LIMIT = 600


def soft_coulomb(distance, strength: float, softening: float):
    return strength / np.sqrt(np.asarray(distance) ** 2 + softening**2)


@dataclass(frozen=True)
class ModelSpec:
    """N spinless fermions with soft-Coulomb repulsion, ħ = m = 1."""

    grid: Grid
    n_particles: int = 1
    strength: float = 1.0
    softening: float = 0.5

    def __post_init__(self):
        if int(self.n_particles) != self.n_particles or self.n_particles < 1:
            raise ValueError(f"particle number must be a positive integer, got {self.n_particles}")
        if self.n_particles > self.grid.points:
            raise ValueError("more fermions than grid sites")
        if self.strength < 0:
            raise ValueError(f"interaction strength must be >= 0, got {self.strength}")
        if not self.softening > 0:
            raise ValueError(f"softening must be > 0, got {self.softening}")

    @property
    def hierarchy(self) -> ScaleHierarchy:
        return ScaleHierarchy(self.grid)

    @property
    def dimension(self) -> int:
        return math.comb(self.grid.points, self.n_particles)

    def non_interacting(self) -> "ModelSpec":
        return replace(self, strength=0.0)


@dataclass(frozen=True)
class _Operators:
    occupations: sp.csr_matrix  # basis state x site, 0/1
    kinetic: sp.csr_matrix
    interaction: np.ndarray  # diagonal
    kinetic_floor: float  # lowest kinetic eigenvalue


@lru_cache(maxsize=16)
def _operators(model: ModelSpec) -> _Operators:
    m, n = model.grid.points, model.n_particles
    if model.dimension > MAX_DIMENSION:
        raise ValueError(
            f"Hilbert space dimension {model.dimension} exceeds the guard {MAX_DIMENSION}"
        )
    h = model.grid.spacing
    configs = np.array(list(itertools.combinations(range(m), n)), dtype=np.int64)
    dim = len(configs)
    occ = sp.csr_matrix(
        (np.ones(dim * n), (np.repeat(np.arange(dim), n), configs.ravel())), shape=(dim, m)
    )

    # rank of each configuration in the lexicographic (combinatorial) order
    def rank(c):
        return np.searchsorted(keys, c @ radix)

    radix = m ** np.arange(n - 1, -1, -1, dtype=np.int64)
    keys = configs @ radix
    rows, cols = [], []
    occupied = occ.toarray().astype(bool) if n > 1 else None
    for k in range(n):
        moved = configs.copy()
        moved[:, k] += 1
        ok = moved[:, k] < m
        if n > 1:
            ok &= ~occupied[np.arange(dim), np.minimum(moved[:, k], m - 1)]
        src = np.nonzero(ok)[0]
        dst = rank(moved[src])
        rows.extend([src, dst])
        cols.extend([dst, src])
    rows = np.concatenate(rows) if rows else np.zeros(0, int)
    cols = np.concatenate(cols) if cols else np.zeros(0, int)
    hop = sp.csr_matrix((np.full(rows.size, -0.5 / h**2), (rows, cols)), shape=(dim, dim))
    kinetic = (hop + sp.identity(dim, format="csr") * (n / h**2)).tocsr()

    interaction = np.zeros(dim)
    if model.strength > 0 and n > 1:
        x = model.grid.x
        for a, b in itertools.combinations(range(n), 2):
            interaction += soft_coulomb(
                x[configs[:, a]] - x[configs[:, b]], model.strength, model.softening
            )
    levels = (1 - np.cos(np.pi * np.arange(1, n + 1) / (m + 1))) / h**2
    return _Operators(occ, kinetic, interaction, float(levels.sum()))


def _fine_values(model: ModelSpec, v) -> np.ndarray:
    if isinstance(v, Potential):
        if v.hierarchy.grid != model.grid:
            raise ValueError("potential grid does not match model grid")
        return v.on_grid()
    values = np.asarray(v, dtype=float)
    if values.shape != (model.grid.points,):
        raise ValueError("fine potential must have one value per grid point")
    return values


def assemble_hamiltonian(model: ModelSpec, v) -> sp.csr_matrix:
    """Sparse symmetric ``T + V_ee + v`` on the antisymmetric basis."""
    ops = _operators(model)
    diag = ops.interaction + ops.occupations @ _fine_values(model, v)
    return (ops.kinetic + sp.diags(diag)).tocsr()


@dataclass(frozen=True, eq=False)
class GroundSpace:
    energy: float
    degeneracy: int
    basis: np.ndarray  # dim x degeneracy
    gap: float
    energies: np.ndarray  # computed low spectrum


@dataclass(frozen=True, eq=False)
class EnsembleState:
    """Mixture ``sum_k w_k |psi_k><psi_k|`` of orthonormal basis vectors."""

    model: ModelSpec
    weights: np.ndarray
    vectors: np.ndarray  # dim x k

    def __post_init__(self):
        w = np.atleast_1d(np.asarray(self.weights, dtype=float))
        vecs = np.asarray(self.vectors, dtype=float)
        if vecs.ndim == 1:
            vecs = vecs[:, None]
        if vecs.shape != (self.model.dimension, w.size):
            raise ValueError("weights and vectors disagree in shape")
        if np.any(w < -1e-14) or abs(w.sum() - 1) > 1e-10:
            raise ValueError("ensemble weights must be non-negative and sum to one")
        gram = vecs.T @ vecs
        if np.max(np.abs(gram - np.eye(w.size))) > 1e-10:
            raise ValueError("ensemble vectors are not orthonormal")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "vectors", vecs)

    @classmethod
    def pure(cls, model: ModelSpec, vector: np.ndarray) -> "EnsembleState":
        return cls(model, np.ones(1), np.asarray(vector, dtype=float)[:, None])


def _canonical_signs(vectors: np.ndarray) -> np.ndarray:
    idx = np.argmax(np.abs(vectors) > np.abs(vectors).max(axis=0) * (1 - 1e-9), axis=0)
    signs = np.sign(vectors[idx, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1
    return vectors * signs


def _lower_bound(model: ModelSpec, fine_v: np.ndarray) -> float:
    # Weyl: lambda_min(T + D) >= lambda_min(T) + min(D)
    ops = _operators(model)
    return ops.kinetic_floor + float(np.min(ops.interaction + ops.occupations @ fine_v))


def low_spectrum(model: ModelSpec, fine_v: np.ndarray, count: int, shift: float | None = None):
    """Lowest ``count`` eigenpairs of the Hamiltonian (all of them on the dense path).

    ``shift`` must be a lower bound on the ground energy; it only speeds up
    the sparse path.
    """
    ops = _operators(model)
    dim = model.dimension
    if model.n_particles == 1:
        d = ops.interaction + 1.0 / model.grid.spacing**2 + fine_v
        off = np.full(dim - 1, -0.5 / model.grid.spacing**2)
        energies, vectors = la.eigh_tridiagonal(d, off)
    elif dim <= DENSE_LIMIT:
        energies, vectors = np.linalg.eigh(assemble_hamiltonian(model, fine_v).toarray())
    else:
        count = min(count, dim - 2)
        floor = _lower_bound(model, fine_v)
        sigma = floor if shift is None else max(floor, shift)
        sigma -= 1e-6 * max(1.0, abs(sigma))
        start = np.full(dim, 1.0 / math.sqrt(dim))
        energies, vectors = spla.eigsh(
            assemble_hamiltonian(model, fine_v).tocsc(),
            k=count,
            sigma=sigma,
            which="LM",
            v0=start,
            tol=0,
        )
        order = np.argsort(energies)
        energies, vectors = energies[order], vectors[:, order]
    return energies, _canonical_signs(vectors)


def default_degeneracy_tolerance(model: ModelSpec) -> float:
    # spectral width of T + V_ee, dominated by the kinetic ceiling 2N/h^2
    width = 2 * model.n_particles / model.grid.spacing**2
    return 1e-8 * width


def ground_space(
    model: ModelSpec,
    v,
    degeneracy_tolerance: float | None = None,
    max_degeneracy: int = 8,
    shift: float | None = None,
) -> GroundSpace:
    """Lowest eigenvalue cluster of ``T + V_ee + v`` with an orthonormal basis."""
    tol = default_degeneracy_tolerance(model) if degeneracy_tolerance is None else degeneracy_tolerance
    fine_v = _fine_values(model, v)
    count = 2
    while True:
        energies, vectors = low_spectrum(model, fine_v, count + 1, shift)
        k = int(np.sum(energies - energies[0] <= tol))
        if k < len(energies) or len(energies) == model.dimension:
            break
        if count >= max_degeneracy:
            raise ValueError(f"ground space degeneracy exceeds the guard {max_degeneracy}")
        count = min(2 * count, max_degeneracy)
    return _cluster(energies, vectors, k)


def _cluster(energies: np.ndarray, vectors: np.ndarray, k: int) -> GroundSpace:
    gap = float(energies[k] - energies[0]) if k < len(energies) else np.inf
    basis = vectors[:, :k]
    if k > 1:
        # deterministic order inside the cluster
        keys = [tuple(np.round(col, 12)) for col in basis.T]
        basis = basis[:, sorted(range(k), key=lambda j: keys[j], reverse=True)]
    return GroundSpace(float(energies[0]), k, basis, gap, energies[: k + 1])


def site_occupation(model: ModelSpec, vector: np.ndarray) -> np.ndarray:
    """Expected particle number on each grid site for one state vector."""
    return _operators(model).occupations.T @ (vector**2)


def density_of(state: EnsembleState) -> FineDensity:
    model = state.model
    occ = _operators(model).occupations
    numbers = occ.T @ ((state.vectors**2) @ state.weights)
    return FineDensity(model.grid, numbers / model.grid.spacing)


def intrinsic_energy_of(state: EnsembleState, model: ModelSpec | None = None) -> float:
    """Ensemble expectation of ``T + V_ee``."""
    model = model or state.model
    ops = _operators(model)
    vecs = state.vectors
    per_state = np.einsum("ak,ak->k", vecs, ops.kinetic @ vecs)
    per_state += np.einsum("ak,a,ak->k", vecs, ops.interaction, vecs)
    return float(per_state @ state.weights)


def f_max(model: ModelSpec, level: int, n_particles: int | None = None) -> float:
    """Per-particle energy needed to pack all particles into one level-``level`` cell.

    Ground energy of ``T + V_ee`` restricted to the sites of a single cell,
    divided by the particle number.  Infinite when the cell has fewer sites
    than particles.
    """
    n = model.n_particles if n_particles is None else n_particles
    sites = model.hierarchy.points_per_cell(level)
    if sites < n:
        return np.inf
    # a hard-wall box of `sites` points with the model's spacing
    h = model.grid.spacing
    sub_grid = _SubGrid(length=h * (sites + 1), points=sites)
    sub = _SubModel(sub_grid, n, model.strength, model.softening)
    ops = _operators(sub)  # type: ignore[arg-type]
    ham = ops.kinetic + sp.diags(ops.interaction)
    if sub.dimension <= DENSE_LIMIT:
        return float(np.linalg.eigvalsh(ham.toarray())[0] / n)
    sigma = ops.kinetic_floor + float(ops.interaction.min())
    sigma -= 1e-6 * max(1.0, abs(sigma))
    start = np.full(sub.dimension, 1.0 / math.sqrt(sub.dimension))
    lowest = spla.eigsh(ham.tocsc(), k=1, sigma=sigma, which="LM", v0=start, tol=0, return_eigenvectors=False)
    return float(lowest[0] / n)


@dataclass(frozen=True)
class _SubGrid:
    # Grid without the power-of-two restriction, for single-cell boxes
    length: float
    points: int

    @property
    def spacing(self) -> float:
        return self.length / (self.points + 1)

    @property
    def x(self) -> np.ndarray:
        return self.spacing * np.arange(1, self.points + 1)


@dataclass(frozen=True)
class _SubModel:
    grid: _SubGrid
    n_particles: int
    strength: float
    softening: float

    @property
    def dimension(self) -> int:
        return math.comb(self.grid.points, self.n_particles)


# ---------------------------------------------------------------------------
# density response, used by the inversion


@dataclass(frozen=True, eq=False)
class Solution:
    """Ground space of one fine potential plus what the inversion needs from it."""

    model: ModelSpec
    fine_v: np.ndarray
    space: GroundSpace
    energies: np.ndarray
    vectors: np.ndarray  # all computed eigenvectors (full set on the dense path)


def solve(model: ModelSpec, fine_v: np.ndarray, degeneracy_tolerance=None, shift=None) -> Solution:
    fine_v = np.asarray(fine_v, dtype=float)
    if model.n_particles == 1 or model.dimension <= DENSE_LIMIT:
        tol = (
            default_degeneracy_tolerance(model)
            if degeneracy_tolerance is None
            else degeneracy_tolerance
        )
        energies, vectors = low_spectrum(model, fine_v, model.dimension)
        k = int(np.sum(energies - energies[0] <= tol))
        if k > 8:
            raise ValueError("ground space degeneracy exceeds the guard 8")
        space = _cluster(energies, vectors, k)
        return Solution(model, fine_v, space, energies, vectors)
    space = ground_space(model, fine_v, degeneracy_tolerance, shift=shift)
    return Solution(model, fine_v, space, space.energies, space.basis)


def cell_response(sol: Solution, cells: np.ndarray, n_cells: int) -> np.ndarray:
    """Static response ``d N_R / d v_S`` of cell populations to cell potentials.

    Negative semidefinite, with the constant vector in its kernel.  Valid for
    a non-degenerate ground state.
    """
    model = sol.model
    occ = _operators(model).occupations
    agg = sp.csr_matrix((np.ones(cells.size), (np.arange(cells.size), cells)), shape=(cells.size, n_cells))
    cell_occ = (occ @ agg).toarray()  # basis state x cell
    psi0 = sol.space.basis[:, 0]
    if sol.vectors.shape[1] == model.dimension:
        coupling = cell_occ.T @ (psi0[:, None] * sol.vectors[:, 1:])  # cell x excited
        denom = sol.energies[1:] - sol.energies[0]
        chi = -2.0 * (coupling / denom) @ coupling.T
    else:
        # Sternheimer: solve (H - E0) x = Q P_S psi0 on the complement of psi0
        rhs = cell_occ * psi0[:, None]
        rhs -= np.outer(psi0, psi0 @ rhs)
        ham = assemble_hamiltonian(model, sol.fine_v)
        shifted = (ham - sp.identity(model.dimension) * sol.space.energy).tocsc()
        lu = spla.splu(shifted)
        x = lu.solve(rhs)
        x -= np.outer(psi0, psi0 @ x)
        chi = -2.0 * rhs.T @ x
    return 0.5 * (chi + chi.T)
