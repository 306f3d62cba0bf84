"""P1 finite elements for -div(a grad u) = f on the unit square.

Dofs are all lattice vertices (boundary included) so that every solution
vector has length ``n**2``.  Homogeneous Dirichlet conditions are imposed by
replacing boundary rows/columns of the stiffness matrix with the identity.
"""

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

DIRECT_SOLVE_MAX_DOFS = 20_000
CG_RTOL = 1e-10

# Degree-4 rule on the reference triangle (barycentric coordinates, weights sum to 1).
_Q_A, _Q_B = 0.445948490915965, 0.091576213509771
_Q_WA, _Q_WB = 0.223381589678011, 0.109951743655322
QUAD_BARY = np.array(
    [
        [_Q_A, _Q_A, 1 - 2 * _Q_A],
        [_Q_A, 1 - 2 * _Q_A, _Q_A],
        [1 - 2 * _Q_A, _Q_A, _Q_A],
        [_Q_B, _Q_B, 1 - 2 * _Q_B],
        [_Q_B, 1 - 2 * _Q_B, _Q_B],
        [1 - 2 * _Q_B, _Q_B, _Q_B],
    ]
)
QUAD_WEIGHTS = np.array([_Q_WA] * 3 + [_Q_WB] * 3)

_LOCAL_MASS = np.array([[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]]) / 12.0


class EllipticityError(ValueError):
    """Raised when a diffusion coefficient is not strictly positive."""


class SolverError(RuntimeError):
    """Raised when the iterative solver does not converge."""


@dataclass(frozen=True)
class Mesh:
    """Structured triangulation of [0, 1]^2 with ``n`` vertices per side.

    Vertex ``j * n + i`` sits at ``(i / (n-1), j / (n-1))``.  Every lattice
    cell is cut along its lower-left to upper-right diagonal.
    """

    n: int
    vertices: np.ndarray
    triangles: np.ndarray
    boundary_mask: np.ndarray

    @property
    def n_dofs(self) -> int:
        return self.n * self.n

    @property
    def interior(self) -> np.ndarray:
        return np.flatnonzero(~self.boundary_mask)

    def signed_areas(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def barycenters(self) -> np.ndarray:
        return self.vertices[self.triangles].mean(axis=1)

    def basis_gradients(self) -> np.ndarray:
        """Constant gradients of the three local hat functions, shape (T, 3, 2)."""
        p = self.vertices[self.triangles]
        area2 = 2.0 * self.signed_areas()
        grads = np.empty((len(self.triangles), 3, 2))
        for k in range(3):
            a = p[:, (k + 1) % 3]
            b = p[:, (k + 2) % 3]
            grads[:, k, 0] = (a[:, 1] - b[:, 1]) / area2
            grads[:, k, 1] = (b[:, 0] - a[:, 0]) / area2
        return grads


def build_mesh(n: int) -> Mesh:
    if int(n) != n or n < 3:
        raise ValueError(f"mesh needs n >= 3 points per side, got {n!r}")
    n = int(n)
    t = np.linspace(0.0, 1.0, n)
    x1, x2 = np.meshgrid(t, t, indexing="xy")
    vertices = np.column_stack([x1.ravel(), x2.ravel()])

    i, j = np.meshgrid(np.arange(n - 1), np.arange(n - 1), indexing="xy")
    v00 = (j * n + i).ravel()
    v10 = v00 + 1
    v01 = v00 + n
    v11 = v01 + 1
    lower = np.column_stack([v00, v10, v11])
    upper = np.column_stack([v00, v11, v01])
    triangles = np.empty((2 * len(v00), 3), dtype=np.int64)
    triangles[0::2] = lower
    triangles[1::2] = upper

    on_edge = np.isin(vertices, (0.0, 1.0)).any(axis=1)
    return Mesh(n, vertices, triangles, on_edge)


def _scatter(mesh: Mesh, local: np.ndarray) -> sp.csr_matrix:
    rows = np.repeat(mesh.triangles, 3, axis=1).ravel()
    cols = np.tile(mesh.triangles, (1, 3)).ravel()
    D = mesh.n_dofs
    return sp.csr_matrix((local.ravel(), (rows, cols)), shape=(D, D))


def _local_stiffness(mesh: Mesh) -> np.ndarray:
    g = mesh.basis_gradients()
    area = mesh.signed_areas()
    return area[:, None, None] * np.einsum("tid,tjd->tij", g, g)


def stiffness_matrix(mesh: Mesh, coeff: np.ndarray) -> sp.csr_matrix:
    """Unconstrained stiffness for a per-triangle constant coefficient."""
    coeff = np.asarray(coeff, dtype=float)
    if coeff.shape != (len(mesh.triangles),):
        raise ValueError(
            f"expected {len(mesh.triangles)} coefficient values, got shape {coeff.shape}"
        )
    if not np.all(coeff > 0):
        bad = int(np.flatnonzero(~(coeff > 0))[0])
        raise EllipticityError(
            f"diffusion coefficient must be > 0, triangle {bad} has {coeff[bad]!r}"
        )
    return _scatter(mesh, coeff[:, None, None] * _local_stiffness(mesh))


def mass_matrix(mesh: Mesh) -> sp.csr_matrix:
    area = mesh.signed_areas()
    return _scatter(mesh, area[:, None, None] * _LOCAL_MASS[None])


def gram_matrix(mesh: Mesh) -> sp.csr_matrix:
    """H^1 Gram matrix: exact P1 mass plus unit-coefficient stiffness."""
    return (mass_matrix(mesh) + _scatter(mesh, _local_stiffness(mesh))).tocsr()


def load_vector(mesh: Mesh, rhs: Callable) -> np.ndarray:
    """Barycenter-quadrature load vector; ``rhs`` takes arrays (x1, x2)."""
    c = mesh.barycenters()
    fvals = np.broadcast_to(np.asarray(rhs(c[:, 0], c[:, 1]), dtype=float), (len(c),))
    contrib = np.repeat((fvals * mesh.signed_areas() / 3.0)[:, None], 3, axis=1)
    return np.bincount(mesh.triangles.ravel(), contrib.ravel(), minlength=mesh.n_dofs)


def apply_dirichlet(mesh: Mesh, matrix: sp.spmatrix, load: np.ndarray):
    keep = sp.diags((~mesh.boundary_mask).astype(float))
    fixed = sp.diags(mesh.boundary_mask.astype(float))
    constrained = (keep @ matrix @ keep + fixed).tocsr()
    constrained.eliminate_zeros()
    load = np.where(mesh.boundary_mask, 0.0, load)
    return constrained, load


@dataclass(frozen=True)
class FemSystem:
    stiffness: sp.csr_matrix
    load: np.ndarray
    gram: sp.csr_matrix

    @property
    def D(self) -> int:
        return self.stiffness.shape[0]


class StiffnessAssembler:
    """Constrained stiffness assembly with the sparsity pattern precomputed.

    Produces the same matrix as ``apply_dirichlet(stiffness_matrix(...))``
    but only a weighted bincount runs per coefficient.
    """

    def __init__(self, mesh: Mesh):
        self.mesh = mesh
        self._local = _local_stiffness(mesh).ravel()
        ones = _scatter(mesh, np.ones((len(mesh.triangles), 3, 3)))
        ones.sort_indices()
        self._indptr, self._indices = ones.indptr, ones.indices
        D = mesh.n_dofs
        entry_row = np.repeat(np.arange(D), np.diff(self._indptr))
        rows = np.repeat(mesh.triangles, 3, axis=1).ravel()
        cols = np.tile(mesh.triangles, (1, 3)).ravel()
        # CSR entries with sorted indices are ordered by the key row * D + col.
        self._slot = np.searchsorted(entry_row * D + self._indices, rows * D + cols)
        bmask = mesh.boundary_mask
        self._constrained = bmask[entry_row] | bmask[self._indices]
        self._boundary_diag = np.flatnonzero(bmask[entry_row] & (entry_row == self._indices))

    def __call__(self, coeff) -> sp.csr_matrix:
        coeff = np.asarray(coeff, dtype=float)
        T = len(self.mesh.triangles)
        if coeff.shape != (T,):
            raise ValueError(f"expected {T} coefficient values, got shape {coeff.shape}")
        if not np.all(coeff > 0):
            bad = int(np.flatnonzero(~(coeff > 0))[0])
            raise EllipticityError(
                f"diffusion coefficient must be > 0, triangle {bad} has {coeff[bad]!r}"
            )
        weights = np.repeat(coeff, 9) * self._local
        data = np.bincount(self._slot, weights, minlength=len(self._indices))
        data[self._constrained] = 0.0
        data[self._boundary_diag] = 1.0
        D = self.mesh.n_dofs
        B = sp.csr_matrix((data, self._indices.copy(), self._indptr.copy()), shape=(D, D))
        B.eliminate_zeros()
        return B


def assemble_system(mesh: Mesh, coeff_at_barycenters, rhs: Callable, gram=None) -> FemSystem:
    """Assemble the Dirichlet-constrained Galerkin system.

    ``gram`` may be passed in to reuse a matrix already built for ``mesh``.
    """
    B = stiffness_matrix(mesh, coeff_at_barycenters)
    B, f = apply_dirichlet(mesh, B, load_vector(mesh, rhs))
    if gram is None:
        gram = gram_matrix(mesh)
    return FemSystem(B, f, gram)


def solve(system: FemSystem) -> np.ndarray:
    B, f = system.stiffness, system.load
    D = system.D
    if not np.any(f):
        return np.zeros(D)
    if D <= DIRECT_SOLVE_MAX_DOFS:
        lu = spla.splu(B.tocsc(), permc_spec="MMD_AT_PLUS_A",
                       options={"SymmetricMode": True})
        u = lu.solve(f)
    else:
        maxiter = int(50 * np.sqrt(D))
        u, info = spla.cg(B, f, rtol=CG_RTOL, atol=0.0, maxiter=maxiter)
        if info != 0:
            raise SolverError(f"CG did not converge within {maxiter} iterations")
    # Constrained rows are decoupled identity rows with zero load.
    u[_identity_rows(B) & (f == 0)] = 0.0
    return u


def _identity_rows(B: sp.csr_matrix) -> np.ndarray:
    counts = np.diff(B.indptr)
    return (counts == 1) & (B.diagonal() == 1.0)


def residual(system: FemSystem, u: np.ndarray) -> float:
    """Relative residual |Bu - f| / |f|."""
    nf = np.linalg.norm(system.load)
    r = np.linalg.norm(system.stiffness @ u - system.load)
    return r / nf if nf > 0 else r


def gram_norm(v, gram) -> float:
    v = np.asarray(v, dtype=float)
    if v.ndim != 1 or v.shape[0] != gram.shape[0]:
        raise ValueError(f"vector of length {v.shape} does not match Gram matrix {gram.shape}")
    return float(np.sqrt(max(v @ (gram @ v), 0.0)))


def relative_error(x1, x2, gram) -> float:
    denom = gram_norm(x2, gram)
    if denom == 0.0:
        raise ZeroDivisionError("reference vector has zero Gram norm")
    return gram_norm(np.asarray(x1, dtype=float) - np.asarray(x2, dtype=float), gram) / denom


def h1_error(mesh: Mesh, u: np.ndarray, exact: Callable, exact_grad: Callable) -> float:
    """H^1 distance between the P1 function ``u`` and a smooth exact solution.

    ``exact(x1, x2)`` returns values, ``exact_grad(x1, x2)`` returns a pair
    of partial derivatives; both are sampled with a degree-4 rule.
    """
    p = mesh.vertices[mesh.triangles]
    area = mesh.signed_areas()
    grads = mesh.basis_gradients()
    uloc = u[mesh.triangles]
    uh_grad = np.einsum("ti,tid->td", uloc, grads)
    total = 0.0
    for bary, w in zip(QUAD_BARY, QUAD_WEIGHTS):
        x = np.einsum("i,tid->td", bary, p)
        uh = uloc @ bary
        ex = exact(x[:, 0], x[:, 1])
        gx, gy = exact_grad(x[:, 0], x[:, 1])
        err = (uh - ex) ** 2 + (uh_grad[:, 0] - gx) ** 2 + (uh_grad[:, 1] - gy) ** 2
        total += w * np.sum(area * err)
    return float(np.sqrt(total))


def manufactured_problem():
    """u = sin(pi x1) sin(pi x2) with a = 1 and f = 2 pi^2 u."""

    def exact(x1, x2):
        return np.sin(np.pi * x1) * np.sin(np.pi * x2)

    def exact_grad(x1, x2):
        return (
            np.pi * np.cos(np.pi * x1) * np.sin(np.pi * x2),
            np.pi * np.sin(np.pi * x1) * np.cos(np.pi * x2),
        )

    def rhs(x1, x2):
        return 2 * np.pi**2 * exact(x1, x2)

    return exact, exact_grad, rhs


def verify(mesh_sizes=(17, 33)) -> list:
    """Manufactured-solution check: rows of (n, h1 error, relative residual)."""
    exact, exact_grad, rhs = manufactured_problem()
    rows = []
    for n in mesh_sizes:
        mesh = build_mesh(n)
        system = assemble_system(mesh, np.ones(len(mesh.triangles)), rhs)
        u = solve(system)
        rows.append((n, h1_error(mesh, u, exact, exact_grad), residual(system, u)))
    return rows
