import numpy as np
import pytest
import scipy.sparse as sp

from ppde import fem
from ppde.dataset import SolutionMap, rhs
from ppde.coefficients import chessboard


def shoelace_area(p):
    x, y = p[:, 0], p[:, 1]
    return 0.5 * abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def element_loop_h1_squared(mesh, v):
    """Independent integration of v^2 + |grad v|^2, one triangle at a time."""
    total = 0.0
    for tri in mesh.triangles:
        p = mesh.vertices[tri]
        vals = v[tri]
        J = np.column_stack([p[1] - p[0], p[2] - p[0]])
        area = 0.5 * abs(np.linalg.det(J))
        # grad v solves J^T g = (v1 - v0, v2 - v0)
        g = np.linalg.solve(J.T, vals[1:] - vals[0])
        # v^2 is quadratic: the edge-midpoint rule is exact.
        mids = 0.5 * (vals + np.roll(vals, -1))
        total += area * (np.mean(mids**2) + g @ g)
    return total


class TestMesh:
    def test_full_profile_grid_dimension(self):
        assert fem.build_mesh(101).n_dofs == 10201
        assert len(fem.build_mesh(101).vertices) == 10201

    def test_smallest_mesh_counts(self):
        mesh = fem.build_mesh(3)
        assert len(mesh.vertices) == 9
        assert len(mesh.triangles) == 8
        assert mesh.boundary_mask.sum() == 8

    def test_area_sums_to_one(self):
        mesh = fem.build_mesh(33)
        areas = [shoelace_area(mesh.vertices[t]) for t in mesh.triangles]
        assert abs(sum(areas) - 1.0) < 1e-12

    @pytest.mark.parametrize("n", [3, 4, 9, 17])
    def test_invariants(self, n):
        mesh = fem.build_mesh(n)
        assert len(mesh.triangles) == 2 * (n - 1) ** 2
        assert np.all(mesh.signed_areas() > 0)
        h = 1.0 / (n - 1)
        np.testing.assert_allclose(mesh.signed_areas(), h * h / 2)
        on_edge = np.any((mesh.vertices == 0.0) | (mesh.vertices == 1.0), axis=1)
        np.testing.assert_array_equal(mesh.boundary_mask, on_edge)

    def test_each_cell_split_along_rising_diagonal(self):
        mesh = fem.build_mesh(5)
        h = 0.25
        cells = {}
        for tri in mesh.triangles:
            lo = mesh.vertices[tri].min(axis=0)
            cells.setdefault(tuple(np.round(lo / h).astype(int)), []).append(tri)
        assert len(cells) == 16
        for (i, j), tris in cells.items():
            assert len(tris) == 2
            shared = set(tris[0]) & set(tris[1])
            corners = {j * 5 + i, (j + 1) * 5 + i + 1}
            assert shared == corners

    @pytest.mark.parametrize("n", [0, 2, -1])
    def test_rejects_small_n(self, n):
        with pytest.raises(ValueError):
            fem.build_mesh(n)


class TestAssembly:
    def test_zero_rhs_gives_zero(self):
        mesh = fem.build_mesh(9)
        system = fem.assemble_system(mesh, np.ones(len(mesh.triangles)), lambda x1, x2: 0 * x1)
        np.testing.assert_array_equal(fem.solve(system), 0.0)

    def test_constant_coefficient_scaling(self):
        mesh = fem.build_mesh(17)
        T = len(mesh.triangles)
        u1 = fem.solve(fem.assemble_system(mesh, np.ones(T), rhs))
        u2 = fem.solve(fem.assemble_system(mesh, 2 * np.ones(T), rhs))
        np.testing.assert_allclose(u2, u1 / 2, rtol=1e-12, atol=1e-15)

    def test_rejects_nonpositive_coefficient(self):
        mesh = fem.build_mesh(5)
        coeff = np.ones(len(mesh.triangles))
        coeff[3] = 0.0
        with pytest.raises(fem.EllipticityError):
            fem.assemble_system(mesh, coeff, rhs)
        with pytest.raises(fem.EllipticityError):
            fem.StiffnessAssembler(mesh)(coeff)

    def test_cached_assembler_matches_direct(self):
        mesh = fem.build_mesh(12)
        coeff = np.random.default_rng(0).uniform(0.1, 3, len(mesh.triangles))
        B1, _ = fem.apply_dirichlet(mesh, fem.stiffness_matrix(mesh, coeff), np.zeros(144))
        B2 = fem.StiffnessAssembler(mesh)(coeff)
        assert abs(B1 - B2).max() < 1e-13

    def test_symmetry_exact(self):
        mesh = fem.build_mesh(17)
        coeff = np.random.default_rng(1).uniform(0.1, 2, len(mesh.triangles))
        system = fem.assemble_system(mesh, coeff, rhs)
        assert abs(system.gram - system.gram.T).max() == 0
        assert abs(system.stiffness - system.stiffness.T).max() == 0

    def test_spd(self):
        mesh = fem.build_mesh(9)
        coeff = np.random.default_rng(2).uniform(0.01, 2, len(mesh.triangles))
        system = fem.assemble_system(mesh, coeff, rhs)
        rng = np.random.default_rng(3)
        for _ in range(100):
            x = rng.normal(size=mesh.n_dofs)
            assert x @ (system.gram @ x) > 0
            assert x @ (system.stiffness @ x) > 0
        assert np.linalg.eigvalsh(system.stiffness.toarray()).min() > 0
        assert np.linalg.eigvalsh(system.gram.toarray()).min() > 0


class TestSolve:
    def test_manufactured_convergence(self):
        exact, grad, f = fem.manufactured_problem()
        errors = []
        for n in (17, 33):
            mesh = fem.build_mesh(n)
            system = fem.assemble_system(mesh, np.ones(len(mesh.triangles)), f)
            u = fem.solve(system)
            assert fem.residual(system, u) <= 1e-10
            errors.append(fem.h1_error(mesh, u, exact, grad))
        assert 1.7 <= errors[0] / errors[1] <= 2.3

    def test_h1_error_of_interpolant_oracle(self):
        # For u = x1 (linear), the P1 interpolant is exact: error must vanish.
        mesh = fem.build_mesh(9)
        u = mesh.vertices[:, 0].copy()
        err = fem.h1_error(mesh, u, lambda a, b: a, lambda a, b: (np.ones_like(a), 0 * b))
        assert err < 1e-12

    def test_chessboard_solution_positive(self):
        sm = SolutionMap(chessboard(3, 0.1), 33)
        u = sm(np.ones(9))
        assert np.all(u[sm.mesh.interior] > 0)

    def test_boundary_exact_zero_and_galerkin(self):
        sm = SolutionMap(chessboard(2, 0.01), 17)
        system = sm.system(np.array([0.3, 0.9, 0.1, 0.5]))
        u = fem.solve(system)
        assert np.all(u[sm.mesh.boundary_mask] == 0.0)
        r = system.stiffness @ u - system.load
        assert np.max(np.abs(r[sm.mesh.interior])) <= 1e-9 * np.linalg.norm(system.load)

    def test_cg_branch(self, monkeypatch):
        sm = SolutionMap(chessboard(2, 0.1), 17)
        system = sm.system(np.full(4, 0.5))
        direct = fem.solve(system)
        monkeypatch.setattr(fem, "DIRECT_SOLVE_MAX_DOFS", 0)
        u = fem.solve(system)
        assert fem.residual(system, u) <= 1e-10
        assert np.all(u[sm.mesh.boundary_mask] == 0.0)
        np.testing.assert_allclose(u, direct, rtol=1e-8, atol=1e-12)

    def test_cg_failure(self, monkeypatch):
        sm = SolutionMap(chessboard(2, 0.1), 9)
        system = sm.system(np.full(4, 0.5))
        monkeypatch.setattr(fem, "DIRECT_SOLVE_MAX_DOFS", 0)
        monkeypatch.setattr(fem.spla, "cg", lambda *a, **k: (np.zeros(81), 7))
        with pytest.raises(fem.SolverError):
            fem.solve(system)


class TestGramNorm:
    def test_zero(self):
        G = fem.gram_matrix(fem.build_mesh(5))
        assert fem.gram_norm(np.zeros(25), G) == 0.0

    def test_matches_element_loop(self):
        mesh = fem.build_mesh(9)
        G = fem.gram_matrix(mesh)
        rng = np.random.default_rng(4)
        for _ in range(5):
            v = rng.normal(size=mesh.n_dofs)
            expected = element_loop_h1_squared(mesh, v)
            assert abs(fem.gram_norm(v, G) ** 2 - expected) <= 1e-10 * expected

    def test_homogeneity(self):
        G = fem.gram_matrix(fem.build_mesh(9))
        v = np.random.default_rng(5).normal(size=81)
        assert abs(fem.gram_norm(2 * v, G) - 2 * fem.gram_norm(v, G)) <= 1e-12 * fem.gram_norm(v, G)

    def test_dimension_mismatch(self):
        G = fem.gram_matrix(fem.build_mesh(5))
        with pytest.raises(ValueError):
            fem.gram_norm(np.ones(24), G)

    def test_constant_function_norm(self):
        # Unit constant: L2 part is area 1, gradient part 0.
        G = fem.gram_matrix(fem.build_mesh(7))
        assert abs(fem.gram_norm(np.ones(49), G) - 1.0) < 1e-12


class TestRelativeError:
    def test_identical(self):
        G = fem.gram_matrix(fem.build_mesh(5))
        x = np.random.default_rng(6).normal(size=25)
        assert fem.relative_error(x, x, G) == 0.0

    def test_double(self):
        G = fem.gram_matrix(fem.build_mesh(5))
        x = np.random.default_rng(7).normal(size=25)
        assert fem.relative_error(2 * x, x, G) == pytest.approx(1.0, abs=1e-14)

    def test_identity_gram(self):
        G = sp.identity(2, format="csr")
        assert fem.relative_error([1.0, 0.0], [0.0, 1.0], G) == pytest.approx(np.sqrt(2), abs=1e-15)

    def test_zero_reference(self):
        G = sp.identity(3, format="csr")
        with pytest.raises(ZeroDivisionError):
            fem.relative_error(np.ones(3), np.zeros(3), G)


def test_vectorized_oracle_agrees_with_loop():
    from test_acceptance import per_element_h1_squared

    mesh = fem.build_mesh(7)
    v = np.random.default_rng(8).normal(size=49)
    assert per_element_h1_squared(mesh, v) == pytest.approx(element_loop_h1_squared(mesh, v), rel=1e-13)
