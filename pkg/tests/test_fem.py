"""FEM dispersion tests: mesh arithmetic, assembly oracles, Bloch reduction,
analytic resonances, scaling laws, and mesh-refinement behavior."""

import numpy as np
import pytest

from wave_elastix import fem
from wave_elastix.errors import (
    ConstitutiveSingularityError,
    InvalidGeometryError,
    InvalidMaterialError,
    OutOfRangeError,
    ValidationError,
)

MAT = fem.Material(elastic_modulus=1e4, poisson_ratio=0.45, density=1000.0)


def small_geometry(e=0.001):
    return fem.LayerGeometry(thickness=0.01, cell_length=0.004, element_size=e)


class TestMeshArithmetic:
    def test_square_cell(self):
        mesh = fem.build_mesh(fem.LayerGeometry(0.01, 0.01, 0.0005))
        assert (mesh.nx, mesh.ny) == (20, 20)
        assert mesh.n_nodes == 21 * 21
        assert mesh.elements.shape == (400, 4)

    def test_narrow_cell(self):
        mesh = fem.build_mesh(fem.LayerGeometry(0.01, 0.001, 0.0005))
        assert (mesh.nx, mesh.ny) == (2, 20)

    def test_appendix_element_count(self):
        # e = 0.5 mm with T = 10 mm, a = 6 mm gives the appendix's 240 elements
        geom = fem.LayerGeometry(0.01, 0.006, 0.0005)
        mesh = fem.build_mesh(geom)
        assert mesh.nx * mesh.ny == 240

    def test_edge_sets_aligned(self):
        mesh = fem.build_mesh(small_geometry())
        assert len(mesh.left_nodes) == len(mesh.right_nodes)
        np.testing.assert_allclose(
            mesh.coords[mesh.left_nodes, 1], mesh.coords[mesh.right_nodes, 1]
        )
        assert np.all(mesh.coords[mesh.bottom_nodes, 1] == 0.0)

    def test_oversized_element_rejected(self):
        with pytest.raises(InvalidGeometryError):
            fem.LayerGeometry(0.01, 0.004, 0.005)
        with pytest.raises(InvalidGeometryError):
            fem.LayerGeometry(0.004, 0.01, 0.005)

    @pytest.mark.parametrize("thickness,cell,e", [(0.02, 0.008, 0.002), (0.013, 0.0052, 0.00065)])
    def test_counts_follow_rounding(self, thickness, cell, e):
        geom = fem.LayerGeometry(thickness, cell, e)
        assert geom.n_elements_x == round(cell / e)
        assert geom.n_elements_y == round(thickness / e)


class TestMaterial:
    def test_invariants(self):
        with pytest.raises(InvalidMaterialError):
            fem.Material(-1.0)
        with pytest.raises(InvalidMaterialError):
            fem.Material(1e4, poisson_ratio=0.5)
        with pytest.raises(InvalidMaterialError):
            fem.Material(1e4, poisson_ratio=0.0)
        with pytest.raises(InvalidMaterialError):
            fem.Material(1e4, density=0.0)

    def test_wave_speeds(self):
        assert MAT.shear_wave_speed == pytest.approx(1.857, rel=1e-3)
        assert MAT.pressure_wave_speed == pytest.approx(6.16, rel=1e-3)

    def test_constitutive_singularity(self):
        with pytest.raises(ConstitutiveSingularityError):
            fem.constitutive_matrix(1e4, 0.5)

    def test_constitutive_diagonal_entry(self):
        D = fem.constitutive_matrix(1e4, 0.45)
        expected = 1e4 * (1 - 0.45) / ((1 + 0.45) * (1 - 0.9))
        assert D[0, 0] == pytest.approx(expected, rel=1e-14)
        assert D[1, 1] == pytest.approx(expected, rel=1e-14)


class TestAssembly:
    def test_single_element_rigid_modes(self):
        # unconstrained element stiffness: exactly 3 zero eigenvalues
        Ke, _ = fem.element_matrices(0.001, 0.001, MAT)
        lam = np.linalg.eigvalsh(Ke)
        assert np.sum(np.abs(lam) < 1e-9 * lam.max()) == 3
        assert np.all(lam > -1e-9 * lam.max())

    def test_stiffness_linear_in_modulus(self):
        mesh = fem.build_mesh(small_geometry())
        K1, M1 = fem.assemble(mesh, MAT)
        K2, M2 = fem.assemble(mesh, fem.Material(2e4, 0.45, 1000.0))
        assert np.allclose((K2 - 2 * K1).data if (K2 - 2 * K1).nnz else [0.0], 0.0, atol=1e-9)
        assert (M2 - M1).nnz == 0

    def test_total_mass(self):
        geom = small_geometry()
        mesh = fem.build_mesh(geom)
        _, M = fem.assemble(mesh, MAT)
        ex = np.zeros(mesh.n_dof)
        ex[0::2] = 1.0
        total = ex @ (M @ ex)
        expected = MAT.density * geom.cell_length * geom.thickness
        assert total == pytest.approx(expected, rel=1e-12)

    def test_global_matrices_symmetric_and_definite(self):
        mesh = fem.build_mesh(small_geometry(0.002))
        K, M = fem.assemble(mesh, MAT)
        assert (K - K.T).nnz == 0
        assert (M - M.T).nnz == 0
        lam_m = np.linalg.eigvalsh(M.toarray())
        assert lam_m.min() > 0
        lam_k = np.linalg.eigvalsh(K.toarray())
        assert lam_k.min() > -1e-9 * lam_k.max()


@pytest.fixture(scope="module")
def system():
    geom = small_geometry()
    mesh = fem.build_mesh(geom)
    K, M = fem.assemble(mesh, MAT)
    return geom, mesh, K, M


class TestBloch:
    @pytest.mark.parametrize("gamma", [0.0, 123.4, 500.0, np.pi / 0.004])
    def test_hermitian_to_machine_precision(self, system, gamma):
        _, mesh, K, M = system
        Kg, Mg = fem.apply_bloch(K, M, mesh, gamma)
        assert np.abs((Kg - Kg.conj().T).toarray()).max() == 0.0
        assert np.abs((Mg - Mg.conj().T).toarray()).max() == 0.0

    @pytest.mark.parametrize("gamma,sign", [(0.0, 1.0), (np.pi / 0.004, -1.0)])
    def test_zone_edges_real_and_match_direct_reduction(self, system, gamma, sign):
        _, mesh, K, M = system
        Kg, Mg = fem.apply_bloch(K, M, mesh, gamma)
        assert np.abs(Kg.imag.toarray() if hasattr(Kg, "imag") else 0).max() == 0.0

        # independent real periodic/antiperiodic reduction as an oracle
        import scipy.sparse as sp

        fixed = set(mesh.bottom_nodes.tolist())
        partner = dict(zip(mesh.right_nodes.tolist(), mesh.left_nodes.tolist()))
        slaves = [n for n in mesh.right_nodes.tolist() if n not in fixed]
        masters = [n for n in range(mesh.n_nodes) if n not in fixed and n not in set(slaves)]
        col = {n: i for i, n in enumerate(masters)}
        rows, cols, vals = [], [], []
        for n in masters:
            for c in (0, 1):
                rows.append(2 * n + c), cols.append(2 * col[n] + c), vals.append(1.0)
        for n in slaves:
            for c in (0, 1):
                rows.append(2 * n + c), cols.append(2 * col[partner[n]] + c), vals.append(sign)
        P = sp.coo_matrix((vals, (rows, cols)), shape=(mesh.n_dof, 2 * len(masters))).tocsr()
        K_direct = (P.T @ K @ P).toarray()
        M_direct = (P.T @ M @ P).toarray()
        w_bloch = fem.solve_branches(*fem.apply_bloch(K, M, mesh, gamma), 6)
        import scipy.linalg

        lam = scipy.linalg.eigh(K_direct, M_direct, eigvals_only=True)[:6]
        w_direct = np.sqrt(np.clip(lam, 0, None))
        np.testing.assert_allclose(w_bloch, w_direct, rtol=1e-10)

    def test_gamma_out_of_range(self, system):
        _, mesh, K, M = system
        with pytest.raises(OutOfRangeError):
            fem.apply_bloch(K, M, mesh, -1.0)
        with pytest.raises(OutOfRangeError):
            fem.apply_bloch(K, M, mesh, 1.01 * np.pi / 0.004)

    def test_mass_pencil_positive_definite(self, system):
        _, mesh, K, M = system
        _, Mg = fem.apply_bloch(K, M, mesh, 321.0)
        lam = np.linalg.eigvalsh(Mg.toarray())
        assert lam.min() > 0

    def test_too_many_branches_rejected(self, system):
        _, mesh, K, M = system
        Kg, Mg = fem.apply_bloch(K, M, mesh, 100.0)
        with pytest.raises(ValidationError):
            fem.solve_branches(Kg, Mg, Kg.shape[0] + 1)


@pytest.fixture(scope="module")
def zone_center_freqs():
    T = 0.01
    geom = fem.LayerGeometry(T, 0.002, T / 40)
    mesh = fem.build_mesh(geom)
    K, M = fem.assemble(mesh, MAT)
    Kg, Mg = fem.apply_bloch(K, M, mesh, 0.0)
    return fem.solve_branches(Kg, Mg, 8) / (2 * np.pi)


class TestAnalyticResonances:
    """gamma = 0 thickness resonances of the fixed-bottom layer, e = T/40."""

    def test_thickness_shear_fundamental(self, zone_center_freqs):
        f_shear = MAT.shear_wave_speed / (4 * 0.01)  # ~46.4 Hz
        assert f_shear == pytest.approx(46.42, abs=0.01)
        assert abs(zone_center_freqs[0] - f_shear) / f_shear < 0.01

    def test_longitudinal_family(self, zone_center_freqs):
        f_p = MAT.pressure_wave_speed / (4 * 0.01)  # ~154 Hz
        assert f_p == pytest.approx(153.97, abs=0.01)
        rel = np.min(np.abs(zone_center_freqs - f_p) / f_p)
        assert rel < 0.01

    def test_rayleigh_asymptote(self):
        # lowest branch phase velocity approaches the Viktorov speed for gamma*T >= 6
        geom = fem.LayerGeometry(0.01, 0.004, 0.00025)
        mesh = fem.build_mesh(geom)
        K, M = fem.assemble(mesh, MAT)
        c_R = MAT.rayleigh_wave_speed
        for gamma in (600.0, 700.0, 785.0):
            Kg, Mg = fem.apply_bloch(K, M, mesh, gamma)
            omega = fem.solve_branches(Kg, Mg, 1)[0]
            assert abs(omega / gamma - c_R) / c_R < 0.03


@pytest.fixture(scope="module")
def base_curves():
    gammas = fem.gamma_grid(0.004, 12)
    return fem.dispersion_curves(small_geometry(), MAT, gammas, n_branches=6)


class TestDispersionCurves:
    def test_appendix_grid_shape(self):
        gammas = fem.gamma_grid(0.004, 60)
        assert gammas.size == 60
        assert gammas[0] > 0
        assert gammas[-1] == pytest.approx(np.pi / 0.004)
        curves = fem.dispersion_curves(
            fem.LayerGeometry(0.01, 0.004, 0.002), MAT, gammas, n_branches=12
        )
        assert curves.branches.shape == (12, 60)

    def test_columns_sorted(self, base_curves):
        assert np.all(np.diff(base_curves.branches, axis=0) >= 0)

    def test_all_nonnegative(self, base_curves):
        assert np.all(base_curves.branches >= 0)

    def test_gamma_grid_include_zero(self):
        g = fem.gamma_grid(0.004, 5, include_zero=True)
        assert g[0] == 0.0
        assert g[-1] == pytest.approx(np.pi / 0.004)

    def test_stiffness_scaling_law(self, base_curves):
        gammas = base_curves.gamma_grid
        quad = fem.dispersion_curves(
            small_geometry(), fem.Material(4e4, 0.45, 1000.0), gammas, n_branches=6
        )
        np.testing.assert_allclose(quad.branches, 2.0 * base_curves.branches, rtol=1e-10)

    def test_density_scaling_law(self, base_curves):
        gammas = base_curves.gamma_grid
        heavy = fem.dispersion_curves(
            small_geometry(), fem.Material(1e4, 0.45, 4000.0), gammas, n_branches=6
        )
        np.testing.assert_allclose(heavy.branches, 0.5 * base_curves.branches, rtol=1e-10)

    def test_scale_stiffness_identity_and_quadrupling(self, base_curves):
        same = fem.scale_stiffness(base_curves, base_curves.stiffness)
        np.testing.assert_array_equal(same.branches, base_curves.branches)
        doubled = fem.scale_stiffness(base_curves, 4 * base_curves.stiffness)
        np.testing.assert_allclose(doubled.branches, 2 * base_curves.branches, rtol=1e-15)
        assert doubled.stiffness == 4 * base_curves.stiffness

    def test_scale_stiffness_matches_direct_solve(self, base_curves):
        direct = fem.dispersion_curves(
            small_geometry(), fem.Material(2.7e4, 0.45, 1000.0), base_curves.gamma_grid, n_branches=6
        )
        scaled = fem.scale_stiffness(base_curves, 2.7e4)
        np.testing.assert_allclose(scaled.branches, direct.branches, rtol=1e-10)

    def test_scale_stiffness_rejects_nonpositive(self, base_curves):
        with pytest.raises(InvalidMaterialError):
            fem.scale_stiffness(base_curves, 0.0)

    def test_random_modulus_homogeneity(self, base_curves):
        rng = np.random.default_rng(7)
        for _ in range(3):
            c = float(rng.uniform(0.2, 5.0))
            scaled = fem.scale_stiffness(base_curves, c * base_curves.stiffness)
            np.testing.assert_allclose(
                scaled.branches, np.sqrt(c) * base_curves.branches, rtol=1e-12
            )


class TestEigenPaths:
    def test_dense_vs_iterative(self):
        geom = small_geometry(0.0005)
        mesh = fem.build_mesh(geom)
        K, M = fem.assemble(mesh, MAT)
        Kg, Mg = fem.apply_bloch(K, M, mesh, 450.0)
        dense = fem.solve_branches(Kg, Mg, 8, method="dense")
        iterative = fem.solve_branches(Kg, Mg, 8, method="iterative")
        np.testing.assert_allclose(iterative, dense, rtol=1e-8)


class TestMeshRefinement:
    def test_eigenvalues_monotone_non_increasing(self):
        # conforming bilinear spaces are nested under halving: min-max applies
        gammas = fem.gamma_grid(0.004, 4)
        prev = None
        for e in (0.002, 0.001, 0.0005):
            curves = fem.dispersion_curves(
                fem.LayerGeometry(0.01, 0.004, e), MAT, gammas, n_branches=5
            )
            if prev is not None:
                assert np.all(curves.branches <= prev * (1 + 1e-12))
            prev = curves.branches

    def test_halving_changes_below_one_percent(self):
        # appendix's finest pair on the desk-scale cell
        gammas = fem.gamma_grid(0.004, 6)
        coarse = fem.dispersion_curves(
            fem.LayerGeometry(0.01, 0.004, 0.00025), MAT, gammas, n_branches=5
        )
        fine = fem.dispersion_curves(
            fem.LayerGeometry(0.01, 0.004, 0.000125), MAT, gammas, n_branches=5
        )
        rel = np.abs(fine.branches - coarse.branches) / fine.branches
        assert rel.max() < 0.01


class TestCurvesCsv:
    def test_round_trip(self):
        curves = fem.dispersion_curves(
            small_geometry(0.002), MAT, fem.gamma_grid(0.004, 5), n_branches=3
        )
        text = fem.curves_to_csv(curves)
        assert text.splitlines()[0] == "gamma_rad_per_m,omega_1,omega_2,omega_3"
        back = fem.curves_from_csv(text, cell_length=curves.cell_length)
        np.testing.assert_array_equal(back.gamma_grid, curves.gamma_grid)
        np.testing.assert_array_equal(back.branches, curves.branches)

    def test_single_gamma_row(self):
        curves = fem.dispersion_curves(
            small_geometry(0.002), MAT, np.array([500.0]), n_branches=3
        )
        text = fem.curves_to_csv(curves)
        lines = text.strip().splitlines()
        assert len(lines) == 2  # header + one row
