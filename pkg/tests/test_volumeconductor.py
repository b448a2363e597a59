"""Field-solver tests: mesh construction bands, the analytic ball-electrode
oracle, power balance, linearity and interpolation."""

import numpy as np
import pytest

from axonuq.volumeconductor import (ElectrodeGeometry, PointOutsideMeshError,
                                    assemble_solve, build_mesh,
                                    build_spherical_shell_mesh,
                                    contact_mean_potential, dissipated_power,
                                    eval_at_points, point_source_potential)


@pytest.fixture(scope="module")
def geom():
    return ElectrodeGeometry()


@pytest.fixture(scope="module")
def desk_mesh(geom):
    return build_mesh(geom, 5000)


@pytest.fixture(scope="module")
def desk_solution(desk_mesh):
    sigma = 0.1 + 0.001j
    return assemble_solve(desk_mesh, sigma, sigma, omega=2 * np.pi * 130), sigma


class TestGeometry:
    def test_defaults_valid(self, geom):
        assert geom.array_span == pytest.approx(10.5e-3)
        lo, hi = geom.contact_z_interval(2)
        assert hi - lo == pytest.approx(1.5e-3)
        assert geom.active_contact_center_z == pytest.approx(0.5 * (lo + hi))

    def test_invalid_rejected(self):
        with pytest.raises(ValueError):
            ElectrodeGeometry(lead_radius=-1.0)
        with pytest.raises(ValueError):
            ElectrodeGeometry(active_contact_index=9)
        with pytest.raises(ValueError):
            ElectrodeGeometry(encapsulation_thickness=60e-3)


class TestBuildMesh:
    def test_count_band_default_target(self, geom):
        mesh = build_mesh(geom, 27000)
        assert 0.8 * 27000 <= mesh.n_triangles <= 1.2 * 27000

    def test_coarse_smoke(self, geom):
        mesh = build_mesh(geom, 500)
        assert 0.8 * 500 <= mesh.n_triangles <= 1.2 * 500
        b, c, area, rbar = mesh._geometry()
        assert np.all(area > 0)
        assert np.all(mesh.nodes[:, 0] >= geom.lead_radius - 1e-15)
        assert set(np.unique(mesh.region)) == {0, 1}

    def test_encapsulation_layers(self, geom, desk_mesh):
        enc_limit = geom.lead_radius + geom.encapsulation_thickness
        r_lines = np.unique(desk_mesh.nodes[:, 0])
        inside = r_lines[(r_lines >= geom.lead_radius - 1e-12) & (r_lines <= enc_limit + 1e-12)]
        assert inside.size - 1 >= 3

    def test_refinement_shrinks_cells_near_contact(self, geom):
        def near_contact_diameter(target):
            mesh = build_mesh(geom, target)
            zc = geom.active_contact_center_z
            t = mesh.triangles
            pts = mesh.nodes[t]
            cent_r = pts[:, :, 0].mean(axis=1)
            cent_z = pts[:, :, 1].mean(axis=1)
            near = (cent_r < geom.lead_radius + 1e-3) & (np.abs(cent_z - zc) < 1e-3)
            d1 = np.linalg.norm(pts[near, 0] - pts[near, 1], axis=1)
            d2 = np.linalg.norm(pts[near, 1] - pts[near, 2], axis=1)
            d3 = np.linalg.norm(pts[near, 2] - pts[near, 0], axis=1)
            return np.max(np.concatenate([d1, d2, d3]))

        ratio = near_contact_diameter(4000) / near_contact_diameter(8000)
        # isotropic scaling gives sqrt(2) per doubling; allow a 1.5x band
        assert 2.0 / 1.5 <= ratio <= 2.0 * 1.5

    def test_contact_edges_cover_height(self, geom, desk_mesh):
        lo, hi = geom.contact_z_interval(geom.active_contact_index)
        z = desk_mesh.nodes[:, 1]
        total = sum(abs(z[n2] - z[n1]) for n1, n2 in desk_mesh.injection_edges)
        assert total == pytest.approx(hi - lo, rel=1e-12)


class TestAssembleSolve:
    def test_real_sigma_real_solution(self, desk_mesh):
        sol = assemble_solve(desk_mesh, 0.2, 0.2)
        assert np.max(np.abs(sol.phi.imag)) <= 1e-12 * np.max(np.abs(sol.phi.real))

    def test_scaling_linearity(self, desk_mesh):
        a = assemble_solve(desk_mesh, 0.1, 0.1)
        b = assemble_solve(desk_mesh, 0.3, 0.3)
        np.testing.assert_allclose(b.phi.real, a.phi.real / 3.0, rtol=1e-9, atol=1e-12)

    def test_rejects_nonpositive_real_part(self, desk_mesh):
        with pytest.raises(ValueError):
            assemble_solve(desk_mesh, -0.1 + 0j, 0.1 + 0j)

    def test_grounded_boundary(self, desk_mesh):
        sol = assemble_solve(desk_mesh, 0.1, 0.1)
        assert np.max(np.abs(sol.phi[desk_mesh.dirichlet])) == 0.0

    def test_power_balance(self, desk_mesh):
        sigma = 0.1 + 0.02j
        sol = assemble_solve(desk_mesh, sigma, sigma)
        p = dissipated_power(desk_mesh, sol, sigma, sigma)
        v = contact_mean_potential(desk_mesh, sol)
        assert p.real == pytest.approx((v.conjugate() * 1.0).real, rel=0.01)

    def test_maximum_principle_real_case(self, geom, desk_mesh):
        sol = assemble_solve(desk_mesh, 0.15, 0.15)
        zc = geom.active_contact_center_z
        probes = np.column_stack([np.linspace(2e-3, 30e-3, 12), np.full(12, zc)])
        vals = eval_at_points(sol, desk_mesh, probes).real
        top = np.max(sol.phi.real)
        assert np.all(vals >= -1e-12 * top)
        assert np.all(vals <= top * (1 + 1e-12))

    def test_mesh_convergence_one_percent(self, geom):
        sigma = 0.12
        probe = np.array([[3e-3, geom.active_contact_center_z]])
        vals = []
        for target in (5000, 20000):
            mesh = build_mesh(geom, target)
            sol = assemble_solve(mesh, sigma, sigma)
            vals.append(eval_at_points(sol, mesh, probe).real[0])
        assert abs(vals[1] - vals[0]) / abs(vals[1]) <= 0.01


class TestPointSourceOracle:
    def test_closed_form_value(self):
        got = point_source_potential(0.1, 1e-3)
        assert got == pytest.approx(1.0 / (4 * np.pi * 0.1 * 1e-3), rel=1e-14)
        assert got == pytest.approx(795.7747, rel=1e-6)

    def test_halves_with_doubled_sigma(self):
        assert point_source_potential(0.2, 1e-3) == pytest.approx(
            point_source_potential(0.1, 1e-3) / 2.0, rel=1e-14)

    def test_complex_sigma(self):
        got = point_source_potential(0.1 + 0.1j, 1e-3)
        want = 795.7747154594768 / (1 + 1j)
        assert got == pytest.approx(want, rel=1e-12)

    def test_rejects_bad_input(self):
        with pytest.raises(ValueError):
            point_source_potential(0.1, 0.0)
        with pytest.raises(ValueError):
            point_source_potential(0.0, 1e-3)


class TestSphericalValidation:
    def test_matches_point_source_within_two_percent(self):
        mesh = build_spherical_shell_mesh(0.5e-3, 1.0, target_elements=10000)
        sigma = 0.1
        sol = assemble_solve(mesh, sigma, sigma)
        r = np.array([2e-3, 3e-3, 5e-3, 7e-3, 10e-3])
        got = eval_at_points(sol, mesh, np.column_stack([r, np.zeros_like(r)])).real
        want = point_source_potential(sigma, r).real
        assert np.max(np.abs(got - want) / want) <= 0.02

    def test_self_convergence_one_percent(self):
        sigma = 0.1
        r = np.array([2e-3, 5e-3, 10e-3])
        pts = np.column_stack([r, np.zeros_like(r)])
        vals = []
        for target in (10000, 40000):
            mesh = build_spherical_shell_mesh(0.5e-3, 1.0, target_elements=target)
            sol = assemble_solve(mesh, sigma, sigma)
            vals.append(eval_at_points(sol, mesh, pts).real)
        assert np.max(np.abs(vals[1] - vals[0]) / np.abs(vals[1])) <= 0.01


class TestEvalAtPoints:
    def test_nodal_value_exact(self, desk_mesh, desk_solution):
        sol, _ = desk_solution
        idx = desk_mesh.n_nodes // 3
        got = eval_at_points(sol, desk_mesh, desk_mesh.nodes[idx:idx + 1])
        assert got[0] == pytest.approx(sol.phi[idx], rel=1e-12, abs=1e-15)

    def test_boundary_is_grounded(self, geom, desk_mesh, desk_solution):
        sol, _ = desk_solution
        got = eval_at_points(sol, desk_mesh,
                             [[geom.domain_radius, geom.domain_height / 2]])
        assert abs(got[0]) <= 1e-14

    def test_outside_raises(self, geom, desk_mesh, desk_solution):
        sol, _ = desk_solution
        with pytest.raises(PointOutsideMeshError):
            eval_at_points(sol, desk_mesh, [[geom.domain_radius * 2, 0.0]])

    def test_decay_along_fiber_ray(self, geom, desk_mesh, desk_solution):
        sol, _ = desk_solution
        zc = geom.active_contact_center_z
        r = np.linspace(1e-3, 11e-3, 21)
        vals = np.abs(eval_at_points(sol, desk_mesh, np.column_stack([r, np.full_like(r, zc)])))
        assert np.all(np.isfinite(vals))
        assert np.all(np.diff(vals) < 0)

    def test_mesh_csv_dump(self, tmp_path, desk_mesh):
        nodes = tmp_path / "nodes.csv"
        tris = tmp_path / "tris.csv"
        desk_mesh.to_csv(nodes, tris)
        n = np.loadtxt(nodes, delimiter=",", skiprows=1)
        assert n.shape == (desk_mesh.n_nodes, 2)
        t = np.loadtxt(tris, delimiter=",", skiprows=1, dtype=int)
        assert t.shape == (desk_mesh.n_triangles, 4)
