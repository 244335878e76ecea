import numpy as np
import pytest

from anisocal.errors import EpsilonUnresolved, PointsInE, PointsTooClose, SingularSystem
from anisocal.fem import (
    CurrentDensity,
    NeumannSolver,
    alessandrini_residual,
    approx_delta_current,
    assemble_local_nd_map,
    facet_load,
    four_point_quadrature,
    kernel_from_nd_map,
    locate_tet,
    read_ndmap,
    s_function_residual,
    write_ndmap,
)
from anisocal.geometry import PartitionedDomain, flat_patch, stacked_paraboloid_domain
from anisocal.mesh import LABEL_MEASUREMENT, build_structured_mesh

SIGMA = {1: np.diag([1.0, 1.0, 4.0])}


@pytest.fixture(scope="module")
def box_mesh():
    dom = PartitionedDomain(((-1, 1), (-1, 1)), 1.0, flat_patch(r0=0.95), (1,))
    return build_structured_mesh(dom, 0.125)


@pytest.fixture(scope="module")
def box_solver(box_mesh):
    return NeumannSolver(box_mesh, SIGMA)


def _dipole(mesh, a, b, eps=0.3):
    return approx_delta_current(mesh, LABEL_MEASUREMENT, a, eps) - approx_delta_current(mesh, LABEL_MEASUREMENT, b, eps)


def test_bump_has_unit_flux(box_mesh):
    bump = approx_delta_current(box_mesh, LABEL_MEASUREMENT, (0.1, -0.2, 0.0), 0.3)
    assert bump.total(box_mesh) == pytest.approx(1.0, abs=1e-13)
    assert np.all(bump.values >= 0)
    on_patch = box_mesh.patch_mask(LABEL_MEASUREMENT)
    assert np.all(bump.values[~on_patch] == 0)


def test_bump_below_resolution_rejected(box_mesh):
    with pytest.raises(EpsilonUnresolved):
        approx_delta_current(box_mesh, LABEL_MEASUREMENT, (0.0, 0.0, 0.0), 0.05)


def test_nonzero_mean_current_rejected(box_solver, box_mesh):
    bump = approx_delta_current(box_mesh, LABEL_MEASUREMENT, (0.0, 0.0, 0.0), 0.3)
    with pytest.raises(SingularSystem):
        box_solver.solve(bump)


def test_zero_current_gives_zero_potential(box_solver, box_mesh):
    zero = CurrentDensity(np.zeros(len(box_mesh.facets)), LABEL_MEASUREMENT)
    assert np.all(box_solver.solve(zero).values == 0)


def test_scaled_conductivity_scales_potential(box_solver, box_mesh):
    psi = _dipole(box_mesh, (-0.4, 0, 0), (0.4, 0, 0))
    u = box_solver.solve(psi).values
    u3 = NeumannSolver(box_mesh, {1: 3.0 * SIGMA[1]}).solve(psi).values
    assert np.allclose(3.0 * u3, u, atol=1e-12 * np.abs(u).max())


def test_potential_is_normalized_and_linear(box_solver, box_mesh):
    psi = _dipole(box_mesh, (-0.4, 0, 0), (0.4, 0, 0))
    phi = _dipole(box_mesh, (0, -0.4, 0), (0, 0.4, 0))
    u, v = box_solver.solve(psi).values, box_solver.solve(phi).values
    assert abs(box_solver.c @ u) < 1e-12
    w = box_solver.solve(2.0 * psi - phi).values
    assert np.allclose(w, 2 * u - v, atol=1e-11)


def test_manufactured_harmonic_solution_converges():
    # u = 4x^2 - z^2 solves div(diag(1,1,4) grad u) = 0
    def grad(p):
        return np.column_stack([8 * p[:, 0], np.zeros(len(p)), -2 * p[:, 2]])

    dom = PartitionedDomain(((0, 1), (0, 1)), 1.0, flat_patch(r0=1.0), (1,))
    errors = []
    for h in (0.25, 0.125, 0.0625):
        mesh = build_structured_mesh(dom, h)
        solver = NeumannSolver(mesh, SIGMA)
        p = mesh.nodes[mesh.facets]
        normal = np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
        normal /= np.linalg.norm(normal, axis=1, keepdims=True)
        normal *= np.sign(np.einsum("fa,fa->f", normal, p.mean(axis=1) - 0.5))[:, None]
        flux = np.einsum("fa,ab,fb->f", grad(p.mean(axis=1)), SIGMA[1], normal)
        u = solver.solve(CurrentDensity(flux, LABEL_MEASUREMENT)).values
        centroids = mesh.nodes[mesh.tets].mean(axis=1)
        e = solver.element_gradient(u) - grad(centroids)
        errors.append(np.sqrt(np.einsum("m,ma,ab,mb->", solver.vol, e, SIGMA[1], e)))
    assert errors[0] > errors[1] > errors[2]
    assert errors[1] / errors[2] > 1.5


def test_nd_map_symmetric_positive(box_mesh, box_solver):
    nd = assemble_local_nd_map(box_mesh, SIGMA, basis_size=5, solver=box_solver)
    assert nd.matrix.shape == (5, 5)
    assert nd.symmetry_defect() < 1e-10
    assert nd.min_eigenvalue() > 0
    # energy pairing equals the boundary pairing <psi_i, u_j>
    boundary = nd.loads.T @ nd.potentials
    assert np.allclose(boundary, nd.matrix, atol=1e-10 * np.abs(nd.matrix).max())


def test_nd_map_round_trip(box_mesh, box_solver, tmp_path):
    nd = assemble_local_nd_map(box_mesh, SIGMA, basis_size=4, solver=box_solver)
    path = tmp_path / "map.ndmap"
    write_ndmap(nd, path)
    label, desc, matrix = read_ndmap(path)
    assert label == LABEL_MEASUREMENT
    assert desc == nd.descriptors
    assert np.array_equal(matrix, nd.matrix)


def test_kernel_estimate_antisymmetric_in_outer_points(box_solver):
    x, y, w, z = (-0.75, 0, 0), (0.75, 0, 0), (0, 0.75, 0), (0, -0.75, 0)
    a = kernel_from_nd_map(box_solver, x, y, w, z, (0.25,))
    b = kernel_from_nd_map(box_solver, z, y, w, x, (0.25,))
    assert a.value == pytest.approx(-b.value, abs=1e-12)


def test_kernel_estimate_rejects_close_points(box_solver):
    with pytest.raises(PointsTooClose):
        kernel_from_nd_map(box_solver, (0, 0, 0), (0.3, 0, 0), (0.6, 0, 0), (-0.6, 0, 0), (0.25,))


def test_pairing_matches_discrete_kernel_quadrature():
    dom = PartitionedDomain(((-1, 1), (-1, 1)), 1.0, flat_patch(r0=1.0), (1,))
    mesh = build_structured_mesh(dom, 0.25)
    solver = NeumannSolver(mesh, SIGMA)
    psi = _dipole(mesh, (-0.5, 0, 0), (0.5, 0, 0), eps=0.5)
    phi = _dipole(mesh, (0.3, 0.2, 0), (-0.2, -0.5, 0), eps=0.5)
    pairing = facet_load(mesh, psi.values) @ solver.solve(phi).values
    boundary_nodes = np.unique(mesh.facets)
    quad = four_point_quadrature(solver, psi, phi, int(boundary_nodes[0]), int(boundary_nodes[-1]))
    assert quad == pytest.approx(pairing, abs=1e-10 * abs(pairing))


@pytest.fixture(scope="module")
def layered():
    dom = stacked_paraboloid_domain(bottom_curvature=0.5, interface_curvature=0.5,
                                    interface_height=0.4, top_margin=0.4)
    return build_structured_mesh(dom, 0.2)


def test_alessandrini_identity_exact_on_mesh(layered):
    s1 = {1: np.eye(3), 2: np.diag([1.0, 2.0, 3.0])}
    s2 = {1: np.diag([2.0, 1.0, 1.0]), 2: np.eye(3)}
    eps = 0.45
    psi1 = _dipole(layered, (0.4, 0, 0), (-0.4, 0.1, 0), eps)
    psi2 = _dipole(layered, (0, 0.45, 0), (0.1, -0.4, 0), eps)
    res = alessandrini_residual(layered, s1, s2, psi1, psi2)
    assert res.residual <= 1e-10 * max(abs(res.lhs), 1.0)
    same = alessandrini_residual(layered, s1, s1, psi1, psi2)
    assert same.lhs == 0 and same.rhs == 0


def test_s_function_vanishes_for_equal_conductivities(layered):
    s = {1: np.eye(3), 2: np.diag([1.0, 2.0, 3.0])}
    y, z = (0.0, 0.0, 0.25), (0.2, 0.1, 0.3)
    assert int(layered.tet_region[locate_tet(layered, y)[0]]) == 1
    res = s_function_residual(layered, s, s, [1], y, z)
    assert res.hypothesis_ok and res.magnitude == 0.0


def test_s_function_rejects_points_in_e(layered):
    s = {1: np.eye(3), 2: np.eye(3)}
    top = layered.nodes[:, 2].max()
    with pytest.raises(PointsInE):
        s_function_residual(layered, s, s, [1], (0.0, 0.0, top - 0.1), (0.0, 0.0, 0.25))
