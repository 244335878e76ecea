import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from anisocal.errors import CoincidentPoints, NotSPD
from anisocal.halfspace import (
    boundary_kernel,
    build_pushforward_frame,
    four_point_kernel,
    fundamental_solution,
    halfspace_neumann_kernel,
    kernel_constant,
    reflection,
    unit_ball_volume,
)
from anisocal.metric import metric_from_conductivity

from conftest import spd_matrices

C3 = 1.0 / (4.0 * math.pi)


def test_constants():
    assert unit_ball_volume(3) == pytest.approx(4.0 * math.pi / 3.0, rel=1e-15)
    assert unit_ball_volume(2) == pytest.approx(math.pi, rel=1e-15)
    assert kernel_constant(3) == pytest.approx(C3, rel=1e-15)
    # n = 4: omega_4 = pi^2 / 2, C_4 = 1 / (8 * pi^2 / 2) = 1 / (4 pi^2)
    assert kernel_constant(4) == pytest.approx(1.0 / (4 * math.pi**2), rel=1e-15)


def test_identity_frame():
    fr = build_pushforward_frame(np.eye(3))
    for m in (fr.M, fr.Q, fr.R):
        np.testing.assert_allclose(m, np.eye(3), atol=1e-15)
    assert fr.alpha == 1.0
    np.testing.assert_allclose(fr.S, reflection(3), atol=1e-15)


def test_diagonal_frame():
    fr = build_pushforward_frame(np.diag([1.0, 1, 4]))
    assert fr.alpha == pytest.approx(0.5)
    np.testing.assert_allclose(fr.Q, np.diag([0.5, 0.5, 1.0]), atol=1e-15)
    np.testing.assert_allclose(fr.M, np.diag([2.0, 2.0, 1.0]), atol=1e-15)
    np.testing.assert_allclose(fr.M.T @ fr.M, np.diag([4.0, 4.0, 1.0]), atol=1e-14)


def test_frame_rejects_non_spd():
    with pytest.raises(NotSPD):
        build_pushforward_frame(np.diag([1.0, -1.0, 1.0]))


def test_kernel_examples():
    ident = build_pushforward_frame(np.eye(3))
    assert halfspace_neumann_kernel(ident, [0, 0, 1], [0, 0, 2]).value == pytest.approx(1 / (3 * math.pi), rel=1e-14)
    assert halfspace_neumann_kernel(ident, [1, 0, 0], [0, 0, 0]).value == pytest.approx(1 / (2 * math.pi), rel=1e-14)
    g = np.diag([4.0, 4.0, 1.0])
    assert boundary_kernel(g, [1, 0], [0, 0]) == pytest.approx(1 / (4 * math.pi), rel=1e-14)
    assert boundary_kernel(g, [0, 1], [0, 0]) == pytest.approx(1 / (4 * math.pi), rel=1e-14)
    assert boundary_kernel(np.eye(3), [1, 0], [0, 0]) == pytest.approx(1 / (2 * math.pi), rel=1e-14)
    sheared = np.array([[1.0, 0, 1], [0, 1, 0], [1, 0, 2]])
    assert boundary_kernel(sheared, [0.6, 0.8], [0, 0]) == pytest.approx(1 / (2 * math.pi), rel=1e-14)


def test_coincident_points():
    fr = build_pushforward_frame(np.eye(3))
    with pytest.raises(CoincidentPoints):
        halfspace_neumann_kernel(fr, [1, 2, 3], [1, 2, 3])
    with pytest.raises(CoincidentPoints):
        boundary_kernel(np.eye(3), [1, 1], [1, 1])
    with pytest.raises(CoincidentPoints):
        four_point_kernel(lambda a, b: 0.0, [0, 0], [1, 0], [0, 0], [2, 0])


def test_four_point_examples():
    kern = lambda a, b: boundary_kernel(np.eye(3), a, b)  # noqa: E731
    # distances |x-y| = 2, |x-w| = 1, |z-y| = 3, |z-w| = 2
    k = four_point_kernel(kern, [2, 0], [0, 0], [1, 0], [3, 0])
    assert k == pytest.approx((0.5 - 1.0 - 1.0 / 3.0 + 0.5) / (2 * math.pi), rel=1e-14)
    assert k == pytest.approx(-1 / (6 * math.pi), rel=1e-14)
    gauge = lambda a, b: np.sin(a[0]) + np.cos(3 * b[1]) ** 2  # noqa: E731
    assert four_point_kernel(gauge, [0.1, 0.2], [0.4, -1], [2, 2], [-1, 0.5]) == pytest.approx(0.0, abs=1e-15)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_four_point_gauge_invariance_and_antisymmetry(seed):
    rng = np.random.default_rng(seed)
    x, y, w, z = rng.uniform(-2, 2, (4, 2))
    base = lambda a, b: boundary_kernel(np.eye(3), a, b)  # noqa: E731
    c = rng.standard_normal(4)
    gauged = lambda a, b: base(a, b) + c[0] * a[0] ** 2 + c[1] * np.sin(a[1]) + c[2] * b[0] + c[3] * b[1] ** 3  # noqa: E731
    k = four_point_kernel(base, x, y, w, z)
    assert four_point_kernel(gauged, x, y, w, z) == pytest.approx(k, rel=1e-9, abs=1e-12)
    assert four_point_kernel(base, z, y, w, x) == pytest.approx(-k, rel=1e-12, abs=1e-14)


def test_identity_reduction(rng):
    fr = build_pushforward_frame(np.eye(3))
    x = rng.uniform(-1, 1, (100, 3))
    y = rng.uniform(-1, 1, (100, 3))
    x[:, 2] = np.abs(x[:, 2])
    y[:, 2] = np.abs(y[:, 2])
    want = fundamental_solution(x - y) + fundamental_solution(x - y @ reflection(3))
    np.testing.assert_allclose(halfspace_neumann_kernel(fr, x, y).value, want, rtol=1e-12)


def _interior(rng, k, n=3):
    p = rng.standard_normal((k, n))
    p[:, -1] = np.abs(p[:, -1]) + 0.05
    return p


@settings(max_examples=100, deadline=None)
@given(spd_matrices(n_values=(3, 4)), st.integers(0, 2**32 - 1))
def test_frame_invariants(sigma, seed):
    n = sigma.shape[0]
    fr = build_pushforward_frame(sigma)
    scale = np.abs(sigma).max()
    np.testing.assert_allclose(fr.Q @ fr.Q.T / np.linalg.det(fr.Q), sigma, atol=1e-10 * scale)
    np.testing.assert_allclose(fr.M.T @ fr.M, metric_from_conductivity(sigma), atol=1e-10 * np.abs(fr.g).max())
    np.testing.assert_allclose(fr.M @ fr.Q, np.eye(n), atol=1e-10)
    # M keeps the boundary plane and the upper half space
    assert np.abs(fr.M[-1, :-1]).max() <= 1e-10 * np.abs(fr.M).max()
    assert fr.M[-1, -1] > 0
    np.testing.assert_allclose(fr.R @ fr.R.T, np.eye(n), atol=1e-12)
    # S fixes the boundary plane
    yp = np.random.default_rng(seed).standard_normal(n)
    yp[-1] = 0.0
    np.testing.assert_allclose(fr.S @ yp, yp, atol=1e-10 * np.linalg.norm(yp) * np.abs(fr.S).max())


@settings(max_examples=100, deadline=None)
@given(spd_matrices(n_values=(3, 4)), st.integers(0, 2**32 - 1))
def test_kernel_symmetry_pushforward_and_zero_flux(sigma, seed):
    rng = np.random.default_rng(seed)
    n = sigma.shape[0]
    fr = build_pushforward_frame(sigma)
    ident = build_pushforward_frame(np.eye(n))
    x, y = _interior(rng, 5, n), _interior(rng, 5, n)
    nxy = halfspace_neumann_kernel(fr, x, y).value
    np.testing.assert_allclose(halfspace_neumann_kernel(fr, y, x).value, nxy, rtol=1e-12)
    np.testing.assert_allclose(halfspace_neumann_kernel(ident, x @ fr.M.T, y @ fr.M.T).value, nxy, rtol=1e-12)
    xb = x.copy()
    xb[:, -1] = 0.0
    grad = halfspace_neumann_kernel(fr, xb, y, gradient=True).gradient
    flux = -(grad @ fr.sigma[:, -1])
    assert np.abs(flux).max() <= 1e-8 * np.abs(grad).max()


@settings(max_examples=50, deadline=None)
@given(spd_matrices(n_values=(3,)), st.integers(0, 2**32 - 1))
def test_boundary_kernel_consistent_with_full_kernel(sigma, seed):
    rng = np.random.default_rng(seed)
    fr = build_pushforward_frame(sigma)
    x, y = rng.standard_normal((2, 2))
    full = halfspace_neumann_kernel(fr, np.append(x, 0.0), np.append(y, 0.0)).value
    assert boundary_kernel(fr.g, x, y) == pytest.approx(full, rel=1e-14)


def test_gradient_matches_finite_differences(rng):
    fr = build_pushforward_frame(np.array([[2.0, 0.3, -0.4], [0.3, 1.0, 0.2], [-0.4, 0.2, 1.5]]))
    x, y = np.array([0.3, -0.2, 0.7]), np.array([-0.1, 0.4, 0.5])
    grad = halfspace_neumann_kernel(fr, x, y, gradient=True).gradient
    h = 1e-6
    fd = [(halfspace_neumann_kernel(fr, x + h * e, y).value - halfspace_neumann_kernel(fr, x - h * e, y).value) / (2 * h)
          for e in np.eye(3)]
    np.testing.assert_allclose(grad, fd, rtol=1e-7)


@pytest.mark.parametrize("h", [0.02, 0.01])
def test_pde_residual_decays(h):
    sigma = np.array([[2.0, 0.3, -0.4], [0.3, 1.0, 0.2], [-0.4, 0.2, 1.5]])
    fr = build_pushforward_frame(sigma)
    y = np.array([0.0, 0.0, 0.3])
    x = np.array([0.25, -0.15, 0.5])

    def residual(step):
        f = lambda p: halfspace_neumann_kernel(fr, p, y).value  # noqa: E731
        e = np.eye(3) * step
        total = 0.0
        for i in range(3):
            for j in range(3):
                d2 = (f(x + e[i] + e[j]) - f(x + e[i] - e[j]) - f(x - e[i] + e[j]) + f(x - e[i] - e[j])) / (4 * step**2)
                total += sigma[i, j] * d2
        return abs(total)

    # second-order stencil: halving the step cuts the residual about fourfold
    assert residual(h / 2) < residual(h) / 3.0


def test_scaling_law():
    sigma = np.array([[2.0, 0.3, -0.4], [0.3, 1.0, 0.2], [-0.4, 0.2, 1.5]])
    for c in (0.5, 3.0):
        # g(c sigma) = c^(n/(n-2) - 1) g(sigma) = c^(2/(n-2)) g(sigma)
        np.testing.assert_allclose(metric_from_conductivity(c * sigma), c ** 2 * metric_from_conductivity(sigma), rtol=1e-12)
