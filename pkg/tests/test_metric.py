import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings

from anisocal.errors import DimensionTooSmall, NotSPD
from anisocal.metric import (
    as_spd,
    check_ellipticity,
    conductivity_from_metric,
    metric_from_conductivity,
    principal_sqrt,
    random_orthogonal,
)

from conftest import spd_matrices

SHEAR_SIGMA = np.array([[2.0, 0, -1], [0, 1, 0], [-1, 0, 1]])
SHEAR_G = np.array([[1.0, 0, 1], [0, 1, 0], [1, 0, 2]])


def direct_metric(sigma):
    # independent path: determinant and inverse straight from LAPACK
    n = sigma.shape[0]
    return np.linalg.det(sigma) ** (1.0 / (n - 2)) * np.linalg.inv(sigma)


@pytest.mark.parametrize(
    "sigma, g",
    [
        (np.eye(3), np.eye(3)),
        (np.diag([1.0, 1, 4]), np.diag([4.0, 4, 1])),
        (SHEAR_SIGMA, SHEAR_G),
    ],
)
def test_metric_examples(sigma, g):
    np.testing.assert_allclose(metric_from_conductivity(sigma), g, atol=1e-13)
    np.testing.assert_allclose(conductivity_from_metric(g), sigma, atol=1e-13)


def test_shear_example_is_inverse_pair():
    np.testing.assert_allclose(SHEAR_SIGMA @ SHEAR_G, np.eye(3), atol=1e-15)
    assert np.linalg.det(SHEAR_SIGMA) == pytest.approx(1.0)


def test_results_are_read_only():
    g = metric_from_conductivity(np.eye(3))
    with pytest.raises(ValueError):
        g[0, 0] = 2.0


@pytest.mark.parametrize("bad", [np.diag([1.0, -1, 1]), np.diag([1.0, 0, 1]), np.full((3, 3), np.nan)])
def test_not_spd_rejected(bad):
    with pytest.raises(NotSPD):
        metric_from_conductivity(bad)
    with pytest.raises(NotSPD):
        conductivity_from_metric(bad)


def test_dimension_two_rejected():
    with pytest.raises(DimensionTooSmall):
        metric_from_conductivity(np.eye(2))


def test_principal_sqrt_examples():
    np.testing.assert_allclose(principal_sqrt(np.eye(3)), np.eye(3))
    np.testing.assert_allclose(principal_sqrt(np.diag([4.0, 9, 1])), np.diag([2.0, 3, 1]), atol=1e-14)


@pytest.mark.parametrize("sigma, lam, expected", [
    (np.eye(3), 1.0, True),
    (np.diag([0.5, 1, 2]), 2.0, True),
    (np.diag([0.4, 1, 2]), 2.0, False),
])
def test_check_ellipticity(sigma, lam, expected):
    assert check_ellipticity(sigma, lam) is expected


@settings(max_examples=200, deadline=None)
@given(spd_matrices())
def test_metric_matches_direct_formula(sigma):
    want = direct_metric(sigma)
    np.testing.assert_allclose(metric_from_conductivity(sigma), want, rtol=0, atol=1e-10 * np.abs(want).max())


@settings(max_examples=200, deadline=None)
@given(spd_matrices())
def test_round_trip_and_determinant_law(sigma):
    n = sigma.shape[0]
    g = metric_from_conductivity(sigma)
    back = conductivity_from_metric(g)
    assert np.linalg.norm(back - sigma) / np.linalg.norm(sigma) <= 1e-12
    assert np.linalg.det(g) == pytest.approx(np.linalg.det(sigma) ** (2.0 / (n - 2)), rel=1e-12)


@settings(max_examples=100, deadline=None)
@given(spd_matrices())
def test_unit_determinant_fixed_point(sigma):
    n = sigma.shape[0]
    s1 = sigma / np.linalg.det(sigma) ** (1.0 / n)
    np.testing.assert_allclose(metric_from_conductivity(s1), np.linalg.inv(s1), rtol=1e-11, atol=1e-12)


@settings(max_examples=100, deadline=None)
@given(spd_matrices())
def test_sqrt_against_scipy_and_orthogonal_conjugation(sigma):
    root = principal_sqrt(sigma)
    np.testing.assert_allclose(root, np.real(scipy.linalg.sqrtm(sigma)), rtol=1e-9, atol=1e-10)
    np.testing.assert_allclose(root @ root, sigma, rtol=1e-12, atol=1e-12 * np.abs(sigma).max())
    u = random_orthogonal(np.random.default_rng(int(abs(sigma[0, 0]) * 1e6) % 2**32), sigma.shape[0])
    np.testing.assert_allclose(principal_sqrt(u @ sigma @ u.T), u @ root @ u.T, atol=1e-12 * np.abs(root).max() * 10)


def test_as_spd_symmetrizes():
    a = np.array([[2.0, 1.0 + 1e-14, 0], [1.0, 2, 0], [0, 0, 1]])
    s = as_spd(a)
    assert np.array_equal(s, s.T)
