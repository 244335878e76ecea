import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from anisocal.errors import CoincidentPoints, InvalidParameter, NonUniqueConstraints
from anisocal.geometry import paraboloid_patch
from anisocal.metric import conductivity_from_metric, metric_from_conductivity
from anisocal.recovery import (
    AnalyticKernelSource,
    assemble_metric_constraints,
    recover_full_metric,
    recover_interface_conductivity,
)
from anisocal.tartar import (
    TartarParameter,
    family_consistency,
    flat_boundary_indistinguishability,
    flat_constraint_nullspace,
    flat_frame,
    pushforward_conductivity,
    tartar_conductivity,
    tartar_map,
    tartar_metric,
)

params = st.tuples(st.floats(-3, 3), st.floats(-3, 3), st.floats(0.2, 3)).map(np.array)


def _plane_pairs(rng, count, n=3):
    pts = rng.uniform(-2, 2, size=(count, 2, n - 1))
    return [(np.append(a, 0.0), np.append(b, 0.0)) for a, b in pts]


def test_unit_vertical_parameter_gives_identity():
    assert np.array_equal(tartar_conductivity([0, 0, 1]), np.eye(3))


def test_unit_shear_example():
    sigma = tartar_conductivity([1, 0, 1])
    assert np.allclose(sigma, [[2, 0, -1], [0, 1, 0], [-1, 0, 1]], atol=1e-15)
    assert np.linalg.det(sigma) == pytest.approx(1.0, abs=1e-14)
    g = np.array([[1, 0, 1], [0, 1, 0], [1, 0, 2]])
    assert np.allclose(tartar_metric([1, 0, 1]), g)
    assert np.allclose(sigma @ g, np.eye(3), atol=1e-14)


def test_parameter_validation():
    with pytest.raises(InvalidParameter):
        TartarParameter(np.array([1.0, 0.0, 0.0]))
    with pytest.raises(InvalidParameter):
        TartarParameter(np.array([1.0, -1.0]))
    with pytest.raises(InvalidParameter):
        tartar_conductivity([0.0, 0.0, -1.0])


def test_map_preserves_boundary_plane():
    m = tartar_map([3.0, -2.0, 0.5])
    p = np.array([0.7, -1.1, 0.0])
    assert np.array_equal(m @ p, p)
    assert (m @ np.array([0, 0, 1.0]))[2] == 0.5


@settings(max_examples=100, deadline=None)
@given(params)
def test_metric_has_identity_tangential_block(v):
    g = metric_from_conductivity(tartar_conductivity(v))
    assert np.allclose(g[:2, :2], np.eye(2), atol=1e-12 * max(1.0, np.abs(g).max()))


@settings(max_examples=100, deadline=None)
@given(params)
def test_closed_forms_agree(v):
    scale = max(1.0, np.abs(tartar_metric(v)).max())
    assert np.allclose(conductivity_from_metric(tartar_metric(v)), tartar_conductivity(v), atol=1e-12 * scale)
    assert family_consistency(v) <= 1e-12 * scale**2


@settings(max_examples=50, deadline=None)
@given(params)
def test_pushforward_matches_closed_form(v):
    assert np.allclose(pushforward_conductivity(tartar_map(v)), tartar_conductivity(v), atol=1e-12 * max(1.0, v[2] ** -3))


def test_higher_dimension_family():
    v = np.array([0.5, -1.0, 2.0, 1.5])
    g = metric_from_conductivity(tartar_conductivity(v))
    assert np.allclose(g[:3, :3], np.eye(3), atol=1e-12)
    assert np.allclose(g, tartar_metric(v), atol=1e-12)


@pytest.mark.parametrize("v", [(0, 0, 1), (1, 0, 1), (3, -2, 0.5)])
def test_flat_boundary_indistinguishable(v):
    dev = flat_boundary_indistinguishability(v, _plane_pairs(np.random.default_rng(1), 100))
    assert dev <= 1e-12
    if v == (0, 0, 1):
        assert dev == 0.0


def test_indistinguishability_rejects_coincident_points():
    p = np.array([0.1, 0.2, 0.0])
    with pytest.raises(CoincidentPoints):
        flat_boundary_indistinguishability([1, 0, 1], [(p, p)])


def test_flat_nullspace_dimension_and_membership():
    ns = flat_constraint_nullspace(3)
    assert len(ns.basis) == 3 and ns.rank == 3
    assert ns.contains(tartar_metric([1, 0, 1]) - np.eye(3))
    assert np.allclose(tartar_metric([1, 0, 1]) - np.eye(3), [[0, 0, 1], [0, 0, 0], [1, 0, 1]])
    assert ns.contains(tartar_metric([0, 0, 2]) - np.eye(3))
    assert np.allclose(tartar_metric([0, 0, 2]) - np.eye(3), np.diag([0, 0, 3]))
    assert not ns.contains(np.eye(3))


@settings(max_examples=30, deadline=None)
@given(params)
def test_family_differences_in_flat_nullspace(v):
    ns = flat_constraint_nullspace(3)
    assert ns.contains(tartar_metric(v) - np.eye(3), tol=1e-9)


def test_flat_nullspace_general_dimension():
    for n in (3, 4, 5):
        assert len(flat_constraint_nullspace(n).basis) == n
    with pytest.raises(InvalidParameter):
        flat_constraint_nullspace(2)


@settings(max_examples=20, deadline=None)
@given(params.filter(lambda v: np.hypot(v[0], v[1]) > 1e-3))
def test_flat_data_never_determines_family(v):
    frame = flat_frame(3)
    g = tartar_metric(v)
    with pytest.raises(NonUniqueConstraints):
        recover_full_metric(assemble_metric_constraints([(frame, frame.tangents @ g @ frame.tangents.T)]))


def test_curved_data_separates_family_from_identity():
    sigma = tartar_conductivity([1, 0, 1])
    out = recover_interface_conductivity(paraboloid_patch(1.0), AnalyticKernelSource(tartar_metric([1, 0, 1])))
    assert np.allclose(out.sigma, sigma, atol=1e-6)
    gap = np.abs(out.sigma - np.eye(3)).max()
    assert gap >= 0.5 * np.abs(sigma - np.eye(3)).max()
