"""Boundary-fixing linear push-forwards of the identity conductivity.

For ``v = (v', v_n)`` with ``v_n > 0`` the map ``M = [[I, v'], [0, v_n]]``
keeps the half space and its boundary plane; pushing the identity forward
gives a conductivity whose metric has an identity tangential block, so it
is invisible to flat-boundary data.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidParameter, NonUniqueConstraints
from .geometry import TangentFrame
from .halfspace import boundary_kernel, build_pushforward_frame
from .metric import _frozen
from .recovery import assemble_metric_constraints, recover_full_metric


@dataclass(frozen=True)
class TartarParameter:
    v: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.v, dtype=float)
        if v.ndim != 1 or v.size < 3:
            raise InvalidParameter("v must be a vector of length n >= 3")
        if not v[-1] > 0:
            raise InvalidParameter(f"last component of v must be positive, got {v[-1]}")
        object.__setattr__(self, "v", _frozen(v))

    @property
    def n(self) -> int:
        return self.v.size


def _param(v) -> TartarParameter:
    return v if isinstance(v, TartarParameter) else TartarParameter(np.asarray(v, dtype=float))


def tartar_map(v) -> np.ndarray:
    v = _param(v).v
    m = np.eye(v.size)
    m[:-1, -1] = v[:-1]
    m[-1, -1] = v[-1]
    return m


def tartar_conductivity(v) -> np.ndarray:
    """Closed form ``v_n [[I + v'v'^T/v_n^2, -v'/v_n^2], [-v'^T/v_n^2, 1/v_n^2]]``."""
    v = _param(v).v
    vp, vn = v[:-1], v[-1]
    n = v.size
    s = np.empty((n, n))
    s[:-1, :-1] = np.eye(n - 1) + np.outer(vp, vp) / vn**2
    s[:-1, -1] = s[-1, :-1] = -vp / vn**2
    s[-1, -1] = 1.0 / vn**2
    return _frozen(vn * s)


def tartar_metric(v) -> np.ndarray:
    """``g = M^T M = [[I, v'], [v'^T, |v'|^2 + v_n^2]]``."""
    m = tartar_map(v)
    return _frozen(m.T @ m)


def pushforward_conductivity(m) -> np.ndarray:
    """Push-forward of the identity by a linear map: ``Q Q^T / det Q`` with ``Q = M^-1``."""
    q = np.linalg.inv(np.asarray(m, dtype=float))
    return _frozen(q @ q.T / np.linalg.det(q))


def flat_boundary_indistinguishability(v, sample_pairs) -> float:
    """Largest ``|N_sigma(v) - N_I|`` over boundary point pairs (points in the plane)."""
    g = tartar_metric(v)
    ident = np.eye(g.shape[0])
    worst = 0.0
    for x, y in sample_pairs:
        worst = max(worst, abs(boundary_kernel(g, x, y) - boundary_kernel(ident, x, y)))
    return worst


@dataclass(frozen=True)
class FlatNullspace:
    basis: list  # symmetric matrices spanning the undetermined directions
    rank: int

    def contains(self, delta, tol: float = 1e-10) -> bool:
        """True iff the symmetric matrix ``delta`` lies in the span of the basis."""
        delta = np.asarray(delta, dtype=float)
        mats = np.array([b.ravel() for b in self.basis]).T
        coef, *_ = np.linalg.lstsq(mats, delta.ravel(), rcond=None)
        return bool(np.linalg.norm(mats @ coef - delta.ravel()) <= tol * max(1.0, np.linalg.norm(delta)))


def flat_frame(n: int) -> TangentFrame:
    eye = np.eye(n)
    return TangentFrame(base_point=np.zeros(n), tangents=eye[:-1], normal=-eye[-1])


def flat_constraint_nullspace(n: int = 3) -> FlatNullspace:
    """Undetermined metric directions when only one flat tangent plane is observed."""
    if n < 3:
        raise InvalidParameter("n must be at least 3")
    system = assemble_metric_constraints([(flat_frame(n), np.eye(n - 1))])
    try:
        recover_full_metric(system)
    except NonUniqueConstraints as exc:
        return FlatNullspace(basis=exc.nullspace, rank=exc.rank)
    raise AssertionError("flat constraints unexpectedly determine the metric")


def family_consistency(v) -> float:
    """Largest deviation among the independent constructions of ``sigma(v)`` and ``g(v)``.

    Compares the closed-form conductivity with the push-forward ``Q Q^T / det Q``
    and the closed-form metric with ``M^T M`` of the half-space frame built from
    ``sigma(v)``.
    """
    sigma = tartar_conductivity(v)
    g = tartar_metric(v)
    frame = build_pushforward_frame(sigma)
    return float(max(
        np.abs(sigma - pushforward_conductivity(tartar_map(v))).max(),
        np.abs(frame.M.T @ frame.M - g).max(),
        np.abs(frame.g - g).max(),
    ))
