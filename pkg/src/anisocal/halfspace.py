"""Neumann kernel of ``div(sigma grad u) = 0`` on the upper half space for constant sigma.

The construction pushes the isotropic kernel ``Gamma(x-y) + Gamma(x-Ty)``
forward through a linear map ``M`` that preserves the half space
``{x_n > 0}``; ``T`` is the reflection ``diag(1, ..., 1, -1)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import CoincidentPoints
from .metric import _frozen, as_spd, metric_from_conductivity, principal_sqrt


def unit_ball_volume(n: int) -> float:
    return math.pi ** (n / 2) / math.gamma(n / 2 + 1)


def kernel_constant(n: int) -> float:
    """``C_n = 1 / (n (n-2) omega_n)``, the fundamental-solution constant."""
    return 1.0 / (n * (n - 2) * unit_ball_volume(n))


def reflection(n: int) -> np.ndarray:
    t = np.eye(n)
    t[-1, -1] = -1.0
    return t


def fundamental_solution(x) -> np.ndarray:
    """``Gamma(x) = C_n |x|^(2-n)`` for the Laplacian, along the last axis."""
    x = np.asarray(x, dtype=float)
    n = x.shape[-1]
    return kernel_constant(n) * np.linalg.norm(x, axis=-1) ** (2 - n)


@dataclass(frozen=True)
class PushforwardFrame:
    sigma: np.ndarray
    M: np.ndarray
    Q: np.ndarray
    alpha: float
    R: np.ndarray
    S: np.ndarray
    g: np.ndarray

    @property
    def n(self) -> int:
        return self.sigma.shape[0]


def _rotation_to(a: np.ndarray) -> np.ndarray:
    """Proper rotation R with R e_n = a for a unit vector with a_n > 0.

    The Householder reflection along ``e_n + a`` sends e_n to -a; negating its
    last column fixes both the image and the determinant.  The vector
    ``e_n + a`` never cancels because a_n > 0.
    """
    n = a.size
    u = a.copy()
    u[-1] += 1.0
    h = np.eye(n) - 2.0 * np.outer(u, u) / (u @ u)
    h[:, -1] = -h[:, -1]
    return h


def build_pushforward_frame(sigma) -> PushforwardFrame:
    sigma = as_spd(sigma)
    n = sigma.shape[0]
    g = metric_from_conductivity(sigma)
    root = principal_sqrt(sigma)
    a = root[:, -1] / np.linalg.norm(root[:, -1])
    rot = _rotation_to(a)
    alpha = float(np.linalg.det(sigma) ** (1.0 / (2 * (2 - n))))
    q = alpha * root @ rot
    m = np.linalg.inv(q)
    s = q @ reflection(n) @ m
    return PushforwardFrame(
        sigma=sigma, M=_frozen(m), Q=_frozen(q), alpha=alpha, R=_frozen(rot), S=_frozen(s), g=g
    )


@dataclass(frozen=True)
class KernelValue:
    value: float | np.ndarray
    gradient: np.ndarray | None = None


def _quad_power(g: np.ndarray, d: np.ndarray, p: float) -> np.ndarray:
    return np.einsum("...i,ij,...j->...", d, g, d) ** p


def _check_distinct(x: np.ndarray, y: np.ndarray) -> None:
    scale = np.maximum(np.maximum(np.linalg.norm(x, axis=-1), np.linalg.norm(y, axis=-1)), 1.0)
    if np.any(np.linalg.norm(x - y, axis=-1) < 1e-14 * scale):
        raise CoincidentPoints("kernel evaluated at coincident points")


def halfspace_neumann_kernel(frame: PushforwardFrame, x, y, gradient: bool = False) -> KernelValue:
    """Evaluate ``N_sigma(x, y)`` (and optionally its x-gradient).

    ``x`` and ``y`` broadcast along leading axes; the last axis has length n.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    _check_distinct(x, y)
    n = frame.n
    c = kernel_constant(n)
    p = (2 - n) / 2
    d1 = x - y
    d2 = x - y @ frame.S.T
    value = c * (_quad_power(frame.g, d1, p) + _quad_power(frame.g, d2, p))
    grad = None
    if gradient:
        grad = c * (2 - n) * (
            _quad_power(frame.g, d1, -n / 2)[..., None] * (d1 @ frame.g)
            + _quad_power(frame.g, d2, -n / 2)[..., None] * (d2 @ frame.g)
        )
    if np.ndim(value) == 0:
        value = float(value)
    return KernelValue(value=value, gradient=grad)


def _on_plane(p, n: int | None = None) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if n is not None and p.shape[-1] == n - 1:
        p = np.concatenate([p, np.zeros(p.shape[:-1] + (1,))], axis=-1)
    return p


def boundary_kernel(g, x, y) -> float | np.ndarray:
    """``2 C_n (g(x-y).(x-y))^((2-n)/2)`` for points on the boundary plane.

    Points may be given with n-1 coordinates (in the plane) or with n.
    """
    g = np.asarray(g, dtype=float)
    n = g.shape[0]
    x = _on_plane(x, n)
    y = _on_plane(y, n)
    _check_distinct(x, y)
    value = 2.0 * kernel_constant(n) * _quad_power(g, x - y, (2 - n) / 2)
    return float(value) if np.ndim(value) == 0 else value


def four_point_kernel(kernel: Callable, x, y, w, z) -> float:
    """``K(x,y,w,z) = N(x,y) - N(x,w) - N(z,y) + N(z,w)``; blind to ``f(x) + h(y)``."""
    pts = [np.asarray(p, dtype=float) for p in (x, y, w, z)]
    for i in range(4):
        for j in range(i + 1, 4):
            if np.linalg.norm(pts[i] - pts[j]) < 1e-14 * max(
                np.linalg.norm(pts[i]), np.linalg.norm(pts[j]), 1.0
            ):
                raise CoincidentPoints("four-point kernel needs pairwise distinct points")
    return kernel(x, y) - kernel(x, w) - kernel(z, y) + kernel(z, w)
