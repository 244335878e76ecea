"""Conductivity <-> Riemannian metric algebra and small SPD utilities.

Conductivities and metrics are plain ``(n, n)`` float arrays.  Every
constructor here symmetrizes its input and returns a read-only array so the
values behave as immutable.

For ``n >= 3`` the two are in bijection::

    g     = det(sigma)**(1/(n-2)) * inv(sigma)
    sigma = det(g)**(1/2)         * inv(g)
"""
from __future__ import annotations

import numpy as np

from .errors import DimensionTooSmall, NotSPD

SPD_RTOL = 1e-12


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def symmetrize(a) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    return 0.5 * (a + a.T)


def spd_eigh(a) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a symmetric matrix, raising NotSPD unless
    the smallest eigenvalue exceeds ``SPD_RTOL`` times the largest."""
    s = symmetrize(a)
    if not np.all(np.isfinite(s)):
        raise NotSPD("matrix has non-finite entries")
    w, v = np.linalg.eigh(s)
    if w[-1] <= 0 or w[0] <= SPD_RTOL * w[-1]:
        raise NotSPD(f"matrix is not positive definite (eigenvalues {w})")
    return w, v


def as_spd(a) -> np.ndarray:
    """Validate and freeze a symmetric positive-definite matrix."""
    spd_eigh(a)
    return _frozen(symmetrize(a))


def is_spd(a) -> bool:
    try:
        spd_eigh(a)
    except NotSPD:
        return False
    return True


def _spectral(w: np.ndarray, v: np.ndarray, f) -> np.ndarray:
    return _frozen(symmetrize((v * f(w)) @ v.T))


def _check_dim(n: int) -> None:
    if n < 3:
        raise DimensionTooSmall(f"dimension n={n}; the metric needs n >= 3")


def metric_from_conductivity(sigma) -> np.ndarray:
    w, v = spd_eigh(sigma)
    n = w.size
    _check_dim(n)
    # det**(1/(n-2)) through the log-sum keeps products of eigenvalues in range
    scale = np.exp(np.sum(np.log(w)) / (n - 2))
    return _spectral(w, v, lambda lam: scale / lam)


def conductivity_from_metric(g) -> np.ndarray:
    w, v = spd_eigh(g)
    _check_dim(w.size)
    scale = np.exp(0.5 * np.sum(np.log(w)))
    return _spectral(w, v, lambda lam: scale / lam)


def principal_sqrt(sigma) -> np.ndarray:
    """Symmetric positive-definite square root."""
    w, v = spd_eigh(sigma)
    return _spectral(w, v, np.sqrt)


def spd_power(a, p: float) -> np.ndarray:
    w, v = spd_eigh(a)
    return _spectral(w, v, lambda lam: lam**p)


def check_ellipticity(sigma, lam: float) -> bool:
    """True iff every eigenvalue of ``sigma`` lies in ``[1/lam, lam]``."""
    if lam < 1:
        raise ValueError("ellipticity constant must be >= 1")
    w = np.linalg.eigvalsh(symmetrize(sigma))
    return bool(w[0] >= 1.0 / lam and w[-1] <= lam)


def random_spd(rng: np.random.Generator, n: int, shift: float = 1.0) -> np.ndarray:
    """``A A^T + shift I`` with standard normal ``A``."""
    a = rng.standard_normal((n, n))
    return _frozen(symmetrize(a @ a.T + shift * np.eye(n)))


def random_orthogonal(rng: np.random.Generator, n: int) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    return q * np.sign(np.diag(r))
