"""P1 finite elements for the Neumann conductivity problem and local N-D maps.

The pure Neumann problem is closed with a Lagrange multiplier enforcing a zero
boundary average, so the bordered system stays symmetric::

    [ A   c ] [u]   [b]
    [ c^T 0 ] [l] = [0]

with ``c_i = int_{dOmega} phi_i``.  For a zero-mean current the multiplier
vanishes.  The bordered system is solved by block elimination: the kernel of
``A`` is the constants, so ``l = 1.b / 1.c``, ``A u = b - l c`` is solved with
a sparse LU of ``A`` with one row/column removed (symmetric ordering, no
pivoting), and a constant shift enforces ``c.u = 0``.  This is the exact
bordered-system solution at a fraction of the fill of factorizing the
indefinite matrix.
"""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.spatial import cKDTree

from .errors import (
    EpsilonUnresolved,
    PatchNotFound,
    PointsInE,
    PointsTooClose,
    SingularSystem,
)
from .mesh import LABEL_MEASUREMENT, Mesh
from .metric import as_spd

log = logging.getLogger(__name__)

DIRECT_NODE_LIMIT = 1_000_000


@dataclass(frozen=True)
class CurrentDensity:
    """Facet-wise constant boundary current (per unit area), zero off ``patch_label``."""

    values: np.ndarray  # (F,) aligned with mesh.facets
    patch_label: int
    zero_mean: bool = False

    def __add__(self, other: "CurrentDensity") -> "CurrentDensity":
        return CurrentDensity(self.values + other.values, self.patch_label)

    def __sub__(self, other: "CurrentDensity") -> "CurrentDensity":
        return CurrentDensity(self.values - other.values, self.patch_label)

    def __mul__(self, s: float) -> "CurrentDensity":
        return CurrentDensity(self.values * s, self.patch_label)

    __rmul__ = __mul__

    def total(self, mesh: Mesh) -> float:
        return float(self.values @ _all_areas(mesh))


@dataclass(frozen=True)
class Potential:
    values: np.ndarray
    multiplier: float = 0.0
    residual: float = 0.0


def _all_areas(mesh: Mesh) -> np.ndarray:
    return mesh.facet_areas()


def element_gradients(mesh: Mesh) -> tuple[np.ndarray, np.ndarray]:
    """Barycentric gradients ``(M, 4, 3)`` and volumes ``(M,)``."""
    p = mesh.nodes[mesh.tets]
    jac = np.transpose(p[:, 1:] - p[:, :1], (0, 2, 1))  # columns are edges
    inv = np.linalg.inv(jac)
    grads = np.concatenate([-inv.sum(axis=1, keepdims=True), inv], axis=1)
    vol = np.abs(np.linalg.det(jac)) / 6.0
    return grads, vol


def _tet_sigma(mesh: Mesh, sigma_pw: dict) -> np.ndarray:
    out = np.empty((len(mesh.tets), 3, 3))
    for region in mesh.regions():
        if region not in sigma_pw:
            raise KeyError(f"no conductivity for region {region}")
        out[mesh.tet_region == region] = as_spd(sigma_pw[region])
    return out


def assemble_stiffness(mesh: Mesh, sigma_pw: dict, grads=None, vol=None) -> sp.csr_matrix:
    if grads is None:
        grads, vol = element_gradients(mesh)
    sig = _tet_sigma(mesh, sigma_pw)
    ke = np.einsum("mia,mab,mjb,m->mij", grads, sig, grads, vol)
    rows = np.repeat(mesh.tets, 4, axis=1).ravel()
    cols = np.tile(mesh.tets, (1, 4)).ravel()
    n = mesh.num_nodes
    return sp.csr_matrix((ke.ravel(), (rows, cols)), shape=(n, n))


def facet_load(mesh: Mesh, facet_values: np.ndarray) -> np.ndarray:
    """``b_i = int psi phi_i`` for a facet-wise constant density."""
    w = facet_values * _all_areas(mesh) / 3.0
    return np.bincount(mesh.facets.ravel(), weights=np.repeat(w, 3), minlength=mesh.num_nodes)


class NeumannSolver:
    """Factorized Neumann problem for one mesh and piecewise-constant conductivity."""

    def __init__(self, mesh: Mesh, sigma_pw: dict, direct_limit: int = DIRECT_NODE_LIMIT):
        self.mesh = mesh
        self.sigma_pw = {int(k): as_spd(v) for k, v in sigma_pw.items()}
        self.grads, self.vol = element_gradients(mesh)
        self.A = assemble_stiffness(mesh, self.sigma_pw, self.grads, self.vol)
        bmask = mesh.boundary_mask()
        self.c = facet_load(mesh, bmask.astype(float))
        self.boundary_measure = float(self.c.sum())
        n = mesh.num_nodes
        self.direct = n <= direct_limit
        if self.direct:
            reduced = self.A[:-1, :-1].tocsc()
            self._lu = spla.splu(
                reduced, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                options=dict(SymmetricMode=True),
            )
        else:
            log.info("using preconditioned CG for %d nodes", n)
        self._locators: dict = {}

    def solve_load(self, b: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Solve for one or several load vectors (columns); returns (u, multiplier, residual)."""
        b = np.asarray(b, dtype=float)
        single = b.ndim == 1
        B = b[:, None] if single else b
        if self.direct:
            lam = B.sum(axis=0) / self.c.sum()
            U = np.zeros_like(B)
            U[:-1] = self._lu.solve(np.ascontiguousarray(B[:-1] - np.outer(self.c[:-1], lam)))
            U -= (self.c @ U) / self.c.sum()
        else:
            U, lam = self._solve_cg(B)
        res = self.A @ U + np.outer(self.c, lam) - B
        scale = np.maximum(np.linalg.norm(B, axis=0), 1e-300)
        rel = np.hypot(np.linalg.norm(res, axis=0), self.c @ U) / scale
        rel[np.linalg.norm(B, axis=0) == 0] = 0.0
        if np.any(rel > 1e-8):
            raise SingularSystem(f"linear solve residual {rel.max():.3e}")
        if single:
            return U[:, 0], lam[:1], rel[:1]
        return U, lam, rel

    def _solve_cg(self, B: np.ndarray):
        # A + gamma c c^T is SPD and, for loads orthogonal to constants, has the
        # bordered-system solution (the multiplier is zero)
        gamma = self.A.diagonal().mean() / (self.c @ self.c)
        op = spla.LinearOperator(self.A.shape, matvec=lambda x: self.A @ x + gamma * self.c * (self.c @ x))
        prec = spla.LinearOperator(self.A.shape, matvec=lambda x: x / (self.A.diagonal() + gamma * self.c**2))
        U = np.empty_like(B)
        for j in range(B.shape[1]):
            U[:, j], info = spla.cg(op, B[:, j], rtol=1e-13, maxiter=20000, M=prec)
            if info != 0:
                raise SingularSystem("CG did not converge")
        return U, np.zeros(B.shape[1])

    def solve(self, current: CurrentDensity) -> Potential:
        check_zero_mean(self.mesh, current)
        u, lam, rel = self.solve_load(facet_load(self.mesh, current.values))
        return Potential(values=u, multiplier=float(lam[0]), residual=float(rel[0]))

    def element_gradient(self, u: np.ndarray) -> np.ndarray:
        return np.einsum("mia,mi->ma", self.grads, u[self.mesh.tets])

    def energy(self, u: np.ndarray, v: np.ndarray) -> float:
        return float(u @ (self.A @ v))

    def locator(self, label: int) -> "SurfaceLocator":
        if label not in self._locators:
            self._locators[label] = SurfaceLocator(self.mesh, label)
        return self._locators[label]


def check_zero_mean(mesh: Mesh, current: CurrentDensity) -> None:
    areas = _all_areas(mesh)
    total = current.values @ areas
    if abs(total) > 1e-12 * max(np.abs(current.values) @ areas, 1.0):
        raise SingularSystem(f"current has nonzero total flux {total:.3e}")


def solve_neumann_problem(mesh: Mesh, sigma_pw: dict, current: CurrentDensity) -> Potential:
    return NeumannSolver(mesh, sigma_pw).solve(current)


class SurfaceLocator:
    """Point location and P1 interpolation on a labelled surface that is a graph over (x, y)."""

    def __init__(self, mesh: Mesh, label: int):
        mask = mesh.patch_mask(label)
        if not mask.any():
            raise PatchNotFound(f"mesh has no facets with label {label}")
        self.mesh = mesh
        self.facets = mesh.facets[mask]
        self.xy = mesh.nodes[self.facets][:, :, :2]
        self.tree = cKDTree(self.xy.mean(axis=1))

    def barycentric(self, points) -> tuple[np.ndarray, np.ndarray]:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        k = min(12, len(self.facets))
        _, cand = self.tree.query(points[:, :2], k=k)
        cand = np.atleast_2d(cand)
        best = np.zeros(len(points), dtype=int)
        lam_best = np.zeros((len(points), 3))
        for i, p in enumerate(points[:, :2]):
            tri = self.xy[cand[i]]
            t = np.stack([tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0]], axis=-1)
            l12 = np.linalg.solve(t, (p - tri[:, 0])[..., None])[..., 0]
            lam = np.column_stack([1 - l12.sum(axis=1), l12])
            j = int(np.argmax(lam.min(axis=1)))
            if lam[j].min() < -1e-9:
                raise PatchNotFound(f"point {points[i]} is not above the surface patch")
            best[i], lam_best[i] = cand[i][j], lam[j]
        return self.facets[best], lam_best

    def interpolate(self, values: np.ndarray, points) -> np.ndarray:
        tri, lam = self.barycentric(points)
        v = values[tri]
        if v.ndim == 3:
            return np.einsum("pk,pkc->pc", lam, v)
        return np.einsum("pk,pk->p", lam, v)

    def project(self, points) -> np.ndarray:
        """Points on the discrete surface with the same (x, y)."""
        tri, lam = self.barycentric(points)
        return np.einsum("pk,pkd->pd", lam, self.mesh.nodes[tri])


def local_mesh_size(mesh: Mesh, label: int, center, radius: float) -> float:
    mask = mesh.patch_mask(label)
    if not mask.any():
        raise PatchNotFound(f"mesh has no facets with label {label}")
    cent = mesh.nodes[mesh.facets[mask]].mean(axis=1)
    d = np.linalg.norm(cent - np.asarray(center, dtype=float), axis=1)
    near = d <= radius
    if not near.any():
        near = d <= d.min() * (1 + 1e-12)
    return float(np.sqrt(2.0 * mesh.facet_areas(mask)[near]).max())


def resolved_eps(mesh: Mesh, label: int, center, eps: float) -> float:
    """Smallest width >= eps (found by fixed-point growth) that the local mesh resolves."""
    for _ in range(20):
        need = 2.0 * local_mesh_size(mesh, label, center, eps)
        if eps >= need:
            return eps
        eps = need
    return eps


_SUB = 4  # triangle subdivision level for bump quadrature
_SUB_BARY = np.array(
    [
        ((i + 1 / 3) / _SUB, (j + 1 / 3) / _SUB)
        for i in range(_SUB)
        for j in range(_SUB - i)
    ]
    + [((i + 2 / 3) / _SUB, (j + 2 / 3) / _SUB) for i in range(_SUB - 1) for j in range(_SUB - 1 - i)]
)


def approx_delta_current(mesh: Mesh, patch_label: int, center, eps: float) -> CurrentDensity:
    """Cone-shaped bump of unit total flux supported in the eps-ball around ``center``.

    Not zero-mean by itself: subtract a second bump to get an admissible current.
    """
    center = np.asarray(center, dtype=float)
    h_loc = local_mesh_size(mesh, patch_label, center, eps)
    if eps < 2.0 * h_loc * (1 - 1e-9):
        raise EpsilonUnresolved(f"eps={eps:g} is below twice the local mesh size {h_loc:g}")
    mask = np.flatnonzero(mesh.patch_mask(patch_label))
    p = mesh.nodes[mesh.facets[mask]]
    reach = np.linalg.norm(p - p.mean(axis=1, keepdims=True), axis=2).max(axis=1)
    near = np.linalg.norm(p.mean(axis=1) - center, axis=1) <= eps + reach
    if not near.any():
        raise EpsilonUnresolved("eps-ball around the centre misses the patch")
    p = p[near]
    # sub-triangle centroids: x = p0 + s (p1 - p0) + t (p2 - p0)
    s, t = _SUB_BARY[:, 0], _SUB_BARY[:, 1]
    q = p[:, None, 0] + s[None, :, None] * (p[:, None, 1] - p[:, None, 0]) + t[None, :, None] * (p[:, None, 2] - p[:, None, 0])
    w = np.clip(1.0 - np.linalg.norm(q - center, axis=2) / eps, 0.0, None).mean(axis=1)
    values = np.zeros(len(mesh.facets))
    if not np.any(w > 0):
        raise EpsilonUnresolved("eps-ball around the centre misses the patch")
    areas = mesh.facet_areas()[mask[near]]
    values[mask[near]] = w / (w @ areas)
    return CurrentDensity(values, patch_label)


@dataclass(frozen=True)
class BumpDescriptor:
    plus: tuple[float, float, float]
    minus: tuple[float, float, float]
    eps: float


@dataclass(frozen=True)
class DiscreteNDMap:
    patch_label: int
    basis: list[CurrentDensity]
    descriptors: list[BumpDescriptor]
    matrix: np.ndarray
    loads: np.ndarray = field(repr=False)  # (N, m) load vectors of the basis
    potentials: np.ndarray = field(repr=False)  # (N, m)

    def symmetry_defect(self) -> float:
        m = self.matrix
        return float(np.abs(m - m.T).max() / max(np.abs(m).max(), 1e-300))

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(0.5 * (self.matrix + self.matrix.T))[0])


def _spread_nodes(mesh: Mesh, label: int, count: int, margin: float) -> np.ndarray:
    """Farthest-point sample of patch nodes at least ``margin`` inside the patch edge."""
    mask = mesh.patch_mask(label)
    nodes = np.unique(mesh.facets[mask])
    outer = np.unique(mesh.facets[~mask & (mesh.facet_label >= 100)])
    pts = mesh.nodes[nodes]
    if len(outer):
        d_edge, _ = cKDTree(mesh.nodes[outer]).query(pts)
        ok = d_edge >= margin
        if ok.sum() >= count:
            nodes, pts = nodes[ok], pts[ok]
    start = int(np.argmin(np.linalg.norm(pts - pts.mean(axis=0), axis=1)))
    chosen = [start]
    dist = np.linalg.norm(pts - pts[start], axis=1)
    while len(chosen) < count:
        nxt = int(np.argmax(dist))
        chosen.append(nxt)
        dist = np.minimum(dist, np.linalg.norm(pts - pts[nxt], axis=1))
    return mesh.nodes[nodes[chosen]]


def assemble_local_nd_map(
    mesh: Mesh,
    sigma_pw: dict,
    patch_label: int = LABEL_MEASUREMENT,
    basis_size: int = 6,
    eps: float | None = None,
    solver: NeumannSolver | None = None,
) -> DiscreteNDMap:
    """Energy pairings ``int sigma grad u_i . grad u_j`` for bump-difference currents on the patch."""
    if basis_size < 2:
        raise ValueError("basis_size must be at least 2")
    if not mesh.patch_mask(patch_label).any():
        raise PatchNotFound(f"mesh has no facets with label {patch_label}")
    solver = solver or NeumannSolver(mesh, sigma_pw)
    centers = _spread_nodes(mesh, patch_label, basis_size + 1, 0.0)
    if eps is None:
        eps = max(resolved_eps(mesh, patch_label, c, 2.0 * local_mesh_size(mesh, patch_label, c, 0.0))
                  for c in centers)
    ref = approx_delta_current(mesh, patch_label, centers[0], eps)
    basis, desc = [], []
    for c in centers[1:]:
        basis.append(approx_delta_current(mesh, patch_label, c, eps) - ref)
        desc.append(BumpDescriptor(tuple(map(float, c)), tuple(map(float, centers[0])), float(eps)))
    loads = np.column_stack([facet_load(mesh, b.values) for b in basis])
    for b in basis:
        check_zero_mean(mesh, b)
    U, _, _ = solver.solve_load(loads)
    matrix = U.T @ (solver.A @ U)
    return DiscreteNDMap(patch_label, basis, desc, matrix, loads, U)


def write_ndmap(ndmap: DiscreteNDMap, path) -> None:
    m = ndmap.matrix.shape[0]
    lines = ["ndmapv1", f"patch {ndmap.patch_label}", f"basis {m}"]
    for i, d in enumerate(ndmap.descriptors):
        coords = " ".join(f"{v:.17g}" for v in (*d.plus, *d.minus))
        lines.append(f"{i} {coords} {d.eps:.17g}")
    lines.append(f"matrix {m} {m}")
    lines += [" ".join(f"{v:.17g}" for v in row) for row in ndmap.matrix]
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")


def read_ndmap(path) -> tuple[int, list[BumpDescriptor], np.ndarray]:
    it = iter(Path(path).read_text(encoding="ascii").splitlines())
    if next(it) != "ndmapv1":
        raise ValueError("not an ndmapv1 file")
    label = int(next(it).split()[1])
    m = int(next(it).split()[1])
    desc = []
    for _ in range(m):
        v = [float(x) for x in next(it).split()[1:]]
        desc.append(BumpDescriptor(tuple(v[:3]), tuple(v[3:6]), v[6]))
    next(it)
    matrix = np.array([[float(x) for x in next(it).split()] for _ in range(m)])
    return label, desc, matrix


def extrapolate(eps: np.ndarray, values: np.ndarray, order: float = 1.0) -> np.ndarray:
    """Least-squares intercept of ``values = V0 + c eps**order`` (per trailing column)."""
    eps = np.asarray(eps, dtype=float)
    values = np.asarray(values, dtype=float)
    if eps.size == 1:
        return values[0]
    design = np.column_stack([np.ones_like(eps), eps**order])
    coef, *_ = np.linalg.lstsq(design, values.reshape(len(eps), -1), rcond=None)
    return coef[0].reshape(values.shape[1:])


@dataclass(frozen=True)
class KernelEstimate:
    value: float
    eps: tuple[float, ...]
    per_eps: tuple[float, ...]


def _check_separation(points, min_sep: float) -> None:
    pts = [np.asarray(p, dtype=float) for p in points]
    for a, b in itertools.combinations(pts, 2):
        if np.linalg.norm(a - b) < min_sep * (1 - 1e-12):
            raise PointsTooClose(f"points closer than {min_sep:g}")


def kernel_from_nd_map(
    solver: NeumannSolver,
    x, y, w, z,
    eps_schedule,
    patch_label: int = LABEL_MEASUREMENT,
    order: float = 1.0,
) -> KernelEstimate:
    """Estimate ``K(x, y, w, z)`` by pairing ``delta(x) - delta(z)`` with ``delta(y) - delta(w)``.

    Each bump is widened to the smallest width >= eps that the mesh resolves
    at its centre, so graded meshes may be coarse away from the focus.
    """
    eps_schedule = tuple(float(e) for e in eps_schedule)
    _check_separation((x, y, w, z), 4.0 * max(eps_schedule))
    mesh = solver.mesh
    vals = []
    for eps in eps_schedule:
        bump = {k: approx_delta_current(mesh, patch_label, p, resolved_eps(mesh, patch_label, p, eps))
                for k, p in zip("xywz", (x, y, w, z))}
        psi = bump["x"] - bump["z"]
        phi = bump["y"] - bump["w"]
        u = solver.solve(phi).values
        vals.append(float(facet_load(mesh, psi.values) @ u))
    return KernelEstimate(float(extrapolate(np.array(eps_schedule), np.array(vals), order)), eps_schedule, tuple(vals))


def discrete_kernel(solver: NeumannSolver, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    """Discrete Neumann kernel ``G[i, j]``: potential at node i for a unit load at node j
    balanced by the uniform boundary flux ``-1/|dOmega|``."""
    n = solver.mesh.num_nodes
    loads = -np.repeat(solver.c[:, None] / solver.boundary_measure, len(cols), axis=1)
    loads[cols, np.arange(len(cols))] += 1.0
    U, _, _ = solver.solve_load(loads)
    del n
    return U[rows]


def four_point_quadrature(solver: NeumannSolver, psi: CurrentDensity, phi: CurrentDensity,
                          anchor_w: int, anchor_z: int) -> float:
    """``sum_ij b_psi[i] b_phi[j] K_h(i, j, w, z)`` with the discrete kernel."""
    bpsi = facet_load(solver.mesh, psi.values)
    bphi = facet_load(solver.mesh, phi.values)
    si = np.flatnonzero(bpsi)
    sj = np.flatnonzero(bphi)
    rows = np.concatenate([si, [anchor_z]])
    cols = np.concatenate([sj, [anchor_w]])
    G = discrete_kernel(solver, rows, cols)
    K = G[:-1, :-1] - G[:-1, -1:] - G[-1:, :-1] + G[-1, -1]
    return float(bpsi[si] @ K @ bphi[sj])


@dataclass(frozen=True)
class AlessandriniResult:
    lhs: float
    rhs: float
    residual: float


def alessandrini_residual(mesh: Mesh, sigma1: dict, sigma2: dict, psi1: CurrentDensity,
                          psi2: CurrentDensity, solvers=None) -> AlessandriniResult:
    """``<psi1, (N2 - N1) psi2>`` against ``int (sigma1 - sigma2) grad u1 . grad u2``."""
    s1, s2 = solvers or (NeumannSolver(mesh, sigma1), NeumannSolver(mesh, sigma2))
    b1 = facet_load(mesh, psi1.values)
    u1_psi1 = s1.solve(psi1).values
    u1_psi2 = s1.solve(psi2).values
    u2_psi2 = s2.solve(psi2).values
    lhs = float(b1 @ u2_psi2 - b1 @ u1_psi2)
    g1 = s1.element_gradient(u1_psi1)
    g2 = s2.element_gradient(u2_psi2)
    dsig = _tet_sigma(mesh, s1.sigma_pw) - _tet_sigma(mesh, s2.sigma_pw)
    rhs = float(np.einsum("m,ma,mab,mb->", s1.vol, g1, dsig, g2))
    return AlessandriniResult(lhs, rhs, abs(lhs - rhs))


def locate_tet(mesh: Mesh, point) -> tuple[int, np.ndarray]:
    p = mesh.nodes[mesh.tets]
    point = np.asarray(point, dtype=float)
    jac = np.transpose(p[:, 1:] - p[:, :1], (0, 2, 1))
    l123 = np.linalg.solve(jac, (point - p[:, 0])[..., None])[..., 0]
    lam = np.column_stack([1 - l123.sum(axis=1), l123])
    k = int(np.argmax(lam.min(axis=1)))
    if lam[k].min() < -1e-9:
        raise ValueError(f"point {point} lies outside the mesh")
    return k, lam[k]


def point_source_load(solver: NeumannSolver, point) -> np.ndarray:
    """Load of an interior unit source at ``point`` balanced by uniform boundary outflow."""
    k, lam = locate_tet(solver.mesh, point)
    b = -solver.c / solver.boundary_measure
    np.add.at(b, solver.mesh.tets[k], lam)
    return b


@dataclass(frozen=True)
class SFunctionResult:
    value: float
    hypothesis_ok: bool  # sigma1 == sigma2 on D

    @property
    def magnitude(self) -> float:
        return abs(self.value)


def s_function_residual(mesh: Mesh, sigma1: dict, sigma2: dict, d_regions, y, z,
                        solvers=None) -> SFunctionResult:
    """``int_E (sigma1 - sigma2) grad N1(y, .) . grad N2(z, .)`` with E the complement of D."""
    d_regions = set(int(r) for r in d_regions)
    for p in (y, z):
        k, _ = locate_tet(mesh, p)
        if int(mesh.tet_region[k]) not in d_regions:
            raise PointsInE(f"point {p} lies in E, outside the stripped regions")
    s1, s2 = solvers or (NeumannSolver(mesh, sigma1), NeumannSolver(mesh, sigma2))
    n1 = s1.solve_load(point_source_load(s1, y))[0]
    n2 = s2.solve_load(point_source_load(s2, z))[0]
    in_e = ~np.isin(mesh.tet_region, list(d_regions))
    dsig = _tet_sigma(mesh, s1.sigma_pw) - _tet_sigma(mesh, s2.sigma_pw)
    g1 = s1.element_gradient(n1)[in_e]
    g2 = s2.element_gradient(n2)[in_e]
    value = float(np.einsum("m,ma,mab,mb->", s1.vol[in_e], g1, dsig[in_e], g2))
    ok = all(np.array_equal(s1.sigma_pw[r], s2.sigma_pw[r]) for r in d_regions if r in s1.sigma_pw)
    return SFunctionResult(value, ok)


def numeric_neumann_kernel_samples(
    solver: NeumannSolver,
    y,
    sample_points,
    eps_schedule,
    anchors,
    patch_label: int = LABEL_MEASUREMENT,
    order: float = 1.0,
) -> tuple[np.ndarray, np.ndarray]:
    """Gauge-fixed samples ``K(x, y, w, z)`` at each sample point x.

    The source is ``delta_eps(y) - delta_eps(w)``; x and z are evaluated
    pointwise.  Returns the eps-extrapolated values and the raw per-eps table.
    """
    w, z = (np.asarray(a, dtype=float) for a in anchors)
    y = np.asarray(y, dtype=float)
    pts = np.atleast_2d(np.asarray(sample_points, dtype=float))
    eps_schedule = np.asarray(eps_schedule, dtype=float)
    _check_separation((y, w, z), 4.0 * eps_schedule.max())
    mesh = solver.mesh
    loc = solver.locator(patch_label)
    # the anchor bump only contributes a smooth function of x near y (a gauge
    # term), so it may be wider than eps where the mesh is coarse
    loads = np.column_stack([
        facet_load(mesh, (approx_delta_current(mesh, patch_label, y, e)
                          - approx_delta_current(mesh, patch_label, w, resolved_eps(mesh, patch_label, w, e))).values)
        for e in eps_schedule
    ])
    U, _, _ = solver.solve_load(loads)
    at_x = loc.interpolate(U, pts)  # (P, E)
    at_z = loc.interpolate(U, z[None])[0]
    table = at_x - at_z[None]
    return extrapolate(eps_schedule, table.T, order), table
