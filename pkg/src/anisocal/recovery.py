"""Metric recovery from boundary kernel data and region-by-region layer stripping.

Pipeline for one surface patch:

1. sample the gauge-fixed kernel ``K(x, y, w, z)`` along rays ``x = y + r xi``
   in the tangent plane at a base point ``y``;
2. fit the singular coefficient ``A_xi`` of ``r^(2-n)`` per direction and
   convert it to ``g xi . xi = (A_xi / 2 C_n)^(2/(2-n))``;
3. solve for the tangential Gram matrix, collect one linear constraint per
   tangent pair and base point, and solve for the full metric ``g``;
4. convert ``g`` to the conductivity.
"""
from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field
from typing import Protocol

import numpy as np
from scipy.spatial import cKDTree

from .errors import (
    AnisocalError,
    ChainOrderViolation,
    FitDiverged,
    FlatInterface,
    InsufficientDirections,
    NonUniqueConstraints,
)
from .fem import NeumannSolver, numeric_neumann_kernel_samples, resolved_eps
from .geometry import (
    PartitionedDomain,
    SurfacePatch,
    TangentFrame,
    is_nonflat,
    tangent_frame_at,
    validate_partition_chain,
)
from .halfspace import kernel_constant
from .mesh import LABEL_MEASUREMENT, build_structured_mesh
from .metric import as_spd, conductivity_from_metric, symmetrize

log = logging.getLogger(__name__)


# --------------------------------------------------------------------------- samples


@dataclass(frozen=True)
class KernelSampleSet:
    """Kernel samples on rays from a base point.

    ``directions`` are unit coefficient vectors in the tangent basis of the
    frame the samples were taken in; ``values[d, k]`` is the sample at radius
    ``radii[d, k]`` along direction ``d``.  ``radii`` may also be one shared
    ``(R,)`` vector.
    """

    base_point: np.ndarray
    directions: np.ndarray  # (D, n-1)
    radii: np.ndarray  # (R,) or (D, R), strictly decreasing per direction
    values: np.ndarray  # (D, R)
    anchors: tuple = ()

    def __post_init__(self):
        d = np.asarray(self.directions)
        r = np.broadcast_to(np.asarray(self.radii, dtype=float), np.shape(self.values))
        if np.shape(self.values)[0] != len(d):
            raise ValueError("values must have shape (directions, radii)")
        if np.any(r <= 0) or np.any(np.diff(r, axis=1) >= 0):
            raise ValueError("radii must be positive and strictly decreasing")
        if not np.allclose(np.linalg.norm(d, axis=1), 1.0, atol=1e-12):
            raise ValueError("directions must be unit vectors")

    def radii_of(self, i: int) -> np.ndarray:
        r = np.asarray(self.radii, dtype=float)
        return r if r.ndim == 1 else r[i]

    def with_offsets(self, f) -> "KernelSampleSet":
        """Samples with ``f(direction_index, radius)`` added (gauge perturbation tests)."""
        extra = np.array([[f(i, r) for r in self.radii_of(i)] for i in range(len(self.directions))])
        return KernelSampleSet(self.base_point, self.directions, self.radii, self.values + extra, self.anchors)


def canonical_directions(m: int, count: int | None = None, offset: float = 0.0) -> np.ndarray:
    """Unit directions in R^m covering enough quadratic forms: ``offset + k pi / count``
    for m = 2, coordinate axes plus pairwise polarization vectors otherwise."""
    if m == 1:
        return np.ones((1, 1))
    if m == 2:
        count = count or 6
        t = offset + np.arange(count) * np.pi / count
        return np.column_stack([np.cos(t), np.sin(t)])
    eye = np.eye(m)
    dirs = [eye[i] for i in range(m)]
    for i in range(m):
        for j in range(i + 1, m):
            dirs.append((eye[i] + eye[j]) / np.sqrt(2))
            dirs.append((eye[i] - eye[j]) / np.sqrt(2))
    return np.array(dirs)


def with_antipodes(directions: np.ndarray) -> np.ndarray:
    return np.concatenate([directions, -directions])


# --------------------------------------------------------------------------- extraction


@dataclass(frozen=True)
class FitSettings:
    beta: float = 0.5  # correction exponent: r^(2-n+beta), log r when that power is 0
    correction: bool = True
    # a symmetric source bump of width eps perturbs the kernel by
    # O(eps^2 r^(-n)); fitting that term removes the smoothing bias
    smoothing: bool = False
    offsets: bool = True  # per-ray polynomial gauge terms
    offset_degree: int = 1
    residual_cap: float = 1e-2


@dataclass(frozen=True)
class TangentialFit:
    gram: np.ndarray  # (n-1, n-1) in the frame tangent basis
    directions: np.ndarray  # one representative per antipodal group
    quadratic: np.ndarray  # fitted g xi . xi per group
    amplitudes: np.ndarray
    fit_residuals: np.ndarray
    gram_residual: float
    condition: float


def _upper_pairs(m: int) -> list[tuple[int, int]]:
    return [(p, q) for p in range(m) for q in range(p, m)]


def _sym_from_upper(vec: np.ndarray, m: int) -> np.ndarray:
    out = np.zeros((m, m))
    for val, (p, q) in zip(vec, _upper_pairs(m)):
        out[p, q] = out[q, p] = val
    return out


def _quadratic_row(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Coefficients of ``g u . v`` in the upper-triangular unknowns of symmetric g."""
    m = u.size
    return np.array([u[p] * v[p] if p == q else u[p] * v[q] + u[q] * v[p] for p, q in _upper_pairs(m)])


def _group_antipodes(directions: np.ndarray) -> list[list[tuple[int, float]]]:
    groups, used = [], set()
    for i, d in enumerate(directions):
        if i in used:
            continue
        members = [(i, 1.0)]
        used.add(i)
        for j in range(i + 1, len(directions)):
            if j not in used and np.allclose(directions[j], -d, atol=1e-9):
                members.append((j, -1.0))
                used.add(j)
                break
        groups.append(members)
    return groups


def fit_singular_amplitude(radii_by_member, values_by_member, n: int, settings: FitSettings = FitSettings()):
    """Least squares for ``A r^(2-n) + B corr(r) + sum_p d_mp r^p`` over rays sharing A and B.

    Returns the amplitude ``A`` and the relative fit residual.
    """
    radii = [np.asarray(r, dtype=float) for r in radii_by_member]
    allr = np.concatenate(radii)
    cols = [allr ** (2 - n)]
    if settings.correction:
        power = 2 - n + settings.beta
        cols.append(np.log(allr) if abs(power) < 1e-12 else allr**power)
    if settings.smoothing:
        cols.append(allr ** (-n))
    if settings.offsets:
        start = 0
        for r in radii:
            mask = np.zeros(allr.size)
            mask[start:start + r.size] = 1.0
            start += r.size
            for p in range(settings.offset_degree + 1):
                cols.append(mask * allr**p)
    design = np.column_stack(cols)
    rhs = np.concatenate(values_by_member)
    if design.shape[1] > design.shape[0]:
        raise FitDiverged("more fit parameters than samples; add radii")
    # column scaling keeps the singular and offset columns comparable
    scale = np.linalg.norm(design, axis=0)
    coef, *_ = np.linalg.lstsq(design / scale, rhs, rcond=None)
    coef = coef / scale
    resid = np.linalg.norm(design @ coef - rhs) / max(np.linalg.norm(rhs), 1e-300)
    return float(coef[0]), float(resid)


def extract_tangential_metric(
    samples: KernelSampleSet, frame: TangentFrame, settings: FitSettings = FitSettings()
) -> TangentialFit:
    n = frame.n
    m = n - 1
    if np.shape(samples.values)[1] < 3:
        raise InsufficientDirections("need at least 3 radii per direction")
    dirs = np.asarray(samples.directions, dtype=float)
    groups = _group_antipodes(dirs)
    if len(groups) < m * (m + 1) // 2:
        raise InsufficientDirections(f"{len(groups)} distinct directions; need {m * (m + 1) // 2}")
    c = kernel_constant(n)
    reps, quad, amps, res = [], [], [], []
    for members in groups:
        amp, rel = fit_singular_amplitude(
            [samples.radii_of(i) for i, _ in members], [samples.values[i] for i, _ in members], n, settings
        )
        if not np.isfinite(amp) or amp <= 0 or rel > settings.residual_cap:
            raise FitDiverged(f"direction {dirs[members[0][0]]}: amplitude {amp:.3e}, residual {rel:.3e}")
        reps.append(dirs[members[0][0]])
        amps.append(amp)
        res.append(rel)
        quad.append((amp / (2.0 * c)) ** (2.0 / (2 - n)))
    reps = np.array(reps)
    rows = np.array([_quadratic_row(d, d) for d in reps])
    rank = np.linalg.matrix_rank(rows)
    if rank < m * (m + 1) // 2:
        raise InsufficientDirections("directions do not determine a quadratic form")
    sol, *_ = np.linalg.lstsq(rows, np.array(quad), rcond=None)
    gram = _sym_from_upper(sol, m)
    gres = float(np.linalg.norm(rows @ sol - quad) / np.linalg.norm(quad))
    return TangentialFit(
        gram=gram,
        directions=reps,
        quadratic=np.array(quad),
        amplitudes=np.array(amps),
        fit_residuals=np.array(res),
        gram_residual=gres,
        condition=float(np.linalg.cond(rows)),
    )


# --------------------------------------------------------------------------- completion


@dataclass(frozen=True)
class ConstraintSystem:
    n: int
    rows: np.ndarray  # (k, n(n+1)/2) coefficients of the upper triangle of g
    rhs: np.ndarray
    provenance: list  # (point index, i, j)

    def __post_init__(self):
        if np.any(np.all(self.rows == 0, axis=1)):
            raise ValueError("constraint row with all-zero coefficients")
        if not np.all(np.isfinite(self.rhs)):
            raise ValueError("constraint right-hand side is not finite")

    @property
    def unknowns(self) -> list[tuple[int, int]]:
        return _upper_pairs(self.n)


def assemble_metric_constraints(point_data) -> ConstraintSystem:
    """One row ``g v_i . v_j = Gram_ij`` per point and tangent pair ``i <= j``."""
    point_data = list(point_data)
    if not point_data:
        raise ValueError("need at least one point")
    n = point_data[0][0].n
    rows, rhs, prov = [], [], []
    for k, (frame, gram) in enumerate(point_data):
        gram = np.asarray(gram, dtype=float)
        if not np.allclose(gram, gram.T, atol=1e-12 * max(1.0, np.abs(gram).max())):
            raise ValueError("Gram matrix is not symmetric")
        t = frame.tangents
        for i in range(n - 1):
            for j in range(i, n - 1):
                rows.append(_quadratic_row(t[i], t[j]))
                rhs.append(gram[i, j])
                prov.append((k, i, j))
    return ConstraintSystem(n=n, rows=np.array(rows), rhs=np.array(rhs), provenance=prov)


@dataclass(frozen=True)
class MetricRecovery:
    g: np.ndarray
    rank: int
    singular_values: np.ndarray
    residual: float
    condition: float


RANK_RTOL = 1e-10


def recover_full_metric(system: ConstraintSystem) -> MetricRecovery:
    n = system.n
    unknowns = n * (n + 1) // 2
    _, s, vt = np.linalg.svd(system.rows, full_matrices=True)
    rank = int(np.sum(s > RANK_RTOL * s[0]))
    if rank < unknowns:
        null = [_sym_from_upper(v, n) for v in vt[rank:]]
        raise NonUniqueConstraints(
            f"constraints have rank {rank} < {unknowns}", rank=rank, nullspace=null, singular_values=s
        )
    sol, *_ = np.linalg.lstsq(system.rows, system.rhs, rcond=None)
    g = symmetrize(_sym_from_upper(sol, n))
    resid = float(np.linalg.norm(system.rows @ sol - system.rhs) / max(np.linalg.norm(system.rhs), 1e-300))
    g = as_spd(g)
    return MetricRecovery(g=g, rank=rank, singular_values=s, residual=resid, condition=float(s[0] / s[-1]))


# --------------------------------------------------------------------------- kernel sources


class KernelSource(Protocol):
    def samples(self, patch: SurfacePatch, local_point: np.ndarray) -> tuple[KernelSampleSet, TangentFrame]:
        ...


@dataclass(frozen=True)
class SamplingPlan:
    radii: tuple[float, ...] = (0.2, 0.14, 0.1, 0.07, 0.05)
    direction_count: int = 6


@dataclass
class AnalyticKernelSource:
    """Exact boundary-kernel samples of a constant metric in the tangent plane.

    ``gauge`` optionally adds a bounded ``f(x) + h(y)`` term to mimic
    four-point gauge offsets.
    """

    g: np.ndarray
    plan: SamplingPlan = field(default_factory=SamplingPlan)
    gauge: object = None

    def samples(self, patch, local_point):
        frame = tangent_frame_at(patch, local_point)
        return analytic_samples(self.g, frame, self.plan, self.gauge), frame


def analytic_samples(g, frame: TangentFrame, plan: SamplingPlan = SamplingPlan(), gauge=None) -> KernelSampleSet:
    g = np.asarray(g, dtype=float)
    dirs = with_antipodes(canonical_directions(frame.n - 1, plan.direction_count))
    radii = np.asarray(sorted(plan.radii, reverse=True), dtype=float)
    y = frame.base_point
    vals = np.empty((len(dirs), len(radii)))
    for i, d in enumerate(dirs):
        x = y + radii[:, None] * (d @ frame.tangents)[None]
        # the kernel depends on x - y only, so samples in the tangent plane
        # equal half-space boundary values with g expressed in ambient coordinates
        vals[i] = 2.0 * kernel_constant(frame.n) * np.einsum("ki,ij,kj->k", x - y, g, x - y) ** ((2 - frame.n) / 2)
        if gauge is not None:
            vals[i] += np.array([gauge(xk, y) for xk in x])
    return KernelSampleSet(y, dirs, radii, vals)


@dataclass(frozen=True)
class FemSettings:
    h: float = 0.2
    h_fine: float = 0.005
    growth: float = 1.25
    core: float = 0.03
    eps_factors: tuple[float, ...] = (2.0,)  # eps schedule in units of h_fine
    eps_order: float = 2.0
    # samples are read at surface nodes on lattice lines through the base
    # point: nodal values carry no interpolation error
    r_min: float = 0.05
    ray_nodes: int = 8
    anchor_distance: float = 0.7  # fraction of r0


LATTICE_STEPS = ((1, 0), (1, 1), (0, 1), (-1, 1))


def _lattice_rays(xs: np.ndarray, ys: np.ndarray, focus, steps=LATTICE_STEPS):
    """Lattice offsets ``(x, y)`` along axis and diagonal lines leaving ``focus``.

    Diagonal rays stop where the x and y spacings stop matching.
    """
    i0 = int(np.argmin(np.abs(xs - focus[0])))
    j0 = int(np.argmin(np.abs(ys - focus[1])))
    rays = []
    for a, b in list(steps) + [(-a, -b) for a, b in steps]:
        pts = []
        k = 1
        while 0 <= i0 + k * a < len(xs) and 0 <= j0 + k * b < len(ys):
            dx = xs[i0 + k * a] - xs[i0]
            dy = ys[j0 + k * b] - ys[j0]
            if a and b and abs(abs(dx) - abs(dy)) > 1e-9 * max(abs(dx), 1.0):
                break
            pts.append((xs[i0 + k * a], ys[j0 + k * b]))
            k += 1
        rays.append(np.array(pts).reshape(-1, 2))
    return rays


@dataclass
class FemKernelSource:
    """Kernel samples from forward solves on ``domain`` with conductivity ``sigma_pw``.

    A mesh refined around each base point is built; the source is a bump
    difference ``delta_eps(y) - delta_eps(w)`` on the bottom patch and the
    response is read at surface nodes along lattice lines through ``y``.
    """

    domain: PartitionedDomain
    sigma_pw: dict
    settings: FemSettings = field(default_factory=FemSettings)
    solves: int = 0

    def _anchors(self, patch: SurfacePatch, local_point: np.ndarray):
        a = self.settings.anchor_distance * patch.r0
        base = np.arctan2(local_point[1], local_point[0]) if np.linalg.norm(local_point) > 1e-12 else 0.0
        return [patch.point(a * np.array([np.cos(base + s), np.sin(base + s)])) for s in (2.2, -2.2)]

    def samples(self, patch, local_point):
        st = self.settings
        local_point = np.asarray(local_point, dtype=float)
        frame = tangent_frame_at(patch, local_point)
        y = frame.base_point
        mesh = build_structured_mesh(self.domain, st.h, focus=y[:2], h_fine=st.h_fine, growth=st.growth, core=st.core)
        solver = NeumannSolver(mesh, self.sigma_pw)
        self.solves += 1
        surf = np.unique(mesh.facets[mesh.patch_mask(LABEL_MEASUREMENT)])
        tree = cKDTree(mesh.nodes[surf, :2])
        xs, ys = np.unique(mesh.nodes[:, 0]), np.unique(mesh.nodes[:, 1])
        dirs, radii, pts = [], [], []
        for ray in _lattice_rays(xs, ys, y[:2]):
            dist, idx = tree.query(ray) if len(ray) else (np.zeros(0), np.zeros(0, dtype=int))
            x = mesh.nodes[surf[idx[dist < 1e-9]]]
            proj = (x - y) @ frame.tangents.T
            r = np.linalg.norm(proj, axis=1)
            keep = r >= st.r_min
            x, proj, r = x[keep][: st.ray_nodes], proj[keep][: st.ray_nodes], r[keep][: st.ray_nodes]
            if len(r) < 3:
                raise InsufficientDirections("too few surface nodes on a sampling ray; enlarge the patch")
            unit = (proj / r[:, None]).mean(axis=0)
            dirs.append(unit / np.linalg.norm(unit))
            radii.append(r[::-1])
            pts.append(x[::-1])
        count = min(len(r) for r in radii)
        radii = np.array([r[-count:] for r in radii])
        pts = np.array([p[-count:] for p in pts])
        w, z = self._anchors(patch, local_point)
        # facets on a tilted surface are larger than h_fine; stretch the schedule to fit
        lo = min(st.eps_factors)
        eps_min = resolved_eps(mesh, LABEL_MEASUREMENT, y, lo * st.h_fine)
        eps = [f / lo * eps_min for f in st.eps_factors]
        vals, _ = numeric_neumann_kernel_samples(solver, y, pts.reshape(-1, 3), eps, (w, z), order=st.eps_order)
        samples = KernelSampleSet(y, np.array(dirs), radii, vals.reshape(radii.shape), (w, z))
        return samples, frame


# --------------------------------------------------------------------------- one interface


@dataclass(frozen=True)
class RecoveryConfig:
    base_points: int = 3  # witness points in addition to the patch centre
    base_radius: float = 0.6  # witness points are taken within this fraction of r0
    sample_count: int = 64
    flat_tol: float = 1e-3
    fit: FitSettings = field(default_factory=FitSettings)


@dataclass(frozen=True)
class InterfaceRecovery:
    sigma: np.ndarray
    g: np.ndarray
    base_points: np.ndarray
    fits: list
    metric: MetricRecovery


def choose_base_points(patch: SurfacePatch, config: RecoveryConfig = RecoveryConfig()) -> np.ndarray:
    """Patch centre plus witness points with the most diverse normal deflections."""
    witness = is_nonflat(patch, config.sample_count, config.flat_tol)
    if not witness.nonflat:
        raise FlatInterface(f"patch '{patch.name}' is flat", interface=None)
    rho = np.linalg.norm(witness.points, axis=1)
    ok = rho <= config.base_radius * patch.r0
    if ok.sum() < config.base_points:
        ok = np.argsort(rho)[: max(config.base_points, 1)]
        ok = np.isin(np.arange(len(rho)), ok)
    pts, dirs, ang = witness.points[ok], witness.directions[ok], witness.angles[ok]
    chosen = [int(np.argmax(ang))]
    while len(chosen) < min(config.base_points, len(pts)):
        sep = np.min(np.abs(dirs @ dirs[chosen].T), axis=1)  # |cos| to nearest chosen direction
        sep[chosen] = np.inf
        chosen.append(int(np.argmin(sep - 1e-3 * ang / max(ang.max(), 1e-300))))
    return np.vstack([np.zeros(patch.n - 1), pts[chosen]])


def recover_interface_conductivity(patch: SurfacePatch, kernel_source: KernelSource,
                                   config: RecoveryConfig = RecoveryConfig()) -> InterfaceRecovery:
    base = choose_base_points(patch, config)
    data, fits = [], []
    for p in base:
        samples, frame = kernel_source.samples(patch, p)
        fit = extract_tangential_metric(samples, frame, config.fit)
        fits.append(fit)
        data.append((frame, fit.gram))
    rec = recover_full_metric(assemble_metric_constraints(data))
    return InterfaceRecovery(conductivity_from_metric(rec.g), rec.g, base, fits, rec)


# --------------------------------------------------------------------------- stripping


def interior_map_oracle(truth: dict, domain: PartitionedDomain, k: int, recovered: dict | None = None,
                        settings: FemSettings = FemSettings()) -> FemKernelSource:
    """Kernel source for interface ``k`` computed on the residual domain above it.

    Uniqueness of the inner map given the outer one and the already recovered
    regions is a theorem, not an algorithm; the simulator therefore evaluates
    the inner map from the ground truth on the residual domain.  ``recovered``
    lists the regions below interface k, which must all be known.
    """
    if k == 1:
        return FemKernelSource(domain, dict(truth), settings)
    iface = domain.interface(k)
    below = domain.regions[: domain.regions.index(iface.above)]
    missing = [r for r in below if recovered is None or r not in recovered]
    if missing:
        raise ChainOrderViolation(f"regions {missing} must be recovered before interface {k}")
    residual = domain.above(k)
    return FemKernelSource(residual, {r: truth[r] for r in residual.regions}, settings)


@dataclass
class RegionResult:
    region: int
    interface: int
    sigma: np.ndarray | None = None
    g: np.ndarray | None = None
    rank: int | None = None
    condition: float | None = None
    residual: float | None = None
    error: str | None = None
    max_rel_error: float | None = None


@dataclass
class RecoveryReport:
    chain: list[int]
    links: list[int]
    regions: dict[int, RegionResult]
    timing: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return all(r.error is None for r in self.regions.values()) and len(self.regions) == len(self.chain)

    def to_json(self) -> dict:
        def arr(a):
            return None if a is None else np.asarray(a).tolist()

        return {
            "chain": self.chain,
            "links": self.links,
            "regions": {
                str(k): {
                    "interface": r.interface,
                    "sigma": arr(r.sigma),
                    "g": arr(r.g),
                    "rank": r.rank,
                    "condition": r.condition,
                    "residual": r.residual,
                    "max_rel_error": r.max_rel_error,
                    "error": r.error,
                }
                for k, r in sorted(self.regions.items())
            },
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True)


def _relative_error(est: np.ndarray, truth: np.ndarray) -> float:
    return float(np.abs(est - truth).max() / np.abs(truth).max())


def layer_strip(domain: PartitionedDomain, boundary_data: KernelSource | None, truth_for_oracle: dict,
                config: RecoveryConfig = RecoveryConfig(), fem: FemSettings = FemSettings(),
                source_factory=None) -> RecoveryReport:
    """Recover each region's conductivity along the interface chain.

    ``boundary_data`` serves kernel samples on the measurement patch (built
    from the truth when None); later interfaces use :func:`interior_map_oracle`
    or ``source_factory(k, recovered)`` when given.  Failures are recorded in
    the report instead of raised.
    """
    try:
        diag = validate_partition_chain(domain, config.sample_count, config.flat_tol)
    except FlatInterface as exc:
        region = domain.regions[0] if exc.interface == 1 else domain.interface(exc.interface).above
        return RecoveryReport([], [], {region: RegionResult(region, exc.interface, error=str(exc))})
    report = RecoveryReport(diag.chain, diag.links, {})
    recovered: dict[int, np.ndarray] = {}
    for region, link in zip(diag.chain, diag.links):
        t0 = time.perf_counter()
        res = RegionResult(region, link)
        report.regions[region] = res
        try:
            if source_factory is not None:
                source = source_factory(link, recovered)
            elif link == 1:
                source = boundary_data or interior_map_oracle(truth_for_oracle, domain, 1, settings=fem)
            else:
                source = interior_map_oracle(truth_for_oracle, domain, link, recovered, settings=fem)
            patch = domain.boundary_patch if link == 1 else domain.interface(link).patch
            out = recover_interface_conductivity(patch, source, config)
        except (AnisocalError, np.linalg.LinAlgError) as exc:
            res.error = f"{type(exc).__name__}: {exc}"
            report.timing[str(region)] = time.perf_counter() - t0
            break
        res.sigma, res.g = out.sigma, out.g
        res.rank, res.condition, res.residual = out.metric.rank, out.metric.condition, out.metric.residual
        if region in truth_for_oracle:
            res.max_rel_error = _relative_error(out.sigma, np.asarray(truth_for_oracle[region]))
        recovered[region] = out.sigma
        report.timing[str(region)] = time.perf_counter() - t0
        log.info("region %d recovered via interface %d", region, link)
    for region in diag.chain:
        if region not in report.regions:
            report.regions[region] = RegionResult(region, diag.links[diag.chain.index(region)],
                                                  error="not reached: an earlier region failed")
    return report


__all__ = [
    "AnalyticKernelSource",
    "ConstraintSystem",
    "FemKernelSource",
    "FemSettings",
    "FitSettings",
    "InterfaceRecovery",
    "KernelSampleSet",
    "MetricRecovery",
    "RecoveryConfig",
    "RecoveryReport",
    "SamplingPlan",
    "TangentialFit",
    "analytic_samples",
    "assemble_metric_constraints",
    "canonical_directions",
    "choose_base_points",
    "extract_tangential_metric",
    "interior_map_oracle",
    "layer_strip",
    "recover_full_metric",
    "recover_interface_conductivity",
]
