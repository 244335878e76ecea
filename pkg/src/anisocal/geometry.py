"""Graph patches, tangent frames, non-flatness witnesses and layered partitions.

A :class:`SurfacePatch` is the graph ``x_n = phi(x')`` in local coordinates,
placed in space by a rigid motion ``X = origin + rotation @ (x', phi(x'))``.
The outer normal at the local origin is ``-e_n`` (the region of interest lies
on the ``x_n > phi`` side).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import BrokenChain, FlatInterface, OutsidePatch

GraphFn = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class SurfacePatch:
    phi: GraphFn
    grad: GraphFn
    r0: float
    alpha: float = 0.5
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    origin: np.ndarray = field(default_factory=lambda: np.zeros(3))
    name: str = "patch"

    def __post_init__(self):
        rot = np.asarray(self.rotation, dtype=float)
        if not np.allclose(rot.T @ rot, np.eye(rot.shape[0]), atol=1e-12):
            raise ValueError("patch rotation must be orthogonal")
        if not 0 < self.alpha < 1:
            raise ValueError("Hoelder exponent must lie in (0, 1)")
        zero = np.zeros(self.n - 1)
        if abs(float(self.phi(zero))) > 1e-14 or np.linalg.norm(self.grad(zero)) > 1e-14:
            raise ValueError("patch must satisfy phi(0) = 0 and grad phi(0) = 0")

    @property
    def n(self) -> int:
        return np.asarray(self.rotation).shape[0]

    def local_point(self, p) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        return np.concatenate([p, np.asarray(self.phi(p))[..., None]], axis=-1)

    def point(self, p) -> np.ndarray:
        """Ambient coordinates of the graph point above local ``p``."""
        return self.origin + self.local_point(p) @ np.asarray(self.rotation).T

    def moved(self, rotation, translation) -> "SurfacePatch":
        """The same patch after the rigid motion ``X -> rotation @ X + translation``."""
        rotation = np.asarray(rotation, dtype=float)
        return SurfacePatch(
            phi=self.phi,
            grad=self.grad,
            r0=self.r0,
            alpha=self.alpha,
            rotation=rotation @ self.rotation,
            origin=rotation @ self.origin + np.asarray(translation, dtype=float),
            name=self.name,
        )


def flat_patch(r0: float = 1.0, n: int = 3, **kw) -> SurfacePatch:
    return SurfacePatch(
        phi=lambda p: np.zeros(np.shape(p)[:-1]),
        grad=lambda p: np.zeros(np.shape(p)),
        r0=r0,
        rotation=np.eye(n),
        origin=np.zeros(n),
        name="flat",
        **kw,
    )


def paraboloid_patch(curvature: float = 1.0, r0: float = 1.0, n: int = 3, **kw) -> SurfacePatch:
    """``phi(x') = curvature |x'|^2 / 2``."""
    k = float(curvature)
    return SurfacePatch(
        phi=lambda p: 0.5 * k * np.sum(np.asarray(p) ** 2, axis=-1),
        grad=lambda p: k * np.asarray(p, dtype=float),
        r0=r0,
        rotation=np.eye(n),
        origin=np.zeros(n),
        name=f"paraboloid(k={k:g})",
        **kw,
    )


def cylinder_patch(curvature: float = 1.0, r0: float = 1.0, n: int = 3, **kw) -> SurfacePatch:
    """``phi(x') = curvature x_{n-1}^2 / 2``: bends only along the last tangent axis."""
    k = float(curvature)

    def grad(p):
        g = np.zeros(np.shape(p))
        g[..., -1] = k * np.asarray(p)[..., -1]
        return g

    return SurfacePatch(
        phi=lambda p: 0.5 * k * np.asarray(p)[..., -1] ** 2,
        grad=grad,
        r0=r0,
        rotation=np.eye(n),
        origin=np.zeros(n),
        name=f"cylinder(k={k:g})",
        **kw,
    )


@dataclass(frozen=True)
class TangentFrame:
    base_point: np.ndarray
    tangents: np.ndarray  # (n-1, n), orthonormal rows
    normal: np.ndarray

    @property
    def n(self) -> int:
        return self.normal.size

    def rotated(self, u: np.ndarray) -> "TangentFrame":
        return TangentFrame(self.base_point @ u.T, self.tangents @ u.T, u @ self.normal)


def tangent_frame_at(patch: SurfacePatch, p) -> TangentFrame:
    """Orthonormal tangent basis (Gram-Schmidt on the coordinate tangents) and outer normal."""
    p = np.asarray(p, dtype=float)
    if np.linalg.norm(p) > patch.r0 * (1 + 1e-12):
        raise OutsidePatch(f"point {p} lies outside the patch radius {patch.r0}")
    n = patch.n
    dphi = np.asarray(patch.grad(p), dtype=float)
    basis = np.zeros((n - 1, n))
    for i in range(n - 1):
        t = np.zeros(n)
        t[i] = 1.0
        t[-1] = dphi[i]
        for prev in basis[:i]:
            t -= (t @ prev) * prev
        basis[i] = t / np.linalg.norm(t)
    normal = np.append(dphi, -1.0) / np.sqrt(1.0 + dphi @ dphi)
    rot = np.asarray(patch.rotation)
    return TangentFrame(
        base_point=patch.point(p), tangents=basis @ rot.T, normal=rot @ normal
    )


@dataclass(frozen=True)
class NonflatnessWitness:
    nonflat: bool
    case: str | None  # "a" (single deflection direction) or "b"
    points: np.ndarray  # local coordinates of deflected sample points
    angles: np.ndarray
    directions: np.ndarray  # unit deflection directions in the base tangent basis
    spread: float  # second singular value of the direction cloud


def sample_points(patch: SurfacePatch, count: int, fraction: float = 0.9) -> np.ndarray:
    """Deterministic points in the patch disc (sunflower spiral for n = 3)."""
    m = patch.n - 1
    radius = fraction * patch.r0
    if m == 2:
        k = np.arange(1, count + 1)
        rho = radius * np.sqrt(k / count)
        theta = k * np.pi * (3.0 - np.sqrt(5.0))
        return np.stack([rho * np.cos(theta), rho * np.sin(theta)], axis=-1)
    rng = np.random.default_rng(20240917)
    pts = rng.standard_normal((count, m))
    pts /= np.linalg.norm(pts, axis=1)[:, None]
    return pts * radius * rng.uniform(0.2, 1.0, count)[:, None] ** (1.0 / m)


def is_nonflat(patch: SurfacePatch, sample_count: int = 64, tol: float = 1e-3) -> NonflatnessWitness:
    """Sample normals and report where they deflect from the normal at the patch centre."""
    if sample_count < 10:
        raise ValueError("sample_count must be at least 10")
    threshold = max(tol, 1e-6)
    base = tangent_frame_at(patch, np.zeros(patch.n - 1))
    pts = sample_points(patch, sample_count)
    keep, angles, dirs = [], [], []
    for p in pts:
        nu = tangent_frame_at(patch, p).normal
        angle = float(np.arccos(np.clip(nu @ base.normal, -1.0, 1.0)))
        if angle > threshold:
            d = base.tangents @ nu
            keep.append(p)
            angles.append(angle)
            dirs.append(d / np.linalg.norm(d))
    m = patch.n - 1
    if len(keep) < 3:
        return NonflatnessWitness(False, None, np.zeros((0, m)), np.zeros(0), np.zeros((0, m)), 0.0)
    dirs = np.array(dirs)
    sv = np.linalg.svd(dirs / np.sqrt(len(dirs)), compute_uv=False)
    spread = float(sv[1]) if sv.size > 1 else 0.0
    case = "b" if spread > threshold else "a"
    return NonflatnessWitness(True, case, np.array(keep), np.array(angles), dirs, spread)


@dataclass(frozen=True)
class Interface:
    """Graph interface ``z = origin_z + phi(x' - origin')`` between two stacked regions."""

    patch: SurfacePatch
    below: int
    above: int
    index: int  # chain index k >= 2; also its facet label


@dataclass(frozen=True)
class PartitionedDomain:
    """Layered box: measurement surface at the bottom, flat top, graph interfaces between.

    ``regions`` are listed bottom to top; the bottom surface is the graph of
    ``boundary_patch.phi`` over the whole lateral extent and the measurement
    patch is the part of it within ``boundary_patch.r0`` of the patch origin.
    """

    extent: tuple[tuple[float, float], tuple[float, float]]
    top: float
    boundary_patch: SurfacePatch
    regions: tuple[int, ...]
    interfaces: tuple[Interface, ...] = ()

    @property
    def n(self) -> int:
        return 3

    def surfaces(self) -> list[SurfacePatch]:
        return [self.boundary_patch] + [i.patch for i in self.interfaces]

    def surface_height(self, patch: SurfacePatch, xy) -> np.ndarray:
        xy = np.asarray(xy, dtype=float)
        return patch.origin[2] + patch.phi(xy - patch.origin[:2])

    def above(self, k: int) -> "PartitionedDomain":
        """The residual domain above interface ``k`` (regions ``k..N`` of the stack)."""
        iface = self.interface(k)
        start = self.regions.index(iface.above)
        return PartitionedDomain(
            extent=self.extent,
            top=self.top,
            boundary_patch=iface.patch,
            regions=self.regions[start:],
            interfaces=tuple(i for i in self.interfaces if self.regions.index(i.above) > start),
        )

    def interface(self, k: int) -> Interface:
        for iface in self.interfaces:
            if iface.index == k:
                return iface
        raise KeyError(f"no interface with index {k}")


@dataclass(frozen=True)
class ChainDiagnostics:
    chain: list[int]  # region labels in stripping order
    links: list[int]  # surface entering each region: 1 = measurement patch, k = interface k
    witnesses: dict[int, NonflatnessWitness]


def validate_partition_chain(
    domain: PartitionedDomain, sample_count: int = 64, tol: float = 1e-3
) -> ChainDiagnostics:
    """Order regions along non-flat interfaces starting from the region under the measurement patch."""
    if not domain.regions:
        raise BrokenChain("domain has no regions")
    witnesses = {1: is_nonflat(domain.boundary_patch, sample_count, tol)}
    if not witnesses[1].nonflat:
        raise FlatInterface("measurement patch is flat", interface=1)
    chain = [domain.regions[0]]
    links = [1]
    remaining = list(domain.interfaces)
    while remaining:
        step = [i for i in remaining if i.below in chain and i.above not in chain]
        if not step:
            break
        iface = min(step, key=lambda i: i.index)
        w = is_nonflat(iface.patch, sample_count, tol)
        if not w.nonflat:
            raise FlatInterface(f"interface {iface.index} is flat", interface=iface.index)
        witnesses[iface.index] = w
        chain.append(iface.above)
        links.append(iface.index)
        remaining.remove(iface)
    missing = [r for r in domain.regions if r not in chain]
    if missing:
        raise BrokenChain(f"regions {missing} are not reachable from region {chain[0]}")
    return ChainDiagnostics(chain=chain, links=links, witnesses=witnesses)


def stacked_paraboloid_domain(
    half_width: float = 1.0,
    bottom_curvature: float = 2.0,
    interface_curvature: float = 2.0,
    interface_height: float = 0.5,
    top_margin: float = 0.6,
    patch_fraction: float = 0.95,
) -> PartitionedDomain:
    """Two stacked regions in a square box: paraboloid bottom, paraboloid interface, flat top."""
    L = float(half_width)
    r0 = patch_fraction * L
    bottom = paraboloid_patch(bottom_curvature, r0=r0)
    iface = paraboloid_patch(interface_curvature, r0=r0).moved(np.eye(3), [0.0, 0.0, interface_height])
    # both graphs peak at the box corners, where |x'|^2 = 2 L^2
    top = max(bottom_curvature * L**2, interface_height + interface_curvature * L**2) + top_margin
    return PartitionedDomain(
        extent=((-L, L), (-L, L)),
        top=top,
        boundary_patch=bottom,
        regions=(1, 2),
        interfaces=(Interface(iface, below=1, above=2, index=2),),
    )
