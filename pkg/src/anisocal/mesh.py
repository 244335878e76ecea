"""Structured tetrahedral meshes of layered boxes and the ``meshv1`` text format.

The lattice is a tensor product of (optionally graded) x/y axes; each column
is split vertically between the stacked graph surfaces so interface nodes
sit exactly on the graphs.  Every hexahedral cell is cut into six Kuhn
tetrahedra, mirrored by cell parity so neighbouring cells share face
diagonals and the mesh has no preferred diagonal direction.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ResolutionTooCoarse
from .geometry import PartitionedDomain

LABEL_BOTTOM = 100
LABEL_MEASUREMENT = 101
LABEL_LATERAL = 102
LABEL_TOP = 103


@dataclass(frozen=True)
class Mesh:
    nodes: np.ndarray  # (N, 3)
    tets: np.ndarray  # (M, 4)
    tet_region: np.ndarray  # (M,)
    facets: np.ndarray  # (F, 3) boundary and interface triangles
    facet_label: np.ndarray  # (F,)
    h: float

    @property
    def num_nodes(self) -> int:
        return len(self.nodes)

    def tet_volumes(self) -> np.ndarray:
        p = self.nodes[self.tets]
        return np.linalg.det(p[:, 1:] - p[:, :1]) / 6.0

    def facet_areas(self, mask=None) -> np.ndarray:
        f = self.facets if mask is None else self.facets[mask]
        p = self.nodes[f]
        return 0.5 * np.linalg.norm(np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]), axis=1)

    def boundary_mask(self) -> np.ndarray:
        return self.facet_label >= 100

    def patch_mask(self, label: int) -> np.ndarray:
        return self.facet_label == label

    def regions(self) -> list[int]:
        return sorted(int(r) for r in np.unique(self.tet_region))


def graded_axis(a: float, b: float, h: float, focus: float | None = None,
                h_fine: float | None = None, growth: float = 1.3, core: float = 0.0) -> np.ndarray:
    """Nodes on ``[a, b]``: uniform of size <= h, or graded geometrically away from ``focus``."""
    if focus is None or h_fine is None or h_fine >= h:
        m = max(1, int(np.ceil((b - a) / h - 1e-9)))
        return np.linspace(a, b, m + 1)

    def one_side(length: float) -> list[float]:
        steps, pos, step = [], 0.0, h_fine
        while pos < length - 1e-12:
            steps.append(step)
            pos += step
            if pos >= core:
                step = min(step * growth, h)
        if len(steps) > 1 and pos - length > 0.5 * steps[-1]:
            steps.pop()
        if not steps:
            return []
        # stretch or shrink the outermost cell to land on the end point
        steps[-1] += length - sum(steps)
        return list(np.cumsum(steps))

    right = one_side(b - focus)
    left = one_side(focus - a)
    nodes = [focus - d for d in reversed(left)] + [focus] + [focus + d for d in right]
    nodes[0], nodes[-1] = a, b
    return np.array(nodes)


def graded_fractions(thickness: float, h: float, h_fine: float | None = None,
                     growth: float = 1.3) -> np.ndarray:
    """Layer boundaries in [0, 1] for a column of the given thickness."""
    if h_fine is None or h_fine >= h:
        m = max(1, int(np.ceil(thickness / h - 1e-9)))
        return np.linspace(0.0, 1.0, m + 1)
    steps, pos, step = [], 0.0, h_fine
    while pos < thickness - 1e-12:
        steps.append(step)
        pos += step
        step = min(step * growth, h)
    if len(steps) > 1 and pos - thickness > 0.5 * steps[-1]:
        steps.pop()
    t = np.concatenate([[0.0], np.cumsum(steps)])
    return t / t[-1]


def _kuhn_paths() -> list[list[tuple[int, int, int]]]:
    """The six monotone lattice paths from corner 000 to 111 of a unit cell."""
    paths = []
    for perm in itertools.permutations(range(3)):
        corner = [0, 0, 0]
        path = [tuple(corner)]
        for axis in perm:
            corner[axis] = 1
            path.append(tuple(corner))
        paths.append(path)
    return paths


_KUHN = _kuhn_paths()


def build_structured_mesh(
    domain: PartitionedDomain,
    h: float,
    focus=None,
    h_fine: float | None = None,
    growth: float = 1.3,
    core: float = 0.0,
) -> Mesh:
    """Conforming tet mesh of a layered box.

    With ``focus=(x, y)`` and ``h_fine`` the lattice is refined geometrically
    around that lateral position and towards the bottom surface.
    """
    if h <= 0:
        raise ValueError("mesh size must be positive")
    (x0, x1), (y0, y1) = domain.extent
    fx = fy = None
    if focus is not None:
        fx, fy = float(focus[0]), float(focus[1])
    xs = graded_axis(x0, x1, h, fx, h_fine, growth, core)
    ys = graded_axis(y0, y1, h, fy, h_fine, growth, core)
    for patch in domain.surfaces():
        cx, cy = patch.origin[:2]
        near_x = np.diff(xs)[np.abs(0.5 * (xs[1:] + xs[:-1]) - cx) <= patch.r0]
        near_y = np.diff(ys)[np.abs(0.5 * (ys[1:] + ys[:-1]) - cy) <= patch.r0]
        widest = max(near_x.max(initial=0.0), near_y.max(initial=0.0))
        if widest > patch.r0 / 4 * (1 + 1e-9) or widest == 0.0:
            raise ResolutionTooCoarse(
                f"cells of size {widest:g} do not resolve patch '{patch.name}' (r0={patch.r0:g})"
            )
    X, Y = np.meshgrid(xs, ys, indexing="xy")  # (ny+1, nx+1)
    xy = np.stack([X, Y], axis=-1)
    heights = [domain.surface_height(p, xy) for p in domain.surfaces()]
    heights.append(np.full(X.shape, float(domain.top)))
    for lower, upper in zip(heights[:-1], heights[1:]):
        if np.any(upper - lower <= 0):
            raise ValueError("layer surfaces cross or touch inside the box")

    if fx is not None:
        col = (np.argmin(np.abs(ys - fy)), np.argmin(np.abs(xs - fx)))
    else:
        col = None
    levels = [np.zeros_like(X)[None]]
    level_region = []
    layer_counts = []
    for s, region in enumerate(domain.regions):
        lower, upper = heights[s], heights[s + 1]
        thick = float(upper[col] - lower[col]) if col is not None else float((upper - lower).max())
        fine = h_fine if (s == 0 and col is not None) else None
        t = graded_fractions(thick, h, fine, growth)
        z = lower[None] + t[1:, None, None] * (upper - lower)[None]
        levels.append(z)
        level_region += [region] * (len(t) - 1)
        layer_counts.append(len(t) - 1)
    Z = np.concatenate(levels, axis=0)
    Z[0] = heights[0]
    nz, ny, nx = Z.shape[0] - 1, len(ys) - 1, len(xs) - 1
    nodes = np.stack(
        [np.broadcast_to(X, Z.shape), np.broadcast_to(Y, Z.shape), Z], axis=-1
    ).reshape(-1, 3)

    def idx(i, j, k):
        return (k * (ny + 1) + j) * (nx + 1) + i

    I, J, K = np.meshgrid(np.arange(nx), np.arange(ny), np.arange(nz), indexing="ij")
    I, J, K = I.ravel(), J.ravel(), K.ravel()
    tets, region = [], []
    cell_region = np.asarray(level_region)[K]
    # mirror the split in cells of odd index along each axis: shared faces still
    # get the same diagonal, and the lattice has no preferred diagonal direction
    pi, pj, pk = I % 2, J % 2, K % 2
    for path in _KUHN:
        tets.append(np.stack(
            [idx(I + (a ^ pi), J + (b ^ pj), K + (c ^ pk)) for a, b, c in path], axis=1
        ))
        region.append(cell_region)
    tets = np.concatenate(tets)
    region = np.concatenate(region)
    p = nodes[tets]
    vol = np.linalg.det(p[:, 1:] - p[:, :1])
    flip = vol < 0
    tets[flip, 2], tets[flip, 3] = tets[flip, 3], tets[flip, 2].copy()

    # facets: faces owned by one tet are boundary; faces on a surface level are interfaces
    faces = np.concatenate([tets[:, [1, 2, 3]], tets[:, [0, 2, 3]], tets[:, [0, 1, 3]], tets[:, [0, 1, 2]]])
    key = np.sort(faces, axis=1)
    uniq, first, counts = np.unique(key, axis=0, return_index=True, return_counts=True)
    k_of = uniq // ((nx + 1) * (ny + 1))
    boundary = counts == 1
    surface_levels = np.cumsum(layer_counts)[:-1]
    labels = np.zeros(len(uniq), dtype=int)
    bottom = boundary & np.all(k_of == 0, axis=1)
    top = boundary & np.all(k_of == nz, axis=1)
    lateral = boundary & ~bottom & ~top
    labels[bottom] = LABEL_BOTTOM
    labels[top] = LABEL_TOP
    labels[lateral] = LABEL_LATERAL
    cent = nodes[uniq].mean(axis=1)
    bp = domain.boundary_patch
    inside = np.linalg.norm(cent[:, :2] - bp.origin[:2], axis=1) <= bp.r0
    labels[bottom & inside] = LABEL_MEASUREMENT
    for iface, lev in zip(domain.interfaces, surface_levels):
        on = ~boundary & np.all(k_of == lev, axis=1)
        labels[on] = iface.index
    keep = labels > 0
    # report facets with their original vertex order
    facets = faces[first[keep]]
    return Mesh(
        nodes=nodes,
        tets=tets,
        tet_region=region,
        facets=facets,
        facet_label=labels[keep],
        h=float(h if h_fine is None else h_fine),
    )


def write_mesh(mesh: Mesh, path) -> None:
    lines = ["meshv1", f"nodes {len(mesh.nodes)}"]
    lines += [" ".join(f"{c:.17g}" for c in p) for p in mesh.nodes]
    lines.append(f"tets {len(mesh.tets)}")
    lines += [f"{a} {b} {c} {d} {r}" for (a, b, c, d), r in zip(mesh.tets.tolist(), mesh.tet_region.tolist())]
    lines.append(f"facets {len(mesh.facets)}")
    lines += [f"{a} {b} {c} {lab}" for (a, b, c), lab in zip(mesh.facets.tolist(), mesh.facet_label.tolist())]
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")


def read_mesh(path, h: float | None = None) -> Mesh:
    """Parse a ``meshv1`` file; ``h`` defaults to the largest cell edge implied by tet volumes."""
    it = iter(Path(path).read_text(encoding="ascii").splitlines())

    def section(name: str) -> int:
        head = next(it).split()
        if head[0] != name:
            raise ValueError(f"expected '{name}' section, found '{head[0]}'")
        return int(head[1])

    if next(it).strip() != "meshv1":
        raise ValueError("not a meshv1 file")
    nn = section("nodes")
    nodes = np.array([[float(v) for v in next(it).split()] for _ in range(nn)]).reshape(nn, 3)
    nt = section("tets")
    t = np.array([[int(v) for v in next(it).split()] for _ in range(nt)], dtype=int).reshape(nt, 5)
    nf = section("facets")
    f = np.array([[int(v) for v in next(it).split()] for _ in range(nf)], dtype=int).reshape(nf, 4)
    mesh = Mesh(nodes, t[:, :4].copy(), t[:, 4].copy(), f[:, :3].copy(), f[:, 3].copy(), 0.0)
    if h is None:
        h = float(np.max(np.abs(6.0 * mesh.tet_volumes())) ** (1.0 / 3.0))
    return Mesh(mesh.nodes, mesh.tets, mesh.tet_region, mesh.facets, mesh.facet_label, h)


def euler_characteristic(mesh: Mesh) -> int:
    t = mesh.tets
    edges = np.unique(np.sort(np.concatenate([t[:, [a, b]] for a, b in itertools.combinations(range(4), 2)]), axis=1), axis=0)
    faces = np.unique(np.sort(np.concatenate([t[:, list(c)] for c in itertools.combinations(range(4), 3)]), axis=1), axis=0)
    return len(mesh.nodes) - len(edges) + len(faces) - len(t)
