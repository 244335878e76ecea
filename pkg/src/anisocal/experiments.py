"""Batch experiments: TOML configs in, JSON reports and CSV data series out.

Every experiment kind is a list of independent tasks, each seeded from its
own child of the configured seed, so reports are byte-identical across runs
(apart from the ``timing`` block) whether tasks run sequentially or in a
thread pool.
"""
from __future__ import annotations

import csv
import json
import shutil
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import tomli

from .errors import CheckFailed, ConfigInvalid, NonUniqueConstraints, NotSPD, SeriesNotFound
from .fem import (
    NeumannSolver,
    alessandrini_residual,
    approx_delta_current,
    assemble_local_nd_map,
    facet_load,
    four_point_quadrature,
    kernel_from_nd_map,
    resolved_eps,
    s_function_residual,
)
from .geometry import (
    PartitionedDomain,
    flat_patch,
    paraboloid_patch,
    stacked_paraboloid_domain,
    tangent_frame_at,
)
from .halfspace import (
    boundary_kernel,
    build_pushforward_frame,
    four_point_kernel,
    fundamental_solution,
    halfspace_neumann_kernel,
    reflection,
)
from .mesh import LABEL_MEASUREMENT, build_structured_mesh
from .metric import as_spd, metric_from_conductivity, random_orthogonal, random_spd
from .recovery import (
    AnalyticKernelSource,
    FemSettings,
    FitSettings,
    RecoveryConfig,
    assemble_metric_constraints,
    extract_tangential_metric,
    analytic_samples,
    layer_strip,
    recover_full_metric,
    recover_interface_conductivity,
)
from .tartar import family_consistency, flat_boundary_indistinguishability, tartar_conductivity, tartar_metric

# default tolerances; a config may override any of them but not add new names
TOLERANCES = {
    "kernel-validation": {
        "identity_reduction": 1e-12,
        "frame_conductivity": 1e-10,
        "frame_metric": 1e-10,
        "kernel_symmetry": 1e-12,
        "zero_flux": 1e-8,
        "pushforward_consistency": 1e-12,
        "decay_slope": 1e-6,
    },
    "halfspace-recovery": {
        "tangential_metric": 1e-6,
        "full_metric": 1e-8,
        "rank_deficit": 0.5,
        "flat_nullspace_dim": 0.5,
    },
    "forward-convergence": {
        "pairing_identity": 1e-10,
        "nd_symmetry": 1e-10,
        "nd_psd": 1e-10,
        "energy_identity": 1e-10,
        "kernel_error": 0.1,
        "kernel_refinement": 1.0,
    },
    "layer-strip": {
        "sigma_error": 0.1,
        "s_function": 1e-8,
    },
    "tartar-demo": {
        "flat_deviation": 1e-12,
        "family_consistency": 1e-12,
        "curved_recovery": 1e-6,
        "curved_separation": 0.5,
        "flat_nonunique": 0.5,
    },
    "identity-checks": {
        "alessandrini_equal": 1e-10,
        "alessandrini_exact": 1e-10,
        "alessandrini_decrease": 1.0,
        "nd_symmetry": 1e-10,
        "nd_psd": 1e-10,
    },
}
KINDS = tuple(TOLERANCES)
# checks whose measured value must reach the tolerance from above
AT_LEAST = {"curved_separation"}


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    seed: int
    h: float | None = None
    eps_schedule: tuple[float, ...] | None = None
    out: str | None = None
    tolerances: dict = field(default_factory=dict)
    truth: dict = field(default_factory=dict)  # region -> 3x3 conductivity
    params: dict = field(default_factory=dict)
    source: str | None = None  # path of the TOML file, if any

    def __post_init__(self):
        if self.kind not in TOLERANCES:
            raise ConfigInvalid(f"unknown experiment kind {self.kind!r}; expected one of {', '.join(KINDS)}")
        if not isinstance(self.seed, int) or isinstance(self.seed, bool) or self.seed < 0:
            raise ConfigInvalid("seed must be a non-negative integer")
        if self.h is not None and not self.h > 0:
            raise ConfigInvalid("mesh size h must be positive")
        if self.eps_schedule is not None and not all(e > 0 for e in self.eps_schedule):
            raise ConfigInvalid("eps schedule entries must be positive")
        unknown = set(self.tolerances) - set(TOLERANCES[self.kind])
        if unknown:
            raise ConfigInvalid(f"unknown tolerance names for {self.kind}: {sorted(unknown)}")
        for name, tol in self.tolerances.items():
            if not (isinstance(tol, (int, float)) and tol > 0):
                raise ConfigInvalid(f"tolerance {name} must be positive")
        truth = {}
        for region, mat in self.truth.items():
            try:
                truth[int(region)] = as_spd(np.asarray(mat, dtype=float))
            except (NotSPD, ValueError) as exc:
                raise ConfigInvalid(f"truth for region {region}: {exc}") from None
        object.__setattr__(self, "truth", truth)

    def tolerance(self, name: str) -> float:
        return float(self.tolerances.get(name, TOLERANCES[self.kind][name]))

    def param(self, name: str, default):
        return self.params.get(name, default)

    def echo(self) -> dict:
        return {
            "kind": self.kind,
            "seed": self.seed,
            "h": self.h,
            "eps_schedule": None if self.eps_schedule is None else list(self.eps_schedule),
            "tolerances": {k: self.tolerance(k) for k in sorted(TOLERANCES[self.kind])},
            "truth": {str(k): np.asarray(v).tolist() for k, v in sorted(self.truth.items())},
            "params": self.params,
        }

    @classmethod
    def from_dict(cls, data: dict, source: str | None = None) -> "ExperimentConfig":
        data = dict(data)
        for key in ("kind", "seed"):
            if key not in data:
                raise ConfigInvalid(f"config is missing required key {key!r}")
        allowed = {"kind", "seed", "h", "eps_schedule", "out", "tolerances", "truth", "params"}
        extra = set(data) - allowed
        if extra:
            raise ConfigInvalid(f"unknown config keys: {sorted(extra)}")
        eps = data.get("eps_schedule")
        return cls(
            kind=data["kind"],
            seed=data["seed"],
            h=data.get("h"),
            eps_schedule=None if eps is None else tuple(float(e) for e in eps),
            out=data.get("out"),
            tolerances=dict(data.get("tolerances", {})),
            truth=dict(data.get("truth", {})),
            params=dict(data.get("params", {})),
            source=source,
        )

    @classmethod
    def from_toml(cls, path) -> "ExperimentConfig":
        path = Path(path)
        try:
            data = tomli.loads(path.read_text(encoding="utf-8"))
        except tomli.TOMLDecodeError as exc:
            raise ConfigInvalid(f"{path}: {exc}") from None
        return cls.from_dict(data, source=str(path))

    def replace(self, **changes) -> "ExperimentConfig":
        fields = {k: getattr(self, k) for k in
                  ("kind", "seed", "h", "eps_schedule", "out", "tolerances", "truth", "params", "source")}
        fields["truth"] = {str(k): np.asarray(v).tolist() for k, v in self.truth.items()}
        fields.update(changes)
        return ExperimentConfig(**fields)


@dataclass(frozen=True)
class Check:
    name: str
    value: float
    tolerance: float
    passed: bool
    relation: str = "<="
    detail: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        extra = f"  ({self.detail})" if self.detail else ""
        return f"{status} {self.name}: {self.value:.3e} {self.relation} {self.tolerance:.3e}{extra}"


@dataclass(frozen=True)
class Series:
    columns: tuple[str, ...]
    rows: list
    description: str = ""


@dataclass
class Report:
    config: dict
    checks: list[Check]
    series: dict[str, Series] = field(default_factory=dict)
    artifacts: list[str] = field(default_factory=list)
    timing: dict = field(default_factory=dict)
    results: dict = field(default_factory=dict)  # kind-specific deterministic outputs

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def check(self, name: str) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_json(self, timing: bool = True) -> dict:
        out = {
            "config": self.config,
            "passed": self.passed,
            "checks": [
                {"name": c.name, "value": c.value, "tolerance": c.tolerance, "relation": c.relation,
                 "passed": c.passed, "detail": c.detail}
                for c in self.checks
            ],
            "series": sorted(self.series),
            "artifacts": list(self.artifacts),
            "results": self.results,
        }
        if timing:
            out["timing"] = self.timing
        return out

    def dumps(self, timing: bool = True) -> str:
        return json.dumps(self.to_json(timing), indent=2, sort_keys=True)


def make_check(config: ExperimentConfig, name: str, value: float, detail: str = "") -> Check:
    tol = config.tolerance(name)
    value = float(value)
    if name in AT_LEAST:
        return Check(name, value, tol, bool(value >= tol), ">=", detail)
    return Check(name, value, tol, bool(value <= tol), "<=", detail)


def emit_series(report: Report, series_name: str, directory) -> Path:
    """Write one series as CSV: a ``#`` comment line documenting the columns, then a header row."""
    if not series_name or series_name not in report.series:
        raise SeriesNotFound(f"report has no series {series_name!r}")
    s = report.series[series_name]
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / f"{series_name}.csv"
    with path.open("w", newline="", encoding="utf-8") as fh:
        fh.write(f"# {series_name}: {s.description} | columns: {', '.join(s.columns)}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(s.columns)
        for row in s.rows:
            writer.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return path


def read_series(path) -> tuple[list[str], np.ndarray]:
    lines = [ln for ln in Path(path).read_text(encoding="utf-8").splitlines() if not ln.startswith("#")]
    rows = list(csv.reader(lines))
    return rows[0], np.array(rows[1:], dtype=float)


# --------------------------------------------------------------------------- tasks
#
# A task takes (config, rng) and returns (checks, series, results); the checks
# of a kind are merged by name, keeping the worst value.


def _rel(a, b) -> float:
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return float(np.abs(a - b).max() / max(np.abs(b).max(), 1e-300))


def _sigma(config: ExperimentConfig, region: int, default) -> np.ndarray:
    return config.truth.get(region, np.asarray(default, dtype=float))


def _kernel_validation(config: ExperimentConfig, rng: np.random.Generator):
    n = int(config.param("n", 3))
    pairs = int(config.param("pairs", 100))
    count = int(config.param("random_sigmas", 100))
    t = reflection(n)
    ident = build_pushforward_frame(np.eye(n))

    def interior(k):
        p = rng.standard_normal((k, n))
        p[:, -1] = np.abs(p[:, -1]) + 0.1
        return p

    x, y = interior(pairs), interior(pairs)
    got = halfspace_neumann_kernel(ident, x, y).value
    want = fundamental_solution(x - y) + fundamental_solution(x - y @ t.T)
    worst = {"identity_reduction": _rel(got, want)}
    for name in ("frame_conductivity", "frame_metric", "kernel_symmetry", "zero_flux", "pushforward_consistency"):
        worst[name] = 0.0
    for _ in range(count):
        sigma = random_spd(rng, n)
        fr = build_pushforward_frame(sigma)
        worst["frame_conductivity"] = max(worst["frame_conductivity"],
                                          _rel(fr.Q @ fr.Q.T / np.linalg.det(fr.Q), sigma))
        worst["frame_metric"] = max(worst["frame_metric"], _rel(fr.M.T @ fr.M, fr.g))
        a, b = interior(4), interior(4)
        nab = halfspace_neumann_kernel(fr, a, b).value
        worst["kernel_symmetry"] = max(worst["kernel_symmetry"], _rel(halfspace_neumann_kernel(fr, b, a).value, nab))
        worst["pushforward_consistency"] = max(
            worst["pushforward_consistency"],
            _rel(halfspace_neumann_kernel(ident, a @ fr.M.T, b @ fr.M.T).value, nab))
        xb = a.copy()
        xb[:, -1] = 0.0
        grad = halfspace_neumann_kernel(fr, xb, b, gradient=True).gradient
        flux = np.abs(grad @ fr.sigma[:, -1]) / np.linalg.norm(grad, axis=1).max()
        worst["zero_flux"] = max(worst["zero_flux"], float(flux.max()))
    # decay of the boundary kernel along a fixed tangential direction
    sigma = _sigma(config, 1, np.eye(n))
    g = metric_from_conductivity(sigma)
    d = np.zeros(n)
    d[0] = 1.0
    r = np.logspace(-3, 1, 41)
    vals = np.array([boundary_kernel(g, ri * d, np.zeros(n)) for ri in r])
    slope = float(np.polyfit(np.log(r), np.log(vals), 1)[0])
    worst["decay_slope"] = abs(slope - (2 - n))
    checks = [make_check(config, k, v) for k, v in worst.items()]
    series = {"kernel-decay": Series(("r", "kernel"), [[float(a), float(b)] for a, b in zip(r, vals)],
                                     f"boundary kernel of region-1 sigma vs distance; log-log slope {2 - n}")}
    return checks, series, {"decay_slope": slope}


def _halfspace_recovery(config: ExperimentConfig, rng: np.random.Generator):
    count = int(config.param("count", 100))
    curvature = float(config.param("curvature", 1.0))
    patch = paraboloid_patch(curvature, r0=1.0)
    cfg = RecoveryConfig(base_points=int(config.param("base_points", 3)))
    worst_t = worst_g = 0.0
    rank_deficit = 0
    for _ in range(count):
        g = metric_from_conductivity(random_spd(rng, 3))
        rec = recover_interface_conductivity(patch, AnalyticKernelSource(g), cfg)
        for fit, p in zip(rec.fits, rec.base_points):
            fr = tangent_frame_at(patch, p)
            worst_t = max(worst_t, _rel(fit.gram, fr.tangents @ g @ fr.tangents.T))
        worst_g = max(worst_g, _rel(rec.g, g))
        rank_deficit = max(rank_deficit, 6 - rec.metric.rank)
    g = metric_from_conductivity(random_spd(rng, 3))
    fr = tangent_frame_at(flat_patch(), np.zeros(2))
    try:
        recover_full_metric(assemble_metric_constraints([(fr, fr.tangents @ g @ fr.tangents.T)]))
        null_dim = 0
    except NonUniqueConstraints as exc:
        null_dim = len(exc.nullspace)
    checks = [
        make_check(config, "tangential_metric", worst_t),
        make_check(config, "full_metric", worst_g),
        make_check(config, "rank_deficit", rank_deficit),
        make_check(config, "flat_nullspace_dim", abs(null_dim - 3), f"null space dimension {null_dim}"),
    ]
    return checks, {}, {"flat_nullspace_dim": null_dim}


def _forward_convergence(config: ExperimentConfig, rng: np.random.Generator):
    L = float(config.param("half_width", 4.0))
    h = config.h or L / 8
    levels = [float(v) for v in config.param("h_fine", [0.08, 0.04, 0.02])]
    factors = config.eps_schedule or (2.0,)
    growth = float(config.param("growth", 1.3))
    pts = {k: np.asarray(config.param(k, d), dtype=float) for k, d in
           (("x", [-0.4, 0.0, 0.0]), ("y", [0.4, 0.0, 0.0]), ("w", [1.0, 0.8, 0.0]), ("z", [-1.0, 0.8, 0.0]))}
    sigma = _sigma(config, 1, np.diag([1.0, 1.0, 4.0]))
    dom = PartitionedDomain(((-L, L), (-L, L)), L, flat_patch(r0=0.95 * L), (1,))
    fr = build_pushforward_frame(sigma)
    exact = four_point_kernel(lambda a, b: halfspace_neumann_kernel(fr, a, b).value,
                              pts["x"], pts["y"], pts["w"], pts["z"])
    rows, worst = [], {"pairing_identity": 0.0, "nd_symmetry": 0.0, "nd_psd": 0.0, "energy_identity": 0.0}
    focus = 0.5 * (pts["x"][:2] + pts["y"][:2])
    solvers = []
    for hf in levels:
        mesh = build_structured_mesh(dom, h, focus=focus, h_fine=hf, growth=growth)
        solver = NeumannSolver(mesh, {1: sigma})
        solvers.append(solver)
        eps = [f * hf for f in factors]
        est = kernel_from_nd_map(solver, pts["x"], pts["y"], pts["w"], pts["z"], eps,
                                 order=float(config.param("eps_order", 1.0)))
        rows.append([hf, len(mesh.tets), est.value, exact, abs(est.value / exact - 1.0)])
    # discrete identities on the level closest to the requested size
    target = int(config.param("identity_tets", 50_000))
    solver = min(solvers, key=lambda s: abs(len(s.mesh.tets) - target))
    mesh = solver.mesh
    nd = assemble_local_nd_map(mesh, {1: sigma}, basis_size=int(config.param("basis_size", 6)), solver=solver)
    worst["nd_symmetry"] = nd.symmetry_defect()
    lam = np.linalg.eigvalsh(0.5 * (nd.matrix + nd.matrix.T))
    worst["nd_psd"] = max(0.0, -lam[0] / max(lam[-1], 1e-300))
    anchors = [int(np.argmin(np.linalg.norm(mesh.nodes - p, axis=1))) for p in (pts["w"], pts["z"])]
    for i, j in ((0, 1), (1, 2), (0, 0)):
        quad = four_point_quadrature(solver, nd.basis[i], nd.basis[j], anchors[0], anchors[1])
        worst["pairing_identity"] = max(worst["pairing_identity"],
                                        abs(quad - nd.matrix[i, j]) / np.abs(nd.matrix).max())
    u = nd.potentials
    energy = u.T @ (solver.A @ u)
    work = nd.loads.T @ u
    worst["energy_identity"] = _rel(energy, work)
    checks = [make_check(config, k, v) for k, v in worst.items()]
    checks.append(make_check(config, "kernel_error", rows[-1][-1], f"K estimate {rows[-1][2]:.6g} vs {exact:.6g}"))
    checks.append(make_check(config, "kernel_refinement", rows[-1][-1] / max(rows[0][-1], 1e-300),
                             "finest-level error over coarsest-level error"))
    series = {"convergence": Series(("h_fine", "tets", "estimate", "exact", "rel_error"), rows,
                                    "four-point kernel estimate vs half-space value under refinement")}
    return checks, series, {"exact": exact, "estimates": [r[2] for r in rows], "tets": [r[1] for r in rows],
                            "identity_tets": len(mesh.tets)}


def strip_fixture(config: ExperimentConfig) -> tuple[PartitionedDomain, dict]:
    p = config.params
    dom = stacked_paraboloid_domain(
        half_width=float(p.get("half_width", 1.0)),
        bottom_curvature=float(p.get("bottom_curvature", 2.0)),
        interface_curvature=float(p.get("interface_curvature", 2.0)),
        interface_height=float(p.get("interface_height", 0.5)),
        top_margin=float(p.get("top_margin", 0.6)),
    )
    truth = {1: _sigma(config, 1, np.diag([1.0, 1.0, 4.0])), 2: _sigma(config, 2, tartar_conductivity([1.0, 0.0, 1.0]))}
    return dom, truth


def fem_settings(config: ExperimentConfig) -> FemSettings:
    kw = {k: config.params[k] for k in ("h_fine", "growth", "core", "r_min", "ray_nodes", "anchor_distance")
          if k in config.params}
    if config.eps_schedule is not None:
        kw["eps_factors"] = tuple(config.eps_schedule)
    return FemSettings(h=config.h or float(config.param("half_width", 1.0)) / 8, **kw)


def recovery_settings(config: ExperimentConfig) -> RecoveryConfig:
    """Recovery settings for finite-element kernels; the defaults are tuned on the strip fixture."""
    kw = dict(base_points=6, base_radius=0.5)
    kw.update({k: config.params[k] for k in kw if k in config.params})
    fit = dict(correction=False, offset_degree=2, residual_cap=0.05)
    fit.update({k: config.params[k] for k in fit if k in config.params})
    return RecoveryConfig(**kw, fit=FitSettings(**fit))


def _layer_strip(config: ExperimentConfig, rng: np.random.Generator):
    dom, truth = strip_fixture(config)
    report = layer_strip(dom, None, truth, recovery_settings(config), fem_settings(config))
    checks = []
    for region in sorted(truth):
        res = report.regions.get(region)
        err = np.inf if res is None or res.max_rel_error is None else res.max_rel_error
        detail = "" if res is None or res.error is None else res.error
        checks.append(make_check(config, "sigma_error", err, f"region {region} {detail}".strip()))
    # S-function with identical conductivities on a modest mesh
    mesh = build_structured_mesh(dom, config.h or float(config.param("half_width", 1.0)) / 8)
    y = np.array([0.1, 0.05, dom.boundary_patch.phi(np.array([0.1, 0.05])) + 0.15])
    z = np.array([-0.1, 0.1, dom.boundary_patch.phi(np.array([-0.1, 0.1])) + 0.2])
    s = s_function_residual(mesh, truth, truth, [1], y, z)
    checks.append(make_check(config, "s_function", s.magnitude))
    rows = []
    for region, res in sorted(report.regions.items()):
        if res.sigma is not None:
            rows.append([region] + np.asarray(res.sigma).ravel().tolist() + [res.max_rel_error])
    cols = ("region",) + tuple(f"s{i}{j}" for i in range(1, 4) for j in range(1, 4)) + ("rel_error",)
    results = report.to_json()
    return checks, {"recovered": Series(cols, rows, "recovered conductivity entries per region")}, results


def _tartar_demo(config: ExperimentConfig, rng: np.random.Generator):
    count = int(config.param("count", 10))
    pairs = int(config.param("pairs", 100))
    given = config.param("v", None)
    vs = [np.asarray(v, dtype=float) for v in given] if given else [
        np.append(rng.standard_normal(2), rng.uniform(0.2, 3.0)) for _ in range(count)]
    patch = paraboloid_patch(float(config.param("curvature", 1.0)), r0=1.0)
    worst = {"flat_deviation": 0.0, "family_consistency": 0.0, "curved_recovery": 0.0}
    separation = np.inf
    unique_flat = 0
    recovered = []
    for v in vs:
        sample_pairs = [(rng.uniform(-1, 1, 2), rng.uniform(-1, 1, 2)) for _ in range(pairs)]
        worst["flat_deviation"] = max(worst["flat_deviation"], flat_boundary_indistinguishability(v, sample_pairs))
        worst["family_consistency"] = max(worst["family_consistency"], family_consistency(v))
        sigma = tartar_conductivity(v)
        rec = recover_interface_conductivity(patch, AnalyticKernelSource(tartar_metric(v)))
        worst["curved_recovery"] = max(worst["curved_recovery"], _rel(rec.sigma, sigma))
        gap = np.abs(sigma - np.eye(3)).max()
        if gap > 0:
            separation = min(separation, np.abs(rec.sigma - np.eye(3)).max() / gap)
        recovered.append(np.asarray(rec.sigma).tolist())
        if np.linalg.norm(v[:-1]) > 0:
            fr = tangent_frame_at(flat_patch(), np.zeros(2))
            samples = analytic_samples(tartar_metric(v), fr)
            fit = extract_tangential_metric(samples, fr)
            try:
                recover_full_metric(assemble_metric_constraints([(fr, fit.gram)]))
                unique_flat += 1
            except NonUniqueConstraints:
                pass
    checks = [make_check(config, k, v) for k, v in worst.items()]
    checks.append(make_check(config, "curved_separation", separation))
    checks.append(make_check(config, "flat_nonunique", unique_flat, "flat data runs that wrongly looked unique"))
    return checks, {}, {"v": [np.asarray(v).tolist() for v in vs], "recovered": recovered}


def _random_pw(rng: np.random.Generator, spread: float = 2.0) -> dict:
    """Random piecewise-constant conductivity on regions 1 and 2: random axes,
    eigenvalues log-uniform in ``[1/spread, spread]``."""
    out = {}
    for r in (1, 2):
        u = random_orthogonal(rng, 3)
        lam = np.exp(rng.uniform(-np.log(spread), np.log(spread), 3))
        out[r] = as_spd((u * lam) @ u.T)
    return out


IDENTITY_FIXTURE = dict(half_width=1.0, bottom_curvature=0.5, interface_curvature=0.5,
                        interface_height=0.4, top_margin=0.4)


def _identity_pair(config: ExperimentConfig, rng: np.random.Generator):
    """Alessandrini identity for one random conductivity pair on three nested meshes.

    On a single mesh both sides agree to round-off (Galerkin orthogonality).
    Against continuum values, approximated by the boundary pairing on the
    finest mesh, the interior integral converges under refinement.
    """
    h = config.h or 0.2
    fixture = {k: float(config.params.get(k, v)) for k, v in IDENTITY_FIXTURE.items()}
    dom = stacked_paraboloid_domain(**fixture)
    s1, s2 = _random_pw(rng), _random_pw(rng)
    centers = [(0.4, 0.0), (-0.4, 0.1), (0.0, 0.45), (0.1, -0.4)]
    pts = [dom.boundary_patch.point(np.array(c)) for c in centers]
    coarse = build_structured_mesh(dom, h)
    # the same currents on every mesh: widths resolved by the coarsest one
    eps = max(resolved_eps(coarse, LABEL_MEASUREMENT, p, 2.0 * h) for p in pts)
    worst = {k: 0.0 for k in TOLERANCES["identity-checks"]}
    rows, lhs, rhs = [], [], []
    sizes = [h / 2**k for k in range(int(config.param("refinements", 2)) + 1)]
    for level, size in enumerate(sizes):
        mesh = coarse if level == 0 else build_structured_mesh(dom, size)
        solvers = (NeumannSolver(mesh, s1), NeumannSolver(mesh, s2))
        bumps = [approx_delta_current(mesh, LABEL_MEASUREMENT, p, eps) for p in pts]
        psi1, psi2 = bumps[0] - bumps[1], bumps[2] - bumps[3]
        res = alessandrini_residual(mesh, s1, s2, psi1, psi2, solvers=solvers)
        worst["alessandrini_exact"] = max(worst["alessandrini_exact"],
                                          res.residual / max(abs(res.lhs), abs(res.rhs), 1e-300))
        lhs.append(res.lhs)
        rhs.append(res.rhs)
        rows.append([level, size, len(mesh.tets), res.lhs, res.rhs])
        if level == 0:
            same = alessandrini_residual(mesh, s1, s1, psi1, psi2, solvers=(solvers[0], solvers[0]))
            scale = abs(float(facet_load(mesh, psi1.values) @ solvers[0].solve(psi2).values))
            worst["alessandrini_equal"] = same.residual / max(scale, 1e-300)
            for s in solvers:
                nd = assemble_local_nd_map(mesh, s.sigma_pw, basis_size=5, solver=s)
                worst["nd_symmetry"] = max(worst["nd_symmetry"], nd.symmetry_defect())
                lam = np.linalg.eigvalsh(0.5 * (nd.matrix + nd.matrix.T))
                worst["nd_psd"] = max(worst["nd_psd"], max(0.0, -lam[0] / max(lam[-1], 1e-300)))
    ref = lhs[-1]
    err = [abs(r - ref) / max(abs(ref), 1e-300) for r in rhs[:-1]][:2]
    if len(err) == 2:
        worst["alessandrini_decrease"] = err[1] / max(err[0], 1e-300)
        details = {"alessandrini_decrease": f"error vs reference {err[0]:.3e} -> {err[1]:.3e}"}
    else:  # a single refinement has no reference to compare against
        worst["alessandrini_decrease"] = np.inf
        details = {"alessandrini_decrease": "needs at least two refinements"}
    checks = [make_check(config, k, v, details.get(k, "")) for k, v in worst.items()]
    for row, r in zip(rows, rhs):
        row.append(abs(r - ref) / max(abs(ref), 1e-300))
    series = {"alessandrini": Series(("level", "h", "tets", "lhs", "rhs", "rhs_error_vs_reference"), rows,
                                     "boundary pairing vs interior integral; last level is the reference")}
    return checks, series, {}


def _tasks(config: ExperimentConfig) -> list:
    if config.kind == "identity-checks":
        return [_identity_pair] * int(config.param("pairs", 5))
    return RUNNERS[config.kind]


RUNNERS = {
    "kernel-validation": [_kernel_validation],
    "halfspace-recovery": [_halfspace_recovery],
    "forward-convergence": [_forward_convergence],
    "layer-strip": [_layer_strip],
    "tartar-demo": [_tartar_demo],
}


def _merge_checks(checks: list[Check]) -> list[Check]:
    """One check per name: the worst of the task values (details joined)."""
    merged: dict[str, Check] = {}
    for c in checks:
        old = merged.get(c.name)
        if old is None:
            merged[c.name] = c
            continue
        worse = c if (c.value < old.value if c.relation == ">=" else c.value > old.value) else old
        detail = "; ".join(d for d in (old.detail, c.detail) if d)
        merged[c.name] = Check(c.name, worse.value, c.tolerance, old.passed and c.passed, c.relation, detail)
    return list(merged.values())


def run_experiment(config: ExperimentConfig, jobs: int = 1, out=None, strict: bool = False) -> Report:
    """Run every task of the configured kind and write the report and series.

    With ``strict`` a :class:`CheckFailed` is raised after the report is written
    if any check fails.
    """
    tasks = _tasks(config)
    seeds = np.random.SeedSequence(config.seed).spawn(len(tasks))
    t0 = time.perf_counter()

    def run(i):
        t = time.perf_counter()
        rng = np.random.Generator(np.random.PCG64(seeds[i]))
        return tasks[i](config, rng), time.perf_counter() - t

    if jobs > 1 and len(tasks) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            outputs = list(pool.map(run, range(len(tasks))))
    else:
        outputs = [run(i) for i in range(len(tasks))]
    checks, series, results, timing = [], {}, {}, {}
    for i, ((task_checks, task_series, task_results), dt) in enumerate(outputs):
        checks += task_checks
        for name, s in task_series.items():
            # series of repeated tasks are concatenated with a leading task column
            if len(tasks) > 1:
                s = Series(("task",) + s.columns, [[i] + list(r) for r in s.rows], s.description)
                if name in series:
                    s = Series(s.columns, series[name].rows + s.rows, s.description)
            series[name] = s
        results.update(task_results)
        timing[f"{i}:{tasks[i].__name__.lstrip('_')}"] = dt
    timing["total"] = time.perf_counter() - t0
    report = Report(config.echo(), _merge_checks(checks), series, [], timing, _plain(results))
    out = out if out is not None else config.out
    if out is not None:
        write_report(report, config, out)
    if strict and not report.passed:
        failed = ", ".join(c.name for c in report.checks if not c.passed)
        raise CheckFailed(f"checks failed: {failed}")
    return report


def write_report(report: Report, config: ExperimentConfig, out) -> Path:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    artifacts = []
    for name in sorted(report.series):
        artifacts.append(str(emit_series(report, name, out / "series").relative_to(out)))
    if config.source is not None:
        dest = out / ("config" + Path(config.source).suffix)
        if Path(config.source).resolve() != dest.resolve():
            shutil.copyfile(config.source, dest)
        artifacts.append(dest.name)
    report.artifacts = artifacts
    path = out / "report.json"
    path.write_text(report.dumps() + "\n", encoding="utf-8")
    return path


def _plain(obj):
    """Convert numpy scalars and arrays to JSON-friendly Python values."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, float) and not np.isfinite(obj):
        return None
    return obj


__all__ = [
    "Check",
    "ExperimentConfig",
    "KINDS",
    "Report",
    "Series",
    "TOLERANCES",
    "emit_series",
    "read_series",
    "run_experiment",
    "write_report",
]
