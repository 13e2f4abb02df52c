"""Shortest-path metric, balls, ball measures, Ahlfors and LLC checks."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.csgraph import dijkstra

from .geometry import BASE_BOTTOM, BASE_TOP, PILLOW, MetricMeasureGraph, ProductMesh, SurfaceMesh


def distances(mesh: MetricMeasureGraph, sources) -> np.ndarray:
    """Distance from the nearest of ``sources`` to every vertex."""
    src = np.unique(np.atleast_1d(np.asarray(sources, dtype=np.int64)))
    if isinstance(mesh, ProductMesh):
        v, l = mesh.split(src)
        out = np.full(mesh.n_vertices, np.inf)
        for b in np.unique(v):
            zl = mesh.z[l[v == b]]
            dz = np.min(np.abs(mesh.z[:, None] - zl[None, :]), axis=1)
            dy = mesh.base.distances_from(int(b))
            out = np.minimum(out, (dy[:, None] + dz[None, :]).ravel())
        return out
    return mesh.distances_from(src)


def distance(mesh: MetricMeasureGraph, a: int, b: int) -> float:
    """Length of a shortest edge path; ``inf`` for disconnected pairs."""
    if a == b:
        return 0.0
    return float(distances(mesh, [a])[b])


def shortest_path(mesh: MetricMeasureGraph, a: int, b: int) -> list[int]:
    _, pred = dijkstra(mesh.graph, directed=False, indices=b, return_predecessors=True)
    if a != b and pred[a] < 0:
        raise ValueError(f"vertices {a} and {b} are not connected")
    path = [a]
    while path[-1] != b:
        path.append(int(pred[path[-1]]))
    return path


def mesh_cells(mesh):
    """(cell vertex array, cell measures) or None for meshes without cells."""
    if isinstance(mesh, SurfaceMesh):
        return mesh.triangles, mesh.triangle_area
    if isinstance(mesh, ProductMesh):
        return mesh.prisms()
    return None


@dataclass
class Ball:
    center: int
    radius: float
    vertices: np.ndarray
    cells: np.ndarray  # cells with every vertex in the ball
    touching: np.ndarray  # cells with at least one vertex in the ball


def metric_ball(mesh, x: int, r: float, dist: np.ndarray | None = None) -> Ball:
    if r <= 0:
        raise ValueError("radius must be positive")
    d = distances(mesh, [x]) if dist is None else dist
    inside = d < r
    cells = mesh_cells(mesh)
    if cells is None:
        empty = np.zeros(0, dtype=np.int64)
        return Ball(x, r, np.flatnonzero(inside), empty, empty)
    cv, _ = cells
    hits = inside[cv]
    return Ball(x, r, np.flatnonzero(inside), np.flatnonzero(hits.all(axis=1)), np.flatnonzero(hits.any(axis=1)))


@dataclass
class BallMeasure:
    inner: float
    outer: float
    lumped: float


def ball_measure(mesh, x: int, r: float, dist: np.ndarray | None = None) -> BallMeasure:
    """Cell-bracketed measure of B(x, r); ``lumped`` sums vertex measures."""
    ball = metric_ball(mesh, x, r, dist)
    lumped = float(mesh.measure[ball.vertices].sum())
    cells = mesh_cells(mesh)
    if cells is None:
        return BallMeasure(lumped, lumped, lumped)
    _, mu = cells
    return BallMeasure(float(mu[ball.cells].sum()), float(mu[ball.touching].sum()), lumped)


@dataclass
class BallStats:
    center: int
    radius: float
    measure: float
    measure_inner: float
    measure_outer: float
    k: int
    stratum: str = ""
    flagged: bool = False

    @property
    def ratio(self) -> float:
        return self.measure / self.radius**self.k

    @property
    def ratio_lower(self) -> float:
        return self.measure_inner / self.radius**self.k

    @property
    def ratio_upper(self) -> float:
        return self.measure_outer / self.radius**self.k


@dataclass
class AhlforsSummary:
    stats: list
    min_ratio: float
    max_ratio: float
    n_flagged: int


def _truncation_set(mesh) -> np.ndarray:
    if isinstance(mesh, SurfaceMesh):
        return mesh.truncation
    if isinstance(mesh, ProductMesh):
        L = mesh.n_layers
        side = mesh.index(mesh.base.truncation[:, None], np.arange(L)[None, :]).ravel()
        caps = mesh.index(np.arange(mesh.base.n_vertices)[:, None], np.array([0, L - 1])[None, :]).ravel()
        return np.concatenate([side, caps])
    return np.zeros(0, dtype=np.int64)


def ahlfors_scan(mesh, k: int, samples, strata=None) -> AhlforsSummary:
    """Ratios H^k(B(x, r)) / r^k.  Lower extremes use the inner cell bracket,
    upper extremes the outer one; balls reaching the truncation boundary are
    flagged and left out of the extremes."""
    trunc = _truncation_set(mesh)
    stats = []
    for idx, (x, r) in enumerate(samples):
        d = distances(mesh, [x])
        bm = ball_measure(mesh, x, r, d)
        flagged = bool(len(trunc) and d[trunc].min() < r)
        stats.append(
            BallStats(int(x), float(r), bm.lumped, bm.inner, bm.outer, k,
                      strata[idx] if strata else "", flagged)
        )
    valid = [s for s in stats if not s.flagged]
    lo = min((s.ratio_lower for s in valid), default=math.nan)
    hi = max((s.ratio_upper for s in valid), default=math.nan)
    return AhlforsSummary(stats, lo, hi, len(stats) - len(valid))


def surface_strata(Y: SurfaceMesh) -> dict[str, np.ndarray]:
    """Vertex pools covering every case of the regularity argument."""
    interior = np.ones(Y.n_vertices, dtype=bool)
    interior[Y.truncation] = False
    t = Y.xy[:, 0]
    pools = {
        "cusp": np.flatnonzero((Y.chart_kind == BASE_TOP) & (t < 0.25) & interior),
        "base": np.flatnonzero((Y.chart_kind == BASE_TOP) & (t >= 0.25) & interior),
        "double": np.flatnonzero((Y.chart_kind == BASE_BOTTOM) & interior),
    }
    for m in range(1, Y.M + 1):
        pools[f"pillow-{m}"] = np.flatnonzero((Y.chart_kind == PILLOW) & (Y.level == m))
    return {k: v for k, v in pools.items() if len(v)}


def stratified_ball_samples(Y: SurfaceMesh, n: int, rng: np.random.Generator, r_max: float = 0.75):
    """Seeded (center, radius, stratum) triples, round-robin over strata.

    Base points use radii >= 2^(2-M): below that scale the truncated surface
    has no pillowcases near the cusp and is not regular.  Pillowcase points
    use radii >= 4h.
    """
    pools = surface_strata(Y)
    names = sorted(pools)
    base_min = max(2.0 ** (2 - Y.M), 4 * Y.h)
    out = []
    for s in range(n):
        name = names[s % len(names)]
        x = int(rng.choice(pools[name]))
        r_min = 4 * Y.h if name.startswith("pillow") else base_min
        r = float(math.exp(rng.uniform(math.log(r_min), math.log(r_max))))
        out.append((x, r, name))
    return out


@dataclass
class LlcWitness:
    x: int
    r: float
    y: int
    z: int
    path: list
    clearance: float
    ok: bool
    case: str = ""
    bound: float = 0.0


def _vertical(X: ProductMesh, v: int, l0: int, l1: int) -> list[int]:
    step = 1 if l1 >= l0 else -1
    return [int(X.index(v, l)) for l in range(l0, l1 + step, step)]


def _horizontal(X: ProductMesh, a: int, b: int, layer: int) -> list[int]:
    path = shortest_path(X.base, a, b)
    return [int(X.index(v, layer)) for v in path]


def _join(*segments):
    out = []
    for seg in segments:
        out.extend(seg if not out else seg[1:] if seg[0] == out[-1] else seg)
    return out


def is_edge_path(mesh, path) -> bool:
    g = mesh.graph
    return all(g[a, b] > 0 for a, b in zip(path[:-1], path[1:]))


def llc_check(X: ProductMesh, x: int, r: float, y: int, z: int, lam: float = 12.0, slack: float | None = None) -> LlcWitness:
    """Join y, z outside B(x, r) by a path avoiding B(x, r/lam).

    Uses the four-case product construction (vertical moves at a base point
    far from x_1, horizontal moves in a layer far from x_2), falling back to a
    shortest path in the complement of B(x, r/lam).
    """
    slack = 2 * X.base.h if slack is None else slack
    dx = X.product_distances(x)
    if dx[y] < r or dx[z] < r:
        raise ValueError("endpoints must lie outside B(x, r)")
    x1, x2 = X.split(x)
    (y1, y2), (z1, z2) = X.split(y), X.split(z)
    x1, x2, y1, y2, z1, z2 = map(int, (x1, x2, y1, y2, z1, z2))
    dyx = X.base.distances_from(x1)
    rr = r / lam
    far_layer = 0 if abs(X.z[0] - X.z[x2]) >= abs(X.z[-1] - X.z[x2]) else X.n_layers - 1
    s = int(np.argmax(dyx))
    y_h, z_h = dyx[y1] >= rr, dyx[z1] >= rr
    y_v = abs(X.z[y2] - X.z[x2]) >= rr
    z_v = abs(X.z[z2] - X.z[x2]) >= rr
    if y_h and z_h:
        case = "both-horizontal"
        path = _join(_vertical(X, z1, z2, far_layer), _horizontal(X, z1, y1, far_layer), _vertical(X, y1, far_layer, y2))
    elif y_h and z_v:
        case = "y-horizontal/z-vertical"
        path = _join(_horizontal(X, z1, y1, z2), _vertical(X, y1, z2, y2))
    elif y_v and z_v:
        case = "both-vertical"
        path = _join(_horizontal(X, z1, s, z2), _vertical(X, s, z2, y2), _horizontal(X, s, y1, y2))
    elif y_v and z_h:
        case = "y-vertical/z-horizontal"
        path = _join(_vertical(X, z1, z2, y2), _horizontal(X, z1, y1, y2))
    else:  # pragma: no cover - excluded by d(x, y), d(x, z) >= r
        case, path = "none", []
    clearance = float(dx[path].min()) if path else -math.inf
    if not path or clearance < rr - slack:
        case += "+fallback"
        keep = np.flatnonzero(dx >= rr)
        sub = X.graph[keep][:, keep]
        pos = {int(v): i for i, v in enumerate(keep)}
        _, pred = dijkstra(sub, directed=False, indices=pos[z], return_predecessors=True)
        if pred[pos[y]] < 0:
            return LlcWitness(x, r, y, z, [], -math.inf, False, case, rr - slack)
        walk = [pos[y]]
        while walk[-1] != pos[z]:
            walk.append(int(pred[walk[-1]]))
        path = [int(keep[i]) for i in walk][::-1]
        clearance = float(dx[path].min())
    ok = path[0] == z and path[-1] == y and clearance >= rr - slack
    return LlcWitness(x, r, y, z, path, clearance, ok, case, rr - slack)


def llc_samples(X: ProductMesh, n: int, rng: np.random.Generator):
    """Seeded triples (x, r, y, z) with y, z outside B(x, r)."""
    out = []
    h = X.base.h
    while len(out) < n:
        x = int(rng.integers(X.n_vertices))
        dx = X.product_distances(x)
        r = float(math.exp(rng.uniform(math.log(4 * h), math.log(dx.max()))))
        pool = np.flatnonzero(dx >= r)
        if len(pool) < 2:
            continue
        y, z = (int(v) for v in rng.choice(pool, size=2, replace=False))
        out.append((x, r, y, z))
    return out


@dataclass
class RelativeDistance:
    E: np.ndarray
    F: np.ndarray
    dist: float
    diam_E: float
    diam_F: float

    @property
    def delta(self) -> float:
        return self.dist / min(self.diam_E, self.diam_F)


def set_diameter(mesh, S) -> float:
    S = np.asarray(S)
    return max(float(distances(mesh, [v])[S].max()) for v in S)


def relative_distance(mesh, E, F) -> RelativeDistance:
    E, F = np.unique(E), np.unique(F)
    if len(E) < 2 or len(F) < 2:
        raise ValueError("relative distance needs nondegenerate continua")
    dE, dF = set_diameter(mesh, E), set_diameter(mesh, F)
    if dE <= 0 or dF <= 0:
        raise ValueError("relative distance needs nondegenerate continua")
    return RelativeDistance(E, F, float(distances(mesh, E)[F].min()), dE, dF)


def unit_ball_volume(k: int) -> float:
    return math.pi ** (k / 2) / math.gamma(k / 2 + 1)


@dataclass
class DualityConstants:
    n: int
    v: dict = field(init=False)
    bound: float = field(init=False)

    def __post_init__(self):
        self.v = {k: unit_ball_volume(k) for k in range(0, self.n + 1)}
        self.bound = 2 * self.v[self.n] / self.v[self.n - 1]
