"""Discrete construction of the cusp surface Y, the product X = Y x (-2, 2),
the continuum E and the collapsed space obtained by crushing E to a point.

The surface is assembled from flat charts:

* the cusp region {0 <= t <= 1 - h, 0 <= y <= t^3/3}, once as the top copy and
  once as the bottom copy (glued along y = 0 and y = f(t));
* one pillowcase (a doubled square of side 2^-m) per dyadic slit t = i/2^m.

Each pillowcase is attached through a slit: the vertical segment I at t = i/2^m
in the top copy is opened into a left and a right side, the segment J on the
bottom edge of the pillowcase is opened into a front and a back side, and the
sides are identified by arc length measured from the endpoint on y = 0 (which
goes to the pillowcase corner (0, 0)).  Left goes to front, right to back.

All charts are triangulated.  Besides the triangle edges, every chart carries
"stencil" edges joining vertices closer than ``STENCIL * h`` whenever the
straight segment stays inside the chart; they make graph distances close to
the length metric without touching the cell complex.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property

import numpy as np
import scipy.sparse as sp
from scipy.spatial import cKDTree

STENCIL = 4
_EPS = 1e-13

BASE_TOP, BASE_BOTTOM, PILLOW = 0, 1, 2
CHART_NAMES = {BASE_TOP: "base-top", BASE_BOTTOM: "base-bottom", PILLOW: "pillowcase"}


class ConfigurationError(ValueError):
    """Raised when mesh parameters cannot resolve the requested construction."""


class GluingError(RuntimeError):
    pass


def cusp_profile(t):
    """Cusp profile f(t) = t^3/3 on [0, 1)."""
    arr = np.asarray(t, dtype=float)
    if np.any(arr < 0) or np.any(arr >= 1):
        raise ValueError(f"cusp profile defined on [0, 1), got {t!r}")
    out = arr**3 / 3.0
    return float(out) if out.ndim == 0 else out


def _profile_exact(t: Fraction) -> Fraction:
    return t**3 / 3


@dataclass(frozen=True, order=True)
class DyadicSlit:
    m: int
    i: int

    def __post_init__(self):
        if self.m < 1 or self.i % 2 == 0 or not 1 <= self.i < 2**self.m:
            raise ValueError(f"invalid dyadic slit (m={self.m}, i={self.i})")

    @property
    def t_exact(self) -> Fraction:
        return Fraction(self.i, 2**self.m)

    @property
    def len_exact(self) -> Fraction:
        return min(Fraction(1, 2**self.m), _profile_exact(self.t_exact))

    @property
    def t(self) -> float:
        return float(self.t_exact)

    @property
    def len(self) -> float:
        return float(self.len_exact)

    @property
    def side(self) -> float:
        """Side length of the attached pillowcase."""
        return 2.0**-self.m


def enumerate_slits(M: int) -> list[DyadicSlit]:
    if M < 0:
        raise ValueError("depth must be nonnegative")
    return [DyadicSlit(m, i) for m in range(1, M + 1) for i in range(1, 2**m, 2)]


def pillowcase_tail_area(m: int) -> float:
    """Total area of all pillowcases at levels >= m.

    Level n has 2^(n-1) pillowcases of area 2 / 4^n, so the tail is 2^(1-m).
    """
    if m < 1:
        raise ValueError("levels start at 1")
    return 2.0 ** (1 - m)


def check_resolution(M: int, h: float) -> int:
    n = round(1.0 / h)
    if h <= 0 or abs(n * h - 1.0) > 1e-12 or n & (n - 1):
        raise ConfigurationError(f"mesh_h must be 1/2^k, got {h}")
    if M > 0 and h > 2.0 ** (-M - 1) + 1e-15:
        raise ConfigurationError(f"mesh_h={h} too coarse for depth {M} (need h <= 2^-(M+1))")
    return n


def _slit_points(length: float, h: float) -> np.ndarray:
    n = max(2, math.ceil(length / h - 1e-9))
    pts = length * np.arange(n + 1) / n
    pts[-1] = length
    return pts


@dataclass
class ChartMesh:
    """A flat triangulated chart with local coordinates.

    ``keys`` name each local vertex; ``identified`` lists local index pairs that
    denote the same point of the chart (the doubling of a pillowcase).  ``slits``
    maps a slit to its ordered local vertex chains, starting at the endpoint
    used for arc-length matching.
    """

    chart_id: str
    vertices: np.ndarray
    keys: list
    triangles: np.ndarray
    stencil: np.ndarray
    slits: dict = field(default_factory=dict)
    identified: list = field(default_factory=list)
    boundary: dict = field(default_factory=dict)

    @property
    def triangle_areas(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        d1, d2 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
        return 0.5 * np.abs(d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    @property
    def area(self) -> float:
        return float(self.triangle_areas.sum())

    def _roots(self) -> np.ndarray:
        root = np.arange(len(self.vertices))
        for a, b in self.identified:
            root[max(a, b)] = min(a, b)
        return root

    def euler_characteristic(self) -> int:
        root = self._roots()
        tri = root[self.triangles]
        edges = {tuple(sorted(e)) for t in tri for e in ((t[0], t[1]), (t[1], t[2]), (t[0], t[2]))}
        return len(set(root.tolist())) - len(edges) + len(tri)

    def edge_lengths(self) -> np.ndarray:
        t = self.triangles
        e = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [0, 2]]])
        return np.linalg.norm(self.vertices[e[:, 0]] - self.vertices[e[:, 1]], axis=1)


def _zipper(left: list[int], right: list[int], lh: np.ndarray, rh: np.ndarray) -> list[tuple]:
    """Triangulate the strip between two vertical vertex chains.

    Heights are compared after normalising each chain to [0, 1] so that no
    triangle joins the bottom of one chain to the top of the other.
    """
    if len(left) == 1:
        return [(left[0], right[k], right[k + 1]) for k in range(len(right) - 1)]
    ln, rn = lh / lh[-1], rh / rh[-1]
    i = k = 0
    out = []
    while i < len(left) - 1 or k < len(right) - 1:
        if i == len(left) - 1 or (k < len(right) - 1 and rn[k + 1] < ln[i + 1]):
            out.append((left[i], right[k], right[k + 1]))
            k += 1
        else:
            out.append((left[i], left[i + 1], right[k]))
            i += 1
    return out


def build_base_chart(M: int, h: float, stencil: int = STENCIL) -> ChartMesh:
    """Triangulate the truncated cusp region with every level <= M slit resolved."""
    n = check_resolution(M, h)
    slit_at = {round(s.t / h): s for s in enumerate_slits(M)}
    verts, keys, lines, heights = [], [], [], []
    for j in range(n):
        t = j * h
        f_exact = _profile_exact(Fraction(j, n))
        f = float(f_exact)
        if j == 0:
            ys = np.array([0.0])
        elif j in slit_at:
            s = slit_at[j]
            ys = _slit_points(s.len, h)
            above = np.arange(1, math.ceil(f / h) + 1) * h
            above = above[(above > s.len + 0.25 * h) & (above < f - 0.25 * h)]
            ys = np.concatenate([ys, above, [f] if f_exact > s.len_exact else []])
        else:
            ys = np.arange(0, math.ceil(f / h) + 1) * h
            ys = ys[ys < f - 0.25 * h]
            ys = np.append(ys, f)
            if len(ys) < 3:
                ys = np.array([0.0, f / 2, f])
        idx = list(range(len(verts), len(verts) + len(ys)))
        verts.extend((t, y) for y in ys)
        keys.extend((j, k) for k in range(len(ys)))
        lines.append(idx)
        heights.append(np.asarray(ys, dtype=float))
    verts = np.array(verts)

    tris = []
    for j in range(n - 1):
        tris.extend(_zipper(lines[j], lines[j + 1], heights[j], heights[j + 1]))
    tris = np.array(tris, dtype=np.int64)

    # stencil edges: straight segments under the top chords that do not cross a slit
    line_of = np.array([k[0] for k in keys])
    fvals = np.array([hh[-1] for hh in heights])
    slit_len = np.full(n, -1.0)
    for j, s in slit_at.items():
        slit_len[j] = s.len
    pairs = cKDTree(verts).query_pairs(stencil * h * (1 + 1e-9), output_type="ndarray")
    keep = []
    for a, b in pairs:
        ja, jb = line_of[a], line_of[b]
        if ja == jb:
            continue
        if ja > jb:
            a, b, ja, jb = b, a, jb, ja
        js = np.arange(ja + 1, jb)
        if len(js):
            ts = js * h
            ys = verts[a, 1] + (verts[b, 1] - verts[a, 1]) * (ts - verts[a, 0]) / (verts[b, 0] - verts[a, 0])
            if np.any(ys > fvals[js] + _EPS) or np.any(ys < slit_len[js] - _EPS):
                continue
        keep.append((a, b))
    stencil = np.array(keep, dtype=np.int64).reshape(-1, 2)

    chart = ChartMesh("base", verts, keys, tris, stencil)
    chart.slits = {s: lines[j][: len(_slit_points(s.len, h))] for j, s in slit_at.items()}
    chart.boundary = {
        "lines": lines,
        "heights": heights,
        "truncation": lines[n - 1],
    }
    return chart


def build_pillowcase(slit: DyadicSlit, h: float, stencil: int = STENCIL) -> ChartMesh:
    """Doubled square of side 2^-m with the slit J marked on the bottom edge."""
    side = slit.side
    if h > side / 2 + 1e-15:
        raise ConfigurationError(f"mesh_h={h} too coarse for pillowcase level {slit.m}")
    k = round(side / h)
    jpts = _slit_points(slit.len, h)
    grid = np.arange(k + 1) * h
    inner = grid[(grid > slit.len + 0.25 * h) & (grid < side - 0.25 * h)]
    xs = np.concatenate([jpts, inner, [side] if slit.len_exact < Fraction(1, 2**slit.m) else []])
    ys = grid
    nx, ny = len(xs), len(ys)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    face = np.column_stack([X.ravel(), Y.ravel()])
    verts = np.concatenate([face, face])
    keys = [(f, a, b) for f in (0, 1) for a in range(nx) for b in range(ny)]

    def vid(f, a, b):
        return f * nx * ny + a * ny + b

    tris = []
    for f in (0, 1):
        for a in range(nx - 1):
            for b in range(ny - 1):
                if (a == nx - 2 and b == 0) or (a == 0 and b == ny - 2):
                    # corner cells: a main diagonal would give a triangle with
                    # all three vertices on the fold, duplicated on both faces
                    tris.append((vid(f, a, b), vid(f, a + 1, b), vid(f, a, b + 1)))
                    tris.append((vid(f, a + 1, b), vid(f, a + 1, b + 1), vid(f, a, b + 1)))
                else:
                    tris.append((vid(f, a, b), vid(f, a + 1, b), vid(f, a + 1, b + 1)))
                    tris.append((vid(f, a, b), vid(f, a + 1, b + 1), vid(f, a, b + 1)))
    nj = len(jpts)
    identified = []
    for a in range(nx):
        for b in range(ny):
            if a in (0, nx - 1) or b == ny - 1 or b == 0:
                identified.append((vid(0, a, b), vid(1, a, b)))
    pairs = cKDTree(face).query_pairs(stencil * h * (1 + 1e-9), output_type="ndarray")
    stencil = np.concatenate([pairs, pairs + nx * ny])
    chart = ChartMesh(f"pillowcase({slit.m},{slit.i})", verts, keys, np.array(tris), stencil)
    chart.identified = identified
    chart.slits = {
        slit: [vid(0, a, 0) for a in range(nj)],
        (slit, "back"): [vid(1, a, 0) for a in range(nj)],
    }
    return chart


class _UnionFind:
    def __init__(self):
        self.parent = {}
        self.order = []

    def add(self, key):
        if key not in self.parent:
            self.parent[key] = key
            self.order.append(key)

    def find(self, key):
        root = key
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[key] != root:
            self.parent[key], key = root, self.parent[key]
        return root

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[rb] = ra


def _edges_and_lengths(tri_ids: np.ndarray, tri_xy: np.ndarray):
    e = np.concatenate([tri_ids[:, [0, 1]], tri_ids[:, [1, 2]], tri_ids[:, [0, 2]]])
    xy = np.concatenate([tri_xy[:, [0, 1]], tri_xy[:, [1, 2]], tri_xy[:, [0, 2]]])
    return e, np.linalg.norm(xy[:, 0] - xy[:, 1], axis=1)


def _symmetric_min_graph(n: int, pairs: np.ndarray, lengths: np.ndarray) -> sp.csr_matrix:
    a = np.minimum(pairs[:, 0], pairs[:, 1])
    b = np.maximum(pairs[:, 0], pairs[:, 1])
    ok = a != b
    a, b, w = a[ok], b[ok], lengths[ok]
    order = np.lexsort((w, b, a))
    a, b, w = a[order], b[order], w[order]
    first = np.ones(len(a), dtype=bool)
    first[1:] = (a[1:] != a[:-1]) | (b[1:] != b[:-1])
    a, b, w = a[first], b[first], w[first]
    g = sp.coo_matrix((np.concatenate([w, w]), (np.concatenate([a, b]), np.concatenate([b, a]))), shape=(n, n))
    return g.tocsr()


class MetricMeasureGraph:
    """Weighted graph with a vertex measure; the common ground of all meshes.

    ``labels`` are stable integer names for vertices; solvers order their
    working sets by label so that results do not depend on vertex numbering.
    """

    dim: int

    def __init__(self, graph: sp.csr_matrix, measure: np.ndarray, labels: np.ndarray, dim: int):
        self.graph = graph
        self.measure = np.asarray(measure, dtype=float)
        self.labels = np.asarray(labels, dtype=np.int64)
        self.dim = dim

    @property
    def n_vertices(self) -> int:
        return self.graph.shape[0]

    @property
    def total_measure(self) -> float:
        return float(self.measure.sum())

    def distances_from(self, sources) -> np.ndarray:
        from scipy.sparse.csgraph import dijkstra

        src = np.atleast_1d(np.asarray(sources, dtype=np.int64))
        return dijkstra(self.graph, directed=False, indices=src, min_only=True)

    def induced(self, vertices) -> "MetricMeasureGraph":
        """Induced subgraph on ``vertices`` ordered by label."""
        v = np.asarray(sorted(set(np.asarray(vertices).tolist()), key=lambda i: self.labels[i]), dtype=np.int64)
        g = self.graph[v][:, v].tocsr()
        sub = MetricMeasureGraph(g, self.measure[v], self.labels[v], self.dim)
        sub.parent_index = v
        return sub


@dataclass
class SlitRecord:
    slit: DyadicSlit
    left: list
    right: list
    front: list
    back: list
    endpoints: tuple


class SurfaceMesh(MetricMeasureGraph):
    """The glued surface Y at truncation depth M and mesh scale h."""

    def __init__(self, **kw):
        self.__dict__.update(kw)
        MetricMeasureGraph.__init__(self, kw["graph"], kw["vertex_area"], np.arange(len(kw["vertex_area"])), 2)

    @property
    def area(self) -> float:
        return float(self.triangle_area.sum())

    @cached_property
    def complex_edges(self) -> np.ndarray:
        t = self.triangles
        e = np.sort(np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [0, 2]]]), axis=1)
        return np.unique(e, axis=0)

    @cached_property
    def complex_edge_lengths(self) -> np.ndarray:
        e, w = _edges_and_lengths(self.triangles, self.triangle_xy)
        g = _symmetric_min_graph(self.n_vertices, e, w)
        ce = self.complex_edges
        return np.asarray(g[ce[:, 0], ce[:, 1]]).ravel()

    def euler_characteristic(self) -> int:
        return self.n_vertices - len(self.complex_edges) + len(self.triangles)

    def boundary_edges(self) -> np.ndarray:
        t = self.triangles
        e = np.sort(np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [0, 2]]]), axis=1)
        uniq, counts = np.unique(e, axis=0, return_counts=True)
        return uniq[counts == 1]

    def boundary_cycles(self) -> int:
        """Number of boundary components (each must be a simple cycle)."""
        be = self.boundary_edges()
        if len(be) == 0:
            return 0
        deg = np.bincount(be.ravel(), minlength=self.n_vertices)
        if np.any(deg[deg > 0] != 2):
            raise GluingError("boundary is not a disjoint union of cycles")
        from scipy.sparse.csgraph import connected_components

        g = sp.coo_matrix((np.ones(len(be)), (be[:, 0], be[:, 1])), shape=(self.n_vertices,) * 2)
        _, comp = connected_components(g, directed=False)
        return len(set(comp[deg > 0].tolist()))

    def summary(self) -> dict:
        return {
            "depth_M": self.M,
            "mesh_h": self.h,
            "V": self.n_vertices,
            "E": int(len(self.complex_edges)),
            "F": int(len(self.triangles)),
            "chi": self.euler_characteristic(),
            "area": self.area,
            "tail_area_bound": pillowcase_tail_area(self.M + 1),
        }

    def chart_label(self, v: int) -> str:
        kind = int(self.chart_kind[v])
        if kind == PILLOW:
            return f"pillowcase({self.level[v]},{self.slit_i[v]})"
        return CHART_NAMES[kind]


def glue_surface(M: int, h: float, stencil: int = STENCIL) -> SurfaceMesh:
    """Double the cusp region and glue in one pillowcase per slit of level <= M."""
    base = build_base_chart(M, h, stencil)
    lines = base.boundary["lines"]
    last_k = {j: len(line) - 1 for j, line in enumerate(lines)}
    slit_lines = {round(s.t / h): s for s in base.slits}
    slit_top = {j: len(base.slits[s]) - 1 for j, s in slit_lines.items()}

    uf = _UnionFind()
    info = {}  # key -> (chart kind, local xy, level, i)

    def base_key(copy, loc, other_t):
        j, k = base.keys[loc]
        if k == 0 or k == last_k[j]:
            key = ("B", j, k)
        elif copy == "top" and j in slit_lines and k < slit_top[j]:
            key = ("B", "top", j, k, "L" if other_t < j * h else "R")
        else:
            key = ("B", copy, j, k)
        if key not in uf.parent:
            uf.add(key)
            info[key] = (BASE_TOP if copy == "top" else BASE_BOTTOM, base.vertices[loc], 0, 0)
        return key

    tri_keys, tri_xy, tri_kind = [], [], []
    metric_keys, metric_len = [], []
    for copy in ("top", "bottom"):
        for tri in base.triangles:
            ct = base.vertices[tri, 0].mean()
            tri_keys.append([base_key(copy, v, ct) for v in tri])
            tri_xy.append(base.vertices[tri])
            tri_kind.append(BASE_TOP if copy == "top" else BASE_BOTTOM)
        for a, b in base.stencil:
            pa, pb = base.vertices[a], base.vertices[b]
            metric_keys.append((base_key(copy, a, pb[0]), base_key(copy, b, pa[0])))
            metric_len.append(float(np.hypot(*(pa - pb))))

    records = []
    for s, chain in sorted(base.slits.items()):
        pc = build_pillowcase(s, h, stencil)
        skip = set(pc.slits[s][1:-1]) | set(pc.slits[(s, "back")][1:-1])

        def pkey(loc, s=s, pc=pc):
            key = ("P", s.m, s.i) + tuple(pc.keys[loc])
            if key not in uf.parent:
                uf.add(key)
                info[key] = (PILLOW, pc.vertices[loc], s.m, s.i)
            return key

        for tri in pc.triangles:
            tri_keys.append([pkey(v) for v in tri])
            tri_xy.append(pc.vertices[tri])
            tri_kind.append(PILLOW)
        for a, b in pc.stencil:
            metric_keys.append((pkey(a), pkey(b)))
            metric_len.append(float(np.hypot(*(pc.vertices[a] - pc.vertices[b]))))
        for a, b in pc.identified:
            if a not in skip:
                uf.union(pkey(a), pkey(b))

        j = round(s.t / h)
        front, back = pc.slits[s], pc.slits[(s, "back")]
        if len(chain) != len(front) or abs(base.vertices[chain[-1], 1] - pc.vertices[front[-1], 0]) > 1e-15:
            raise GluingError(f"slit length mismatch at {s}")
        left = [base_key("top", v, (j - 1) * h) for v in chain]
        right = [base_key("top", v, (j + 1) * h) for v in chain]
        fk = [pkey(v) for v in front]
        bk = [pkey(v) for v in back]
        for a, b in zip(left, fk):
            uf.union(a, b)
        for a, b in zip(right, bk):
            uf.union(a, b)
        records.append(SlitRecord(s, left, right, fk, bk, (left[0], left[-1])))

    roots = {}
    for key in uf.order:
        r = uf.find(key)
        if r not in roots:
            roots[r] = len(roots)
    ids = {key: roots[uf.find(key)] for key in uf.order}
    nv = len(roots)
    xy = np.zeros((nv, 2))
    kind = np.zeros(nv, dtype=np.int8)
    level = np.zeros(nv, dtype=np.int16)
    slit_i = np.zeros(nv, dtype=np.int32)
    seen = np.zeros(nv, dtype=bool)
    for key in uf.order:
        v = ids[key]
        if not seen[v]:
            seen[v] = True
            kind[v], xy[v], level[v], slit_i[v] = info[key]

    triangles = np.array([[ids[k] for k in t] for t in tri_keys], dtype=np.int64)
    triangle_xy = np.array(tri_xy)
    d1 = triangle_xy[:, 1] - triangle_xy[:, 0]
    d2 = triangle_xy[:, 2] - triangle_xy[:, 0]
    tri_area = 0.5 * np.abs(d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])
    vertex_area = np.bincount(triangles.ravel(), weights=np.repeat(tri_area / 3, 3), minlength=nv)

    ce, cl = _edges_and_lengths(triangles, triangle_xy)
    mk = np.array([[ids[a], ids[b]] for a, b in metric_keys], dtype=np.int64).reshape(-1, 2)
    graph = _symmetric_min_graph(nv, np.concatenate([ce, mk]), np.concatenate([cl, np.array(metric_len)]))

    trunc = set()
    for copy in ("top", "bottom"):
        for loc in base.boundary["truncation"]:
            trunc.add(ids[base_key(copy, loc, 0.0)])
    cusp = ids[("B", 0, 0)]

    slit_table = [
        {
            "slit": r.slit,
            "left": [ids[k] for k in r.left],
            "right": [ids[k] for k in r.right],
            "front": [ids[k] for k in r.front],
            "back": [ids[k] for k in r.back],
        }
        for r in records
    ]
    return SurfaceMesh(
        M=M,
        h=h,
        graph=graph,
        vertex_area=vertex_area,
        xy=xy,
        chart_kind=kind,
        level=level,
        slit_i=slit_i,
        triangles=triangles,
        triangle_xy=triangle_xy,
        triangle_area=tri_area,
        triangle_kind=np.array(tri_kind, dtype=np.int8),
        truncation=np.array(sorted(trunc), dtype=np.int64),
        cusp=cusp,
        slit_table=slit_table,
        base_area=base.area,
    )


class ProductMesh(MetricMeasureGraph):
    """Layered mesh of Y x [-2 + h_z, 2 - h_z]; vertex (v, l) has index v*L + l.

    Edges are the horizontal copies of the base graph and the vertical steps of
    length h_z, so graph distance is d_Y + |dz|.  The vertex measure is the
    base dual area times h_z; prism cells (triangle x slab) carry area * h_z.
    """

    def __init__(self, base: SurfaceMesh, h_z: float):
        if not 0 < h_z < 1:
            raise ConfigurationError(f"vertical_hz must lie in (0, 1), got {h_z}")
        self.base = base
        self.h_z = h_z
        L = int(math.floor((4 - 2 * h_z) / h_z + 1e-9)) + 1
        self.n_layers = L
        self.z = -2 + h_z + h_z * np.arange(L)
        path = sp.diags([np.full(L - 1, h_z), np.full(L - 1, h_z)], [-1, 1], shape=(L, L))
        graph = (sp.kron(base.graph, sp.identity(L)) + sp.kron(sp.identity(base.n_vertices), path)).tocsr()
        measure = np.repeat(base.vertex_area, L) * h_z
        super().__init__(graph, measure, np.arange(base.n_vertices * L), 3)

    def index(self, v, layer):
        return np.asarray(v) * self.n_layers + np.asarray(layer)

    def split(self, idx):
        idx = np.asarray(idx)
        return idx // self.n_layers, idx % self.n_layers

    def product_distances(self, source: int) -> np.ndarray:
        """Distances from one vertex, computed from a single base Dijkstra."""
        v, l = self.split(source)
        dy = self.base.distances_from(int(v))
        return (dy[:, None] + np.abs(self.z[None, :] - self.z[l])).ravel()

    def prisms(self):
        """Prism cells as (triangle index, lower layer) with their 6 vertices."""
        L = self.n_layers
        t = self.base.triangles
        lo = (t[:, None, :] * L + np.arange(L - 1)[None, :, None]).reshape(-1, 3)
        return np.concatenate([lo, lo + 1], axis=1), np.repeat(self.base.triangle_area, L - 1) * self.h_z

    def product_measure(self, base_vertices, layers) -> float:
        return float(self.measure[self.index(np.asarray(base_vertices)[:, None], np.asarray(layers)[None, :])].sum())


def build_product(Y: SurfaceMesh, h_z: float) -> ProductMesh:
    return ProductMesh(Y, h_z)


@dataclass
class ContinuumE:
    base_point: int
    layers: np.ndarray
    vertices: np.ndarray
    extent: tuple = (-1.0, 1.0)


def extract_continuum_E(X: ProductMesh) -> ContinuumE:
    layers = np.flatnonzero(np.abs(X.z) <= 1 + 1e-12)
    if len(layers) == 0:
        raise GluingError("continuum E is empty")
    return ContinuumE(X.base.cusp, layers, X.index(X.base.cusp, layers))


class QuotientMesh(MetricMeasureGraph):
    """X with the vertices of E merged into a single vertex [E]."""

    def __init__(self, graph, measure, labels, vertex_map, point):
        super().__init__(graph, measure, labels, 3)
        self.vertex_map = vertex_map
        self.point = point


def quotient_collapse(X: MetricMeasureGraph, E: ContinuumE) -> QuotientMesh:
    ev = np.asarray(E.vertices)
    if len(ev) == 0:
        raise GluingError("cannot collapse an empty set")
    n = X.n_vertices
    in_e = np.zeros(n, dtype=bool)
    in_e[ev] = True
    keep = np.flatnonzero(~in_e)
    rep = int(ev.min())
    # [E] takes the slot of its smallest member so that label order is preserved
    order = np.sort(np.append(keep, rep))
    new_index = np.full(n, -1, dtype=np.int64)
    new_index[order] = np.arange(len(order))
    new_index[ev] = new_index[rep]
    g = X.graph.tocoo()
    a, b = new_index[g.row], new_index[g.col]
    graph = _symmetric_min_graph(len(order), np.column_stack([a, b]), g.data)
    measure = X.measure[order].copy()
    measure[new_index[rep]] = X.measure[ev].sum()
    return QuotientMesh(graph, measure, X.labels[order], new_index, int(new_index[rep]))


def export_off(mesh: SurfaceMesh, path) -> None:
    """Write the surface as an OFF file; glued vertices use their first chart."""
    with open(path, "w") as fh:
        fh.write("OFF\n")
        fh.write(f"# depth_M={mesh.M} mesh_h={mesh.h} chi={mesh.euler_characteristic()}\n")
        fh.write(f"{mesh.n_vertices} {len(mesh.triangles)} {len(mesh.complex_edges)}\n")
        for v in range(mesh.n_vertices):
            x, y = mesh.xy[v]
            fh.write(f"{x:.17g} {y:.17g} 0 # {mesh.chart_label(v)}\n")
        for t in mesh.triangles:
            fh.write(f"3 {t[0]} {t[1]} {t[2]}\n")


class GridMesh(MetricMeasureGraph):
    """Regular grid on [0, 1]^d with step h and nearest-neighbour edges.

    The measure is the dual cell volume (halved on each boundary face).
    """

    def __init__(self, h: float, dim: int = 2):
        n = int(round(1 / h))
        if n < 1 or abs(n * h - 1) > 1e-12:
            raise ConfigurationError(f"grid step must divide 1, got {h}")
        self.h = h
        self.shape = (n + 1,) * dim
        line = sp.diags([np.full(n, h), np.full(n, h)], [-1, 1], shape=(n + 1, n + 1))
        eye = sp.identity(n + 1)
        graph = sp.csr_matrix((1, 1))
        w = np.ones(1)
        for k in range(dim):
            graph = line if k == 0 else sp.kron(graph, eye) + sp.kron(sp.identity(graph.shape[0]), line)
            cell = np.full(n + 1, h)
            cell[[0, -1]] = h / 2
            w = cell if k == 0 else np.kron(w, cell)
        self.coords = np.stack(np.meshgrid(*[np.linspace(0, 1, n + 1)] * dim, indexing="ij"), -1).reshape(-1, dim)
        super().__init__(graph.tocsr(), w, np.arange(len(w)), dim)

    def face(self, axis: int, value: float) -> np.ndarray:
        return np.flatnonzero(np.abs(self.coords[:, axis] - value) < 1e-12)
