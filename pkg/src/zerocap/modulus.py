"""Discrete p-modulus of curve and cut families by constraint generation.

A curve density lives on vertices and the rho-length of an edge path uses the
trapezoid rule per step, so a path contributes a linear constraint
sum_v N[v] rho[v] >= 1 with N[v] = half the length of the path edges at v.
A cut density lives on edges; a separating cut contributes
sum_{e in cut} a(e) rho(e) >= 1.

Both solvers alternate an exact convex master (Clarabel through cvxpy) with a
combinatorial separation oracle (Dijkstra for curves, max-flow/min-cut for
cuts).  Each returns its density together with a certified bracket
lower <= modulus <= upper.
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import cvxpy as cp
import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import breadth_first_order, connected_components, dijkstra, maximum_flow

from .geometry import BASE_BOTTOM, BASE_TOP, ContinuumE, MetricMeasureGraph, ProductMesh, QuotientMesh
from .metric import DualityConstants

log = logging.getLogger(__name__)

# keeps zero-density edges in the graph and breaks ties towards short paths
_LENGTH_TIE = 1e-12


class ParameterError(ValueError):
    pass


@dataclass
class Density:
    values: np.ndarray
    mesh_id: str = ""

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if np.any(self.values < 0):
            raise ParameterError("densities are nonnegative")

    def energy(self, mesh: MetricMeasureGraph, p: float) -> float:
        return numeric_energy(mesh, self, p)


def _as_values(rho) -> np.ndarray:
    return rho.values if isinstance(rho, Density) else np.asarray(rho, dtype=float)


def numeric_energy(mesh: MetricMeasureGraph, rho, p: float) -> float:
    r = _as_values(rho)
    return float(np.sum(r**p * mesh.measure))


def path_length(mesh: MetricMeasureGraph, rho, path) -> float:
    """Trapezoid rho-length of an edge path."""
    r = _as_values(rho)
    path = np.asarray(path, dtype=np.int64)
    if len(path) < 2:
        return 0.0
    a, b = path[:-1], path[1:]
    lengths = np.asarray(mesh.graph[a, b]).ravel()
    if np.any(lengths <= 0):
        raise ValueError("not an edge path")
    return float(np.sum(lengths * (r[a] + r[b]) / 2))


# --- curve families ---------------------------------------------------------


@dataclass
class CurveFamilySpec:
    """Curves joining ``E`` to ``F``, optionally confined to ``support``.

    Confining to the closure of a region is exact whenever every curve of the
    family has an initial piece inside it that already ends on F.
    """

    kind: str
    E: np.ndarray
    F: np.ndarray
    support: np.ndarray | None = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        self.E = np.unique(np.asarray(self.E, dtype=np.int64))
        self.F = np.unique(np.asarray(self.F, dtype=np.int64))
        if len(self.E) == 0 or len(self.F) == 0:
            raise ParameterError("E and F must be nonempty")
        if np.intersect1d(self.E, self.F).size:
            raise ParameterError("E and F must be disjoint")

    @classmethod
    def connect(cls, E, F, support=None) -> "CurveFamilySpec":
        return cls("connect", E, F, None if support is None else np.unique(support))

    @classmethod
    def meet_e_truncated(cls, X: ProductMesh, E: ContinuumE, delta0: float, eps0: float) -> "CurveFamilySpec":
        """Gamma(E, F(delta0, eps0)) restricted to the closure of C(delta0, eps0)."""
        inside = cylinder_mask(X, delta0, eps0)
        nbrs = np.unique(X.graph[np.flatnonzero(inside)].indices)
        support = np.union1d(np.flatnonzero(inside), nbrs)
        F = support[~inside[support]]
        return cls("meetE_truncated", E.vertices, F, support, {"delta0": delta0, "eps0": eps0})

    def mapped(self, Q: QuotientMesh) -> "CurveFamilySpec":
        """Image of the family under the collapse map."""
        m = Q.vertex_map
        sup = None if self.support is None else np.unique(m[self.support])
        return CurveFamilySpec(self.kind, np.unique(m[self.E]), np.unique(m[self.F]), sup, dict(self.params))


def cylinder_mask(X: ProductMesh, delta: float, eps: float) -> np.ndarray:
    """Vertices of C(delta, eps) = B_Y(cusp, delta) x [-1-eps, 1+eps]."""
    dy = X.base.distances_from(X.base.cusp)
    ball = dy < delta
    layers = np.abs(X.z) <= 1 + eps + 1e-12
    return (ball[:, None] & layers[None, :]).ravel()


def analytic_density(X: ProductMesh, delta: float, eps: float) -> Density:
    """1/delta on the cusp-region part of C(delta, eps), 1/eps on the
    pillowcase part, 0 elsewhere."""
    if not 0 < delta < eps:
        raise ParameterError(f"need 0 < delta < eps, got delta={delta}, eps={eps}")
    inside = cylinder_mask(X, delta, eps)
    in_y1 = np.isin(X.base.chart_kind, (BASE_TOP, BASE_BOTTOM))
    c1 = inside & np.repeat(in_y1, X.n_layers)
    rho = np.zeros(X.n_vertices)
    rho[inside] = 1.0 / eps
    rho[c1] = 1.0 / delta
    return Density(rho, f"analytic(delta={delta}, eps={eps})")


def analytic_energy_cells(X: ProductMesh, delta: float, eps: float, p: float = 3.0) -> float:
    """Energy of the analytic density integrated over prism cells.

    A prism gets 1/delta when its triangle lies in the cusp region and 1/eps
    on a pillowcase; prisms touching C(delta, eps) are counted, so glued slit
    vertices do not carry a cusp weight over pillowcase area.
    """
    if not 0 < delta < eps:
        raise ParameterError(f"need 0 < delta < eps, got delta={delta}, eps={eps}")
    Y = X.base
    near = Y.distances_from(Y.cusp) < delta
    touch = near[Y.triangles].any(axis=1)
    in_y1 = np.isin(Y.triangle_kind, (BASE_TOP, BASE_BOTTOM))
    rho = np.where(in_y1, 1.0 / delta, 1.0 / eps)
    layers = np.abs(X.z) <= 1 + eps + 1e-12
    slabs = int(np.count_nonzero(layers[:-1] | layers[1:]))
    return float(np.sum(Y.triangle_area[touch] * rho[touch] ** p)) * slabs * X.h_z


def analytic_energy_bound(delta: float, eps: float, c_reg: float) -> float:
    """Upper bound 4(1+eps) delta + C delta^2 (1+eps) / eps^3 on the 3-energy."""
    if not 0 < delta < eps:
        raise ParameterError("need 0 < delta < eps")
    return 4 * (1 + eps) * delta + c_reg * delta**2 * (1 + eps) / eps**3


# --- convex masters -----------------------------------------------------------
#
# Curve master, on the directed edges u -> v a curve may use (none enters E or
# leaves F), with a potential phi:
#
#     minimize sum mu rho^p  s.t.  phi_v - phi_u <= len (rho_u + rho_v) / 2,
#                                  phi = 0 on E, phi = 1 on F, 0 <= phi <= 1,
#                                  N rho >= 1 for explicitly generated paths.
#
# The edge constraints encode every path at once: rho is admissible for all
# edge paths from E to F iff such a phi exists.  Their multipliers y >= 0 form
# an E-F flow, and for any y (exact or not) the Lagrangian dual
#
#     g(y) = sum_F div y + sum_interior min(0, div y) + sum lam
#            - (p - 1) sum mu (sigma / (p mu))^(p / (p - 1)),
#     sigma_v = sum of y_e len_e / 2 over edges at v  (+ N^T lam),
#
# is a lower bound for the modulus.  Cut master: by max-flow/min-cut, the cut
# constraints hold iff a unit E-F flow f with |f_e| <= a_e rho_e exists, so
#
#     minimize sum mu_e rho_e^q  s.t.  |f| <= a rho,  f a unit flow,
#
# and any potential u (0 on E, c on F) gives the lower bound
# max_t  t c - t^(p') sum (q - 1) W (|du| / (q W))^(p'),  W = mu_e a^-q.


def _clarabel(problem: cp.Problem, precise: bool) -> None:
    opts = {"tol_gap_abs": 1e-11, "tol_gap_rel": 1e-11, "tol_feas": 1e-11, "max_iter": 400} if precise else {}
    with warnings.catch_warnings():
        # accuracy is judged by the certificates, not by the solver's own flag
        warnings.simplefilter("ignore", UserWarning)
        problem.solve(solver=cp.CLARABEL, **opts)
    if problem.status not in (cp.OPTIMAL, cp.OPTIMAL_INACCURATE):
        raise RuntimeError(f"convex master failed: {problem.status}")


def _incidence(n: int, tail: np.ndarray, head: np.ndarray, wt=None, wh=None) -> sp.csr_matrix:
    """Edge-by-vertex matrix with ``wh`` at the head and ``wt`` at the tail."""
    m = len(tail)
    r = np.arange(m)
    wt = -np.ones(m) if wt is None else wt
    wh = np.ones(m) if wh is None else wh
    return sp.csr_matrix((np.r_[wh, wt], (np.r_[r, r], np.r_[head, tail])), shape=(m, n))


def _rows_to_csr(rows: list, n: int) -> sp.csr_matrix:
    indptr = np.cumsum([0] + [len(r[0]) for r in rows])
    idx = np.concatenate([r[0] for r in rows])
    val = np.concatenate([r[1] for r in rows])
    return sp.csr_matrix((val, idx, indptr), shape=(len(rows), n))


@dataclass
class _CurveMaster:
    rho: np.ndarray
    flow: np.ndarray
    lower: float


def _curve_master(n, u, v, ln, mus, is_e, is_f, p, rows, precise) -> _CurveMaster:
    r = cp.Variable(n, nonneg=True)
    phi = cp.Variable(n)
    D = _incidence(n, u, v)
    C = _incidence(n, u, v, ln / 2, ln / 2)
    cons = [D @ phi - C @ r <= 0, phi >= 0, phi <= 1,
            phi[np.flatnonzero(is_e)] == 0, phi[np.flatnonzero(is_f)] == 1]
    R = _rows_to_csr(rows, n) if rows else None
    if R is not None:
        cons.append(R @ r >= 1)
    prob = cp.Problem(cp.Minimize(cp.sum(cp.multiply(mus, cp.power(r, p)))), cons)
    _clarabel(prob, precise)
    rho = np.maximum(np.asarray(r.value), 0.0)
    y = np.maximum(np.asarray(cons[0].dual_value), 0.0)
    lam = np.maximum(np.asarray(cons[-1].dual_value), 0.0) if R is not None else None
    return _CurveMaster(rho, y, _curve_lower(n, u, v, ln, mus, is_e, is_f, p, y, R, lam))


def _curve_lower(n, u, v, ln, mus, is_e, is_f, p, y, R=None, lam=None) -> float:
    div = np.bincount(v, y, n) - np.bincount(u, y, n)
    sigma = np.bincount(u, y * ln / 2, n) + np.bincount(v, y * ln / 2, n)
    const = div[is_f].sum() + np.minimum(div[~is_e & ~is_f], 0.0).sum()
    if R is not None:
        sigma = sigma + R.T @ lam
        const += lam.sum()
    return float(const - (p - 1) * np.sum(mus * (sigma / (p * mus)) ** (p / (p - 1))))


def _decompose(n, u, v, y, is_e, is_f, max_paths: int):
    """Greedy path decomposition of an E-F flow; cycles are cancelled."""
    if len(y) == 0 or y.max() <= 0:
        return [], np.zeros(0)
    rem = np.where(y > 1e-9 * y.max(), y, 0.0)
    order = np.argsort(u, kind="stable")
    start = np.searchsorted(u[order], np.arange(n + 1))
    paths, weights = [], []
    out_e = np.bincount(u, rem, n)
    while len(paths) < max_paths:
        out_e = np.bincount(u, rem, n)
        src = np.flatnonzero(is_e & (out_e > 0))
        if len(src) == 0:
            break
        x = int(src[np.argmax(out_e[src])])
        verts, edges, where = [x], [], {x: 0}
        while not is_f[verts[-1]]:
            cand = order[start[verts[-1]]:start[verts[-1] + 1]]
            cand = cand[rem[cand] > 0]
            if len(cand) == 0:
                break
            e = int(cand[np.argmax(rem[cand])])
            w = int(v[e])
            if w in where:
                k = where[w]
                cyc = edges[k:] + [e]
                rem[cyc] -= rem[cyc].min()
                for z in verts[k + 1:]:
                    del where[z]
                verts, edges = verts[:k + 1], edges[:k]
                continue
            where[w] = len(verts)
            verts.append(w)
            edges.append(e)
        if not edges:
            rem[order[start[x]:start[x + 1]]] = 0.0
            continue
        b = rem[edges].min()
        rem[edges] -= b
        if is_f[verts[-1]]:
            paths.append(np.array(verts, dtype=np.int64))
            weights.append(b)
    return paths, np.array(weights)


# --- curve modulus ----------------------------------------------------------


@dataclass
class ModulusResult:
    p: float
    value: float
    density: Density
    paths: list
    iterations: int
    gap: float
    min_length: float
    lower: float
    upper: float
    converged: bool
    family: str = ""
    path_weights: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def record(self) -> dict:
        return {
            "family": self.family,
            "p": self.p,
            "value": self.value,
            "iterations": self.iterations,
            "gap": self.gap,
            "certified": bool(self.converged),
        }


def _restrict(mesh: MetricMeasureGraph, support):
    if support is None:
        return mesh, np.arange(mesh.n_vertices)
    sub = mesh.induced(support)
    return sub, sub.parent_index


def _edge_endpoints(g: sp.csr_matrix):
    rows = np.repeat(np.arange(g.shape[0]), np.diff(g.indptr))
    return rows, g.indices


def _path_row(g: sp.csr_matrix, path: np.ndarray):
    a, b = path[:-1], path[1:]
    half = np.asarray(g[a, b]).ravel() / 2
    coef = np.bincount(np.concatenate([a, b]), weights=np.concatenate([half, half]))
    idx = np.flatnonzero(coef)
    return idx, coef[idx]


def _walk(pred: np.ndarray, t: int) -> np.ndarray:
    path = [int(t)]
    while pred[path[-1]] >= 0:
        path.append(int(pred[path[-1]]))
    return np.array(path[::-1], dtype=np.int64)


def _shortest(n, u, v, ln, rho, E, F):
    """Dijkstra under trapezoid rho-weights; zero weights get a 1e-12 nudge
    (the graph routine drops explicit zeros) and lengths are recomputed exactly."""
    w = sp.csr_matrix((ln * ((rho[u] + rho[v]) / 2 + _LENGTH_TIE), (u, v)), shape=(n, n))
    dist, pred, _ = dijkstra(w, directed=True, indices=E, min_only=True, return_predecessors=True)
    return dist, pred


def min_rho_length(mesh: MetricMeasureGraph, E, F, rho) -> float:
    """Smallest trapezoid rho-length over edge paths from E to F."""
    g = mesh.graph.tocsr()
    r = _as_values(rho)
    rows, cols = _edge_endpoints(g)
    w = sp.csr_matrix((g.data * (r[rows] + r[cols]) / 2, (rows, cols)), shape=g.shape)
    w.data[w.data == 0] = 1e-300
    d = dijkstra(w, directed=True, indices=np.asarray(E), min_only=True)
    return float(d[np.asarray(F)].min())


def solve_modulus(mesh: MetricMeasureGraph, family: CurveFamilySpec, p: float, tol: float = 1e-4,
                  batch: int = 32, max_iter: int | None = None, max_paths: int = 10000) -> ModulusResult:
    """Mod_p of the family of edge paths from E to F.

    Constraint generation around an exact convex master: the master carries
    the edge potential constraints (all paths at once) plus any explicitly
    generated path rows; Dijkstra under the master density is the separation
    oracle, and violated paths are added until the shortest rho-length is at
    least 1 - tol and the duality gap is at most tol * value.
    """
    if p <= 1:
        raise ParameterError("p must exceed 1")
    sub, parent = _restrict(mesh, family.support)
    pos = np.full(mesh.n_vertices, -1, dtype=np.int64)
    pos[parent] = np.arange(len(parent))
    E, F = pos[family.E], pos[family.F]
    if np.any(E < 0) or np.any(F < 0):
        raise ParameterError("E and F must lie in the support")
    g = sub.graph.tocsr()
    n = sub.n_vertices
    is_e = np.zeros(n, dtype=bool)
    is_e[E] = True
    is_f = np.zeros(n, dtype=bool)
    is_f[F] = True
    rows, cols = _edge_endpoints(g)
    keep = ~is_f[rows] & ~is_e[cols]
    u, v, ln = rows[keep], cols[keep], g.data[keep]

    reach = dijkstra(sp.csr_matrix((ln, (u, v)), shape=(n, n)), directed=True, indices=E, min_only=True)
    if not np.isfinite(reach[F]).any():
        return ModulusResult(p, 0.0, Density(np.zeros(mesh.n_vertices)), [], 0, 0.0, math.inf, 0.0, 0.0,
                             True, family.kind)

    scale = float(np.mean(sub.measure))
    mus = sub.measure / scale
    cap = max_iter if max_iter is not None else 10 * 100
    generated, seen = [], set()
    precise = False
    it = 0
    converged = False
    while True:
        it += 1
        mas = _curve_master(n, u, v, ln, mus, is_e, is_f, p, [r for _, r in generated], precise)
        rho = mas.rho
        value = float(np.sum(sub.measure * rho**p))
        lower = mas.lower * scale
        dist, pred = _shortest(n, u, v, ln, rho, E, F)
        order = np.lexsort((sub.labels[F], dist[F]))
        shortest = _path_row_length(g, rho, _walk(pred, F[order[0]]))
        gap = abs(value - lower)
        log.debug("iter %d: shortest %.9g, value %.9g, lower %.9g", it, shortest, value, lower)
        if shortest >= 1 - tol and gap <= tol * value:
            converged = True
            break
        if it >= cap:
            log.warning("modulus solve hit the iteration cap (%d)", cap)
            break
        added = 0
        for t in F[order]:
            if added >= batch:
                break
            path = _walk(pred, t)
            row = _path_row(g, path)
            if float(row[1] @ rho[row[0]]) >= 1 - tol:
                break
            key = tuple(path.tolist())
            if key not in seen:
                seen.add(key)
                generated.append((path, row))
                added += 1
        if added == 0:
            if precise:
                log.warning("modulus solve stalled: shortest %.9g, gap %.3g", shortest, gap)
                break
            precise = True
        cap = max_iter if max_iter is not None else 10 * (len(generated) + 100)

    paths, weights = _decompose(n, u, v, mas.flow, is_e, is_f, max_paths)
    paths = [parent[pth] for pth, _ in generated] + [parent[pth] for pth in paths]
    full = np.zeros(mesh.n_vertices)
    full[parent] = rho
    upper = value / shortest**p if shortest > 0 else math.inf
    value = min(max(value, lower), upper)
    return ModulusResult(p, value, Density(full), paths, it, gap, shortest, lower, upper, converged,
                         family.kind, weights * scale)


def _path_row_length(g, rho, path) -> float:
    if len(path) < 2:
        return 0.0
    idx, c = _path_row(g, path)
    return float(c @ rho[idx])


# --- cut modulus ------------------------------------------------------------


@dataclass
class CutFamilyResult:
    q: float
    value: float
    cuts: list
    edges: np.ndarray
    edge_density: np.ndarray
    iterations: int
    gap: float
    min_weight: float
    converged: bool
    lower: float = 0.0
    upper: float = math.inf

    def record(self) -> dict:
        return {"family": "cut", "p": self.q, "value": self.value, "iterations": self.iterations,
                "gap": self.gap, "certified": bool(self.converged)}


def cut_weights(mesh: MetricMeasureGraph, edges: np.ndarray, lengths: np.ndarray):
    """Dual face area a(e) = (mu_u + mu_v) / (2 len_e) and edge measure a(e) len_e."""
    mu_e = (mesh.measure[edges[:, 0]] + mesh.measure[edges[:, 1]]) / 2
    return mu_e / lengths, mu_e


def _min_cut(n: int, edges: np.ndarray, cap: np.ndarray, E: np.ndarray, F: np.ndarray):
    """Minimum E/F cut for float capacities clipped at 1.

    Returns the source side and a lower bound on the minimum cut weight (the
    integer max-flow of the floored, scaled capacities).
    """
    c = np.minimum(cap, 1.0)
    at_e = np.isin(edges, E).any(axis=1)
    scale = math.floor((2**31 - 1) / (float(c[at_e].sum()) + 2))
    ci = np.floor(c * scale).astype(np.int64)
    big = 2**31 - 1
    s, t = n, n + 1
    src = np.concatenate([edges[:, 0], edges[:, 1], np.full(len(E), s), F])
    dst = np.concatenate([edges[:, 1], edges[:, 0], E, np.full(len(F), t)])
    cv = np.concatenate([ci, ci, np.full(len(E), big), np.full(len(F), big)])
    G = sp.csr_matrix((cv, (src, dst)), shape=(n + 2, n + 2))
    G.sum_duplicates()
    G.data = np.minimum(G.data, big).astype(np.int32)
    res = maximum_flow(G, s, t)
    R = (G - res.flow).tocsr()
    R.data[R.data < 0] = 0
    R.eliminate_zeros()
    reach = breadth_first_order(R, s, directed=True, return_predecessors=False)
    side = np.zeros(n + 2, dtype=bool)
    side[reach] = True
    return side[:n], res.flow_value / scale


def _separates(n: int, edges: np.ndarray, cut_mask: np.ndarray, E, F) -> bool:
    keep = edges[~cut_mask]
    g = sp.coo_matrix((np.ones(len(keep)), (keep[:, 0], keep[:, 1])), shape=(n, n))
    _, comp = connected_components(g, directed=False)
    return not np.intersect1d(comp[E], comp[F]).size


@dataclass
class _CutMaster:
    rho: np.ndarray
    lower: float


def _cut_master(n, edges, a, mus_e, q, is_e, is_f, rows, precise) -> _CutMaster:
    # work with the flux t = a rho, which stays O(1) where dual faces are tiny
    m = len(edges)
    W = mus_e * a ** (-q)
    wscale = float(np.median(W))
    t = cp.Variable(m, nonneg=True)
    f = cp.Variable(m)
    B = _incidence(n, edges[:, 0], edges[:, 1]).T.tocsr()
    inner = np.flatnonzero(~is_e & ~is_f)
    cons = [B[inner] @ f == 0, cp.sum(B[np.flatnonzero(is_f)] @ f) == 1, f <= t, -f <= t]
    if rows:
        R = _rows_to_csr(rows, m)
        cons.append(R.multiply(1 / a[None, :]).tocsr() @ t >= 1)
    prob = cp.Problem(cp.Minimize(cp.sum(cp.multiply(W / wscale, cp.power(t, q)))), cons)
    _clarabel(prob, precise)
    rho = np.maximum(np.asarray(t.value), 0.0) / a
    lower = 0.0
    pot_in = np.asarray(cons[0].dual_value, dtype=float) * wscale
    nu = float(np.asarray(cons[1].dual_value)) * wscale
    for sign in (1.0, -1.0):
        pot = np.zeros(n)
        pot[inner] = sign * pot_in
        pot[is_f] = nu
        lower = max(lower, _cut_lower(edges, a, mus_e, q, pot, nu))
    # the optimal potential is the distance from E under len * rho^(q-1)
    ln = mus_e / a
    w = q * ln * rho ** (q - 1) + _LENGTH_TIE * ln
    G = sp.csr_matrix((np.r_[w, w], (np.r_[edges[:, 0], edges[:, 1]], np.r_[edges[:, 1], edges[:, 0]])), shape=(n, n))
    d = dijkstra(G, directed=True, indices=np.flatnonzero(is_e), min_only=True)
    c = float(d[is_f].min())
    if np.isfinite(c):
        lower = max(lower, _cut_lower(edges, a, mus_e, q, np.minimum(d, c), c))
    return _CutMaster(rho, lower)


def _cut_lower(edges, a, mus_e, q, pot, c) -> float:
    pc = q / (q - 1)
    W = mus_e * a ** (-q)
    s = np.abs(pot[edges[:, 1]] - pot[edges[:, 0]])
    K = float(np.sum((q - 1) * W * (s / (q * W)) ** pc))
    c = abs(c)
    if c == 0 or K == 0:
        return 0.0
    t = (c / (pc * K)) ** (1 / (pc - 1))
    return t * c - t**pc * K


def solve_cut_modulus(mesh: MetricMeasureGraph, E, F, q: float, tol: float = 1e-4, support=None,
                      graph: sp.csr_matrix | None = None, max_iter: int | None = None) -> CutFamilyResult:
    """Mod_q of the family of edge cuts separating E from F.

    Cut constraint: sum_{e in cut} rho_e a(e) >= 1; energy sum_e rho_e^q a(e) len_e.
    ``graph`` selects the edge set (defaults to the mesh graph).  The master is
    the equivalent bounded-flow program; minimum cuts under the master density
    are the separation oracle and violated cuts are added explicitly.
    """
    if q <= 1:
        raise ParameterError("q must exceed 1")
    E = np.unique(np.asarray(E, dtype=np.int64))
    F = np.unique(np.asarray(F, dtype=np.int64))
    if np.intersect1d(E, F).size:
        raise ParameterError("E and F must be disjoint")
    src = mesh if graph is None else _with_graph(mesh, graph)
    sub, parent = _restrict(src, support)
    pos = np.full(mesh.n_vertices, -1, dtype=np.int64)
    pos[parent] = np.arange(len(parent))
    El, Fl = pos[E], pos[F]
    n = sub.n_vertices
    is_e = np.zeros(n, dtype=bool)
    is_e[El] = True
    is_f = np.zeros(n, dtype=bool)
    is_f[Fl] = True
    g = sp.triu(sub.graph, k=1).tocoo()
    edges = np.column_stack([g.row, g.col]).astype(np.int64)
    lengths = g.data
    # edges inside E or inside F never cross a separating cut
    keep = ~(is_e[edges[:, 0]] & is_e[edges[:, 1]]) & ~(is_f[edges[:, 0]] & is_f[edges[:, 1]])
    edges, lengths = edges[keep], lengths[keep]
    a, mu_e = cut_weights(sub, edges, lengths)
    if _separates(n, edges, np.zeros(len(edges), dtype=bool), El, Fl):
        return CutFamilyResult(q, 0.0, [], parent[edges], np.zeros(len(edges)), 0, 0.0, math.inf, True)

    scale = float(np.mean(mu_e))
    mus = mu_e / scale
    cuts, coeffs, seen = [], [], set()
    precise = False
    it = 0
    converged = False
    cap = max_iter if max_iter is not None else 10 * 100
    while True:
        it += 1
        mas = _cut_master(n, edges, a, mus, q, is_e, is_f, coeffs, precise)
        rho = mas.rho
        value = float(np.sum(mu_e * rho**q))
        lower = mas.lower * scale
        side, weight = _min_cut(n, edges, rho * a, El, Fl)
        cut_mask = side[edges[:, 0]] != side[edges[:, 1]]
        if not _separates(n, edges, cut_mask, El, Fl):
            raise RuntimeError("minimum cut does not separate E from F")
        gap = abs(value - lower)
        log.debug("cut iter %d: weight %.9g, value %.9g, lower %.9g", it, weight, value, lower)
        if weight >= 1 - tol and gap <= tol * value:
            converged = True
            break
        if it >= cap:
            log.warning("cut modulus solve hit the iteration cap (%d)", cap)
            break
        idx = np.flatnonzero(cut_mask)
        key = tuple(idx.tolist())
        exact = float(np.sum(rho[idx] * a[idx]))
        if exact < 1 - tol and key not in seen:
            seen.add(key)
            cuts.append(idx)
            coeffs.append((idx, a[idx]))
        elif precise:
            log.warning("cut modulus solve stalled: weight %.9g, gap %.3g", weight, gap)
            break
        else:
            precise = True
        cap = max_iter if max_iter is not None else 10 * (len(cuts) + 100)
    upper = value / weight**q if weight > 0 else math.inf
    return CutFamilyResult(q, value, [parent[edges[c]] for c in cuts], parent[edges], rho, it, gap, weight,
                           converged, lower, upper)


def _with_graph(mesh: MetricMeasureGraph, graph: sp.csr_matrix) -> MetricMeasureGraph:
    return MetricMeasureGraph(graph.tocsr(), mesh.measure, mesh.labels, mesh.dim)


def complex_graph(X: ProductMesh) -> sp.csr_matrix:
    """Triangle edges of each layer plus vertical edges (no stencil shortcuts)."""
    Y = X.base
    ce, cl = Y.complex_edges, Y.complex_edge_lengths
    gy = sp.coo_matrix((np.concatenate([cl, cl]), (np.concatenate([ce[:, 0], ce[:, 1]]),
                        np.concatenate([ce[:, 1], ce[:, 0]]))), shape=(Y.n_vertices,) * 2)
    L = X.n_layers
    path = sp.diags([np.full(L - 1, X.h_z), np.full(L - 1, X.h_z)], [-1, 1], shape=(L, L))
    return (sp.kron(gy, sp.identity(L)) + sp.kron(sp.identity(Y.n_vertices), path)).tocsr()


# --- reports ----------------------------------------------------------------


def conjugate(p: float) -> float:
    return p / (p - 1)


def duality_report(mod_gamma: ModulusResult, mod_sigma: CutFamilyResult, n: int) -> dict:
    p, q = mod_gamma.p, mod_sigma.q
    if abs(1 / p + 1 / q - 1) > 1e-12:
        raise ParameterError(f"exponents {p} and {q} are not conjugate")
    product = mod_gamma.value ** (1 / p) * mod_sigma.value ** (1 / q)
    return {
        "n": n,
        "p": p,
        "q": q,
        "mod_gamma": mod_gamma.value,
        "mod_sigma": mod_sigma.value,
        "product": product,
        "continuum_bound": DualityConstants(n).bound,
    }


def degenerate_trend(mod_gamma: list[float], mod_sigma: list[float], factor: float = 1.5) -> dict:
    """Across refinements: Mod_p Gamma should shrink while Mod_q Sigma grows."""
    growth = [b / a for a, b in zip(mod_sigma[:-1], mod_sigma[1:])]
    ok = len(mod_sigma) >= 3 and all(g >= factor for g in growth)
    shrink = all(b <= a for a, b in zip(mod_gamma[:-1], mod_gamma[1:]))
    return {
        "growth": growth,
        "consistent_with_duality": bool(ok and shrink),
        "sigma_growth_ok": bool(ok),
        "gamma_shrinks": bool(shrink),
    }


def quotient_invariance_check(X: MetricMeasureGraph, Xq: QuotientMesh, family: CurveFamilySpec, p: float,
                              tol: float = 1e-4) -> dict:
    """Modulus of a family supported away from E, on X and on the collapsed space."""
    if family.support is None:
        raise ParameterError("the family needs an explicit support")
    fq = family.mapped(Xq)
    if np.any(np.isin(fq.support, [Xq.point])):
        raise ParameterError("family support meets E")
    a, b = X.induced(family.support), Xq.induced(fq.support)
    untouched = (
        np.array_equal(a.labels, b.labels)
        and np.array_equal(a.measure, b.measure)
        and (a.graph != b.graph).nnz == 0
    )
    r1 = solve_modulus(X, family, p, tol)
    r2 = solve_modulus(Xq, fq, p, tol)
    return {
        "value_X": r1.value,
        "value_quotient": r2.value,
        "difference": r1.value - r2.value,
        "support_untouched": bool(untouched),
        # equal up to summation order over arrays of different length
        "energy_transport_equal": math.isclose(numeric_energy(X, r1.density, p),
                                               numeric_energy(Xq, _transport(r1.density, Xq), p), rel_tol=1e-12),
    }


def _transport(rho: Density, Xq: QuotientMesh) -> Density:
    """Push a density through the collapse map (values on E are dropped)."""
    out = np.zeros(Xq.n_vertices)
    keep = Xq.vertex_map != Xq.point
    out[Xq.vertex_map[keep]] = rho.values[keep]
    return Density(out)
