"""Independent oracles: brute-force modulus on tiny graphs and closed-form areas.

Nothing here calls the production solver.  The brute-force modulus enumerates
every simple E-F path with networkx and solves the dense convex program

    minimize sum_v mu_v rho_v^p  subject to  N rho >= 1  (one row per path)

twice: the primal with SLSQP and the dual over path multipliers with L-BFGS-B.
The two must agree to ``GAP`` relative, otherwise the case is rejected.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path

import networkx as nx
import numpy as np
import scipy.sparse as sp
from scipy.optimize import minimize

from .geometry import MetricMeasureGraph

MAX_VERTICES = 12
MAX_PATHS = 20000
GAP = 1e-9


class OracleError(ValueError):
    pass


@dataclass
class TinyGraphCase:
    name: str
    n: int
    edges: list
    measure: list
    E: list
    F: list
    p: float
    expected: float | None = None
    note: str = ""
    paths: list = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if not 1 <= self.n <= MAX_VERTICES:
            raise OracleError(f"{self.name}: {self.n} vertices (at most {MAX_VERTICES})")
        if len(self.measure) != self.n or min(self.measure) <= 0:
            raise OracleError(f"{self.name}: need one positive measure per vertex")
        if set(self.E) & set(self.F) or not self.E or not self.F:
            raise OracleError(f"{self.name}: E and F must be nonempty and disjoint")
        if any(e[2] <= 0 for e in self.edges):
            raise OracleError(f"{self.name}: edge lengths must be positive")
        self.paths = _enumerate(self)

    def graph(self) -> nx.Graph:
        g = nx.Graph()
        g.add_nodes_from(range(self.n))
        for u, v, ln in self.edges:
            if g.has_edge(u, v):
                ln = min(ln, g[u][v]["length"])
            g.add_edge(int(u), int(v), length=float(ln))
        return g

    def to_mesh(self) -> MetricMeasureGraph:
        g = self.graph()
        rows, cols, vals = [], [], []
        for u, v, d in g.edges(data=True):
            rows += [u, v]
            cols += [v, u]
            vals += [d["length"], d["length"]]
        csr = sp.csr_matrix((vals, (rows, cols)), shape=(self.n, self.n))
        return MetricMeasureGraph(csr, np.array(self.measure, dtype=float), np.arange(self.n), 1)

    def record(self) -> dict:
        d = asdict(self)
        d.pop("paths")
        return d


def _enumerate(case: TinyGraphCase) -> list:
    g = case.graph()
    paths = []
    for s in case.E:
        for t in case.F:
            for pth in nx.all_simple_paths(g, s, t):
                paths.append(pth)
                if len(paths) > MAX_PATHS:
                    raise OracleError(f"{case.name}: more than {MAX_PATHS} simple paths")
    return paths


def _path_matrix(case: TinyGraphCase) -> np.ndarray:
    g = case.graph()
    N = np.zeros((len(case.paths), case.n))
    for k, pth in enumerate(case.paths):
        for a, b in zip(pth[:-1], pth[1:]):
            half = g[a][b]["length"] / 2
            N[k, a] += half
            N[k, b] += half
    return N


def brute_force_modulus(case: TinyGraphCase, p: float | None = None) -> float:
    p = case.p if p is None else p
    if p <= 1:
        raise OracleError("p must exceed 1")
    if not case.paths:
        return 0.0
    N = _path_matrix(case)
    mu = np.asarray(case.measure, dtype=float)

    # dual: max sum(lam) - (p-1) sum mu rho(lam)^p,  rho = (N^T lam / (p mu))^(1/(p-1))
    def neg_dual(lam):
        s = N.T @ lam
        rho = (s / (p * mu)) ** (1 / (p - 1))
        return -(lam.sum() - (p - 1) * np.sum(mu * rho**p)), -(1 - N @ rho)

    lam = np.full(len(N), 1.0 / len(N))
    lower, upper = -math.inf, math.inf
    for _ in range(6):
        dual = minimize(neg_dual, lam, jac=True, method="L-BFGS-B", bounds=[(0, None)] * len(N),
                        options={"maxiter": 20000, "ftol": 1e-15, "gtol": 1e-13})
        lam = dual.x
        lower = max(lower, -dual.fun)
        rho_d = (N.T @ lam / (p * mu)) ** (1 / (p - 1))
        # the dual point yields a feasible primal candidate; SLSQP polishes it
        short_d = float((N @ rho_d).min())
        if short_d > 0:
            upper = min(upper, float(np.sum(mu * rho_d**p)) / short_d**p)
        primal = minimize(lambda r: np.sum(mu * np.abs(r) ** p), np.maximum(rho_d, 1e-3),
                          jac=lambda r: p * mu * np.abs(r) ** (p - 1) * np.sign(r), method="SLSQP",
                          constraints=[{"type": "ineq", "fun": lambda r: N @ r - 1, "jac": lambda r: N}],
                          bounds=[(0, None)] * case.n, options={"maxiter": 1000, "ftol": 1e-16})
        r = np.maximum(primal.x, 0)
        short = float((N @ r).min())
        if short > 0:
            upper = min(upper, float(np.sum(mu * r**p)) / short**p)
        if upper - lower <= GAP * max(upper, 1e-300):
            return 0.5 * (upper + lower)
    raise OracleError(f"{case.name}: dense solve gap {upper - lower:.3g} above {GAP}")


def flat_patch_oracle(r: float) -> float:
    if r <= 0:
        raise OracleError("radius must be positive")
    return math.pi * r * r


def cusp_area_oracle(r: float) -> float:
    """Area of the doubled cusp region {0 <= t <= r, 0 <= y <= t^3/3}."""
    if not 0 < r < 1:
        raise OracleError("need 0 < r < 1")
    return r**4 / 6


def corpus_path() -> Path:
    return Path(str(resources.files("zerocap") / "data" / "oracle_corpus.json"))


def load_corpus(path=None) -> list[TinyGraphCase]:
    path = corpus_path() if path is None else Path(path)
    raw = json.loads(path.read_text())
    return [TinyGraphCase(**c) for c in raw["cases"]]


def save_corpus(cases: list[TinyGraphCase], path) -> None:
    Path(path).write_text(json.dumps({"cases": [c.record() for c in cases]}, indent=1) + "\n")


@dataclass
class OracleCheck:
    name: str
    expected: float
    value: float
    rel_err: float
    ok: bool


def check_corpus(solve, cases=None, rtol: float = 1e-6) -> list[OracleCheck]:
    """Compare ``solve(case) -> value`` against the frozen corpus values."""
    cases = load_corpus() if cases is None else cases
    out = []
    for c in cases:
        ref = c.expected if c.expected is not None else brute_force_modulus(c)
        val = float(solve(c))
        err = abs(val - ref) / max(abs(ref), 1e-300)
        out.append(OracleCheck(c.name, ref, val, err, err <= rtol))
    return out
