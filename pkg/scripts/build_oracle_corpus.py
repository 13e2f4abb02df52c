"""Regenerate the frozen oracle corpus (src/zerocap/data/oracle_corpus.json).

Expected values come from brute_force_modulus except where a closed form is
known; those are checked against the brute force before being written.
"""
import itertools
import sys

import numpy as np

from zerocap.oracles import TinyGraphCase, brute_force_modulus, corpus_path, save_corpus


def path_case(n, p):
    mu = [0.5] + [1.0] * (n - 1) + [0.5]
    return TinyGraphCase(f"path{n}_p{p:g}", n + 1, [[i, i + 1, 1.0] for i in range(n)], mu, [0], [n], p,
                         1.0 / n if p == 2 else None, "single path, dual-cell measure")


def parallel_case(k, n, p):
    edges, mu, E, F = [], [], [], []
    for j in range(k):
        base = j * (n + 1)
        edges += [[base + i, base + i + 1, 1.0] for i in range(n)]
        mu += [0.5] + [1.0] * (n - 1) + [0.5]
        E.append(base)
        F.append(base + n)
    return TinyGraphCase(f"parallel{k}x{n}_p{p:g}", k * (n + 1), edges, mu, E, F, p,
                         k / n if p == 2 else None, "vertex-disjoint parallel paths")


def grid_case(mx, my, p):
    h = 1.0 / (mx - 1)
    idx = lambda i, j: i * my + j
    edges = []
    for i, j in itertools.product(range(mx), range(my)):
        if i + 1 < mx:
            edges.append([idx(i, j), idx(i + 1, j), h])
        if j + 1 < my:
            edges.append([idx(i, j), idx(i, j + 1), h])
    cell = lambda i, m: h / 2 if i in (0, m - 1) else h
    mu = [cell(i, mx) * cell(j, my) for i, j in itertools.product(range(mx), range(my))]
    E = [idx(0, j) for j in range(my)]
    F = [idx(mx - 1, j) for j in range(my)]
    ratio = (my - 1) / (mx - 1)
    return TinyGraphCase(f"grid{mx}x{my}_p{p:g}", mx * my, edges, mu, E, F, p, ratio if p == 2 else None,
                         "rectangle, left-right family")


def random_case(seed, n, density, p):
    rng = np.random.default_rng(seed)
    while True:
        edges = [[i, i + 1, float(rng.uniform(0.5, 2.0))] for i in range(n - 1)]
        for a, b in itertools.combinations(range(n), 2):
            if b > a + 1 and rng.random() < density:
                edges.append([a, b, float(rng.uniform(0.5, 2.0))])
        mu = [float(x) for x in rng.uniform(0.2, 2.0, n)]
        try:
            return TinyGraphCase(f"random{seed}_n{n}_p{p:g}", n, edges, mu, [0], [n - 1], p, None,
                                 "seeded random connected graph")
        except Exception:
            density *= 0.8


def main():
    cases = [
        path_case(4, 2), path_case(7, 2), path_case(5, 3),
        parallel_case(2, 2, 2), parallel_case(3, 3, 2), parallel_case(2, 4, 1.5),
        TinyGraphCase("triangle_p3", 3, [[0, 1, 1.0], [1, 2, 1.0], [0, 2, 1.0]], [1.0, 1.0, 1.0], [0], [1, 2], 3,
                      None, "vertex to opposite edge"),
        TinyGraphCase("diamond_p2", 4, [[0, 1, 1.0], [0, 2, 2.0], [1, 3, 1.5], [2, 3, 0.5], [1, 2, 1.0]],
                      [0.5, 1.0, 2.0, 0.5], [0], [3], 2, None, "diamond with a chord"),
        TinyGraphCase("k4_p2.5", 4, [[a, b, 1.0 + 0.25 * (a + b)] for a, b in itertools.combinations(range(4), 2)],
                      [1.0, 0.5, 0.75, 1.25], [0], [3], 2.5, None, "complete graph"),
        grid_case(3, 3, 2), grid_case(3, 3, 3), grid_case(4, 3, 2),
        random_case(1, 8, 0.3, 2), random_case(2, 10, 0.25, 3), random_case(3, 12, 0.2, 1.5),
        random_case(4, 9, 0.35, 4), random_case(5, 11, 0.2, 2),
    ]
    for c in cases:
        value = brute_force_modulus(c)
        if c.expected is not None and abs(value - c.expected) > 1e-8 * c.expected:
            sys.exit(f"{c.name}: closed form {c.expected} but brute force {value}")
        if c.expected is None:
            c.expected = value
        print(f"{c.name:24s} paths={len(c.paths):6d} value={c.expected:.12g}")
    save_corpus(cases, sys.argv[1] if len(sys.argv) > 1 else corpus_path())


if __name__ == "__main__":
    main()
