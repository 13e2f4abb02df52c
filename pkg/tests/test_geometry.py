from fractions import Fraction

import numpy as np
import pytest
from scipy.sparse.csgraph import connected_components

from zerocap.geometry import (
    PILLOW,
    ConfigurationError,
    DyadicSlit,
    GridMesh,
    build_base_chart,
    build_pillowcase,
    build_product,
    cusp_profile,
    enumerate_slits,
    export_off,
    extract_continuum_E,
    glue_surface,
    pillowcase_tail_area,
    quotient_collapse,
)
from zerocap.experiments import surface, surface_structure
from zerocap.oracles import cusp_area_oracle

TEST_MATRIX = [(0, 1 / 8), (1, 1 / 8), (1, 1 / 16), (2, 1 / 8), (2, 1 / 32), (3, 1 / 16), (4, 1 / 32), (5, 1 / 64)]


def test_cusp_profile_values():
    assert cusp_profile(0.0) == 0.0
    assert cusp_profile(0.5) == pytest.approx(1 / 24, abs=1e-15)
    assert cusp_profile(0.75) == 0.140625
    with pytest.raises(ValueError):
        cusp_profile(1.0)
    with pytest.raises(ValueError):
        cusp_profile(-0.1)


def test_slit_enumeration():
    s1 = enumerate_slits(1)
    assert [(s.m, s.i) for s in s1] == [(1, 1)]
    assert s1[0].t == 0.5 and s1[0].len_exact == Fraction(1, 24)
    s2 = enumerate_slits(2)
    assert [(s.m, s.i) for s in s2] == [(1, 1), (2, 1), (2, 3)]
    assert s2[1].len_exact == Fraction(1, 192)
    assert s2[2].len == 0.140625
    for M in range(1, 7):
        sl = enumerate_slits(M)
        for m in range(1, M + 1):
            assert sum(s.m == m for s in sl) == 2 ** (m - 1)
        for s in sl:
            assert s.len_exact == min(Fraction(1, 2**s.m), Fraction(s.i, 2**s.m) ** 3 / 3)


def test_tail_area_series():
    for m in range(1, 12):
        direct = sum(2 ** (n - 1) * 2 / 4**n for n in range(m, 80))
        assert pillowcase_tail_area(m) == pytest.approx(direct, rel=1e-14)
        # the closed form stays inside the (4/3) 2^-(m-1) truncation budget
        assert pillowcase_tail_area(m) <= 4 / 3 * 2.0 ** -(m - 1)


def test_resolution_errors():
    with pytest.raises(ConfigurationError):
        glue_surface(3, 1 / 8)
    with pytest.raises(ConfigurationError):
        glue_surface(1, 0.3)
    with pytest.raises(ConfigurationError):
        build_product(surface(1, 1 / 4), 1.0)


def test_base_chart_marks_slit():
    chart = build_base_chart(1, 1 / 8)
    (slit, ids), = chart.slits.items()
    pts = chart.vertices[ids]
    assert np.allclose(pts[:, 0], 0.5)
    assert pts[:, 1].min() == 0 and pts[:, 1].max() == pytest.approx(1 / 24)
    assert chart.euler_characteristic() == 1


def test_base_area_converges():
    for h in (1 / 32, 1 / 64, 1 / 128):
        area = build_base_chart(0, h).area
        assert abs(area - (1 - h) ** 4 / 12) <= h**2


def test_pillowcase_chart():
    s = DyadicSlit(1, 1)
    pc = build_pillowcase(s, 1 / 8)
    assert pc.area == 0.5
    assert pc.euler_characteristic() == 2
    assert build_pillowcase(DyadicSlit(2, 3), 1 / 16).area == 2 / 16


@pytest.mark.parametrize("M,h", TEST_MATRIX)
def test_disk_topology(M, h):
    Y = glue_surface(M, h)
    assert Y.euler_characteristic() == 1
    assert Y.boundary_cycles() == 1
    assert connected_components(Y.graph, directed=False)[0] == 1


@pytest.mark.parametrize("M,h", TEST_MATRIX)
def test_gluing_additivity(M, h):
    s = surface_structure(glue_surface(M, h))
    assert s["additivity_error"] <= 1e-15
    pillows = sum(2 * 4.0**-sl.m for sl in enumerate_slits(M))
    assert s["pillowcase_area"] == pytest.approx(pillows, rel=1e-14)


def test_unpillowed_surface_is_doubled_cusp():
    Y = glue_surface(0, 1 / 64)
    assert Y.area == pytest.approx(2 * (1 - 1 / 64) ** 4 / 12, abs=1e-4)


def test_cusp_area_oracle_against_mesh():
    Y = glue_surface(1, 1 / 256)
    base = Y.triangle_kind != PILLOW
    t = Y.triangle_xy[:, :, 0].max(axis=1)
    for r in (0.5, 0.75):
        mesh = Y.triangle_area[base & (t <= r + 1e-12)].sum()
        assert mesh == pytest.approx(cusp_area_oracle(r), rel=0.05)


def test_slit_gluing_by_arc_length(small_surface):
    Y = small_surface
    for rec in Y.slit_table:
        s = rec["slit"]
        left, right = np.asarray(rec["left"]), np.asarray(rec["right"])
        assert len(left) == len(right)
        # both sides run from the common endpoint at y = 0 outwards
        d = Y.distances_from(int(left[0]))
        assert np.all(np.diff(d[left]) > 0)
        assert d[left[-1]] == pytest.approx(s.len, abs=1e-12)


def test_product_layers_and_measure(small_product):
    X = small_product
    Y = X.base
    assert X.n_layers == int(np.floor((4 - 2 * X.h_z) / X.h_z + 1e-9)) + 1
    assert X.total_measure == pytest.approx(Y.total_measure * X.n_layers * X.h_z)
    rng = np.random.default_rng(3)
    for _ in range(20):
        B = rng.choice(Y.n_vertices, size=rng.integers(1, Y.n_vertices), replace=False)
        lo = rng.integers(0, X.n_layers - 1)
        I = np.arange(lo, rng.integers(lo + 1, X.n_layers + 1))
        assert X.product_measure(B, I) == pytest.approx(Y.vertex_area[B].sum() * len(I) * X.h_z, rel=1e-13)
    v = int(Y.cusp)
    d = X.product_distances(X.index(v, 0))
    assert d[X.index(v, 4)] == pytest.approx(4 * X.h_z, abs=1e-15)


def test_continuum_E():
    X = build_product(surface(1, 1 / 4), 0.5)
    E = extract_continuum_E(X)
    assert np.allclose(X.z[E.layers], [-1, -0.5, 0, 0.5, 1])
    assert len(E.vertices) == 5
    d = X.product_distances(int(E.vertices[0]))
    assert d[E.vertices].max() == 2.0


def test_quotient_collapse(small_product):
    X = small_product
    E = extract_continuum_E(X)
    Q = quotient_collapse(X, E)
    assert Q.n_vertices == X.n_vertices - (len(E.vertices) - 1)
    assert Q.measure[Q.point] == pytest.approx(X.measure[E.vertices].sum(), rel=1e-15)
    assert connected_components(Q.graph, directed=False)[0] == 1
    assert Q.total_measure == pytest.approx(X.total_measure, rel=1e-14)
    # far from E, distances are unchanged when no geodesic runs near E
    far = np.flatnonzero(np.abs(X.z[X.split(np.arange(X.n_vertices))[1]]) > 1.7)
    rng = np.random.default_rng(0)
    for a in rng.choice(far, 5, replace=False):
        da = X.distances_from(int(a))
        dq = Q.distances_from(int(Q.vertex_map[a]))
        mask = far[da[far] < 0.5]
        assert np.allclose(da[mask], dq[Q.vertex_map[mask]])


def test_grid_mesh():
    G = GridMesh(1 / 4)
    assert G.total_measure == pytest.approx(1.0)
    assert len(G.face(0, 0.0)) == 5
    G3 = GridMesh(1 / 2, dim=3)
    assert G3.total_measure == pytest.approx(1.0)


def test_export_off(tmp_path, small_surface):
    path = tmp_path / "y.off"
    export_off(small_surface, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "OFF"
    nv, nf, ne = map(int, lines[2].split())
    assert (nv, nf) == (small_surface.n_vertices, len(small_surface.triangles))
    assert lines[3].split("#")[1].strip() in ("base-top", "base-bottom") or "pillowcase" in lines[3]
