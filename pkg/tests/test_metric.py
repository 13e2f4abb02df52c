import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from zerocap.experiments import flat_disk_check, metric_axioms, product, surface
from zerocap.geometry import BASE_TOP, extract_continuum_E
from zerocap.metric import (
    DualityConstants,
    ahlfors_scan,
    ball_measure,
    distance,
    llc_check,
    llc_samples,
    metric_ball,
    relative_distance,
    shortest_path,
    stratified_ball_samples,
    unit_ball_volume,
)


def test_distance_basics(small_product):
    X = small_product
    v = int(X.base.cusp)
    a, b = X.index(v, 2), X.index(v, 4)
    assert distance(X, a, a) == 0
    assert distance(X, a, b) == pytest.approx(2 * X.h_z, abs=1e-15)
    path = shortest_path(X, a, b)
    assert path[0] == a and path[-1] == b


def test_cusp_to_half_runs_along_boundary():
    Y = surface(3, 1 / 64)
    v = np.flatnonzero((Y.chart_kind == BASE_TOP) & (np.abs(Y.xy[:, 0] - 0.5) < 1e-12) & (Y.xy[:, 1] == 0))
    d = distance(Y, int(Y.cusp), int(v[0]))
    assert 0.5 - 1e-12 <= d <= 0.5 + 1 / 64


def test_metric_axioms(small_surface, rng):
    ax = metric_axioms(small_surface, 1000, rng, pool=16)
    assert ax["triangle_excess"] <= 1e-12
    assert ax["asymmetry"] <= 1e-12
    assert ax["self_distance"] == 0


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10**6), r1=st.floats(0.01, 1.0), r2=st.floats(0.01, 1.0))
def test_ball_monotone(seed, r1, r2, small_surface):
    Y = small_surface
    x = int(np.random.default_rng(seed).integers(Y.n_vertices))
    lo, hi = sorted((r1, r2))
    b1, b2 = metric_ball(Y, x, lo), metric_ball(Y, x, hi)
    assert set(b1.vertices.tolist()) <= set(b2.vertices.tolist())
    m1, m2 = ball_measure(Y, x, lo), ball_measure(Y, x, hi)
    assert m1.inner <= m2.inner + 1e-15 and m1.lumped <= m2.lumped + 1e-15
    assert m1.inner <= m1.outer


def test_tiny_ball_is_center(small_surface):
    b = metric_ball(small_surface, 3, 1e-6)
    assert b.vertices.tolist() == [3]


def test_flat_disk_oracle():
    for row in flat_disk_check(surface(1, 1 / 128)):
        assert row["ratio"] == pytest.approx(1.0, abs=0.03)


def test_ahlfors_scan_small(rng):
    Y = surface(3, 1 / 32)
    S = stratified_ball_samples(Y, 40, rng)
    A = ahlfors_scan(Y, 2, [(x, r) for x, r, _ in S], [s for *_, s in S])
    assert A.min_ratio > 0
    assert 1 / 4096 <= A.min_ratio and A.max_ratio <= 280
    assert len(A.stats) == 40


def test_llc_small(small_product, rng):
    X = small_product
    for x, r, y, z in llc_samples(X, 20, rng):
        w = llc_check(X, x, r, y, z)
        assert w.ok
        assert w.path[0] == z and w.path[-1] == y
        d = X.product_distances(x)
        assert w.clearance == pytest.approx(d[w.path].min())


def test_llc_rejects_inside_endpoints(small_product):
    X = small_product
    x = int(X.index(X.base.cusp, X.n_layers // 2))
    with pytest.raises(ValueError):
        llc_check(X, x, 1.0, x, x)


def test_relative_distance(small_product):
    X = small_product
    E = extract_continuum_E(X).vertices
    far = X.index(np.arange(X.base.n_vertices), X.n_layers - 1)
    rd = relative_distance(X, E, far)
    assert rd.diam_E == pytest.approx(2.0)
    assert rd.delta == pytest.approx(rd.dist / min(rd.diam_E, rd.diam_F))
    with pytest.raises(ValueError):
        relative_distance(X, E[:1], far)


def test_duality_constants():
    assert unit_ball_volume(1) == pytest.approx(2)
    assert unit_ball_volume(2) == pytest.approx(math.pi)
    assert unit_ball_volume(3) == pytest.approx(4 * math.pi / 3)
    assert DualityConstants(3).bound == pytest.approx(8 / 3)
    assert DualityConstants(2).bound == pytest.approx(math.pi)
