import json
import math

import pytest

from zerocap.modulus import CurveFamilySpec, solve_modulus
from zerocap.oracles import (
    MAX_VERTICES,
    OracleError,
    TinyGraphCase,
    brute_force_modulus,
    check_corpus,
    corpus_path,
    cusp_area_oracle,
    flat_patch_oracle,
    load_corpus,
    save_corpus,
)


def path_case(n, p=2.0):
    mu = [0.5] + [1.0] * (n - 1) + [0.5]
    return TinyGraphCase("p", n + 1, [[i, i + 1, 1.0] for i in range(n)], mu, [0], [n], p)


@pytest.mark.parametrize("n", [1, 2, 3, 6])
def test_single_path_is_one_over_n(n):
    assert brute_force_modulus(path_case(n)) == pytest.approx(1 / n, rel=1e-9)


def test_two_parallel_paths():
    edges = [[0, 1, 1.0], [1, 2, 1.0], [3, 4, 1.0], [4, 5, 1.0]]
    mu = [0.5, 1.0, 0.5] * 2
    case = TinyGraphCase("pp", 6, edges, mu, [0, 3], [2, 5], 2.0)
    assert brute_force_modulus(case) == pytest.approx(1.0, rel=1e-9)


def test_triangle_p3_frozen():
    case = {c.name: c for c in load_corpus()}["triangle_p3"]
    assert brute_force_modulus(case) == pytest.approx(case.expected, rel=1e-9)


def test_case_validation():
    with pytest.raises(OracleError):
        TinyGraphCase("big", MAX_VERTICES + 1, [], [1.0] * (MAX_VERTICES + 1), [0], [1], 2.0)
    with pytest.raises(OracleError):
        TinyGraphCase("overlap", 2, [[0, 1, 1.0]], [1.0, 1.0], [0], [0, 1], 2.0)
    with pytest.raises(OracleError):
        TinyGraphCase("neg", 2, [[0, 1, -1.0]], [1.0, 1.0], [0], [1], 2.0)
    with pytest.raises(OracleError):
        brute_force_modulus(path_case(2), 1.0)


def test_disconnected_case_is_zero():
    case = TinyGraphCase("cut", 3, [[0, 1, 1.0]], [1.0, 1.0, 1.0], [0], [2], 2.0)
    assert brute_force_modulus(case) == 0.0


def test_closed_form_areas():
    assert flat_patch_oracle(1.0) == math.pi
    assert flat_patch_oracle(0.5) == pytest.approx(math.pi / 4)
    assert cusp_area_oracle(0.5) == pytest.approx(0.0104166666666, rel=1e-9)
    assert cusp_area_oracle(0.999999) == pytest.approx(1 / 6, rel=1e-5)
    with pytest.raises(OracleError):
        flat_patch_oracle(0.0)
    with pytest.raises(OracleError):
        cusp_area_oracle(1.0)


def test_corpus_is_packaged_and_complete():
    raw = json.loads(corpus_path().read_text())
    cases = load_corpus()
    assert len(cases) == len(raw["cases"]) >= 15
    assert all(c.n <= MAX_VERTICES and c.expected is not None for c in cases)
    assert {c.p for c in cases} >= {1.5, 2, 2.5, 3, 4}


def test_corpus_roundtrip(tmp_path):
    cases = load_corpus()[:3]
    save_corpus(cases, tmp_path / "c.json")
    again = load_corpus(tmp_path / "c.json")
    assert [c.record() for c in again] == [c.record() for c in cases]


def test_corpus_values_reproduce():
    for c in load_corpus():
        assert brute_force_modulus(c) == pytest.approx(c.expected, rel=1e-9), c.name


def test_solver_against_corpus():
    checks = check_corpus(lambda c: solve_modulus(c.to_mesh(), CurveFamilySpec.connect(c.E, c.F), c.p, 1e-9).value)
    bad = [c for c in checks if not c.ok]
    assert not bad, bad
