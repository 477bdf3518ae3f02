import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from distdiff import eikonal, models
from distdiff.errors import InvalidRequestError, NearCutLocusWarning


def flat_dist(a, b):
    d = np.abs(np.asarray(a) - np.asarray(b)) % 1.0
    d = np.minimum(d, 1 - d)
    return float(np.hypot(*d))


@pytest.fixture(scope="module")
def flat_origin(flat128):
    return eikonal.solve_distance_field(flat128, [0.0, 0.0])


@pytest.fixture(scope="module")
def conformal_fields(conformal128):
    rng = np.random.default_rng(7)
    src = rng.random((20, 2))
    return src, eikonal.solve_many(conformal128, list(src), jobs=4)


def test_flat_pythagorean(flat_origin, flat128):
    assert flat_origin([0.3, 0.4]) == pytest.approx(0.5, abs=flat128.h)


def test_flat_wraps(flat_origin, flat128):
    assert flat_origin([0.8, 0.0]) == pytest.approx(0.2, abs=flat128.h)


def test_values_nonnegative_zero_only_at_source(flat_origin):
    v = flat_origin.values
    assert v.min() >= 0
    assert v[0, 0] == 0
    assert np.count_nonzero(v == 0) == 1


def test_dijkstra_axis_exact(flat128):
    d = eikonal.dijkstra_distance(flat128, [0.0, 0.0])
    assert d.values[40, 0] == pytest.approx(40 / 128, abs=1e-12)
    assert d.values[0, 23] == pytest.approx(23 / 128, abs=1e-12)


def test_dijkstra_knight_direction_exact(flat128):
    d = eikonal.dijkstra_distance(flat128, [0.0, 0.0])
    assert d.values[40, 20] == pytest.approx(math.hypot(40, 20) / 128, abs=1e-12)
    assert d.values[10, 20] == pytest.approx(math.hypot(10, 20) / 128, abs=1e-12)


def test_dijkstra_generic_bias(flat128, rng):
    d = eikonal.dijkstra_distance(flat128, [0.0, 0.0])
    ij = rng.integers(0, 128, size=(200, 2))
    exact = np.array([flat_dist(flat128.vertex_coords(tuple(k)), [0, 0]) for k in ij])
    got = d.values[ij[:, 0], ij[:, 1]]
    ratio = got[exact > 0] / exact[exact > 0]
    assert np.all(ratio >= 1 - 1e-12)
    assert np.all(ratio <= 1 + eikonal.DIJKSTRA_BIAS + 1e-12)


def test_vertex_query_is_stored_value(flat_origin, flat128):
    assert flat_origin(flat128.vertex_coords((17, 93))) == flat_origin.values[17, 93]


def test_source_query_zero(flat128):
    fld = eikonal.solve_distance_field(flat128, [0.4321, 0.1234])
    assert fld([0.4321, 0.1234]) <= flat128.h


def test_cell_centre_query(flat_origin, flat128, rng):
    h = flat128.h
    for _ in range(20):
        p = (rng.integers(5, 60, size=2) + 0.5) * h
        assert abs(flat_origin(p) - flat_dist(p, [0, 0])) <= h


def test_gradient_examples(flat_origin):
    assert np.allclose(eikonal.gradient_at(flat_origin, [0.3, 0.0]), [1, 0], atol=1e-6)
    assert np.allclose(eikonal.gradient_at(flat_origin, [0.0, 0.3]), [0, 1], atol=1e-6)


def test_gradient_warns_on_cut_locus(flat_origin):
    with pytest.warns(NearCutLocusWarning):
        eikonal.gradient_at(flat_origin, [0.5, 0.2])


def test_conformal_gradient_norm(conformal_fields, conformal128):
    h = conformal128.h
    src, fields = conformal_fields
    fld = fields[0]
    # ten points at moderate distance, away from the cut locus
    checked = 0
    for t in np.linspace(0, 2 * math.pi, 10, endpoint=False):
        p = src[0] + 0.15 * np.array([math.cos(t), math.sin(t)])
        assert 1 - 5 * h <= eikonal.gradient_norm(fld, p) <= 1 + 5 * h
        checked += 1
    assert checked == 10


def test_oracle_agreement(conformal_fields, conformal128, rng):
    h = conformal128.h
    src, fields = conformal_fields
    graph = eikonal.grid_graph(conformal128)
    worst = 0.0
    for k in range(5):
        z = conformal128.vertex_coords(conformal128.nearest_vertex(src[k]))
        fmm = eikonal.solve_distance_field(conformal128, z).values.ravel()
        ref = eikonal.dijkstra_distance(conformal128, z, graph=graph).values.ravel()
        pick = rng.choice(fmm.size, 20, replace=False)
        # the graph bias applies to the path length, not as an additive constant
        err = np.abs(fmm[pick] - ref[pick]) - eikonal.DIJKSTRA_BIAS * ref[pick]
        worst = max(worst, float(err.max()))
    assert worst <= 2 * h


def test_eps_solver_small(conformal128):
    eps = eikonal.estimate_eps_solver(conformal128, [[0.2, 0.3], [0.7, 0.6]], fraction=0.02)
    assert 0 < eps < 0.01


def test_symmetry(conformal_fields):
    src, fields = conformal_fields
    eps = 0.005
    worst = 0.0
    for a in range(len(src)):
        for b in range(a + 1, len(src)):
            worst = max(worst, abs(float(fields[a](src[b])) - float(fields[b](src[a]))))
    assert worst <= 2 * eps


@settings(max_examples=25)
@given(st.integers(0, 19), st.integers(0, 19), st.integers(0, 19))
def test_triangle_inequality(conformal_fields, a, b, c):
    src, fields = conformal_fields
    eps = 0.005
    d = lambda i, j: float(fields[i](src[j]))
    assert d(a, c) <= d(a, b) + d(b, c) + 3 * eps


def test_restricted_field_stays_inside(disc128):
    mask = disc128.region != 0
    z = disc128.vertex_coords(np.argwhere(mask)[0])
    fld = eikonal.solve_distance_field(disc128, z, restrict=mask)
    assert np.all(np.isinf(fld.values[~mask]))
    assert np.all(np.isfinite(fld.values[mask]))


def test_multi_source(flat128):
    mask = np.zeros(flat128.shape, bool)
    mask[0, :] = True
    fld = eikonal.solve_distance_field(flat128, mask)
    assert fld.values[32, 5] == pytest.approx(0.25, abs=flat128.h)


def test_bad_source_rejected(flat128):
    with pytest.raises(InvalidRequestError):
        eikonal.solve_distance_field(flat128, [np.nan, 0.0])
    with pytest.raises(InvalidRequestError):
        eikonal.solve_distance_field(flat128, np.zeros(flat128.shape, bool))


def test_field_dump_round_trip(tmp_path, flat_origin, flat128):
    eikonal.save_field(flat_origin, tmp_path / "f.bin", eps_solver=0.001)
    back = eikonal.load_field(flat128, tmp_path / "f.bin")
    assert np.array_equal(back.values, flat_origin.values)
    assert back.meta["eps_solver"] == 0.001
    assert (tmp_path / "f.bin").stat().st_size == 128 * 128 * 8


def test_gradient_quiet_away_from_cut(flat_origin):
    with warnings.catch_warnings():
        warnings.simplefilter("error", NearCutLocusWarning)
        eikonal.gradient_at(flat_origin, [0.2, 0.1])
