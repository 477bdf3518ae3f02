import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from distdiff import eikonal, models
from distdiff.errors import CorruptModelError, DegenerateMetricError, InvalidRequestError
from distdiff.manifold import (
    ManifoldModel,
    boundary_cut_time,
    christoffel_at,
    cut_time,
    inward_normal,
    load_model,
    metric_at,
    region_from_mask,
    reparametrize_pregeodesic,
    save_model,
    trace_geodesic,
    unit_direction,
    wrap_point,
)

unit = st.floats(0.0, 1.0, allow_nan=False, exclude_max=True)


def test_flat_metric_is_identity(flat128):
    assert np.array_equal(metric_at(flat128, [0.123, 0.987]), np.eye(2))


def test_conformal_vertex_value():
    n = 16
    g = np.tile(np.eye(2), (n, n, 1, 1))
    g[3, 5] *= math.exp(0.6)
    m = ManifoldModel(models.TORUS, g, region_from_mask(np.zeros((n, n), bool)), 1 / n)
    assert np.allclose(metric_at(m, m.vertex_coords((3, 5))), math.exp(0.6) * np.eye(2), atol=0, rtol=1e-15)


def test_bilinear_midpoint():
    n = 8
    g = np.tile(np.eye(2), (n, n, 1, 1))
    g[1, 0] *= 2
    g[1, 1] *= 2
    m = ManifoldModel(models.TORUS, g, region_from_mask(np.zeros((n, n), bool)), 1 / n)
    assert np.allclose(metric_at(m, m.vertex_coords((0.5, 0.5))), 1.5 * np.eye(2))


@given(unit, unit)
def test_metric_spd_everywhere(x, y):
    m = models.conformal_torus(32)
    assert np.all(np.linalg.eigvalsh(metric_at(m, [x, y])) > 0)


def test_flat_christoffel_zero(flat128):
    assert np.max(np.abs(flat128.christoffel_grid)) == 0.0


def test_conformal_christoffel_closed_form(conformal128):
    u = conformal128.meta["conformal_field"]
    p = conformal128.vertex_coords((40, 77))
    du = u.gradient(p)
    gam = christoffel_at(conformal128, p)
    expected = {(0, 0, 0): du[0], (0, 1, 1): -du[0], (0, 0, 1): du[1],
                (1, 1, 1): du[1], (1, 0, 0): -du[1], (1, 0, 1): du[0]}
    h = conformal128.h
    for (k, i, j), v in expected.items():
        # central differences of exp(2u) are second order
        assert gam[k, i, j] == pytest.approx(v, abs=100 * h ** 2)


def test_christoffel_second_order():
    errs = []
    for n in (64, 128):
        m = models.conformal_torus(n)
        u = m.meta["conformal_field"]
        p = m.vertex_coords((n // 4, n // 3))
        errs.append(abs(christoffel_at(m, p)[0, 0, 0] - u.gradient(p)[0]))
    assert errs[1] < errs[0] / 3


def test_validate_rejects_bad_metrics():
    n = 8
    g = np.tile(np.eye(2), (n, n, 1, 1))
    g[2, 2, 0, 0] = np.nan
    region = region_from_mask(np.zeros((n, n), bool))
    with pytest.raises(CorruptModelError):
        ManifoldModel(models.TORUS, g, region, 1 / n).validate()
    g = np.tile(np.eye(2), (n, n, 1, 1))
    g[2, 2] = [[1, 2], [2, 1]]
    with pytest.raises(DegenerateMetricError):
        ManifoldModel(models.TORUS, g, region, 1 / n).validate()


def test_flat_geodesic_is_segment(flat128):
    c = trace_geodesic(flat128, [0.1, 0.1], [1.0, 0.0], 0.5)
    assert np.allclose(c.end, [0.6, 0.1], atol=1e-12)
    assert np.allclose(c.points[:, 1], 0.1)


def test_flat_geodesic_wraps(flat128):
    c = trace_geodesic(flat128, [0.1, 0.1], [1.0, 0.0], 1.3)
    assert np.allclose(wrap_point(flat128, c.end), [0.4, 0.1], atol=1e-12)


def test_geodesic_needs_unit_speed(flat128):
    with pytest.raises(InvalidRequestError):
        trace_geodesic(flat128, [0.1, 0.1], [2.0, 0.0], 0.5)


def test_geodesic_richardson(conformal128):
    x = np.array([0.3, 0.2])
    v = unit_direction(conformal128, x, [0.6, 0.8])
    h = conformal128.h
    a = trace_geodesic(conformal128, x, v, 0.6, step=h / 2).end
    b = trace_geodesic(conformal128, x, v, 0.6, step=h / 4).end
    c = trace_geodesic(conformal128, x, v, 0.6, step=h / 8).end
    # RK4: halving the step cuts the error by about 16
    assert np.linalg.norm(b - c) < np.linalg.norm(a - b) / 8
    assert np.linalg.norm(a - b) < 1e-8


@given(st.floats(0, 2 * math.pi))
def test_speed_preserved(angle):
    m = models.conformal_torus(64)
    x = np.array([0.37, 0.61])
    v = unit_direction(m, x, [math.cos(angle), math.sin(angle)])
    curve = trace_geodesic(m, x, v, 2 * m.diameter_bound() / 4)
    assert curve.speed_drift() < 1e-6


def test_reparametrize_identity():
    s = np.linspace(0, 1, 101)
    pts = np.column_stack([s, 0 * s])
    c = reparametrize_pregeodesic(s, pts, 0.0)
    assert np.allclose(c.t, s)


def test_reparametrize_constant_kappa():
    s = np.linspace(0, 1, 401)
    c = 0.7
    pts = np.column_stack([s, 0 * s])
    out = reparametrize_pregeodesic(s, pts, c)
    assert out.t[-1] == pytest.approx((math.exp(c) - 1) / c, rel=1e-5)


def test_reparametrize_cubic_line():
    s = np.linspace(0, 1, 801)
    pts = np.column_stack([s ** 3 + s, 0 * s])
    curve = reparametrize_pregeodesic(s, pts, lambda q: 6 * q / (3 * q * q + 1))
    speed = np.linalg.norm(curve.velocities, axis=1)
    assert np.max(np.abs(speed / speed[0] - 1)) < 1e-4
    # affine: equally spaced t gives equally spaced points
    gaps = np.diff(curve.points[:, 0])
    assert np.max(np.abs(gaps / gaps.mean() - 1)) < 1e-4


def test_cut_time_flat_axes(flat128):
    x = np.array([0.25, 0.5])
    fld = eikonal.solve_distance_field(flat128, x)
    for v in ([1, 0], [0, 1], [-1, 0]):
        tau = cut_time(flat128, None, x, np.array(v, float), t_max=1.0, field=fld)
        assert tau == pytest.approx(0.5, abs=2 * flat128.h)


def test_cut_time_flat_diagonal(flat128):
    x = np.array([0.25, 0.5])
    v = np.array([1.0, 1.0]) / math.sqrt(2)
    tau = cut_time(flat128, eikonal.solve_distance_field, x, v, t_max=1.2)
    assert tau == pytest.approx(math.sqrt(2) / 2, abs=2 * flat128.h)


def test_cut_time_sphere():
    m = models.sphere_band(128)
    x = m.vertex_coords((0, m.shape[1] // 2))
    tau = cut_time(m, eikonal.solve_distance_field, x, unit_direction(m, x, [1, 0]), t_max=0.8)
    assert abs(tau - models.sphere_cut_reference()) <= 2 * m.h


def test_boundary_cut_time_disc(disc128):
    z = disc128.vertex_coords(np.argwhere(disc128.boundary_mask)[0])
    r = np.linalg.norm(z - 0.5)
    tau_b = boundary_cut_time(disc128, eikonal.solve_distance_field, z, t_max=1.0)
    assert tau_b == pytest.approx(r, abs=3 * disc128.h)
    tau = cut_time(disc128, eikonal.solve_distance_field, z, inward_normal(disc128, z), t_max=1.0)
    assert tau > tau_b + disc128.h


def test_boundary_cut_time_annulus():
    base = models.flat_torus(128)
    m = base.with_region(models.annulus_mask(base, (0.5, 0.5), 0.1, 0.3))
    bfield = eikonal.solve_distance_field(m, m.boundary_mask)
    # brute-force oracle: Dijkstra from every boundary vertex at once
    oracle = eikonal.dijkstra_distance(m, m.boundary_mask)
    z = m.vertex_coords(np.argwhere(m.boundary_mask & (np.linalg.norm(m.grid_points - 0.5, axis=-1) > 0.2))[0])
    tau = boundary_cut_time(m, None, z, t_max=1.0, boundary_field=bfield)
    tau_oracle = boundary_cut_time(m, None, z, t_max=1.0, boundary_field=oracle)
    # the ring is 0.2 wide, so the normal geodesic stops minimising at the mid-circle
    assert tau == pytest.approx(0.1, abs=3 * m.h)
    assert abs(tau - tau_oracle) <= 3 * m.h


def test_boundary_cut_time_needs_boundary(disc128):
    with pytest.raises(InvalidRequestError):
        boundary_cut_time(disc128, eikonal.solve_distance_field, [0.5, 0.5])


def test_model_round_trip(tmp_path, conformal128):
    m = conformal128.with_region(models.disc_mask(conformal128))
    save_model(m, tmp_path / "m.json")
    back = load_model(tmp_path / "m.json")
    assert back.model_hash == m.model_hash


def test_load_model_rejects_garbage(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    with pytest.raises(CorruptModelError):
        load_model(p)
