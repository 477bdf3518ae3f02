import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from distdiff import ddf, models
from distdiff.errors import (
    DegenerateChartError,
    DegenerateMetricError,
    EmptySigmaWarning,
    IncompatibleDatasetError,
    InsufficientDataError,
    InvalidRequestError,
    NotProjectivelyRelatedError,
    RequiresInstrumentedError,
    UnderdeterminedError,
)
from distdiff.manifold import displacement, trace_geodesic
from distdiff.reconstruct import charts, embedding, pipeline, projective, reports, sigma


def unit(v):
    v = np.asarray(v, float)
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


# ---------------------------------------------------------------------------
# embedding and matching


def test_embedding_single_sample(disc_dataset, disc128):
    one = ddf.with_samples(disc_dataset, disc_dataset.rho[:1], disc_dataset.ground_truth[:1])
    rep = embedding.verify_embedding(one, disc128)
    assert rep["pairs"] == 0 and rep["max_ratio"] is None


def test_embedding_duplicate_excluded(disc_dataset, disc128):
    rho = np.vstack([disc_dataset.rho[:3], disc_dataset.rho[:1]])
    gt = np.vstack([disc_dataset.ground_truth[:3], disc_dataset.ground_truth[:1]])
    rep = embedding.verify_embedding(ddf.with_samples(disc_dataset, rho, gt), disc128)
    assert rep["pairs"] == 5


def test_embedding_lipschitz(disc_dataset, disc128):
    rep = embedding.verify_embedding(disc_dataset, disc128, jobs=4)
    assert rep["pairs"] == 300 * 299 // 2
    assert rep["violations"] == 0
    assert rep["max_ratio"] <= rep["bound"]
    assert rep["min_ratio"] > 0


def test_embedding_needs_ground_truth(disc_dataset, disc128):
    with pytest.raises(RequiresInstrumentedError):
        embedding.verify_embedding(disc_dataset.blind_view(), disc128)


def test_match_shuffled_copy(disc_dataset, rng):
    perm = rng.permutation(len(disc_dataset))
    other = ddf.with_samples(disc_dataset, disc_dataset.rho[perm], None)
    corr = embedding.match_datasets(disc_dataset.blind_view(), other, 1e-9)
    assert np.array_equal(corr.pairing, perm)
    assert np.all(corr.distortion == 0)
    assert corr.injective() and corr.max_residual == 0


def test_match_one_removed(disc_dataset):
    ds = disc_dataset.blind_view()
    other = ddf.with_samples(ds, np.delete(ds.rho, 17, axis=0), None)
    corr = embedding.match_datasets(ds, other, 1e-9)
    assert list(corr.unmatched_reference) == [17]
    expected = np.delete(np.arange(len(ds)), 17)
    assert np.array_equal(corr.pairing, expected)


@given(st.floats(0.1, 10))
def test_match_scale_invariant(disc_dataset, scale):
    ds = disc_dataset.blind_view()
    noisy = ds.rho[::3] + 1e-4 * np.sin(np.arange(ds.rho[::3].size)).reshape(ds.rho[::3].shape)
    base = embedding.match_datasets(ds, ddf.with_samples(ds, noisy, None), np.inf)
    scaled = embedding.match_datasets(ddf.with_samples(ds, scale * ds.rho, None),
                                      ddf.with_samples(ds, scale * noisy, None), np.inf)
    assert np.array_equal(base.pairing, scaled.pairing)
    assert np.allclose(scaled.distortion, scale * base.distortion)


def test_match_k_mismatch(disc_dataset):
    fs = ddf.FSampleSet(disc_dataset.fsamples.points[:5], disc_dataset.fsamples.boundary_flags[:5])
    other = ddf.DDFDataset(fs, disc_dataset.rho[:, :5], None, {})
    with pytest.raises(IncompatibleDatasetError):
        embedding.match_datasets(disc_dataset, other, 1.0)


# ---------------------------------------------------------------------------
# charts


@pytest.fixture(scope="module")
def flat_chart_data():
    """Flat torus, M a small disc clear of every cut locus of the F-samples."""
    model = models.flat_torus(128)
    model = model.with_region(models.disc_mask(model, (0.35, 0.3), 0.1))
    pts = np.array([[0.0, 0.0], [0.2, 0.0], [0.0, 0.2], [0.1, 0.05], [0.05, 0.12],
                    [0.15, 0.15], [0.12, 0.6], [0.62, 0.1], [0.7, 0.3], [0.3, 0.7], [0.62, 0.55]])
    fs = ddf.FSampleSet(pts, np.zeros(len(pts), bool))
    X = ddf.stratified_hidden_points(model, 600, seed=5)
    return model, ddf.generate_dataset(model, X, fs, seed=1, jobs=4)


def test_flat_chart_coordinates(flat_chart_data):
    model, ds = flat_chart_data
    c = int(np.argmin(np.linalg.norm(ds.ground_truth - [0.35, 0.3], axis=1)))
    chart = charts.build_chart(ds.blind_view(), c, 0, (1, 2))
    y = ds.ground_truth[c]
    zs = ds.fsamples.points
    expected = np.array([np.linalg.norm(y - zs[i]) - np.linalg.norm(y) for i in (1, 2)])
    assert np.allclose(chart.center_coords, expected, atol=0.005)
    assert np.array_equal(chart.center_coords, ds.rho[c, [1, 2]] - ds.rho[c, 0])
    assert chart.conditioning > 0 and chart.locally_injective()


def test_flat_chart_jacobian(flat_chart_data):
    model, ds = flat_chart_data
    c = int(np.argmin(np.linalg.norm(ds.ground_truth - [0.35, 0.3], axis=1)))
    chart = charts.build_chart(ds, c, 0, (1, 2), model=model, use_ground_truth=True)
    y = ds.ground_truth[c]
    zs = ds.fsamples.points
    rows = np.array([unit(y - zs[i]) - unit(y - zs[0]) for i in (1, 2)])
    assert np.allclose(chart.jacobian, rows, atol=0.05)


def test_chart_rejects_repeated_indices(flat_chart_data):
    _, ds = flat_chart_data
    with pytest.raises(DegenerateChartError):
        charts.build_chart(ds, 0, 0, (1, 1))
    with pytest.raises(DegenerateChartError):
        charts.build_chart(ds, 0, 1, (1, 2))
    with pytest.raises(InvalidRequestError):
        charts.build_chart(ds, 0, 0, (1, 2, 3))


def test_chart_rejects_centre_near_reference(disc128):
    fs = ddf.FSampleSet(np.array([[0.5, 0.5], [0.1, 0.1], [0.9, 0.2], [0.3, 0.9]]), np.zeros(4, bool))
    ds = ddf.generate_dataset(disc128, [[0.5, 0.51], [0.6, 0.6]], fs, eps_solver=0.0)
    near = int(np.argmin(np.linalg.norm(ds.ground_truth - 0.5, axis=1)))
    with pytest.raises(InvalidRequestError):
        charts.build_chart(ds, near, 0, (1, 2))


def test_metric_from_exact_covectors():
    y = np.array([0.4, 0.35])
    z = np.array([0.0, 0.0])
    ws = np.array([[0.2, 0.0], [0.0, 0.2], [0.1, 0.7], [0.8, 0.1], [0.7, 0.6], [0.3, 0.9]])
    q = unit(y - ws) - unit(y - z)
    est = charts.solve_metric(q)
    assert np.allclose(est.metric, np.eye(2), atol=1e-8)
    assert np.allclose(est.covector, unit(y - z), atol=1e-8)


def test_metric_needs_five_references(flat_chart_data):
    _, ds = flat_chart_data
    chart = charts.build_chart(ds, 0, 0, (1, 2), sigma_min=0.0)
    with pytest.raises(UnderdeterminedError):
        charts.recover_metric_in_chart(ds, chart, [3, 4])
    with pytest.raises(UnderdeterminedError):
        charts.solve_metric(np.zeros((2, 2)))


def test_metric_recovered_in_flat_chart(flat_chart_data):
    model, ds = flat_chart_data
    c = int(np.argmin(np.linalg.norm(ds.ground_truth - [0.35, 0.3], axis=1)))
    chart = charts.build_chart(ds, c, 0, (1, 2), model=model, use_ground_truth=True)
    est = charts.recover_metric_in_chart(ds, chart, range(3, 11))
    g = charts.metric_in_frame(est, chart)
    assert charts.relative_frobenius(g, np.eye(2)) < 0.05


def test_relative_frobenius():
    assert charts.relative_frobenius(np.eye(2) * 1.1, np.eye(2)) == pytest.approx(0.1)


# ---------------------------------------------------------------------------
# sigma-sets


@pytest.fixture(scope="module")
def flat_sigma_data():
    """Flat torus, M a disc; one gradient anchor at (0.15, 0.5) in F."""
    model = models.flat_torus(128)
    model = model.with_region(models.disc_mask(model, (0.5, 0.5), 0.3))
    fs = ddf.sample_F_points(model, 8, seed=0, anchor_points=[[0.15, 0.5]])
    X = ddf.stratified_hidden_points(model, 2500, seed=3)
    return model, ddf.generate_dataset(model, X, fs, seed=2, jobs=4)


def test_sigma_flat_direction(flat_sigma_data):
    model, ds = flat_sigma_data
    h = model.h
    z = ds.fsamples.points[ds.fsamples.stencils[0][0]]
    sig = sigma.extract_sigma_set(ds.blind_view(), 0, [-1.0, 0.0], np.eye(2))
    assert len(sig) >= 5
    rel = displacement(model, z, ds.ground_truth[sig.members])
    assert np.all(rel[:, 0] > 0)
    assert np.max(np.abs(rel[:, 1])) <= 3 * h
    assert np.max(np.linalg.norm(rel, axis=1)) <= 0.5 + h


def test_sigma_reversal(flat_sigma_data):
    model, ds = flat_sigma_data
    z = ds.fsamples.points[ds.fsamples.stencils[0][0]]
    sig = sigma.extract_sigma_set(ds.blind_view(), 0, [1.0, 0.0], np.eye(2))
    assert len(sig) >= 2
    rel = displacement(model, z, ds.ground_truth[sig.members])
    assert np.all(rel[:, 0] < 0)


def test_sigma_members_monotone(flat_sigma_data):
    _, ds = flat_sigma_data
    for s in sigma.sigma_sets_for_anchor(ds.blind_view(), 0, np.eye(2), 16):
        if len(s) >= 2:
            assert np.all(np.diff(s.order_values) < 0)


def test_sigma_members_form_a_curve(flat_sigma_data):
    model, ds = flat_sigma_data
    sig = sigma.extract_sigma_set(ds, 0, [-1.0, 0.0], np.eye(2))
    pts = ds.ground_truth[sig.members]
    # members scatter up to 3h across the line, so only chords well above that are meaningful
    assert sigma.chord_turning(model, pts, 12 * model.h) < 30


def test_sigma_empty_warns(flat_sigma_data):
    _, ds = flat_sigma_data
    few = ddf.with_samples(ds, ds.rho[:3], None)
    with pytest.warns(EmptySigmaWarning):
        sigma.extract_sigma_set(few, 0, [-1.0, 0.0], np.eye(2))


def test_sigma_rejects_zero_xi_and_missing_anchor(flat_sigma_data):
    _, ds = flat_sigma_data
    with pytest.raises(InvalidRequestError):
        sigma.extract_sigma_set(ds, 0, [0.0, 0.0], np.eye(2))
    with pytest.raises(InvalidRequestError):
        sigma.sample_gradients(ds, 3, np.eye(2))


def test_metric_from_stencil_flat(flat_sigma_data):
    _, ds = flat_sigma_data
    assert np.allclose(sigma.metric_from_stencil(ds, 0), np.eye(2), atol=0.02)


def test_point_to_polyline():
    curve = np.array([[0.0, 0.0], [1.0, 0.0]])
    d = sigma.point_to_polyline(None, np.array([[0.5, 0.2], [1.5, 0.0]]), curve)
    assert np.allclose(d, [0.2, 0.5])


def test_sigma_matches_forward_trace(flat_sigma_data):
    model, ds = flat_sigma_data
    z = ds.fsamples.points[ds.fsamples.stencils[0][0]]
    v = unit([1.0, 0.4])
    sig = sigma.extract_sigma_set(ds, 0, -v, np.eye(2))
    # trace up to the cut time, where the geodesic meets the antipodal vertical line
    curve = trace_geodesic(model, z, v, 0.5 / v[0]).points
    assert np.max(sigma.point_to_polyline(model, ds.ground_truth[sig.members], curve)) <= 3 * model.h


# ---------------------------------------------------------------------------
# geodesic family


def _sigma(members, coords=None):
    return sigma.SigmaSet(0, 0, np.array([1.0, 0.0]), np.asarray(members), np.zeros(len(members)), 1,
                          np.zeros(len(members)))


def test_family_single_membership():
    coords = np.array([[0.1 * k, 0.0] for k in range(5)] + [[0.0, 0.1 * k] for k in range(1, 5)])
    fam = sigma.build_geodesic_family([_sigma(range(5))], coords, len(coords))
    assert fam.pair_count(2) == 1
    cone = fam.cone(2)
    assert np.allclose(np.abs(cone[0]), [1, 0])
    assert np.allclose(cone[0], -cone[1])
    assert list(fam.empty) == [5, 6, 7, 8]
    assert fam.cone(6).shape == (0, 2)


def test_family_crossing_sets():
    coords = np.array([[0.1 * k, 0.2] for k in range(5)] + [[0.2, 0.1 * k] for k in range(5)]
                      + [[0.1 * k, 0.1 * k] for k in range(5)])
    # samples 2, 7 and 12 coincide at (0.2, 0.2); treat 2 as the shared member of all three
    sets = [_sigma([0, 1, 2, 3, 4]), _sigma([5, 6, 2, 8, 9]), _sigma([10, 11, 2, 13, 14])]
    fam = sigma.build_geodesic_family(sets, coords, len(coords))
    assert fam.pair_count(2) == 3


# ---------------------------------------------------------------------------
# projective machinery


def test_gauge_identity(rng):
    gam = rng.normal(size=(5, 2, 2, 2))
    assert np.array_equal(projective.gauge_transform(gam, np.zeros((5, 2))), gam)


def test_gauge_example():
    g = projective.gauge_transform(np.zeros((2, 2, 2)), np.array([1.0, 0.0]))
    # index order [k, i, j]; components are 0-based
    assert g[0, 0, 0] == 2
    assert g[1, 0, 1] == 1 and g[1, 1, 0] == 1
    assert g[0, 1, 1] == 0 and g[0, 0, 1] == 0 and g[0, 1, 0] == 0
    assert g[1, 0, 0] == 0 and g[1, 1, 1] == 0


@given(st.integers(0, 10_000))
def test_gauge_symmetric_and_invertible(seed):
    rng = np.random.default_rng(seed)
    gam = rng.normal(size=(20, 2, 2, 2))
    gam = 0.5 * (gam + np.swapaxes(gam, -1, -2))
    phi = rng.normal(size=(20, 2))
    tilde = projective.gauge_transform(gam, phi)
    assert np.array_equal(tilde, np.swapaxes(tilde, -1, -2))
    a = rng.normal(size=(20, 2, 2))
    metric = np.einsum("nij,nkj->nik", a, a) + np.eye(2)
    fit = projective.fit_projective_1form(gam, tilde, metric)
    assert np.max(np.abs(fit.phi - phi)) <= 1e-8


def test_fit_zero_difference(rng):
    gam = rng.normal(size=(4, 2, 2, 2))
    fit = projective.fit_projective_1form(gam, gam, np.tile(np.eye(2), (4, 1, 1)))
    assert np.allclose(fit.phi, 0)


def test_fit_rejects_unrelated(rng):
    gam = np.zeros((2, 2, 2))
    other = np.zeros((2, 2, 2))
    other[0, 1, 1] = 1.0
    with pytest.raises(NotProjectivelyRelatedError):
        projective.fit_projective_1form(gam, other, np.eye(2))


@given(st.floats(0.1, 10), st.floats(0, 2 * math.pi))
def test_forcing_homogeneous(a, angle):
    rng = np.random.default_rng(0)
    delta = rng.normal(size=(2, 2, 2))
    v = np.array([[math.cos(angle), math.sin(angle)]])
    g = np.array([[2.0, 0.3], [0.3, 1.0]])
    assert projective.forcing_term(delta, g, a * v)[0] == pytest.approx(
        a * projective.forcing_term(delta, g, v)[0], rel=1e-10, abs=1e-12)


def test_klein_euclid_projectively_related():
    klein = models.klein_patch(129)
    euclid = models.euclidean_patch(129)
    sel = np.linalg.norm(klein.grid_points, axis=-1) <= 0.55
    fit = projective.fit_projective_1form(euclid.christoffel_grid[sel], klein.christoffel_grid[sel],
                                          euclid.metric[sel])
    assert fit.residual <= 1e-3


def test_matveev_examples():
    g = np.array([[2.0, 0.5], [0.5, 1.0]])
    v = np.array([0.3, -0.7])
    assert projective.matveev_invariant(g, g, v) == pytest.approx(v @ g @ v)
    assert projective.matveev_invariant(g, 8 * g, v) == pytest.approx(0.5 * (v @ g @ v))
    with pytest.raises(DegenerateMetricError):
        projective.matveev_invariant(g, np.zeros((2, 2)), v)


def _curve(model, x, v, t):
    return trace_geodesic(model, x, v, t, step=model.h / 2)


def test_equivalence_identical_metrics(conformal128):
    sm = conformal128.spline
    curve = _curve(conformal128, np.array([0.3, 0.4]), np.array([1.0, 0.0]) / math.sqrt(
        sm.metric(np.array([0.3, 0.4]))[0, 0]), 0.3)
    rep = projective.check_geodesic_equivalence(sm.metric, sm.metric, [curve], f_points=[[0.1, 0.1]])
    assert rep["max_drift"] == pytest.approx(0, abs=1e-8)
    assert rep["conformal_factor_deviation"] == pytest.approx(0, abs=1e-9)
    assert not rep["f_mismatch"]


def test_equivalence_detects_scaling_inside(flat128):
    def g(p):
        return np.eye(2)

    def g_tilde(p):
        r = np.linalg.norm(np.asarray(p) - 0.5)
        return (1 + 0.1 * math.exp(-(r / 0.1) ** 2)) * np.eye(2)

    curve = _curve(flat128, np.array([0.2, 0.5]), np.array([1.0, 0.0]), 0.6)
    rep = projective.check_geodesic_equivalence(g, g_tilde, [curve], f_points=[[0.05, 0.05]])
    # g~ = f g gives I0 = f^(-1/3), so a 10% bump moves I0 by 1 - 1.1^(-1/3)
    assert rep["max_drift"] == pytest.approx(1 - 1.1 ** (-1 / 3), rel=1e-3)
    assert rep["max_drift"] > 1e-3


def test_equivalence_flags_f_mismatch(flat128):
    curve = _curve(flat128, np.array([0.2, 0.5]), np.array([1.0, 0.0]), 0.3)
    rep = projective.check_geodesic_equivalence(lambda p: np.eye(2), lambda p: 1.5 * np.eye(2), [curve],
                                                f_points=[[0.05, 0.05]])
    assert rep["f_mismatch"]
    assert rep["conformal_factor_deviation"] is None


# ---------------------------------------------------------------------------
# pipeline and reports


def test_pipeline_instrumented(tmp_path, disc_dataset, disc128):
    rec = pipeline.run_reconstruction(disc_dataset, disc128, n_charts=8, jobs=4)
    assert rec.summary["chart_acceptance"] >= 0.5
    assert rec.boundary and all(r["recovered"] <= r["truth"] + 2 * disc_dataset.eps_solver
                                for r in rec.boundary)
    assert any("sigma-sets" in g for g in rec.gaps)
    rec.write(tmp_path)
    for name in ("reconstruction.json", "boundary_distances.csv", "charts.csv", "chart_coordinates.svg"):
        assert (tmp_path / name).exists()
    data = json.loads((tmp_path / "reconstruction.json").read_text())
    assert data["summary"]["samples"] == 300


def test_pipeline_blind_without_model(disc_dataset):
    rec = pipeline.run_reconstruction(disc_dataset.blind_view(), None, n_charts=4)
    assert rec.summary["instrumented"] is False
    assert "truth" not in rec.boundary[0]
    assert all("metric_rel_error" not in c for c in rec.charts)


def test_pipeline_sigma_from_stencil(flat_sigma_data):
    _, ds = flat_sigma_data
    rec = pipeline.run_reconstruction(ds.blind_view(), None, n_charts=2)
    assert rec.summary["sigma_nonempty"] > 0


def test_pipeline_rejects_empty(disc_dataset):
    with pytest.raises(InsufficientDataError):
        pipeline.run_reconstruction(ddf.with_samples(disc_dataset, disc_dataset.rho[:0], None))


def test_reports_deterministic(tmp_path):
    obj = {"b": np.float64(1.5), "a": np.arange(3), "c": np.inf, "d": np.bool_(True)}
    reports.write_json(tmp_path / "a.json", obj)
    reports.write_json(tmp_path / "b.json", dict(reversed(list(obj.items()))))
    assert (tmp_path / "a.json").read_text() == (tmp_path / "b.json").read_text()
    assert json.loads((tmp_path / "a.json").read_text()) == {"a": [0, 1, 2], "b": 1.5, "c": "inf", "d": True}
    reports.write_csv(tmp_path / "t.csv", ["x", "y"], [[0.1, 2]])
    assert (tmp_path / "t.csv").read_text().splitlines() == ["x,y", "0.1,2"]


def test_svg_writers(tmp_path):
    pts = np.random.default_rng(0).random((20, 2))
    reports.svg_scatter(tmp_path / "s.svg", pts, "a < b", highlight=[1, 2])
    reports.svg_overlay(tmp_path / "o.svg", pts, [pts[:3]], curves=[pts[:5]])
    reports.svg_series(tmp_path / "l.svg", {"one": (np.arange(5), np.arange(5) ** 2)})
    for name in ("s.svg", "o.svg", "l.svg"):
        text = (tmp_path / name).read_text()
        assert text.startswith("<svg") and text.rstrip().endswith("</svg>")
    assert "a &lt; b" in (tmp_path / "s.svg").read_text()
