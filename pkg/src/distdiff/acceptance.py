"""The acceptance suite: thirteen end-to-end criteria with fixed tolerances.

Each ``criterion_N`` builds its own test manifold and data from fixed seeds
and returns a :class:`CriterionResult`.  The pytest suite and
``distdiff verify --full`` both call :func:`run`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import math
import time
import warnings

import numpy as np

from . import counterexample as cx
from . import ddf, eikonal, models, wave
from .config import DEFAULT_K
from .errors import DistDiffError, EmptySigmaWarning, InvalidRequestError
from .manifold import (
    boundary_cut_time,
    cut_time,
    displacement,
    integrate_connection,
    metric_at,
    trace_geodesic,
    unit_direction,
)
from .reconstruct import charts, projective, sigma
from .reconstruct.embedding import match_datasets, verify_embedding

RESOLUTION = 128


@dataclass
class CriterionResult:
    number: int
    title: str
    passed: bool
    metrics: dict = field(default_factory=dict)
    seconds: float = 0.0
    # plot data, not part of the printed line
    artifacts: dict = field(default_factory=dict, repr=False)

    def line(self) -> str:
        shown = ", ".join(f"{k}={_fmt(v)}" for k, v in self.metrics.items())
        status = "PASS" if self.passed else "FAIL"
        return f"[{status}] criterion {self.number:2d} {self.title}: {shown} ({self.seconds:.1f}s)"


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.4g}"
    return str(v)


# ---------------------------------------------------------------------------


def criterion_1(jobs: int = 1) -> CriterionResult:
    """FMM against the Dijkstra oracle on the flat torus."""
    model = models.flat_torus(RESOLUTION)
    h = model.h
    rng = np.random.default_rng(101)
    n = model.shape[0]
    graph = eikonal.grid_graph(model)
    worst_excess = -np.inf
    worst_gap = 0.0
    pairs = 0
    for _ in range(10):
        src = model.vertex_coords(tuple(rng.integers(0, n, 2)))
        fmm = eikonal.solve_distance_field(model, src)
        dij = eikonal.dijkstra_distance(model, src, graph=graph)
        targets = rng.integers(0, n, (10, 2))
        a = fmm.values[targets[:, 0], targets[:, 1]]
        b = dij.values[targets[:, 0], targets[:, 1]]
        gap = np.abs(a - b)
        worst_excess = max(worst_excess, float(np.max(gap - (2 * h + eikonal.DIJKSTRA_BIAS * b))))
        worst_gap = max(worst_gap, float(gap.max()))
        pairs += len(targets)
    eps = eikonal.estimate_eps_solver(model, [np.array([0.31, 0.47]), np.array([0.72, 0.13])])
    ok = worst_excess <= 0 and eps < 0.02
    return CriterionResult(1, "solver oracle", ok, {
        "pairs": pairs, "max_gap": worst_gap, "bound_excess": worst_excess, "eps_solver": eps})


def criterion_2(jobs: int = 1) -> CriterionResult:
    """2-Lipschitz embedding over 300 samples."""
    model = models.disc_torus(RESOLUTION)
    fs = ddf.sample_F_points(model, DEFAULT_K, seed=2)
    X = ddf.stratified_hidden_points(model, 300, seed=3)
    ds = ddf.generate_dataset(model, X, fs, seed=4, jobs=jobs)
    rep = verify_embedding(ds, model, jobs=jobs)
    ok = rep["violations"] == 0 and rep["max_ratio"] <= rep["bound"]
    return CriterionResult(2, "2-Lipschitz embedding", ok, {
        "pairs": rep["pairs"], "max_ratio": rep["max_ratio"], "bound": rep["bound"],
        "violations": rep["violations"], "eps_solver": ds.eps_solver})


def criterion_3(jobs: int = 1) -> CriterionResult:
    """Matching against a regeneration on a translated copy of the manifold."""
    model = models.four_disc_torus(RESOLUTION)
    h = model.h
    shift = (37, 81)
    moved = models.translated(model, shift)
    offset = np.array(shift) * h
    fs = ddf.sample_F_points(model, DEFAULT_K, seed=5)
    X = ddf.stratified_hidden_points(model, 200, seed=6, min_sep=5.5 * h)
    ds1 = ddf.generate_dataset(model, X, fs, seed=7, jobs=jobs)
    fs2 = ddf.FSampleSet(np.mod(fs.points + offset, 1.0), fs.boundary_flags, stencils=fs.stencils)
    ds2 = ddf.generate_dataset(moved, np.mod(X + offset, 1.0), fs2, seed=8, jobs=jobs)
    corr = match_datasets(ds1, ds2, threshold=5 * h)
    # ground truth: ds2 sample j was generated from the hidden point nearest to its shifted position
    truth = np.array([int(np.argmin(np.linalg.norm(displacement(model, p - offset, ds1.ground_truth), axis=1)))
                      for p in ds2.ground_truth])
    rate = float(np.mean(corr.pairing == truth))
    sep = float(min(np.linalg.norm(displacement(model, X[i], X[i + 1:]), axis=1).min()
                    for i in range(len(X) - 1)))
    return CriterionResult(3, "injectivity and matching", rate == 1.0 and corr.injective(), {
        "samples": len(X), "min_separation_h": sep / h, "correct_rate": rate,
        "max_residual_h": corr.max_residual / h})


def criterion_4(jobs: int = 1) -> CriterionResult:
    """Boundary distance recovery at 500 and 1000 samples."""
    from .invariants import boundary_recovery_errors

    model = models.disc_torus(RESOLUTION)
    h = model.h
    fs = ddf.sample_F_points(model, DEFAULT_K, seed=2)
    X = ddf.uniform_hidden_points(model, 1000, seed=9)
    base = ddf.generate_dataset(model, X, fs, seed=0, jobs=jobs)
    ok = True
    errs, recs = {}, {}
    for n in (500, 1000):
        # the first n draws of the uniform sampler are a nested subset
        ds = ddf.generate_dataset(model, X[:n], base.fsamples, seed=0, eps_solver=base.eps_solver)
        info = boundary_recovery_errors(ds, model, jobs)
        err = np.abs(info["recovered"] - info["truth"])
        bound = 2 * h + 2 * ds.eps_solver + info["gap"]
        ok &= bool(np.all(err <= bound))
        errs[n], recs[n] = err, info["recovered"]
    # a sup over more samples can only grow
    monotone = bool(np.all(recs[1000] >= recs[500])) and errs[1000].mean() < errs[500].mean()
    return CriterionResult(4, "boundary distance", ok and monotone, {
        "max_err_500": errs[500].max(), "max_err_1000": errs[1000].max(),
        "mean_err_500": errs[500].mean(), "mean_err_1000": errs[1000].mean(),
        "monotone": monotone})


def criterion_5(jobs: int = 1) -> CriterionResult:
    """Extension from 64 boundary samples to 20 interior F pairs."""
    model = models.disc_torus(RESOLUTION)
    h = model.h
    rng = np.random.default_rng(11)
    bidx = np.argwhere(model.boundary_mask)
    bpts = model.vertex_coords(bidx)
    chosen = ddf._farthest_points(model, bpts, 64, rng)
    boundary = bpts[chosen]
    interior = model.vertex_coords(np.argwhere(model.f_interior_mask & ~_near_boundary(model, 3)))
    targets = interior[rng.choice(len(interior), 40, replace=False)]
    X = ddf.uniform_hidden_points(model, 100, seed=12)
    b_fields = eikonal.solve_many(model, list(boundary), jobs)
    eps = eikonal.estimate_eps_solver(model, boundary[:2], fields=b_fields[:2])
    d_xb = np.stack([eikonal.distance(f, X) for f in b_fields], axis=1)
    rho_b = d_xb - d_xb[:, :1]
    restricted = ddf.restricted_fields(model, targets, jobs)
    d_f = np.array([eikonal.distance(f, boundary) for f in restricted])
    ext = ddf.extend_from_boundary(d_f, rho_b)
    full = eikonal.solve_many(model, list(targets), jobs)
    d_xt = np.stack([eikonal.distance(f, X) for f in full], axis=1)
    w1, w2 = np.arange(0, 40, 2), np.arange(1, 40, 2)
    forward = d_xt[:, w1] - d_xt[:, w2]
    extended = ext[:, w1] - ext[:, w2]
    err = float(np.max(np.abs(forward - extended)))
    bound = 2 * h + 2 * eps
    return CriterionResult(5, "extension from the boundary", err <= bound, {
        "pairs": len(w1), "samples": len(X), "max_err": err, "bound": bound})


def _near_boundary(model, cells: int) -> np.ndarray:
    from scipy.ndimage import binary_dilation

    return binary_dilation(model.m_mask, iterations=cells)


def _tuples(rng, K: int, count: int):
    for _ in range(count):
        z, i1, i2 = rng.choice(np.arange(1, K), 3, replace=False)
        yield int(z), (int(i1), int(i2))


def criterion_6(jobs: int = 1) -> CriterionResult:
    """Chart acceptance, local injectivity, and flat Jacobians."""
    conf = models.conformal_disc_torus(RESOLUTION)
    fs = ddf.sample_F_points(conf, DEFAULT_K, seed=2)
    X = ddf.stratified_hidden_points(conf, 2000, seed=1)
    ds = ddf.generate_dataset(conf, X, fs, seed=0, jobs=jobs)
    rng = np.random.default_rng(13)
    accepted = tried = injective = 0
    for z, pair in _tuples(rng, DEFAULT_K, 400):
        c = int(rng.integers(len(ds)))
        try:
            chart = charts.build_chart(ds, c, z, pair, sigma_min=0.05)
        except InvalidRequestError:
            continue  # centre too close to the reference point: not a valid request
        except DistDiffError:
            tried += 1
            continue
        tried += 1
        accepted += 1
        injective += chart.locally_injective()
        if tried >= 200:
            break
    rate = accepted / tried

    # flat disc torus, references z=(0,0), z1=(0.2,0), z2=(0,0.2); centres away from
    # the references and from their cut loci, where the gradients are discontinuous
    flat = models.disc_torus(RESOLUTION)
    h = flat.h
    P = np.array([[0.0, 0.0], [0.2, 0.0], [0.0, 0.2], [0.1, 0.9], [0.9, 0.1]])
    ds = ddf.generate_dataset(flat, X, ddf.FSampleSet(P, np.zeros(len(P), bool)), seed=0, jobs=jobs)
    g = ds.ground_truth
    rel = displacement(flat, P[None, :3], g[:, None])
    cut_gap = np.min(np.abs(np.abs(rel) - 0.5), axis=(1, 2))
    near = np.min(np.linalg.norm(rel, axis=-1), axis=1)
    centres = np.flatnonzero((cut_gap > 0.06) & (near > 0.15))[:200]
    jac_err = []
    for c in centres:
        chart = charts.build_chart(ds, int(c), 0, (1, 2), sigma_min=0.0, model=flat,
                                   use_ground_truth=True)
        u = rel[c] / np.linalg.norm(rel[c], axis=1)[:, None]
        rows = np.array([u[1] - u[0], u[2] - u[0]])
        jac_err.append(float(np.max(np.abs(rows - chart.jacobian))))
    jmax = max(jac_err)
    ok = rate >= 0.9 and injective == accepted and jmax <= 5 * h
    return CriterionResult(6, "charts", ok, {
        "acceptance": rate, "tried": tried, "injective": f"{injective}/{accepted}",
        "jacobian_centres": len(jac_err), "jacobian_max_err_h": jmax / h})


def criterion_7(jobs: int = 1) -> CriterionResult:
    """Sigma-sets against traced geodesics, 16 directions at 4 anchors."""
    base = models.flat_torus(RESOLUTION)
    mask = models.four_disc_mask(base)
    model = models.bump_torus(RESOLUTION, m_mask=mask)
    h = model.h
    fs = ddf.sample_F_points(model, DEFAULT_K, seed=2, anchor_points=models.FOUR_DISC_CENTERS)
    X = ddf.stratified_hidden_points(model, 2000, seed=1)
    ds = ddf.generate_dataset(model, X, fs, seed=0, jobs=jobs)
    worst = 0.0
    nonempty = 0
    groups, curves = [], []
    for a in range(len(fs.stencils)):
        z = ds.fsamples.points[ds.fsamples.stencils[a][0]]
        gz = metric_at(model, z)
        fld = eikonal.solve_distance_field(model, z)
        for sig in sigma.sigma_sets_for_anchor(ds, a, gz, 16):
            if len(sig) == 0:
                continue
            nonempty += 1
            v = unit_direction(model, z, -sig.xi)
            tau = cut_time(model, None, z, v, t_max=1.5, field=fld)
            curve = trace_geodesic(model, z, v, tau)
            d = sigma.point_to_polyline(model, ds.ground_truth[sig.members], curve.points)
            worst = max(worst, float(d.max()))
            if a == 0:
                groups.append(ds.ground_truth[sig.members])
                curves.append(curve.points)
    return CriterionResult(7, "sigma-sets", worst <= 3 * h and nonempty > 0, {
        "sets": 16 * len(fs.stencils), "nonempty": nonempty, "max_hausdorff_h": worst / h},
        artifacts={"overlay": (ds.ground_truth, groups, curves)})


def criterion_8(jobs: int = 1) -> CriterionResult:
    """Gauge round trip, pre-geodesic coincidence, and Klein vs Euclid."""
    rng = np.random.default_rng(17)
    gam = rng.normal(size=(500, 2, 2, 2))
    gam = 0.5 * (gam + np.swapaxes(gam, -1, -2))
    phi = rng.normal(size=(500, 2))
    metric = np.einsum("nij,nkj->nik", *(2 * [rng.normal(size=(500, 2, 2))])) + np.eye(2)
    fit = projective.fit_projective_1form(gam, projective.gauge_transform(gam, phi), metric)
    phi_err = float(np.max(np.abs(fit.phi - phi)))

    model = models.conformal_torus(RESOLUTION)
    step = model.h / 2
    sm = model.spline

    def one_form(p):
        return np.array([0.3 * math.cos(2 * math.pi * p[1]), 0.2 * math.sin(2 * math.pi * p[0])])

    def tilde(p):
        return projective.gauge_transform(sm.christoffel(p), one_form(p))

    worst = 0.0
    for k in range(4):
        x = np.array([0.2 + 0.15 * k, 0.3 + 0.1 * k])
        v = unit_direction(model, x, [math.cos(1.1 * k + 0.2), math.sin(1.1 * k + 0.2)])
        other = integrate_connection(tilde, x, v, 0.3, step)
        seg = np.linalg.norm(np.diff(other.points, axis=0), axis=1).sum()
        ref = integrate_connection(sm.christoffel, x, v, 1.5 * seg + 0.1, step)
        d = sigma.point_to_polyline(None, other.points, ref.points)
        worst = max(worst, float(d.max()))

    klein = models.klein_patch(129)
    euclid = models.euclidean_patch(129)
    sel = np.linalg.norm(klein.grid_points, axis=-1) <= 0.55
    kfit = projective.fit_projective_1form(euclid.christoffel_grid[sel], klein.christoffel_grid[sel],
                                           euclid.metric[sel], raise_on_fail=False)
    ok = phi_err <= 1e-8 and worst <= 10 * step ** 2 and kfit.residual <= 1e-3
    return CriterionResult(8, "projective machinery", ok, {
        "phi_err": phi_err, "pregeodesic_gap": worst, "gap_bound": 10 * step ** 2,
        "klein_residual": kfit.residual})


def _chords(count: int = 12, radius: float = 0.85):
    out = []
    for k in range(count):
        a = math.pi * k / count
        v = np.array([math.cos(a), math.sin(a)])
        n = np.array([-v[1], v[0]])
        start = 0.3 * math.sin(1.7 * k) * n - radius * v
        out.append((start, v))
    return out


def criterion_9(jobs: int = 1) -> CriterionResult:
    """Matveev invariant drift for equivalent and non-equivalent pairs."""
    from .manifold import GeodesicCurve

    # Euclidean lines are Klein geodesics up to parametrisation
    curves = []
    for start, v in _chords():
        t = np.linspace(0.0, 1.4, 300)
        pts = start + t[:, None] * v
        inside = np.linalg.norm(pts, axis=1) < 0.9
        curves.append(GeodesicCurve(t[inside], pts[inside], np.tile(v, (inside.sum(), 1))))
    eq = projective.check_geodesic_equivalence(models.euclidean_metric, models.klein_metric, curves)

    # traced Klein geodesics, with the roles reversed
    klein = models.klein_patch(129)
    kcurves = []
    for start, v in _chords(6, 0.3):
        kcurves.append(trace_geodesic(klein, start, unit_direction(klein, start, v), 0.3))
    eq2 = projective.check_geodesic_equivalence(klein.spline.metric, models.euclidean_metric, kcurves)

    disc = models.disc_torus(RESOLUTION)
    scaled = models.scaled_inside(disc, 1.25)
    lines = []
    for k in range(8):
        a = math.pi * k / 8
        v = np.array([math.cos(a), math.sin(a)])
        lines.append(trace_geodesic(disc, 0.5 - 0.3 * v, v, 0.6))
    f_pts = disc.vertex_coords(np.argwhere(disc.f_mask)[::97])
    ctl = projective.check_geodesic_equivalence(lambda p: metric_at(disc, p),
                                                lambda p: metric_at(scaled, p), lines, f_points=f_pts)

    conf = models.conformal_torus(RESOLUTION)
    cf_curves = [trace_geodesic(conf, x, unit_direction(conf, x, [1.0, 0.4]), 0.5)
                 for x in (np.array([0.2, 0.3]), np.array([0.6, 0.7]))]
    f_conf = conf.vertex_coords(np.argwhere(np.ones(conf.shape, bool))[::211])
    same = projective.check_geodesic_equivalence(conf.spline.metric, lambda p: metric_at(conf, p),
                                                 cf_curves, f_points=f_conf, f_tol=1e-2)
    self_pair = projective.check_geodesic_equivalence(conf.spline.metric, conf.spline.metric, cf_curves)
    scaled_pair = projective.check_geodesic_equivalence(conf.spline.metric,
                                                        lambda p: 3.0 * conf.spline.metric(p), cf_curves)
    drift = max(eq["max_drift"], eq2["max_drift"], self_pair["max_drift"], scaled_pair["max_drift"])
    factor = same["conformal_factor_deviation"]
    ok = drift < 1e-3 and ctl["max_drift"] > 0.05 and factor is not None and factor <= 0.02
    series = {}
    for label, curve, g, gt in (("Euclid vs Klein", curves[0], models.euclidean_metric, models.klein_metric),
                                ("control x1.25", lines[0], lambda p: metric_at(disc, p),
                                 lambda p: metric_at(scaled, p))):
        inv = projective.invariant_along(curve, g, gt)
        series[label] = (curve.t - curve.t[0], inv / inv[0] - 1.0)
    return CriterionResult(9, "Matveev invariant", ok, {
        "equivalent_drift": drift, "control_drift": ctl["max_drift"],
        "conformal_factor_dev": factor}, artifacts={"drift": series})


def criterion_10(jobs: int = 1) -> CriterionResult:
    """Local metric recovery at accepted chart centres (2000 samples, |W| = 12)."""
    model = models.conformal_disc_torus(RESOLUTION)
    fs = ddf.sample_F_points(model, DEFAULT_K, seed=2)
    X = ddf.stratified_hidden_points(model, 2000, seed=1)
    ds = ddf.generate_dataset(model, X, fs, seed=0, jobs=jobs)
    blind = ds.blind_view()
    rng = np.random.default_rng(19)
    errs = []
    for z, pair in _tuples(rng, DEFAULT_K, 400):
        c = int(rng.integers(len(ds)))
        try:
            chart = charts.build_chart(blind, c, z, pair)
        except DistDiffError:
            continue
        w = [k for k in range(DEFAULT_K) if k != z][:12]
        truth_chart = charts.build_chart(ds, c, z, pair, sigma_min=0.0, model=model,
                                         use_ground_truth=True)
        try:
            est = charts.recover_metric_in_chart(blind, chart, w)
        except DistDiffError:
            errs.append(np.inf)
            continue
        g = truth_chart.jacobian.T @ est.metric @ truth_chart.jacobian
        errs.append(charts.relative_frobenius(g, metric_at(model, ds.ground_truth[c])))
        if len(errs) >= 150:
            break
    errs = np.array(errs)
    frac = float(np.mean(errs < 0.05))
    return CriterionResult(10, "metric recovery", frac >= 0.8, {
        "charts": len(errs), "frac_within_5pct": frac,
        "median_err": float(np.median(errs))})


def criterion_11(jobs: int = 1) -> CriterionResult:
    """Wave arrivals against eikonal data for 50 events."""
    from scipy.ndimage import distance_transform_edt

    base = models.flat_torus(RESOLUTION)
    model = models.conformal_torus(RESOLUTION, seed=1, m_mask=models.four_disc_mask(base))
    h = model.h
    fs = ddf.sample_F_points(model, DEFAULT_K, seed=0)
    far = distance_transform_edt(model.m_mask) >= 10
    X = ddf.stratified_hidden_points(model.with_region(far), 50, seed=1, min_sep=5.5 * h)
    ds = ddf.generate_dataset(model, X, fs, seed=0, jobs=jobs)
    rng = np.random.default_rng(2)
    events = [wave.SourceEvent(x, float(rng.uniform(0.0, 2.0))) for x in ds.ground_truth]
    rows = wave.arrival_dataset_rows(model, events, ds.fsamples, jobs=jobs)
    dt = wave.WaveOperator(model).max_dt()
    bound = 4 * h + 4 * dt
    err = float(np.max(np.abs(rows - ds.rho).max(axis=1)))
    wds = ddf.with_samples(ds, rows, ds.ground_truth)
    corr = match_datasets(ds, wds, threshold=bound)
    rate = float(np.mean(corr.pairing == np.arange(len(ds))))
    # emission-time invariance: same event shifted by a whole number of steps
    op = wave.WaveOperator(model)
    e0 = events[0]
    r0 = wave.simulate_wave(model, e0, e0.s + 1.0, receivers=ds.fsamples.points, operator=op)
    e1 = wave.SourceEvent(e0.y, e0.s + 37 * dt, e0.kappa)
    r1 = wave.simulate_wave(model, e1, e1.s + 1.0, receivers=ds.fsamples.points, operator=op)
    s_gap = float(np.max(np.abs(wave.ddf_from_arrivals(wave.pick_arrival_times(r0)).rho
                                - wave.ddf_from_arrivals(wave.pick_arrival_times(r1)).rho)))
    ok = err <= bound and rate == 1.0 and s_gap <= 1e-12
    return CriterionResult(11, "wave pipeline", ok, {
        "events": len(events), "max_sup_err_h": err / h, "bound_h": bound / h,
        "match_rate": rate, "s_shift_gap": s_gap})


def criterion_12(jobs: int = 1) -> CriterionResult:
    """Graph counterexample and its degenerate control."""
    g1, g2 = cx.build_example_graphs(20)
    rep = cx.compare(g1, g2)
    c1, c2 = cx.build_example_graphs(20, ranks=(2, 2, 2, 2))
    ctl = cx.compare(c1, c2)
    ok = rep.passed and ctl.datasets_equal and not ctl.non_isomorphic
    return CriterionResult(12, "counterexample", ok, {
        "verdict": rep.verdict, "vectors": rep.n_vectors, "vertices": rep.n_vertices[0],
        "control_verdict": ctl.verdict})


def criterion_13(jobs: int = 1) -> CriterionResult:
    """Cut time along the inward normal exceeds the boundary cut time."""
    model = models.disc_torus(RESOLUTION)
    h = model.h
    bnd = np.argwhere(model.boundary_mask)
    pts = model.vertex_coords(bnd)
    angles = np.arctan2(pts[:, 1] - 0.5, pts[:, 0] - 0.5)
    picks = [int(np.argmin(np.abs(np.angle(np.exp(1j * (angles - a))))))
             for a in np.linspace(-math.pi, math.pi, 16, endpoint=False)]
    bfield = eikonal.solve_distance_field(model, model.boundary_mask)
    margins = []
    from .manifold import inward_normal

    for k in picks:
        z = pts[k]
        nu = inward_normal(model, z)
        tau = cut_time(model, eikonal.solve_distance_field, z, nu, t_max=1.2)
        tau_b = boundary_cut_time(model, None, z, t_max=1.2, boundary_field=bfield)
        margins.append(tau - tau_b)
    low = float(min(margins))
    return CriterionResult(13, "cut-time inequality", low > h, {
        "rim_vertices": len(picks), "min_margin_h": low / h})


CRITERIA = {n: globals()[f"criterion_{n}"] for n in range(1, 14)}


def run(numbers=None, jobs: int = 1, echo=None) -> list[CriterionResult]:
    out = []
    for n in (numbers or sorted(CRITERIA)):
        t0 = time.perf_counter()
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", EmptySigmaWarning)
            try:
                res = CRITERIA[n](jobs=jobs)
            except DistDiffError as exc:
                res = CriterionResult(n, CRITERIA[n].__doc__.splitlines()[0], False,
                                      {"error": f"{type(exc).__name__}: {exc}"})
        res.seconds = time.perf_counter() - t0
        out.append(res)
        if echo is not None:
            echo(res.line())
    return out
