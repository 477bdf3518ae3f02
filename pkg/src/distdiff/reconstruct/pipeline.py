"""End-to-end reconstruction from a dataset: boundary distances, charts, sigma-sets, metrics."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
import logging
import warnings

import numpy as np

from ..config import Tolerances
from ..ddf import DDFDataset, recover_boundary_matrix
from ..errors import DistDiffError, EmptySigmaWarning, InsufficientDataError, InvalidRequestError
from ..manifold import ManifoldModel, metric_at
from . import charts, reports, sigma

log = logging.getLogger(__name__)

W_SIZE = 12


@dataclass
class Reconstruction:
    summary: dict
    boundary: list = field(default_factory=list)
    charts: list = field(default_factory=list)
    sigma_sets: list = field(default_factory=list)
    gaps: list = field(default_factory=list)
    chart_coords: np.ndarray | None = None
    sigma_points: list = field(default_factory=list)

    def write(self, out: Path) -> None:
        out.mkdir(parents=True, exist_ok=True)
        reports.write_json(out / "reconstruction.json", {
            "summary": self.summary, "gaps": self.gaps, "charts": self.charts,
            "sigma_sets": self.sigma_sets, "boundary": self.boundary})
        reports.write_csv(out / "boundary_distances.csv",
                          ["a", "b", "recovered"] + (["truth"] if self.boundary and "truth" in self.boundary[0] else []),
                          [[r["a"], r["b"], r["recovered"]] + ([r["truth"]] if "truth" in r else [])
                           for r in self.boundary])
        reports.write_csv(out / "charts.csv",
                          ["center", "z", "i1", "i2", "accepted", "conditioning", "g11", "g12", "g22"],
                          [[c["center"], c["z"], *c["tuple"], c["accepted"], c.get("conditioning", ""),
                            *(np.asarray(c["metric"]).ravel()[[0, 1, 3]] if "metric" in c else ["", "", ""])]
                           for c in self.charts])
        if self.chart_coords is not None:
            reports.svg_scatter(out / "chart_coordinates.svg", self.chart_coords,
                                "chart coordinates of the first accepted chart")
        if self.sigma_points:
            bg, groups = self.sigma_points[0], self.sigma_points[1:]
            reports.svg_overlay(out / "sigma_sets.svg", bg, groups,
                                title="sigma-set members (first anchor)")


def _boundary_section(ds: DDFDataset, model: ManifoldModel | None, jobs: int) -> list:
    idx, rec = recover_boundary_matrix(ds)
    truth = None
    if model is not None:
        from ..eikonal import distance, solve_many

        pts = ds.fsamples.points[idx]
        fields = solve_many(model, list(pts), jobs)
        truth = np.array([distance(f, pts) for f in fields])
    rows = []
    for i in range(len(idx)):
        for j in range(i + 1, len(idx)):
            row = {"a": int(idx[i]), "b": int(idx[j]), "recovered": float(max(rec[i, j], rec[j, i]))}
            if truth is not None:
                row["truth"] = float(0.5 * (truth[i, j] + truth[j, i]))
            rows.append(row)
    return rows


def _chart_section(ds: DDFDataset, model, tol: Tolerances, rng, count: int):
    plain = [k for k in range(ds.K) if k not in set(ds.fsamples.stencils.ravel().tolist())]
    if len(plain) < 3 + 5:
        raise InsufficientDataError("need at least eight plain F-samples for charts and metrics")
    blind = ds.blind_view()
    rows, first = [], None
    centres = rng.choice(len(ds), size=min(count, len(ds)), replace=False)
    for c in centres:
        z, i1, i2 = (int(v) for v in rng.choice(plain[1:], 3, replace=False))
        row = {"center": int(c), "z": z, "tuple": [i1, i2], "accepted": False}
        try:
            chart = charts.build_chart(blind, int(c), z, (i1, i2), sigma_min=tol["sigma_min"])
        except InvalidRequestError as exc:
            row["reason"] = str(exc)
            row["skipped"] = True
            rows.append(row)
            continue
        except DistDiffError as exc:
            row["reason"] = str(exc)
            rows.append(row)
            continue
        row.update(accepted=True, conditioning=chart.conditioning,
                   locally_injective=chart.locally_injective())
        if first is None:
            first = chart.coords
        w = [k for k in plain if k != z][:W_SIZE]
        try:
            est = charts.recover_metric_in_chart(blind, chart, w)
            row["metric"] = est.metric.tolist()
            if model is not None and not ds.blind:
                frame = charts.build_chart(ds, int(c), z, (i1, i2), sigma_min=0.0, model=model,
                                           use_ground_truth=True)
                g = frame.jacobian.T @ est.metric @ frame.jacobian
                row["metric_rel_error"] = charts.relative_frobenius(g, metric_at(model, ds.ground_truth[c]))
        except DistDiffError as exc:
            row["metric_error"] = str(exc)
        rows.append(row)
    return rows, first


def _sigma_section(ds: DDFDataset, model, tol: Tolerances):
    rows, points = [], []
    for a in range(len(ds.fsamples.stencils)):
        z = ds.fsamples.points[ds.fsamples.stencils[a][0]]
        gz = metric_at(model, z) if model is not None else sigma.metric_from_stencil(ds, a)
        sets = sigma.sigma_sets_for_anchor(ds, a, gz, 16, angle_scale=tol["sigma_angle"],
                                           norm_band=tol["grad_norm"])
        for k, sig in enumerate(sets):
            rows.append({"anchor": a, "direction": k, "xi": sig.xi.tolist(),
                         "members": sig.members.tolist(), "auxiliary": sig.auxiliary})
        if a == 0 and not ds.blind:
            points = [ds.ground_truth] + [ds.ground_truth[s.members] for s in sets if len(s)]
    return rows, points


def run_reconstruction(ds: DDFDataset, model: ManifoldModel | None = None, tol: Tolerances | None = None,
                       seed: int = 0, n_charts: int = 64, jobs: int = 1) -> Reconstruction:
    """Every stage that the data supports; stages that cannot run are listed as gaps.

    ``model`` only supplies ``g`` on F (sigma-sets) unless the dataset is
    instrumented, in which case it also enables the verification extras.
    """
    if len(ds) == 0:
        raise InsufficientDataError("dataset has no samples")
    tol = Tolerances() if tol is None else tol
    rng = np.random.default_rng(seed)
    rec = Reconstruction({"samples": len(ds), "K": ds.K, "instrumented": not ds.blind,
                          "eps_solver": ds.eps_solver, "tolerances": tol.as_dict()})
    if len(ds.fsamples.boundary_indices) >= 2:
        rec.boundary = _boundary_section(ds, model, jobs)
    else:
        rec.gaps.append("boundary: fewer than two boundary-flagged F-samples")
    try:
        rec.charts, rec.chart_coords = _chart_section(ds, model, tol, rng, n_charts)
    except InsufficientDataError as exc:
        rec.gaps.append(f"charts: {exc}")
    tried = [c for c in rec.charts if not c.get("skipped")]
    accepted = [c for c in tried if c["accepted"]]
    rec.summary["chart_acceptance"] = len(accepted) / len(tried) if tried else None
    errs = [c["metric_rel_error"] for c in accepted if "metric_rel_error" in c]
    if errs:
        rec.summary["metric_within_tol"] = float(np.mean(np.array(errs) < tol["metric_rel"]))
    if len(ds.fsamples.stencils):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", EmptySigmaWarning)
            try:
                rec.sigma_sets, rec.sigma_points = _sigma_section(ds, model, tol)
            except DistDiffError as exc:
                rec.gaps.append(f"sigma-sets: {exc}")
        rec.summary["sigma_nonempty"] = sum(len(s["members"]) >= 2 for s in rec.sigma_sets)
    else:
        rec.gaps.append("sigma-sets: dataset has no gradient-stencil anchors")
    log.info("reconstruction: %s", {k: v for k, v in rec.summary.items() if k != "tolerances"})
    return rec
