"""Dataset invariants with an explicit hard/threshold classification.

A hard invariant failing means the data is inconsistent (exit code 1 in the
CLI).  A threshold check failing only means a reporting tolerance was not
met, which is reported separately.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
import math

import numpy as np

from .config import Tolerances
from .ddf import DDFDataset, recover_boundary_matrix
from .eikonal import distance, solve_many
from .manifold import ManifoldModel

HARD = "invariant"
THRESHOLD = "threshold"


@dataclass
class CheckResult:
    name: str
    kind: str
    passed: bool
    value: float | None
    limit: float | None
    detail: str = ""

    def as_dict(self) -> dict:
        out = asdict(self)
        for key in ("value", "limit"):
            v = out[key]
            if v is not None and not math.isfinite(v):
                out[key] = str(v)
        return out


def check_centering(ds: DDFDataset) -> CheckResult:
    worst = float(np.max(np.abs(ds.rho[:, 0]))) if len(ds) else 0.0
    return CheckResult("centering", HARD, worst == 0.0, worst, 0.0, "rho[:, 0] must vanish")


def check_finite(ds: DDFDataset) -> CheckResult:
    bad = int(np.sum(~np.isfinite(ds.rho)))
    return CheckResult("finite", HARD, bad == 0, float(bad), 0.0, "non-finite entries")


def check_solver_error(ds: DDFDataset, tol: Tolerances | None = None) -> CheckResult:
    tol = Tolerances() if tol is None else tol
    eps = ds.eps_solver
    return CheckResult("eps_solver", THRESHOLD, eps < tol["eps_solver"], eps, tol["eps_solver"],
                       "measured FMM error against the graph bracket")


def check_pairwise(ds: DDFDataset, tol: Tolerances | None = None) -> CheckResult:
    """Pairwise F distances: symmetric, zero diagonal, triangle within 3 eps."""
    pair = ds.fsamples.pairwise
    if pair is None:
        return CheckResult("pairwise_F", HARD, False, None, None, "missing pairwise distances")
    eps = ds.eps_solver
    asym = float(np.max(np.abs(pair - pair.T)))
    diag = float(np.max(np.abs(np.diag(pair))))
    excess = pair[:, None, :] - pair[:, :, None] - pair[None, :, :]
    worst = float(np.max(excess))
    limit = 3 * eps
    ok = asym == 0.0 and diag == 0.0 and worst <= limit
    return CheckResult("pairwise_F", HARD, ok, worst, limit,
                       f"asymmetry {asym:.3g}, diagonal {diag:.3g}")


def check_ddf_triangle(ds: DDFDataset, tol: Tolerances | None = None) -> CheckResult:
    """``|D_x(z_a, z_b)| <= d(z_a, z_b) + 2 eps`` for every sample and pair."""
    pair = ds.fsamples.pairwise
    if pair is None or len(ds) == 0:
        return CheckResult("ddf_triangle", HARD, pair is not None, None, None, "nothing to check")
    tol = Tolerances() if tol is None else tol
    slack = tol["triangle"] * ds.eps_solver
    worst = -np.inf
    worst_row = -1
    for start in range(0, len(ds), 256):
        block = ds.rho[start:start + 256]
        diff = np.abs(block[:, :, None] - block[:, None, :]) - pair[None]
        m = diff.reshape(len(block), -1).max(axis=1)
        k = int(np.argmax(m))
        if m[k] > worst:
            worst, worst_row = float(m[k]), start + k
    return CheckResult("ddf_triangle", HARD, worst <= slack, worst, slack,
                       f"worst sample {worst_row}")


def check_lipschitz(ds: DDFDataset, model: ManifoldModel, tol: Tolerances | None = None,
                    max_samples: int = 300, jobs: int = 1) -> CheckResult:
    """Sup-norm 2-Lipschitz bound on a subsample with ground truth."""
    from .reconstruct.embedding import verify_embedding

    tol = Tolerances() if tol is None else tol
    sub = ds if len(ds) <= max_samples else DDFDataset(
        ds.fsamples, ds.rho[:max_samples], ds.ground_truth[:max_samples], ds.provenance)
    rep = verify_embedding(sub, model, jobs=jobs)
    ok = rep["violations"] == 0
    return CheckResult("lipschitz", HARD, ok, rep["max_ratio"], rep["bound"],
                       f"{rep['violations']} violations over {rep['pairs']} pairs")


def boundary_recovery_errors(ds: DDFDataset, model: ManifoldModel, jobs: int = 1) -> dict:
    """Recovered vs solver distances between flagged F-samples, with the sampling gap.

    The gap for a pair ``(a, b)`` is ``2 min_x d(x, z_b)``: the recovered
    supremum can only see as far as the nearest sample to ``z_b``.
    """
    idx, rec = recover_boundary_matrix(ds)
    pts = ds.fsamples.points[idx]
    fields = solve_many(model, list(pts), jobs)
    truth = np.array([distance(f, pts) for f in fields])
    truth = 0.5 * (truth + truth.T)
    gap = None
    if not ds.blind:
        near = np.array([float(np.min(distance(f, ds.ground_truth))) for f in fields])
        gap = 2 * near[None, :] * np.ones((len(idx), 1))
    return {"indices": idx, "recovered": rec, "truth": truth, "gap": gap}


def check_boundary_recovery(ds: DDFDataset, model: ManifoldModel, tol: Tolerances | None = None,
                            jobs: int = 1) -> CheckResult:
    tol = Tolerances() if tol is None else tol
    info = boundary_recovery_errors(ds, model, jobs)
    err = np.abs(info["recovered"] - info["truth"])
    gap = 0.0 if info["gap"] is None else info["gap"]
    bound = tol["boundary_h"] * model.h + 2 * ds.eps_solver + gap
    excess = float(np.max(err - bound))
    return CheckResult("boundary_distance", THRESHOLD, excess <= 0, float(err.max()),
                       float(np.max(bound)), "per-pair bound c h + 2 eps + sampling gap")


def dataset_checks(ds: DDFDataset, model: ManifoldModel | None = None,
                   tol: Tolerances | None = None, jobs: int = 1) -> list[CheckResult]:
    out = [check_finite(ds), check_centering(ds), check_pairwise(ds, tol), check_ddf_triangle(ds, tol),
           check_solver_error(ds, tol)]
    if model is not None and not ds.blind and len(ds) >= 2:
        out.append(check_lipschitz(ds, model, tol, jobs=jobs))
    if model is not None and len(ds) and len(ds.fsamples.boundary_indices) >= 2:
        out.append(check_boundary_recovery(ds, model, tol, jobs))
    return out
