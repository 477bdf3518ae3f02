"""Embedding checks and dataset matching in the sup norm."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from ..ddf import DDFDataset, sup_norm_matrix
from ..eikonal import distance, solve_many
from ..errors import IncompatibleDatasetError, RequiresInstrumentedError
from ..manifold import ManifoldModel


def hidden_distance_matrix(model: ManifoldModel, X: np.ndarray, jobs: int = 1) -> np.ndarray:
    """Symmetrised solver distances among hidden points."""
    fields = solve_many(model, list(X), jobs)
    d = np.array([distance(f, X) for f in fields])
    d = 0.5 * (d + d.T)
    np.fill_diagonal(d, 0.0)
    return d


def verify_embedding(ds: DDFDataset, model: ManifoldModel, separation: float | None = None,
                     jobs: int = 1, distances: np.ndarray | None = None) -> dict:
    """Lipschitz and separation ratios ``|D_x - D_y|_inf / d(x, y)`` over sample pairs."""
    if ds.blind:
        raise RequiresInstrumentedError("embedding verification needs ground truth")
    n = len(ds)
    report = {"pairs": 0, "max_ratio": None, "min_ratio": None, "violations": 0,
              "min_separation": None, "bound": None}
    if n < 2:
        return report
    d = hidden_distance_matrix(model, ds.ground_truth, jobs) if distances is None else distances
    sup = sup_norm_matrix(ds.rho, ds.rho)
    iu = np.triu_indices(n, 1)
    dd, ss = d[iu], sup[iu]
    # coincident hidden points carry a tiny solver distance, not a true zero
    same = np.all(ds.ground_truth[iu[0]] == ds.ground_truth[iu[1]], axis=1)
    ok = (dd > 0) & ~same
    if not ok.any():
        return report
    ratio = ss[ok] / dd[ok]
    eps = ds.eps_solver
    # per-pair form of the 2-Lipschitz bound with solver slack
    violations = int(np.sum(ss[ok] > 2 * dd[ok] + 4 * eps))
    min_sep = float(dd[ok].min())
    sep = 5 * model.h if separation is None else separation
    far = dd[ok] > sep
    report.update({
        "pairs": int(ok.sum()),
        "max_ratio": float(ratio.max()),
        "min_ratio": float(ratio[far].min()) if far.any() else None,
        "violations": violations,
        "min_separation": min_sep,
        "bound": 2.0 + 4 * eps / min_sep,
    })
    return report


@dataclass(frozen=True, eq=False)
class Correspondence:
    """``pairing[j]`` is the ds1 index matched to ds2 sample ``j`` (or -1)."""

    pairing: np.ndarray
    distortion: np.ndarray
    threshold: float
    n_reference: int = 0

    @property
    def matched(self) -> np.ndarray:
        return self.pairing >= 0

    @property
    def max_residual(self) -> float:
        ok = self.matched
        return float(self.distortion[ok].max()) if ok.any() else 0.0

    @property
    def unmatched_reference(self) -> np.ndarray:
        """ds1 samples that no ds2 sample was paired with."""
        return np.setdiff1d(np.arange(self.n_reference), self.pairing[self.matched])

    def injective(self) -> bool:
        p = self.pairing[self.matched]
        return len(np.unique(p)) == len(p)


def match_datasets(ds1: DDFDataset, ds2: DDFDataset, threshold: float) -> Correspondence:
    """Pair every ds2 sample with its sup-norm nearest ds1 sample.

    Collisions are resolved by a minimum-cost assignment, so the pairing is
    injective; pairs whose residual exceeds ``threshold`` are left unmatched.
    """
    if ds1.K != ds2.K:
        raise IncompatibleDatasetError("datasets have different K")
    if len(ds1) == 0 or len(ds2) == 0:
        return Correspondence(np.full(len(ds2), -1), np.full(len(ds2), np.inf), threshold,
                              len(ds1))
    dm = sup_norm_matrix(ds2.rho, ds1.rho)
    pairing = np.argmin(dm, axis=1)
    if len(np.unique(pairing)) < len(pairing):
        rows, cols = linear_sum_assignment(dm)
        pairing = np.full(len(ds2), -1)
        pairing[rows] = cols
    resid = np.where(pairing >= 0, dm[np.arange(len(ds2)), np.maximum(pairing, 0)], np.inf)
    pairing = np.where(resid <= threshold, pairing, -1)
    return Correspondence(pairing.astype(np.int64), resid, threshold, len(ds1))
