"""Distance-difference charts and local metric recovery inside them."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import least_squares

from ..ddf import DDFDataset, sup_norm_matrix
from ..errors import (
    DegenerateChartError,
    InvalidRequestError,
    RecoveryFailedError,
    UnderdeterminedError,
)
from ..manifold import ManifoldModel, displacement

NEIGHBOURS = 12


def reference_vector(ds: DDFDataset, index: int) -> np.ndarray:
    """Centred vector of an F-sample itself, from the known F distances."""
    pair = ds.fsamples.pairwise
    if pair is None:
        raise InvalidRequestError("dataset lacks pairwise F distances")
    return pair[index] - pair[index, 0]


def estimated_distance_to(ds: DDFDataset, index: int, rows=None) -> np.ndarray:
    """Lower bound ``|D_x - D_z|_inf / 2`` of ``d(x, z_index)`` per sample."""
    rho = ds.rho if rows is None else ds.rho[rows]
    delta = rho - reference_vector(ds, index)
    return 0.5 * (delta.max(axis=-1) - delta.min(axis=-1))


def classical_mds(dist: np.ndarray, dim: int = 2) -> np.ndarray:
    n = len(dist)
    j = np.eye(n) - 1.0 / n
    b = -0.5 * j @ (dist ** 2) @ j
    vals, vecs = np.linalg.eigh(b)
    order = np.argsort(vals)[::-1][:dim]
    return vecs[:, order] * np.sqrt(np.maximum(vals[order], 0.0))


def _quadratic_design(u: np.ndarray) -> np.ndarray:
    x, y = u[:, 0], u[:, 1]
    return np.stack([np.ones_like(x), x, y, x * x, x * y, y * y], axis=1)


def local_gradient(u: np.ndarray, values: np.ndarray, weights: np.ndarray | None = None) -> np.ndarray:
    """Weighted quadratic regression; returns the linear coefficients at ``u = 0``.

    ``values`` may be ``(m,)`` or ``(m, k)``; the result has shape ``(2,)`` or
    ``(k, 2)``.  Falls back to a linear model when too few points remain.
    """
    a = _quadratic_design(u) if len(u) >= 8 else _quadratic_design(u)[:, :3]
    w = np.ones(len(u)) if weights is None else weights
    sw = np.sqrt(w)
    coef, *_ = np.linalg.lstsq(a * sw[:, None], values * (sw if values.ndim == 1 else sw[:, None]),
                               rcond=None)
    lin = coef[1:3]
    return lin if values.ndim == 1 else lin.T


def _weights(dist: np.ndarray) -> np.ndarray:
    scale = np.max(dist) if np.max(dist) > 0 else 1.0
    return np.exp(-(dist / scale) ** 2)


@dataclass(frozen=True, eq=False)
class Chart:
    """Coordinates ``H(y) = (D_y(z_i1, z), D_y(z_i2, z))`` around a centre sample."""

    center: int
    z_index: int
    tuple_indices: tuple[int, int]
    coords: np.ndarray
    neighbours: np.ndarray
    local_frame: np.ndarray
    jacobian: np.ndarray
    conditioning: float
    frame: str

    @property
    def center_coords(self) -> np.ndarray:
        return self.coords[self.center]

    def locally_injective(self, tol: float = 1e-12) -> bool:
        pts = self.coords[np.concatenate([[self.center], self.neighbours])]
        d = np.linalg.norm(pts[:, None] - pts[None], axis=-1)
        iu = np.triu_indices(len(pts), 1)
        return bool(np.all(d[iu] > tol))


def chart_coordinates(ds: DDFDataset, z_index: int, tuple_indices) -> np.ndarray:
    idx = list(tuple_indices)
    return ds.rho[:, idx] - ds.rho[:, [z_index]]


def nearest_samples(ds: DDFDataset, center: int, count: int = NEIGHBOURS) -> tuple[np.ndarray, np.ndarray]:
    d = sup_norm_matrix(ds.rho[center], ds.rho)[0]
    d[center] = np.inf
    order = np.argsort(d, kind="stable")[:count]
    return order, d[order]


def build_chart(ds: DDFDataset, center: int, z_index: int, tuple_indices, sigma_min: float = 0.05,
                model: ManifoldModel | None = None, neighbours: int = NEIGHBOURS,
                use_ground_truth: bool = False) -> Chart:
    """Distance-difference chart at a sample with a fitted Jacobian.

    The Jacobian is regressed against a local frame built from the
    neighbourhood: classical MDS of half sup-norm distances (blind), or
    ground-truth coordinate displacements when ``use_ground_truth`` is set
    on an instrumented dataset (``model`` needed for periodic wrapping).
    """
    tuple_indices = tuple(int(i) for i in tuple_indices)
    if len(tuple_indices) != 2:
        raise InvalidRequestError("a 2-manifold chart needs two reference indices")
    if len(set(tuple_indices)) < 2 or z_index in tuple_indices:
        raise DegenerateChartError("reference tuple indices must be distinct and differ from z")
    h = float(ds.provenance.get("h", 0.0))
    if h and estimated_distance_to(ds, z_index, [center])[0] <= 4 * h:
        raise InvalidRequestError("chart centre is too close to the reference point")
    coords = chart_coordinates(ds, z_index, tuple_indices)
    nbr, _ = nearest_samples(ds, center, neighbours)
    hood = np.concatenate([[center], nbr])
    if use_ground_truth:
        if ds.blind or model is None:
            raise InvalidRequestError("ground-truth frame needs an instrumented dataset and model")
        frame = displacement(model, ds.ground_truth[center], ds.ground_truth[hood])
        kind = "ground-truth"
    else:
        dist = 0.5 * sup_norm_matrix(ds.rho[hood], ds.rho[hood])
        frame = classical_mds(dist)
        frame = frame - frame[0]
        kind = "mds"
    w = _weights(np.linalg.norm(frame, axis=1))
    jac = local_gradient(frame, coords[hood] - coords[center], w)
    sv = np.linalg.svd(jac, compute_uv=False)
    cond = float(sv[-1])
    if not np.isfinite(cond) or cond < sigma_min:
        raise DegenerateChartError(f"chart conditioning {cond:.3g} below {sigma_min}")
    return Chart(center, z_index, tuple_indices, coords, nbr, frame, jac, cond, kind)


# ---------------------------------------------------------------------------
# metric recovery


@dataclass(frozen=True)
class MetricEstimate:
    metric: np.ndarray  # metric in chart coordinates
    inverse: np.ndarray
    covector: np.ndarray  # differential of d(., z) in chart coordinates
    residual: float
    covectors: np.ndarray


def _unpack(params: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    l11, l21, l22, p1, p2 = params
    low = np.array([[l11, 0.0], [l21, l22]])
    return low @ low.T, np.array([p1, p2])


def _linear_start(q: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Null vector of ``q^T G q + 2 q . m = 0`` over unknowns ``(G, m)``."""
    a = np.stack([q[:, 0] ** 2, 2 * q[:, 0] * q[:, 1], q[:, 1] ** 2, 2 * q[:, 0], 2 * q[:, 1]], 1)
    _, _, vt = np.linalg.svd(a)
    v = vt[-1]
    ginv = np.array([[v[0], v[1]], [v[1], v[2]]])
    if np.trace(ginv) < 0:
        ginv, v = -ginv, -v
    m = v[3:]
    eig = np.linalg.eigvalsh(ginv)
    if eig[0] <= 0:
        return np.eye(2), np.zeros(2)
    p = np.linalg.solve(ginv, m)
    scale = p @ ginv @ p
    if scale <= 0:
        return np.eye(2), np.zeros(2)
    # (G, m) -> (G / s, m / s) keeps the null relation and makes |p|_G = 1
    return ginv / scale, p


def fit_covectors(ds: DDFDataset, chart: Chart, w_indices) -> np.ndarray:
    """Gradients of ``u_w = D_y(z_w, z)`` with respect to chart coordinates.

    Both ``u_w`` and ``H`` are regressed on the chart's local frame and
    combined by the chain rule, ``q_w = grad u_w . (grad H)^-1``; this keeps
    the curvature of ``H`` itself out of the fitted covectors.
    """
    hood = np.concatenate([[chart.center], chart.neighbours])
    vals = ds.rho[np.ix_(hood, list(w_indices))] - ds.rho[hood][:, [chart.z_index]]
    vals = vals - vals[0]
    w = _weights(np.linalg.norm(chart.local_frame, axis=1))
    grad_u = local_gradient(chart.local_frame, vals, w)
    return grad_u @ np.linalg.inv(chart.jacobian)


def solve_metric(q: np.ndarray, loss_scale: float = 0.02) -> MetricEstimate:
    """Inverse metric ``G`` and covector ``p`` with ``|p|_G = |p + q_w|_G = 1``.

    Starts from the linear null-vector solution and refines with a soft-L1
    loss so that one badly regressed covector cannot dominate.
    """
    q = np.asarray(q, dtype=float)
    if len(q) < 5:
        raise UnderdeterminedError(f"need at least 5 reference covectors, got {len(q)}")
    g0, p0 = _linear_start(q)
    try:
        low = np.linalg.cholesky(g0)
    except np.linalg.LinAlgError:
        low = np.eye(2)

    def resid(params):
        ginv, p = _unpack(params)
        shifted = p[None, :] + q
        r = np.einsum("ni,ij,nj->n", shifted, ginv, shifted) - 1.0
        return np.concatenate([r, [p @ ginv @ p - 1.0]])

    x0 = np.array([low[0, 0], low[1, 0], low[1, 1], *p0])
    sol = least_squares(resid, x0, loss="soft_l1", f_scale=loss_scale, xtol=1e-14, ftol=1e-14,
                        gtol=1e-14)
    ginv, p = _unpack(sol.x)
    eig = np.linalg.eigvalsh(ginv)
    if not sol.success or eig[0] <= 1e-12 * max(eig[1], 1e-300):
        cond = float(np.linalg.cond(q.T @ q))
        raise RecoveryFailedError(f"metric fit failed (status {sol.status}, cond(q^T q)={cond:.3g})")
    res = float(np.max(np.abs(sol.fun)))
    return MetricEstimate(np.linalg.inv(ginv), ginv, p, res, q)


def recover_metric_in_chart(ds: DDFDataset, chart: Chart, w_indices) -> MetricEstimate:
    """Local metric at the chart centre, expressed in chart coordinates."""
    w_indices = [int(w) for w in w_indices]
    if len(w_indices) < 5:
        raise UnderdeterminedError("at least five reference points are required (5 unknowns)")
    return solve_metric(fit_covectors(ds, chart, w_indices))


def metric_in_frame(estimate: MetricEstimate, chart: Chart) -> np.ndarray:
    """Pull the chart-coordinate metric back to the chart's local frame."""
    j = chart.jacobian
    return j.T @ estimate.metric @ j


def relative_frobenius(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.linalg.norm(a - b) / np.linalg.norm(b))
