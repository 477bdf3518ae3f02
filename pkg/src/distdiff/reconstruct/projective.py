"""Projective (geodesic) equivalence: gauge transforms and the Matveev invariant."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from ..errors import DegenerateMetricError, NotProjectivelyRelatedError
from ..manifold import GeodesicCurve

_EYE = np.eye(2)


def gauge_transform(christoffel: np.ndarray, phi: np.ndarray) -> np.ndarray:
    """``G~[k,i,j] = G[k,i,j] + delta^k_i phi_j + delta^k_j phi_i`` pointwise."""
    christoffel = np.asarray(christoffel, dtype=float)
    phi = np.asarray(phi, dtype=float)
    shift = np.einsum("ki,...j->...kij", _EYE, phi) + np.einsum("kj,...i->...kij", _EYE, phi)
    return christoffel + shift


def cone_directions(count: int = 16, half_angle: float = np.pi) -> np.ndarray:
    """Unit directions spread over an angular window (the whole circle by default)."""
    ang = np.linspace(-half_angle, half_angle, count, endpoint=half_angle < np.pi)
    return np.stack([np.cos(ang), np.sin(ang)], axis=1)


def forcing_term(delta: np.ndarray, metric: np.ndarray, v: np.ndarray) -> np.ndarray:
    """``f(v) = dG[k,i,j] v^i v^j g_kl v^l / g(v, v)`` for difference tensor ``dG``."""
    acc = np.einsum("...kij,ni,nj->...nk", delta, v, v)
    gv = np.einsum("...kl,nl->...nk", metric, v)
    return np.einsum("...nk,...nk->...n", acc, gv) / np.einsum("...nk,nk->...n", gv, v)


@dataclass(frozen=True)
class ProjectiveFit:
    phi: np.ndarray
    residual: float
    forcing: np.ndarray


def fit_projective_1form(christoffel: np.ndarray, christoffel_tilde: np.ndarray, metric: np.ndarray,
                         directions: np.ndarray | None = None, tol: float = 1e-3,
                         raise_on_fail: bool = True) -> ProjectiveFit:
    """Recover ``phi`` with ``G~ - G = delta phi + delta phi`` from cone samples.

    Along each direction ``v`` the forcing ``f(v)`` equals ``2 phi(v)`` when
    the connections are projectively related; ``phi`` is the least-squares
    solution of that linear system.  The residual is the largest entry of
    ``G~ - G - delta phi - delta phi``.
    """
    directions = cone_directions() if directions is None else np.asarray(directions, float)
    delta = np.asarray(christoffel_tilde, float) - np.asarray(christoffel, float)
    f = forcing_term(delta, np.asarray(metric, float), directions)
    # solve 2 phi . v = f(v) for every point at once
    sol, *_ = np.linalg.lstsq(2 * directions, np.moveaxis(f, -1, 0).reshape(len(directions), -1),
                              rcond=None)
    phi = np.moveaxis(sol.reshape((2,) + f.shape[:-1]), 0, -1)
    resid = float(np.max(np.abs(delta - gauge_transform(np.zeros_like(delta), phi))))
    if raise_on_fail and resid > tol:
        raise NotProjectivelyRelatedError(f"gauge residual {resid:.3g} exceeds {tol:.3g}")
    return ProjectiveFit(phi, resid, f)


def matveev_invariant(g: np.ndarray, g_tilde: np.ndarray, v: np.ndarray) -> float:
    """``I0 = (det g / det g~)^(2/3) g~(v, v)`` in dimension two."""
    g = np.asarray(g, float)
    g_tilde = np.asarray(g_tilde, float)
    v = np.asarray(v, float)
    det_t = np.linalg.det(g_tilde)
    det_g = np.linalg.det(g)
    if not det_t > 1e-300 or not det_g > 1e-300:
        raise DegenerateMetricError("metric is singular")
    return float((det_g / det_t) ** (2.0 / 3.0) * (v @ g_tilde @ v))


MetricFn = Callable[[np.ndarray], np.ndarray]


def invariant_along(curve: GeodesicCurve, g: MetricFn, g_tilde: MetricFn) -> np.ndarray:
    return np.array([matveev_invariant(g(p), g_tilde(p), v)
                     for p, v in zip(curve.points, curve.velocities)])


def check_geodesic_equivalence(g: MetricFn, g_tilde: MetricFn, curves: Sequence[GeodesicCurve],
                               f_points: np.ndarray | None = None, f_tol: float = 1e-9) -> dict:
    """Drift of ``I0`` along g-geodesics plus the implied conformal factor.

    When ``f_points`` (points of F) are given, ``g = g~`` is checked there
    first; a mismatch is flagged and the conformal check is skipped.
    """
    report: dict = {"drifts": [], "max_drift": 0.0, "f_mismatch": False,
                    "conformal_factor_deviation": None}
    if f_points is not None and len(f_points):
        gap = max(float(np.max(np.abs(g(p) - g_tilde(p))) / np.max(np.abs(g(p))))
                  for p in np.atleast_2d(f_points))
        report["f_gap"] = gap
        report["f_mismatch"] = gap > f_tol
    worst_f = 0.0
    for curve in curves:
        inv = invariant_along(curve, g, g_tilde)
        drift = float(np.max(np.abs(inv / inv[0] - 1.0)))
        report["drifts"].append(drift)
        if f_points is not None and not report["f_mismatch"]:
            # g~ = f g implies I0 = f^(-1/3) g(v, v)
            gvv = np.array([v @ g(p) @ v for p, v in zip(curve.points, curve.velocities)])
            factor = (gvv / inv) ** 3
            worst_f = max(worst_f, float(np.max(np.abs(factor - 1.0))))
    report["max_drift"] = max(report["drifts"], default=0.0)
    if f_points is not None and not report["f_mismatch"]:
        report["conformal_factor_deviation"] = worst_f
    return report
