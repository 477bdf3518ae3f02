"""Geodesic images recovered from data: sigma-sets and direction cones."""

from __future__ import annotations

from dataclasses import dataclass, field
import math
import warnings

import numpy as np

from ..ddf import DDFDataset
from ..errors import EmptySigmaWarning, InsufficientDataError, InvalidRequestError
from ..manifold import ManifoldModel, displacement
from .charts import estimated_distance_to


@dataclass(frozen=True, eq=False)
class SigmaSet:
    """Samples whose ``D_x(., z)`` has gradient ``xi`` at the anchor ``z``."""

    anchor: int
    z_index: int
    xi: np.ndarray
    members: np.ndarray
    order_values: np.ndarray
    auxiliary: int
    distances: np.ndarray

    def __len__(self) -> int:
        return len(self.members)


def stencil_spacing(ds: DDFDataset, anchor: int) -> float:
    row = ds.fsamples.stencils[anchor]
    pts = ds.fsamples.points
    return float(np.linalg.norm(pts[row[1]] - pts[row[0]]))


def sample_gradients(ds: DDFDataset, anchor: int, metric_z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """g-unit gradient vectors of ``y -> D_x(y, z)`` at the anchor and their raw g-norms."""
    if anchor >= len(ds.fsamples.stencils):
        raise InvalidRequestError("dataset has no gradient stencil for this anchor")
    _, px, mx, py, my = ds.fsamples.stencils[anchor]
    step = stencil_spacing(ds, anchor)
    diff = np.stack([ds.rho[:, px] - ds.rho[:, mx], ds.rho[:, py] - ds.rho[:, my]], axis=1) / (2 * step)
    vec = diff @ np.linalg.inv(metric_z).T
    norms = np.sqrt(np.maximum(np.einsum("ni,ni->n", diff, vec), 0.0))
    unit = vec / np.where(norms > 0, norms, 1.0)[:, None]
    return unit, norms


def metric_from_stencil(ds: DDFDataset, anchor: int, band: float = 0.05) -> np.ndarray:
    """Estimate ``g(z)`` at an anchor from the data alone.

    Wherever the distance to ``z`` is smooth its covector ``p`` has unit dual
    norm, ``p^T g^-1 p = 1``; fit the three entries of ``g^-1`` by least
    squares, drop samples off by more than ``band`` and refit once.
    """
    _, px, mx, py, my = ds.fsamples.stencils[anchor]
    step = stencil_spacing(ds, anchor)
    p = np.stack([ds.rho[:, px] - ds.rho[:, mx], ds.rho[:, py] - ds.rho[:, my]], axis=1) / (2 * step)
    design = np.column_stack([p[:, 0] ** 2, 2 * p[:, 0] * p[:, 1], p[:, 1] ** 2])
    keep = np.ones(len(p), bool)
    for _ in range(2):
        if keep.sum() < 3:
            raise InsufficientDataError("too few samples to estimate the metric at the anchor")
        coef, *_ = np.linalg.lstsq(design[keep], np.ones(keep.sum()), rcond=None)
        keep = np.abs(design @ coef - 1.0) <= band
    ginv = np.array([[coef[0], coef[1]], [coef[1], coef[2]]])
    if np.any(np.linalg.eigvalsh(ginv) <= 0):
        raise InsufficientDataError("metric estimate at the anchor is not positive definite")
    return np.linalg.inv(ginv)


def unit_direction(metric_z: np.ndarray, angle: float) -> np.ndarray:
    v = np.array([math.cos(angle), math.sin(angle)])
    return v / math.sqrt(v @ metric_z @ v)


def extract_sigma_set(ds: DDFDataset, anchor: int, xi, metric_z: np.ndarray,
                      angle_scale: float = 2.0, norm_band: float = 5.0,
                      auxiliary: int | None = None) -> SigmaSet:
    """Collect the samples lying on the geodesic leaving the anchor in direction ``-xi``.

    A sample belongs when its gradient at the anchor is within
    ``angle_scale * h / d`` of ``xi`` (``d`` the data-estimated distance to the
    anchor) and its raw gradient norm is within ``1 +- norm_band * h``.
    Members are ordered by ``D_x(z', z)`` for an auxiliary F-sample ``z'``,
    which decreases along the geodesic.
    """
    xi = np.asarray(xi, dtype=float)
    nxi = math.sqrt(xi @ metric_z @ xi)
    if not np.isfinite(nxi) or nxi == 0:
        raise InvalidRequestError("xi must be a nonzero vector")
    xi = xi / nxi
    z_index = int(ds.fsamples.stencils[anchor][0])
    h = stencil_spacing(ds, anchor)
    unit, norms = sample_gradients(ds, anchor, metric_z)
    cosang = np.clip(unit @ metric_z @ xi, -1.0, 1.0)
    angle = np.arccos(cosang)
    dist = estimated_distance_to(ds, z_index)
    ok = (dist > 2 * h) & (np.abs(norms - 1.0) <= norm_band * h) & (angle < angle_scale * h / np.maximum(dist, h))
    members = np.flatnonzero(ok)
    if len(members) < 2:
        warnings.warn(f"sigma-set at anchor {anchor} has {len(members)} member(s)",
                      EmptySigmaWarning, stacklevel=2)
    stencil = set(int(i) for i in ds.fsamples.stencils[anchor])
    if auxiliary is None:
        candidates = [a for a in range(ds.K) if a not in stencil]
        if len(members) >= 2:
            spread = [np.ptp(ds.rho[members, a] - ds.rho[members, z_index]) for a in candidates]
            auxiliary = candidates[int(np.argmax(spread))]
        else:
            auxiliary = candidates[0]
    values = ds.rho[members, auxiliary] - ds.rho[members, z_index]
    order = np.argsort(-values, kind="stable")
    return SigmaSet(anchor, z_index, xi, members[order], values[order], int(auxiliary),
                    dist[members[order]])


def sigma_sets_for_anchor(ds: DDFDataset, anchor: int, metric_z: np.ndarray, directions: int = 16,
                          **kwargs) -> list[SigmaSet]:
    out = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", EmptySigmaWarning)
        for k in range(directions):
            xi = unit_direction(metric_z, 2 * math.pi * k / directions)
            out.append(extract_sigma_set(ds, anchor, xi, metric_z, **kwargs))
    return out


# ---------------------------------------------------------------------------
# verification helpers (need positions)


def point_to_polyline(model: ManifoldModel | None, points: np.ndarray, curve: np.ndarray) -> np.ndarray:
    """Coordinate distance from each point to a polyline (periodic aware)."""
    points = np.atleast_2d(points)
    out = np.full(len(points), np.inf)
    a = curve[:-1]
    seg = displacement(model, a, curve[1:]) if model is not None else curve[1:] - a
    seg_len2 = np.maximum(np.einsum("ij,ij->i", seg, seg), 1e-300)
    for i, p in enumerate(points):
        rel = displacement(model, a, p) if model is not None else p - a
        t = np.clip(np.einsum("ij,ij->i", rel, seg) / seg_len2, 0.0, 1.0)
        d = np.linalg.norm(rel - t[:, None] * seg, axis=1)
        out[i] = d.min()
    return out


def chord_turning(model: ManifoldModel | None, points: np.ndarray, min_chord: float) -> float:
    """Largest turn (degrees) between consecutive chords of length >= ``min_chord``."""
    if len(points) < 3:
        return 0.0
    keep = [points[0]]
    for p in points[1:]:
        d = displacement(model, keep[-1], p) if model is not None else p - keep[-1]
        if np.linalg.norm(d) >= min_chord:
            keep.append(p)
    if len(keep) < 3:
        return 0.0
    keep = np.array(keep)
    chords = displacement(model, keep[:-1], keep[1:]) if model is not None else np.diff(keep, axis=0)
    chords /= np.linalg.norm(chords, axis=1, keepdims=True)
    cos = np.clip(np.einsum("ij,ij->i", chords[:-1], chords[1:]), -1, 1)
    return float(np.degrees(np.arccos(cos)).max())


# ---------------------------------------------------------------------------
# direction cones


@dataclass(eq=False)
class GeodesicFamily:
    """Per sample: the unit directions of sigma-sets through it (as +-pairs)."""

    directions: dict[int, np.ndarray] = field(default_factory=dict)
    n_samples: int = 0

    def cone(self, sample: int) -> np.ndarray:
        d = self.directions.get(sample)
        if d is None or len(d) == 0:
            return np.zeros((0, 2))
        return np.concatenate([d, -d])

    def pair_count(self, sample: int) -> int:
        d = self.directions.get(sample)
        return 0 if d is None else len(d)

    @property
    def empty(self) -> np.ndarray:
        return np.array([i for i in range(self.n_samples) if self.pair_count(i) == 0], dtype=int)


def build_geodesic_family(sigma_sets: list[SigmaSet], coords: np.ndarray, n_samples: int,
                          model: ManifoldModel | None = None, window: int = 3,
                          merge_degrees: float = 5.0) -> GeodesicFamily:
    """Assemble direction cones from sigma-set memberships.

    The local direction at a member is the principal axis of the members
    within ``window`` positions of it along the sorted set.
    """
    found: dict[int, list[np.ndarray]] = {}
    for sig in sigma_sets:
        mem = sig.members
        if len(mem) < 2:
            continue
        for k, s in enumerate(mem):
            lo, hi = max(0, k - window), min(len(mem), k + window + 1)
            pts = coords[mem[lo:hi]]
            rel = displacement(model, coords[s], pts) if model is not None else pts - coords[s]
            rel = rel - rel.mean(axis=0)
            _, _, vt = np.linalg.svd(rel, full_matrices=False)
            v = vt[0] / np.linalg.norm(vt[0])
            if v[0] < 0 or (v[0] == 0 and v[1] < 0):
                v = -v
            lst = found.setdefault(int(s), [])
            if all(abs(v @ u) < math.cos(math.radians(merge_degrees)) for u in lst):
                lst.append(v)
    return GeodesicFamily({k: np.array(v) for k, v in found.items()}, n_samples)
