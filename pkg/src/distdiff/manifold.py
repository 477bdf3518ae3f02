"""Discretized closed Riemannian 2-manifolds and their local geometry.

A :class:`ManifoldModel` is a regular grid of vertices carrying a symmetric
2x2 metric tensor and a region label (hidden region M, known region F, and
the F-vertices touching M which form the discrete boundary).  Periodic axes
wrap, so the default model is a flat torus ``[0, 1)^2`` with an arbitrary
smooth metric.

Two interpolants are used on purpose:

* ``metric_at`` / ``christoffel_at`` are bilinear (cheap, exact at vertices),
  matching what a data-defined model can honestly offer;
* geodesic tracing uses a quintic B-spline of the metric samples and its
  exact Levi-Civita connection, so that the speed along a traced curve is
  conserved to integrator accuracy.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
import hashlib
import json
import math
from typing import Callable, Sequence

import numba
import numpy as np
from scipy import ndimage
from scipy.interpolate import CubicSpline
from scipy.integrate import cumulative_trapezoid

from .errors import (
    CorruptModelError,
    DegenerateMetricError,
    GeodesicInstabilityError,
    InconclusiveError,
    InvalidRequestError,
)

REGION_M = 0
REGION_F = 1
REGION_BOUNDARY = 2

_N4 = ((1, 0), (-1, 0), (0, 1), (0, -1))
_N8 = _N4 + ((1, 1), (1, -1), (-1, 1), (-1, -1))


def region_from_mask(m_mask: np.ndarray, periodic=(True, True)) -> np.ndarray:
    """Label vertices as M, F, or boundary (F-vertices 4-adjacent to M)."""
    m_mask = np.asarray(m_mask, dtype=bool)
    touches = np.zeros_like(m_mask)
    for di, dj in _N4:
        touches |= _shift(m_mask, di, dj, periodic, fill=False)
    labels = np.full(m_mask.shape, REGION_F, dtype=np.int8)
    labels[~m_mask & touches] = REGION_BOUNDARY
    labels[m_mask] = REGION_M
    return labels


def _shift(a, di, dj, periodic, fill):
    """out[i, j] = a[i + di, j + dj] with wrap or ``fill`` outside."""
    out = a
    for axis, d in ((0, di), (1, dj)):
        if d == 0:
            continue
        if periodic[axis]:
            out = np.roll(out, -d, axis=axis)
        else:
            rolled = np.roll(out, -d, axis=axis)
            idx = [slice(None)] * out.ndim
            idx[axis] = slice(-d, None) if d > 0 else slice(None, -d)
            rolled[tuple(idx)] = fill
            out = rolled
    return out


@dataclass(frozen=True, eq=False)
class ManifoldModel:
    """Grid model of a closed 2-manifold N = M u F.

    ``metric`` has shape ``(nx, ny, 2, 2)``; vertex ``(i, j)`` sits at
    ``origin + h * (i, j)``.  ``kind`` is ``"periodic-grid-torus"`` or
    ``"analytic-patch"``.
    """

    kind: str
    metric: np.ndarray
    region: np.ndarray
    h: float
    origin: tuple[float, float] = (0.0, 0.0)
    periodic: tuple[bool, bool] = (True, True)
    name: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.metric.ndim != 4 or self.metric.shape[2:] != (2, 2):
            raise CorruptModelError("metric must have shape (nx, ny, 2, 2)")
        if self.region.shape != self.metric.shape[:2]:
            raise CorruptModelError("region mask shape does not match metric grid")
        if self.h <= 0:
            raise CorruptModelError("grid spacing must be positive")

    @property
    def shape(self) -> tuple[int, int]:
        return self.metric.shape[:2]

    @property
    def extent(self) -> np.ndarray:
        return np.array(self.shape, dtype=float) * self.h

    @property
    def m_mask(self) -> np.ndarray:
        return self.region == REGION_M

    @property
    def f_mask(self) -> np.ndarray:
        return self.region != REGION_M

    @property
    def boundary_mask(self) -> np.ndarray:
        return self.region == REGION_BOUNDARY

    @cached_property
    def f_interior_mask(self) -> np.ndarray:
        inside = self.f_mask.copy()
        for di, dj in _N8:
            inside &= _shift(self.f_mask, di, dj, self.periodic, fill=False)
        return inside

    def vertex_coords(self, idx) -> np.ndarray:
        idx = np.asarray(idx, dtype=float)
        return np.asarray(self.origin) + self.h * idx

    @cached_property
    def grid_points(self) -> np.ndarray:
        nx, ny = self.shape
        ii, jj = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
        return self.vertex_coords(np.stack([ii, jj], axis=-1))

    def nearest_vertex(self, p) -> tuple[int, int]:
        u = np.rint(index_coords(self, p)).astype(int)
        nx, ny = self.shape
        return (int(u[0] % nx) if self.periodic[0] else int(np.clip(u[0], 0, nx - 1)),
                int(u[1] % ny) if self.periodic[1] else int(np.clip(u[1], 0, ny - 1)))

    def label_at(self, p) -> int:
        return int(self.region[self.nearest_vertex(p)])

    def validate(self) -> "ManifoldModel":
        """Check the ManifoldModel / MetricTensorField invariants."""
        g = self.metric
        if not np.all(np.isfinite(g)):
            raise CorruptModelError("metric contains non-finite entries")
        if not np.allclose(g[..., 0, 1], g[..., 1, 0]):
            raise DegenerateMetricError("metric samples are not symmetric")
        if np.min(np.linalg.eigvalsh(g)) <= 0:
            raise DegenerateMetricError("metric samples are not positive definite")
        if not self.f_interior_mask.any():
            raise InvalidRequestError("F has empty interior")
        return self

    def with_region(self, m_mask: np.ndarray, name: str | None = None) -> "ManifoldModel":
        return ManifoldModel(self.kind, self.metric, region_from_mask(m_mask, self.periodic),
                             self.h, self.origin, self.periodic,
                             self.name if name is None else name, dict(self.meta))

    @cached_property
    def model_hash(self) -> str:
        sha = hashlib.sha256()
        sha.update(np.ascontiguousarray(self.metric, dtype="<f8").tobytes())
        sha.update(np.ascontiguousarray(self.region, dtype="i1").tobytes())
        sha.update(repr((self.kind, float(self.h), tuple(self.origin), tuple(self.periodic))).encode())
        return sha.hexdigest()[:16]

    @cached_property
    def christoffel_grid(self) -> np.ndarray:
        return _christoffel_grid(self)

    @cached_property
    def spline(self) -> "SmoothMetric":
        return SmoothMetric(self)

    def diameter_bound(self) -> float:
        """Upper bound of the coordinate diameter times the largest metric scale."""
        lam = float(np.max(np.linalg.eigvalsh(self.metric)))
        return float(np.hypot(*self.extent)) * math.sqrt(lam)


# ---------------------------------------------------------------------------
# interpolation


def index_coords(model: ManifoldModel, p) -> np.ndarray:
    return (np.asarray(p, dtype=float) - np.asarray(model.origin)) / model.h


def wrap_point(model: ManifoldModel, p) -> np.ndarray:
    """Map points into the canonical coordinate box (periodic axes only)."""
    p = np.array(p, dtype=float)
    ext = model.extent
    org = np.asarray(model.origin)
    for ax in range(2):
        if model.periodic[ax]:
            p[..., ax] = org[ax] + np.mod(p[..., ax] - org[ax], ext[ax])
    return p


def displacement(model: ManifoldModel, a, b) -> np.ndarray:
    """Shortest coordinate displacement ``b - a`` respecting periodicity."""
    d = np.asarray(b, dtype=float) - np.asarray(a, dtype=float)
    ext = model.extent
    for ax in range(2):
        if model.periodic[ax]:
            d[..., ax] -= ext[ax] * np.round(d[..., ax] / ext[ax])
    return d


def _cell_weights(model: ManifoldModel, p):
    u = index_coords(model, p)
    u = np.atleast_2d(u)
    nx, ny = model.shape
    i0 = np.floor(u).astype(np.int64)
    fr = u - i0
    idx = []
    for ax, n in ((0, nx), (1, ny)):
        lo = i0[:, ax]
        f = fr[:, ax]
        if model.periodic[ax]:
            lo = np.mod(lo, n)
            hi = np.mod(lo + 1, n)
        else:
            if np.any(u[:, ax] < -1e-9) or np.any(u[:, ax] > n - 1 + 1e-9):
                raise InvalidRequestError("point outside the model's coordinate domain")
            lo = np.clip(lo, 0, n - 2)
            f = u[:, ax] - lo
            hi = lo + 1
        idx.append((lo, hi, f))
    return idx


def bilinear(model: ManifoldModel, values: np.ndarray, p) -> np.ndarray:
    """Bilinearly interpolate a per-vertex array (trailing dims allowed)."""
    scalar = np.ndim(p) == 1
    (i0, i1, fx), (j0, j1, fy) = _cell_weights(model, p)
    shp = (-1,) + (1,) * (values.ndim - 2)
    fx = fx.reshape(shp)
    fy = fy.reshape(shp)
    out = np.zeros(np.broadcast_shapes(fx.shape, values[i0, j0].shape))
    for w, v in (((1 - fx) * (1 - fy), values[i0, j0]), (fx * (1 - fy), values[i1, j0]),
                 ((1 - fx) * fy, values[i0, j1]), (fx * fy, values[i1, j1])):
        # zero weights must not touch infinite values (restricted distance fields)
        out += np.where(w != 0, w * np.where(w != 0, v, 0.0), 0.0)
    return out[0] if scalar else out


def metric_at(model: ManifoldModel, p) -> np.ndarray:
    """Bilinearly interpolated metric; exact at vertices."""
    (i0, i1, _), (j0, j1, _) = _cell_weights(model, p)
    corners = np.stack([model.metric[i0, j0], model.metric[i1, j0],
                        model.metric[i0, j1], model.metric[i1, j1]])
    if not np.all(np.isfinite(corners)):
        raise CorruptModelError("non-finite metric entries near query point")
    return bilinear(model, model.metric, p)


def _christoffel_from(g: np.ndarray, dg: np.ndarray) -> np.ndarray:
    """Levi-Civita symbols ``G[..., k, i, j]`` from ``g`` and ``dg[..., m, i, j] = d_m g_ij``."""
    det = g[..., 0, 0] * g[..., 1, 1] - g[..., 0, 1] * g[..., 1, 0]
    scale = np.max(np.abs(g), axis=(-2, -1))
    if np.any(np.abs(det) <= 1e-12 * scale ** 2):
        raise DegenerateMetricError("singular metric while computing Christoffel symbols")
    ginv = np.linalg.inv(g)
    # lower[..., l, i, j] = 1/2 (d_i g_lj + d_j g_li - d_l g_ij)
    lower = 0.5 * (np.swapaxes(dg, -3, -2) + np.moveaxis(dg, -3, -1) - dg)
    return np.einsum("...kl,...lij->...kij", ginv, lower)


def _christoffel_grid(model: ManifoldModel) -> np.ndarray:
    g = model.metric
    dg = np.empty(g.shape[:2] + (2, 2, 2))
    for ax in range(2):
        if model.periodic[ax]:
            d = (np.roll(g, -1, axis=ax) - np.roll(g, 1, axis=ax)) / (2 * model.h)
        else:
            d = np.gradient(g, model.h, axis=ax, edge_order=2)
        dg[:, :, ax] = d
    return _christoffel_from(g, dg)


def christoffel_at(model: ManifoldModel, p) -> np.ndarray:
    """Christoffel symbols ``G[k, i, j]`` from central differences of the metric.

    Vertex values use second-order central differences; off-vertex points
    are bilinearly interpolated from the four surrounding vertices.
    """
    return bilinear(model, model.christoffel_grid, p)


# ---------------------------------------------------------------------------
# smooth interpolant for geodesic tracing

_PAD = 8


@numba.njit(cache=True, nogil=True)
def _b5(x):
    s = 0.0
    c = (1.0, -6.0, 15.0, -20.0, 15.0, -6.0, 1.0)
    for k in range(7):
        y = x + 3.0 - k
        if y > 0:
            s += c[k] * y ** 5
    return s / 120.0


@numba.njit(cache=True, nogil=True)
def _db5(x):
    s = 0.0
    c = (1.0, -6.0, 15.0, -20.0, 15.0, -6.0, 1.0)
    for k in range(7):
        y = x + 3.0 - k
        if y > 0:
            s += c[k] * y ** 4
    return s / 24.0


@numba.njit(cache=True, nogil=True)
def _spline_eval(coef, px, py, ox, oy, h, perx, pery, nx, ny, out_g, out_dg):
    ux = (px - ox) / h
    uy = (py - oy) / h
    ix = int(math.floor(ux))
    iy = int(math.floor(uy))
    wx = np.empty(6)
    wy = np.empty(6)
    dwx = np.empty(6)
    dwy = np.empty(6)
    kx = np.empty(6, np.int64)
    ky = np.empty(6, np.int64)
    for a in range(6):
        k = ix - 2 + a
        wx[a] = _b5(ux - k)
        dwx[a] = _db5(ux - k)
        if perx:
            kx[a] = k % nx
        else:
            kx[a] = min(max(k + _PAD, 0), coef.shape[1] - 1)
        k = iy - 2 + a
        wy[a] = _b5(uy - k)
        dwy[a] = _db5(uy - k)
        if pery:
            ky[a] = k % ny
        else:
            ky[a] = min(max(k + _PAD, 0), coef.shape[2] - 1)
    for c in range(3):
        v = 0.0
        vx = 0.0
        vy = 0.0
        for a in range(6):
            for b in range(6):
                cc = coef[c, kx[a], ky[b]]
                v += cc * wx[a] * wy[b]
                vx += cc * dwx[a] * wy[b]
                vy += cc * wx[a] * dwy[b]
        i = 0 if c < 2 else 1
        j = 0 if c == 0 else 1
        out_g[i, j] = v
        out_g[j, i] = v
        out_dg[0, i, j] = vx / h
        out_dg[0, j, i] = vx / h
        out_dg[1, i, j] = vy / h
        out_dg[1, j, i] = vy / h


@numba.njit(cache=True, nogil=True)
def _accel(coef, x, v, ox, oy, h, perx, pery, nx, ny, g, dg):
    _spline_eval(coef, x[0], x[1], ox, oy, h, perx, pery, nx, ny, g, dg)
    det = g[0, 0] * g[1, 1] - g[0, 1] * g[1, 0]
    i00 = g[1, 1] / det
    i01 = -g[0, 1] / det
    i11 = g[0, 0] / det
    low = np.empty(2)
    for l in range(2):
        s = 0.0
        for i in range(2):
            for j in range(2):
                s += 0.5 * (dg[i, l, j] + dg[j, l, i] - dg[l, i, j]) * v[i] * v[j]
        low[l] = s
    a = np.empty(2)
    a[0] = -(i00 * low[0] + i01 * low[1])
    a[1] = -(i01 * low[0] + i11 * low[1])
    return a


@numba.njit(cache=True, nogil=True)
def _rk4_geodesic(coef, x0, v0, step, nsteps, ox, oy, h, perx, pery, nx, ny):
    pts = np.empty((nsteps + 1, 2))
    vel = np.empty((nsteps + 1, 2))
    spd = np.empty(nsteps + 1)
    g = np.empty((2, 2))
    dg = np.empty((2, 2, 2))
    x = x0.copy()
    v = v0.copy()
    for n in range(nsteps + 1):
        pts[n] = x
        vel[n] = v
        _spline_eval(coef, x[0], x[1], ox, oy, h, perx, pery, nx, ny, g, dg)
        spd[n] = math.sqrt(g[0, 0] * v[0] ** 2 + 2 * g[0, 1] * v[0] * v[1] + g[1, 1] * v[1] ** 2)
        if n == nsteps:
            break
        if abs(spd[n] / spd[0] - 1.0) > 1e-3:
            return pts[: n + 1], vel[: n + 1], spd[: n + 1]
        k1x = v
        k1v = _accel(coef, x, v, ox, oy, h, perx, pery, nx, ny, g, dg)
        x2 = x + 0.5 * step * k1x
        v2 = v + 0.5 * step * k1v
        k2v = _accel(coef, x2, v2, ox, oy, h, perx, pery, nx, ny, g, dg)
        x3 = x + 0.5 * step * v2
        v3 = v + 0.5 * step * k2v
        k3v = _accel(coef, x3, v3, ox, oy, h, perx, pery, nx, ny, g, dg)
        x4 = x + step * v3
        v4 = v + step * k3v
        k4v = _accel(coef, x4, v4, ox, oy, h, perx, pery, nx, ny, g, dg)
        x = x + step / 6.0 * (k1x + 2 * v2 + 2 * v3 + v4)
        v = v + step / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v)
    return pts, vel, spd


class SmoothMetric:
    """Quintic B-spline interpolant of the metric samples (C^4, exact at vertices)."""

    def __init__(self, model: ManifoldModel):
        comps = np.stack([model.metric[..., 0, 0], model.metric[..., 0, 1],
                          model.metric[..., 1, 1]])
        for ax in range(2):
            if not model.periodic[ax]:
                pad = [(0, 0)] * 3
                pad[ax + 1] = (_PAD, _PAD)
                comps = np.pad(comps, pad, mode="reflect", reflect_type="odd")
        coef = comps.astype(float)
        for ax in range(2):
            mode = "grid-wrap" if model.periodic[ax] else "mirror"
            coef = ndimage.spline_filter1d(coef, order=5, axis=ax + 1, mode=mode)
        self.coef = np.ascontiguousarray(coef)
        self.model = model
        self._args = (float(model.origin[0]), float(model.origin[1]), float(model.h),
                      bool(model.periodic[0]), bool(model.periodic[1]),
                      int(model.shape[0]), int(model.shape[1]))

    def __call__(self, p) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(g, dg)`` at ``p`` with ``dg[m, i, j] = d_m g_ij``."""
        g = np.empty((2, 2))
        dg = np.empty((2, 2, 2))
        _spline_eval(self.coef, float(p[0]), float(p[1]), *self._args, g, dg)
        return g, dg

    def metric(self, p) -> np.ndarray:
        return self(p)[0]

    def christoffel(self, p) -> np.ndarray:
        g, dg = self(p)
        return _christoffel_from(g, dg)


# ---------------------------------------------------------------------------
# geodesics


@dataclass(frozen=True, eq=False)
class GeodesicCurve:
    """Samples of a curve: parameters ``t``, points (unwrapped), velocities."""

    t: np.ndarray
    points: np.ndarray
    velocities: np.ndarray
    speeds: np.ndarray | None = None

    @property
    def end(self) -> np.ndarray:
        return self.points[-1]

    def speed_drift(self) -> float:
        if self.speeds is None or len(self.speeds) == 0:
            return 0.0
        return float(np.max(np.abs(self.speeds / self.speeds[0] - 1.0)))

    def arc_length(self) -> np.ndarray:
        seg = np.linalg.norm(np.diff(self.points, axis=0), axis=1)
        return np.concatenate([[0.0], np.cumsum(seg)])


def g_norm(g: np.ndarray, v) -> float:
    v = np.asarray(v, dtype=float)
    return float(np.sqrt(v @ g @ v))


def trace_geodesic(model: ManifoldModel, x, xi, t_max: float, step: float | None = None,
                   check_unit: bool = True) -> GeodesicCurve:
    """Integrate the geodesic equation from ``x`` with initial velocity ``xi``.

    Classical fixed-step RK4 on the exact connection of the spline metric.
    The last sample lands exactly on ``t_max``.
    """
    x = np.asarray(x, dtype=float)
    xi = np.asarray(xi, dtype=float)
    if step is None:
        step = model.h / 2
    if step > model.h / 2 * (1 + 1e-12):
        raise InvalidRequestError("step must not exceed h/2")
    sm = model.spline
    if check_unit:
        nrm = g_norm(sm.metric(x), xi)
        if abs(nrm - 1.0) > 1e-9:
            raise InvalidRequestError(f"initial direction must be g-unit (got {nrm:.12f})")
    nsteps = max(1, int(math.ceil(t_max / step - 1e-9)))
    step = t_max / nsteps
    pts, vel, spd = _rk4_geodesic(sm.coef, x, xi, step, nsteps, *sm._args)
    if len(pts) < nsteps + 1:
        raise GeodesicInstabilityError(
            f"speed drift above 1e-3 at t={step * (len(pts) - 1):.4g}; use a smaller step")
    t = step * np.arange(nsteps + 1)
    return GeodesicCurve(t, pts, vel, spd)


def unit_direction(model: ManifoldModel, x, v) -> np.ndarray:
    """Rescale ``v`` to unit length in the metric used by :func:`trace_geodesic`."""
    v = np.asarray(v, dtype=float)
    return v / g_norm(model.spline.metric(x), v)


def integrate_connection(christoffel: Callable[[np.ndarray], np.ndarray], x, v,
                         t_max: float, step: float) -> GeodesicCurve:
    """RK4 for ``x'' + G(x)[x', x'] = 0`` with an arbitrary connection callable."""
    def rhs(state):
        p, q = state[:2], state[2:]
        gam = christoffel(p)
        return np.concatenate([q, -np.einsum("kij,i,j->k", gam, q, q)])

    nsteps = max(1, int(math.ceil(t_max / step - 1e-9)))
    step = t_max / nsteps
    y = np.concatenate([np.asarray(x, float), np.asarray(v, float)])
    out = np.empty((nsteps + 1, 4))
    out[0] = y
    for n in range(nsteps):
        k1 = rhs(y)
        k2 = rhs(y + 0.5 * step * k1)
        k3 = rhs(y + 0.5 * step * k2)
        k4 = rhs(y + step * k3)
        y = y + step / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        out[n + 1] = y
    return GeodesicCurve(step * np.arange(nsteps + 1), out[:, :2], out[:, 2:])


def reparametrize_pregeodesic(s, points, kappa, n_out: int | None = None) -> GeodesicCurve:
    """Turn a solution of the forced geodesic equation into an affine geodesic.

    ``points`` samples a curve at parameters ``s`` that satisfies
    ``x'' + G[x', x'] = kappa(s) x'``.  The new parameter obeys
    ``dt/ds = exp(int_0^s kappa)``; the curve is resampled on a uniform
    ``t`` grid by inverting ``t(s)``.
    """
    s = np.asarray(s, dtype=float)
    points = np.asarray(points, dtype=float)
    kap = np.asarray(kappa(s) if callable(kappa) else kappa, dtype=float)
    if kap.shape != s.shape:
        kap = np.broadcast_to(kap, s.shape)
    integral = cumulative_trapezoid(kap, s, initial=0.0)
    dtds = np.exp(integral)
    t_of_s = cumulative_trapezoid(dtds, s, initial=0.0)
    if np.any(np.diff(t_of_s) <= 0):
        raise RuntimeError("t(s) is not strictly increasing; numeric corruption")
    path = CubicSpline(s, points, axis=0)
    n_out = len(s) if n_out is None else n_out
    t = np.linspace(0.0, t_of_s[-1], n_out)
    s_of_t = CubicSpline(t_of_s, s)(t)
    s_of_t = np.clip(s_of_t, s[0], s[-1])
    pts = path(s_of_t)
    dsdt = 1.0 / np.interp(s_of_t, s, dtds)
    vel = path(s_of_t, 1) * dsdt[:, None]
    return GeodesicCurve(t, pts, vel)


# ---------------------------------------------------------------------------
# cut times


def _first_failure(values: np.ndarray, t: np.ndarray, tol: float, t_max: float) -> float:
    bad = np.nonzero(np.abs(values - t) > tol)[0]
    bad = bad[bad > 0]
    if len(bad) == 0:
        raise InconclusiveError(f"no cut detected before t_max={t_max:.4g}; raise t_max")
    return float(t[bad[0] - 1])


def cut_time(model: ManifoldModel, distance_field_factory, x, xi, t_max: float | None = None,
             tol: float | None = None, step: float | None = None, field=None) -> float:
    """Largest sampled ``t`` with ``|d(gamma_{x,xi}(t), x) - t| <= tol`` for all smaller samples."""
    from .eikonal import distance

    if tol is None:
        tol = 3.0 * model.h
    if t_max is None:
        t_max = model.diameter_bound()
    if field is None:
        field = distance_field_factory(model, np.asarray(x, float))
    curve = trace_geodesic(model, x, xi, t_max, step)
    d = distance(field, wrap_point(model, curve.points))
    return _first_failure(d, curve.t, tol, t_max)


def inward_normal(model: ManifoldModel, z, radius: float | None = None) -> np.ndarray:
    """g-unit inward normal at a boundary vertex from the region mask.

    Averages the directions to M-vertices within ``radius`` (default 3h).
    """
    if radius is None:
        radius = 3.0 * model.h
    z = np.asarray(z, dtype=float)
    r = int(math.ceil(radius / model.h))
    ci, cj = model.nearest_vertex(z)
    nx, ny = model.shape
    acc = np.zeros(2)
    for di in range(-r, r + 1):
        for dj in range(-r, r + 1):
            i, j = ci + di, cj + dj
            if model.periodic[0]:
                i %= nx
            elif not 0 <= i < nx:
                continue
            if model.periodic[1]:
                j %= ny
            elif not 0 <= j < ny:
                continue
            if model.region[i, j] != REGION_M:
                continue
            d = displacement(model, z, model.vertex_coords((i, j)))
            nrm = np.linalg.norm(d)
            if 0 < nrm <= radius + 1e-12:
                acc += d / nrm
    if not np.any(acc):
        raise InvalidRequestError("point has no M-vertices nearby; not a boundary point")
    return unit_direction(model, z, acc)


def boundary_cut_time(model: ManifoldModel, distance_field_factory, z, t_max: float | None = None,
                      tol: float | None = None, step: float | None = None,
                      boundary_field=None) -> float:
    """Largest sampled ``t`` with ``|d(gamma_{z,nu}(t), dM) - t| <= tol``."""
    from .eikonal import distance

    if model.region[model.nearest_vertex(z)] != REGION_BOUNDARY:
        raise InvalidRequestError("z must be a boundary vertex")
    if tol is None:
        tol = 3.0 * model.h
    if t_max is None:
        t_max = model.diameter_bound()
    if boundary_field is None:
        boundary_field = distance_field_factory(model, model.boundary_mask)
    nu = inward_normal(model, z)
    curve = trace_geodesic(model, z, nu, t_max, step)
    d = distance(boundary_field, wrap_point(model, curve.points))
    return _first_failure(d, curve.t, tol, t_max)


# ---------------------------------------------------------------------------
# model files


def save_model(model: ManifoldModel, path) -> None:
    nx, ny = model.shape
    g = model.metric
    if np.allclose(g, np.eye(2)):
        metric = "identity"
    elif np.allclose(g[..., 0, 1], 0) and np.allclose(g[..., 0, 0], g[..., 1, 1]):
        metric = {"conformal": g[..., 0, 0].ravel().tolist()}
    else:
        metric = {"sampled": [g[..., 0, 0].ravel().tolist(), g[..., 0, 1].ravel().tolist(),
                              g[..., 1, 1].ravel().tolist()]}
    doc = {
        "kind": model.kind,
        "resolution": [nx, ny],
        "h": model.h,
        "origin": list(model.origin),
        "periodic": list(model.periodic),
        "metric": metric,
        "region": {"mask": model.m_mask.astype(int).ravel().tolist()},
        "name": model.name,
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)


def model_from_dict(doc: dict) -> ManifoldModel:
    try:
        nx, ny = (int(v) for v in doc["resolution"])
        h = float(doc["h"])
        kind = doc.get("kind", "periodic-grid-torus")
    except (KeyError, TypeError, ValueError) as exc:
        raise CorruptModelError(f"invalid model definition: {exc}") from exc
    periodic = tuple(doc.get("periodic", [kind == "periodic-grid-torus"] * 2))
    origin = tuple(float(v) for v in doc.get("origin", [0.0, 0.0]))
    spec = doc.get("metric", "identity")
    g = np.zeros((nx, ny, 2, 2))
    if spec == "identity":
        g[..., 0, 0] = g[..., 1, 1] = 1.0
    elif isinstance(spec, dict) and "conformal" in spec:
        c = np.asarray(spec["conformal"], dtype=float).reshape(nx, ny)
        g[..., 0, 0] = g[..., 1, 1] = c
    elif isinstance(spec, dict) and "sampled" in spec:
        g11, g12, g22 = (np.asarray(a, dtype=float).reshape(nx, ny) for a in spec["sampled"])
        g[..., 0, 0], g[..., 0, 1], g[..., 1, 0], g[..., 1, 1] = g11, g12, g12, g22
    else:
        raise CorruptModelError(f"unknown metric specification {spec!r}")
    region = doc.get("region", {})
    pts = None
    if "disc" in region:
        disc = region["disc"]
        proto = ManifoldModel(kind, g, np.ones((nx, ny), np.int8), h, origin, periodic)
        d = displacement(proto, np.asarray(disc["center"], float), proto.grid_points)
        pts = np.linalg.norm(d, axis=-1) < float(disc["radius"])
    elif "mask" in region:
        pts = np.asarray(region["mask"], dtype=bool).reshape(nx, ny)
    else:
        pts = np.zeros((nx, ny), dtype=bool)
    return ManifoldModel(kind, g, region_from_mask(pts, periodic), h, origin, periodic,
                         doc.get("name", ""))


def load_model(path) -> ManifoldModel:
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise CorruptModelError(f"model file is not valid JSON: {exc}") from exc
    return model_from_dict(doc).validate()
