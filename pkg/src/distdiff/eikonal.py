"""Geodesic distance fields: fast marching solver and a graph oracle.

The fast marching solver handles general (anisotropic) metrics with the
8-simplex update: for each pair of adjacent stencil neighbours it minimises
``lam u_a + (1 - lam) u_b + h |lam o_a + (1 - lam) o_b|_g`` in closed form.
The oracle is an exact shortest path on the 16-neighbour grid graph.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
import json
import math
import warnings

import numba
import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import dijkstra

from .errors import CorruptModelError, DegenerateMetricError, InvalidRequestError, NearCutLocusWarning
from .manifold import ManifoldModel, bilinear, displacement, metric_at, wrap_point

FAST_MARCHING = "fast-marching"
DIJKSTRA = "dijkstra"

# worst relative overestimate of straight-line distance on the 16-neighbour
# grid: directions midway between stencil directions 0 and atan(1/2)
DIJKSTRA_BIAS = 1.0 / math.cos(math.atan(0.5) / 2) - 1.0

_RING = np.array([(1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1)],
                 dtype=np.int64)


@dataclass(frozen=True, eq=False)
class DistanceField:
    """Per-vertex geodesic distances to ``source`` (a point or a vertex set)."""

    model: ManifoldModel
    source: np.ndarray
    values: np.ndarray
    solver: str = FAST_MARCHING
    meta: dict = field(default_factory=dict)

    def __call__(self, p) -> np.ndarray:
        return distance(self, p)


def _check_metric(model: ManifoldModel) -> None:
    g = model.metric
    if not np.all(np.isfinite(g)):
        raise CorruptModelError("metric contains non-finite entries")
    det = g[..., 0, 0] * g[..., 1, 1] - g[..., 0, 1] * g[..., 1, 0]
    if np.any(g[..., 0, 0] <= 0) or np.any(det <= 0):
        raise DegenerateMetricError("non-SPD metric sample encountered")


# ---------------------------------------------------------------------------
# fast marching


@numba.njit(cache=True, nogil=True)
def _heap_push(keys, idx, size, key, item):
    i = size
    keys[i] = key
    idx[i] = item
    while i > 0:
        parent = (i - 1) >> 1
        if keys[parent] <= keys[i]:
            break
        keys[parent], keys[i] = keys[i], keys[parent]
        idx[parent], idx[i] = idx[i], idx[parent]
        i = parent
    return size + 1


@numba.njit(cache=True, nogil=True)
def _heap_pop(keys, idx, size):
    key = keys[0]
    item = idx[0]
    size -= 1
    keys[0] = keys[size]
    idx[0] = idx[size]
    i = 0
    while True:
        l = 2 * i + 1
        if l >= size:
            break
        c = l
        if l + 1 < size and keys[l + 1] < keys[l]:
            c = l + 1
        if keys[i] <= keys[c]:
            break
        keys[c], keys[i] = keys[i], keys[c]
        idx[c], idx[i] = idx[i], idx[c]
        i = c
    return key, item, size


@numba.njit(cache=True, nogil=True)
def _simplex_value(ua, ub, oax, oay, obx, oby, g00, g01, g11, h):
    """min over lam in [0,1] of lam ua + (1-lam) ub + h |o_b + lam (o_a - o_b)|_g."""
    ex = oax - obx
    ey = oay - oby
    a = g00 * ex * ex + 2 * g01 * ex * ey + g11 * ey * ey
    b = g00 * ex * obx + g01 * (ex * oby + ey * obx) + g11 * ey * oby
    c = g00 * obx * obx + 2 * g01 * obx * oby + g11 * oby * oby
    best = min(ua + h * math.sqrt(a + 2 * b + c), ub + h * math.sqrt(c))
    dl = (ua - ub) / h
    d2 = dl * dl
    qa = a * (a - d2)
    qb = 2 * b * (a - d2)
    qc = b * b - d2 * c
    if abs(qa) > 1e-14:
        disc = qb * qb - 4 * qa * qc
        if disc >= 0:
            sq = math.sqrt(disc)
            for lam in ((-qb + sq) / (2 * qa), (-qb - sq) / (2 * qa)):
                if 0.0 < lam < 1.0:
                    q = a * lam * lam + 2 * b * lam + c
                    if q > 0:
                        v = ub + lam * (ua - ub) + h * math.sqrt(q)
                        if v < best:
                            best = v
    return best


@numba.njit(cache=True, nogil=True)
def _local_value(i, j, u, state, metric, allowed, ring, h, perx, pery):
    nx, ny = u.shape
    g00 = metric[i, j, 0, 0]
    g01 = metric[i, j, 0, 1]
    g11 = metric[i, j, 1, 1]
    best = np.inf
    for k in range(8):
        k2 = (k + 1) % 8
        ia = i + ring[k, 0]
        ja = j + ring[k, 1]
        ib = i + ring[k2, 0]
        jb = j + ring[k2, 1]
        oka = True
        okb = True
        if perx:
            ia %= nx
            ib %= nx
        else:
            oka = oka and 0 <= ia < nx
            okb = okb and 0 <= ib < nx
        if pery:
            ja %= ny
            jb %= ny
        else:
            oka = oka and 0 <= ja < ny
            okb = okb and 0 <= jb < ny
        oka = oka and state[ia, ja] == 2
        okb = okb and state[ib, jb] == 2
        if not oka and not okb:
            continue
        # simplex metric: centre vertex weighted with its two neighbours
        s00 = g00
        s01 = g01
        s11 = g11
        if oka and okb:
            s00 = 0.5 * g00 + 0.25 * (metric[ia, ja, 0, 0] + metric[ib, jb, 0, 0])
            s01 = 0.5 * g01 + 0.25 * (metric[ia, ja, 0, 1] + metric[ib, jb, 0, 1])
            s11 = 0.5 * g11 + 0.25 * (metric[ia, ja, 1, 1] + metric[ib, jb, 1, 1])
            v = _simplex_value(u[ia, ja], u[ib, jb], ring[k, 0], ring[k, 1],
                               ring[k2, 0], ring[k2, 1], s00, s01, s11, h)
        elif oka:
            s00 = 0.5 * (g00 + metric[ia, ja, 0, 0])
            s01 = 0.5 * (g01 + metric[ia, ja, 0, 1])
            s11 = 0.5 * (g11 + metric[ia, ja, 1, 1])
            ox = ring[k, 0]
            oy = ring[k, 1]
            v = u[ia, ja] + h * math.sqrt(s00 * ox * ox + 2 * s01 * ox * oy + s11 * oy * oy)
        else:
            s00 = 0.5 * (g00 + metric[ib, jb, 0, 0])
            s01 = 0.5 * (g01 + metric[ib, jb, 0, 1])
            s11 = 0.5 * (g11 + metric[ib, jb, 1, 1])
            ox = ring[k2, 0]
            oy = ring[k2, 1]
            v = u[ib, jb] + h * math.sqrt(s00 * ox * ox + 2 * s01 * ox * oy + s11 * oy * oy)
        if v < best:
            best = v
    return best


@numba.njit(cache=True, nogil=True)
def _fast_march(u0, metric, allowed, ring, h, perx, pery):
    """Fast marching from the finite entries of ``u0`` (state: 0 far, 1 trial, 2 accepted)."""
    nx, ny = u0.shape
    u = u0.copy()
    state = np.zeros((nx, ny), np.int8)
    cap = 9 * nx * ny + 16
    keys = np.empty(cap)
    idx = np.empty(cap, np.int64)
    size = 0
    for i in range(nx):
        for j in range(ny):
            if np.isfinite(u[i, j]):
                state[i, j] = 1
                size = _heap_push(keys, idx, size, u[i, j], i * ny + j)
    while size > 0:
        key, item, size = _heap_pop(keys, idx, size)
        i = item // ny
        j = item % ny
        if state[i, j] == 2 or key > u[i, j]:
            continue
        state[i, j] = 2
        for k in range(8):
            vi = i + ring[k, 0]
            vj = j + ring[k, 1]
            if perx:
                vi %= nx
            elif vi < 0 or vi >= nx:
                continue
            if pery:
                vj %= ny
            elif vj < 0 or vj >= ny:
                continue
            if state[vi, vj] == 2 or not allowed[vi, vj]:
                continue
            val = _local_value(vi, vj, u, state, metric, allowed, ring, h, perx, pery)
            if val < u[vi, vj]:
                u[vi, vj] = val
                state[vi, vj] = 1
                size = _heap_push(keys, idx, size, val, vi * ny + vj)
    return u


def _exact_start(model: ManifoldModel, z: np.ndarray, radius_cells: float = 2.0) -> np.ndarray:
    """Initial values: local constant-metric distance near a point source."""
    u0 = np.full(model.shape, np.inf)
    g = metric_at(model, z)
    ci, cj = model.nearest_vertex(z)
    r = int(math.ceil(radius_cells)) + 1
    nx, ny = model.shape
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
            d = displacement(model, z, model.vertex_coords((i, j)))
            if np.linalg.norm(d) <= radius_cells * model.h + 1e-12:
                u0[i, j] = math.sqrt(d @ g @ d)
    return u0


def _run(model: ManifoldModel, u0: np.ndarray, allowed: np.ndarray | None) -> np.ndarray:
    if allowed is None:
        allowed = np.ones(model.shape, dtype=np.bool_)
    return _fast_march(u0, np.ascontiguousarray(model.metric), allowed, _RING, float(model.h),
                       bool(model.periodic[0]), bool(model.periodic[1]))


def _as_source(model: ManifoldModel, z) -> tuple[np.ndarray, np.ndarray | None]:
    """Return (point, None) for a point source or (empty, mask) for a vertex set."""
    arr = np.asarray(z)
    if arr.dtype == bool and arr.shape == model.shape:
        if not arr.any():
            raise InvalidRequestError("empty source set")
        return np.empty(0), arr
    p = np.asarray(z, dtype=float)
    if p.shape != (2,) or not np.all(np.isfinite(p)):
        raise InvalidRequestError("source must be a 2-vector or a vertex mask")
    idx = (p - np.asarray(model.origin)) / model.h
    for ax in range(2):
        if not model.periodic[ax] and not -1e-9 <= idx[ax] <= model.shape[ax] - 1 + 1e-9:
            raise InvalidRequestError("source outside the model's coordinate domain")
    return wrap_point(model, p), None


def solve_distance_field(model: ManifoldModel, z, restrict: np.ndarray | None = None) -> DistanceField:
    """First-order fast marching solution of |grad d|_{g*} = 1 with d(z) = 0.

    ``z`` is a point or a boolean vertex mask (multi-source, zero on the set).
    ``restrict`` limits propagation to the given vertices (others stay inf).
    """
    _check_metric(model)
    point, mask = _as_source(model, z)
    if mask is not None:
        u0 = np.where(mask, 0.0, np.inf)
    else:
        u0 = _exact_start(model, point)
    if restrict is not None:
        restrict = np.asarray(restrict, dtype=np.bool_)
        u0 = np.where(restrict, u0, np.inf)
        if not np.isfinite(u0).any():
            raise InvalidRequestError("source lies outside the restriction mask")
    values = _run(model, u0, restrict)
    return DistanceField(model, point if mask is None else mask, values, FAST_MARCHING)


def solve_many(model: ManifoldModel, sources, jobs: int = 1, restrict=None) -> list[DistanceField]:
    """Solve one field per source; threads share the model (the kernel releases the GIL)."""
    sources = list(sources)
    if jobs <= 1 or len(sources) <= 1:
        return [solve_distance_field(model, z, restrict) for z in sources]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(lambda z: solve_distance_field(model, z, restrict), sources))


# ---------------------------------------------------------------------------
# graph oracle

_STENCIL16 = [(1, 0), (0, 1), (1, 1), (1, -1), (2, 1), (1, 2), (2, -1), (1, -2)]


def grid_graph(model: ManifoldModel, restrict: np.ndarray | None = None) -> sparse.csr_matrix:
    """16-neighbour graph; edge length uses the metric at the edge midpoint."""
    nx, ny = model.shape
    ii, jj = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
    rows, cols, wts = [], [], []
    keep = np.ones(model.shape, bool) if restrict is None else np.asarray(restrict, bool)
    for di, dj in _STENCIL16:
        ti, tj = ii + di, jj + dj
        ok = np.ones(model.shape, bool)
        if model.periodic[0]:
            ti %= nx
        else:
            ok &= (ti >= 0) & (ti < nx)
        if model.periodic[1]:
            tj %= ny
        else:
            ok &= (tj >= 0) & (tj < ny)
        ti = np.clip(ti, 0, nx - 1)
        tj = np.clip(tj, 0, ny - 1)
        ok &= keep & keep[ti, tj]
        src = np.stack([ii[ok], jj[ok]], -1).astype(float)
        mid = model.vertex_coords(src + 0.5 * np.array([di, dj]))
        g = bilinear(model, model.metric, wrap_point(model, mid))
        o = model.h * np.array([di, dj], dtype=float)
        w = np.sqrt(np.einsum("i,nij,j->n", o, g, o))
        rows.append(ii[ok] * ny + jj[ok])
        cols.append(ti[ok] * ny + tj[ok])
        wts.append(w)
    n = nx * ny
    r = np.concatenate(rows)
    c = np.concatenate(cols)
    w = np.concatenate(wts)
    graph = sparse.coo_matrix((w, (r, c)), shape=(n, n)).tocsr()
    return graph.maximum(graph.T).tocsr()


def dijkstra_distance(model: ManifoldModel, z, restrict: np.ndarray | None = None,
                      graph: sparse.csr_matrix | None = None) -> DistanceField:
    """Exact shortest paths on the 16-neighbour graph (biased oracle)."""
    _check_metric(model)
    point, mask = _as_source(model, z)
    graph = grid_graph(model, restrict) if graph is None else graph
    nx, ny = model.shape
    n = nx * ny
    if mask is not None:
        d = dijkstra(graph, indices=np.flatnonzero(mask.ravel()), min_only=True)
        return DistanceField(model, mask, d.reshape(model.shape), DIJKSTRA)
    u = (point - np.asarray(model.origin)) / model.h
    i0 = np.floor(u).astype(int)
    corners = []
    for di in (0, 1):
        for dj in (0, 1):
            idx = [i0[0] + di, i0[1] + dj]
            for ax, nn in ((0, nx), (1, ny)):
                if model.periodic[ax]:
                    idx[ax] %= nn
                else:
                    idx[ax] = min(max(idx[ax], 0), nn - 1)
            corners.append(tuple(idx))
    g = metric_at(model, point)
    links = {}
    for c in corners:
        dv = displacement(model, point, model.vertex_coords(c))
        links[c[0] * ny + c[1]] = math.sqrt(dv @ g @ dv)
    exact = [k for k, w in links.items() if w == 0.0]
    if exact:
        d = dijkstra(graph, indices=exact[0])
    else:
        # virtual node joined to the enclosing cell corners
        keys = np.fromiter(links.keys(), int)
        vals = np.fromiter(links.values(), float)
        ext = sparse.bmat([[graph, sparse.csr_matrix((vals, (keys, np.zeros_like(keys))),
                                                     shape=(n, 1))],
                           [sparse.csr_matrix((vals, (np.zeros_like(keys), keys)), shape=(1, n)),
                            None]]).tocsr()
        d = dijkstra(ext, indices=n)[:n]
    return DistanceField(model, point, d.reshape(model.shape), DIJKSTRA)


# ---------------------------------------------------------------------------
# queries


def distance(fld: DistanceField, p) -> np.ndarray:
    """Bilinear interpolation of the field; exact at vertices."""
    return bilinear(fld.model, fld.values, wrap_point(fld.model, p))


def raw_gradient(fld: DistanceField, p) -> np.ndarray:
    """Central-difference differential of the interpolated field at ``p``."""
    h = fld.model.h
    p = np.asarray(p, dtype=float)
    out = np.empty(2)
    for ax in range(2):
        e = np.zeros(2)
        e[ax] = h
        out[ax] = (distance(fld, p + e) - distance(fld, p - e)) / (2 * h)
    return out


def gradient_at(fld: DistanceField, p, band: float = 0.2) -> np.ndarray:
    """g-unit gradient vector of ``d(., z)`` at ``p``; warns near the cut locus."""
    p = np.asarray(p, dtype=float)
    dd = raw_gradient(fld, p)
    ginv = np.linalg.inv(metric_at(fld.model, p))
    vec = ginv @ dd
    nrm = math.sqrt(max(dd @ vec, 0.0))
    if not (1 - band) <= nrm <= 1 + band:
        warnings.warn(f"gradient norm {nrm:.3f} far from 1; point may be near the cut locus",
                      NearCutLocusWarning, stacklevel=2)
    if nrm == 0:
        return vec
    return vec / nrm


def gradient_norm(fld: DistanceField, p) -> float:
    dd = raw_gradient(fld, p)
    return float(math.sqrt(dd @ np.linalg.solve(metric_at(fld.model, p), dd)))


def interval_error(fmm: np.ndarray, oracle: np.ndarray, bias: float = DIJKSTRA_BIAS) -> np.ndarray:
    """Distance from FMM values to the interval ``[oracle / (1 + bias), oracle]``."""
    lo = oracle / (1 + bias)
    return np.maximum(0.0, np.maximum(lo - fmm, fmm - oracle))


def estimate_eps_solver(model: ManifoldModel, sources, fraction: float = 0.05, seed: int = 0,
                        fields: list[DistanceField] | None = None) -> float:
    """Largest FMM deviation from the Dijkstra bracket on a vertex subsample."""
    rng = np.random.default_rng(seed)
    # vertex sources keep the graph bracket rigorous
    sources = [model.vertex_coords(model.nearest_vertex(z)) for z in sources]
    graph = grid_graph(model)
    n = model.shape[0] * model.shape[1]
    pick = rng.choice(n, size=max(1, int(round(fraction * n))), replace=False)
    worst = 0.0
    if fields is None:
        fields = [solve_distance_field(model, z) for z in sources]
    for z, fld in zip(sources, fields):
        ref = dijkstra_distance(model, z, graph=graph).values.ravel()[pick]
        worst = max(worst, float(np.max(interval_error(fld.values.ravel()[pick], ref))))
    return worst


# ---------------------------------------------------------------------------
# dumps


def save_field(fld: DistanceField, path, eps_solver: float | None = None) -> None:
    """Raw float64 row-major values plus a JSON sidecar ``<path>.json``."""
    np.ascontiguousarray(fld.values, dtype="<f8").tofile(path)
    src = fld.source
    side = {
        "source": src.tolist() if src.dtype != bool else {"mask": np.flatnonzero(src).tolist()},
        "resolution": list(fld.model.shape),
        "h": fld.model.h,
        "solver": fld.solver,
        "eps_solver": eps_solver,
    }
    with open(f"{path}.json", "w") as fh:
        json.dump(side, fh)


def load_field(model: ManifoldModel, path) -> DistanceField:
    with open(f"{path}.json") as fh:
        side = json.load(fh)
    if tuple(side["resolution"]) != model.shape:
        raise InvalidRequestError("field resolution does not match the model")
    values = np.fromfile(path, dtype="<f8").reshape(model.shape)
    src = side["source"]
    if isinstance(src, dict):
        mask = np.zeros(model.shape[0] * model.shape[1], bool)
        mask[src["mask"]] = True
        source = mask.reshape(model.shape)
    else:
        source = np.asarray(src, float)
    return DistanceField(model, source, values, side["solver"], {"eps_solver": side["eps_solver"]})
