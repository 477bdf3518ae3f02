"""Distance difference data: generation, queries, recovery formulas and file IO.

A hidden point ``x`` is represented by its centred vector
``rho[a] = d(x, z_a) - d(x, z_0)`` over the F-samples ``z_a``; any value
``D_x(z_a, z_b) = rho[a] - rho[b]`` follows from it, so the full K x K
matrix is never stored.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import io
import json
import math
import struct
import zlib

import numpy as np
from scipy.spatial import cKDTree

from .errors import (
    ChecksumError,
    DatasetVersionError,
    IncompatibleDatasetError,
    InsufficientDataError,
    InvalidRequestError,
    SourceOutsideMError,
)
from .eikonal import DistanceField, distance, estimate_eps_solver, solve_distance_field, solve_many
from .manifold import REGION_M, ManifoldModel, displacement, wrap_point

MAGIC = b"DDF1"
FORMAT_VERSION = 1
GENERATOR_VERSION = "distdiff-0.1.0"

BOUNDARY_BIASED = "boundary-biased"
UNIFORM = "uniform"


@dataclass(frozen=True, eq=False)
class FSampleSet:
    """F-samples ``z_0 .. z_{K-1}``; ``z_0`` is the centring reference."""

    points: np.ndarray
    boundary_flags: np.ndarray
    pairwise: np.ndarray | None = None
    # rows of (centre, +x, -x, +y, -y) sample indices for gradient stencils
    stencils: np.ndarray = field(default_factory=lambda: np.zeros((0, 5), np.int64))

    def __post_init__(self):
        if len(self.points) < 3:
            raise InvalidRequestError("at least three F-samples are required")

    @property
    def K(self) -> int:
        return len(self.points)

    @property
    def boundary_indices(self) -> np.ndarray:
        return np.flatnonzero(self.boundary_flags)

    def with_pairwise(self, pairwise: np.ndarray) -> "FSampleSet":
        return FSampleSet(self.points, self.boundary_flags, pairwise, self.stencils)

    def same_as(self, other: "FSampleSet") -> bool:
        return self.K == other.K and np.array_equal(self.points, other.points)


@dataclass(frozen=True)
class DDFSample:
    rho: np.ndarray
    ground_truth_x: np.ndarray | None = None


@dataclass(eq=False)
class DDFDataset:
    """Unindexed collection of centred distance-difference vectors."""

    fsamples: FSampleSet
    rho: np.ndarray
    ground_truth: np.ndarray | None
    provenance: dict

    @property
    def blind(self) -> bool:
        return self.ground_truth is None

    @property
    def K(self) -> int:
        return self.fsamples.K

    def __len__(self) -> int:
        return len(self.rho)

    def __getitem__(self, i: int) -> DDFSample:
        gt = None if self.ground_truth is None else self.ground_truth[i]
        return DDFSample(self.rho[i], gt)

    def blind_view(self) -> "DDFDataset":
        prov = {k: v for k, v in self.provenance.items()}
        return DDFDataset(self.fsamples, self.rho, None, prov)

    @property
    def eps_solver(self) -> float:
        return float(self.provenance.get("eps_solver", 0.0))


# ---------------------------------------------------------------------------
# F-samples and hidden points


def _farthest_points(model: ManifoldModel, candidates: np.ndarray, count: int,
                     rng: np.random.Generator, chosen: list[np.ndarray] | None = None) -> list[int]:
    """Greedy farthest-point selection among candidate vertex coordinates."""
    picks: list[int] = []
    if count <= 0:
        return picks
    best = np.full(len(candidates), np.inf)
    for p in chosen or []:
        best = np.minimum(best, np.linalg.norm(displacement(model, p, candidates), axis=-1))
    if not np.isfinite(best).any():
        first = int(rng.integers(len(candidates)))
    else:
        first = int(np.argmax(best))
    picks.append(first)
    best = np.minimum(best, np.linalg.norm(displacement(model, candidates[first], candidates), axis=-1))
    while len(picks) < count:
        nxt = int(np.argmax(best))
        if best[nxt] == 0:
            break
        picks.append(nxt)
        best = np.minimum(best, np.linalg.norm(displacement(model, candidates[nxt], candidates), axis=-1))
    return picks


def _stencil_ok(model: ManifoldModel, i: int, j: int) -> bool:
    nx, ny = model.shape
    for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1)):
        a, b = i + di, j + dj
        if model.periodic[0]:
            a %= nx
        if model.periodic[1]:
            b %= ny
        if not (0 <= a < nx and 0 <= b < ny) or model.region[a, b] == REGION_M:
            return False
    return True


def sample_F_points(model: ManifoldModel, K: int, strategy: str = BOUNDARY_BIASED, seed: int = 0,
                    anchors: int = 0, anchor_points=None) -> FSampleSet:
    """Pick ``K`` F-vertices (plus optional gradient-stencil anchors).

    ``boundary-biased`` puts ``ceil(K/2)`` samples on boundary vertices, spread
    by farthest-point selection; the rest are spread over F.  ``uniform``
    draws all samples uniformly from F.  Each anchor adds five samples: an
    F-interior vertex and its four axis neighbours.
    """
    if K < 3:
        raise InvalidRequestError("K must be at least 3")
    f_idx = np.argwhere(model.f_mask)
    if K + 5 * anchors > len(f_idx):
        raise InvalidRequestError("K exceeds the number of F vertices")
    interior = np.argwhere(model.f_interior_mask)
    if len(interior) == 0:
        raise InvalidRequestError("F has empty interior")
    rng = np.random.default_rng(seed)
    coords_f = model.vertex_coords(f_idx)
    coords_int = model.vertex_coords(interior)

    z0 = coords_int[int(rng.integers(len(interior)))]
    pts = [z0]
    flags = [False]
    if strategy == BOUNDARY_BIASED:
        bidx = np.argwhere(model.boundary_mask)
        n_b = min(math.ceil(K / 2), len(bidx))
        bcoords = model.vertex_coords(bidx)
        for k in _farthest_points(model, bcoords, n_b, rng):
            pts.append(bcoords[k])
            flags.append(True)
        rest = K - len(pts)
        for k in _farthest_points(model, coords_int, rest, rng, chosen=pts):
            pts.append(coords_int[k])
            flags.append(False)
    elif strategy == UNIFORM:
        taken = {tuple(np.round(z0 / model.h).astype(int))}
        while len(pts) < K:
            k = int(rng.integers(len(f_idx)))
            key = tuple(f_idx[k])
            if key in taken:
                continue
            taken.add(key)
            pts.append(coords_f[k])
            flags.append(bool(model.boundary_mask[key]))
    else:
        raise InvalidRequestError(f"unknown strategy {strategy!r}")

    stencils = []
    if anchors or anchor_points is not None:
        if anchor_points is None:
            ok = np.array([_stencil_ok(model, i, j) for i, j in interior])
            cand = coords_int[ok]
            picks = [cand[k] for k in _farthest_points(model, cand, anchors, rng, chosen=pts)]
        else:
            picks = [model.vertex_coords(model.nearest_vertex(p)) for p in anchor_points]
        for c in picks:
            i, j = model.nearest_vertex(c)
            if not model.f_interior_mask[i, j] or not _stencil_ok(model, i, j):
                raise InvalidRequestError("anchor must be an F-interior vertex with an F stencil")
            row = []
            for off in ((0, 0), (1, 0), (-1, 0), (0, 1), (0, -1)):
                row.append(len(pts))
                pts.append(wrap_point(model, c + model.h * np.asarray(off, float)))
                flags.append(bool(model.boundary_mask[model.nearest_vertex(pts[-1])]))
            stencils.append(row)
    return FSampleSet(np.array(pts, dtype=float), np.array(flags, dtype=bool),
                      stencils=np.array(stencils, dtype=np.int64).reshape(-1, 5))


def m_area(model: ManifoldModel) -> float:
    return float(model.m_mask.sum()) * model.h ** 2


def uniform_hidden_points(model: ManifoldModel, n: int, seed: int = 0,
                          batch: int = 4096) -> np.ndarray:
    """i.i.d. uniform points in M; the first ``n`` of a larger draw equal a smaller draw."""
    if not model.m_mask.any():
        raise InvalidRequestError("M is empty")
    rng = np.random.default_rng(seed)
    lo = np.asarray(model.origin)
    ext = model.extent if all(model.periodic) else (np.array(model.shape) - 1) * model.h
    out = []
    count = 0
    while count < n:
        cand = lo + rng.random((batch, 2)) * ext
        keep = cand[_in_m(model, cand)]
        out.append(keep)
        count += len(keep)
    return np.concatenate(out)[:n]


def stratified_hidden_points(model: ManifoldModel, n: int, seed: int = 0,
                             min_sep: float | None = None, max_tries: int = 200_000) -> np.ndarray:
    """Random points in M with a minimum pairwise separation.

    The separation defaults to ``2h``, reduced when M is too small to hold
    ``n`` points that far apart (random sequential packing saturates near
    half the area).
    """
    area = m_area(model)
    if min_sep is None:
        min_sep = min(2 * model.h, 0.6 * math.sqrt(area / max(n, 1)))
    rng = np.random.default_rng(seed)
    lo = np.asarray(model.origin)
    ext = model.extent
    box = ext if all(model.periodic) else None
    pts: list[np.ndarray] = []
    tree = None
    pending: list[np.ndarray] = []
    tries = 0
    while len(pts) + len(pending) < n:
        tries += 1
        if tries > max_tries:
            raise InvalidRequestError("could not place hidden points with the requested separation")
        p = lo + rng.random(2) * ext
        if not _in_m(model, p[None])[0]:
            continue
        q = p - lo if box is not None else p
        if tree is not None and tree.query_ball_point(q, min_sep):
            continue
        if any(np.linalg.norm(displacement(model, p, r)) < min_sep for r in pending):
            continue
        pending.append(p)
        if len(pending) >= 64:
            pts.extend(pending)
            pending = []
            arr = np.array(pts) - (lo if box is not None else 0)
            tree = cKDTree(np.mod(arr, box) if box is not None else arr, boxsize=box)
    return np.array(pts + pending)


def _in_m(model: ManifoldModel, pts: np.ndarray) -> np.ndarray:
    idx = np.rint((pts - np.asarray(model.origin)) / model.h).astype(int)
    nx, ny = model.shape
    ok = np.ones(len(pts), bool)
    for ax, n in ((0, nx), (1, ny)):
        if model.periodic[ax]:
            idx[:, ax] %= n
        else:
            ok &= (idx[:, ax] >= 0) & (idx[:, ax] < n)
            idx[:, ax] = np.clip(idx[:, ax], 0, n - 1)
    return ok & (model.region[idx[:, 0], idx[:, 1]] == REGION_M)


# ---------------------------------------------------------------------------
# generation


def source_fields(model: ManifoldModel, fs: FSampleSet, jobs: int = 1) -> list[DistanceField]:
    return solve_many(model, list(fs.points), jobs)


def pairwise_from_fields(fields: list[DistanceField], points: np.ndarray) -> np.ndarray:
    raw = np.array([distance(f, points) for f in fields])
    pair = 0.5 * (raw + raw.T)
    np.fill_diagonal(pair, 0.0)
    return pair


def centred_vectors(fields: list[DistanceField], X: np.ndarray) -> np.ndarray:
    d = np.stack([distance(f, X) for f in fields], axis=-1)
    return d - d[:, :1]


def generate_dataset(model: ManifoldModel, X, fs: FSampleSet, blind: bool = False, seed: int = 0,
                     fields: list[DistanceField] | None = None, jobs: int = 1,
                     require_in_m: bool = True, eps_solver: float | None = None) -> DDFDataset:
    """One centred vector per hidden point, shuffled; ground truth kept unless blind."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if require_in_m and len(X) and not np.all(_in_m(model, X)):
        raise SourceOutsideMError("hidden points must lie in M")
    if fields is None:
        fields = source_fields(model, fs, jobs)
    if fs.pairwise is None:
        fs = fs.with_pairwise(pairwise_from_fields(fields, fs.points))
    if eps_solver is None:
        eps_solver = estimate_eps_solver(model, fs.points[:2], seed=seed)
    rho = centred_vectors(fields, X) if len(X) else np.zeros((0, fs.K))
    order = np.random.default_rng(seed).permutation(len(X))
    rho = rho[order]
    truth = None if blind else X[order]
    prov = {
        "model_hash": model.model_hash,
        "eps_solver": float(eps_solver),
        "generator": GENERATOR_VERSION,
        "h": float(model.h),
        "seed": int(seed),
    }
    return DDFDataset(fs, rho, truth, prov)


def with_samples(ds: DDFDataset, rho: np.ndarray, truth: np.ndarray | None) -> DDFDataset:
    return DDFDataset(ds.fsamples, rho, truth, dict(ds.provenance))


# ---------------------------------------------------------------------------
# queries


def ddf_value(sample: DDFSample | np.ndarray, a: int, b: int) -> float:
    rho = sample.rho if isinstance(sample, DDFSample) else np.asarray(sample)
    K = len(rho)
    if not (0 <= a < K and 0 <= b < K):
        raise IndexError(f"F-sample index out of range (K={K})")
    return float(rho[a] - rho[b])


def _rho(s) -> np.ndarray:
    return s.rho if isinstance(s, DDFSample) else np.asarray(s, dtype=float)


def sup_norm_distance(s1, s2) -> float:
    """``max_{a,b} |D_x(a,b) - D_y(a,b)|`` via ``max(delta) - min(delta)``."""
    r1, r2 = _rho(s1), _rho(s2)
    if r1.shape != r2.shape:
        raise IncompatibleDatasetError("samples have different K")
    delta = r1 - r2
    return float(delta.max() - delta.min())


def sup_norm_matrix(rho1: np.ndarray, rho2: np.ndarray, chunk: int = 128) -> np.ndarray:
    """All pairwise sup-norm distances between two stacks of centred vectors."""
    rho1 = np.atleast_2d(rho1)
    rho2 = np.atleast_2d(rho2)
    if rho1.shape[1] != rho2.shape[1]:
        raise IncompatibleDatasetError("datasets have different K")
    out = np.empty((len(rho1), len(rho2)))
    for s in range(0, len(rho1), chunk):
        delta = rho1[s:s + chunk, None, :] - rho2[None, :, :]
        out[s:s + chunk] = delta.max(axis=-1) - delta.min(axis=-1)
    return out


def dataset_hausdorff(ds1: DDFDataset, ds2: DDFDataset) -> float:
    """Hausdorff distance between two datasets in the sup norm."""
    dm = sup_norm_matrix(ds1.rho, ds2.rho)
    return float(max(dm.min(axis=1).max(), dm.min(axis=0).max()))


def recover_boundary_distance(ds: DDFDataset, a: int, b: int) -> float:
    """``d(z_a, z_b)`` as the supremum over samples of ``D_x(z_a, z_b)``."""
    if len(ds) == 0:
        raise InsufficientDataError("dataset has no samples")
    flags = ds.fsamples.boundary_flags
    if not (flags[a] and flags[b]):
        raise InvalidRequestError("both indices must be boundary samples")
    if a == b:
        return 0.0
    return float(np.max(ds.rho[:, a] - ds.rho[:, b]))


def recover_boundary_matrix(ds: DDFDataset) -> tuple[np.ndarray, np.ndarray]:
    """Recovered distances among all boundary-flagged samples."""
    idx = ds.fsamples.boundary_indices
    if len(ds) == 0:
        raise InsufficientDataError("dataset has no samples")
    sub = ds.rho[:, idx]
    rec = np.max(sub[:, :, None] - sub[:, None, :], axis=0)
    np.fill_diagonal(rec, 0.0)
    return idx, rec


# ---------------------------------------------------------------------------
# extension from the boundary of F


def restricted_fields(model: ManifoldModel, targets, jobs: int = 1) -> list[DistanceField]:
    """Distance fields from each target computed inside F only (g|_F is known)."""
    return solve_many(model, list(np.asarray(targets, float)), jobs, restrict=model.f_mask)


def extend_from_boundary(d_f: np.ndarray, rho_boundary: np.ndarray) -> np.ndarray:
    """Centred vectors over targets from centred vectors over boundary samples.

    ``d_f[t, a]`` is the F-internal distance from target ``t`` to boundary
    sample ``a``; ``rho_boundary`` is ``(N, B)``.  The inf-sup
    ``min_a [d_F(w1, a) + max_b (D_x(a, b) - d_F(w2, b))]`` splits into
    ``psi(w1) - psi(w2)`` with ``psi(w) = min_a (d_F(w, a) + rho[a])``, which
    is what is evaluated; the result is re-centred at target 0.
    """
    d_f = np.atleast_2d(np.asarray(d_f, float))
    rho_boundary = np.atleast_2d(np.asarray(rho_boundary, float))
    if d_f.shape[1] == 0 or rho_boundary.shape[1] == 0:
        raise InsufficientDataError("no boundary samples")
    psi = np.min(d_f[None, :, :] + rho_boundary[:, None, :], axis=-1)
    return psi - psi[:, :1]


def extend_pair(d_f1: np.ndarray, d_f2: np.ndarray, rho_boundary: np.ndarray) -> float:
    """Literal inf-sup value ``D_x(w1, w2)`` for one sample."""
    rb = np.asarray(rho_boundary, float)
    if rb.size == 0:
        raise InsufficientDataError("no boundary samples")
    inner = np.max(rb[:, None] - rb[None, :] - d_f2[None, :], axis=1)
    return float(np.min(d_f1 + inner))


# ---------------------------------------------------------------------------
# file format


def _header(ds: DDFDataset) -> dict:
    fs = ds.fsamples
    head = {
        "version": FORMAT_VERSION,
        "K": fs.K,
        "Z": fs.points.tolist(),
        "boundary_flags": fs.boundary_flags.astype(int).tolist(),
        "pairwise_F_distances": None if fs.pairwise is None else fs.pairwise.tolist(),
        "stencils": fs.stencils.tolist(),
        "eps_solver": ds.eps_solver,
        "blind": ds.blind,
        "sample_count": len(ds),
        "provenance": ds.provenance,
    }
    if not ds.blind:
        head["ground_truth"] = ds.ground_truth.tolist()
    return head


def dumps_dataset(ds: DDFDataset) -> bytes:
    head = json.dumps(_header(ds), sort_keys=True).encode()
    body = io.BytesIO()
    body.write(MAGIC)
    body.write(struct.pack("<I", len(head)))
    body.write(head)
    body.write(np.ascontiguousarray(ds.rho, dtype="<f8").tobytes())
    payload = body.getvalue()
    return payload + struct.pack("<I", zlib.crc32(payload) & 0xFFFFFFFF)


def loads_dataset(blob: bytes) -> DDFDataset:
    if len(blob) < 12:
        raise ChecksumError("dataset file truncated")
    payload, tail = blob[:-4], blob[-4:]
    if zlib.crc32(payload) & 0xFFFFFFFF != struct.unpack("<I", tail)[0]:
        raise ChecksumError("dataset checksum mismatch")
    if payload[:4] != MAGIC:
        raise DatasetVersionError("not a distance-difference dataset file")
    (hlen,) = struct.unpack("<I", payload[4:8])
    head = json.loads(payload[8:8 + hlen])
    if head.get("version") != FORMAT_VERSION:
        raise DatasetVersionError(f"unsupported dataset version {head.get('version')}")
    K, n = int(head["K"]), int(head["sample_count"])
    raw = payload[8 + hlen:]
    if len(raw) != 8 * K * n:
        raise ChecksumError("sample block has the wrong size")
    rho = np.frombuffer(raw, dtype="<f8").reshape(n, K).astype(float)
    pair = head.get("pairwise_F_distances")
    fs = FSampleSet(np.asarray(head["Z"], float), np.asarray(head["boundary_flags"], bool),
                    None if pair is None else np.asarray(pair, float),
                    np.asarray(head.get("stencils", []), np.int64).reshape(-1, 5))
    truth = head.get("ground_truth")
    truth = None if head["blind"] or truth is None else np.asarray(truth, float).reshape(n, 2)
    prov = dict(head.get("provenance", {}))
    prov["eps_solver"] = head["eps_solver"]
    return DDFDataset(fs, rho, truth, prov)


def save_dataset(ds: DDFDataset, path) -> None:
    with open(path, "wb") as fh:
        fh.write(dumps_dataset(ds))


def load_dataset(path) -> DDFDataset:
    with open(path, "rb") as fh:
        return loads_dataset(fh.read())
