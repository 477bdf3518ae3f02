"""Point-source waves on the grid torus and first-arrival picking.

The Laplace-Beltrami operator is discretised in flux form,
``(1/sqrt|g|) d_i (sqrt|g| g^ij d_j u)``, with face-averaged coefficients on
the diagonal terms and centred differences on the mixed terms; the stiffness
is symmetric, so leapfrog conserves a discrete energy.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import csv
import json
import math

import numpy as np

from .ddf import DDFSample, FSampleSet
from .errors import (
    CFLViolationError,
    IncompleteRecordError,
    InvalidRequestError,
    NoArrivalError,
)
from .manifold import ManifoldModel, index_coords

DEFAULT_THRESHOLD = 1e-3


@dataclass(frozen=True)
class SourceEvent:
    y: np.ndarray
    s: float
    kappa: float = 1.0

    def __post_init__(self):
        if self.kappa == 0:
            raise InvalidRequestError("source magnitude must be nonzero")


@dataclass(eq=False)
class WaveResult:
    """Receiver traces ``traces[n, r]`` at times ``times[n]``."""

    times: np.ndarray
    traces: np.ndarray
    receivers: np.ndarray
    dt: float
    energy: np.ndarray
    inject_step: int
    snapshots: dict[int, np.ndarray] = field(default_factory=dict)


@dataclass(eq=False)
class ArrivalRecord:
    times: np.ndarray
    confidence: np.ndarray

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["receiver", "time", "confidence"])
            for i, (t, c) in enumerate(zip(self.times, self.confidence)):
                w.writerow([i, repr(float(t)), repr(float(c))])


class WaveOperator:
    """Discrete ``Delta_g`` on a periodic grid."""

    def __init__(self, model: ManifoldModel):
        if not all(model.periodic):
            raise InvalidRequestError("wave simulation needs a periodic model")
        g = model.metric
        det = g[..., 0, 0] * g[..., 1, 1] - g[..., 0, 1] ** 2
        root = np.sqrt(det)
        ginv = np.linalg.inv(g)
        self.h = model.h
        self.root_det = root
        a11 = root * ginv[..., 0, 0]
        a22 = root * ginv[..., 1, 1]
        self.a12 = root * ginv[..., 0, 1]
        self.a11_face = 0.5 * (a11 + np.roll(a11, -1, axis=0))
        self.a22_face = 0.5 * (a22 + np.roll(a22, -1, axis=1))
        self.mixed = bool(np.any(np.abs(self.a12) > 0))
        self.lam_max = float(np.max(np.linalg.eigvalsh(ginv)))

    def stiffness(self, u: np.ndarray) -> np.ndarray:
        """``-sqrt|g| Delta_g u`` times h^2 (symmetric positive semidefinite)."""
        fx = self.a11_face * (np.roll(u, -1, axis=0) - u)
        fy = self.a22_face * (np.roll(u, -1, axis=1) - u)
        out = -(fx - np.roll(fx, 1, axis=0)) - (fy - np.roll(fy, 1, axis=1))
        if self.mixed:
            dx = 0.5 * (np.roll(u, -1, axis=0) - np.roll(u, 1, axis=0))
            dy = 0.5 * (np.roll(u, -1, axis=1) - np.roll(u, 1, axis=1))
            qx = self.a12 * dy
            qy = self.a12 * dx
            out -= 0.5 * (np.roll(qx, -1, axis=0) - np.roll(qx, 1, axis=0))
            out -= 0.5 * (np.roll(qy, -1, axis=1) - np.roll(qy, 1, axis=1))
        return out

    def apply(self, u: np.ndarray) -> np.ndarray:
        return -self.stiffness(u) / (self.root_det * self.h ** 2)

    def max_dt(self) -> float:
        return 0.5 * self.h / math.sqrt(self.lam_max)


def _bilinear_weights(model: ManifoldModel, y) -> list[tuple[int, int, float]]:
    u = index_coords(model, y)
    i0 = np.floor(u).astype(int)
    fx, fy = u - i0
    nx, ny = model.shape
    out = []
    for di, wx in ((0, 1 - fx), (1, fx)):
        for dj, wy in ((0, 1 - fy), (1, fy)):
            if wx * wy > 0:
                out.append(((i0[0] + di) % nx, (i0[1] + dj) % ny, float(wx * wy)))
    return out


def _receiver_index(model: ManifoldModel, receivers) -> np.ndarray:
    return np.array([model.nearest_vertex(z) for z in np.atleast_2d(receivers)], dtype=np.int64)


def simulate_wave(model: ManifoldModel, event: SourceEvent, t_end: float, dt: float | None = None,
                  receivers=None, snapshot_steps=(), operator: WaveOperator | None = None) -> WaveResult:
    """Leapfrog for ``u_tt = Delta_g u + kappa delta_{y,s}``.

    The source enters as one bilinear point injection of ``kappa dt``
    momentum at the first step at or after ``s``; every earlier step is
    identically zero.
    """
    op = WaveOperator(model) if operator is None else operator
    dt_max = op.max_dt()
    if dt is None:
        dt = dt_max
    if dt <= 0 or dt > dt_max * (1 + 1e-12):
        raise CFLViolationError(f"dt={dt:.4g} exceeds the stability bound {dt_max:.4g}")
    if t_end <= event.s:
        raise InvalidRequestError("t_end must exceed the emission time")
    n_steps = int(math.ceil(t_end / dt))
    k_inject = max(0, int(math.ceil(event.s / dt - 1e-12)))
    rec = np.zeros((0, 2), np.int64) if receivers is None else _receiver_index(model, receivers)
    traces = np.zeros((n_steps + 1, len(rec)))
    energy = np.zeros(n_steps + 1)
    snaps = {}
    shape = model.shape
    prev = np.zeros(shape)
    cur = np.zeros(shape)
    mass = op.root_det
    area = model.h ** 2
    src = np.zeros(shape)
    for i, j, w in _bilinear_weights(model, event.y):
        src[i, j] += w
    # delta: weights / cell area, divided by sqrt|g| to act as a density
    kick = event.kappa * src / (area * mass)
    # the field is identically zero before the injection step
    for n in range(min(k_inject, n_steps), n_steps):
        nxt = 2 * cur - prev + dt * dt * op.apply(cur)
        if n == k_inject:
            nxt = nxt + dt * kick
        energy[n + 1] = 0.5 * area * np.sum(mass * ((nxt - cur) / dt) ** 2) \
            + 0.5 * np.sum(nxt * op.stiffness(cur))
        prev, cur = cur, nxt
        if len(rec):
            traces[n + 1] = cur[rec[:, 0], rec[:, 1]]
        if n + 1 in snapshot_steps:
            snaps[n + 1] = cur.copy()
    return WaveResult(dt * np.arange(n_steps + 1), traces, rec, dt, energy, k_inject + 1, snaps)


def pick_arrival_times(result: WaveResult, threshold: float = DEFAULT_THRESHOLD) -> ArrivalRecord:
    """First crossing of ``threshold * max|trace|`` per receiver, linearly interpolated."""
    amp = np.abs(result.traces)
    peak = amp.max(axis=0)
    times = np.empty(amp.shape[1])
    conf = np.empty(amp.shape[1])
    for r in range(amp.shape[1]):
        if peak[r] == 0:
            raise NoArrivalError(f"receiver {r} never saw the wave; extend t_end")
        level = threshold * peak[r]
        hits = np.flatnonzero(amp[:, r] > level)
        n = int(hits[0])
        a0, a1 = amp[n - 1, r], amp[n, r]
        frac = (level - a0) / (a1 - a0) if a1 > a0 else 1.0
        times[r] = result.times[n - 1] + frac * result.dt
        conf[r] = a1 / level
    return ArrivalRecord(times, conf)


def ddf_from_arrivals(record: ArrivalRecord, fsamples: FSampleSet | int | None = None) -> DDFSample:
    """``rho_a = T(z_a) - T(z_0)``; the unknown emission time cancels."""
    t = np.asarray(record.times, dtype=float)
    k = fsamples.K if isinstance(fsamples, FSampleSet) else fsamples
    if k is not None and len(t) != k:
        raise IncompleteRecordError(f"record has {len(t)} picks for {k} F-samples")
    if not np.all(np.isfinite(t)):
        raise IncompleteRecordError("record has missing picks")
    return DDFSample(t - t[0])


def arrival_dataset_rows(model: ManifoldModel, events, fsamples: FSampleSet, t_end: float | None = None,
                         threshold: float = DEFAULT_THRESHOLD, jobs: int = 1) -> np.ndarray:
    """Wave-derived centred vectors for a list of events (one row per event)."""
    op = WaveOperator(model)

    def one(ev):
        end = t_end if t_end is not None else ev.s + 1.05 * model.diameter_bound() / 2 ** 0.5
        res = simulate_wave(model, ev, end, receivers=fsamples.points, operator=op)
        return ddf_from_arrivals(pick_arrival_times(res, threshold), fsamples).rho

    if jobs > 1 and len(events) > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(one, events))
    else:
        rows = [one(ev) for ev in events]
    return np.array(rows).reshape(len(events), fsamples.K)


def load_events(path) -> list[SourceEvent]:
    with open(path) as fh:
        items = json.load(fh)
    return [SourceEvent(np.asarray(e["y"], float), float(e["s"]), float(e.get("kappa", 1.0)))
            for e in items]


def save_events(events, path) -> None:
    with open(path, "w") as fh:
        json.dump([{"y": list(map(float, e.y)), "s": float(e.s), "kappa": float(e.kappa)}
                   for e in events], fh)
