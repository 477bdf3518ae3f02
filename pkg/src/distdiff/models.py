"""Builders for the test manifolds used throughout the package."""

from __future__ import annotations

from dataclasses import dataclass
import math

import numpy as np

from .config import DEFAULT_RESOLUTION, DISC_CENTER, DISC_RADIUS
from .manifold import ManifoldModel, displacement, region_from_mask

TORUS = "periodic-grid-torus"
PATCH = "analytic-patch"


def _identity_metric(nx: int, ny: int) -> np.ndarray:
    g = np.zeros((nx, ny, 2, 2))
    g[..., 0, 0] = g[..., 1, 1] = 1.0
    return g


def _conformal_metric(factor: np.ndarray) -> np.ndarray:
    g = np.zeros(factor.shape + (2, 2))
    g[..., 0, 0] = g[..., 1, 1] = factor
    return g


def flat_torus(n: int = DEFAULT_RESOLUTION, m_mask: np.ndarray | None = None,
               name: str = "flat-torus") -> ManifoldModel:
    """Unit flat torus ``[0, 1)^2`` sampled on an ``n x n`` grid."""
    mask = np.zeros((n, n), bool) if m_mask is None else m_mask
    return ManifoldModel(TORUS, _identity_metric(n, n), region_from_mask(mask), 1.0 / n, name=name)


def disc_mask(model: ManifoldModel, center=DISC_CENTER, radius: float = DISC_RADIUS) -> np.ndarray:
    d = displacement(model, np.asarray(center, float), model.grid_points)
    return np.linalg.norm(d, axis=-1) < radius


def annulus_mask(model: ManifoldModel, center, r_inner: float, r_outer: float) -> np.ndarray:
    r = np.linalg.norm(displacement(model, np.asarray(center, float), model.grid_points), axis=-1)
    return (r >= r_inner) & (r < r_outer)


FOUR_DISC_CENTERS = ((0.25, 0.25), (0.75, 0.25), (0.25, 0.75), (0.75, 0.75))


def four_disc_mask(model: ManifoldModel, radius: float = 0.08,
                   centers=FOUR_DISC_CENTERS) -> np.ndarray:
    """M-mask whose complement F is a set of small discs."""
    inside = np.zeros(model.shape, bool)
    for c in centers:
        inside |= disc_mask(model, c, radius)
    return ~inside


def four_disc_torus(n: int = DEFAULT_RESOLUTION, radius: float = 0.08) -> ManifoldModel:
    """Flat torus observed from four small discs; M is everything else."""
    base = flat_torus(n)
    return base.with_region(four_disc_mask(base, radius), name="four-disc-torus")


def disc_torus(n: int = DEFAULT_RESOLUTION, center=DISC_CENTER,
               radius: float = DISC_RADIUS) -> ManifoldModel:
    """Flat torus whose hidden region M is a coordinate disc."""
    base = flat_torus(n)
    return base.with_region(disc_mask(base, center, radius), name="disc-in-torus")


@dataclass(frozen=True)
class FourierField:
    """Smooth periodic scalar ``u(p) = sum a_k cos(2 pi m_k . p + phase_k)``."""

    amplitudes: np.ndarray
    modes: np.ndarray
    phases: np.ndarray

    @classmethod
    def random(cls, seed: int = 0, amplitude: float = 0.25, max_mode: int = 2,
               terms: int = 6) -> "FourierField":
        rng = np.random.default_rng(seed)
        modes = rng.integers(-max_mode, max_mode + 1, size=(terms, 2))
        modes[np.all(modes == 0, axis=1)] = (1, 0)
        amps = rng.normal(size=terms) / np.linalg.norm(modes, axis=1)
        amps *= amplitude / np.sum(np.abs(amps))
        return cls(amps, modes.astype(float), rng.uniform(0, 2 * np.pi, terms))

    def _arg(self, p):
        p = np.asarray(p, dtype=float)
        return 2 * np.pi * (p @ self.modes.T) + self.phases

    def __call__(self, p) -> np.ndarray:
        return np.cos(self._arg(p)) @ self.amplitudes

    def gradient(self, p) -> np.ndarray:
        s = -np.sin(self._arg(p)) * self.amplitudes
        return 2 * np.pi * (s @ self.modes)

    def hessian(self, p) -> np.ndarray:
        c = -np.cos(self._arg(p)) * self.amplitudes * (2 * np.pi) ** 2
        return np.einsum("...k,ki,kj->...ij", c, self.modes, self.modes)


def conformal_torus(n: int = DEFAULT_RESOLUTION, field=None,
                    seed: int = 0, amplitude: float = 0.25, m_mask: np.ndarray | None = None,
                    name: str = "conformal-torus") -> ManifoldModel:
    """Torus with metric ``exp(2u) I`` for a smooth periodic ``u``."""
    field = FourierField.random(seed, amplitude) if field is None else field
    pts = (np.stack(np.meshgrid(np.arange(n), np.arange(n), indexing="ij"), -1)) / n
    g = _conformal_metric(np.exp(2 * field(pts)))
    mask = np.zeros((n, n), bool) if m_mask is None else m_mask
    return ManifoldModel(TORUS, g, region_from_mask(mask), 1.0 / n, name=name,
                         meta={"conformal_field": field})


def conformal_disc_torus(n: int = DEFAULT_RESOLUTION, seed: int = 0, amplitude: float = 0.25,
                         center=DISC_CENTER, radius: float = DISC_RADIUS) -> ManifoldModel:
    model = conformal_torus(n, seed=seed, amplitude=amplitude)
    return model.with_region(disc_mask(model, center, radius), name="conformal-disc-torus")


@dataclass(frozen=True)
class GaussianBump:
    """``u(p) = amplitude * exp(-|p - center|^2 / (2 width^2))`` on the unit torus."""

    center: tuple[float, float] = DISC_CENTER
    amplitude: float = 0.3
    width: float = 0.1

    def _rel(self, p):
        d = np.asarray(p, dtype=float) - np.asarray(self.center)
        return d - np.round(d)

    def __call__(self, p) -> np.ndarray:
        r = self._rel(p)
        return self.amplitude * np.exp(-np.sum(r * r, axis=-1) / (2 * self.width ** 2))

    def gradient(self, p) -> np.ndarray:
        return -self._rel(p) / self.width ** 2 * self(p)[..., None]


def bump_torus(n: int = DEFAULT_RESOLUTION, amplitude: float = 0.3, width: float = 0.1,
               center=DISC_CENTER, m_mask: np.ndarray | None = None) -> ManifoldModel:
    """Torus with a single smooth conformal bump ``exp(2u) I``."""
    return conformal_torus(n, field=GaussianBump(tuple(center), amplitude, width), m_mask=m_mask,
                           name="bump-torus")


def scaled_inside(model: ManifoldModel, factor: float, center=DISC_CENTER,
                  inner: float = 0.12, outer: float = 0.2) -> ManifoldModel:
    """Multiply the metric by a bump that equals ``factor`` within ``inner`` of ``center``.

    The bump blends smoothly to 1 at ``outer`` so the metric is unchanged
    outside that radius (in particular on F when ``outer`` lies inside M).
    """
    r = np.linalg.norm(displacement(model, np.asarray(center, float), model.grid_points), axis=-1)
    s = np.clip((outer - r) / (outer - inner), 0.0, 1.0)
    blend = s * s * s * (10 - 15 * s + 6 * s * s)
    scale = 1.0 + (factor - 1.0) * blend
    return ManifoldModel(model.kind, model.metric * scale[..., None, None], model.region,
                         model.h, model.origin, model.periodic, model.name + f"-x{factor:g}")


def translated(model: ManifoldModel, shift_cells: tuple[int, int]) -> ManifoldModel:
    """Isometric relabeling of a periodic model: content moves by ``shift_cells``."""
    si, sj = shift_cells
    g = np.roll(model.metric, (si, sj), axis=(0, 1))
    region = np.roll(model.region, (si, sj), axis=(0, 1))
    return ManifoldModel(model.kind, g, region, model.h, model.origin, model.periodic,
                         model.name + "-shifted", dict(model.meta))


def sphere_band(n_lon: int = DEFAULT_RESOLUTION, half_width: float = 0.15) -> ManifoldModel:
    """Equatorial band of a round sphere of circumference 1.

    Coordinates are ``(R lon, R lat)`` with ``R = 1 / (2 pi)``; the longitude
    axis wraps, latitude spans ``[-half_width, half_width]``.
    """
    radius = 1.0 / (2 * np.pi)
    h = 1.0 / n_lon
    n_lat = int(round(2 * half_width / h)) + 1
    lat = (-half_width + h * np.arange(n_lat)) / radius
    g = np.zeros((n_lon, n_lat, 2, 2))
    g[..., 0, 0] = np.cos(lat)[None, :] ** 2
    g[..., 1, 1] = 1.0
    region = region_from_mask(np.zeros((n_lon, n_lat), bool), (True, False))
    return ManifoldModel(PATCH, g, region, h, (0.0, -half_width), (True, False),
                         name="sphere-band", meta={"radius": radius})


def klein_metric(p) -> np.ndarray:
    """Beltrami-Klein metric of the hyperbolic plane on the unit disc."""
    p = np.asarray(p, dtype=float)
    w = 1.0 - np.sum(p * p, axis=-1)
    eye = np.eye(2)
    return eye / w[..., None, None] + np.einsum("...i,...j->...ij", p, p) / (w * w)[..., None, None]


def euclidean_metric(p) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    return np.broadcast_to(np.eye(2), p.shape[:-1] + (2, 2)).copy()


def disc_patch(metric_fn, n: int = 129, half_size: float = 0.6, name: str = "patch") -> ManifoldModel:
    """Square non-periodic patch ``[-half_size, half_size]^2`` with a closed-form metric."""
    h = 2 * half_size / (n - 1)
    ii = np.arange(n)
    pts = np.stack(np.meshgrid(ii, ii, indexing="ij"), -1) * h - half_size
    g = metric_fn(pts)
    region = region_from_mask(np.zeros((n, n), bool), (False, False))
    return ManifoldModel(PATCH, g, region, h, (-half_size, -half_size), (False, False), name=name)


def klein_patch(n: int = 129, half_size: float = 0.6) -> ManifoldModel:
    return disc_patch(klein_metric, n, half_size, "beltrami-klein")


def euclidean_patch(n: int = 129, half_size: float = 0.6) -> ManifoldModel:
    return disc_patch(euclidean_metric, n, half_size, "euclidean")


BUILTIN = {
    "flat-torus": lambda n: flat_torus(n),
    "disc-in-torus": lambda n: disc_torus(n),
    "conformal-torus": lambda n: conformal_torus(n),
    "conformal-disc-torus": lambda n: conformal_disc_torus(n),
    "sphere-band": lambda n: sphere_band(n),
    "four-disc-torus": lambda n: four_disc_torus(n),
    "bump-torus": lambda n: bump_torus(n, m_mask=four_disc_mask(flat_torus(n))),
}


def sphere_cut_reference() -> float:
    """Antipodal distance on the unit-circumference sphere."""
    return math.pi * sphere_band(8).meta["radius"]
