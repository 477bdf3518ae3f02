"""Default tolerances and run settings.

Every tolerance is expressed in units of the grid spacing ``h`` or of the
measured solver error ``eps_solver`` where that makes sense.  Reports echo
the effective table so a run can be reproduced exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import math

# name -> (default, kind, description).  "hard" entries guard invariants and
# can only be tightened by overrides; "report" entries are thresholds that a
# user may move freely.
TOLERANCES: dict[str, tuple[float, str, str]] = {
    "cut": (3.0, "hard", "cut detection |d(gamma(t),x)-t| bound, multiples of h"),
    "speed_drift": (1e-6, "hard", "relative geodesic speed drift"),
    "speed_blowup": (1e-3, "hard", "speed drift that aborts integration"),
    "triangle": (2.0, "hard", "triangle-inequality slack, multiples of eps_solver"),
    "lipschitz": (4.0, "hard", "2-Lipschitz slack, multiples of eps_solver"),
    "sigma_min": (0.05, "report", "minimum chart conditioning"),
    "grad_norm": (5.0, "report", "eikonal unit-norm band half-width, multiples of h"),
    "sigma_angle": (2.0, "report", "sigma-set angular tolerance numerator, multiples of h"),
    "gauge": (1e-3, "report", "projective gauge residual"),
    "matveev_drift": (1e-3, "report", "relative I0 drift for equivalent metrics"),
    "matveev_detect": (0.05, "report", "I0 drift flagging non-equivalence"),
    "conformal": (0.02, "report", "allowed |f-1| for the implied conformal factor"),
    "metric_rel": (0.05, "report", "relative Frobenius error of recovered metrics"),
    "chart_accept": (0.8, "report", "minimum chart acceptance rate in pipelines"),
    "match_threshold": (5.0, "report", "sup-norm matching threshold, multiples of h"),
    "boundary_h": (2.0, "report", "grid term of the boundary-distance bound, multiples of h"),
    "eps_solver": (0.02, "report", "largest acceptable measured solver error"),
    "pick_lead": (8.0, "report", "largest lead of a pick ahead of s + d, multiples of h"),
}


@dataclass
class Tolerances:
    """Effective tolerance table with override bookkeeping."""

    values: dict[str, float] = field(
        default_factory=lambda: {k: v[0] for k, v in TOLERANCES.items()}
    )
    overridden: set[str] = field(default_factory=set)

    def __getitem__(self, name: str) -> float:
        return self.values[name]

    def default(self, name: str) -> float:
        return TOLERANCES[name][0]

    def override(self, name: str, value: float) -> None:
        if name not in TOLERANCES:
            raise KeyError(f"unknown tolerance {name!r}")
        if not math.isfinite(value) or value < 0:
            raise ValueError(f"tolerance {name} must be finite and >= 0")
        default, kind, _ = TOLERANCES[name]
        if kind == "hard":
            # hard invariants never loosen
            value = min(value, default)
        self.values[name] = value
        self.overridden.add(name)

    def as_dict(self) -> dict[str, float]:
        return dict(self.values)


DEFAULT_RESOLUTION = 128
DEFAULT_K = 16
DEFAULT_SAMPLES = 500
DISC_CENTER = (0.5, 0.5)
DISC_RADIUS = 0.25
