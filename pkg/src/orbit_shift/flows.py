"""Time-t flows of vector fields.

Zero, translation and linear fields have closed-form flows; expression
fields are integrated with fixed-step RK4. ``FlowConfig`` bounds the time
and the region the trajectory may visit, standing in for the existence
window of a local flow.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, DomainError, TimeBoundError, TrajectoryEscapeError
from .field_dsl import VectorFieldSpec
from .linalg_core import matrix_exp


@dataclass(frozen=True)
class FlowConfig:
    method: str = "exact_if_possible"  # or "rk4"
    rk4_step: float = 1e-3
    max_time: float = 10.0
    domain_radius: float = 1e6

    def __post_init__(self):
        if self.method not in ("exact_if_possible", "rk4"):
            raise DomainError(f"unknown flow method {self.method!r}")
        for name in ("rk4_step", "max_time", "domain_radius"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise DomainError(f"FlowConfig.{name} must be positive and finite, got {v!r}")


DEFAULT_FLOW = FlowConfig()


def _check_start(F, x, t, cfg):
    x = np.asarray(x, dtype=float)
    if x.shape != (F.dim,):
        raise DimensionError(f"expected a point in R^{F.dim}, got shape {x.shape}")
    if not math.isfinite(t) or abs(t) > cfg.max_time:
        raise TimeBoundError(f"|t| = {abs(t):.6g} exceeds max_time {cfg.max_time}")
    if not np.linalg.norm(x) <= cfg.domain_radius:
        raise TrajectoryEscapeError(f"start point outside domain radius {cfg.domain_radius}")
    return x


def rk4(fn, y, t, step, radius):
    """Integrate ``dy/dt = fn(y)`` from 0 to ``t`` with fixed steps.

    Steps have size ``sign(t) * min(step, |t|)``; the last one is shortened
    to land exactly on ``t``. ``y`` is a list of floats.
    """
    if t == 0:
        return list(y)
    h = math.copysign(min(step, abs(t)), t)
    nfull = int(abs(t) // abs(h))
    rest = t - nfull * h
    # guard against a sliver step from rounding in t // h
    if abs(rest) < 1e-12 * abs(h):
        rest = 0.0
    y = list(y)
    steps = [h] * nfull + ([rest] if rest else [])
    for dt in steps:
        k1 = fn(y)
        k2 = fn([a + 0.5 * dt * b for a, b in zip(y, k1)])
        k3 = fn([a + 0.5 * dt * b for a, b in zip(y, k2)])
        k4 = fn([a + dt * b for a, b in zip(y, k3)])
        y = [a + dt / 6.0 * (b1 + 2.0 * b2 + 2.0 * b3 + b4)
             for a, b1, b2, b3, b4 in zip(y, k1, k2, k3, k4)]
        if not math.hypot(*y) <= radius:
            raise TrajectoryEscapeError(
                f"trajectory left the domain radius {radius} (local flow window exceeded)"
            )
    return y


def flow(F: VectorFieldSpec, x, t: float, cfg: FlowConfig = DEFAULT_FLOW) -> np.ndarray:
    """Point reached from ``x`` after time ``t`` along ``F``."""
    t = float(t)
    x = _check_start(F, x, t, cfg)
    if t == 0.0 or F.kind == "zero":
        return x.copy()
    if cfg.method == "exact_if_possible":
        if F.kind == "translation":
            out = x + t * F.direction
        elif F.kind == "linear":
            out = matrix_exp(F.matrix, t) @ x
        else:
            out = None
        if out is not None:
            if not np.linalg.norm(out) <= cfg.domain_radius:
                raise TrajectoryEscapeError(f"flow leaves the domain radius {cfg.domain_radius}")
            return out
    return np.array(rk4(F.function, x.tolist(), t, cfg.rk4_step, cfg.domain_radius))


def flow_time_derivative(F: VectorFieldSpec, x, t: float, cfg: FlowConfig = DEFAULT_FLOW) -> np.ndarray:
    """Velocity of the trajectory through ``x`` at time ``t``."""
    return F(flow(F, x, t, cfg))
