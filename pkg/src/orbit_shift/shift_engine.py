"""Shift-maps along consecutive flows and their Jacobian functional.

A shift-map moves ``x`` along the flow of ``F_1`` for time ``a_1(x)``, then
along ``F_2`` for time ``a_2(x)`` and so on. Every shift function is
evaluated at the starting point ``x``, so the result is generally not the
composition of the single-stage shift-maps.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import DimensionError, DomainError, FlowError
from .field_dsl import ExprNode, ScalarFieldSpec, VectorFieldSpec, add, as_scalar_field
from .flows import DEFAULT_FLOW, FlowConfig, flow
from .linalg_core import d_symbol, d_symbol_tolerance, det

PRESERVING = "diffeomorphism_preserving"
REVERSING = "diffeomorphism_reversing"
DEGENERATE = "degenerate"

DEGENERACY_REL = 1e-8
ORACLE_REL = 1e-4


@dataclass(frozen=True)
class Stage:
    field: VectorFieldSpec
    func: ScalarFieldSpec  # anything with dim, value(x), gradient(x)


@dataclass(frozen=True)
class ShiftSpec:
    dim: int
    stages: tuple
    flow_cfg: FlowConfig = DEFAULT_FLOW

    def __post_init__(self):
        if not self.stages:
            raise DomainError("a shift needs at least one stage")
        for i, st in enumerate(self.stages):
            if st.field.dim != self.dim or st.func.dim != self.dim:
                raise DimensionError(
                    f"stage {i}: field on R^{st.field.dim}, function on R^{st.func.dim}, "
                    f"shift on R^{self.dim}"
                )

    @classmethod
    def build(cls, pairs, flow_cfg: FlowConfig = DEFAULT_FLOW, dim: int = None) -> "ShiftSpec":
        """Make a spec from ``(field, function)`` pairs.

        Functions may be given as expression strings.
        """
        pairs = list(pairs)
        if not pairs:
            raise DomainError("a shift needs at least one stage")
        dim = pairs[0][0].dim if dim is None else dim
        stages = []
        for F, a in pairs:
            if isinstance(a, (str, ExprNode)):
                a = as_scalar_field(a, dim)
            stages.append(Stage(F, a))
        return cls(dim, tuple(stages), flow_cfg)

    @property
    def fields(self):
        return [st.field for st in self.stages]

    @property
    def funcs(self):
        return [st.func for st in self.stages]

    def __len__(self):
        return len(self.stages)


def _point(spec, x):
    x = np.asarray(x, dtype=float)
    if x.shape != (spec.dim,):
        raise DimensionError(f"expected a point in R^{spec.dim}, got shape {x.shape}")
    return x


def shift_times(spec: ShiftSpec, x) -> np.ndarray:
    """Values of all shift functions at ``x``."""
    xs = _point(spec, x).tolist()
    return np.array([st.func.value(xs) for st in spec.stages])


def apply_shift(spec: ShiftSpec, x) -> np.ndarray:
    """Evaluate the shift-map at ``x``.

    All times are taken at the original point before any flow runs.
    Flow failures are re-raised with ``stage`` set to the stage index.
    """
    times = shift_times(spec, x)
    y = _point(spec, x)
    for i, (st, t) in enumerate(zip(spec.stages, times)):
        try:
            y = flow(st.field, y, t, spec.flow_cfg)
        except FlowError as exc:
            exc.stage = i
            exc.args = (f"stage {i}: {exc}",)
            raise
    return y


@dataclass(frozen=True)
class LambdaValue:
    value: float
    cross_form_residual: float
    tolerance: float
    scale: float
    """``sum |F_i| |grad a_i|``; sets the degeneracy band."""

    def __iter__(self):
        return iter((self.value, self.cross_form_residual))

    @property
    def residual_ok(self) -> bool:
        return self.cross_form_residual <= self.tolerance


def field_and_gradient_vectors(spec: ShiftSpec, x):
    xs = _point(spec, x).tolist()
    F = np.array([st.field.function(xs) for st in spec.stages], dtype=float)
    A = np.array([st.func.gradient(xs) for st in spec.stages], dtype=float)
    return F, A


def lambda_functional(spec: ShiftSpec, x) -> LambdaValue:
    """Jacobian functional ``|E_n + Y|`` with ``Y[i, j] = F_j(a_i)(x)``.

    The ``m x m`` form ``|E_m + sum F_i grad(a_i)^T|`` is computed too and
    the difference reported as the cross-form residual.
    """
    F, A = field_and_gradient_vectors(spec, x)
    ds = d_symbol(F, A)
    scale = float(np.sum(np.linalg.norm(F, axis=1) * np.linalg.norm(A, axis=1)))
    return LambdaValue(ds.value, ds.residual, d_symbol_tolerance(F, A), scale)


def fd_jacobian(fn: Callable, x, h: float) -> np.ndarray:
    """Central-difference Jacobian; column j uses ``x +- h e_j``."""
    x = np.asarray(x, dtype=float)
    cols = []
    for j in range(x.size):
        e = np.zeros_like(x)
        e[j] = h
        cols.append((np.asarray(fn(x + e), dtype=float) - np.asarray(fn(x - e), dtype=float)) / (2 * h))
    return np.column_stack(cols)


def reduce_to_fixed_point(spec: ShiftSpec, x):
    """Split ``spec`` at ``x`` into ``(reduced, beta)``.

    ``beta`` shifts by the constants ``C_i = a_i(x)``; ``reduced`` shifts by
    ``a_i - C_i``, which vanish at ``x``, so ``x`` is a fixed point of it.
    """
    C = shift_times(spec, x)
    if all(c == 0 for c in C):
        beta = replace(spec, stages=tuple(
            Stage(st.field, ScalarFieldSpec.constant(0.0, spec.dim)) for st in spec.stages))
        return spec, beta
    reduced = replace(spec, stages=tuple(
        Stage(st.field, st.func.shifted(c)) for st, c in zip(spec.stages, C)))
    beta = replace(spec, stages=tuple(
        Stage(st.field, ScalarFieldSpec.constant(c, spec.dim)) for st, c in zip(spec.stages, C)))
    return reduced, beta


def oracle_step(x) -> float:
    return 1e-5 * (1.0 + float(np.linalg.norm(x)))


@dataclass
class ClassificationReport:
    point: np.ndarray
    lambda_value: float
    cross_form_residual: float
    verdict: str
    residual_ok: bool = True
    fd_jacobian_det: Optional[float] = None
    oracle_residual: Optional[float] = None
    fixed_point: Optional[bool] = None
    sign_agrees: Optional[bool] = None

    def as_record(self) -> dict:
        rec = {f"x{i + 1}": float(v) for i, v in enumerate(self.point)}
        rec["lambda"] = self.lambda_value
        rec["residual"] = self.cross_form_residual
        rec["verdict"] = self.verdict
        if self.fd_jacobian_det is not None:
            rec["fd_det"] = self.fd_jacobian_det
            rec["oracle_residual"] = self.oracle_residual
        rec["residual_ok"] = self.residual_ok
        return rec


def verdict_for(lam: LambdaValue) -> str:
    threshold = DEGENERACY_REL * (1.0 + lam.scale)
    if lam.value > threshold:
        return PRESERVING
    if lam.value < -threshold:
        return REVERSING
    return DEGENERATE


def normalized_jacobian_det(spec: ShiftSpec, x, h: float = None) -> tuple:
    """``det Df(x) / det D(beta)(x)`` from finite differences.

    ``beta`` is the constant-time shift from :func:`reduce_to_fixed_point`;
    its Jacobian determinant is positive. At a fixed point ``beta`` is the
    identity and the raw determinant is returned. Returns
    ``(ratio, is_fixed_point)``.
    """
    x = _point(spec, x)
    h = oracle_step(x) if h is None else h
    C = shift_times(spec, x)
    jf = det(fd_jacobian(lambda p: apply_shift(spec, p), x, h))
    if all(c == 0 for c in C):
        return jf, True
    _, beta = reduce_to_fixed_point(spec, x)
    jb = det(fd_jacobian(lambda p: apply_shift(beta, p), x, h))
    return jf / jb, False


def classify_point(spec: ShiftSpec, x, with_oracle: bool = False) -> ClassificationReport:
    """Local diffeomorphism verdict at ``x`` from the sign of the functional."""
    x = _point(spec, x)
    lam = lambda_functional(spec, x)
    report = ClassificationReport(
        point=x.copy(),
        lambda_value=lam.value,
        cross_form_residual=lam.cross_form_residual,
        verdict=verdict_for(lam),
        residual_ok=lam.residual_ok,
    )
    if with_oracle:
        ratio, fixed = normalized_jacobian_det(spec, x)
        report.fd_jacobian_det = ratio
        report.oracle_residual = abs(lam.value - ratio)
        report.fixed_point = fixed
        if report.verdict == DEGENERATE:
            report.sign_agrees = None
        else:
            report.sign_agrees = math.copysign(1.0, lam.value) == math.copysign(1.0, ratio)
    return report


def build_commutator(F1: VectorFieldSpec, F2: VectorFieldSpec, a1, a2,
                     cfg: FlowConfig = DEFAULT_FLOW) -> ShiftSpec:
    """Four-stage shift along ``F1, F2, F1, F2`` by ``a1, a2, -a1, -a2``."""
    if F1.dim != F2.dim:
        raise DimensionError(f"fields on R^{F1.dim} and R^{F2.dim}")
    dim = F1.dim
    a1 = as_scalar_field(a1, dim)
    a2 = as_scalar_field(a2, dim)
    return ShiftSpec.build([(F1, a1), (F2, a2), (F1, a1.negated()), (F2, a2.negated())], cfg)


def permuted(spec: ShiftSpec, sigma: Sequence[int]) -> ShiftSpec:
    """Reorder stages so that stage ``k`` of the result is ``spec.stages[sigma[k]]``.

    ``sigma`` is 0-based.
    """
    sigma = list(sigma)
    if sorted(sigma) != list(range(len(spec))):
        raise DomainError(f"{sigma} is not a permutation of 0..{len(spec) - 1}")
    return replace(spec, stages=tuple(spec.stages[k] for k in sigma))


def all_permutations(spec: ShiftSpec):
    for sigma in itertools.permutations(range(len(spec))):
        yield sigma, permuted(spec, sigma)


def merge_adjacent(spec: ShiftSpec) -> ShiftSpec:
    """Collapse runs of consecutive stages that share the same field object
    into one stage whose function is the sum of the run's functions."""
    merged = []
    for st in spec.stages:
        if merged and merged[-1].field is st.field:
            prev = merged[-1]
            merged[-1] = Stage(st.field, ScalarFieldSpec(spec.dim, add(prev.func.body, st.func.body)))
        else:
            merged.append(st)
    return replace(spec, stages=tuple(merged))
