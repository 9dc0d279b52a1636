"""Writing leaf-preserving maps as shift-maps.

Two foliations are handled. The standard foliation of R^m by n-planes
``x_{n+1..m} = const`` is generated by ``d/dx_1 .. d/dx_n`` and any
leaf-preserving map is the shift by ``a_i = f_i - x_i``. For a product
foliation, each block of coordinates carries its own zero, coordinate or
linear field; the shift times of linear blocks are recovered point by
point by solving ``exp(t A) x_block = f_block(x)`` for ``t``.

Leaf preservation is checked on a finite sample of points, not proven.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DimensionError, DomainError, LeafPreservationError, ReconstructionError
from .field_dsl import ScalarFieldSpec, VectorFieldSpec, Var, as_scalar_field, const, sub
from .flows import DEFAULT_FLOW, FlowConfig
from .linalg_core import det, matrix_exp
from .shift_engine import ShiftSpec, Stage, apply_shift, fd_jacobian

LEAF_TOL = 1e-9
NEWTON_MAX_ITER = 50


@dataclass(frozen=True)
class LeafMapSpec:
    """A map R^m -> R^m given by its coordinate functions."""

    dim: int
    components: tuple

    def __post_init__(self):
        if len(self.components) != self.dim:
            raise DimensionError(f"expected {self.dim} components, got {len(self.components)}")
        for c in self.components:
            if c.dim != self.dim:
                raise DimensionError(f"component lives on R^{c.dim}, expected R^{self.dim}")

    @classmethod
    def parse(cls, sources: Sequence, dim: int = None) -> "LeafMapSpec":
        dim = len(sources) if dim is None else dim
        return cls(dim, tuple(as_scalar_field(s, dim) for s in sources))

    def __call__(self, x) -> np.ndarray:
        xs = np.asarray(x, dtype=float).tolist()
        return np.array([c.value(xs) for c in self.components])

    def jacobian(self, x) -> np.ndarray:
        """Rows are gradients of the components."""
        xs = np.asarray(x, dtype=float).tolist()
        return np.array([c.gradient(xs) for c in self.components])


def sample_grid(dim: int, per_axis: int = 11, lo: float = -1.0, hi: float = 1.0) -> np.ndarray:
    """Regular grid on ``[lo, hi]^dim``.

    For ``dim > 3`` the full grid is too large; ``per_axis**3`` seeded
    uniform points are drawn instead.
    """
    if dim <= 3:
        axes = [np.linspace(lo, hi, per_axis)] * dim
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, dim)
    rng = np.random.default_rng(0)
    return rng.uniform(lo, hi, size=(per_axis**3, dim))


# ---------------------------------------------------------------------------
# standard foliation by n-planes


def _check_fixed_coords(f: LeafMapSpec, coords, points, what):
    for x in points:
        y = f(x)
        for j in coords:
            if abs(y[j] - x[j]) > LEAF_TOL * (1.0 + abs(x[j])):
                raise LeafPreservationError(
                    f"{what}: component {j + 1} moves x{j + 1} at {x.tolist()} "
                    f"({x[j]!r} -> {y[j]!r})",
                    witness=x.tolist(),
                )


def decompose_translation(f: LeafMapSpec, n: int, sample_points=None) -> list:
    """Shift functions ``a_i = f_i - x_i`` for the foliation by n-planes."""
    m = f.dim
    if not 1 <= n <= m:
        raise DimensionError(f"leaf dimension {n} outside 1..{m}")
    points = sample_grid(m) if sample_points is None else np.atleast_2d(sample_points)
    _check_fixed_coords(f, range(n, m), points, "map does not preserve the n-plane leaves")
    return [ScalarFieldSpec(m, sub(f.components[i].body, Var(i + 1))) for i in range(n)]


def translation_shift_spec(alphas: Sequence, dim: int, cfg: FlowConfig = DEFAULT_FLOW) -> ShiftSpec:
    """Shift along ``d/dx_1 .. d/dx_n`` via ``alphas``."""
    stages = tuple(Stage(VectorFieldSpec.coordinate(dim, i + 1), a) for i, a in enumerate(alphas))
    return ShiftSpec(dim, stages, cfg)


# ---------------------------------------------------------------------------
# product foliations


@dataclass(frozen=True, eq=False)
class ProductFoliationSpec:
    """R^m split into coordinate blocks, one field per block.

    ``block_fields[i]`` lives on R^{block_dims[i]}; it is ``None`` for an
    empty block. Translation fields must be coordinate fields of the block.
    """

    block_dims: tuple
    block_fields: tuple

    def __post_init__(self):
        if len(self.block_dims) != len(self.block_fields) or not self.block_dims:
            raise DimensionError("need one field per block and at least one block")
        for i, (k, F) in enumerate(zip(self.block_dims, self.block_fields)):
            if k < 0:
                raise DimensionError(f"block {i} has negative dimension {k}")
            if k == 0:
                if F is not None and F.kind != "zero":
                    raise DimensionError(f"block {i} is empty but has a {F.kind} field")
                continue
            if F is None or F.dim != k:
                raise DimensionError(f"block {i} needs a field on R^{k}")
            if F.kind == "expression":
                raise DomainError(f"block {i}: only zero, coordinate and linear fields are supported")
            if F.kind == "translation":
                d = F.direction
                if not (np.count_nonzero(d) == 1 and np.max(d) == 1.0):
                    raise DomainError(f"block {i}: translation must be a coordinate field d/dx_j")

    @property
    def dim(self) -> int:
        return int(sum(self.block_dims))

    def block_slices(self):
        start = 0
        for k in self.block_dims:
            yield slice(start, start + k)
            start += k

    def embedded_fields(self) -> list:
        """Block fields regarded as fields on the whole of R^m."""
        m = self.dim
        out = []
        for sl, F in zip(self.block_slices(), self.block_fields):
            if F is None or F.kind == "zero":
                out.append(VectorFieldSpec.zero(m))
            elif F.kind == "translation":
                d = np.zeros(m)
                d[sl] = F.direction
                out.append(VectorFieldSpec.translation(d))
            else:
                A = np.zeros((m, m))
                A[sl, sl] = F.matrix
                out.append(VectorFieldSpec.linear(A))
        return out


def retrieve_time(A, z, y, point=None) -> float:
    """Solve ``exp(t A) z = y`` for ``t`` by Gauss-Newton seeded at 0.

    Raises :class:`LeafPreservationError` if ``y`` is not on the orbit of
    ``z`` and :class:`ReconstructionError` if the iteration does not settle.
    Returns 0 when ``z`` is a zero of the field and ``y == z``.
    """
    A = np.asarray(A, dtype=float)
    z = np.asarray(z, dtype=float)
    y = np.asarray(y, dtype=float)
    scale = 1.0 + np.linalg.norm(y)
    if np.linalg.norm(A @ z) <= 1e-14 * (1.0 + np.linalg.norm(z)):
        if np.linalg.norm(y - z) > LEAF_TOL * scale:
            raise LeafPreservationError(
                "map moves a zero of the block field", witness=None if point is None else list(point))
        return 0.0
    t = 0.0
    for _ in range(NEWTON_MAX_ITER):
        try:
            P = matrix_exp(A, t) @ z
        except DomainError:
            break
        r = P - y
        if np.linalg.norm(r) <= 1e-14 * scale:
            return t
        d = A @ P
        step = float(d @ r) / float(d @ d)
        t -= step
        if not math.isfinite(t):
            break
        if abs(step) <= 1e-14 * (1.0 + abs(t)):
            r = matrix_exp(A, t) @ z - y
            if np.linalg.norm(r) > LEAF_TOL * scale:
                raise LeafPreservationError(
                    f"image is off the orbit (residual {np.linalg.norm(r):.3g})",
                    witness=None if point is None else list(point))
            return t
    raise ReconstructionError(
        f"time retrieval did not converge in {NEWTON_MAX_ITER} iterations",
        point=None if point is None else list(point))


def _is_periodic(A) -> bool:
    """Nonzero A whose eigenvalues are all imaginary: orbits may close up,
    so retrieved times are only defined modulo a period."""
    if not np.any(A):
        return False
    ev = np.linalg.eigvals(A)
    return bool(np.all(np.abs(ev.real) <= 1e-12 * (1.0 + np.abs(ev).max())) and np.any(ev.imag != 0))


class RetrievedShiftFunction:
    """Shift function of a linear block, evaluated by time retrieval.

    Values come from :func:`retrieve_time` at each query point; the
    gradient is a central difference of those values. For periodic orbits
    the value is the solution reached from the seed ``t = 0``, and
    ``periodic`` is set.
    """

    def __init__(self, f: LeafMapSpec, block: slice, matrix):
        self.f = f
        self.dim = f.dim
        self.block = block
        self.matrix = np.asarray(matrix, dtype=float)
        self.periodic = _is_periodic(self.matrix)

    def value(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return retrieve_time(self.matrix, x[self.block], self.f(x)[self.block], point=x.tolist())

    def gradient(self, x, h: float = 1e-6) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return fd_jacobian(lambda p: np.array([self.value(p)]), x, h)[0]

    def __repr__(self):
        return f"RetrievedShiftFunction(block={self.block.start}:{self.block.stop}, periodic={self.periodic})"


def decompose_product(f: LeafMapSpec, fol: ProductFoliationSpec, cfg: FlowConfig = DEFAULT_FLOW,
                      sample_points=None) -> list:
    """Shift functions representing ``f`` along the block fields of ``fol``.

    Zero blocks get ``0``, coordinate blocks ``f_j - x_j`` (symbolic) and
    linear blocks a :class:`RetrievedShiftFunction`. The sample points are
    used to check leaf preservation and the round trip before returning.
    """
    m = f.dim
    if fol.dim != m:
        raise DimensionError(f"foliation blocks sum to {fol.dim}, map lives on R^{m}")
    points = sample_grid(m) if sample_points is None else np.atleast_2d(sample_points)
    funcs = []
    for sl, F in zip(fol.block_slices(), fol.block_fields):
        coords = range(sl.start, sl.stop)
        if F is None or F.kind == "zero":
            _check_fixed_coords(f, coords, points, "map moves a coordinate of a zero-field block")
            funcs.append(ScalarFieldSpec(m, const(0.0)))
        elif F.kind == "translation":
            j = sl.start + int(np.flatnonzero(F.direction)[0])
            _check_fixed_coords(f, [c for c in coords if c != j], points,
                                "map leaves the translation orbit")
            funcs.append(ScalarFieldSpec(m, sub(f.components[j].body, Var(j + 1))))
        else:
            funcs.append(RetrievedShiftFunction(f, sl, F.matrix))
    spec = product_shift_spec(fol, funcs, cfg)
    for x in points:
        err = np.linalg.norm(apply_shift(spec, x) - f(x))
        if err > 1e-7 * (1.0 + np.linalg.norm(x)):
            raise LeafPreservationError(f"round trip misses f by {err:.3g} at {x.tolist()}",
                                        witness=x.tolist())
    return funcs


def product_shift_spec(fol: ProductFoliationSpec, funcs: Sequence, cfg: FlowConfig = DEFAULT_FLOW) -> ShiftSpec:
    stages = tuple(Stage(F, a) for F, a in zip(fol.embedded_fields(), funcs))
    return ShiftSpec(fol.dim, stages, cfg)


def jacobian_det(f: LeafMapSpec, x) -> float:
    """Ordinary Jacobian determinant of ``f`` from symbolic derivatives."""
    return det(f.jacobian(x))
