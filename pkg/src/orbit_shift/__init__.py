"""Shift-maps along consecutive flows of vector fields on R^m."""

from pathlib import Path

from .errors import (
    DimensionError,
    DomainError,
    EvaluationError,
    ExprSyntaxError,
    FlowError,
    LeafPreservationError,
    OrbitShiftError,
    ReconstructionError,
    TimeBoundError,
    TrajectoryEscapeError,
)
from .field_dsl import (
    ScalarFieldSpec,
    VectorFieldSpec,
    directional_derivative,
    eval_field,
    eval_scalar,
    grad,
    parse_expr,
    to_source,
)
from .flows import FlowConfig, flow, flow_time_derivative
from .foliation import (
    LeafMapSpec,
    ProductFoliationSpec,
    decompose_product,
    decompose_translation,
    product_shift_spec,
    translation_shift_spec,
)
from .linalg_core import (
    char_poly,
    d_symbol,
    det,
    gram_det,
    matrix_exp,
    verify_product_char_identity,
)
from .shift_engine import (
    ClassificationReport,
    ShiftSpec,
    apply_shift,
    build_commutator,
    classify_point,
    fd_jacobian,
    lambda_functional,
    permuted,
    reduce_to_fixed_point,
)

SCENARIO_DIR = Path(__file__).parent / "scenarios"

__version__ = "0.1.0"
