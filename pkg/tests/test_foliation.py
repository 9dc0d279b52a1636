import math

import numpy as np
import pytest

from orbit_shift.errors import DimensionError, DomainError, LeafPreservationError
from orbit_shift.field_dsl import VectorFieldSpec
from orbit_shift.foliation import (
    LeafMapSpec,
    ProductFoliationSpec,
    RetrievedShiftFunction,
    decompose_product,
    decompose_translation,
    jacobian_det,
    product_shift_spec,
    retrieve_time,
    sample_grid,
    translation_shift_spec,
)
from orbit_shift.shift_engine import apply_shift, lambda_functional

ROT = [[0.0, -1.0], [1.0, 0.0]]


def test_sample_grid_shapes():
    assert sample_grid(2).shape == (121, 2)
    assert sample_grid(3, per_axis=3).shape == (27, 3)
    pts = sample_grid(5)
    assert pts.shape == (1331, 5)
    np.testing.assert_array_equal(pts, sample_grid(5))


# -- standard foliation ----------------------------------------------------------------------


def test_translation_decomposition_round_trip():
    f = LeafMapSpec.parse(["x1 + x3^2", "x2 + 0.5*sin(x1)", "x3"])
    alphas = decompose_translation(f, 2)
    assert [str(a) for a in alphas] == ["x1 + x3^2 - x1", "x2 + 0.5 * sin(x1) - x2"]
    spec = translation_shift_spec(alphas, 3)
    rng = np.random.default_rng(0)
    for x in rng.uniform(-2, 2, (50, 3)):
        assert np.max(np.abs(apply_shift(spec, x) - f(x))) <= 1e-12


def test_full_dimensional_leaf_functional_is_jacobian():
    f = LeafMapSpec.parse(["x1 + 0.3*sin(x2)", "x2 + 0.2*x1^2"])
    spec = translation_shift_spec(decompose_translation(f, 2), 2)
    rng = np.random.default_rng(1)
    for x in rng.uniform(-1, 1, (20, 2)):
        lam = lambda_functional(spec, x).value
        assert lam == pytest.approx(jacobian_det(f, x), abs=1e-9)


def test_translation_decomposition_detects_leaf_violation():
    f = LeafMapSpec.parse(["x1 + x2", "x2 + 0.01*x1"])
    with pytest.raises(LeafPreservationError) as info:
        decompose_translation(f, 1)
    assert info.value.witness is not None
    assert len(info.value.witness) == 2


def test_translation_leaf_dim_range():
    f = LeafMapSpec.parse(["x1", "x2"])
    with pytest.raises(DimensionError):
        decompose_translation(f, 3)


def test_leaf_map_jacobian_rows_are_gradients():
    f = LeafMapSpec.parse(["x1*x2", "x2^3"])
    np.testing.assert_array_equal(f.jacobian([2.0, 3.0]), [[3.0, 2.0], [0.0, 27.0]])


# -- time retrieval ------------------------------------------------------------------------------


def test_retrieve_time_rotation():
    z = np.array([1.0, 0.5])
    c, s = math.cos(0.7), math.sin(0.7)
    y = np.array([[c, -s], [s, c]]) @ z
    assert retrieve_time(ROT, z, y) == pytest.approx(0.7, abs=1e-12)


def test_retrieve_time_scaling():
    assert retrieve_time([[1.0]], [3.0], [6.0]) == pytest.approx(math.log(2), abs=1e-14)
    assert retrieve_time([[1.0]], [-3.0], [-0.75]) == pytest.approx(math.log(0.25), abs=1e-14)


def test_retrieve_time_off_orbit():
    with pytest.raises(LeafPreservationError):
        retrieve_time(ROT, [1.0, 0.0], [2.0, 0.0])


def test_retrieve_time_at_zero_of_field():
    assert retrieve_time(ROT, [0.0, 0.0], [0.0, 0.0]) == 0.0
    with pytest.raises(LeafPreservationError):
        retrieve_time(ROT, [0.0, 0.0], [0.1, 0.0], point=[0.0, 0.0])


# -- product foliations -----------------------------------------------------------------------------


def test_doubling_map_recovers_log_two():
    f = LeafMapSpec.parse(["2*x1"])
    fol = ProductFoliationSpec((1,), (VectorFieldSpec.linear([[1.0]]),))
    (a,) = decompose_product(f, fol)
    assert isinstance(a, RetrievedShiftFunction) and not a.periodic
    for x in (0.3, -0.7, 1.0):
        assert a.value([x]) == pytest.approx(math.log(2), abs=1e-8)


def test_rotation_block_recovers_angle():
    c, s = math.cos(0.7), math.sin(0.7)
    f = LeafMapSpec.parse([f"{c!r}*x1 - {s!r}*x2", f"{s!r}*x1 + {c!r}*x2", "2*x3"])
    fol = ProductFoliationSpec((2, 1), (VectorFieldSpec.linear(ROT), VectorFieldSpec.linear([[1.0]])))
    a_rot, a_scale = decompose_product(f, fol)
    assert a_rot.periodic and not a_scale.periodic
    for x in ([1.0, 0.0, 1.0], [0.5, -0.25, 2.0], [-1.0, 1.0, -0.5]):
        assert a_rot.value(x) == pytest.approx(0.7, abs=1e-8)
        assert a_scale.value(x) == pytest.approx(math.log(2), abs=1e-8)


def test_mixed_blocks_with_point_dependent_time():
    f = LeafMapSpec.parse(["x1 + x2^2", "exp(0.3*x1)*x2", "x3"])
    fol = ProductFoliationSpec(
        (1, 1, 1),
        (VectorFieldSpec.coordinate(1, 1), VectorFieldSpec.linear([[1.0]]), VectorFieldSpec.zero(1)),
    )
    funcs = decompose_product(f, fol)
    assert str(funcs[0]) == "x1 + x2^2 - x1"
    assert str(funcs[2]) == "0.0"
    rng = np.random.default_rng(2)
    spec = product_shift_spec(fol, funcs)
    for x in rng.uniform(0.1, 1, (10, 3)):
        assert funcs[1].value(x) == pytest.approx(0.3 * x[0], abs=1e-10)
        np.testing.assert_allclose(funcs[1].gradient(x), [0.3, 0.0, 0.0], atol=1e-6)
        np.testing.assert_allclose(apply_shift(spec, x), f(x), atol=1e-10)


def test_zero_block_must_be_fixed():
    f = LeafMapSpec.parse(["x1", "x2 + 1"])
    fol = ProductFoliationSpec((1, 1), (VectorFieldSpec.coordinate(1, 1), VectorFieldSpec.zero(1)))
    with pytest.raises(LeafPreservationError):
        decompose_product(f, fol)


def test_map_leaving_rotation_orbits():
    f = LeafMapSpec.parse(["1.1*x1", "1.1*x2"])
    fol = ProductFoliationSpec((2,), (VectorFieldSpec.linear(ROT),))
    with pytest.raises(LeafPreservationError):
        decompose_product(f, fol)


def test_foliation_validation():
    with pytest.raises(DomainError):
        ProductFoliationSpec((2,), (VectorFieldSpec.expression(["-x2", "x1"]),))
    with pytest.raises(DomainError):
        ProductFoliationSpec((2,), (VectorFieldSpec.translation([1.0, 1.0]),))
    with pytest.raises(DimensionError):
        ProductFoliationSpec((2,), (VectorFieldSpec.linear([[1.0]]),))
    with pytest.raises(DimensionError):
        ProductFoliationSpec((1, 1), (VectorFieldSpec.zero(1),))


def test_empty_block_is_allowed():
    fol = ProductFoliationSpec((0, 2), (None, VectorFieldSpec.linear(ROT)))
    assert fol.dim == 2
    assert [F.kind for F in fol.embedded_fields()] == ["zero", "linear"]


def test_foliation_dimension_must_match_map():
    f = LeafMapSpec.parse(["x1", "x2"])
    fol = ProductFoliationSpec((1,), (VectorFieldSpec.linear([[1.0]]),))
    with pytest.raises(DimensionError):
        decompose_product(f, fol)
