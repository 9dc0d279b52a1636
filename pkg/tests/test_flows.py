import math

import numpy as np
import pytest

from orbit_shift.errors import DimensionError, DomainError, TimeBoundError, TrajectoryEscapeError
from orbit_shift.field_dsl import VectorFieldSpec
from orbit_shift.flows import FlowConfig, flow, flow_time_derivative, rk4

ROT_EXPR = VectorFieldSpec.expression(["-x2", "x1"])
ROT_LIN = VectorFieldSpec.linear([[0.0, -1.0], [1.0, 0.0]])
NONLINEAR = VectorFieldSpec.expression(["sin(x2)", "-0.5*x1 + 0.1*x2^2"])
RK4 = FlowConfig(method="rk4")


def test_zero_time_returns_input():
    x = np.array([0.3, -1.7])
    for F in (ROT_EXPR, ROT_LIN, NONLINEAR, VectorFieldSpec.translation([1, 2])):
        out = flow(F, x, 0.0)
        np.testing.assert_array_equal(out, x)
        assert out is not x


def test_translation_flow():
    np.testing.assert_array_equal(flow(VectorFieldSpec.translation([1, 0]), [1.0, 2.0], 3.0), [4.0, 2.0])


def test_zero_field_flow():
    np.testing.assert_array_equal(flow(VectorFieldSpec.zero(3), [1.0, 2.0, 3.0], 5.0), [1.0, 2.0, 3.0])


def test_rotation_half_turn_rk4():
    np.testing.assert_allclose(flow(ROT_EXPR, [1.0, 0.0], math.pi), [-1.0, 0.0], atol=1e-6)


def test_rotation_half_turn_exact():
    np.testing.assert_allclose(flow(ROT_LIN, [1.0, 0.0], math.pi), [-1.0, 0.0], atol=1e-12)


def test_exact_and_rk4_agree_for_linear_fields():
    A = np.array([[0.2, -1.0], [0.7, -0.3]])
    F = VectorFieldSpec.linear(A)
    x = [0.4, 1.1]
    np.testing.assert_allclose(flow(F, x, 2.3), flow(F, x, 2.3, RK4), atol=1e-10)


def test_negative_time_inverts():
    x = np.array([0.5, -0.2])
    y = flow(NONLINEAR, x, 1.3)
    np.testing.assert_allclose(flow(NONLINEAR, y, -1.3), x, atol=1e-10)


@pytest.mark.parametrize("F,cfg,tol", [
    (NONLINEAR, FlowConfig(), 1e-6),
    (ROT_EXPR, FlowConfig(), 1e-6),
    (ROT_LIN, FlowConfig(), 1e-10),
    (VectorFieldSpec.translation([0.3, -2.0]), FlowConfig(), 1e-10),
])
def test_group_law(F, cfg, tol):
    rng = np.random.default_rng(8)
    for _ in range(20):
        x = rng.uniform(-1, 1, 2)
        s, t = rng.uniform(-1, 1, 2)
        lhs = flow(F, flow(F, x, t, cfg), s, cfg)
        rhs = flow(F, x, s + t, cfg)
        assert np.linalg.norm(lhs - rhs) <= tol * (1 + np.linalg.norm(x))


def test_rk4_is_fourth_order():
    x = [1.0, 0.0]
    exact = np.array([math.cos(1.0), math.sin(1.0)])
    coarse = np.linalg.norm(flow(ROT_EXPR, x, 1.0, FlowConfig(rk4_step=0.1)) - exact)
    fine = np.linalg.norm(flow(ROT_EXPR, x, 1.0, FlowConfig(rk4_step=0.05)) - exact)
    assert coarse / fine >= 8


def test_rk4_lands_on_final_time():
    # dy/dt = 1 integrates exactly, so any leftover step would show
    y = rk4(lambda y: (1.0,), [0.0], 0.3405, 0.1, 1e6)
    assert y[0] == pytest.approx(0.3405, abs=1e-15)


def test_time_bound():
    with pytest.raises(TimeBoundError):
        flow(ROT_EXPR, [1.0, 0.0], 11.0)
    with pytest.raises(TimeBoundError):
        flow(ROT_LIN, [1.0, 0.0], -10.5)


def test_blowup_escapes_radius():
    F = VectorFieldSpec.expression(["x1^2"])
    with pytest.raises(TrajectoryEscapeError):
        flow(F, [1.0], 1.5)


def test_exact_flow_escapes_radius():
    with pytest.raises(TrajectoryEscapeError):
        flow(VectorFieldSpec.translation([1.0]), [0.0], 5.0, FlowConfig(domain_radius=2.0))


def test_start_outside_radius():
    with pytest.raises(TrajectoryEscapeError):
        flow(ROT_LIN, [3.0, 0.0], 0.1, FlowConfig(domain_radius=2.0))


def test_dimension_check():
    with pytest.raises(DimensionError):
        flow(ROT_EXPR, [1.0, 0.0, 0.0], 1.0)


@pytest.mark.parametrize("kwargs", [{"method": "euler"}, {"rk4_step": 0.0}, {"max_time": -1.0},
                                    {"domain_radius": float("inf")}])
def test_config_validation(kwargs):
    with pytest.raises(DomainError):
        FlowConfig(**kwargs)


def test_flow_time_derivative_matches_difference_quotient():
    x = np.array([0.4, -0.6])
    t, h = 0.8, 1e-4
    fd = (flow(NONLINEAR, x, t + h) - flow(NONLINEAR, x, t - h)) / (2 * h)
    np.testing.assert_allclose(flow_time_derivative(NONLINEAR, x, t), fd, atol=1e-7)
