import numpy as np
import pytest

from imtk.cones import (
    check_cone_invariance,
    check_squeezing,
    classify_pair,
    kappa_form,
    projector_injectivity,
    romanov_check,
    romanov_inequality,
    v_value,
    verify_h3_discrete,
)
from imtk.errors import DimensionError


@pytest.mark.parametrize(
    "v1, v2, label",
    [
        ([1.0, 0.0], [0.0, 0.0], "strict-negative"),
        ([0.0, 1.0], [0.0, 0.0], "positive"),
        ([2.0, 3.0], [2.0, 3.0], "zero"),
    ],
)
def test_classify_pair(lin2_cone, v1, v2, label):
    assert classify_pair(lin2_cone, v1, v2).classification == label


def test_wrong_dimension_rejected(lin2_cone):
    with pytest.raises(DimensionError):
        v_value(lin2_cone, [1.0, 2.0, 3.0])
    with pytest.raises(DimensionError):
        kappa_form(lin2_cone, 0.5, [1.0])


def test_romanov_battery(ode3_cone):
    result = romanov_check(ode3_cone, 0.5, triples=20_000)
    assert result["status"] == "pass"
    assert result["c_kappa"] == pytest.approx(4.0)


def test_romanov_single_triple(lin2_cone):
    # V(w1 - w3) >= 0, V^(1/2)(w2 - w3) <= 0 and Pi w1 = Pi w2
    lhs, rhs = romanov_inequality(lin2_cone, 0.5, [1.0, 3.0], [1.0, 0.5], [0.0, 0.0])
    assert lhs <= rhs


def test_cone_invariance_linear(lin2, lin2_cone):
    result = check_cone_invariance(lin2, lin2_cone, pairs=20, horizon=1.0)
    assert result["status"] == "pass"


def test_cone_invariance_sigmoid(ode3, ode3_cone):
    assert check_cone_invariance(ode3, ode3_cone, pairs=20, horizon=1.0)["status"] == "pass"


def test_squeezing_linear(lin2, lin2_cone):
    result = check_squeezing(lin2, lin2_cone, pairs=20, horizon=2.0)
    assert result["status"] == "pass"
    assert result["constant"] > 0


def test_h3_holds_on_linear_pairs(lin2, lin2_cone):
    result = verify_h3_discrete(lin2, lin2_cone, pairs=20)
    assert result["status"] == "pass"
    assert result["failure_count"] == 0


def test_h3_inflated_delta_fails(lin2, lin2_cone):
    result = verify_h3_discrete(lin2, lin2_cone, pairs=20, delta=10.0 * lin2_cone.delta)
    assert result["status"] == "fail"
    assert result["worst_excess"] > 0


@pytest.mark.slow
def test_h3_holds_on_sigmoid_pairs(ode3, ode3_cone):
    assert verify_h3_discrete(ode3, ode3_cone, pairs=100)["status"] == "pass"


def test_projector_injectivity(ode3_cone):
    rng = np.random.default_rng(5)
    D = rng.normal(size=(200, 3))
    result = projector_injectivity(ode3_cone, D)
    assert result["status"] == "pass"
    assert result["checked"] > 0
