from dataclasses import replace

import numpy as np
import pytest

from imtk.errors import AdmissibilityLost, DimensionError, NotAdmissibleProjector, SubspaceStalled
from imtk.manifold import (
    GridSpec,
    build_manifold,
    build_nested,
    build_tangents,
    check_admissible,
    check_projector,
    find_anchor,
    graph_transform_step,
    invariance_residual,
    rechart,
)
from imtk.synthesis import cone_field_from_P, synthesize_P
from imtk.systems import load_fixture


def test_linear_manifold_is_the_unstable_axis(lin2_manifold):
    assert lin2_manifold.converged
    assert lin2_manifold.j == 1
    assert np.max(np.abs(lin2_manifold.values[:, 1])) <= 1e-6
    assert np.allclose(lin2_manifold.values[:, 0], lin2_manifold.nodes[:, 0], atol=1e-6)


def test_linear_manifold_is_invariant(lin2, lin2_cone, lin2_manifold):
    result = invariance_residual(lin2, lin2_cone, lin2_manifold, t=0.5)
    assert result["status"] == "pass"
    assert result["checked"] > 0


def test_chart_inverts_graph(lin2_manifold):
    assert lin2_manifold.chart_error() <= 1e-9


def test_evaluate_interpolates_between_nodes(lin2_manifold):
    assert np.allclose(lin2_manifold.evaluate(np.array([[0.05]])), [[0.05, 0.0]], atol=1e-6)


def test_steep_graph_leaves_cone(lin2_cone, lin2_manifold):
    zeta = lin2_manifold.nodes[:, 0]
    steep = replace(lin2_manifold, values=np.column_stack([zeta, 10.0 * zeta]))
    check_admissible(lin2_cone, lin2_manifold)
    with pytest.raises(AdmissibilityLost):
        check_admissible(lin2_cone, steep)


def test_transform_time_below_lag(lin2, lin2_cone, lin2_manifold):
    lagged = replace(lin2_cone, tau_p=1.0)
    with pytest.raises(ValueError):
        graph_transform_step(lin2, lagged, lin2_manifold, t=0.5)


def test_graph_transform_keeps_linear_manifold(lin2, lin2_cone, lin2_manifold):
    out = graph_transform_step(lin2, lin2_cone, lin2_manifold, t=0.5)
    assert np.allclose(out.values, lin2_manifold.values, atol=1e-6)


def test_more_than_two_dimensions_rejected(lin2):
    cf = cone_field_from_P(np.diag([-1.0, -1.0, -1.0, 1.0]), 1.0, 1.0)
    with pytest.raises(DimensionError):
        build_manifold(lin2, cf)


def test_nonpositive_exponent_rejected(lin2):
    cf = cone_field_from_P(np.diag([-1.0, 1.0]), -1.0, 1.0)
    with pytest.raises(ValueError):
        build_manifold(lin2, cf)


def test_short_horizon_returns_unconverged_graph(lin2, lin2_cone):
    M = build_manifold(lin2, lin2_cone, grid=GridSpec(radius=2.0, nodes=5), T_max=0.5)
    assert not M.converged
    assert M.T_used == pytest.approx(0.5)
    assert M.values.shape == (5, 2)
    assert np.allclose(M.values[:, 1], 0.0, atol=1e-6)


def test_horizon_below_lag_rejected(lin2, lin2_cone):
    with pytest.raises(ValueError):
        build_manifold(lin2, replace(lin2_cone, tau_p=1.0), grid=GridSpec(radius=2.0, nodes=5), T_max=0.5)


def test_anchor_is_an_equilibrium(ode3):
    anchor = find_anchor(ode3)
    assert np.linalg.norm(ode3.rhs(None, anchor)) <= 1e-9


def test_tangents_match_finite_differences(lin2, lin2_cone, lin2_manifold):
    tangents = build_tangents(lin2, lin2_cone, lin2_manifold)
    assert tangents.validated
    assert tangents.inside_cone(lin2_cone)
    assert tangents.chart_invertible(lin2_manifold)
    assert np.allclose(np.abs(tangents.bases[:, 0, 0]), 1.0, atol=1e-6)


def test_tangents_stall_without_a_second_pullback(lin2, lin2_cone, lin2_manifold):
    with pytest.raises(SubspaceStalled):
        build_tangents(lin2, lin2_cone, lin2_manifold, T_max=3.0)


def test_oblique_projector_accepted(lin2_cone):
    U = check_projector(lin2_cone, [[1.0, 0.2], [0.0, 0.0]])
    assert U.shape == (2, 1)
    assert np.allclose(U[:, 0], [1.0, 0.0])


@pytest.mark.parametrize(
    "projector, violating",
    [
        ([[1.0, 1.0], [0.0, 1.0]], "idempotence"),
        ([[0.0, 0.0], [0.0, 1.0]], "range"),
        ([[1.0, 1.0], [0.0, 0.0]], "kernel"),
        (np.eye(2), "rank"),
    ],
)
def test_projector_violations(lin2_cone, projector, violating):
    with pytest.raises(NotAdmissibleProjector) as exc:
        check_projector(lin2_cone, projector)
    assert exc.value.violating == violating


def test_rechart_over_oblique_projector(lin2_cone, lin2_manifold):
    projector = np.array([[1.0, 0.2], [0.0, 0.0]])
    M = rechart(lin2_manifold, projector, lin2_cone)
    assert np.max(np.abs(M.values[:, 1])) <= 1e-6
    assert np.allclose(M.chart(M.values), M.nodes, atol=1e-8)


def test_nested_manifolds_are_contained():
    system = load_fixture("SYS-NESTED3")
    outer_cf = synthesize_P(system, 1.0)
    inner_cf = synthesize_P(system, -1.5)
    outer, inner, report = build_nested(
        system, outer_cf, inner_cf, grid_outer=GridSpec(radius=1.0, nodes=5), grid_inner=GridSpec(radius=1.0, nodes=9)
    )
    assert (outer.j, inner.j) == (2, 1)
    assert report["status"] == "pass"
    assert report["checked"] > 0


def test_nested_dimension_order(lin2, lin2_cone):
    with pytest.raises(DimensionError):
        build_nested(lin2, cone_field_from_P(np.diag([-1.0, 1.0]), 1.0, 1.0), cone_field_from_P(-np.eye(2), 1.0, 1.0))


@pytest.mark.slow
def test_sigmoid_manifold_converges(ode3, ode3_cone):
    M = build_manifold(ode3, ode3_cone, grid=GridSpec(radius=2.0, nodes=9))
    assert M.converged
    assert M.j == 2
    assert invariance_residual(ode3, ode3_cone, M)["status"] == "pass"
