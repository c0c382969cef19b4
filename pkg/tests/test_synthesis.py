import math
from dataclasses import replace

import numpy as np
import pytest

from imtk.errors import HamiltonianEigsOnAxis, InertiaMismatch, OnDichotomyLine
from imtk.synthesis import (
    clip_constant,
    cone_field_from_P,
    gronwall_lipschitz,
    kappa_threshold,
    lmi_block,
    load_cone_field,
    save_cone_field,
    synthesize_P,
)


def test_riccati_closed_form(lin2):
    cf = synthesize_P(lin2, 1.0, delta=1.0)
    assert np.allclose(cf.P, np.diag([-(2.0 + math.sqrt(3.0)), 2.0 - math.sqrt(3.0)]), atol=1e-8)
    assert cf.j == 1
    assert cf.riccati_residual < 1e-8


def test_riccati_closed_form_without_slack(lin2):
    cf = synthesize_P(lin2, 1.0, lipschitz=1.0, delta=0.0)
    assert np.allclose(cf.P, np.diag([-(2.0 + math.sqrt(3.0)), 2.0 - math.sqrt(3.0)]), atol=1e-8)
    assert cf.j == 1


def test_scalar_riccati_takes_stabilizing_root(scalar):
    # -2P + P^2 + 0.25 = 0
    cf = synthesize_P(scalar, 1.0, lipschitz=0.5, delta=0.0)
    assert cf.P[0, 0] == pytest.approx(1.0 - math.sqrt(3.0) / 2.0, abs=1e-10)
    assert cf.j == 0


def test_lipschitz_above_frequency_bound(scalar):
    # sup |W| = 1 on Re p = -1
    with pytest.raises(HamiltonianEigsOnAxis):
        synthesize_P(scalar, 1.0, lipschitz=2.0)


def test_default_delta_uses_half_the_margin(lin2_cone):
    # sup |(A_nu - i w)^-1| = 1/2 on the line, so the admissible scale is 4
    assert lin2_cone.delta == pytest.approx(2.0, rel=1e-6)


def test_inertia_matches_unstable_count(ode3_cone):
    eigs = np.linalg.eigvalsh(ode3_cone.P)
    assert int(np.sum(eigs < 0)) == 2
    assert ode3_cone.j == 2
    assert ode3_cone.basis_plus.shape == (3, 1)


def test_lmi_block_is_negative_semidefinite(ode3, ode3_cone):
    A_nu = ode3.A + ode3_cone.nu0 * np.eye(3)
    block = lmi_block(A_nu, ode3.B, ode3.C, ode3_cone.P, ode3.lipschitz, ode3_cone.delta)
    assert np.linalg.eigvalsh(0.5 * (block + block.T)).max() <= 1e-8 * np.linalg.norm(block, 2)


def test_cone_value_splits_along_projector(ode3_cone):
    rng = np.random.default_rng(3)
    v = rng.normal(size=(20, 3))
    total = ode3_cone.value(v)
    parts = ode3_cone.value(ode3_cone.minus(v)) + ode3_cone.value(ode3_cone.plus(v))
    assert np.allclose(total, parts)
    assert np.allclose(ode3_cone.projector @ ode3_cone.projector, ode3_cone.projector)


def test_kappa_value_interpolates(lin2_cone):
    v = np.array([1.0, 1.0])
    assert lin2_cone.kappa_value(1.0, v) == pytest.approx(lin2_cone.value(v))
    assert lin2_cone.kappa_value(0.0, v) == pytest.approx(lin2_cone.value(lin2_cone.plus(v)))


def test_eigenvalue_on_the_line_rejected(lin2):
    with pytest.raises(OnDichotomyLine):
        synthesize_P(lin2, 3.0)


def test_delta_fraction_range(lin2):
    with pytest.raises(ValueError):
        synthesize_P(lin2, 1.0, delta_fraction=1.5)


def test_singular_P_rejected():
    with pytest.raises(InertiaMismatch):
        cone_field_from_P(np.diag([-1.0, 0.0]), 1.0, 1.0)


def test_cone_file_round_trip(tmp_path, ode3_cone):
    path = tmp_path / "cone.json"
    save_cone_field(ode3_cone, path)
    again = load_cone_field(path)
    assert np.allclose(again.P, ode3_cone.P)
    assert np.allclose(again.projector, ode3_cone.projector)
    assert again.kappa0 == ode3_cone.kappa0


def test_clip_constant(lin2, lin2_cone):
    L = gronwall_lipschitz(lin2)
    expected = math.sqrt(lin2_cone.m_p / lin2_cone.delta) * L
    assert clip_constant(lin2_cone, L) == pytest.approx(expected)
    assert clip_constant(lin2_cone, L, alpha_range=(0.0, 1.0)) == pytest.approx(expected * math.e)


def test_kappa_battery(lin2, lin2_cone):
    result = kappa_threshold(lin2, lin2_cone, gronwall_lipschitz(lin2), pairs=8, horizon=1.0)
    assert result["status"] == "success"
    assert 0.0 < result["kappa0"] < 1.0
    assert 0.0 <= result["analytic_reciprocal"] < 1.0


def test_kappa_battery_needs_expanding_constant(lin2, lin2_cone):
    with pytest.raises(ValueError):
        kappa_threshold(lin2, lin2_cone, 0.5)


def test_kappa_battery_without_passing_value(lin2, lin2_cone):
    inflated = replace(lin2_cone, delta=1000.0 * lin2_cone.delta)
    result = kappa_threshold(lin2, inflated, gronwall_lipschitz(lin2), pairs=8, horizon=1.0)
    assert result["status"] == "fail"
    assert result["kappa0"] is None
