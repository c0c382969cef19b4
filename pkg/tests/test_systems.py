import json
import math

import numpy as np
import pytest

from imtk.errors import LipschitzViolation, NonFinite, ParseError, SchemaError, UnsupportedNeutralTerm
from imtk.flow import drive, flow_batch, integrate, integrate_variational
from imtk.schema import parse_system_config
from imtk.systems import (
    DelaySpec,
    ForcingSpec,
    GalerkinSpec,
    NonlinSpec,
    build_system,
    discretize_delay,
    galerkin_system,
    load_system,
    save_system,
    verify_lipschitz,
)


def _ode(**overrides):
    doc = {
        "name": "tmp",
        "family": "ode",
        "A": [[-1.0]],
        "B": [[1.0]],
        "C": [[1.0]],
        "nonlinearity": {"kind": "sigmoid", "params": {"amplitude": 1.0, "slope": 1.0}, "lambda": 1.0},
    }
    doc.update(overrides)
    return doc


def test_fixture_shapes(lin2, ode3):
    assert (lin2.n, lin2.m, lin2.r) == (2, 2, 2)
    assert (ode3.n, ode3.m, ode3.r) == (3, 1, 1)
    assert lin2.autonomous
    assert ode3.config.certificate.nu0 == 1.5


def test_missing_matrix_reports_field():
    doc = _ode()
    del doc["A"]
    with pytest.raises(SchemaError):
        parse_system_config(doc)


def test_unknown_key_rejected():
    with pytest.raises(SchemaError) as exc:
        parse_system_config(_ode(colour="red"))
    assert "colour" in exc.value.field


def test_non_finite_entry_rejected():
    with pytest.raises(SchemaError) as exc:
        parse_system_config(_ode(A=[[float("nan")]]))
    assert exc.value.field.startswith("A")


def test_quasiperiodic_needs_nonzero_frequency():
    with pytest.raises(SchemaError):
        parse_system_config(_ode(forcing={"mode": "quasiperiodic", "frequencies": [0.0, 0.0]}))


def test_shape_mismatch_rejected():
    with pytest.raises(SchemaError) as exc:
        build_system(parse_system_config(_ode(B=[[1.0], [1.0]])))
    assert exc.value.field == "B"


def test_understated_lipschitz_constant_is_caught():
    nonlin = NonlinSpec(kind="sigmoid", amplitude=1.0, slope=2.0)
    with pytest.raises(LipschitzViolation) as exc:
        verify_lipschitz(nonlin, 1.0, r=1)
    assert 1.0 < exc.value.ratio <= 2.0 + 1e-9


def test_declared_lipschitz_constant_accepted():
    verify_lipschitz(NonlinSpec(kind="sigmoid", amplitude=1.0, slope=2.0), 2.0, r=1)


def test_clamped_polynomial_bound():
    nonlin = NonlinSpec(kind="polynomial-with-clamp", coefficients=(0.0, 1.0, 0.0, -1.0), clamp=1.0)
    assert nonlin.phi_bound() == pytest.approx(2.0)
    assert nonlin.with_scale(0.5).lipschitz() == pytest.approx(1.0)


def test_load_unreadable_file(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text("{not json", encoding="utf-8")
    with pytest.raises(ParseError):
        load_system(path)


def test_save_and_reload_keeps_matrices(tmp_path, ode3):
    path = tmp_path / "ode3.json"
    save_system(ode3, path)
    again = load_system(path)
    assert np.array_equal(again.A, ode3.A)
    assert json.loads(path.read_text())["nonlinearity"]["lambda"] == 1.0


def test_delay_chain_dimensions():
    spec = DelaySpec(tau=0.5, a0=np.array([[-1.0]]), b=np.array([[1.0]]), output_taps=((0.5, np.array([[1.0]])),), n_chain=8)
    system = discretize_delay(spec, NonlinSpec(kind="sigmoid"))
    assert system.n == 9
    assert system.C[0, -1] == 1.0
    assert np.allclose(system.A[1:, 1:].diagonal(), -16.0)


def test_delay_tap_outside_window_rejected():
    with pytest.raises(SchemaError):
        DelaySpec(tau=0.5, a0=np.eye(1), b=np.eye(1), output_taps=((0.7, np.eye(1)),))


def test_neutral_term_not_simulated():
    spec = DelaySpec(tau=0.5, d0_norm=0.2, a0=np.eye(1), b=np.eye(1))
    with pytest.raises(UnsupportedNeutralTerm):
        discretize_delay(spec, NonlinSpec(kind="sigmoid"))


def test_galerkin_operator_matches_exponents():
    spec = GalerkinSpec.squares(4, alpha=0.5, beta=0.0)
    system = galerkin_system(spec, NonlinSpec(kind="sigmoid"))
    lam = np.array([1.0, 4.0, 9.0, 16.0])
    assert np.allclose(np.diag(system.A), -lam)
    assert np.allclose(np.diag(system.C @ system.B), np.sqrt(lam))


def test_linear_flow_matches_exponential(lin2):
    v = integrate(lin2, None, [1.0, 1.0], 1.0).final
    assert v == pytest.approx([math.e, math.exp(-3.0)], rel=1e-8)


def test_flow_batch_records_grid(lin2):
    times, states = flow_batch(lin2, None, np.eye(2), 0.5, h=0.1, record=True)
    assert len(times) == 6
    assert states.shape == (6, 2, 2)


def test_variational_flow_covers_time_grid(ode3):
    var = integrate_variational(ode3, None, np.zeros(3), 0.5)
    xi = var.propagate(np.array([0.0, 0.0, 1.0]))
    assert np.all(np.isfinite(xi))
    assert xi.shape == (len(var.base.times), 3)


def test_periodic_drive_wraps():
    forcing = ForcingSpec(mode="periodic", period=2.0)
    assert drive(forcing, [1.5], 1.0)[0] == pytest.approx(0.5)


def test_default_step_scales_with_system_norm(scalar):
    assert scalar.default_step() == pytest.approx(1e-3 / 4.0)
    stiff = build_system(parse_system_config(_ode(A=[[-1e4]])))
    assert stiff.default_step() == pytest.approx(1e-5)


def test_blow_up_is_reported():
    system = build_system(parse_system_config(_ode(A=[[100.0]], nonlinearity={"kind": "zero", "lambda": 0.0})))
    with pytest.raises(NonFinite):
        flow_batch(system, None, [[1.0]], 10.0, h=0.01)
