import math

import numpy as np
import pytest

from imtk.dynamics import (
    check_ap_stability,
    check_convergence_periodic,
    classify_omega_limit,
    floquet_multipliers,
    poincare_map,
    robustness_experiment,
    stability_transfer_check,
)
from imtk.errors import CertificateLostAtEpsilon, DimensionError, UnsupportedDriving
from imtk.manifold import GridSpec, build_manifold
from imtk.schema import parse_system_config
from imtk.synthesis import synthesize_P
from imtk.systems import build_system, load_fixture
from imtk.tracking import InertialForm, extract_inertial_form


def _scalar(forcing: dict, amplitude: float = 1.0, lam: float = 1.0):
    doc = {
        "name": "scalar-driven",
        "family": "ode",
        "A": [[-2.0]],
        "B": [[1.0]],
        "C": [[1.0]],
        "nonlinearity": {"kind": "sigmoid", "params": {"amplitude": amplitude, "slope": 1.0}, "lambda": lam},
        "forcing": forcing,
    }
    return build_system(parse_system_config(doc))


def _hopf(z):
    x, y = z[:, 0], z[:, 1]
    r2 = x * x + y * y
    return np.column_stack([x - 2.0 * y - x * r2, 2.0 * x + y - y * r2])


def _spiral(z):
    return np.column_stack([-z[:, 0] - 2.0 * z[:, 1], 2.0 * z[:, 0] - z[:, 1]])


@pytest.fixture(scope="module")
def hopf_form():
    return InertialForm.from_function(_hopf, [-2.0, -2.0], [2.0, 2.0], nodes=201)


@pytest.mark.slow
def test_limit_cycle_found(hopf_form):
    orbit = classify_omega_limit(hopf_form, [0.5, 0.0])
    assert orbit.verdict == "periodic"
    assert orbit.period == pytest.approx(math.pi, rel=1e-2)
    assert np.linalg.norm(orbit.point) == pytest.approx(1.0, abs=1e-2)
    floquet = floquet_multipliers(hopf_form, orbit)
    assert floquet["moduli"][0] == pytest.approx(1.0, abs=1e-2)
    assert floquet["moduli"][1] < 0.05


def test_spiral_settles_at_origin():
    form = InertialForm.from_function(_spiral, [-1.0, -1.0], [1.0, 1.0], nodes=21)
    orbit = classify_omega_limit(form, [0.5, 0.5], T_transient=30.0, T_obs=10.0)
    assert orbit.verdict == "stationary"
    assert np.linalg.norm(orbit.point) < 1e-6
    with pytest.raises(ValueError):
        floquet_multipliers(form, orbit)


def test_stability_transfers_at_stable_equilibrium():
    system = _scalar({"mode": "none"}, amplitude=0.5, lam=0.5)
    cf = synthesize_P(system, 3.0)
    M = build_manifold(system, cf, grid=GridSpec(radius=3.0, nodes=41))
    orbit = classify_omega_limit(extract_inertial_form(system, cf, M), M.chart(M.anchor) + 0.5)
    assert orbit.verdict == "stationary"
    report = stability_transfer_check(system, cf, M, orbit)
    assert report["status"] == "pass"
    assert report["verdict"] == "stability transfers"


@pytest.fixture(scope="module")
def forced_scalar():
    system = _scalar({"mode": "periodic", "period": 1.0, "amplitude": [1.0]}, amplitude=0.5, lam=0.5)
    cf = synthesize_P(system, 3.0)
    M = build_manifold(system, cf, grid=GridSpec(radius=3.0, nodes=41))
    return system, cf, M


def test_periodic_forcing_gives_one_dimensional_manifold(forced_scalar):
    _, cf, M = forced_scalar
    assert cf.j == 1
    assert M.j == 1
    assert M.converged


def test_poincare_iterates_are_monotone(forced_scalar):
    system, cf, M = forced_scalar
    result = poincare_map(system, cf, M, [1.0], k=15)
    assert result["monotone"]
    assert result["last_step"] < 1e-6
    assert len(result["iterates"]) == 16


def test_forced_trajectory_becomes_periodic(forced_scalar):
    system, cf, M = forced_scalar
    result = check_convergence_periodic(system, cf, M, [1.0])
    assert result["status"] == "pass"
    assert result["sigma"] == 1.0


def test_convergence_needs_low_dimension(ode3, ode3_cone):
    with pytest.raises(DimensionError):
        check_convergence_periodic(ode3, ode3_cone, None, np.zeros(3), sigma=1.0)


def test_almost_periodic_contraction():
    system = _scalar({"mode": "quasiperiodic", "frequencies": [1.0, math.sqrt(2.0)], "amplitude": [1.0]})
    cf = synthesize_P(system, 0.5)
    assert cf.j == 0
    result = check_ap_stability(system, cf, q_samples=2, pairs=3)
    assert result["status"] == "pass"
    assert len(result["pairs"]) == 6


def test_almost_periodic_needs_quasiperiodic_driving(scalar):
    cf = synthesize_P(scalar, 0.5)
    with pytest.raises(UnsupportedDriving):
        check_ap_stability(scalar, cf)


@pytest.fixture(scope="module")
def lin2_eps():
    system = load_fixture("SYS-LIN2-EPS")
    cf = synthesize_P(system, 1.0)
    M0 = build_manifold(system.with_scale(0.0), cf, grid=GridSpec(radius=1.0, nodes=21), tol=1e-8)
    return system, cf, M0


@pytest.mark.slow
def test_manifold_distance_scales_with_epsilon(lin2_eps):
    system, cf, M0 = lin2_eps
    result = robustness_experiment(system, cf, M0, [1e-1, 1e-2, 1e-3], tol=1e-8, threads=2)
    assert result["status"] == "pass"
    assert result["distances"][0] > result["distances"][1] > result["distances"][2]


def test_certificate_lost_for_large_epsilon(lin2_eps):
    system, cf, M0 = lin2_eps
    with pytest.raises(CertificateLostAtEpsilon) as exc:
        robustness_experiment(system, cf, M0, [0.5])
    assert exc.value.epsilon == 0.5
