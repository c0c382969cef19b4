import math

import numpy as np
import pytest

from imtk.conditions import (
    check_frequency,
    count_unstable,
    delay_transfer_function,
    rational_transfer_function,
    scp_sampled_check,
    small_delay_check,
    small_delay_threshold,
    spectral_gap,
)
from imtk.errors import DegenerateGap, DimensionError, KappaExceedsOne, OnDichotomyLine, TailUnbounded
from imtk.schema import parse_system_config
from imtk.synthesis import synthesize_P
from imtk.systems import DelaySpec, GalerkinSpec, build_system, delay_from_config, load_fixture


def test_spectral_gap_squares():
    report = spectral_gap(GalerkinSpec.squares(8), 3, 3.0)
    assert report.passed
    assert report.margin == pytest.approx(0.5)
    assert report.nu0 == pytest.approx(12.5)
    assert report.diagnostics["lhs"] == pytest.approx(3.5)


def test_spectral_gap_with_weighted_nonlinearity():
    report = spectral_gap(GalerkinSpec.squares(8, alpha=0.5), 3, 1.0)
    assert report.diagnostics["lhs"] == pytest.approx(1.0)
    assert report.nu0 == pytest.approx(12.0)
    assert not report.passed


def test_spectral_gap_degenerate():
    with pytest.raises(DegenerateGap):
        spectral_gap(GalerkinSpec(eigenvalues=(1.0, 4.0, 4.0, 9.0)), 2, 1.0)


@pytest.mark.parametrize("j", [0, 8])
def test_spectral_gap_index_out_of_range(j):
    with pytest.raises(DimensionError):
        spectral_gap(GalerkinSpec.squares(8), j, 1.0)


@pytest.mark.parametrize("nu0, expected", [(0.0, 0.5), (1.0, 1.0)])
def test_scalar_sweep_hits_closed_form(scalar, nu0, expected):
    report = check_frequency(scalar, nu0, lipschitz=1.0)
    assert report.diagnostics["sup"] == pytest.approx(expected, abs=1e-6)
    assert report.j == 0


def test_scalar_sweep_verdicts(scalar):
    assert check_frequency(scalar, 0.0, lipschitz=1.0).passed
    assert not check_frequency(scalar, 1.0, lipschitz=1.0).passed


def test_eigenvalue_on_the_line(scalar):
    with pytest.raises(OnDichotomyLine):
        count_unstable(scalar.A, 2.0)


def test_count_unstable_lin2(lin2):
    count = count_unstable(lin2.A, 1.0)
    assert count.j == 1
    assert count.gap == pytest.approx(1.0)


def test_small_delay_threshold():
    assert small_delay_threshold(1, 1.0) == pytest.approx(1.0 / math.e, abs=1e-12)


def test_small_delay_with_neutral_term():
    report = small_delay_check(DelaySpec(tau=0.1, d0_norm=0.2), 1, 1.0, 5.0)
    assert report.diagnostics["kappa"] == pytest.approx(0.2 * math.exp(0.5), rel=1e-9)
    assert report.diagnostics["lhs"] == pytest.approx(0.4919, abs=1e-4)
    assert report.passed


def test_small_delay_kappa_above_one():
    with pytest.raises(KappaExceedsOne):
        small_delay_check(DelaySpec(tau=1.0, d0_norm=0.7), 1, 1.0, 1.0)


def test_small_delay_needs_positive_exponent():
    with pytest.raises(ValueError):
        small_delay_check(DelaySpec(tau=1.0), 1, 1.0, 0.0)


def test_delay_chain_tracks_exact_transfer_function():
    system = load_fixture("SYS-DELAY1")
    exact = delay_transfer_function(delay_from_config(system.config.delay))
    chain = rational_transfer_function(system.A, system.B, system.C)
    for omega in (0.0, 0.5, 1.0):
        assert chain.norm_on_line(0.3, omega) == pytest.approx(exact.norm_on_line(0.3, omega), rel=1e-2)


def test_neutral_gain_above_one_has_no_tail():
    spec = DelaySpec(tau=0.5, a0=np.array([[-1.0]]), b=np.array([[1.0]]))
    tf = delay_transfer_function(spec, neutral_taps=((0.1, np.array([[1.5]])),))
    with pytest.raises(TailUnbounded):
        tf.tail(100.0, 0.0)


def test_scp_sampled_on_linear_system(lin2, lin2_cone):
    report = scp_sampled_check(lin2, lin2_cone, samples=5, horizon=2.0)
    assert report.passed
    assert report.margin > 0


def test_scp_sampled_fails_past_the_certificate(scalar):
    cf = synthesize_P(scalar, 0.5)
    doc = {
        "name": "scalar-doubled",
        "family": "ode",
        "A": [[-2.0]],
        "B": [[1.0]],
        "C": [[1.0]],
        "nonlinearity": {"kind": "sigmoid", "params": {"amplitude": 2.0, "slope": 1.0}, "lambda": 2.0},
    }
    report = scp_sampled_check(build_system(parse_system_config(doc)), cf, samples=10, horizon=5.0)
    assert not report.passed
    assert report.margin < 0


def test_scp_sampled_zero_variation_holds_trivially(lin2, lin2_cone):
    report = scp_sampled_check(lin2, lin2_cone, samples=3, horizon=1.0, initial=np.zeros(2))
    assert report.passed
    assert report.margin == math.inf
    assert report.diagnostics["degenerate"]
