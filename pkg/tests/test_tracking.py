import math

import numpy as np
import pytest

from imtk.errors import LeftGrid
from imtk.tracking import (
    InertialForm,
    central_project,
    default_schedule,
    extract_inertial_form,
    fit_decay,
    integrate_reduced,
    sample_vertical_leaf,
    verify_tracking,
)


def test_central_projection_drops_the_stable_part(lin2, lin2_cone, lin2_manifold):
    result = central_project(lin2, lin2_cone, lin2_manifold, [0.1, 0.5])
    assert result.converged
    assert result.v0_star == pytest.approx([0.1, 0.0], abs=1e-6)


def test_tracking_rate(lin2, lin2_cone, lin2_manifold):
    result = central_project(lin2, lin2_cone, lin2_manifold, [0.1, 0.5])
    report = verify_tracking(lin2, lin2_cone, result, M=lin2_manifold)
    assert report["status"] == "pass"
    assert report["slope"] == pytest.approx(-3.0, abs=0.05)
    assert result.decay_exponent == report["slope"]


def test_forward_orbit_leaving_box(lin2, lin2_cone, lin2_manifold):
    with pytest.raises(LeftGrid):
        central_project(lin2, lin2_cone, lin2_manifold, [1.5, 0.0])


def test_default_schedule():
    schedule = default_schedule(2.0)
    assert schedule[0] == 1.0
    assert schedule[-1] == 20.0
    assert len(schedule) == 20


def test_fit_decay_slope():
    times = np.linspace(0.0, 10.0, 101)
    assert fit_decay(times, np.exp(-2.0 * times)) == pytest.approx(-2.0)
    assert fit_decay(times, np.zeros_like(times)) is None


def test_explicit_form_integrates_exponential():
    form = InertialForm.from_function(lambda z: -z, [-2.0], [2.0], nodes=41)
    trajectory = integrate_reduced(form, [1.0], 1.0)
    assert trajectory.final[0] == pytest.approx(math.exp(-1.0), rel=1e-6)
    back = integrate_reduced(form, trajectory.final, -1.0)
    assert back.final[0] == pytest.approx(1.0, rel=1e-6)


def test_explicit_form_leaves_box():
    form = InertialForm.from_function(lambda z: z, [-1.0], [1.0], nodes=21)
    with pytest.raises(LeftGrid):
        integrate_reduced(form, [0.9], 1.0)


def test_extracted_form_is_the_unstable_rate(lin2, lin2_cone, lin2_manifold):
    form = extract_inertial_form(lin2, lin2_cone, lin2_manifold)
    assert form.j == 1
    assert form(np.array([0.5])) == pytest.approx([0.5], abs=1e-6)


def test_vertical_leaf_is_the_stable_fibre(lin2, lin2_cone, lin2_manifold):
    leaf = sample_vertical_leaf(lin2, lin2_cone, lin2_manifold, [0.1, 0.0], [[-0.5], [0.5]])
    assert leaf.points[:, 0] == pytest.approx([0.1, 0.1], abs=1e-5)
    assert leaf.points[:, 1] == pytest.approx([-0.5, 0.5], abs=1e-5)
    assert leaf.positive.all()
    assert leaf.to_rows().shape == (2, 4)
