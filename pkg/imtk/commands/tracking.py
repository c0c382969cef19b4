import logging
from typing import Optional, Sequence

import numpy as np

from imtk.commands.common import combine, manifold_for, output_dir, resolve_cone, resolve_system, verdict
from imtk.errors import DimensionError
from imtk.flow import flow_batch
from imtk.reports import write_csv, write_json, write_trajectory
from imtk.tracking import (
    central_project,
    extract_inertial_form,
    integrate_reduced,
    sample_vertical_leaf,
    verify_tracking,
)

logger = logging.getLogger(__name__)

ROUNDTRIP_TOL = 1e-6


def _start(M, v0: Optional[Sequence[float]]) -> np.ndarray:
    if v0 is None:
        return M.anchor + 0.5 * np.ones(M.n)
    v0 = np.asarray(v0, dtype=float)
    if v0.shape != (M.n,):
        raise ValueError(f"--v0 needs {M.n} components, got {v0.size}")
    return v0


def track(
    system: str,
    out: Optional[str] = None,
    nu0: Optional[float] = None,
    cone: Optional[str] = None,
    v0: Optional[Sequence[float]] = None,
    radius: float = 5.0,
    nodes: Optional[int] = None,
    tol: float = 1e-6,
) -> dict:
    """
    Central projection of v0 onto the manifold and the exponential tracking check.
    The projection is repeated from v0_star (idempotence) and with an interleaved
    theta schedule; both must land within 2*tol of the first answer.
    """
    spec = resolve_system(system)
    cf = resolve_cone(spec, nu0, cone)
    folder = output_dir(out)
    M = manifold_for(spec, cf, radius, nodes, tol)
    v0 = _start(M, v0)
    result = central_project(spec, cf, M, v0, tol=tol)
    logger.info("central projection of %s converged=%s after %d thetas", v0.tolist(), result.converged, len(result.thetas))
    tracking = verify_tracking(spec, cf, result, M=M)
    again = central_project(spec, cf, M, result.v0_star, tol=tol)
    shifted = central_project(spec, cf, M, v0, thetas=[k / cf.nu0 for k in range(1, 40, 2)], tol=tol)
    idempotence = float(np.linalg.norm(again.v0_star - result.v0_star))
    schedule = float(np.linalg.norm(shifted.v0_star - result.v0_star))
    consistency = {
        "status": verdict(idempotence <= 2.0 * tol and schedule <= 2.0 * tol),
        "idempotence": idempotence,
        "schedule_independence": schedule,
        "bound": 2.0 * tol,
    }

    T = tracking.get("T", 4.0 / cf.nu0)
    times, states = flow_batch(spec, M.q, np.vstack([result.v0, result.v0_star]), T, record=True)
    distance = np.linalg.norm(states[:, 0] - states[:, 1], axis=1)
    write_csv(folder / "track-distance.csv", ["t", "distance"], np.column_stack([times, distance]).tolist())
    report = {
        "status": combine(tracking["status"], consistency["status"]),
        "command": "track",
        "system": spec.name,
        **result.to_dict(),
        "tracking": tracking,
        "consistency": consistency,
        "artifacts": ["track-distance.csv"],
    }
    write_json(folder / "track.json", report)
    return report


def leaf(
    system: str,
    out: Optional[str] = None,
    nu0: Optional[float] = None,
    cone: Optional[str] = None,
    v0: Optional[Sequence[float]] = None,
    offsets: Sequence[float] = (-0.5, -0.25, 0.25, 0.5),
    radius: float = 5.0,
    nodes: Optional[int] = None,
    tol: float = 1e-6,
) -> dict:
    """Sample the vertical leaf through the central projection of v0 along the first E+ direction."""
    spec = resolve_system(system)
    cf = resolve_cone(spec, nu0, cone)
    folder = output_dir(out)
    M = manifold_for(spec, cf, radius, nodes, tol)
    star = central_project(spec, cf, M, _start(M, v0), tol=tol).v0_star
    grid = np.zeros((len(offsets), cf.n - cf.j))
    grid[:, 0] = offsets
    sample = sample_vertical_leaf(spec, cf, M, star, grid, tol=tol)
    header = [f"offset_{k + 1}" for k in range(grid.shape[1])] + [f"w_{k + 1}" for k in range(cf.n)] + ["positive"]
    write_csv(folder / "leaf.csv", header, sample.to_rows().tolist())
    report = {
        "status": verdict(bool(np.all(sample.positive))),
        "command": "leaf",
        "system": spec.name,
        "v0_star": star.tolist(),
        "samples": len(offsets),
        "positive": sample.positive.tolist(),
        "artifacts": ["leaf.csv"],
    }
    write_json(folder / "leaf.json", report)
    return report


def reduce(
    system: str,
    out: Optional[str] = None,
    nu0: Optional[float] = None,
    cone: Optional[str] = None,
    zeta0: Optional[Sequence[float]] = None,
    T: float = 10.0,
    radius: float = 5.0,
    nodes: Optional[int] = None,
    tol: float = 1e-6,
) -> dict:
    """
    Reduced flow on the manifold against the chart of the full flow started on the manifold.
    The semiconjugacy bound is limited by the lattice: 10 * max(tol, spacing^2).
    """
    spec = resolve_system(system)
    if not spec.autonomous:
        raise ValueError("the inertial form is defined for autonomous systems")
    cf = resolve_cone(spec, nu0, cone)
    folder = output_dir(out)
    M = manifold_for(spec, cf, radius, nodes, tol)
    if M.j == 0:
        raise DimensionError("a zero-dimensional manifold has no reduced flow to compare")
    form = extract_inertial_form(spec, cf, M)
    center = M.chart(M.anchor)
    zeta0 = center + 0.5 if zeta0 is None else np.asarray(zeta0, dtype=float)
    reduced = integrate_reduced(form, zeta0, T)
    times, states = flow_batch(spec, M.q, M.evaluate(zeta0[None, :]), T, h=form.h, record=True)
    projected = M.chart(states[:, 0])
    error = float(np.max(np.linalg.norm(projected - reduced.states, axis=1)))
    bound = 10.0 * max(tol, M.spacing**2)
    back = integrate_reduced(form, reduced.final, -T).final
    roundtrip = float(np.linalg.norm(back - zeta0))
    roundtrip_bound = ROUNDTRIP_TOL * (1.0 + float(np.linalg.norm(zeta0)))
    write_trajectory(folder / "reduce-reduced.csv", reduced.times, reduced.states)
    write_trajectory(folder / "reduce-projected.csv", times, projected)
    report = {
        "status": combine(verdict(error <= bound), verdict(roundtrip <= roundtrip_bound)),
        "command": "reduce",
        "system": spec.name,
        "j": M.j,
        "zeta0": zeta0.tolist(),
        "T": T,
        "semiconjugacy_error": error,
        "semiconjugacy_bound": bound,
        "roundtrip_error": roundtrip,
        "roundtrip_bound": roundtrip_bound,
        "artifacts": ["reduce-reduced.csv", "reduce-projected.csv"],
    }
    write_json(folder / "reduce.json", report)
    return report
