import logging
from typing import Optional, Sequence

import numpy as np

from imtk.commands.common import combine, manifold_for, output_dir, resolve_cone, resolve_system
from imtk.dynamics import (
    check_ap_stability,
    check_convergence_periodic,
    classify_omega_limit,
    floquet_multipliers,
    poincare_map,
    robustness_experiment,
    stability_transfer_check,
)
from imtk.errors import LeftGrid
from imtk.reports import write_csv, write_json, write_trajectory
from imtk.tracking import extract_inertial_form

logger = logging.getLogger(__name__)


def _autonomous(spec, cf, M, zeta0, folder, T_transient: float, T_obs: float, seed: int) -> tuple:
    form = extract_inertial_form(spec, cf, M)
    zeta0 = M.chart(M.anchor) + 0.5 if zeta0 is None else np.asarray(zeta0, dtype=float)
    sections, artifacts = {}, []
    try:
        orbit = classify_omega_limit(form, zeta0, T_transient=T_transient, T_obs=T_obs)
    except LeftGrid as e:
        logger.info("reduced orbit from %s left the lattice: %s", zeta0, e)
        sections["omega_limit"] = {"verdict": "left-grid", "zeta0": zeta0.tolist()}
        return sections, artifacts
    sections["omega_limit"] = orbit.to_dict()
    if orbit.verdict == "periodic":
        sections["floquet"] = floquet_multipliers(form, orbit)
        times = np.linspace(0.0, orbit.period, len(orbit.samples))
        artifacts.append(write_trajectory(folder / "analyze-orbit.csv", times, orbit.samples))
    if orbit.verdict in ("stationary", "periodic"):
        sections["stability_transfer"] = stability_transfer_check(spec, cf, M, orbit, seed=seed)
    return sections, artifacts


def analyze(
    system: str,
    out: Optional[str] = None,
    nu0: Optional[float] = None,
    cone: Optional[str] = None,
    zeta0: Optional[Sequence[float]] = None,
    sigma: Optional[float] = None,
    radius: float = 5.0,
    nodes: Optional[int] = None,
    tol: float = 1e-6,
    T_transient: float = 50.0,
    T_obs: float = 50.0,
    seed: int = 42,
) -> dict:
    """
    Dynamics on the manifold, picked by driving mode and dimension:
    omega-limit classification for autonomous systems, Poincare iterates and
    convergence for periodic forcing, contraction for quasiperiodic forcing with j=0.
    """
    spec = resolve_system(system)
    cf = resolve_cone(spec, nu0, cone)
    folder = output_dir(out)
    mode = spec.forcing.mode
    sections, artifacts = {}, []
    if mode == "quasiperiodic":
        sections["almost_periodic"] = check_ap_stability(spec, cf, seed=seed)
    else:
        M = manifold_for(spec, cf, radius, nodes, tol)
        if mode == "none" and M.j >= 1:
            sections, artifacts = _autonomous(spec, cf, M, zeta0, folder, T_transient, T_obs, seed)
        elif mode == "periodic":
            start = M.anchor + 0.5 * np.ones(M.n)
            sections["convergence"] = check_convergence_periodic(spec, cf, M, start, sigma)
            if M.j == 1:
                z = M.chart(M.anchor) + 0.5 if zeta0 is None else np.asarray(zeta0, dtype=float)
                poincare = poincare_map(spec, cf, M, z, sigma=sigma)
                sections["poincare"] = poincare
                artifacts.append(write_csv(folder / "analyze-poincare.csv", ["k", "zeta_1"], [[k, x] for k, x in enumerate(poincare["iterates"])]))
    statuses = [s["status"] for s in sections.values() if "status" in s]
    report = {
        "status": combine(*statuses),
        "command": "analyze",
        "system": spec.name,
        "forcing": mode,
        "j": cf.j,
        **sections,
        "artifacts": [p.name for p in artifacts],
    }
    write_json(folder / "analyze.json", report)
    return report


def robustness(
    system: str,
    out: Optional[str] = None,
    nu0: Optional[float] = None,
    cone: Optional[str] = None,
    epsilons: Sequence[float] = (1e-1, 1e-2, 1e-3),
    threads: int = 1,
    radius: float = 5.0,
    nodes: Optional[int] = None,
    tol: float = 1e-8,
) -> dict:
    """Manifold of the nonlinearity scaled by eps against the eps = 0 manifold on the same lattice."""
    spec = resolve_system(system)
    cf = resolve_cone(spec, nu0, cone)
    folder = output_dir(out)
    M0 = manifold_for(spec.with_scale(0.0), cf, radius, nodes, tol)
    result = robustness_experiment(spec, cf, M0, epsilons, tol=tol, threads=threads)
    write_csv(
        folder / "robustness.csv",
        ["epsilon", "distance", "ratio"],
        [[e, d, d / e if e > 0 else 0.0] for e, d in zip(result["epsilons"], result["distances"])],
    )
    report = {"command": "robustness", "system": spec.name, **result, "artifacts": ["robustness.csv"]}
    report = {"status": report.pop("status"), **report}
    write_json(folder / "robustness.json", report)
    return report
