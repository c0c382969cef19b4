import logging
from typing import Optional

import numpy as np

from imtk.commands.common import combine, manifold_for, output_dir, resolve_cone, resolve_system, verdict
from imtk.flow import drive
from imtk.manifold import GridSpec, build_nested, build_tangents, invariance_residual
from imtk.reports import write_csv, write_json, write_manifold
from imtk.synthesis import clip_constant, gronwall_lipschitz

logger = logging.getLogger(__name__)

LIPSCHITZ_SLACK = 1.1


def build_manifold_cmd(
    system: str,
    out: Optional[str] = None,
    nu0: Optional[float] = None,
    cone: Optional[str] = None,
    radius: float = 5.0,
    nodes: Optional[int] = None,
    tol: float = 1e-6,
    T_max: Optional[float] = None,
    q: Optional[float] = None,
    nested: bool = False,
) -> dict:
    """
    Pullback construction of the manifold graph over q.
    Args:
        nested: also build the inner manifold of the system's second certificate and
            check that it lies on the outer one
    Returns:
        Report with convergence, invariance residual and the Lipschitz check
    """
    spec = resolve_system(system)
    cf = resolve_cone(spec, nu0, cone)
    folder = output_dir(out)
    M = manifold_for(spec, cf, radius, nodes, tol, q=q, T_max=T_max)
    logger.info("manifold for %s: j=%d, %d nodes, converged=%s", spec.name, M.j, len(M.nodes), M.converged)
    if spec.autonomous:
        residual = invariance_residual(spec, cf, M)
    else:
        target = manifold_for(spec, cf, radius, nodes, tol, q=drive(spec.forcing, M.q, 1.0), T_max=T_max, anchor=M.anchor, axes=M.axes)
        residual = invariance_residual(spec, cf, M, target=target)
    clip = clip_constant(cf, gronwall_lipschitz(spec))
    lipschitz = {
        "status": verdict(M.lipschitz_est <= LIPSCHITZ_SLACK * clip),
        "empirical": M.lipschitz_est,
        "clip_constant": clip,
    }
    artifacts = write_manifold(M, folder / "manifold")
    result = {
        "status": combine(verdict(M.converged), residual["status"], lipschitz["status"]),
        "command": "build-manifold",
        "system": spec.name,
        **M.metadata(),
        "invariance": residual,
        "lipschitz": lipschitz,
    }
    if nested:
        cf_inner = resolve_cone(spec, inner=True)
        outer, inner, report = build_nested(spec, cf, cf_inner, GridSpec(radius, nodes), GridSpec(radius), tol=tol)
        artifacts += write_manifold(inner, folder / "manifold-inner")
        result["nested"] = report
        result["status"] = combine(result["status"], report["status"])
    result["artifacts"] = [p.name for p in artifacts]
    write_json(folder / "build-manifold.json", result)
    return result


def tangents(
    system: str,
    out: Optional[str] = None,
    nu0: Optional[float] = None,
    cone: Optional[str] = None,
    radius: float = 5.0,
    nodes: Optional[int] = None,
    tol: float = 1e-6,
) -> dict:
    """Tangent spaces by subspace pullback, cross-checked against finite differences of the graph."""
    spec = resolve_system(system)
    cf = resolve_cone(spec, nu0, cone)
    folder = output_dir(out)
    M = manifold_for(spec, cf, radius, nodes, tol)
    field = build_tangents(spec, cf, M, tol=tol)
    validated = field.validated
    inside = field.inside_cone(cf) if M.j else True
    invertible = field.chart_invertible(M) if M.j else True
    status = combine(verdict(validated is not False), verdict(inside), verdict(invertible))
    header = [f"zeta_{k + 1}" for k in range(M.j)] + [f"t_{a + 1}_{b + 1}" for b in range(M.j) for a in range(M.n)]
    rows = np.hstack([M.nodes, field.bases.transpose(0, 2, 1).reshape(len(M.nodes), -1)])
    write_csv(folder / "tangents.csv", header, rows.tolist())
    result = {
        "status": status,
        "command": "tangents",
        "system": spec.name,
        "j": M.j,
        "theta_used": field.theta_used,
        "fd_max_angle": field.fd_max_angle,
        "tolerance": field.tolerance,
        "validated": validated,
        "inside_cone": inside,
        "chart_invertible": invertible,
        "artifacts": ["tangents.csv"],
    }
    write_json(folder / "tangents.json", result)
    return result
