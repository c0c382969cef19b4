import logging
from typing import Optional

from imtk.commands.analysis import analyze
from imtk.commands.checks import check_freq, synth_p, verify_h3
from imtk.commands.common import certified_nu0, combine, output_dir, resolve_system, verdict
from imtk.commands.manifolds import build_manifold_cmd, tangents
from imtk.commands.tracking import track
from imtk.conditions import count_unstable, spectral_gap
from imtk.reports import write_json

logger = logging.getLogger(__name__)


def verify_all(fixture: str, out: Optional[str] = None, seed: int = 42) -> dict:
    """
    Certificate, synthesis, cone battery, manifold, tangents, tracking and analysis for one system.
    Stages that do not apply to the system's dimension or driving are listed as skipped.
    """
    spec = resolve_system(fixture)
    folder = output_dir(out)
    stages, skipped = {}, []

    stages["check-freq"] = check_freq(fixture, out=str(folder))["status"]
    if spec.galerkin is not None:
        j = count_unstable(spec.A, certified_nu0(spec)).j
        if 1 <= j < spec.n:
            stages["gap"] = verdict(spectral_gap(spec.galerkin, j, spec.lipschitz).passed)
    synth = synth_p(fixture, out=str(folder), seed=seed)
    stages["synth-p"] = synth["status"]
    cone = str(folder / "cone.json")
    stages["verify-h3"] = verify_h3(fixture, out=str(folder), cone=cone, seed=seed)["status"]

    j = synth["j"]
    if j <= 2:
        stages["build-manifold"] = build_manifold_cmd(fixture, out=str(folder), cone=cone)["status"]
    else:
        skipped.append("build-manifold")
    if 1 <= j <= 2:
        stages["tangents"] = tangents(fixture, out=str(folder), cone=cone)["status"]
    else:
        skipped.append("tangents")
    if 1 <= j <= 2 and spec.forcing.mode != "quasiperiodic":
        stages["track"] = track(fixture, out=str(folder), cone=cone)["status"]
    else:
        skipped.append("track")
    if j <= 2:
        stages["analyze"] = analyze(fixture, out=str(folder), cone=cone, seed=seed)["status"]
    else:
        skipped.append("analyze")

    report = {
        "status": combine(*stages.values()),
        "command": "verify-all",
        "system": spec.name,
        "seed": seed,
        "stages": stages,
        "skipped": skipped,
    }
    write_json(folder / "verify-all.json", report)
    logger.info("verify-all %s: %s", spec.name, report["status"])
    return report
