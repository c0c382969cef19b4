import logging
from pathlib import Path
from typing import Optional

from imtk.config import Settings
from imtk.manifold import GridSpec, ManifoldGraph, build_manifold
from imtk.synthesis import ConeField, load_cone_field, synthesize_P
from imtk.systems import SystemSpec, load_fixture, load_system

logger = logging.getLogger(__name__)

DEFAULT_OUT = "imtk-out"
PASSING = ("pass", "success", "degenerate")


def resolve_system(ref: str) -> SystemSpec:
    """A path to a config document, or the name of a packaged fixture."""
    path = Path(ref)
    if path.suffix == ".json" or path.exists():
        return load_system(path)
    return load_fixture(ref)


def certified_nu0(system: SystemSpec, nu0: Optional[float] = None, inner: bool = False) -> float:
    if nu0 is not None:
        return float(nu0)
    cert = system.config.certificate if system.config is not None else None
    value = None if cert is None else (cert.nu0_inner if inner else cert.nu0)
    if value is None:
        raise ValueError(f"no nu0 given and system {system.name or '<unnamed>'} declares no certificate")
    return float(value)


def resolve_cone(
    system: SystemSpec,
    nu0: Optional[float] = None,
    cone: Optional[str] = None,
    delta_fraction: Optional[float] = None,
    inner: bool = False,
) -> ConeField:
    if cone:
        cf = load_cone_field(cone)
        logger.info("loaded cone field from %s", cone)
        if cf.n != system.n:
            raise ValueError(f"cone field in {cone} has dimension {cf.n}, system has {system.n}")
        return cf
    cert = system.config.certificate if system.config is not None else None
    if delta_fraction is None:
        delta_fraction = cert.delta_fraction if cert is not None else 0.5
    return synthesize_P(system, certified_nu0(system, nu0, inner=inner), delta_fraction=delta_fraction)


def output_dir(out: Optional[str] = None) -> Path:
    """IMTK_OUT wins over --out."""
    path = Path(Settings.OUT_DIR or out or DEFAULT_OUT)
    path.mkdir(parents=True, exist_ok=True)
    return path


def verdict(passed: bool) -> str:
    return "pass" if passed else "fail"


def combine(*statuses: str) -> str:
    return "pass" if all(s in PASSING for s in statuses) else "fail"


def manifold_for(system: SystemSpec, cf: ConeField, radius: float = 5.0, nodes: Optional[int] = None, tol: float = 1e-6, q=None, **kwargs) -> ManifoldGraph:
    return build_manifold(system, cf, q=q, grid=GridSpec(radius=radius, nodes=nodes), tol=tol, **kwargs)
