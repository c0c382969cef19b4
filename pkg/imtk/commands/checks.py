"""Certificate commands: frequency sweep, spectral gap, small delays, Riccati synthesis and the cone battery."""

import logging
import math
from typing import Optional

import numpy as np

from imtk.commands.common import certified_nu0, combine, output_dir, resolve_cone, resolve_system, verdict
from imtk.conditions import (
    check_frequency,
    delay_transfer_function,
    frequency_sweep,
    rational_transfer_function,
    scp_sampled_check,
    small_delay_check,
    small_delay_threshold,
    spectral_gap,
)
from imtk.cones import check_cone_invariance, check_squeezing, romanov_check, verify_h3_discrete
from imtk.reports import write_csv, write_json
from imtk.synthesis import clip_constant, gronwall_lipschitz, kappa_threshold, lmi_block, save_cone_field
from imtk.systems import DelaySpec, GalerkinSpec

logger = logging.getLogger(__name__)

SWEEP_POINTS = 401


def _sweep_rows(tf, nu0: float, omega_max: float) -> list:
    omegas = np.linspace(-omega_max, omega_max, SWEEP_POINTS)
    return [[float(w), tf.norm_on_line(nu0, w)] for w in omegas]


def check_freq(
    system: str,
    out: Optional[str] = None,
    nu0: Optional[float] = None,
    lambda_lip: Optional[float] = None,
    omega_max: Optional[float] = None,
) -> dict:
    """
    Frequency inequality sup |W(-nu0 + i omega)| < 1/Lambda on the rational transfer function.
    Delay systems are also swept with the exact characteristic matrix, which decides the verdict.
    """
    spec = resolve_system(system)
    nu0 = certified_nu0(spec, nu0)
    lam = spec.lipschitz if lambda_lip is None else lambda_lip
    folder = output_dir(out)
    report = check_frequency(spec, nu0, lam, omega_max)
    plot_range = 10.0 * (abs(nu0) + 1.0 + abs(report.diagnostics["worst_omega"]))
    artifacts = [
        write_csv(folder / "check-freq-sweep.csv", ["omega", "norm_W"], _sweep_rows(rational_transfer_function(spec.A, spec.B, spec.C), nu0, plot_range))
    ]
    result = {"status": verdict(report.passed), "command": "check-freq", "system": spec.name, **report.to_dict()}
    if spec.delay is not None:
        tf = delay_transfer_function(spec.delay)
        exact = frequency_sweep(tf, nu0, lam, omega_max, j=report.j)
        result["discretized_status"] = result["status"]
        result["status"] = verdict(exact.passed)
        result["delay"] = exact.to_dict()
        artifacts.append(write_csv(folder / "check-freq-delay-sweep.csv", ["omega", "norm_W"], _sweep_rows(tf, nu0, plot_range)))
    result["artifacts"] = [p.name for p in artifacts]
    write_json(folder / "check-freq.json", result)
    logger.info("check-freq %s: %s (margin %.6g)", spec.name, result["status"], report.margin)
    return result


def _eigenvalues(lambdas: str, N: int) -> tuple:
    if lambdas == "squares":
        return tuple(float(k * k) for k in range(1, N + 1))
    values = tuple(float(x) for x in lambdas.split(","))
    if len(values) < N:
        raise ValueError(f"--lambdas lists {len(values)} eigenvalues, --N asks for {N}")
    return values[:N]


def gap(lambdas: str, N: int, j: int, alpha_beta: float, lambda_lip: float, out: Optional[str] = None) -> dict:
    """Spectral gap (lambda_{j+1} - lambda_j) / (lambda_j^e + lambda_{j+1}^e) > Lambda with e = alpha - beta."""
    spec = GalerkinSpec(eigenvalues=_eigenvalues(lambdas, N), alpha=alpha_beta, beta=0.0)
    report = spectral_gap(spec, j, lambda_lip)
    result = {"status": verdict(report.passed), "command": "gap", "N": N, "alpha_beta": alpha_beta, "lambda_lip": lambda_lip, **report.to_dict()}
    write_json(output_dir(out) / "gap.json", result)
    return result


def small_delay(
    tau: float,
    r: int,
    lambda_lip: float,
    d0: float = 0.0,
    nu0: Optional[float] = None,
    out: Optional[str] = None,
) -> dict:
    nu0 = 1.0 / tau if nu0 is None else nu0
    report = small_delay_check(DelaySpec(tau=tau, d0_norm=d0), r, lambda_lip, nu0)
    result = {"status": verdict(report.passed), "command": "small-delay", "tau": tau, "d0": d0, "r": r, "lambda_lip": lambda_lip, **report.to_dict()}
    if d0 == 0.0 and lambda_lip > 0:
        result["tau_threshold"] = small_delay_threshold(r, lambda_lip)
    write_json(output_dir(out) / "small-delay.json", result)
    return result


def synth_p(
    system: str,
    out: Optional[str] = None,
    nu0: Optional[float] = None,
    delta_fraction: Optional[float] = None,
    kappa_battery: bool = False,
    seed: int = 42,
) -> dict:
    """Riccati synthesis of P; writes cone.json for the later stages."""
    spec = resolve_system(system)
    cf = resolve_cone(spec, nu0, delta_fraction=delta_fraction)
    folder = output_dir(out)
    block = lmi_block(spec.A + cf.nu0 * np.eye(spec.n), spec.B, spec.C, cf.P, cf.lipschitz, cf.delta)
    eigs = np.linalg.eigvalsh(cf.P)
    result = {
        "status": "pass",
        "command": "synth-p",
        "system": spec.name,
        "nu0": cf.nu0,
        "j": cf.j,
        "delta": cf.delta,
        "inertia": [int(np.sum(eigs < 0)), int(np.sum(eigs > 0))],
        "P_eigenvalues": eigs.tolist(),
        "riccati_residual": cf.riccati_residual,
        "lmi_max_eigenvalue": float(np.linalg.eigvalsh(0.5 * (block + block.T)).max()),
        "m_p": cf.m_p,
        "m_pi": cf.m_pi,
        "c_q": cf.c_q,
        "kappa0": cf.kappa0,
    }
    if kappa_battery:
        L = gronwall_lipschitz(spec)
        result["kappa_battery"] = kappa_threshold(spec, cf, L, seed=seed)
        result["status"] = combine(result["status"], result["kappa_battery"]["status"])
        result["clip_constant"] = clip_constant(cf, L)
    save_cone_field(cf, folder / "cone.json")
    result["artifacts"] = ["cone.json"]
    write_json(folder / "synth-p.json", result)
    return result


def verify_h3(
    system: str,
    out: Optional[str] = None,
    nu0: Optional[float] = None,
    cone: Optional[str] = None,
    pairs: int = 100,
    delta_scale: float = 1.0,
    triples: int = 10_000,
    seed: int = 42,
) -> dict:
    """Discrete squeezing inequality plus the cone lemma battery.
    delta_scale > 1 inflates delta_P for the adversarial run, which is expected to fail."""
    spec = resolve_system(system)
    cf = resolve_cone(spec, nu0, cone)
    h3 = verify_h3_discrete(spec, cf, pairs=pairs, delta=cf.delta * delta_scale, seed=seed)
    invariance = check_cone_invariance(spec, cf, seed=seed)
    squeezing = check_squeezing(spec, cf, seed=seed)
    romanov = romanov_check(cf, cf.kappa0, triples=triples, seed=seed)
    scp = scp_sampled_check(spec, cf, seed=seed)
    scp_report = {"status": verdict(scp.passed), **scp.to_dict()}
    result = {
        "status": combine(h3["status"], invariance["status"], squeezing["status"], romanov["status"], scp_report["status"]),
        "command": "verify-h3",
        "system": spec.name,
        "delta_scale": delta_scale,
        "h3": h3,
        "cone_invariance": invariance,
        "squeezing": squeezing,
        "romanov": romanov,
        "scp": scp_report,
    }
    write_json(output_dir(out) / "verify-h3.json", result)
    if not math.isclose(delta_scale, 1.0):
        logger.info("verify-h3 with delta x %g: h3 %s (%d failures)", delta_scale, h3["status"], h3["failure_count"])
    return result
