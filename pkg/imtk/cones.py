"""Property checks on a quadratic cone field along trajectory pairs."""

import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from imtk.errors import DimensionError
from imtk.flow import flow_batch
from imtk.synthesis import ConeField, gronwall_lipschitz
from imtk.systems import SystemSpec

logger = logging.getLogger(__name__)

ORDER_TOL = 1e-12


def v_value(cf: ConeField, v) -> float:
    v = np.asarray(v, dtype=float)
    if v.shape[-1] != cf.n:
        raise DimensionError(f"vector has dimension {v.shape[-1]}, cone field has {cf.n}")
    return cf.value(v)


def kappa_form(cf: ConeField, kappa: float, v):
    v = np.asarray(v, dtype=float)
    if v.shape[-1] != cf.n:
        raise DimensionError(f"vector has dimension {v.shape[-1]}, cone field has {cf.n}")
    return cf.kappa_value(kappa, v)


@dataclass(frozen=True, eq=False)
class PseudoOrderWitness:
    v1: np.ndarray
    v2: np.ndarray
    value: float
    classification: str


def classify_pair(cf: ConeField, v1, v2) -> PseudoOrderWitness:
    d = np.asarray(v1, dtype=float) - np.asarray(v2, dtype=float)
    value = float(v_value(cf, d))
    tol = ORDER_TOL * cf.m_p * float(d @ d)
    if value < -tol:
        label = "strict-negative"
    elif value > tol:
        label = "positive"
    else:
        label = "zero"
    return PseudoOrderWitness(v1=np.asarray(v1), v2=np.asarray(v2), value=value, classification=label)


def _split_samples(cf: ConeField, rng, count: int, side: str, ratio_range=(0.0, 0.5)) -> np.ndarray:
    """Differences whose weaker part carries at most a bounded share of |V| of the dominant part."""
    a = rng.normal(size=(count, cf.j)) if cf.j else np.zeros((count, 0))
    b = rng.normal(size=(count, cf.n - cf.j)) if cf.n - cf.j else np.zeros((count, 0))
    dm = a @ cf.basis_minus.T
    dp = b @ cf.basis_plus.T
    vm = -cf.value(dm)
    vp = cf.value(dp)
    share = rng.uniform(*ratio_range, size=count)
    if side == "minus":
        scale = np.sqrt(np.divide(share * vm, vp, out=np.zeros(count), where=vp > 0))
        return dm + scale[:, None] * dp
    scale = np.sqrt(np.divide(share * vp, vm, out=np.zeros(count), where=vm > 0))
    return dp + scale[:, None] * dm


def _pair_flow(system, cf, rng, pairs, side, horizon, h, radius):
    V1 = rng.normal(scale=radius / 3.0, size=(pairs, system.n))
    D = _split_samples(cf, rng, pairs, side)
    times, states = flow_batch(system, None, np.vstack([V1, V1 + D]), horizon, h, record=True)
    return times, states[:, pairs:] - states[:, :pairs]


def check_cone_invariance(
    system: SystemSpec,
    cf: ConeField,
    pairs: int = 50,
    horizon: float = 3.0,
    tau_v: float = 0.0,
    h: Optional[float] = None,
    radius: float = 5.0,
    seed: int = 42,
) -> dict:
    rng = np.random.default_rng(seed)
    times, D = _pair_flow(system, cf, rng, pairs, "minus", horizon, h, radius)
    values = cf.value(D)
    violations = []
    skipped = 0
    for k in range(pairs):
        if not np.any(D[0, k]):
            skipped += 1
            continue
        if values[0, k] > 0:
            skipped += 1
            continue
        mask = (times >= tau_v) & (times > 0)
        scale = ORDER_TOL * cf.m_p * np.einsum("ti,ti->t", D[:, k], D[:, k])
        bad = np.where(mask & (values[:, k] >= -scale))[0]
        if bad.size:
            violations.append({"pair": k, "time": float(times[bad[0]]), "value": float(values[bad[0], k])})
    logger.info("cone invariance: %d pairs, %d skipped, %d violations", pairs, skipped, len(violations))
    return {
        "status": "pass" if not violations else "fail",
        "pairs": pairs,
        "skipped": skipped,
        "violations": violations,
    }


def check_squeezing(
    system: SystemSpec,
    cf: ConeField,
    pairs: int = 50,
    horizon: float = 3.0,
    tau_s: float = 0.0,
    h: Optional[float] = None,
    radius: float = 5.0,
    seed: int = 42,
    lipschitz_flow: Optional[float] = None,
    slack: float = 0.05,
) -> dict:
    """Integral and exponential squeezing bounds for pairs ending on the vertical side."""
    rng = np.random.default_rng(seed)
    times, D = _pair_flow(system, cf, rng, pairs, "plus", horizon, h, radius)
    L = lipschitz_flow or gronwall_lipschitz(system, T=1.0)
    nu = cf.nu0
    values = cf.value(D)
    norm2 = np.einsum("tki,tki->tk", D, D)
    weight = np.exp(2.0 * nu * times)
    g = weight[:, None] * norm2
    integral = np.sum(0.5 * (g[1:] + g[:-1]) * np.diff(times)[:, None], axis=0)
    const = L**2 * math.exp(2.0 * nu * (tau_s + 1.0)) / cf.delta
    results, failures, skipped = [], [], 0
    for k in range(pairs):
        if values[-1, k] < 0:
            skipped += 1
            continue
        v0 = float(values[0, k])
        integral_ok = cf.delta * integral[k] <= v0 * (1.0 + slack) + 1e-12 * cf.m_p
        bound = const * v0 * np.exp(-2.0 * nu * times)
        late = times >= tau_s + 1.0
        exp_ok = bool(np.all(norm2[late, k] <= bound[late] * (1.0 + slack) + 1e-14))
        ratio = float(np.max(norm2[:, k] / np.maximum(bound, 1e-300)))
        results.append({"pair": k, "integral_ok": bool(integral_ok), "exponential_ok": exp_ok, "worst_ratio": ratio})
        if not (integral_ok and exp_ok):
            failures.append(k)
    logger.info("squeezing: %d of %d pairs failed", len(failures), pairs - skipped)
    return {
        "status": "pass" if not failures else "fail",
        "pairs": pairs,
        "skipped": skipped,
        "constant": const,
        "failures": failures,
        "per_pair": results,
    }


def romanov_inequality(cf: ConeField, kappa: float, w1, w2, w3):
    """(V(w1+ - w3+), C_kappa V(w1+ - w2+)) with C_kappa = 1 / (1 - kappa)^2."""
    lhs = cf.value(cf.plus(np.asarray(w1) - np.asarray(w3)))
    rhs = cf.value(cf.plus(np.asarray(w1) - np.asarray(w2))) / (1.0 - kappa) ** 2
    return lhs, rhs


def romanov_check(cf: ConeField, kappa: float, triples: int = 10_000, seed: int = 42) -> dict:
    """Triples with V(w1-w3) >= 0, V^(kappa)(w2-w3) <= 0, Pi w1 = Pi w2, constructed directly."""
    rng = np.random.default_rng(seed)
    w3 = rng.normal(size=(triples, cf.n))
    a = rng.normal(size=(triples, cf.j)) @ cf.basis_minus.T
    vm = -cf.value(a)
    b_dir = rng.normal(size=(triples, cf.n - cf.j)) @ cf.basis_plus.T
    vb = cf.value(b_dir)
    b = b_dir * np.sqrt(np.divide(kappa**2 * vm * rng.uniform(size=triples), vb, out=np.zeros(triples), where=vb > 0))[:, None]
    w2 = w3 + a + b
    g_dir = rng.normal(size=(triples, cf.n - cf.j)) @ cf.basis_plus.T
    vg = cf.value(g_dir)
    g = g_dir * np.sqrt(np.divide(vm * (1.0 + rng.uniform(size=triples)), vg, out=np.zeros(triples), where=vg > 0))[:, None]
    w1 = w3 + a + g
    lhs, rhs = romanov_inequality(cf, kappa, w1, w2, w3)
    scale = 1e-10 * cf.m_p * (1.0 + np.einsum("ki,ki->k", w1 - w3, w1 - w3))
    bad = np.where(lhs > rhs + scale)[0]
    if bad.size:
        logger.warning("romanov inequality violated on %d of %d triples", bad.size, triples)
    return {
        "status": "pass" if bad.size == 0 else "fail",
        "triples": triples,
        "kappa": kappa,
        "c_kappa": 1.0 / (1.0 - kappa) ** 2,
        "violations": bad.tolist()[:20],
        "worst_excess": float(np.max(lhs - rhs)) if triples else 0.0,
    }


def verify_h3_discrete(
    system: SystemSpec,
    cf: ConeField,
    pairs: int = 100,
    r_grid: Optional[np.ndarray] = None,
    h: float = 1e-3,
    delta: Optional[float] = None,
    radius: float = 5.0,
    seed: int = 42,
) -> dict:
    """e^{2 nu r} V(D(r)) - e^{2 nu l} V(D(l)) + delta Quad(int_l^r e^{2 nu s}|D|^2) <= eps_quad."""
    d_check = cf.delta if delta is None else delta
    r_grid = np.asarray(r_grid if r_grid is not None else np.linspace(0.0, 2.0, 9))
    rng = np.random.default_rng(seed)
    V1 = rng.normal(scale=radius / 3.0, size=(pairs, system.n))
    V2 = V1 + rng.normal(size=(pairs, system.n))
    times, states = flow_batch(system, None, np.vstack([V1, V2]), float(r_grid.max()), h, record=True)
    D = states[:, pairs:] - states[:, :pairs]
    dt = times[1] - times[0] if len(times) > 1 else h
    weight = np.exp(2.0 * cf.nu0 * times)
    g = weight[:, None] * np.einsum("tki,tki->tk", D, D)
    cumulative = np.concatenate([np.zeros((1, pairs)), np.cumsum(0.5 * (g[1:] + g[:-1]) * dt, axis=0)])
    g2 = np.abs(np.diff(g, n=2, axis=0)) / dt**2 if len(times) > 2 else np.zeros((1, pairs))
    WV = weight[:, None] * cf.value(D)
    index = np.clip(np.rint(r_grid / dt).astype(int), 0, len(times) - 1)
    failures, worst = [], -math.inf
    for a, l_idx in enumerate(index):
        for r_idx in index[a + 1 :]:
            if times[r_idx] - times[l_idx] < cf.tau_p or r_idx <= l_idx:
                continue
            quad = cumulative[r_idx] - cumulative[l_idx]
            curvature = g2[l_idx : max(r_idx - 1, l_idx + 1)].max(axis=0)
            eps = d_check * (times[r_idx] - times[l_idx]) * dt**2 / 12.0 * curvature + 1e-9 * cf.m_p * (1.0 + np.abs(WV[r_idx]) + np.abs(WV[l_idx]))
            lhs = WV[r_idx] - WV[l_idx] + d_check * quad
            excess = lhs - eps
            worst = max(worst, float(excess.max()))
            for k in np.where(excess > 0)[0]:
                failures.append({"pair": int(k), "l": float(times[l_idx]), "r": float(times[r_idx]), "excess": float(excess[k])})
    logger.info("discrete squeezing at delta=%.6g: %d failures, worst excess %.3g", d_check, len(failures), worst)
    return {
        "status": "pass" if not failures else "fail",
        "pairs": pairs,
        "delta": d_check,
        "worst_excess": worst,
        "failures": failures[:50],
        "failure_count": len(failures),
    }


def projector_injectivity(cf: ConeField, differences) -> dict:
    """|Pi D|^2 >= -V(D)/|P| for pseudo-ordered differences."""
    D = np.atleast_2d(np.asarray(differences, dtype=float))
    values = cf.value(D)
    ordered = values <= 0
    proj = cf.minus(D)
    lhs = np.einsum("ki,ki->k", proj, proj)
    ok = lhs >= -values / cf.m_p - 1e-12
    return {"status": "pass" if bool(np.all(ok[ordered])) else "fail", "checked": int(ordered.sum())}
