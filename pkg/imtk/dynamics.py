"""Dynamics on the reduced system: omega-limit classification, periodic forcing, almost periodic
contraction, stability transfer and the epsilon robustness sweep."""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from imtk.conditions import check_frequency
from imtk.errors import (
    CertificateLostAtEpsilon,
    DimensionError,
    LeftGrid,
    NonFinite,
    Unbounded,
    UnsupportedDriving,
)
from imtk.flow import flow_batch
from imtk.manifold import GridSpec, ManifoldGraph, build_manifold
from imtk.synthesis import ConeField
from imtk.systems import SystemSpec
from imtk.tracking import InertialForm, fit_decay, integrate_reduced

logger = logging.getLogger(__name__)

STATIONARY_TOL = 1e-6
RETURN_THRESHOLD = 1e-3
PERIODIC_TOL = 1e-5
SHOOTING_TOL = 1e-10


@dataclass
class OrbitClassification:
    verdict: str
    point: np.ndarray
    period: Optional[float] = None
    samples: Optional[np.ndarray] = None
    residual: float = 0.0
    velocity: float = 0.0
    transient: float = 0.0
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "point": self.point.tolist(),
            "period": self.period,
            "residual": self.residual,
            "velocity": self.velocity,
            "transient": self.transient,
            **self.diagnostics,
        }


def _period_map(form: InertialForm, zeta, T: float, h: float) -> np.ndarray:
    return integrate_reduced(form, zeta, T, h).final


def _near_return(times, states, threshold: float) -> Optional[float]:
    """First local minimum of the distance from zeta(0) to the sampled polyline, below threshold,
    after the orbit has left the threshold neighbourhood."""
    ref = states[0]
    a, b = states[:-1], states[1:]
    seg = b - a
    length2 = np.einsum("ki,ki->k", seg, seg)
    s = np.clip(np.einsum("ki,ki->k", ref - a, seg) / np.where(length2 > 0, length2, 1.0), 0.0, 1.0)
    dist = np.linalg.norm(a + s[:, None] * seg - ref, axis=1)
    left = np.where(dist > 2.0 * threshold)[0]
    if left.size == 0:
        return None
    for i in range(left[0] + 1, len(dist) - 1):
        if dist[i] < threshold and dist[i] <= dist[i - 1] and dist[i] <= dist[i + 1]:
            return float(times[i] + s[i] * (times[i + 1] - times[i]))
    return None


def _shoot_periodic(form: InertialForm, zeta, T: float, h: float, max_iter: int = 30):
    """Newton on (zeta, T) for zeta = flow^T(zeta) with the phase condition f(zeta_ref).(zeta - zeta_ref) = 0."""
    ref = np.array(zeta, dtype=float)
    f_ref = form(ref)
    x = np.concatenate([ref, [T]])
    j = len(ref)

    def residual(x):
        z, period = x[:j], x[j]
        return np.concatenate([_period_map(form, z, period, h) - z, [f_ref @ (z - ref)]])

    r = residual(x)
    for _ in range(max_iter):
        if np.linalg.norm(r) <= SHOOTING_TOL:
            break
        eps = 1e-7 * np.maximum(1.0, np.abs(x))
        J = np.column_stack([(residual(x + eps[k] * np.eye(j + 1)[k]) - r) / eps[k] for k in range(j + 1)])
        try:
            step = np.linalg.solve(J, r)
        except np.linalg.LinAlgError:
            break
        lam = 1.0
        while lam > 1e-3:
            trial = x - lam * step
            if trial[j] <= 0:
                lam *= 0.5
                continue
            try:
                r_trial = residual(trial)
            except LeftGrid:
                lam *= 0.5
                continue
            if np.linalg.norm(r_trial) < np.linalg.norm(r):
                x, r = trial, r_trial
                break
            lam *= 0.5
        else:
            break
    return x[:j], float(x[j]), float(np.linalg.norm(r[:j]))


def classify_omega_limit(
    form: InertialForm,
    zeta0,
    T_transient: float = 50.0,
    T_obs: float = 50.0,
    h: Optional[float] = None,
    samples: int = 200,
) -> OrbitClassification:
    h = h or form.h
    settled = integrate_reduced(form, zeta0, T_transient, h).final
    obs = integrate_reduced(form, settled, T_obs, h)
    end = obs.final
    velocity = float(np.linalg.norm(form(end)))
    if velocity <= STATIONARY_TOL:
        logger.info("omega-limit: stationary point at %s", end)
        return OrbitClassification(verdict="stationary", point=end, velocity=velocity, transient=T_transient)

    if form.j == 2:
        guess = _near_return(obs.times, obs.states, RETURN_THRESHOLD)
        if guess is not None:
            point, period, residual = _shoot_periodic(form, obs.states[0], guess, h)
            if residual <= PERIODIC_TOL and period > 10.0 * h and np.linalg.norm(form(point)) > STATIONARY_TOL:
                orbit = integrate_reduced(form, point, period, period / samples).states
                logger.info("omega-limit: periodic orbit, period %.6g (residual %.2e)", period, residual)
                return OrbitClassification(
                    verdict="periodic",
                    point=point,
                    period=period,
                    samples=orbit,
                    residual=residual,
                    velocity=velocity,
                    transient=T_transient,
                    diagnostics={"return_guess": guess},
                )
            logger.debug("near return at t=%.4g did not refine to a periodic orbit (residual %.2e)", guess, residual)
    return OrbitClassification(verdict="other", point=end, velocity=velocity, transient=T_transient)


def floquet_multipliers(form: InertialForm, orbit: OrbitClassification, h: Optional[float] = None, eps: float = 1e-6) -> dict:
    """Eigenvalues of the finite-difference monodromy of the period map (evidence only)."""
    if orbit.verdict != "periodic":
        raise ValueError("Floquet multipliers need a periodic orbit")
    h = h or form.h
    base = _period_map(form, orbit.point, orbit.period, h)
    j = len(orbit.point)
    monodromy = np.column_stack([(_period_map(form, orbit.point + eps * np.eye(j)[k], orbit.period, h) - base) / eps for k in range(j)])
    mults = np.linalg.eigvals(monodromy)
    mults = mults[np.argsort(-np.abs(mults))]
    return {
        "status": "success",
        "multipliers": [[float(m.real), float(m.imag)] for m in mults],
        "moduli": [float(abs(m)) for m in mults],
    }


def _period_of(system: SystemSpec, sigma: Optional[float]) -> float:
    if system.forcing.mode == "quasiperiodic":
        raise UnsupportedDriving("a Poincare map needs periodic or constant driving")
    if sigma is not None:
        return float(sigma)
    if system.forcing.mode == "periodic":
        return system.forcing.period
    raise ValueError("sigma must be given for undriven systems")


def _monotone_after_transient(values: np.ndarray) -> bool:
    diffs = np.diff(values)[len(values) // 4 :]
    diffs = diffs[np.abs(diffs) > 1e-14]
    return bool(diffs.size == 0 or np.all(diffs > 0) or np.all(diffs < 0))


def poincare_map(system: SystemSpec, cf: ConeField, M: ManifoldGraph, zeta0, k: int = 20, sigma: Optional[float] = None, h: Optional[float] = None) -> dict:
    if M.j != 1:
        raise DimensionError(f"Poincare iteration is defined on one-dimensional manifolds, got j={M.j}")
    sigma = _period_of(system, sigma)
    zeta = np.atleast_1d(np.asarray(zeta0, dtype=float))
    iterates = [float(zeta[0])]
    for _ in range(k):
        image = M.chart(flow_batch(system, M.q, M.evaluate(zeta[None, :]), sigma, h))[0]
        if not M.contains(image)[0]:
            raise LeftGrid(f"Poincare iterate {image[0]:.4g} left the grid box")
        zeta = image
        iterates.append(float(zeta[0]))
    values = np.array(iterates)
    return {
        "status": "success",
        "sigma": sigma,
        "iterates": iterates,
        "monotone": _monotone_after_transient(values),
        "last_step": float(abs(values[-1] - values[-2])) if k else 0.0,
    }


def check_convergence_periodic(
    system: SystemSpec,
    cf: ConeField,
    M: Optional[ManifoldGraph],
    v0,
    sigma: Optional[float] = None,
    periods: int = 40,
    h: Optional[float] = None,
    bound: float = 1e6,
) -> dict:
    """|v(t + sigma) - v(t)| over the last ten periods against the first period."""
    if cf.j > 1:
        raise DimensionError(f"convergence to a periodic trajectory needs j <= 1, got j={cf.j}")
    sigma = _period_of(system, sigma)
    per_period = max(int(math.ceil(sigma / (h or system.default_step()))), 1)
    step = sigma / per_period
    q = M.q if M is not None else None
    try:
        times, states = flow_batch(system, q, np.atleast_2d(v0), periods * sigma, step, record=True)
    except NonFinite as e:
        raise Unbounded(f"trajectory blew up: {e}") from e
    states = states[:, 0, :]
    if np.max(np.abs(states)) > bound:
        raise Unbounded(f"trajectory exceeded {bound:g}")
    gaps = np.linalg.norm(states[per_period:] - states[:-per_period], axis=1)
    initial = float(gaps[:per_period].max())
    tail = float(gaps[-10 * per_period :].max()) if periods > 10 else float(gaps[-per_period:].max())
    converged = initial == 0.0 or tail <= 1e-4 * initial
    return {
        "status": "pass" if converged else "fail",
        "sigma": sigma,
        "initial_gap": initial,
        "tail_gap": tail,
        "periods": periods,
    }


def check_ap_stability(
    system: SystemSpec,
    cf: ConeField,
    q_samples: int = 4,
    pairs: int = 4,
    T: Optional[float] = None,
    h: Optional[float] = None,
    radius: float = 5.0,
    seed: int = 42,
) -> dict:
    if cf.j != 0:
        raise DimensionError(f"almost periodic stability needs j=0, got j={cf.j}")
    if system.forcing.mode != "quasiperiodic":
        raise UnsupportedDriving("almost periodic stability needs quasiperiodic driving")
    T = T or 8.0 / cf.nu0
    rng = np.random.default_rng(seed)
    rows, failures, skipped = [], 0, 0
    for _ in range(q_samples):
        q = rng.uniform(size=system.forcing.dim)
        V1 = rng.normal(scale=radius / 3.0, size=(pairs, system.n))
        V2 = V1 + rng.normal(size=(pairs, system.n))
        times, states = flow_batch(system, q, np.vstack([V1, V2]), T, h, record=True)
        for k in range(pairs):
            diff = np.linalg.norm(states[:, pairs + k] - states[:, k], axis=1)
            if diff[0] < 1e-12:
                skipped += 1
                continue
            slope = fit_decay(times, diff)
            ok = slope is not None and slope <= -0.85 * cf.nu0 and diff[-1] <= 1e-6 * diff[0] + 1e-12
            failures += not ok
            rows.append({"q": q.tolist(), "slope": slope, "final_ratio": float(diff[-1] / diff[0]), "ok": bool(ok)})
    return {
        "status": "pass" if failures == 0 else "fail",
        "bound": -0.85 * cf.nu0,
        "skipped": skipped,
        "failures": failures,
        "pairs": rows,
    }


def _distance_to_set(points: np.ndarray, orbit_set: np.ndarray) -> np.ndarray:
    return np.min(np.linalg.norm(points[:, None, :] - orbit_set[None, :, :], axis=-1), axis=1)


def stability_transfer_check(
    system: SystemSpec,
    cf: ConeField,
    M: ManifoldGraph,
    orbit: OrbitClassification,
    delta: float = 1e-2,
    probes: int = 8,
    T: Optional[float] = None,
    h: Optional[float] = None,
    seed: int = 42,
) -> dict:
    """Compare on-manifold and off-manifold probes started in a delta-ball around the orbit set."""
    if orbit.verdict not in ("stationary", "periodic"):
        raise ValueError("stability transfer needs a stationary or periodic orbit")
    T = T or 10.0 / max(cf.nu0, 1e-3)
    rng = np.random.default_rng(seed)
    reduced = orbit.samples if orbit.samples is not None else orbit.point[None, :]
    orbit_set = M.evaluate(reduced)
    base = orbit_set[rng.integers(len(orbit_set), size=probes)]
    on = M.evaluate(M.chart(base) + delta * rng.uniform(-1.0, 1.0, size=(probes, M.j)))
    off = base + delta * rng.uniform(-1.0, 1.0, size=(probes, system.n))
    try:
        final = flow_batch(system, M.q, np.vstack([on, off]), T, h)
        d_on = _distance_to_set(final[:probes], orbit_set)
        d_off = _distance_to_set(final[probes:], orbit_set)
    except NonFinite:
        d_on = d_off = np.full(probes, math.inf)
    tracking = (1.0 + M.lipschitz_est) * math.sqrt(cf.m_p) / cf.c_q / (1.0 - cf.kappa0) * delta * math.exp(-cf.nu0 * T)
    spacing_error = M.spacing**2
    transfers = float(d_off.max()) <= float(d_on.max()) + tracking + spacing_error + 1e-9
    stable_on = float(d_on.max()) <= delta
    diverged_on = not np.isfinite(d_on.max()) or float(d_on.max()) > 10.0 * delta
    diverged_off = not np.isfinite(d_off.max()) or float(d_off.max()) > 10.0 * delta
    if stable_on and transfers:
        verdict = "stability transfers"
    elif diverged_on and diverged_off:
        verdict = "unstable on both"
    else:
        verdict = "inconsistent"
    return {
        "status": "pass" if verdict != "inconsistent" else "fail",
        "verdict": verdict,
        "max_on_manifold": float(d_on.max()),
        "max_off_manifold": float(d_off.max()),
        "tracking_bound": tracking,
        "delta": delta,
        "T": T,
    }


def robustness_experiment(
    system: SystemSpec,
    cf: ConeField,
    M: ManifoldGraph,
    epsilons: Sequence[float],
    tol: float = 1e-6,
    h: Optional[float] = None,
    threads: int = 1,
    ratio_factor: float = 3.0,
    **build_kwargs,
) -> dict:
    """Rebuild the manifold of system.with_scale(eps) on M's lattice and measure the sup node distance."""

    def one(eps: float) -> float:
        perturbed = system.with_scale(eps)
        report = check_frequency(perturbed, cf.nu0)
        if not report.passed:
            raise CertificateLostAtEpsilon(f"frequency margin {report.margin:.3e} lost at eps={eps:g}", epsilon=eps)
        rebuilt = build_manifold(perturbed, cf, q=M.q, tol=tol, h=h, axes=M.axes, anchor=M.anchor, grid=GridSpec(radius=M.radius), **build_kwargs)
        distance = float(np.max(np.linalg.norm(rebuilt.values - M.values, axis=1)))
        logger.info("robustness eps=%g: sup node distance %.4e", eps, distance)
        return distance

    eps_list = [float(e) for e in epsilons]
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        distances = list(pool.map(one, eps_list))
    order = np.argsort(eps_list)[::-1]
    by_eps = [distances[i] for i in order]
    decreasing = all(a >= b for a, b in zip(by_eps, by_eps[1:]))
    ratios = [d / e for d, e in zip(distances, eps_list) if e > 0]
    bounded = not ratios or max(ratios) <= ratio_factor * max(min(ratios), 1e-300)
    return {
        "status": "pass" if decreasing and bounded else "fail",
        "epsilons": eps_list,
        "distances": distances,
        "ratios": ratios,
        "decreasing": decreasing,
        "ratio_bounded": bounded,
    }
