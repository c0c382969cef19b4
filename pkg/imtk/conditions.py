"""Existence certificates: frequency inequality, spectral gap, small delays, sampled (SCP1)."""

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.optimize import minimize_scalar

from imtk.errors import (
    DegenerateGap,
    DimensionError,
    KappaExceedsOne,
    OnDichotomyLine,
    TailUnbounded,
)
from imtk.flow import integrate_variational
from imtk.linalg import as_matrix, eig_general, operator_norm2, solve_linear
from imtk.systems import DelaySpec, GalerkinSpec, SystemSpec

logger = logging.getLogger(__name__)

STRICT_MARGIN = 1e-9
DICHOTOMY_TOL = 1e-8


@dataclass
class ConditionReport:
    kind: str
    passed: bool
    margin: float
    nu0: float
    j: int = 0
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "pass": self.passed,
            "margin": self.margin,
            "nu0": self.nu0,
            "j": self.j,
            **self.diagnostics,
        }


def _verdict(margin: float) -> bool:
    return margin > STRICT_MARGIN


@dataclass(frozen=True)
class UnstableCount:
    j: int
    gap: float
    eigenvalues: np.ndarray


def count_unstable(A, nu0: float) -> UnstableCount:
    A = as_matrix(A)
    eig = eig_general(A).eigenvalues
    distance = np.abs(eig.real + nu0)
    tol = DICHOTOMY_TOL * max(1.0, np.linalg.norm(A, 2))
    if distance.size and distance.min() < tol:
        raise OnDichotomyLine(f"eigenvalue {eig[np.argmin(distance)]} lies on Re p = {-nu0}")
    j = int(np.sum(eig.real > -nu0))
    return UnstableCount(j=j, gap=float(distance.min()) if distance.size else math.inf, eigenvalues=eig)


@dataclass(frozen=True, eq=False)
class TransferFunction:
    """p -> W(p) as an r x m complex matrix."""

    evaluate: Callable[[complex], np.ndarray]
    kind: str
    tail: Callable[[float, float], float]
    scale: float

    def __call__(self, p: complex) -> np.ndarray:
        return self.evaluate(p)

    def norm_on_line(self, nu0: float, omega: float) -> float:
        return operator_norm2(self.evaluate(complex(-nu0, omega)))


def rational_transfer_function(A, B, C) -> TransferFunction:
    """W(p) = C (A - pI)^-1 B."""
    A, B, C = as_matrix(A), as_matrix(B), as_matrix(C)
    n = A.shape[0]
    I = np.eye(n)
    norm_A, norm_B, norm_C = (np.linalg.norm(X, 2) for X in (A, B, C))
    rho = float(np.max(np.abs(eig_general(A).eigenvalues))) if n else 0.0

    def evaluate(p: complex) -> np.ndarray:
        return C @ solve_linear(A.astype(complex) - p * I, B.astype(complex))

    def tail(omega: float, nu0: float) -> float:
        denom = abs(omega) - norm_A - abs(nu0)
        return math.inf if denom <= 0 else norm_C * norm_B / denom

    return TransferFunction(evaluate=evaluate, kind="rational", tail=tail, scale=rho)


def delay_transfer_function(spec: DelaySpec, neutral_taps: tuple = ()) -> TransferFunction:
    """W(p) = gamma(p) (alpha(p) - pI - p delta(p))^-1 b for discrete taps."""
    n = spec.n
    I = np.eye(n)
    b = spec.b.astype(complex)
    out_taps = spec.output_taps or ((0.0, np.eye(n)),)

    def alpha(p):
        return spec.a0 + sum(np.exp(-p * th) * M for th, M in spec.linear_taps)

    def delta(p):
        return sum((np.exp(-p * th) * M for th, M in neutral_taps), np.zeros((n, n)))

    def gamma(p):
        return sum(np.exp(-p * th) * M for th, M in out_taps)

    def evaluate(p: complex) -> np.ndarray:
        return gamma(p) @ solve_linear(alpha(p) - p * I - p * delta(p), b)

    def tail(omega: float, nu0: float) -> float:
        weight = lambda taps: sum(np.linalg.norm(M, 2) * math.exp(nu0 * th) for th, M in taps)
        kappa = weight(neutral_taps)
        if kappa >= 1.0:
            raise TailUnbounded(f"neutral part has gain {kappa:.4g} >= 1 on the line")
        alpha_norm = np.linalg.norm(spec.a0, 2) + weight(spec.linear_taps) + abs(nu0)
        denom = (1.0 - kappa) * abs(omega) - alpha_norm
        return math.inf if denom <= 0 else weight(out_taps) * np.linalg.norm(spec.b, 2) / denom

    scale = np.linalg.norm(spec.a0, 2) + sum(np.linalg.norm(M, 2) for _, M in spec.linear_taps) + 1.0 / spec.tau
    return TransferFunction(evaluate=evaluate, kind="delay", tail=tail, scale=float(scale))


def sup_on_line(tf: TransferFunction, nu0: float, omega_max: Optional[float] = None, peaks: tuple = ()) -> tuple[float, float, float]:
    """sup_omega |W(-nu0 + i omega)| as (sup, argmax, tail bound beyond omega_max)."""
    if omega_max is None:
        omega_max = 1e3 * (tf.scale + abs(nu0) + 1.0)
    for _ in range(30):
        tail = tf.tail(omega_max, nu0)
        if math.isfinite(tail):
            break
        omega_max *= 2.0
    else:
        raise TailUnbounded(f"no decay certificate up to omega = {omega_max:.3g}")

    positive = np.geomspace(1e-4, omega_max, 1200)
    extra = np.abs(np.asarray([p for p in peaks if abs(p) < omega_max], dtype=float))
    grid = np.unique(np.concatenate([-positive, [0.0], positive, extra, -extra]))
    values = np.array([tf.norm_on_line(nu0, w) for w in grid])

    best, best_omega = float(values.max()), float(grid[np.argmax(values)])
    local = [i for i in range(len(grid)) if values[i] > 0 and values[i] >= values[max(i - 1, 0)] and values[i] >= values[min(i + 1, len(grid) - 1)]]
    local = sorted(local, key=lambda i: -values[i])[:20]
    for i in local:
        lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, len(grid) - 1)]
        if hi <= lo:
            continue
        res = minimize_scalar(
            lambda w: -tf.norm_on_line(nu0, w),
            bounds=(lo, hi),
            method="bounded",
            options={"xatol": 1e-4 * max(abs(grid[i]), 1e-3)},
        )
        if -res.fun > best:
            best, best_omega = float(-res.fun), float(res.x)
    logger.debug("sweep nu0=%g: sup=%.12g at omega=%.6g (tail %.3g)", nu0, best, best_omega, tail)
    return best, best_omega, tail


def frequency_sweep(
    tf: TransferFunction,
    nu0: float,
    lipschitz: float,
    omega_max: Optional[float] = None,
    j: int = 0,
    peaks: tuple = (),
) -> ConditionReport:
    sup, argmax, tail = sup_on_line(tf, nu0, omega_max, peaks)
    sup_total = max(sup, tail)
    bound = math.inf if lipschitz == 0 else 1.0 / lipschitz
    margin = bound - sup_total
    return ConditionReport(
        kind="frequency",
        passed=_verdict(margin),
        margin=margin,
        nu0=nu0,
        j=j,
        diagnostics={"sup": sup_total, "worst_omega": argmax, "tail_bound": tail, "tf_kind": tf.kind},
    )


def check_frequency(system: SystemSpec, nu0: float, lipschitz: Optional[float] = None, omega_max: Optional[float] = None) -> ConditionReport:
    """Rational sweep for a system, with the unstable count attached."""
    count = count_unstable(system.A, nu0)
    tf = rational_transfer_function(system.A, system.B, system.C)
    peaks = tuple(abs(ev.imag) for ev in count.eigenvalues)
    lam = system.lipschitz if lipschitz is None else lipschitz
    report = frequency_sweep(tf, nu0, lam, omega_max, j=count.j, peaks=peaks)
    report.diagnostics["gap_distance"] = count.gap
    return report


def spectral_gap(spec: GalerkinSpec, j: int, lipschitz: float) -> ConditionReport:
    lam = spec.eigenvalues
    if not 1 <= j < spec.N:
        raise DimensionError(f"need 1 <= j < N, got j={j}, N={spec.N}")
    lo, hi = float(lam[j - 1]), float(lam[j])
    if hi == lo:
        raise DegenerateGap(f"lambda_{j} = lambda_{j + 1} = {lo}")
    e = spec.alpha - spec.beta
    w_lo, w_hi = lo**e, hi**e
    lhs = (hi - lo) / (w_lo + w_hi)
    nu0 = (w_lo * hi + w_hi * lo) / (w_lo + w_hi)
    assert lo < nu0 < hi
    margin = lhs - lipschitz
    return ConditionReport(
        kind="spectral-gap",
        passed=_verdict(margin),
        margin=margin,
        nu0=nu0,
        j=j,
        diagnostics={"lhs": lhs, "lambda_j": lo, "lambda_j1": hi, "worst_index": j},
    )


def small_delay_check(spec: DelaySpec, r: int, lipschitz: float, nu0: float) -> ConditionReport:
    if nu0 <= 0:
        raise ValueError("small_delay_check needs nu0 > 0")
    growth = math.exp(spec.tau * nu0)
    kappa = growth * spec.d0_norm
    if kappa >= 1.0:
        raise KappaExceedsOne(f"kappa(nu0) = {kappa:.6g} >= 1")
    lhs = math.sqrt(r) * growth / nu0 / (1.0 - kappa)
    bound = math.inf if lipschitz == 0 else 1.0 / lipschitz
    margin = bound - lhs
    return ConditionReport(
        kind="small-delay",
        passed=_verdict(margin),
        margin=margin,
        nu0=nu0,
        diagnostics={"kappa": kappa, "lhs": lhs},
    )


def small_delay_threshold(r: int, lipschitz: float) -> float:
    """Largest tau passing the D0 = 0, nu0 = 1/tau form sqrt(r) e tau < 1/Lambda."""
    return 1.0 / (math.e * math.sqrt(r) * lipschitz)


def scp_sampled_check(
    system: SystemSpec,
    cf,
    alpha_band: Optional[tuple] = None,
    samples: int = 20,
    horizon: float = 5.0,
    h: Optional[float] = None,
    delta: Optional[float] = None,
    radius: float = 5.0,
    seed: int = 42,
    initial: Optional[np.ndarray] = None,
) -> ConditionReport:
    """Check dV(xi)/dt + 2 alpha V(xi) <= -delta |xi|^2 along variational trajectories.

    On each grid time the best alpha in the band is an endpoint, so feasibility
    reduces to the achievable decay rate s(t) = max_alpha -(dV + 2 alpha V)/|xi|^2 >= delta.
    """
    lo, hi = alpha_band or (cf.nu0, cf.nu0)
    d_req = cf.delta / 2.0 if delta is None else delta
    rng = np.random.default_rng(seed)
    n = system.n
    worst_rate, worst_sample, worst_time = math.inf, -1, 0.0
    degenerate = 0
    for k in range(samples):
        v0 = rng.normal(scale=radius / 3.0, size=n)
        xi0 = rng.normal(size=n) if initial is None else np.asarray(initial, dtype=float)
        var = integrate_variational(system, None, v0, horizon, h)
        xi = var.propagate(xi0)
        norm2 = np.einsum("ti,ti->t", xi, xi)
        if np.all(norm2 == 0.0):
            degenerate += 1
            continue
        J = system.jacobian(None, var.base.states)
        Pxi = xi @ cf.P
        V = np.einsum("ti,ti->t", xi, Pxi)
        dV = 2.0 * np.einsum("ti,tij,tj->t", Pxi, J, xi)
        ok = norm2 > 0
        rate = np.full(len(norm2), math.inf)
        rate[ok] = -(dV[ok] + 2.0 * np.minimum(lo * V[ok], hi * V[ok])) / norm2[ok]
        i = int(np.argmin(rate))
        if rate[i] < worst_rate:
            worst_rate, worst_sample, worst_time = float(rate[i]), k, float(var.base.times[i])
    if worst_sample < 0:
        # xi == 0 everywhere: 0 <= 0 holds and no rate is constrained
        return ConditionReport(kind="scp-sampled", passed=True, margin=math.inf, nu0=cf.nu0, j=cf.j, diagnostics={"degenerate": True, "worst_sample": -1})
    margin = worst_rate - d_req
    return ConditionReport(
        kind="scp-sampled",
        passed=_verdict(margin),
        margin=margin,
        nu0=cf.nu0,
        j=cf.j,
        diagnostics={"worst_sample": worst_sample, "worst_time": worst_time, "delta_required": d_req, "degenerate_samples": degenerate},
    )
