"""Quadratic cone fields: Riccati synthesis of P through the Hamiltonian stable subspace."""

import json
import logging
import math
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Optional

import numpy as np

from imtk.conditions import count_unstable, rational_transfer_function, sup_on_line
from imtk.errors import (
    HamiltonianEigsOnAxis,
    ImtkError,
    InertiaMismatch,
    XSingular,
)
from imtk.flow import flow_batch
from imtk.linalg import eig_general, invariant_subspace, operator_norm2, symmetric_eigen
from imtk.systems import SystemSpec

logger = logging.getLogger(__name__)

AXIS_TOL = 1e-8
X_RCOND = 1e-12


@dataclass(frozen=True, eq=False)
class ConeField:
    """V(v) = <v, P v> with the splitting E- (+) E+ taken from the spectrum of P."""

    P: np.ndarray
    nu0: float
    delta: float
    basis_minus: np.ndarray
    basis_plus: np.ndarray
    projector: np.ndarray
    c_q: float
    kappa0: float
    tau_p: float = 0.0
    lipschitz: float = 0.0
    riccati_residual: float = 0.0

    @property
    def n(self) -> int:
        return self.P.shape[0]

    @property
    def j(self) -> int:
        return self.basis_minus.shape[1]

    @property
    def m_p(self) -> float:
        return operator_norm2(self.P)

    @property
    def m_pi(self) -> float:
        return operator_norm2(self.projector)

    def value(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        return np.einsum("...i,ij,...j->...", v, self.P, v)

    def minus(self, v) -> np.ndarray:
        return np.asarray(v, dtype=float) @ self.projector.T

    def plus(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        return v - self.minus(v)

    def kappa_value(self, kappa: float, v) -> np.ndarray:
        """V^(kappa)(v) = V(v+) + kappa^2 V(v-)."""
        return self.value(self.plus(v)) + kappa**2 * self.value(self.minus(v))

    def coordinates(self, v) -> np.ndarray:
        """E- chart coordinates zeta = U^T Pi v."""
        return self.minus(v) @ self.basis_minus

    def to_dict(self) -> dict:
        out = {k: (v.tolist() if isinstance(v, np.ndarray) else v) for k, v in asdict(self).items()}
        out.update(j=self.j, m_p=self.m_p, m_pi=self.m_pi)
        return out


def cone_field_from_P(P, nu0: float, delta: float, kappa0: float = 0.9, lipschitz: float = 0.0, riccati_residual: float = 0.0) -> ConeField:
    P = 0.5 * (np.asarray(P, dtype=float) + np.asarray(P, dtype=float).T)
    eig = symmetric_eigen(P)
    w, Q = eig.eigenvalues, eig.eigenvectors
    tol = 1e-12 * max(np.abs(w).max(initial=0.0), 1.0)
    if np.any(np.abs(w) <= tol):
        raise InertiaMismatch("P has a zero eigenvalue")
    neg = w < 0
    # fix the sign of each eigenvector so charts are reproducible
    pivot = np.argmax(np.abs(Q), axis=0)
    Q = Q * np.sign(Q[pivot, np.arange(Q.shape[1])])
    U_minus, U_plus = Q[:, neg], Q[:, ~neg]
    projector = U_minus @ U_minus.T
    c_q = math.sqrt(float(np.abs(w).min()))
    return ConeField(
        P=P,
        nu0=nu0,
        delta=delta,
        basis_minus=U_minus,
        basis_plus=U_plus,
        projector=projector,
        c_q=c_q,
        kappa0=kappa0,
        lipschitz=lipschitz,
        riccati_residual=riccati_residual,
    )


def riccati_hamiltonian(A_nu, B, Q) -> np.ndarray:
    return np.block([[A_nu, B @ B.T], [-Q, -A_nu.T]])


def solve_riccati(A_nu, B, Q) -> np.ndarray:
    """Stabilizing solution of A_nu^T P + P A_nu + P B B^T P + Q = 0."""
    n = A_nu.shape[0]
    H = riccati_hamiltonian(A_nu, B, Q)
    scale = max(np.linalg.norm(H, 2), 1.0)
    eigs = eig_general(H).eigenvalues
    on_axis = np.abs(eigs.real) < AXIS_TOL * scale
    if np.any(on_axis):
        raise HamiltonianEigsOnAxis(f"Hamiltonian has eigenvalues on the imaginary axis: {eigs[on_axis]}")
    S = invariant_subspace(H, lambda lam: lam.real < 0)
    if S.shape[1] != n:
        raise HamiltonianEigsOnAxis(f"stable subspace has dimension {S.shape[1]}, expected {n}")
    X, Y = S[:n], S[n:]
    if n and np.linalg.cond(X) > 1.0 / X_RCOND:
        raise XSingular("graph subspace is degenerate: X is numerically singular")
    P = np.linalg.solve(X.T, Y.T).T
    return 0.5 * (P + P.T)


def lmi_block(A_nu, B, C, P, lipschitz: float, delta: float) -> np.ndarray:
    top = A_nu.T @ P + P @ A_nu + lipschitz**2 * C.T @ C + delta * np.eye(A_nu.shape[0])
    return np.block([[top, P @ B], [B.T @ P, -np.eye(B.shape[1])]])


def delta_scale(system: SystemSpec, nu0: float, lipschitz: float) -> float:
    """(1 - (Lambda sup|W|)^2) / sup|(A_nu - i w)^-1 B|^2, the squared frequency margin scale."""
    sup_w, _, _ = sup_on_line(rational_transfer_function(system.A, system.B, system.C), nu0)
    sup_r, _, _ = sup_on_line(rational_transfer_function(system.A, system.B, np.eye(system.n)), nu0)
    slack = 1.0 - (lipschitz * sup_w) ** 2
    return max(slack, 0.0) / max(sup_r, 1e-300) ** 2


def gronwall_lipschitz(system: SystemSpec, T: float = 1.0) -> float:
    rate = np.linalg.norm(system.A, 2) + system.lipschitz * np.linalg.norm(system.B, 2) * np.linalg.norm(system.C, 2)
    return math.exp(rate * T)


def analytic_kappa(cf: ConeField, L: float, tau_s: float = 0.0, reciprocal: bool = False) -> float:
    """(1 - k^2) M_P M_Pi^2 < (delta/2) e^{-2 nu0 (tau_S + 1)} L^{+-2}, solved for the smallest k."""
    if cf.j == 0:
        return 0.0
    factor = L ** (-2.0 if reciprocal else 2.0)
    rhs = 0.5 * cf.delta * math.exp(-2.0 * abs(cf.nu0) * (tau_s + 1.0)) * factor
    return math.sqrt(max(0.0, 1.0 - rhs / (cf.m_p * cf.m_pi**2)))


def synthesize_P(
    system: SystemSpec,
    nu0: float,
    delta_fraction: float = 0.5,
    lipschitz: Optional[float] = None,
    delta: Optional[float] = None,
) -> ConeField:
    lam = system.lipschitz if lipschitz is None else lipschitz
    count = count_unstable(system.A, nu0)
    A_nu = system.A + nu0 * np.eye(system.n)
    base_Q = lam**2 * system.C.T @ system.C
    if delta is None:
        if not 0.0 < delta_fraction < 1.0:
            raise ValueError("delta_fraction must lie in (0, 1)")
        delta = delta_fraction * delta_scale(system, nu0, lam)

    attempts = 0
    while True:
        try:
            P = solve_riccati(A_nu, system.B, base_Q + delta * np.eye(system.n))
            break
        except (HamiltonianEigsOnAxis, XSingular):
            if delta == 0.0 or attempts >= 20:
                raise
            attempts += 1
            delta *= 0.5
            logger.warning("Riccati synthesis failed, retrying with delta=%.3e", delta)

    residual = A_nu.T @ P + P @ A_nu + P @ system.B @ system.B.T @ P + base_Q + delta * np.eye(system.n)
    block = lmi_block(A_nu, system.B, system.C, P, lam, delta)
    block_max = float(np.linalg.eigvalsh(0.5 * (block + block.T)).max())
    scale = max(np.linalg.norm(block, 2), 1.0)
    if block_max > 1e-8 * scale:
        raise ImtkError(f"LMI block not negative semidefinite: lambda_max = {block_max:.3e}")

    negatives = int(np.sum(np.linalg.eigvalsh(P) < 0))
    if negatives != count.j:
        raise InertiaMismatch(f"P has {negatives} negative eigenvalues, expected j={count.j}")

    cf = cone_field_from_P(P, nu0, delta, lipschitz=lam, riccati_residual=float(np.linalg.norm(residual, 2)))
    kappa = analytic_kappa(cf, gronwall_lipschitz(system), reciprocal=True)
    cf = replace(cf, kappa0=float(np.clip(kappa, 1e-3, 1.0 - 1e-3)))
    logger.info("synthesized P: nu0=%g j=%d delta=%.4g |P|=%.4g", nu0, cf.j, delta, cf.m_p)
    return cf


def estimate_flow_lipschitz(system: SystemSpec, T: float = 1.0, samples: int = 64, radius: float = 5.0, h: Optional[float] = None, seed: int = 42) -> float:
    """Largest observed |psi^T v1 - psi^T v2| / |v1 - v2| over sampled near pairs (at least 1)."""
    rng = np.random.default_rng(seed)
    V1 = rng.normal(scale=radius / 3.0, size=(samples, system.n))
    D = rng.normal(size=(samples, system.n))
    D *= 1e-4 / np.linalg.norm(D, axis=1, keepdims=True)
    out = flow_batch(system, None, np.vstack([V1, V1 + D]), T, h)
    ratio = np.linalg.norm(out[samples:] - out[:samples], axis=1) / 1e-4
    return max(1.0, float(ratio.max()))


def kappa_threshold(
    system: SystemSpec,
    cf: ConeField,
    L: float,
    tau_s: float = 0.0,
    pairs: int = 32,
    horizon: float = 3.0,
    h: Optional[float] = None,
    grid: Optional[np.ndarray] = None,
    radius: float = 5.0,
    seed: int = 42,
) -> dict:
    """Empirical kappa0: scanning down from 1, the lowest grid value above which the
    perturbed inequality holds on the whole trajectory-pair battery. kappa0 is None when
    even the top grid value fails."""
    if L < 1.0:
        raise ValueError("flow Lipschitz constant must be >= 1")
    grid = np.asarray(grid if grid is not None else np.round(np.arange(0.05, 1.0, 0.05), 2))
    rng = np.random.default_rng(seed)
    V1 = rng.normal(scale=radius / 3.0, size=(pairs, system.n))
    V2 = V1 + rng.normal(size=(pairs, system.n))
    times, states = flow_batch(system, None, np.vstack([V1, V2]), horizon, h, record=True)
    D = states[:, pairs:] - states[:, :pairs]
    weight = np.exp(2.0 * cf.nu0 * times)
    energy = weight[:, None] * np.einsum("tki,tki->tk", D, D)
    integral = np.concatenate([np.zeros((1, pairs)), np.cumsum(0.5 * (energy[1:] + energy[:-1]) * np.diff(times)[:, None], axis=0)])
    valid = times >= tau_s + 1.0

    def holds(kappa: float) -> bool:
        Vk = cf.kappa_value(kappa, D)
        lhs = weight[:, None] * Vk - Vk[0][None, :] + 0.5 * cf.delta * integral
        tol = 1e-9 * cf.m_p * (1.0 + np.max(np.abs(weight[:, None] * np.einsum("tki,tki->tk", D, D))))
        return bool(np.all(lhs[valid] <= tol))

    passing = [float(k) for k in sorted(grid, reverse=True) if holds(float(k))]
    kappa0 = None
    for k in sorted(grid, reverse=True):
        if float(k) not in passing:
            break
        kappa0 = float(k)
    result = {
        "status": "success" if kappa0 is not None else "fail",
        "kappa0": kappa0,
        "kappa_one_holds": holds(1.0),
        "analytic_displayed": analytic_kappa(cf, L, tau_s, reciprocal=False),
        "analytic_reciprocal": analytic_kappa(cf, L, tau_s, reciprocal=True),
        "lipschitz_L": L,
    }
    logger.info("kappa battery: kappa0=%s (analytic %.4f / %.4f)", kappa0, result["analytic_displayed"], result["analytic_reciprocal"])
    return result


def clip_constant(cf: ConeField, L: float, alpha_range: tuple = (0.0, 0.0), tau_s: float = 0.0) -> float:
    """C_Lip = (|P| / delta)^(1/2) * L * exp(max|alpha| (tau_S + 1))."""
    if cf.delta <= 0:
        raise ValueError("clip_constant needs delta_P > 0")
    a = max(abs(alpha_range[0]), abs(alpha_range[-1]))
    return math.sqrt(cf.m_p / cf.delta) * L * math.exp(a * (tau_s + 1.0))


def save_cone_field(cf: ConeField, path):
    Path(path).write_text(json.dumps(cf.to_dict(), indent=2) + "\n", encoding="utf-8")


def load_cone_field(path) -> ConeField:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    return cone_field_from_P(
        np.asarray(data["P"]),
        data["nu0"],
        data["delta"],
        kappa0=data["kappa0"],
        lipschitz=data.get("lipschitz", 0.0),
        riccati_residual=data.get("riccati_residual", 0.0),
    )
