"""Graph transform, pullback construction of the inertial manifold, tangents, recharting, nesting."""

import logging
import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Callable, Optional

import numpy as np
from scipy.interpolate import RegularGridInterpolator, griddata
from scipy.linalg import null_space

from imtk.errors import (
    AdmissibilityLost,
    AnchorNotFound,
    ContainmentViolated,
    DimensionError,
    NewtonDiverged,
    NonFinite,
    NotAdmissibleProjector,
    SubspaceStalled,
)
from imtk.flow import drive, flow_batch, flow_tangent_batch
from imtk.linalg import principal_angle
from imtk.synthesis import ConeField
from imtk.systems import SystemSpec

logger = logging.getLogger(__name__)

NEWTON_MAX_ITER = 50
NEWTON_TOL = 1e-10
CHORD_TOL = 1e-10
MAX_PAIR_NODES = 2000


@dataclass(frozen=True)
class GridSpec:
    radius: float = 5.0
    nodes: Optional[int] = None

    def node_count(self, j: int) -> int:
        if self.nodes is not None:
            return int(self.nodes)
        return {0: 1, 1: 41, 2: 15}[j]


@dataclass(frozen=True, eq=False)
class ManifoldGraph:
    """Discrete graph zeta -> Phi(zeta) over a lattice in chart coordinates basis^T Pi v."""

    axes: tuple
    values: np.ndarray
    projector: np.ndarray
    basis: np.ndarray
    radius: float
    anchor: np.ndarray
    q: np.ndarray
    converged: bool = False
    T_used: float = 0.0
    tol: float = 0.0
    lipschitz_est: float = 0.0

    @property
    def j(self) -> int:
        return self.basis.shape[1]

    @property
    def n(self) -> int:
        return self.values.shape[1]

    @property
    def shape(self) -> tuple:
        return tuple(len(a) for a in self.axes)

    @property
    def nodes(self) -> np.ndarray:
        if self.j == 0:
            return np.zeros((1, 0))
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack(mesh, axis=-1).reshape(-1, self.j)

    @property
    def spacing(self) -> float:
        steps = [float(a[1] - a[0]) for a in self.axes if len(a) > 1]
        return max(steps, default=0.0)

    @property
    def lower(self) -> np.ndarray:
        return np.array([a[0] for a in self.axes])

    @property
    def upper(self) -> np.ndarray:
        return np.array([a[-1] for a in self.axes])

    def chart(self, v) -> np.ndarray:
        return np.asarray(v, dtype=float) @ self.projector.T @ self.basis

    @cached_property
    def _interpolator(self):
        grid = self.values.reshape(*self.shape, self.n)
        return RegularGridInterpolator(self.axes, grid, method="linear", bounds_error=False, fill_value=None)

    def evaluate(self, zeta) -> np.ndarray:
        """Phi at arbitrary chart points; linear extrapolation outside the box."""
        zeta = np.asarray(zeta, dtype=float)
        if self.j == 0 or min(self.shape) < 2:
            return np.broadcast_to(self.values[0], zeta.shape[:-1] + (self.n,)).copy()
        return self._interpolator(zeta)

    def contains(self, zeta, margin: float = 0.0) -> np.ndarray:
        zeta = np.atleast_2d(np.asarray(zeta, dtype=float))
        return np.all((zeta >= self.lower - margin) & (zeta <= self.upper + margin), axis=-1)

    def chart_error(self) -> float:
        """max |chart(Phi(zeta)) - zeta| over the nodes."""
        if self.j == 0:
            return 0.0
        return float(np.max(np.abs(self.chart(self.values) - self.nodes)))

    def metadata(self) -> dict:
        return {
            "j": self.j,
            "n": self.n,
            "shape": list(self.shape),
            "radius": self.radius,
            "spacing": self.spacing,
            "anchor": self.anchor.tolist(),
            "q": self.q.tolist(),
            "converged": self.converged,
            "T_used": self.T_used,
            "tol": self.tol,
            "lipschitz_est": self.lipschitz_est,
        }


def make_axes(center, radius: float, nodes: int) -> tuple:
    if nodes == 1:
        return tuple(np.array([c]) for c in center)
    return tuple(np.linspace(c - radius, c + radius, nodes) for c in center)


def empirical_lipschitz(nodes: np.ndarray, values: np.ndarray, seed: int = 42) -> float:
    if len(nodes) < 2:
        return 0.0
    if len(nodes) > MAX_PAIR_NODES:
        pick = np.random.default_rng(seed).choice(len(nodes), MAX_PAIR_NODES, replace=False)
        nodes, values = nodes[pick], values[pick]
    dz = np.linalg.norm(nodes[:, None, :] - nodes[None, :, :], axis=-1)
    dv = np.linalg.norm(values[:, None, :] - values[None, :, :], axis=-1)
    mask = dz > 0
    return float(np.max(dv[mask] / dz[mask]))


def _chords(values: np.ndarray, seed: int = 42) -> np.ndarray:
    if len(values) > MAX_PAIR_NODES:
        pick = np.random.default_rng(seed).choice(len(values), MAX_PAIR_NODES, replace=False)
        values = values[pick]
    i, k = np.triu_indices(len(values), k=1)
    return values[i] - values[k]


def check_admissible(cf: ConeField, M: ManifoldGraph, kappa: Optional[float] = None, strict: bool = False):
    """Chord condition: V^(kappa) <= 0 (or V < 0 when strict) on every node pair."""
    chords = _chords(M.values)
    if len(chords) == 0:
        return
    norm2 = np.einsum("ki,ki->k", chords, chords)
    keep = norm2 > 0
    chords, norm2 = chords[keep], norm2[keep]
    if strict:
        values = cf.value(chords)
        bad = values >= 0
    else:
        values = cf.kappa_value(cf.kappa0 if kappa is None else kappa, chords)
        bad = values > CHORD_TOL * cf.m_p * norm2
    if np.any(bad):
        worst = int(np.argmax(values / norm2))
        raise AdmissibilityLost(
            f"chord leaves the cone: V = {values[worst]:.3e}",
            kappa=kappa if not strict else None,
            count=int(bad.sum()),
        )


def _newton(G: Callable, X0: np.ndarray, targets: np.ndarray, tol: float = NEWTON_TOL, max_iter: int = NEWTON_MAX_ITER) -> np.ndarray:
    """Row-wise damped Newton for G(X) = targets with finite-difference Jacobians."""
    X = np.array(X0, dtype=float, copy=True)
    K, j = X.shape
    if j == 0 or K == 0:
        return X
    scale = tol * (1.0 + np.linalg.norm(targets, axis=1))
    R = G(X) - targets
    for iteration in range(max_iter):
        err = np.linalg.norm(R, axis=1)
        active = np.where(err > scale)[0]
        if active.size == 0:
            return X
        Xa, Ra = X[active], R[active]
        eps = 1e-7 * np.maximum(1.0, np.abs(Xa).max(axis=1))
        shifted = np.concatenate([Xa + eps[:, None] * np.eye(j)[i] for i in range(j)])
        images = G(np.concatenate([Xa, shifted]))
        base = images[: len(active)]
        J = np.stack([(images[(i + 1) * len(active) : (i + 2) * len(active)] - base) / eps[:, None] for i in range(j)], axis=-1)
        try:
            step = np.linalg.solve(J, Ra[..., None])[..., 0]
        except np.linalg.LinAlgError:
            raise NewtonDiverged("singular Jacobian in reduced Newton", node=int(active[0]))
        lam = np.ones(len(active))
        pending = np.arange(len(active))
        new_X, new_R = Xa.copy(), Ra.copy()
        for _ in range(8):
            trial = Xa[pending] - lam[pending, None] * step[pending]
            Rt = G(trial) - targets[active[pending]]
            better = np.linalg.norm(Rt, axis=1) < np.linalg.norm(Ra[pending], axis=1)
            new_X[pending[better]] = trial[better]
            new_R[pending[better]] = Rt[better]
            pending = pending[~better]
            if pending.size == 0:
                break
            lam[pending] *= 0.5
        if pending.size:
            new_X[pending] = Xa[pending] - lam[pending, None] * step[pending]
            new_R[pending] = G(new_X[pending]) - targets[active[pending]]
        X[active], R[active] = new_X, new_R
        logger.debug("newton iteration %d: %d active rows, max residual %.3e", iteration, active.size, float(err.max()))
    err = np.linalg.norm(R, axis=1)
    bad = np.where(err > scale)[0]
    if bad.size:
        raise NewtonDiverged(f"reduced Newton did not converge in {max_iter} iterations", node=int(bad[0]))
    return X


def _linear_predictor(G: Callable, center: np.ndarray, targets: np.ndarray) -> np.ndarray:
    j = center.shape[0]
    eps = 1e-6 * max(1.0, float(np.abs(center).max(initial=0.0)))
    images = G(np.vstack([center, center + eps * np.eye(j)]))
    J = (images[1:] - images[0]).T / eps
    try:
        return center + np.linalg.solve(J, (targets - images[0]).T).T
    except np.linalg.LinAlgError:
        return np.tile(center, (len(targets), 1))


def _flowed_chart(system, M_chart, q, t, h, evaluate):
    def G(X):
        return M_chart(flow_batch(system, q, evaluate(X), t, h))

    return G


def plane_graph(cf: ConeField, anchor, q, axes: tuple, radius: float) -> ManifoldGraph:
    """The affine plane anchor + E- sampled on the given lattice of the cf chart."""
    anchor = np.asarray(anchor, dtype=float)
    center = cf.coordinates(anchor)
    probe = ManifoldGraph(axes=axes, values=np.zeros((1, cf.n)), projector=cf.projector, basis=cf.basis_minus, radius=radius, anchor=anchor, q=np.atleast_1d(q))
    values = anchor + (probe.nodes - center) @ cf.basis_minus.T
    return replace(probe, values=values)


def graph_transform_step(
    system: SystemSpec,
    cf: ConeField,
    M: ManifoldGraph,
    q=None,
    t: float = 1.0,
    guess: Optional[np.ndarray] = None,
    h: Optional[float] = None,
    check_input: bool = True,
) -> ManifoldGraph:
    """Push M forward by psi^t(q, .) and re-sample the image on M's lattice over theta^t(q)."""
    if t < cf.tau_p:
        raise ValueError(f"transform time {t} below the certificate lag {cf.tau_p}")
    q = M.q if q is None else np.atleast_1d(np.asarray(q, dtype=float))
    if check_input:
        check_admissible(cf, M)
    targets = M.nodes
    G = _flowed_chart(system, M.chart, q, t, h, M.evaluate)
    if guess is None:
        center = M.chart(M.anchor) if M.j else np.zeros(0)
        guess = _linear_predictor(G, center, targets) if M.j else np.zeros((1, 0))
    eta = _newton(G, guess, targets)
    values = flow_batch(system, q, M.evaluate(eta), t, h)
    out = replace(
        M,
        values=values,
        q=drive(system.forcing, q, t),
        lipschitz_est=empirical_lipschitz(targets, values),
    )
    check_admissible(cf, out, strict=True)
    return out


def find_anchor(system: SystemSpec, q=None, tol: float = 1e-10, max_iter: int = 50, bound_horizon: float = 10.0) -> np.ndarray:
    """Equilibrium of the frozen right-hand side by damped Newton; origin when the flow stays bounded."""
    q = system.forcing.initial_state() if q is None else np.atleast_1d(q)
    v = np.zeros(system.n)
    f = system.rhs(q, v)
    for _ in range(max_iter):
        if np.linalg.norm(f) <= tol:
            logger.info("anchor equilibrium found at |v|=%.3g", float(np.linalg.norm(v)))
            return v
        if system.nonlinearity.has_derivative:
            J = system.jacobian(q, v)
        else:
            J = np.column_stack([(system.rhs(q, v + 1e-7 * e) - f) / 1e-7 for e in np.eye(system.n)])
        try:
            step = np.linalg.solve(J, f)
        except np.linalg.LinAlgError:
            break
        lam = 1.0
        while lam > 1e-4:
            trial = v - lam * step
            f_trial = system.rhs(q, trial)
            if np.linalg.norm(f_trial) < np.linalg.norm(f):
                v, f = trial, f_trial
                break
            lam *= 0.5
        else:
            break
    try:
        states = flow_batch(system, q, np.zeros((1, system.n)), bound_horizon)
    except NonFinite:
        states = None
    if states is not None and np.all(np.abs(states) < 1e6):
        logger.warning("anchor Newton failed; falling back to the origin")
        return np.zeros(system.n)
    raise AnchorNotFound("no equilibrium found and the flow from the origin is unbounded")


def build_manifold(
    system: SystemSpec,
    cf: ConeField,
    q=None,
    grid: GridSpec = GridSpec(),
    T_max: Optional[float] = None,
    tol: float = 1e-6,
    T0: Optional[float] = None,
    h: Optional[float] = None,
    anchor=None,
    allow_nonpositive_nu: bool = False,
    axes: Optional[tuple] = None,
) -> ManifoldGraph:
    if cf.j > 2:
        raise DimensionError(f"manifold grids support j <= 2, got j={cf.j}")
    if cf.nu0 <= 0 and not allow_nonpositive_nu:
        raise ValueError("build_manifold needs a certificate with nu0 > 0")
    q = system.forcing.initial_state() if q is None else np.atleast_1d(np.asarray(q, dtype=float))
    anchor = find_anchor(system, q) if anchor is None else np.asarray(anchor, dtype=float)
    T0 = T0 or max(2.0 / max(abs(cf.nu0), 1e-3), cf.tau_p)
    T_max = T_max or 20.0 * T0
    if T_max < cf.tau_p:
        raise ValueError(f"T_max={T_max} is below the certificate lag {cf.tau_p}")
    T0 = min(T0, T_max)
    if axes is None:
        axes = make_axes(cf.coordinates(anchor), grid.radius, grid.node_count(cf.j))

    previous = None
    theta = T0
    while theta <= T_max * (1.0 + 1e-12):
        q_start = drive(system.forcing, q, -theta)
        plane = plane_graph(cf, anchor, q_start, axes, grid.radius)
        current = graph_transform_step(system, cf, plane, q_start, theta, h=h, check_input=False)
        if previous is not None:
            change = float(np.max(np.abs(current.values - previous.values)))
            logger.debug("pullback theta=%.3g: sup node change %.3e", theta, change)
            if change < tol:
                logger.info("manifold converged at theta=%.3g (j=%d, %d nodes)", theta, cf.j, len(current.values))
                return replace(current, converged=True, T_used=theta, tol=tol, q=q)
        previous = current
        last = theta
        theta += T0
    logger.warning("manifold pullback did not reach tol=%.1e by T_max=%.3g", tol, T_max)
    return replace(previous, converged=False, T_used=last, tol=tol, q=q)


def invariance_residual(system: SystemSpec, cf: ConeField, M: ManifoldGraph, t: float = 1.0, target: Optional[ManifoldGraph] = None, h: Optional[float] = None) -> dict:
    """sup over interior nodes of |psi^t(Phi(zeta)) - Phi_target(chart(psi^t(Phi(zeta))))|."""
    if target is None:
        if not system.autonomous:
            raise ValueError("a target graph over theta^t(q) is needed for driven systems")
        target = M
    images = flow_batch(system, M.q, M.values, t, h)
    zeta = target.chart(images)
    margin = -target.spacing
    inside = target.contains(zeta, margin=margin) if target.j else np.ones(len(images), dtype=bool)
    if not np.any(inside):
        return {"status": "fail", "t": t, "residual": math.inf, "checked": 0}
    dist = np.linalg.norm(images[inside] - target.evaluate(zeta[inside]), axis=1)
    residual = float(dist.max())
    bound = 5.0 * max(M.tol, 1e-12)
    return {"status": "pass" if residual <= bound else "fail", "t": t, "residual": residual, "bound": bound, "checked": int(inside.sum())}


@dataclass(frozen=True, eq=False)
class TangentField:
    bases: np.ndarray
    theta_used: float
    fd_angles: Optional[np.ndarray] = None
    tolerance: float = 1e-3
    converged: bool = True
    extra: dict = field(default_factory=dict)

    @property
    def fd_max_angle(self) -> float:
        return float(np.max(self.fd_angles)) if self.fd_angles is not None and self.fd_angles.size else 0.0

    @property
    def validated(self) -> Optional[bool]:
        if self.fd_angles is None:
            return None
        return self.fd_max_angle <= self.tolerance

    def inside_cone(self, cf: ConeField) -> bool:
        gram = np.einsum("kij,il,klm->kjm", self.bases, cf.P, self.bases)
        return bool(np.all(np.linalg.eigvalsh(gram).max(axis=-1) < 0))

    def chart_invertible(self, M: ManifoldGraph) -> bool:
        image = np.einsum("ij,il,klm->kjm", M.basis, M.projector, self.bases)
        return bool(np.all(np.abs(np.linalg.det(image)) > 1e-10))


def _pullback_points(system, cf: ConeField, M: ManifoldGraph, theta: float, h) -> np.ndarray:
    q_start = drive(system.forcing, M.q, -theta)
    plane = plane_graph(cf, M.anchor, q_start, M.axes, M.radius)
    G = _flowed_chart(system, M.chart, q_start, theta, h, plane.evaluate)
    center = plane.chart(M.anchor)
    guess = _linear_predictor(G, center, M.nodes)
    return plane.evaluate(_newton(G, guess, M.nodes)), q_start


def fd_tangents(M: ManifoldGraph) -> Optional[np.ndarray]:
    if M.j == 0 or min(M.shape) < 2:
        return None
    grid = M.values.reshape(*M.shape, M.n)
    derivs = [np.gradient(grid, M.axes[k], axis=k) for k in range(M.j)]
    return np.stack(derivs, axis=-1).reshape(-1, M.n, M.j)


def build_tangents(system: SystemSpec, cf: ConeField, M: ManifoldGraph, T_max: Optional[float] = None, tol: float = 1e-6, h: Optional[float] = None) -> TangentField:
    K, j = len(M.values), M.j
    if j == 0:
        return TangentField(bases=np.zeros((K, M.n, 0)), theta_used=0.0)
    T0 = max(2.0 / max(abs(cf.nu0), 1e-3), 1.0)
    T_max = T_max or max(20.0 * T0, M.T_used)
    previous = None
    theta = T0
    bases = None
    while theta <= T_max * (1.0 + 1e-12):
        V, q_start = _pullback_points(system, cf, M, theta, h)
        S = np.broadcast_to(cf.basis_minus, (K, M.n, j)).copy()
        chunks = max(int(math.ceil(theta)), 1)
        dt = theta / chunks
        for c in range(chunks):
            V, S = flow_tangent_batch(system, drive(system.forcing, q_start, c * dt), V, S, dt, h)
            S = np.linalg.qr(S)[0]
        bases = S
        if previous is not None:
            change = max(principal_angle(previous[k], bases[k]) for k in range(K))
            logger.debug("tangent pullback theta=%.3g: max angle change %.3e", theta, change)
            if change < tol:
                break
        previous = bases
        theta += T0
    else:
        raise SubspaceStalled(f"tangent subspaces still moving at T_max={T_max:.3g}")

    tolerance = max(1e-3, 5.0 * M.spacing**2)
    fd = fd_tangents(M)
    angles = None
    if fd is not None:
        angles = np.array([principal_angle(fd[k], bases[k]) for k in range(K)])
        if angles.max() > tolerance:
            logger.warning("tangent cross-check: max angle %.3e above %.3e", angles.max(), tolerance)
    return TangentField(bases=bases, theta_used=theta, fd_angles=angles, tolerance=tolerance)


def _range_basis(projector: np.ndarray, reference: np.ndarray) -> np.ndarray:
    Q, R = np.linalg.qr(projector @ reference)
    signs = np.sign(np.diag(R))
    signs[signs == 0] = 1.0
    return Q * signs, np.abs(np.diag(R))


def check_projector(cf: ConeField, projector, reference: Optional[np.ndarray] = None) -> np.ndarray:
    """(AP1) V < 0 on the range (dim j) and (AP2) V > 0 on the kernel. Returns a range basis."""
    projector = np.asarray(projector, dtype=float)
    if np.linalg.norm(projector @ projector - projector) > 1e-8 * max(1.0, np.linalg.norm(projector)):
        raise NotAdmissibleProjector("matrix is not idempotent", violating="idempotence")
    rank = int(round(float(np.trace(projector))))
    if rank != cf.j:
        raise NotAdmissibleProjector(f"projector rank {rank} differs from j={cf.j}", violating="rank")
    if cf.j == 0:
        U = np.zeros((cf.n, 0))
    else:
        U, diag = _range_basis(projector, cf.basis_minus if reference is None else reference)
        if np.any(diag < 1e-10):
            U = np.linalg.svd(projector)[0][:, : cf.j]
    if cf.j and np.linalg.eigvalsh(U.T @ cf.P @ U).max() >= 0:
        raise NotAdmissibleProjector("V is not negative on the range", violating="range")
    kernel = null_space(projector, rcond=1e-10)
    if kernel.shape[1] and np.linalg.eigvalsh(kernel.T @ cf.P @ kernel).min() <= 0:
        raise NotAdmissibleProjector("V is not positive on the kernel", violating="kernel")
    return U


def rechart(M: ManifoldGraph, projector, cf: ConeField) -> ManifoldGraph:
    """Re-index M over range(projector) in the coordinates U_alt^T projector v."""
    projector = np.asarray(projector, dtype=float)
    U = check_projector(cf, projector, reference=M.basis)
    if M.j == 0:
        return replace(M, projector=projector, basis=U)
    image = M.values @ projector.T @ U
    center = M.anchor @ projector.T @ U
    lo, hi = image.min(axis=0), image.max(axis=0)
    half = 0.5 * (hi - lo) if M.j == 1 else 0.25 * (hi - lo)
    mid = 0.5 * (hi + lo) if M.j == 1 else center
    count = M.shape[0]
    axes = tuple(np.linspace(mid[k] - half[k], mid[k] + half[k], count) for k in range(M.j))
    draft = replace(M, axes=axes, values=np.zeros((1, M.n)), projector=projector, basis=U)
    targets = draft.nodes
    if M.j == 1:
        order = np.argsort(image[:, 0])
        guess = np.interp(targets[:, 0], image[order, 0], M.nodes[order, 0])[:, None]
    else:
        guess = griddata(image, M.nodes, targets, method="linear")
        holes = np.isnan(guess).any(axis=1)
        if np.any(holes):
            guess[holes] = griddata(image, M.nodes, targets[holes], method="nearest")

    def G(Z):
        return M.evaluate(Z) @ projector.T @ U

    zeta = _newton(G, guess, targets)
    values = M.evaluate(zeta)
    return replace(draft, values=values, lipschitz_est=empirical_lipschitz(targets, values))


def build_nested(
    system: SystemSpec,
    cf_outer: ConeField,
    cf_inner: ConeField,
    grid_outer: GridSpec = GridSpec(),
    grid_inner: GridSpec = GridSpec(),
    tol: float = 1e-6,
    h: Optional[float] = None,
    **kwargs,
) -> tuple:
    """Build the j1- and j2-dimensional manifolds and check the inner one lies on the outer."""
    if cf_outer.n != system.n or cf_inner.n != system.n:
        raise DimensionError("both certificates must belong to the same system")
    if cf_inner.j > cf_outer.j:
        raise DimensionError(f"inner dimension {cf_inner.j} exceeds outer dimension {cf_outer.j}")
    anchor = find_anchor(system)
    outer = build_manifold(system, cf_outer, grid=grid_outer, tol=tol, h=h, anchor=anchor, allow_nonpositive_nu=True, **kwargs)
    inner = build_manifold(system, cf_inner, grid=grid_inner, tol=tol, h=h, anchor=anchor, allow_nonpositive_nu=True, **kwargs)
    zeta = outer.chart(inner.values)
    inside = outer.contains(zeta) if outer.j else np.ones(len(inner.values), dtype=bool)
    dist = np.full(len(inner.values), np.nan)
    dist[inside] = np.linalg.norm(inner.values[inside] - outer.evaluate(zeta[inside]), axis=1)
    report = {
        "status": "pass",
        "j_outer": cf_outer.j,
        "j_inner": cf_inner.j,
        "checked": int(inside.sum()),
        "outside": int((~inside).sum()),
        "max_distance": float(np.nanmax(dist)) if inside.any() else 0.0,
        "tol": tol,
    }
    if inside.any() and report["max_distance"] > tol:
        worst = int(np.nanargmax(dist))
        raise ContainmentViolated(f"inner node {worst} is {dist[worst]:.3e} off the outer manifold", node=worst, distance=float(dist[worst]))
    return outer, inner, report
