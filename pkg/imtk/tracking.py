"""Central projector, exponential tracking, vertical leaves and the inertial form."""

import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from imtk.errors import LeftGrid, NoConvergence, UnsupportedDriving
from imtk.flow import flow_batch
from imtk.manifold import GridSpec, ManifoldGraph, _newton, build_manifold
from imtk.synthesis import ConeField
from imtk.systems import SystemSpec

logger = logging.getLogger(__name__)

BOX_SLACK = 1e-9


@dataclass(frozen=True, eq=False)
class InertialForm:
    """Reduced field zeta' = f(zeta) sampled on a lattice, linear (j=1) or bilinear (j=2) in between."""

    axes: tuple
    values: np.ndarray
    h: float = 1e-2
    graph: Optional[ManifoldGraph] = None

    @property
    def j(self) -> int:
        return len(self.axes)

    @property
    def lower(self) -> np.ndarray:
        return np.array([a[0] for a in self.axes])

    @property
    def upper(self) -> np.ndarray:
        return np.array([a[-1] for a in self.axes])

    @cached_property
    def _interpolator(self):
        shape = tuple(len(a) for a in self.axes)
        return RegularGridInterpolator(self.axes, self.values.reshape(*shape, self.j), method="linear")

    def contains(self, zeta) -> np.ndarray:
        zeta = np.atleast_2d(zeta)
        return np.all((zeta >= self.lower - BOX_SLACK) & (zeta <= self.upper + BOX_SLACK), axis=-1)

    def __call__(self, zeta) -> np.ndarray:
        zeta = np.asarray(zeta, dtype=float)
        if self.j == 0:
            return np.zeros_like(zeta)
        flat = np.atleast_2d(zeta)
        if not np.all(self.contains(flat)):
            raise LeftGrid(f"reduced state {flat[~self.contains(flat)][0]} outside the grid box")
        out = self._interpolator(np.clip(flat, self.lower, self.upper))
        return out.reshape(zeta.shape)

    @classmethod
    def from_function(cls, func: Callable, lower, upper, nodes: int = 201, h: float = 1e-2) -> "InertialForm":
        """Sample an explicit field func(zeta) -> zeta' on a box."""
        lower, upper = np.atleast_1d(lower).astype(float), np.atleast_1d(upper).astype(float)
        axes = tuple(np.linspace(lo, hi, nodes) for lo, hi in zip(lower, upper))
        mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(axes))
        values = np.asarray(func(mesh), dtype=float).reshape(-1, len(axes))
        return cls(axes=axes, values=values, h=h)


@dataclass(frozen=True, eq=False)
class ReducedTrajectory:
    times: np.ndarray
    states: np.ndarray

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]


def extract_inertial_form(system: SystemSpec, cf: ConeField, M: ManifoldGraph, h: Optional[float] = None) -> InertialForm:
    """f(zeta) = chart(A Phi + B F(C Phi) + W(q)) at every node."""
    if not M.converged:
        logger.warning("extracting an inertial form from an unconverged manifold")
    values = M.chart(system.rhs(M.q, M.values))
    return InertialForm(axes=M.axes, values=values, h=h or min(1e-2, 10 * system.default_step()), graph=M)


def integrate_reduced(form: InertialForm, zeta0, T: float, h: Optional[float] = None) -> ReducedTrajectory:
    """RK4 on the interpolated field; negative T integrates backward."""
    zeta = np.atleast_1d(np.asarray(zeta0, dtype=float))
    step = h or form.h
    steps = max(int(math.ceil(abs(T) / step - 1e-9)), 1) if T else 0
    dt = T / steps if steps else 0.0
    history = [zeta.copy()]
    for _ in range(steps):
        k1 = form(zeta)
        k2 = form(zeta + 0.5 * dt * k1)
        k3 = form(zeta + 0.5 * dt * k2)
        k4 = form(zeta + dt * k3)
        zeta = zeta + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        history.append(zeta.copy())
    times = np.linspace(0.0, T, steps + 1) if steps else np.zeros(1)
    return ReducedTrajectory(times=times, states=np.stack(history))


@dataclass
class TrackingResult:
    v0: np.ndarray
    v0_star: np.ndarray
    thetas: list = field(default_factory=list)
    residuals: list = field(default_factory=list)
    converged: bool = False
    decay_exponent: Optional[float] = None
    R_estimate: Optional[float] = None

    def to_dict(self) -> dict:
        return {
            "v0": self.v0.tolist(),
            "v0_star": self.v0_star.tolist(),
            "thetas": list(self.thetas),
            "residuals": list(self.residuals),
            "converged": self.converged,
            "decay_exponent": self.decay_exponent,
            "R_estimate": self.R_estimate,
        }


def default_schedule(nu0: float) -> list:
    return [k / nu0 for k in range(2, 41, 2)]


def _backward_on_manifold(system, M: ManifoldGraph, form: Optional[InertialForm], zeta_theta, theta: float, h, guess):
    """Shoot from the fibre over q so that the chart of the flowed point lands on zeta_theta.
    The inertial form, when given, only supplies the starting guess."""
    if not system.autonomous and system.forcing.mode != "periodic":
        raise UnsupportedDriving("central projection over quasiperiodic driving is not supported")
    zeta_theta = np.atleast_2d(zeta_theta)
    guess = np.atleast_2d(guess)
    if form is not None:
        try:
            predicted = np.atleast_2d(integrate_reduced(form, zeta_theta[0], -theta).final)
            if M.contains(predicted)[0]:
                guess = predicted
        except LeftGrid:
            pass

    def G(Z):
        return M.chart(flow_batch(system, M.q, M.evaluate(Z), theta, h))

    return _newton(G, guess, zeta_theta)[0]


def central_project(
    system: SystemSpec,
    cf: ConeField,
    M: ManifoldGraph,
    v0,
    thetas: Optional[Sequence[float]] = None,
    tol: float = 1e-6,
    form: Optional[InertialForm] = None,
    h: Optional[float] = None,
) -> TrackingResult:
    """The theta-procedure: forward flow, chart, lift, backward along the manifold."""
    if not M.converged:
        raise ValueError("central projection needs a converged manifold")
    v0 = np.asarray(v0, dtype=float)
    thetas = list(thetas or default_schedule(cf.nu0))
    if not system.autonomous and system.forcing.mode == "periodic":
        sigma = system.forcing.period
        thetas = sorted({sigma * max(1, math.ceil(t / sigma - 1e-9)) for t in thetas})
    if system.autonomous and form is None:
        form = extract_inertial_form(system, cf, M, h)
    if M.j == 0:
        star = M.values[0].copy()
        return TrackingResult(v0=v0, v0_star=star, thetas=[0.0], residuals=[0.0], converged=True)

    current = M.evaluate(M.chart(v0)[None, :])[0]
    result = TrackingResult(v0=v0, v0_star=current)
    for theta in thetas:
        forward = flow_batch(system, M.q, v0[None, :], theta, h)[0]
        zeta_theta = M.chart(forward)
        if not M.contains(zeta_theta)[0]:
            raise LeftGrid(f"forward orbit left the grid box at theta={theta:.3g}", theta=theta)
        zeta0 = _backward_on_manifold(system, M, form, zeta_theta, theta, h, guess=M.chart(current))
        candidate = M.evaluate(np.atleast_2d(zeta0))[0]
        change = float(np.linalg.norm(candidate - current))
        result.thetas.append(theta)
        result.residuals.append(change)
        current = candidate
        logger.debug("theta=%.3g: |v*_theta - previous| = %.3e", theta, change)
        if change < tol:
            result.v0_star = candidate
            result.converged = True
            return result
    raise NoConvergence(f"central projection still moving by {change:.3e} at theta={thetas[-1]:.3g}")


def fit_decay(times, norms, window: tuple = (0.25, 0.75), floor: float = 1e-13) -> Optional[float]:
    """Least-squares slope of log |difference| over the middle window of the horizon."""
    times, norms = np.asarray(times), np.asarray(norms)
    T = times[-1]
    mask = (times >= window[0] * T) & (times <= window[1] * T) & (norms > floor)
    if mask.sum() < 2:
        return None
    slope, _ = np.polyfit(times[mask], np.log(norms[mask]), 1)
    return float(slope)


def verify_tracking(system: SystemSpec, cf: ConeField, result: TrackingResult, T: Optional[float] = None, h: Optional[float] = None, M: Optional[ManifoldGraph] = None) -> dict:
    T = T or 4.0 / cf.nu0
    d0 = float(np.linalg.norm(result.v0 - result.v0_star))
    if d0 < 1e-12:
        return {"status": "degenerate", "initial_distance": d0}
    q = M.q if M is not None else None
    times, states = flow_batch(system, q, np.vstack([result.v0, result.v0_star]), T, h, record=True)
    norms = np.linalg.norm(states[:, 0] - states[:, 1], axis=1)
    slope = fit_decay(times, norms)
    lip_m = M.lipschitz_est if M is not None else 0.0
    R_formula = (1.0 + lip_m) * math.sqrt(cf.m_p) / cf.c_q / (1.0 - cf.kappa0)
    prefactor = float(np.max(norms * np.exp(cf.nu0 * times)) / d0)
    result.decay_exponent = slope
    result.R_estimate = prefactor
    bound = -0.85 * cf.nu0
    passed = slope is not None and slope <= bound
    report = {
        "status": "pass" if passed else "fail",
        "slope": slope,
        "bound": bound,
        "initial_distance": d0,
        "empirical_prefactor": prefactor,
        "R_formula": R_formula,
        "T": T,
    }
    logger.info("tracking slope %.4g (bound %.4g)", slope if slope is not None else float("nan"), bound)
    return report


@dataclass(frozen=True, eq=False)
class LeafSample:
    offsets: np.ndarray
    points: np.ndarray
    positive: np.ndarray

    def to_rows(self) -> np.ndarray:
        return np.hstack([self.offsets, self.points, self.positive[:, None].astype(float)])


def sample_vertical_leaf(
    system: SystemSpec,
    cf: ConeField,
    M: ManifoldGraph,
    v0_star,
    offsets,
    tol: float = 1e-6,
    horizon: Optional[float] = None,
    h: Optional[float] = None,
    **project_kwargs,
) -> LeafSample:
    """Points w = v0_star + U+ zeta+ + U- zeta- with the same central projection as v0_star."""
    if M.j > 2 or cf.n - cf.j > 3:
        raise ValueError("leaf sampling grids need j <= 2 and n - j <= 3")
    v0_star = np.asarray(v0_star, dtype=float)
    offsets = np.atleast_2d(np.asarray(offsets, dtype=float))
    form = extract_inertial_form(system, cf, M, h) if system.autonomous else None
    target = M.chart(v0_star)

    def lift(offset, zeta_minus):
        return v0_star + cf.basis_plus @ offset + cf.basis_minus @ zeta_minus

    points = []
    for k, offset in enumerate(offsets):

        def G(Z, offset=offset):
            return np.stack([M.chart(central_project(system, cf, M, lift(offset, z), tol=0.1 * tol, form=form, h=h, **project_kwargs).v0_star) for z in Z])

        zeta_minus = _newton(G, np.zeros((1, cf.j)), target[None, :], tol=tol)[0]
        points.append(lift(offset, zeta_minus))
    points = np.array(points)

    T = horizon or 2.0 / cf.nu0
    times, states = flow_batch(system, M.q, np.vstack([v0_star[None, :], points]), T, h, record=True)
    diffs = states[:, 1:] - states[:, :1]
    V = cf.value(diffs)
    eps = 1e-9 * cf.m_p * np.einsum("tki,tki->tk", diffs, diffs) + 1e-14
    positive = np.all(V >= -eps, axis=0)
    return LeafSample(offsets=offsets, points=points, positive=positive)


def projector_continuity_spot_check(
    system: SystemSpec,
    cf: ConeField,
    v0,
    q,
    dq: float = 1e-3,
    grid: GridSpec = GridSpec(),
    tol: float = 1e-6,
    **kwargs,
) -> dict:
    """v0_star over q and over a nearby driving point; the distance should shrink with dq."""
    q = np.atleast_1d(np.asarray(q, dtype=float))
    stars = []
    for point in (q, q + dq):
        M = build_manifold(system, cf, q=point, grid=grid, tol=tol, **kwargs)
        stars.append(central_project(system, cf, M, v0, tol=tol).v0_star)
    distance = float(np.linalg.norm(stars[0] - stars[1]))
    return {"status": "success", "q": q.tolist(), "dq": dq, "distance": distance, "ratio": distance / dq}
