"""Fixed-step RK4 for the cocycle psi^t(q, v), the driving flow and the variational cocycle."""

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from imtk.errors import DerivativeUnavailable, NonFinite
from imtk.systems import ForcingSpec, SystemSpec

BLOWUP = 1e150


def drive(forcing: ForcingSpec, q0, t: float) -> np.ndarray:
    q0 = np.atleast_1d(np.asarray(q0, dtype=float))
    if forcing.mode == "periodic":
        return np.mod(q0 + t, forcing.period)
    if forcing.mode == "quasiperiodic":
        return np.mod(q0 + np.asarray(forcing.frequencies) * t, 1.0)
    return q0


@dataclass(frozen=True, eq=False)
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    drives: np.ndarray

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]

    @property
    def step(self) -> float:
        return float(self.times[1] - self.times[0]) if len(self.times) > 1 else 0.0


@dataclass(frozen=True, eq=False)
class VariationalTrajectory:
    base: Trajectory
    fundamental: np.ndarray

    def propagate(self, xi) -> np.ndarray:
        """xi(t) = L(t) xi for every grid time."""
        return self.fundamental @ np.asarray(xi, dtype=float)


def _grid(T: float, h: float) -> tuple[int, float]:
    if h <= 0:
        raise ValueError(f"step must be positive, got {h}")
    if T == 0:
        return 0, 0.0
    steps = max(int(math.ceil(abs(T) / h - 1e-9)), 1)
    return steps, T / steps


def _check_finite(V, t):
    if not np.all(np.isfinite(V)) or np.max(np.abs(V), initial=0.0) > BLOWUP:
        raise NonFinite(f"state left the finite range at t={t:.6g}")


def _initial_drive(system: SystemSpec, q0) -> np.ndarray:
    return system.forcing.initial_state() if q0 is None else np.atleast_1d(np.asarray(q0, dtype=float))


def flow_batch(system: SystemSpec, q0, V0, T: float, h: Optional[float] = None, record: bool = False):
    """Integrate every row of V0 over [0, T]. Returns the final states, or (times, states) when record."""
    q0 = _initial_drive(system, q0)
    V = np.array(V0, dtype=float, copy=True)
    steps, dt = _grid(T, h or system.default_step())
    times = np.linspace(0.0, T, steps + 1) if steps else np.zeros(1)
    history = [V.copy()] if record else None
    forcing = system.forcing
    for i in range(steps):
        t = i * dt
        q_a = drive(forcing, q0, t)
        q_b = drive(forcing, q0, t + 0.5 * dt)
        q_c = drive(forcing, q0, t + dt)
        k1 = system.rhs(q_a, V)
        k2 = system.rhs(q_b, V + 0.5 * dt * k1)
        k3 = system.rhs(q_b, V + 0.5 * dt * k2)
        k4 = system.rhs(q_c, V + dt * k3)
        V = V + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        _check_finite(V, t + dt)
        if record:
            history.append(V.copy())
    if record:
        return times, np.stack(history)
    return V


def integrate(system: SystemSpec, q0, v0, T: float, h: Optional[float] = None) -> Trajectory:
    q0 = _initial_drive(system, q0)
    times, states = flow_batch(system, q0, np.asarray(v0, dtype=float)[None, :], T, h, record=True)
    drives = np.stack([drive(system.forcing, q0, t) for t in times])
    return Trajectory(times=times, states=states[:, 0, :], drives=drives)


def flow_tangent_batch(system: SystemSpec, q0, V0, S0, T: float, h: Optional[float] = None, record: bool = False):
    """Transport bases S (k, n, p) by the linearization along the trajectories of V (k, n)."""
    if not system.nonlinearity.has_derivative:
        raise DerivativeUnavailable("nonlinearity has no analytic derivative")
    q0 = _initial_drive(system, q0)
    V = np.array(V0, dtype=float, copy=True)
    S = np.array(S0, dtype=float, copy=True)
    steps, dt = _grid(T, h or system.default_step())
    history = [(V.copy(), S.copy())] if record else None
    forcing = system.forcing

    def f(q, V, S):
        return system.rhs(q, V), system.jacobian(q, V) @ S

    for i in range(steps):
        t = i * dt
        q_a = drive(forcing, q0, t)
        q_b = drive(forcing, q0, t + 0.5 * dt)
        q_c = drive(forcing, q0, t + dt)
        a1, b1 = f(q_a, V, S)
        a2, b2 = f(q_b, V + 0.5 * dt * a1, S + 0.5 * dt * b1)
        a3, b3 = f(q_b, V + 0.5 * dt * a2, S + 0.5 * dt * b2)
        a4, b4 = f(q_c, V + dt * a3, S + dt * b3)
        V = V + (dt / 6.0) * (a1 + 2.0 * a2 + 2.0 * a3 + a4)
        S = S + (dt / 6.0) * (b1 + 2.0 * b2 + 2.0 * b3 + b4)
        _check_finite(S, t + dt)
        if record:
            history.append((V.copy(), S.copy()))
    if record:
        times = np.linspace(0.0, T, steps + 1) if steps else np.zeros(1)
        return times, np.stack([v for v, _ in history]), np.stack([s for _, s in history])
    return V, S


def integrate_variational(system: SystemSpec, q0, v0, T: float, h: Optional[float] = None) -> VariationalTrajectory:
    q0 = _initial_drive(system, q0)
    v0 = np.asarray(v0, dtype=float)
    n = v0.shape[0]
    times, states, bases = flow_tangent_batch(system, q0, v0[None, :], np.eye(n)[None, :, :], T, h, record=True)
    drives = np.stack([drive(system.forcing, q0, t) for t in times])
    base = Trajectory(times=times, states=states[:, 0, :], drives=drives)
    return VariationalTrajectory(base=base, fundamental=bases[:, 0, :, :])
