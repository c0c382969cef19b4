"""Control-form systems v' = Av + BF(Cv) + W(q): plain ODEs, delay chains, Galerkin truncations."""

import json
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np
from numpy.polynomial import Polynomial

from imtk.config import Settings
from imtk.errors import (
    DimensionError,
    LipschitzViolation,
    ParseError,
    SchemaError,
    UnsupportedNeutralTerm,
)
from imtk.schema import (
    DelayConfig,
    ForcingConfig,
    GalerkinConfig,
    NonlinearityConfig,
    SystemConfig,
    dump_system_config,
    parse_system_config,
)

logger = logging.getLogger(__name__)

LIPSCHITZ_SLACK = 1e-9


@dataclass(frozen=True, eq=False)
class NonlinSpec:
    """Componentwise nonlinearity phi, mixed and scaled: F(y) = scale * mix @ phi(y)."""

    kind: str = "zero"
    amplitude: float = 1.0
    slope: float = 1.0
    coefficients: tuple = ()
    clamp: float = 1.0
    scale: float = 1.0
    mix: Optional[np.ndarray] = None
    has_derivative: bool = True

    def _clamped(self, s):
        c = self.clamp
        return c * np.tanh(s / c), 1.0 / np.cosh(s / c) ** 2

    def phi(self, s):
        s = np.asarray(s, dtype=float)
        if self.kind == "zero":
            return np.zeros_like(s)
        if self.kind == "sigmoid":
            return self.amplitude * np.tanh(self.slope * s)
        u, _ = self._clamped(s)
        return Polynomial(self.coefficients)(u)

    def dphi(self, s):
        s = np.asarray(s, dtype=float)
        if self.kind == "zero":
            return np.zeros_like(s)
        if self.kind == "sigmoid":
            return self.amplitude * self.slope / np.cosh(self.slope * s) ** 2
        u, du = self._clamped(s)
        return Polynomial(self.coefficients).deriv()(u) * du

    def phi_bound(self) -> float:
        """sup |phi'| computed analytically."""
        if self.kind == "zero":
            return 0.0
        if self.kind == "sigmoid":
            return abs(self.amplitude * self.slope)
        dp = Polynomial(self.coefficients).deriv()
        if dp.degree() < 1 and not np.any(dp.coef):
            return 0.0
        candidates = [-self.clamp, self.clamp]
        if dp.degree() >= 2:
            roots = dp.deriv().roots()
            candidates += [r.real for r in roots if abs(r.imag) < 1e-12 and abs(r.real) <= self.clamp]
        return float(max(abs(dp(u)) for u in candidates))

    def mix_norm(self) -> float:
        return 1.0 if self.mix is None else float(np.linalg.norm(self.mix, 2))

    def lipschitz(self) -> float:
        return abs(self.scale) * self.mix_norm() * self.phi_bound()

    def evaluate(self, y):
        out = self.scale * self.phi(y)
        return out if self.mix is None else out @ self.mix.T

    def derivative(self, y):
        """dF/dy with shape (..., m, r)."""
        d = self.scale * self.dphi(y)
        if self.mix is None:
            return d[..., :, None] * np.eye(d.shape[-1])
        return self.mix * d[..., None, :]

    def with_scale(self, scale: float) -> "NonlinSpec":
        return replace(self, scale=scale)


@dataclass(frozen=True, eq=False)
class ForcingSpec:
    mode: str = "none"
    period: float = 1.0
    frequencies: tuple = ()
    amplitude: Optional[np.ndarray] = None
    q0: tuple = (0.0,)

    @property
    def dim(self) -> int:
        return len(self.frequencies) if self.mode == "quasiperiodic" else 1

    def initial_state(self) -> np.ndarray:
        q = np.zeros(self.dim)
        q[: min(len(self.q0), self.dim)] = self.q0[: self.dim]
        return q

    def W(self, q, n: int) -> np.ndarray:
        if self.amplitude is None:
            return np.zeros(n)
        if self.mode == "none":
            return self.amplitude
        q = np.atleast_1d(q)
        if self.mode == "periodic":
            return self.amplitude * math.sin(2.0 * math.pi * q[0] / self.period)
        return self.amplitude * float(np.mean(np.sin(2.0 * math.pi * q)))

    def padded(self, n: int) -> "ForcingSpec":
        if self.amplitude is None or len(self.amplitude) == n:
            return self
        amp = np.zeros(n)
        amp[: len(self.amplitude)] = self.amplitude
        return replace(self, amplitude=amp)


@dataclass(frozen=True, eq=False)
class DelaySpec:
    """x'(t) = a0 x(t) + sum_k A_k x(t - theta_k) + b F(sum_k C_k x(t - theta_k))."""

    tau: float
    d0_norm: float = 0.0
    a0: Optional[np.ndarray] = None
    b: Optional[np.ndarray] = None
    linear_taps: tuple = ()
    output_taps: tuple = ()
    n_chain: int = 64

    def __post_init__(self):
        if self.tau <= 0:
            raise SchemaError("delay.tau must be positive", field="delay.tau")
        for name, taps in (("linear_taps", self.linear_taps), ("output_taps", self.output_taps)):
            for k, (theta, _) in enumerate(taps):
                if not 0.0 <= theta <= self.tau:
                    raise SchemaError(f"tap delay {theta} outside [0, tau]", field=f"delay.{name}.{k}.theta")
        if self.output_taps:
            variation = sum(np.abs(np.asarray(mat)).sum(axis=1) for _, mat in self.output_taps)
            if np.any(variation > 1.0 + 1e-12):
                raise SchemaError("output tap measure has total variation above 1", field="delay.output_taps")

    @property
    def n(self) -> int:
        return self.a0.shape[0]


@dataclass(frozen=True, eq=False)
class GalerkinSpec:
    eigenvalues: tuple
    alpha: float = 0.0
    beta: float = 0.0

    def __post_init__(self):
        lam = np.asarray(self.eigenvalues, dtype=float)
        if lam.size == 0 or np.any(lam <= 0) or np.any(np.diff(lam) < 0):
            raise SchemaError("galerkin eigenvalues must be positive and nondecreasing", field="galerkin.eigenvalues")
        if not 0.0 <= self.beta <= self.alpha < 1.0:
            raise SchemaError("need 0 <= beta <= alpha < 1", field="galerkin.alpha")

    @property
    def N(self) -> int:
        return len(self.eigenvalues)

    @classmethod
    def squares(cls, N: int, alpha: float = 0.0, beta: float = 0.0) -> "GalerkinSpec":
        return cls(eigenvalues=tuple(float(k * k) for k in range(1, N + 1)), alpha=alpha, beta=beta)


@dataclass(frozen=True, eq=False)
class SystemSpec:
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    nonlinearity: NonlinSpec
    lipschitz: float
    forcing: ForcingSpec = field(default_factory=ForcingSpec)
    family: str = "ode"
    name: str = ""
    config: Optional[SystemConfig] = None
    delay: Optional[DelaySpec] = None
    galerkin: Optional[GalerkinSpec] = None

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def r(self) -> int:
        return self.C.shape[0]

    @property
    def autonomous(self) -> bool:
        return self.forcing.mode == "none"

    def forcing_vector(self, q) -> np.ndarray:
        return self.forcing.W(q, self.n)

    def rhs(self, q, V) -> np.ndarray:
        V = np.asarray(V, dtype=float)
        out = V @ self.A.T + self.forcing_vector(q)
        if self.nonlinearity.kind != "zero" and self.nonlinearity.scale != 0.0:
            out = out + self.nonlinearity.evaluate(V @ self.C.T) @ self.B.T
        return out

    def jacobian(self, q, V) -> np.ndarray:
        """A + B F'(Cv) C, batched over leading axes of V."""
        V = np.asarray(V, dtype=float)
        dF = self.nonlinearity.derivative(V @ self.C.T)
        return self.A + self.B @ dF @ self.C

    def with_scale(self, scale: float) -> "SystemSpec":
        nonlin = self.nonlinearity.with_scale(scale)
        return replace(self, nonlinearity=nonlin, lipschitz=nonlin.lipschitz(), config=None)

    def default_step(self) -> float:
        """RK4 step 1e-3 / (|A| + lambda |B| |C| + 1), clamped to [1e-5, 1e-2]."""
        norm = np.linalg.norm(self.A, 2) + self.lipschitz * np.linalg.norm(self.B, 2) * np.linalg.norm(self.C, 2)
        return float(np.clip(1e-3 / (norm + 1.0), 1e-5, 1e-2))


def nonlin_from_config(cfg: NonlinearityConfig, r: int) -> NonlinSpec:
    p = cfg.params
    mix = np.asarray(p["mix"], dtype=float) if "mix" in p else None
    common = dict(
        scale=float(p.get("scale", 1.0)),
        mix=mix,
        has_derivative=bool(p.get("derivative", True)),
    )
    if cfg.kind == "sigmoid":
        return NonlinSpec(kind="sigmoid", amplitude=float(p.get("amplitude", 1.0)), slope=float(p.get("slope", 1.0)), **common)
    if cfg.kind == "saturated-cubic":
        a = float(p.get("coefficient", 1.0))
        return NonlinSpec(kind="saturated-cubic", coefficients=(0.0, 0.0, 0.0, a), clamp=float(p.get("clamp", 1.0)), **common)
    if cfg.kind == "polynomial-with-clamp":
        coeffs = tuple(float(c) for c in p.get("coefficients", [0.0]))
        return NonlinSpec(kind="polynomial-with-clamp", coefficients=coeffs, clamp=float(p.get("clamp", 1.0)), **common)
    return NonlinSpec(kind="zero", **common)


def forcing_from_config(cfg: ForcingConfig) -> ForcingSpec:
    amp = None if cfg.amplitude is None else np.asarray(cfg.amplitude, dtype=float)
    return ForcingSpec(
        mode=cfg.mode,
        period=cfg.period or 1.0,
        frequencies=tuple(cfg.frequencies or ()),
        amplitude=amp,
        q0=tuple(cfg.q0 or (0.0,)),
    )


def delay_from_config(cfg: DelayConfig) -> DelaySpec:
    return DelaySpec(
        tau=cfg.tau,
        d0_norm=cfg.d0_norm,
        a0=np.asarray(cfg.a0, dtype=float),
        b=np.asarray(cfg.b, dtype=float),
        linear_taps=tuple((t.theta, np.asarray(t.matrix, dtype=float)) for t in cfg.linear_taps),
        output_taps=tuple((t.theta, np.asarray(t.matrix, dtype=float)) for t in cfg.output_taps),
        n_chain=cfg.n_chain,
    )


def galerkin_from_config(cfg: GalerkinConfig) -> GalerkinSpec:
    if cfg.eigenvalues == "squares":
        return GalerkinSpec.squares(cfg.N, cfg.alpha, cfg.beta)
    if len(cfg.eigenvalues) < cfg.N:
        raise SchemaError("fewer eigenvalues than the truncation N", field="galerkin.eigenvalues")
    return GalerkinSpec(eigenvalues=tuple(cfg.eigenvalues[: cfg.N]), alpha=cfg.alpha, beta=cfg.beta)


def _check_shapes(A, B, C, nonlin: NonlinSpec, forcing: ForcingSpec):
    n = A.shape[0]
    if A.shape != (n, n):
        raise SchemaError(f"A must be square, got {A.shape}", field="A")
    if B.shape[0] != n:
        raise SchemaError(f"B must have {n} rows, got {B.shape}", field="B")
    if C.shape[1] != n:
        raise SchemaError(f"C must have {n} columns, got {C.shape}", field="C")
    m, r = B.shape[1], C.shape[0]
    if nonlin.mix is None and m != r:
        raise SchemaError(f"without a mix matrix B columns ({m}) must equal C rows ({r})", field="nonlinearity.params.mix")
    if nonlin.mix is not None and nonlin.mix.shape != (m, r):
        raise SchemaError(f"mix must be {m}x{r}, got {nonlin.mix.shape}", field="nonlinearity.params.mix")
    if forcing.amplitude is not None and len(forcing.amplitude) != n:
        raise SchemaError(f"forcing amplitude must have length {n}", field="forcing.amplitude")


def build_system(config: SystemConfig) -> SystemSpec:
    forcing = forcing_from_config(config.forcing)
    lipschitz = config.nonlinearity.lipschitz
    if config.family == "delay-discretized":
        delay = delay_from_config(config.delay)
        r = delay.output_taps[0][1].shape[0] if delay.output_taps else delay.n
        nonlin = nonlin_from_config(config.nonlinearity, r)
        spec = discretize_delay(delay, nonlin, lipschitz=lipschitz, forcing=forcing, name=config.name)
    elif config.family == "parabolic-galerkin":
        galerkin = galerkin_from_config(config.galerkin)
        nonlin = nonlin_from_config(config.nonlinearity, galerkin.N)
        spec = galerkin_system(galerkin, nonlin, lipschitz=lipschitz, forcing=forcing, name=config.name)
    else:
        A, B, C = (np.asarray(x, dtype=float) for x in (config.A, config.B, config.C))
        nonlin = nonlin_from_config(config.nonlinearity, C.shape[0])
        _check_shapes(A, B, C, nonlin, forcing)
        spec = SystemSpec(A=A, B=B, C=C, nonlinearity=nonlin, lipschitz=lipschitz, forcing=forcing, name=config.name)
    return replace(spec, config=config)


def verify_lipschitz(nonlin: NonlinSpec, declared: float, r: int, samples: int = 10_000, radius: float = 5.0, seed: int = 42):
    """Sample pairs (far and near) and raise LipschitzViolation with the steepest witness."""
    if nonlin.kind == "zero" or nonlin.scale == 0.0:
        return
    rng = np.random.default_rng(seed)
    half = samples // 2
    y1 = rng.normal(scale=radius / 2.0, size=(samples, r))
    y2 = np.empty_like(y1)
    y2[:half] = rng.normal(scale=radius / 2.0, size=(half, r))
    y2[half:] = y1[half:] + rng.normal(scale=1e-4, size=(samples - half, r))
    dy = np.linalg.norm(y1 - y2, axis=1)
    dF = np.linalg.norm(nonlin.evaluate(y1) - nonlin.evaluate(y2), axis=1)
    ok = dy > 0
    ratio = np.zeros(samples)
    ratio[ok] = dF[ok] / dy[ok]
    worst = int(np.argmax(ratio))
    if ratio[worst] > declared + LIPSCHITZ_SLACK:
        raise LipschitzViolation(
            f"declared Lipschitz constant {declared} exceeded: ratio {ratio[worst]:.6g}",
            y1=y1[worst],
            y2=y2[worst],
            ratio=float(ratio[worst]),
        )


def load_system(path) -> SystemSpec:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise ParseError(f"cannot read system config {path}: {e}") from e
    config = parse_system_config(data)
    spec = build_system(config)
    verify_lipschitz(spec.nonlinearity, spec.lipschitz, spec.r)
    logger.info("loaded system %s (family=%s, n=%d)", spec.name or path.stem, spec.family, spec.n)
    return spec


def save_system(spec: SystemSpec, path):
    if spec.config is None:
        raise ParseError("system was built in memory and has no config document to save")
    Path(path).write_text(json.dumps(dump_system_config(spec.config), indent=2) + "\n", encoding="utf-8")


def load_fixture(name: str) -> SystemSpec:
    return load_system(Path(Settings.FIXTURES) / f"{name}.json")


def _tap_weights(theta: float, tau: float, n_chain: int) -> dict:
    pos = theta * n_chain / tau
    k = min(int(math.floor(pos)), n_chain - 1)
    frac = pos - k
    weights = {k: 1.0 - frac}
    if frac > 0.0:
        weights[k + 1] = frac
    return weights


def _place_taps(taps, rows: int, n: int, tau: float, n_chain: int) -> np.ndarray:
    out = np.zeros((rows, n * (n_chain + 1)))
    for theta, mat in taps:
        for node, w in _tap_weights(theta, tau, n_chain).items():
            out[:, node * n : (node + 1) * n] += w * mat
    return out


def discretize_delay(
    spec: DelaySpec,
    F: NonlinSpec,
    lipschitz: Optional[float] = None,
    forcing: Optional[ForcingSpec] = None,
    name: str = "",
) -> SystemSpec:
    """Linear-chain surrogate: node k carries x(t - k*tau/N) and obeys z_k' = (N/tau)(z_{k-1} - z_k)."""
    if spec.d0_norm > 0:
        raise UnsupportedNeutralTerm(f"neutral term with ||D0|| = {spec.d0_norm} cannot be simulated")
    n, N = spec.n, spec.n_chain
    size = n * (N + 1)
    rate = N / spec.tau
    A = np.zeros((size, size))
    A[:n, :n] += spec.a0
    A[:n, :] += _place_taps(spec.linear_taps, n, n, spec.tau, N)
    for k in range(1, N + 1):
        rows = slice(k * n, (k + 1) * n)
        A[rows, (k - 1) * n : k * n] += rate * np.eye(n)
        A[rows, rows] -= rate * np.eye(n)
    B = np.zeros((size, spec.b.shape[1]))
    B[:n] = spec.b
    if spec.output_taps:
        r = spec.output_taps[0][1].shape[0]
        C = _place_taps(spec.output_taps, r, n, spec.tau, N)
    else:
        C = np.zeros((n, size))
        C[:, :n] = np.eye(n)
    forcing = (forcing or ForcingSpec()).padded(size)
    lam = F.lipschitz() if lipschitz is None else lipschitz
    return SystemSpec(A=A, B=B, C=C, nonlinearity=F, lipschitz=lam, forcing=forcing, family="delay-discretized", name=name, delay=spec)


def galerkin_system(
    spec: GalerkinSpec,
    F: NonlinSpec,
    lipschitz: Optional[float] = None,
    forcing: Optional[ForcingSpec] = None,
    name: str = "",
    j: Optional[int] = None,
) -> SystemSpec:
    """A = -diag(lambda), B = diag(lambda^-beta), C = diag(lambda^alpha), so CB = lambda^(alpha-beta)."""
    if j is not None and spec.N < j + 2:
        raise DimensionError(f"truncation N={spec.N} too small for j={j} (need N >= j+2)")
    lam = np.asarray(spec.eigenvalues, dtype=float)
    A = -np.diag(lam)
    B = np.diag(lam ** (-spec.beta))
    C = np.diag(lam**spec.alpha)
    lam_F = F.lipschitz() if lipschitz is None else lipschitz
    return SystemSpec(
        A=A,
        B=B,
        C=C,
        nonlinearity=F,
        lipschitz=lam_F,
        forcing=forcing or ForcingSpec(),
        family="parabolic-galerkin",
        name=name,
        galerkin=spec,
    )
