"""Pydantic models for system config documents."""

import math
from typing import Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from imtk.errors import SchemaError

Matrix = list[list[float]]


def _finite_matrix(value: Optional[Matrix]) -> Optional[Matrix]:
    if value is None:
        return value
    if not value or not all(len(row) == len(value[0]) for row in value):
        raise ValueError("matrix must be a non-empty rectangular nested array")
    if not all(math.isfinite(x) for row in value for x in row):
        raise ValueError("matrix entries must be finite")
    return value


class StrictModel(BaseModel):
    model_config = ConfigDict(extra="forbid", populate_by_name=True)


class NonlinearityConfig(StrictModel):
    kind: Literal["saturated-cubic", "sigmoid", "polynomial-with-clamp", "zero"]
    params: dict[str, Union[float, list[float], Matrix, bool]] = Field(default_factory=dict)
    lipschitz: float = Field(alias="lambda", ge=0.0)


class ForcingConfig(StrictModel):
    mode: Literal["none", "periodic", "quasiperiodic"] = "none"
    period: Optional[float] = None
    frequencies: Optional[list[float]] = None
    amplitude: Optional[list[float]] = None
    q0: Optional[list[float]] = None

    @model_validator(mode="after")
    def check_mode(self):
        if self.mode == "periodic" and (self.period is None or self.period <= 0):
            raise ValueError("periodic forcing needs period > 0")
        if self.mode == "quasiperiodic":
            if not self.frequencies or not any(f != 0 for f in self.frequencies):
                raise ValueError("quasiperiodic forcing needs a nonzero frequency vector")
            if len(self.frequencies) > 3:
                raise ValueError("quasiperiodic driving supports a torus of dimension <= 3")
        return self


class TapConfig(StrictModel):
    theta: float = Field(ge=0.0)
    matrix: Matrix

    @field_validator("matrix")
    @classmethod
    def check_matrix(cls, value):
        return _finite_matrix(value)


class DelayConfig(StrictModel):
    tau: float = Field(gt=0.0)
    d0_norm: float = Field(default=0.0, ge=0.0)
    a0: Matrix
    b: Matrix
    linear_taps: list[TapConfig] = Field(default_factory=list)
    output_taps: list[TapConfig] = Field(default_factory=list)
    n_chain: int = Field(default=64, ge=1)

    @field_validator("a0", "b")
    @classmethod
    def check_matrices(cls, value):
        return _finite_matrix(value)


class GalerkinConfig(StrictModel):
    eigenvalues: Union[Literal["squares"], list[float]] = "squares"
    alpha: float = 0.0
    beta: float = 0.0
    N: int = Field(ge=1)


class CertificateConfig(StrictModel):
    nu0: float
    delta_fraction: float = Field(default=0.5, gt=0.0, lt=1.0)
    nu0_inner: Optional[float] = None


class SystemConfig(StrictModel):
    name: str = ""
    family: Literal["ode", "delay-discretized", "parabolic-galerkin"]
    A: Optional[Matrix] = None
    B: Optional[Matrix] = None
    C: Optional[Matrix] = None
    nonlinearity: NonlinearityConfig
    forcing: ForcingConfig = Field(default_factory=ForcingConfig)
    delay: Optional[DelayConfig] = None
    galerkin: Optional[GalerkinConfig] = None
    certificate: Optional[CertificateConfig] = None

    @field_validator("A", "B", "C")
    @classmethod
    def check_matrices(cls, value):
        return _finite_matrix(value)

    @model_validator(mode="after")
    def check_family(self):
        if self.family == "ode" and (self.A is None or self.B is None or self.C is None):
            raise ValueError("ode family needs A, B and C")
        if self.family == "delay-discretized" and self.delay is None:
            raise ValueError("delay-discretized family needs a delay block")
        if self.family == "parabolic-galerkin" and self.galerkin is None:
            raise ValueError("parabolic-galerkin family needs a galerkin block")
        return self


def parse_system_config(data: dict) -> SystemConfig:
    try:
        return SystemConfig.model_validate(data)
    except ValidationError as e:
        first = e.errors()[0]
        field = ".".join(str(part) for part in first["loc"])
        raise SchemaError(f"{field}: {first['msg']}", field=field) from e


def dump_system_config(config: SystemConfig) -> dict:
    return config.model_dump(by_alias=True, exclude_none=True)
