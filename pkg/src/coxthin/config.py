"""Run configuration (JSON), validated with unknown keys rejected."""
from __future__ import annotations

import json
from pathlib import Path
from typing import Annotated, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .gp import Kernel, LMCParams
from .matern3 import DiscShadow, GaussianShadow
from .mtsgcp.gibbs import Controls, Priors
from .pattern import Domain
from .sgcp.model import SgcpParams


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class DomainConfig(_Strict):
    lower: list[float] = [0.0, 0.0]
    upper: list[float] = [1.0, 1.0]

    def build(self) -> Domain:
        return Domain(tuple(self.lower), tuple(self.upper))


class SgcpConfig(_Strict):
    kind: Literal["sgcp"] = "sgcp"
    lam: float = Field(5.0, gt=0)
    rho: float = Field(2.0, gt=0)
    variance: float = Field(1.0, gt=0)
    mean: float = 0.0

    def build(self, dom: Domain) -> SgcpParams:
        return SgcpParams(self.lam, Kernel(self.rho, self.variance), dom, self.mean)


class MtsgcpConfig(_Strict):
    kind: Literal["mtsgcp"] = "mtsgcp"
    lam: float = Field(50.0, gt=0)
    A: list[list[float]] = [[1.0, 0.0], [-0.5, 1.0]]
    rho: list[float] = [5.0, 5.0]
    mu: list[float] = [0.0, 0.0]

    def lmc(self) -> LMCParams:
        return LMCParams(self.A, self.rho, self.mu)


class DiscShadowConfig(_Strict):
    kind: Literal["disc"] = "disc"
    R: float = Field(0.1, ge=0)

    def build(self):
        return DiscShadow(self.R)


class GaussianShadowConfig(_Strict):
    kind: Literal["gaussian"] = "gaussian"
    kappa: float = Field(0.8, gt=0, le=1)
    ell: float = Field(0.05, gt=0)

    def build(self):
        return GaussianShadow(self.kappa, self.ell)


class Matern3Config(_Strict):
    kind: Literal["matern3"] = "matern3"
    lam: float = Field(20.0, gt=0)
    shadow: Annotated[Union[DiscShadowConfig, GaussianShadowConfig], Field(discriminator="kind")] = DiscShadowConfig()


ModelConfig = Annotated[Union[SgcpConfig, MtsgcpConfig, Matern3Config], Field(discriminator="kind")]


class PriorsConfig(_Strict):
    a_lam: float = Field(0.1, gt=0)
    b_lam: float = Field(0.1, gt=0)
    s_A: float = Field(1.0, gt=0)
    a_rho: float = Field(1.0, gt=0)
    b_rho: Optional[float] = Field(None, gt=0, description="default: domain diameter")
    m_mu: float = 0.0
    s_mu: float = Field(3.0, gt=0)

    def build(self, dom: Domain) -> Priors:
        kw = self.model_dump()
        kw["b_rho"] = dom.diameter if self.b_rho is None else self.b_rho
        return Priors(**kw)


class ControlsConfig(_Strict):
    bdm_steps: Optional[int] = Field(None, ge=1)
    move_probs: tuple[float, float, float] = (1 / 3, 1 / 3, 1 / 3)
    move_scale: Optional[float] = Field(None, gt=0)
    hmc_eps: float = Field(0.05, ge=0)
    hmc_steps: int = Field(10, ge=1)
    tune_eps: bool = True
    rw_A: float = Field(0.1, gt=0)
    rw_log_rho: float = Field(0.1, gt=0)
    store_latent: bool = False
    grid_res: Optional[int] = Field(None, ge=1, le=512)

    def build(self) -> Controls:
        return Controls(**self.model_dump())


class DataConfig(_Strict):
    path: str
    type_column: Optional[str] = "type"
    rescale: bool = False


class RunConfig(_Strict):
    chains: int = Field(1, ge=1)
    iters: int = Field(1000, ge=0)
    burn: int = Field(500, ge=0)


class VerifyConfig(_Strict):
    n_reps: int = Field(10**5, ge=1)
    grid_res: int = Field(128, ge=8)
    n_sweeps: int = Field(10**5, ge=1)
    steps_per_sweep: int = Field(10, ge=1)
    n_burn: int = Field(1000, ge=0)
    n_samples: int = Field(5000, ge=10)
    n_configs: int = Field(100, ge=1)


class PcfConfig(_Strict):
    r_values: list[float] = Field(default_factory=lambda: [0.01, 0.02, 0.05, 0.1, 0.15, 0.2, 0.3, 0.4, 0.5])
    n_mc: int = Field(10**5, ge=100)
    max_draws: int = Field(200, ge=1)

    @field_validator("r_values")
    @classmethod
    def _positive(cls, v):
        if not v or any(r <= 0 for r in v):
            raise ValueError("r_values must be non-empty and positive")
        return v


class Config(_Strict):
    seed: int = Field(ge=0, lt=2**64)
    domain: DomainConfig = DomainConfig()
    model: Optional[ModelConfig] = None
    priors: PriorsConfig = PriorsConfig()
    controls: ControlsConfig = ControlsConfig()
    data: Optional[DataConfig] = None
    run: RunConfig = RunConfig()
    verify: VerifyConfig = VerifyConfig()
    pcf: PcfConfig = PcfConfig()

    @model_validator(mode="after")
    def _domain_ok(self):
        self.domain.build()
        return self


def load_config(path: str | Path | None, overrides: dict | None = None) -> Config:
    """Read a JSON config and apply nested ``overrides`` (CLI flags) before validation."""
    raw: dict = {}
    if path is not None:
        raw = json.loads(Path(path).read_text())
    for key, value in (overrides or {}).items():
        if isinstance(value, dict):
            raw[key] = {**raw.get(key, {}), **value}
        else:
            raw[key] = value
    return Config.model_validate(raw)
