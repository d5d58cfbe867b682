"""JSON run configuration, validated before anything is computed."""
from __future__ import annotations

import json
from pathlib import Path
from typing import Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .model import InverterParams, Mode, NoiseSpec

Matrix = Union[float, list[float], list[list[float]]]


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ParamsConfig(_Strict):
    kpV: float = 0.1
    kiV: float = 8.0
    kpI: float = 170.0
    kiI: float = 100.0
    R: float = 10.0
    R1: float = 1.5e-3
    L1: float = 0.3
    Vdc: float = 150.0
    vref_d: float = 60.0
    vref_q: float = 0.0
    zetaU_d: Optional[float] = None
    zetaU_q: Optional[float] = None
    omega0: float = 376.99111843077515

    def build(self) -> InverterParams:
        return InverterParams(**self.model_dump())


class NoiseConfig(_Strict):
    sigma_w: Matrix = 1e-4
    sigma_v: Matrix = 1e-4
    sigma_0: Matrix = 1e-2
    x0_mean: dict[Literal["h", "f"], list[float]] = Field(default_factory=dict)

    def build(self) -> NoiseSpec:
        return NoiseSpec(sigma_w=self.sigma_w, sigma_v=self.sigma_v, sigma_0=self.sigma_0,
                         x0_mean={Mode(k): v for k, v in self.x0_mean.items()})


class ScenarioSection(_Strict):
    true_mode: Literal["h", "f"] = "f"
    horizon: int = Field(8, ge=1)
    dt: float = Field(1e-3, gt=0)
    gamma: float = Field(0.5, ge=0)
    plan: Literal["free", "harmonic", "zero"] = "free"
    seed: int = Field(1, ge=0, lt=2 ** 64)
    runs: int = Field(100, ge=1)
    detect_threshold: float = Field(0.95, gt=0.5, lt=1.0)
    priors: tuple[float, float] = (0.5, 0.5)
    param_perturbations: dict[Literal["kpI", "kiI", "kpV", "kiV", "R"], float] = Field(
        default_factory=dict)
    trigger_threshold: Optional[float] = Field(None, gt=0)
    likelihood: Literal["exponential", "gaussian"] = "exponential"
    small_signal: bool = True

    @field_validator("priors")
    @classmethod
    def _priors(cls, v):
        if not (0 < v[0] < 1 and 0 < v[1] < 1 and abs(v[0] + v[1] - 1) <= 1e-12):
            raise ValueError("priors must be interior and sum to 1")
        return v


class OptimizerConfig(_Strict):
    n_starts: int = Field(32, ge=0)
    max_iters: int = Field(10_000, ge=1)
    seed: int = Field(0, ge=0)
    harmonic_orders: list[int] = Field(default_factory=lambda: [3, 5, 7], min_length=1)


class PresetConfig(_Strict):
    tradeoff_gammas: list[float] = Field(default_factory=lambda: [0.1, 0.5, 1.0], min_length=1)
    robustness_factors: dict[str, dict[Literal["kpI", "kiI", "kpV", "kiV", "R"], float]] = Field(
        default_factory=lambda: {
            "nominal": {},
            "current_gains_x1.1": {"kpI": 1.1, "kiI": 1.1},
            "load_x0.8": {"R": 0.8},
            "load_x1.2": {"R": 1.2},
        })
    timing_horizons: list[int] = Field(default_factory=lambda: [4, 8, 16, 32], min_length=1)

    @model_validator(mode="after")
    def _timing_has_baseline(self):
        if 8 not in self.timing_horizons:
            raise ValueError("timing_horizons must include N=8, the normalization baseline")
        return self


class RunConfig(_Strict):
    params: ParamsConfig = Field(default_factory=ParamsConfig)
    noise: NoiseConfig = Field(default_factory=NoiseConfig)
    scenario: ScenarioSection = Field(default_factory=ScenarioSection)
    optimizer: OptimizerConfig = Field(default_factory=OptimizerConfig)
    presets: PresetConfig = Field(default_factory=PresetConfig)
    output_dir: str = "afd-out"


def load_config(path: str | Path | None) -> RunConfig:
    if path is None:
        return RunConfig()
    with open(path, encoding="utf-8") as fh:
        return RunConfig.model_validate(json.load(fh))


def with_overrides(cfg: RunConfig, *, gamma=None, horizon=None, seed=None, out=None,
                   runs=None) -> RunConfig:
    """Command-line flags take precedence over the file."""
    data = cfg.model_dump()
    for key, value in (("gamma", gamma), ("horizon", horizon), ("seed", seed), ("runs", runs)):
        if value is not None:
            data["scenario"][key] = value
    if out is not None:
        data["output_dir"] = str(out)
    return RunConfig.model_validate(data)
