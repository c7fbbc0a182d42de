"""Run configuration: a YAML document validated before any compute."""
from __future__ import annotations

from pathlib import Path
from typing import Annotated, Literal, Optional, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator


class ConfigError(ValueError):
    """The run configuration is unreadable or fails validation."""


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class IsingProblem(_Strict):
    kind: Literal["ising"] = "ising"
    n_sites: int = Field(ge=4)
    j1: float = 1.0
    j2: float = 0.9
    ht: float = 0.4
    generator_sign: Literal["minus", "plus"] = "minus"
    initial_params: Optional[list[float]] = None

    @model_validator(mode="after")
    def _check(self):
        if self.n_sites % 2:
            raise ValueError("n_sites must be even for the brick-wall ansatz")
        if self.initial_params is not None and len(self.initial_params) != 4:
            raise ValueError("the entangler ansatz takes exactly 4 parameters")
        return self


class MoleculeProblem(_Strict):
    kind: Literal["molecule"] = "molecule"
    fcidump: str = Field(description="path to an FCIDUMP file or the stem of a bundled one")
    n_cut: Optional[int] = Field(default=None, ge=1)
    n_max: Optional[int] = Field(default=None, ge=1)
    n_doubles: Optional[int] = Field(default=None, ge=0)


Problem = Annotated[Union[IsingProblem, MoleculeProblem], Field(discriminator="kind")]


class SurrogateConfig(_Strict):
    """``mps``: capped bond dimension; ``sws``: truncated sparse wavefunction;
    ``exact``: statevector, optionally on a shorter chain rescaled to the target length."""

    kind: Literal["mps", "sws", "exact"] = "exact"
    chi: int = Field(default=4, ge=1)
    routing: Literal["swap", "mpo"] = "swap"
    n_sites: Optional[int] = Field(default=None, ge=4)
    n_cut: Optional[int] = Field(default=None, ge=1)
    n_max: Optional[int] = Field(default=None, ge=1)
    tol: float = Field(default=1e-6, gt=0)


class NoiseConfig(_Strict):
    kind: Literal["none", "gaussian", "shots", "depolarizing"] = "none"
    sigma: float = Field(default=0.0, ge=0)
    n_shots: Optional[int] = Field(default=None, ge=1)
    epsilon: Optional[float] = Field(default=None, gt=0)
    p: float = Field(default=0.0, ge=0, lt=1)
    inverse_rescale: bool = False

    @model_validator(mode="after")
    def _check(self):
        if self.kind == "shots" and self.n_shots is None and self.epsilon is None:
            raise ValueError("shot noise needs n_shots or a target epsilon")
        return self


class WindowTargetConfig(_Strict):
    kind: Literal["noise", "param_error", "energy_error"] = "noise"
    value: Optional[float] = Field(default=None, gt=0)


class LineSearchConfig(_Strict):
    M: int = Field(default=7, ge=3)
    degree: Literal[2, 3, 4] = 4
    drop_tol: float = Field(default=1e-3, ge=0)
    keep_top: Optional[int] = Field(default=None, ge=1)
    max_iters: int = Field(default=10, ge=1)
    fd_step: Optional[float] = Field(default=None, gt=0)
    sequential: bool = False
    target: WindowTargetConfig = WindowTargetConfig()

    @model_validator(mode="after")
    def _check(self):
        if self.M % 2 == 0:
            raise ValueError("M must be odd so the center is a grid point")
        if self.M < self.degree + 2:
            raise ValueError(f"M={self.M} cannot overdetermine a degree-{self.degree} fit")
        return self


class PowellConfig(_Strict):
    tol: float = Field(default=1e-4, gt=0)
    max_calls: int = Field(default=5000, ge=1)


class ShotsConfig(_Strict):
    epsilons: list[float] = [1e-3, 1e-4, 1e-5]
    variance: Literal["exact", "linear"] = "exact"


class RunConfig(_Strict):
    problem: Problem
    surrogate: SurrogateConfig = SurrogateConfig()
    highlevel: Literal["exact", "statevector", "sws-untruncated"] = "exact"
    noise: NoiseConfig = NoiseConfig()
    linesearch: LineSearchConfig = LineSearchConfig()
    powell: PowellConfig = PowellConfig()
    shots: ShotsConfig = ShotsConfig()
    seed: int = Field(default=0, ge=0)
    output: str = "vqsls-out"

    @model_validator(mode="after")
    def _check(self):
        ising = isinstance(self.problem, IsingProblem)
        if ising and self.surrogate.kind == "sws":
            raise ValueError("the sparse-wavefunction surrogate needs a molecular problem")
        if not ising and self.surrogate.kind == "mps":
            raise ValueError("the MPS surrogate needs a spin-chain problem")
        if ising and self.highlevel == "sws-untruncated":
            raise ValueError("highlevel 'sws-untruncated' needs a molecular problem")
        if not ising and self.highlevel == "statevector":
            raise ValueError("use highlevel 'exact' or 'sws-untruncated' for molecules")
        if self.linesearch.target.kind != "noise" and self.linesearch.target.value is None:
            raise ValueError("window target needs a value")
        return self

    def resolved_yaml(self) -> str:
        return yaml.safe_dump(self.model_dump(mode="json"), sort_keys=False)


def load_config(path: str | Path, overrides: dict | None = None) -> RunConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path} is not valid YAML: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path} must hold a mapping at the top level")
    data.update({k: v for k, v in (overrides or {}).items() if v is not None})
    try:
        return RunConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(str(exc)) from None
