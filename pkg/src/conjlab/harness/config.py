"""Experiment configuration: a validated YAML document.

Every field, its unit and default is listed in ``docs/config.md``.  Unknown
keys are rejected and the top-level ``seed`` is required; all other seeds
are derived from it.
"""

from __future__ import annotations

import hashlib
import json
from typing import List, Literal, Optional

import yaml
from pydantic import BaseModel, ConfigDict, Field, model_validator


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class WindowSpec(_Strict):
    t_min: int = 0
    t_max: int = 100
    tau0: Optional[int] = None


class NonlinearSpec(_Strict):
    kind: Literal["none", "sin", "tanh", "poly"] = "none"
    scale: float = 0.1
    coefficients: Optional[List[float]] = None


class SystemSpec(_Strict):
    family: Literal["scalar", "diagonal", "rotation_scale", "matrix", "bernoulli"]
    dim: int = Field(1, ge=1, le=16)
    coefficients: dict = Field(default_factory=dict)
    nonlinearity: NonlinearSpec = Field(default_factory=NonlinearSpec)

    @model_validator(mode="after")
    def _check_family(self):
        c = self.coefficients
        if self.family == "diagonal" and "entries" not in c:
            raise ValueError("diagonal family needs coefficients.entries")
        if self.family == "matrix" and "A" not in c:
            raise ValueError("matrix family needs coefficients.A")
        if self.family == "bernoulli" and "matrices" not in c:
            raise ValueError("bernoulli family needs coefficients.matrices")
        return self


class NormSpec(_Strict):
    kind: Literal["euclidean", "constant", "adapted"] = "euclidean"
    weights: Optional[List[List[float]]] = None


class SamplingConfig(_Strict):
    radius: float = Field(10.0, gt=0)
    n_samples: int = Field(1000, ge=0)
    n_points: int = Field(1000, ge=1)
    n_pairs: int = Field(10_000, ge=1)
    n_time_pairs: int = Field(10, ge=1)
    n_lipschitz_pairs: int = Field(1000, ge=0)


class ModeSpec(_Strict):
    topological: bool = True
    smooth: bool = False
    smooth_order: int = Field(1, ge=1, le=3)
    local: bool = False
    rds: bool = False


class RDSSpec(_Strict):
    probs: Optional[List[float]] = None
    n_steps: int = Field(10_000, ge=10)
    n_samples: int = Field(64, ge=1)
    omega_sample: int = 0
    target_M: Optional[float] = Field(None, gt=0)
    sandwich_t_max: int = Field(50, ge=0)


class LocalSpec(_Strict):
    target_L: float = Field(0.1, gt=0)
    nonlinearity: NonlinearSpec = Field(default_factory=lambda: NonlinearSpec(kind="poly", coefficients=[1.0]))
    n_points: int = Field(64, ge=1)
    n_omegas: int = Field(4, ge=1)


class ToleranceSpec(_Strict):
    solver: float = Field(1e-10, gt=0)
    max_iter: int = Field(100_000, ge=1)


class OutputSpec(_Strict):
    dir: str = "conjlab-out"
    cache_dir: Optional[str] = None
    csv: bool = True


class ExperimentConfig(_Strict):
    name: str = "experiment"
    seed: int
    system: SystemSpec
    window: WindowSpec = Field(default_factory=WindowSpec)
    norm: NormSpec = Field(default_factory=NormSpec)
    sampling: SamplingConfig = Field(default_factory=SamplingConfig)
    mode: ModeSpec = Field(default_factory=ModeSpec)
    rds: RDSSpec = Field(default_factory=RDSSpec)
    localization: LocalSpec = Field(default_factory=LocalSpec)
    tolerances: ToleranceSpec = Field(default_factory=ToleranceSpec)
    output: OutputSpec = Field(default_factory=OutputSpec)

    def canonical(self):
        """Canonical JSON of the numerical content (output paths excluded)."""
        data = self.model_dump(exclude={"output"})
        return json.dumps(data, sort_keys=True, separators=(",", ":"))

    @property
    def digest(self):
        return hashlib.sha256(self.canonical().encode()).hexdigest()


def load_config(path):
    with open(path) as fh:
        data = yaml.safe_load(fh)
    return ExperimentConfig.model_validate(data or {})


def apply_overrides(cfg: ExperimentConfig, seed=None, samples=None, tol=None, out=None):
    """Copy of ``cfg`` with command-line scalars applied."""
    data = cfg.model_dump()
    if seed is not None:
        data["seed"] = seed
    if samples is not None:
        data["sampling"]["n_samples"] = samples
    if tol is not None:
        data["tolerances"]["solver"] = tol
    if out is not None:
        data["output"]["dir"] = out
    return ExperimentConfig.model_validate(data)
