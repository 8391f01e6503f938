"""Strict JSON run configuration for the command-line pipeline."""
from __future__ import annotations

import hashlib
import json
import os
from pathlib import Path
from typing import Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from . import __version__
from .design import ModelSpec
from .measures import MeasureConfig
from .model import Hyperparams
from .sampler import ALGORITHMS, ChainConfig
from .simulate import TrialDesign
from .trial_data import FactorScheme

OUTPUT_DIR_ENV = "BIVSUB_OUTPUT_DIR"


class ConfigError(ValueError):
    pass


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class FactorSpec(_Strict):
    name: str
    levels: list[str] = Field(min_length=2)


class HyperparamsSpec(_Strict):
    """Prior scales; a number applies to both arms, a pair is (control, treatment)."""

    sigma_mu: float | tuple[float, float] = 100.0
    sigma_tau: float | tuple[float, float] = 1.0
    sigma_mu_gamma: float | tuple[float, float] = 100.0
    sigma_tau_gamma: float | tuple[float, float] = 1.0
    sigma_intercept_beta: float = Field(100.0, gt=0)
    sigma_intercept_gamma: float = Field(100.0, gt=0)
    sigma_log_phi: float = Field(1.0, gt=0)

    def build(self) -> Hyperparams:
        return Hyperparams(**self.model_dump())


class SamplerSpec(_Strict):
    chains: int = Field(4, ge=1)
    iterations: int = Field(1500, ge=1)
    warmup: int = Field(500, ge=0)
    algorithm: str = "nuts"
    target_accept: Optional[float] = Field(None, gt=0, lt=1)
    max_depth: int = Field(10, ge=1)
    rhat_threshold: float = Field(1.05, gt=1)

    @field_validator("algorithm")
    @classmethod
    def _algorithm(cls, v):
        if v not in ALGORITHMS:
            raise ValueError(f"algorithm must be one of {ALGORITHMS}")
        return v

    @model_validator(mode="after")
    def _warmup(self):
        if self.warmup >= self.iterations:
            raise ValueError(f"warmup ({self.warmup}) must be smaller than iterations ({self.iterations})")
        return self

    def build(self, seed: int) -> ChainConfig:
        d = self.model_dump(exclude={"rhat_threshold"})
        return ChainConfig(seed=seed, **d)


class MeasuresSpec(_Strict):
    kappa0: float = Field(3.0, gt=0)
    tau_h: float = Field(3.0, gt=0)
    weights: tuple[float, float, float, float] = (1.0, 0.8, 0.0, 0.0)
    eta_weights: list[tuple[float, float]] = [(0.8, 1.0), (0.5, 1.0)]
    delta: float = Field(0.2, ge=0)

    def build(self) -> MeasureConfig:
        return MeasureConfig(self.kappa0, self.tau_h, self.weights, tuple(self.eta_weights), self.delta)


class CheckingSpec(_Strict):
    replicates: int = Field(200, ge=50)
    overlay_replicates: int = Field(50, ge=1)
    rmst_tau: float = Field(3.0, gt=0)
    horizon: Optional[float] = Field(None, gt=0)


class SimulateSpec(_Strict):
    cell_params_file: str
    n_per_arm: int = Field(500, ge=1)
    followup: tuple[float, float] = (2.0, 5.0)
    subgroup_probs: Optional[list[float]] = None
    change_time: Optional[float] = Field(None, gt=0)
    hazard_factor: float = Field(1.0, gt=0)

    def build(self) -> TrialDesign:
        d = self.model_dump(exclude={"cell_params_file"})
        if d["subgroup_probs"] is not None:
            d["subgroup_probs"] = tuple(d["subgroup_probs"])
        return TrialDesign(**d)


class RunConfig(_Strict):
    """One analysis run. ``seed`` is required; every other setting has a default."""

    seed: int = Field(ge=0, lt=2**63)
    patients_file: Optional[str] = None
    summary_file: Optional[str] = None
    output_dir: str = "bivsub-out"
    scheme: Optional[list[FactorSpec]] = None
    models: list[str] = ["saturated"]
    hyperparams: HyperparamsSpec = HyperparamsSpec()
    sampler: SamplerSpec = SamplerSpec()
    measures: MeasuresSpec = MeasuresSpec()
    checking: CheckingSpec = CheckingSpec()
    simulate: Optional[SimulateSpec] = None

    @field_validator("models")
    @classmethod
    def _models(cls, v):
        if not v:
            raise ValueError("at least one model is required")
        for m in v:
            ModelSpec.parse(m)
        if len(set(v)) != len(v):
            raise ValueError("models must be distinct")
        return v

    @model_validator(mode="after")
    def _inputs(self):
        if (self.patients_file is None) == (self.summary_file is None):
            raise ValueError("exactly one of patients_file and summary_file must be given")
        if self.patients_file is not None and self.scheme is None:
            raise ValueError("scheme is required with patients_file")
        return self

    def factor_scheme(self) -> FactorScheme | None:
        if self.scheme is None:
            return None
        return FactorScheme.from_levels([(f.name, tuple(f.levels)) for f in self.scheme])

    def model_specs(self) -> list[ModelSpec]:
        return [ModelSpec.parse(m) for m in self.models]

    def config_hash(self) -> str:
        """SHA-256 of the canonical settings; the output directory is excluded
        so relocating outputs does not change it."""
        payload = json.dumps(self.model_dump(mode="json", exclude={"output_dir"}), sort_keys=True)
        return hashlib.sha256(payload.encode()).hexdigest()

    def resolved_output_dir(self) -> Path:
        return Path(os.environ.get(OUTPUT_DIR_ENV) or self.output_dir)

    def provenance(self) -> dict:
        return {"config_hash": self.config_hash(), "version": __version__}


def load_config(path: str | Path) -> RunConfig:
    """Parse and validate a JSON config; relative paths resolve against its folder."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from None
    return parse_config(raw, base=path.parent)


def parse_config(raw: dict, base: str | Path | None = None) -> RunConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    try:
        cfg = RunConfig.model_validate(raw)
    except ValidationError as exc:
        problems = []
        for err in exc.errors():
            loc = ".".join(str(p) for p in err["loc"]) or "config"
            msg = "unknown key" if err["type"] == "extra_forbidden" else err["msg"]
            problems.append(f"{loc}: {msg}")
        raise ConfigError("invalid config:\n  " + "\n  ".join(problems)) from None
    if base is not None:
        updates = {}
        for key in ("patients_file", "summary_file", "output_dir"):
            v = getattr(cfg, key)
            if v is not None and not Path(v).is_absolute():
                updates[key] = str(Path(base) / v)
        if cfg.simulate is not None and not Path(cfg.simulate.cell_params_file).is_absolute():
            sim = cfg.simulate.model_copy(
                update={"cell_params_file": str(Path(base) / cfg.simulate.cell_params_file)})
            updates["simulate"] = sim
        cfg = cfg.model_copy(update=updates)
    return cfg


def defaults_text() -> str:
    """Human-readable defaults for ``--help``."""
    lines = []
    for name, spec in (("hyperparams", HyperparamsSpec()), ("sampler", SamplerSpec()),
                       ("measures", MeasuresSpec()), ("checking", CheckingSpec())):
        items = ", ".join(f"{k}={v}" for k, v in spec.model_dump().items())
        lines.append(f"  {name}: {items}")
    lines.append('  models=["saturated"], output_dir="bivsub-out"')
    return "\n".join(lines)


__all__ = ["RunConfig", "ConfigError", "load_config", "parse_config", "defaults_text", "OUTPUT_DIR_ENV"]
