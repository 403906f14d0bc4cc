"""Experiment configuration: YAML documents validated by pydantic, per-sampler
parameter presets and process-level settings read from the environment.
"""
from typing import Annotated, Any, Dict, List, Literal, Optional

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError
from pydantic_settings import BaseSettings, SettingsConfigDict

from mlmc.calibration import RatePrior, VariancePriorConfig
from mlmc.continuation import ContinuationConfig, InitialLevel, initial_levels
from mlmc.estimator import c_alpha_from_confidence
from mlmc.standard import StandardConfig
from samplers import build_sampler
from samplers.base import CoupledSampler
from shared.errors import ConfigError

# Continuation parameters per sampler; SDE column for gbm/synthetic, PDE column for elliptic
PRESETS: Dict[str, Dict[str, Any]] = {
    "gbm": {
        "tol_max": 0.1, "r1": 2.0, "r2": 1.1, "l_inc": 2, "fit_levels": 5, "c_alpha": 2.0,
        "kappa0": 0.1, "kappa1": 0.1, "initial_levels": 3, "initial_samples": 10,
        "prior_q1": 1.0, "prior_q2": 1.0, "prior_sigma": 1.0,
    },
    "synthetic": {
        "tol_max": 0.1, "r1": 2.0, "r2": 1.1, "l_inc": 2, "fit_levels": 5, "c_alpha": 2.0,
        "kappa0": 0.1, "kappa1": 0.1, "initial_levels": 3, "initial_samples": 10,
        "prior_q1": 1.0, "prior_q2": 1.0, "prior_sigma": 1.0,
    },
    "elliptic": {
        "tol_max": 0.5, "r1": 2.0, "r2": 1.1, "l_inc": 2, "fit_levels": 3, "c_alpha": 2.0,
        "kappa0": 0.1, "kappa1": 0.1, "initial_levels": 3, "initial_samples": 10,
        # q2 = 4 = 2*q1 has no image under x1 = log(2*q1 - q2), so the prior sits just inside
        "prior_q1": 2.0, "prior_q2": 3.5, "prior_sigma": 1.0,
    },
}


class HarnessSettings(BaseSettings):
    """Process-level settings from MLMC_* environment variables"""

    model_config = SettingsConfigDict(env_prefix="MLMC_", extra="ignore")

    log_level: str = "INFO"
    threads: int = Field(default=1, ge=1)
    output_root: str = "results"


class SamplerSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    name: Literal["gbm", "synthetic", "elliptic"]
    params: Dict[str, Any] = Field(default_factory=dict)


class CMLMCSpec(BaseModel):
    """Continuation settings; None falls back to the sampler preset"""

    model_config = ConfigDict(extra="forbid")

    tol_max: Optional[float] = Field(default=None, gt=0)
    r1: Optional[float] = None
    r2: Optional[float] = None
    c_alpha: Optional[float] = Field(default=None, gt=0)
    confidence: Optional[float] = Field(default=None, gt=0, lt=1)
    l_inc: Optional[int] = Field(default=None, ge=1)
    fit_levels: Optional[int] = Field(default=None, ge=1)
    max_levels: int = Field(default=20, ge=2)
    reuse_samples: bool = False
    initial_hierarchy: Optional[List[InitialLevel]] = None
    rate_prior: Optional[RatePrior] = None
    var_prior: Optional[VariancePriorConfig] = None
    theta_min: float = Field(default=0.01, gt=0, lt=1)
    max_iterations: int = Field(default=50, ge=1)


class SMLMCSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    m_tilde: int = Field(default=25, ge=1)
    theta: float = Field(default=0.5, gt=0, lt=1)
    q1: Optional[float] = Field(default=None, gt=0)
    c_alpha: Optional[float] = Field(default=None, gt=0)
    confidence: Optional[float] = Field(default=None, gt=0, lt=1)
    reuse_samples: bool = True
    max_levels: int = Field(default=20, ge=2)


class AlgorithmSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    name: Literal["cmlmc", "smlmc"] = "cmlmc"
    cmlmc: CMLMCSpec = Field(default_factory=CMLMCSpec)
    smlmc: SMLMCSpec = Field(default_factory=SMLMCSpec)


class EmitSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    records: bool = True
    errors: bool = True
    work: bool = True
    qq: bool = True
    theta: bool = True
    levels: bool = True


class ExperimentConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    name: str = "experiment"
    sampler: SamplerSpec
    algorithm: AlgorithmSpec = Field(default_factory=AlgorithmSpec)
    tolerances: List[Annotated[float, Field(gt=0, allow_inf_nan=False)]] = Field(min_length=1)
    repetitions: int = Field(default=1, ge=1)
    base_seed: int = 0
    output_dir: Optional[str] = None
    reference: Optional[float] = None
    emit: EmitSpec = Field(default_factory=EmitSpec)

    @property
    def reuse_samples(self) -> bool:
        opts = self.algorithm.cmlmc if self.algorithm.name == "cmlmc" else self.algorithm.smlmc
        return opts.reuse_samples

    def variant_label(self) -> str:
        """Algorithm variant name used in comparison tables"""
        if self.algorithm.name == "cmlmc":
            label = "cmlmc"
        else:
            opts = self.algorithm.smlmc
            label = f"smlmc-m{opts.m_tilde}-t{opts.theta:g}"
        return label + ("-reuse" if self.reuse_samples else "")


def _field_path(error: Dict[str, Any]) -> str:
    return ".".join(str(part) for part in error["loc"]) or "config"


def parse_config(data: Any) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError("config", "top level must be a mapping")
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        first = exc.errors()[0]
        raise ConfigError(_field_path(first), first["msg"]) from exc


def load_config(path: str) -> ExperimentConfig:
    """Read and validate an experiment YAML file"""
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = yaml.safe_load(f)
    except FileNotFoundError as exc:
        raise ConfigError("config", f"file not found: {path}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError("config", f"invalid YAML: {exc}") from exc
    return parse_config(data)


def dump_config(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(cfg.model_dump(mode="json"), sort_keys=True)


def with_overrides(cfg: ExperimentConfig, seed: Optional[int] = None, out: Optional[str] = None,
                   reuse_samples: Optional[bool] = None) -> ExperimentConfig:
    """Apply command-line overrides and revalidate"""
    data = cfg.model_dump(mode="json")
    if seed is not None:
        data["base_seed"] = seed
    if out is not None:
        data["output_dir"] = out
    if reuse_samples is not None:
        data["algorithm"][data["algorithm"]["name"]]["reuse_samples"] = reuse_samples
    return parse_config(data)


def make_sampler(cfg: ExperimentConfig) -> CoupledSampler:
    try:
        return build_sampler(cfg.sampler.name, cfg.sampler.params)
    except (TypeError, ValueError) as exc:
        raise ConfigError("sampler.params", str(exc)) from exc


def _c_alpha(explicit: Optional[float], confidence: Optional[float], preset: float) -> float:
    if explicit is not None:
        return explicit
    if confidence is not None:
        return c_alpha_from_confidence(confidence)
    return preset


def continuation_config(cfg: ExperimentConfig, sampler: CoupledSampler, tol: float) -> ContinuationConfig:
    """Merge the cmlmc section over the sampler preset for one tolerance"""
    opts = cfg.algorithm.cmlmc
    preset = PRESETS[cfg.sampler.name]
    hier = sampler.hierarchy

    initial = opts.initial_hierarchy
    if initial is None:
        initial = [InitialLevel(mesh_size=hier.mesh_size(ell), samples=preset["initial_samples"])
                   for ell in range(preset["initial_levels"])]
    rate_prior = opts.rate_prior or RatePrior.from_rates(
        preset["prior_q1"], preset["prior_q2"], preset["prior_sigma"], preset["prior_sigma"])
    var_prior = opts.var_prior or VariancePriorConfig(kappa0=preset["kappa0"], kappa1=preset["kappa1"])

    return ContinuationConfig(
        tol=tol,
        tol_max=opts.tol_max if opts.tol_max is not None else max(preset["tol_max"], tol),
        r1=opts.r1 if opts.r1 is not None else preset["r1"],
        r2=opts.r2 if opts.r2 is not None else preset["r2"],
        c_alpha=_c_alpha(opts.c_alpha, opts.confidence, preset["c_alpha"]),
        l_inc=opts.l_inc if opts.l_inc is not None else preset["l_inc"],
        fit_levels=opts.fit_levels if opts.fit_levels is not None else preset["fit_levels"],
        max_levels=opts.max_levels,
        reuse_samples=opts.reuse_samples,
        initial_hierarchy=initial,
        rate_prior=rate_prior,
        var_prior=var_prior,
        theta_min=opts.theta_min,
        max_iterations=opts.max_iterations,
    )


def standard_config(cfg: ExperimentConfig, tol: float) -> StandardConfig:
    opts = cfg.algorithm.smlmc
    return StandardConfig(
        tol=tol,
        m_tilde=opts.m_tilde,
        theta=opts.theta,
        q1=opts.q1,
        c_alpha=_c_alpha(opts.c_alpha, opts.confidence, PRESETS[cfg.sampler.name]["c_alpha"]),
        reuse_samples=opts.reuse_samples,
        max_levels=opts.max_levels,
    )


def validate_experiment(cfg: ExperimentConfig) -> None:
    """Build the sampler and every per-tolerance algorithm config, reporting the first failure"""
    sampler = make_sampler(cfg)
    for index, tol in enumerate(cfg.tolerances):
        try:
            if cfg.algorithm.name == "cmlmc":
                initial_levels(continuation_config(cfg, sampler, tol), sampler.hierarchy)
            else:
                standard_config(cfg, tol)
        except ValidationError as exc:
            first = exc.errors()[0]
            raise ConfigError(f"algorithm.{cfg.algorithm.name}.{_field_path(first)}",
                              f"{first['msg']} (tolerances.{index}={tol})") from exc
