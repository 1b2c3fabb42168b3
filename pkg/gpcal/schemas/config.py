"""
Pydantic v2 models for run configuration.

One RunConfig document drives every CLI subcommand. All sections forbid
unknown keys, so typos fail validation instead of being silently ignored.

Version: 1.0.0
"""

import hashlib
from pathlib import Path
from typing import Any, Literal

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from gpcal.core.errors import DataFileError

Scenario = Literal["ignore", "gp"]
ModelKind = Literal["basic-example", "linear-gaussian", "oscillating-line", "external"]


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class SamplerSettings(_Section):
    """Block-at-a-time sampler settings"""

    chains: int = Field(default=8, ge=1, description="Number of chains over all populations")
    populations: int = Field(default=2, ge=1, description="Independent DEMC populations")
    cycles: int = Field(default=4000, ge=0, description="Cycles per chain")
    burn_in: int | None = Field(default=None, ge=0, description="Default: half the cycles")
    thin: int = Field(default=4, ge=1, le=48, description="Thinning interval")
    seed: int = Field(default=0, ge=0)
    gamma: float | None = Field(default=None, gt=0, description="Default: 2.38/sqrt(2d)")
    jump_probability: float = Field(default=0.1, ge=0.0, le=1.0, description="Share of γ=1 jumps")
    jitter: float = Field(default=1e-6, ge=0.0, description="Proposal noise relative to prior range")
    psi_init_spread: float = Field(default=0.25, ge=0.0, description="Log-sd of initial ψ around r/3")
    init_lower: list[float] | None = None
    init_upper: list[float] | None = None
    initial_theta: list[list[float]] | None = None

    @model_validator(mode="after")
    def validate_populations(self):
        """Chains split evenly into populations of at least three"""
        if self.chains % self.populations != 0:
            raise ValueError(
                f"chains ({self.chains}) must be divisible by populations ({self.populations})"
            )
        if self.chains // self.populations < 3:
            raise ValueError("Each population needs at least 3 chains for DEMC proposals")
        if (self.init_lower is None) != (self.init_upper is None):
            raise ValueError("init_lower and init_upper must be given together")
        if self.initial_theta is not None and len(self.initial_theta) != self.chains:
            raise ValueError("initial_theta needs one vector per chain")
        return self

    @property
    def effective_burn_in(self) -> int:
        return self.cycles // 2 if self.burn_in is None else self.burn_in

    @property
    def chains_per_population(self) -> int:
        return self.chains // self.populations


class GammaPriorSettings(_Section):
    """Gamma prior of one stream's correlation length"""

    shape: float = Field(..., gt=0)
    rate: float = Field(..., gt=0)


class PriorSettings(_Section):
    """Hyperpriors and parameter bounds"""

    psi_prior: Literal["moments", "fixed"] = Field(
        default="moments", description="Gamma from mean r/3 and variance r²/3.2, or fixed a/b"
    )
    psi_mean_fraction: float = Field(default=1.0 / 3.0, gt=0)
    psi_variance_divisor: float = Field(default=3.2, gt=0)
    a_psi: float = Field(default=1.14, gt=0)
    b_psi: float = Field(default=0.188, gt=0)
    b_psi_kind: Literal["rate", "scale"] = "rate"
    stream_psi: dict[str, GammaPriorSettings] = Field(default_factory=dict)
    alpha_sigma2: float = Field(default=1.005, gt=0)
    beta_sigma2: float = Field(default=0.1, gt=0)
    theta_lower: list[float] | None = None
    theta_upper: list[float] | None = None

    @model_validator(mode="after")
    def validate_bounds(self):
        """Bounds come in pairs with lower < upper"""
        if (self.theta_lower is None) != (self.theta_upper is None):
            raise ValueError("theta_lower and theta_upper must be given together")
        if self.theta_lower is not None:
            if len(self.theta_lower) != len(self.theta_upper):
                raise ValueError("theta_lower and theta_upper differ in length")
            if any(lo >= hi for lo, hi in zip(self.theta_lower, self.theta_upper, strict=True)):
                raise ValueError("theta_lower must be below theta_upper")
        return self


class ModelSettings(_Section):
    """Forward model used for inversion"""

    kind: ModelKind = "basic-example"
    bias: float = Field(default=0.1, description="Bias constant c of the basic example")
    entry_point: str | None = Field(default=None, description="package.module:factory")
    options: dict[str, Any] = Field(default_factory=dict)

    @model_validator(mode="after")
    def validate_entry_point(self):
        """External models need an entry point"""
        if self.kind == "external" and not self.entry_point:
            raise ValueError("model.entry_point is required for kind 'external'")
        return self


class BasicExampleConfig(_Section):
    """Synthetic data of the two-stream basic example"""

    n_rich: int = Field(default=1000, gt=0)
    n_sparse: int = Field(default=10, gt=0)
    sparse_range: tuple[float, float] = (0.5, 1.5)
    rich_range: tuple[float, float] = (0.7, 1.0)
    a_true: float = Field(default=1.0, gt=0)
    b_true: float = Field(default=2.0, gt=0)
    c_true: float = Field(default=0.3, gt=0)
    sparse_noise_fraction: float = Field(default=0.04, gt=0)
    rich_noise_fraction: float = Field(default=0.03, gt=0)
    seed: int = Field(default=42, ge=0)

    @field_validator("sparse_range", "rich_range")
    @classmethod
    def validate_range(cls, v):
        """Ranges are positive and ordered"""
        lo, hi = v
        if not (0 < lo < hi):
            raise ValueError(f"Range must satisfy 0 < low < high, got {v}")
        return v


class LinearGaussianConfig(_Section):
    """Synthetic data of the linear-Gaussian test model"""

    n: int = Field(default=50, gt=1)
    theta_true: list[float] = Field(default_factory=lambda: [1.0, -0.5], min_length=1)
    noise_sd: float = Field(default=0.1, gt=0)
    seed: int = Field(default=42, ge=0)


class OscillatingLineConfig(_Section):
    """Synthetic data of a line plus an oscillation"""

    n: int = Field(default=60, gt=1)
    x_range: tuple[float, float] = (0.0, 10.0)
    intercept: float = 1.0
    slope: float = 0.5
    amplitude: float = Field(default=1.0, ge=0)
    period: float = Field(default=4.0, gt=0)
    noise_sd: float = Field(default=0.2, gt=0)
    seed: int = Field(default=42, ge=0)


class DataSettings(_Section):
    """Generator settings per example kind"""

    basic_example: BasicExampleConfig = Field(default_factory=BasicExampleConfig)
    linear_gaussian: LinearGaussianConfig = Field(default_factory=LinearGaussianConfig)
    oscillating_line: OscillatingLineConfig = Field(default_factory=OscillatingLineConfig)


class OptimizeSettings(_Section):
    """Gradient-based optimization settings"""

    scenario: Literal["ignore", "gp-fixed"] = "ignore"
    gtol: float = Field(default=1e-8, gt=0)
    ftol: float = Field(default=1e-10, ge=0)
    max_iter: int = Field(default=500, gt=0)
    fd_step: float = Field(default=1e-6, gt=0)
    hessian_step: float = Field(default=1e-4, gt=0)
    n_supports: int = Field(default=4, ge=2)
    signal_multiplier: float = Field(default=1.5, gt=0)
    signal_reading: Literal["sd", "variance"] = Field(
        default="sd", description="Multiplier applies to σ_ε (sd) or σ²_ε (variance)"
    )
    theta0: list[float] | None = None
    laplace_draws: int = Field(default=1000, ge=0)
    seed: int = Field(default=0, ge=0)


class ReportSettings(_Section):
    """Summaries and predictive bands"""

    band_quantiles: tuple[float, float, float] = (0.025, 0.5, 0.975)
    summary_quantiles: list[float] = Field(default_factory=lambda: [0.025, 0.25, 0.5, 0.75, 0.975])
    max_draws: int = Field(default=500, gt=0)
    realizations: int = Field(default=5, ge=0)
    seed: int = Field(default=0, ge=0)

    @field_validator("band_quantiles")
    @classmethod
    def validate_band(cls, v):
        """Band quantiles are ascending inside (0, 1)"""
        if not (0 < v[0] < v[1] < v[2] < 1):
            raise ValueError(f"Band quantiles must be ascending inside (0, 1), got {v}")
        return v

    @field_validator("summary_quantiles")
    @classmethod
    def validate_summary(cls, v):
        """Summary quantiles inside [0, 1]"""
        if not v or any(not (0 <= q <= 1) for q in v):
            raise ValueError("Summary quantiles must lie in [0, 1]")
        return sorted(v)


class RunConfig(_Section):
    """Complete configuration of a gpcal run"""

    scenario: Scenario = "gp"
    sampler: SamplerSettings = Field(default_factory=SamplerSettings)
    priors: PriorSettings = Field(default_factory=PriorSettings)
    model: ModelSettings = Field(default_factory=ModelSettings)
    data: DataSettings = Field(default_factory=DataSettings)
    optimize: OptimizeSettings = Field(default_factory=OptimizeSettings)
    report: ReportSettings = Field(default_factory=ReportSettings)
    streams: dict[str, str] = Field(default_factory=dict, description="Stream file overrides")

    def fingerprint(self) -> str:
        """SHA-256 of the canonical JSON form of this configuration."""
        return hashlib.sha256(self.model_dump_json().encode("utf-8")).hexdigest()

    def with_overrides(self, scenario: str | None = None, seed: int | None = None) -> "RunConfig":
        """Copy with CLI overrides applied (re-validated)."""
        data = self.model_dump()
        if scenario is not None:
            data["scenario"] = scenario
        if seed is not None:
            data["sampler"]["seed"] = seed
        return RunConfig.model_validate(data)


def load_run_config(path: str | Path | None) -> RunConfig:
    """
    Load and validate a JSON run configuration.

    Args:
        path: Config file; None gives the defaults

    Raises:
        DataFileError: If the file cannot be read
        ValidationError: If the content is invalid or has unknown keys
    """
    if path is None:
        return RunConfig()
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise DataFileError("Cannot read config file", path=str(path)) from e
    return RunConfig.model_validate_json(text)
