"""
Pydantic v2 models for JSON documents written next to result tables.

Documents:
- ArchiveMetadata: provenance of a posterior archive (seed, config, acceptance)
- TruthRecord: generating parameters of synthetic data
- ModelRecord: fixed covariate summaries a model needs to be rebuilt from files
- OptimumDocument: serialized optimization result

Version: 1.0.0
"""

from typing import Any, Literal

from pydantic import BaseModel, ConfigDict, Field, model_validator

from gpcal import __version__


class ArchiveMetadata(BaseModel):
    """Provenance of a PosteriorArchive"""

    model_config = ConfigDict(extra="forbid", frozen=True)

    scenario: Literal["ignore", "gp"]
    source: Literal["sampler", "laplace"] = "sampler"
    parameter_names: list[str] = Field(..., min_length=1)
    stream_names: list[str] = Field(..., min_length=1)
    seed: int = Field(..., ge=0)
    config_fingerprint: str = Field(..., min_length=64, max_length=64)
    config: dict[str, Any] = Field(default_factory=dict, description="Validated RunConfig dump")
    chains: int = Field(..., ge=1)
    populations: int = Field(..., ge=1)
    cycles: int = Field(..., ge=0)
    burn_in: int = Field(..., ge=0)
    thin: int = Field(..., ge=1)
    samples_per_chain: int = Field(..., ge=0)
    acceptance: dict[str, float] = Field(default_factory=dict, description="Acceptance rate per block")
    support_rule: Literal["grid", "equidistant"] = "grid"
    n_supports: int | None = Field(default=None, ge=2)
    version: str = __version__

    @model_validator(mode="after")
    def validate_names(self):
        """Column names derived from parameters and streams must not collide"""
        reserved = {"chain", "population", "cycle", "logp"}
        clash = reserved.intersection(self.parameter_names)
        if clash:
            raise ValueError(f"Parameter names clash with archive columns: {sorted(clash)}")
        if len(set(self.parameter_names)) != len(self.parameter_names):
            raise ValueError("Parameter names must be unique")
        if len(set(self.stream_names)) != len(self.stream_names):
            raise ValueError("Stream names must be unique")
        if self.support_rule == "equidistant" and self.n_supports is None:
            raise ValueError("n_supports is required for equidistant supports")
        return self


class TruthRecord(BaseModel):
    """Generating parameters of a synthetic data set"""

    model_config = ConfigDict(extra="forbid", frozen=True)

    kind: str
    parameters: dict[str, float]
    noise_sd: dict[str, float]
    seed: int
    extra: dict[str, float] = Field(default_factory=dict)


class ModelRecord(BaseModel):
    """Fixed quantities of the model layout stored with the data"""

    model_config = ConfigDict(extra="forbid", frozen=True)

    kind: str
    x1_sparse: float | None = None
    xbar_rich: float | None = None
    design_file: str | None = None


class OptimumDocument(BaseModel):
    """Serialized OptimumReport"""

    model_config = ConfigDict(extra="forbid", frozen=True, ser_json_inf_nan="constants")

    scenario: Literal["ignore", "gp-fixed"]
    parameter_names: list[str]
    theta_hat: list[float]
    neg_logp: float
    hessian: list[list[float]]
    laplace_cov: list[list[float]] | None
    converged: bool
    iterations: int = Field(..., ge=0)
    message: str = ""
    fixed_gp: dict[str, dict[str, Any]] = Field(default_factory=dict)
    config_fingerprint: str
    version: str = __version__
