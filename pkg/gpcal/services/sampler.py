"""
Block-at-a-time Metropolis-Hastings sampler with DEMC proposals.

Responsibilities:
- Initialize chains (θ from the prior box, ψ near r/3, σ² at its prior mode)
- Per cycle and chain: a Metropolis block for each ψ_k, a Gibbs block for each
  σ²_k, then a Metropolis block for θ (the ignore scenario runs the θ block only)
- Keep each chain's cached log-density equal to a fresh evaluation of its state
- Synchronize chains once per cycle: proposals read the previous cycle's
  snapshot of the other chains in the same population
- Collect thinned post-burn-in samples into a PosteriorArchive

Each chain owns a generator spawned from the master seed, so results do not
depend on the number of worker threads.

Version: 1.0.0
"""

import logging
import math
from collections import Counter
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
import pandas as pd

from gpcal.core.errors import ConfigurationError, InitializationError, SingularityError
from gpcal.core.gp import (
    DiscrepancyEstimate,
    SupportSelection,
    psi_truncation_bounds,
    select_supporting_points,
)
from gpcal.core.models import ForwardModel
from gpcal.core.streams import ObservationStream
from gpcal.schemas.config import RunConfig, SamplerSettings
from gpcal.schemas.results import ArchiveMetadata
from gpcal.services.archive import ID_COLUMNS, PosteriorArchive, psi_column, sigma2_column
from gpcal.services.demc import demc_propose, draw_gamma, metropolis_accept
from gpcal.services.densities import (
    GpHyperState,
    Priors,
    correlation_matrix,
    evaluate_gp,
    gibbs_sigma2,
    log_conditional_psi,
    log_density_ignore,
    resolve_priors,
)

logger = logging.getLogger(__name__)

MAX_INIT_ATTEMPTS = 50
PSI_JITTER = 1e-6
PROGRESS_STEPS = 10


@dataclass
class ChainState:
    """
    State of one chain.

    Attributes:
        chain_id: Global chain index
        population: Population the chain draws DEMC partners from
        theta: Model parameters
        hyper: ψ and normalized σ² per stream (GP scenario)
        support: Supporting locations per stream (GP scenario)
        discrepancy: Conditional discrepancy per stream at the current state
        stream_terms: Data term plus penalty per stream at the current state
        predictions: g(θ) per stream at the current θ
        cached_logp: Log-density of the current state
    """

    chain_id: int
    population: int
    theta: np.ndarray
    hyper: dict[str, GpHyperState] = field(default_factory=dict)
    support: dict[str, SupportSelection] = field(default_factory=dict)
    discrepancy: dict[str, DiscrepancyEstimate] = field(default_factory=dict)
    stream_terms: dict[str, float] = field(default_factory=dict)
    predictions: dict[str, np.ndarray] = field(default_factory=dict)
    cached_logp: float = -math.inf
    proposed: Counter = field(default_factory=Counter)
    accepted: Counter = field(default_factory=Counter)
    records: list[tuple] = field(default_factory=list)


@dataclass(frozen=True)
class Snapshot:
    """States of all chains at the start of a cycle, grouped by population."""

    theta: dict[int, np.ndarray]
    log_psi: dict[int, dict[str, np.ndarray]]


class BlockSampler:
    """
    Multi-population DEMC sampler for the ignore and GP scenarios.

    Usage:
        sampler = BlockSampler(model, streams, settings, priors, "gp")
        archive = sampler.run(seed=1)
    """

    def __init__(
        self,
        model: ForwardModel,
        streams: Sequence[ObservationStream],
        settings: SamplerSettings,
        priors: Priors,
        scenario: str,
        *,
        workers: int = 1,
    ):
        """
        Validate the run layout.

        Raises:
            ConfigurationError: On an unknown scenario, too few chains, streams that
                do not match the model, or GP streams without a location range
        """
        if scenario not in ("ignore", "gp"):
            raise ConfigurationError("Unknown scenario", scenario=scenario)
        model.check_streams(streams)
        by_name = {s.name: s for s in streams}
        self.streams = [by_name[name] for name in model.stream_names]
        self.model = model
        self.settings = settings
        self.priors = priors
        self.scenario = scenario
        self.workers = max(1, int(workers))

        d = model.dimension
        required = max(4, d + 1)
        if settings.chains < required:
            raise ConfigurationError(
                "Too few chains for the parameter dimension", chains=settings.chains, required=required
            )
        if scenario == "gp":
            for stream in self.streams:
                if stream.n < 2 or stream.location_range <= 0:
                    raise ConfigurationError("GP scenario needs two distinct locations per stream", stream=stream.name)
                if stream.name not in priors.psi:
                    raise ConfigurationError("Missing ψ prior for stream", stream=stream.name)

        self.init_lower, self.init_upper = self._init_box()
        span = priors.theta_upper - priors.theta_lower
        fallback = self.init_upper - self.init_lower
        self.theta_jitter = settings.jitter * np.where(np.isfinite(span), span, fallback)

        logger.info(
            f"BlockSampler initialized: scenario={scenario}, chains={settings.chains}, "
            f"populations={settings.populations}, dimension={d}, streams={[s.name for s in self.streams]}"
        )

    def _init_box(self) -> tuple[np.ndarray, np.ndarray]:
        if self.settings.init_lower is not None:
            lower = np.asarray(self.settings.init_lower, dtype=float)
            upper = np.asarray(self.settings.init_upper, dtype=float)
            if lower.shape != (self.model.dimension,) or upper.shape != lower.shape:
                raise ConfigurationError("Init box length differs from model dimension")
        else:
            lower, upper = self.priors.theta_lower, self.priors.theta_upper
        if self.settings.initial_theta is None and not (np.all(np.isfinite(lower)) and np.all(np.isfinite(upper))):
            raise ConfigurationError("Initialization needs a finite box: set init_lower/init_upper or prior bounds")
        return lower, upper

    # -- initialization -------------------------------------------------

    def _initial_hyper(self, stream: ObservationStream, rng: np.random.Generator) -> tuple[GpHyperState, SupportSelection]:
        r = stream.location_range
        psi = min(r / 3.0 * math.exp(self.settings.psi_init_spread * rng.standard_normal()), r)
        support = select_supporting_points(stream.locations, psi, rng)
        lower, upper = psi_truncation_bounds(stream.locations, support)
        psi = float(np.clip(psi, lower, upper))
        return GpHyperState(psi, self.priors.sigma2_prior_mode, stream.sigma2_eps_mean), support

    def _refresh(self, chain: ChainState) -> None:
        """Recompute the cached log-density and latent discrepancies from the chain state."""
        if self.scenario == "ignore":
            chain.cached_logp = log_density_ignore(chain.theta, self.streams, self.model, self.priors)
            return
        ev = evaluate_gp(chain.theta, chain.hyper, chain.support, self.streams, self.model, self.priors)
        chain.cached_logp = ev.logp
        chain.stream_terms = ev.stream_terms
        chain.discrepancy = ev.estimates
        chain.predictions = ev.predictions

    def initialize(self, rngs: Sequence[np.random.Generator]) -> list[ChainState]:
        """
        Start every chain at a state with finite log-density if possible.

        Raises:
            InitializationError: If no chain reaches a finite log-density
        """
        per_population = self.settings.chains_per_population
        chains = []
        for i, rng in enumerate(rngs):
            chain = ChainState(i, i // per_population, np.zeros(self.model.dimension))
            attempts = 1 if self.settings.initial_theta is not None else MAX_INIT_ATTEMPTS
            for _ in range(attempts):
                if self.settings.initial_theta is not None:
                    chain.theta = np.asarray(self.settings.initial_theta[i], dtype=float)
                else:
                    chain.theta = rng.uniform(self.init_lower, self.init_upper)
                if self.scenario == "gp":
                    for stream in self.streams:
                        chain.hyper[stream.name], chain.support[stream.name] = self._initial_hyper(stream, rng)
                self._refresh(chain)
                if math.isfinite(chain.cached_logp):
                    break
            chains.append(chain)

        finite = [c.chain_id for c in chains if math.isfinite(c.cached_logp)]
        if not finite:
            raise InitializationError(
                "No chain could be initialized at a finite log-density",
                chains=len(chains),
                attempts=MAX_INIT_ATTEMPTS,
                init_lower=self.init_lower.tolist(),
                init_upper=self.init_upper.tolist(),
            )
        if len(finite) < len(chains):
            logger.warning(f"{len(chains) - len(finite)} chains start at -inf and accept their first finite proposal")
        return chains

    # -- blocks ---------------------------------------------------------

    def _snapshot(self, chains: Sequence[ChainState]) -> Snapshot:
        theta: dict[int, list] = {}
        log_psi: dict[int, dict[str, list]] = {}
        for chain in chains:
            theta.setdefault(chain.population, []).append(chain.theta.copy())
            per_stream = log_psi.setdefault(chain.population, {})
            for name, hyper in chain.hyper.items():
                per_stream.setdefault(name, []).append(math.log(hyper.psi))
        return Snapshot(
            {p: np.vstack(v) for p, v in theta.items()},
            {p: {k: np.asarray(v) for k, v in s.items()} for p, s in log_psi.items()},
        )

    def _psi_block(self, chain: ChainState, stream: ObservationStream, snapshot: Snapshot, rng: np.random.Generator) -> None:
        name = stream.name
        hyper = chain.hyper[name]
        prior = self.priors.psi[name]
        index = chain.chain_id % self.settings.chains_per_population

        current_term = chain.stream_terms.get(name, -math.inf)
        log_current = current_term + prior.logpdf(hyper.psi) + math.log(hyper.psi)

        gamma = draw_gamma(1, rng, jump_probability=self.settings.jump_probability)
        population = snapshot.log_psi[chain.population][name][:, None]
        log_psi = float(demc_propose([math.log(hyper.psi)], population, index, gamma, PSI_JITTER, rng)[0])
        psi = math.exp(log_psi)

        chain.proposed[psi_column(name)] += 1
        if name not in chain.predictions:
            return
        ev = log_conditional_psi(psi, stream, chain.predictions[name], hyper.sigma2_d, prior, rng)
        log_proposed = ev.logp + log_psi if math.isfinite(ev.logp) else -math.inf
        if metropolis_accept(log_current, log_proposed, rng):
            chain.accepted[psi_column(name)] += 1
            chain.hyper[name] = replace(hyper, psi=psi)
            chain.support[name] = ev.support
            chain.stream_terms[name] = ev.stream_term
            chain.discrepancy[name] = ev.estimate

    def _sigma2_block(self, chain: ChainState, stream: ObservationStream, rng: np.random.Generator) -> None:
        name = stream.name
        est = chain.discrepancy.get(name)
        if est is None:
            return
        hyper = chain.hyper[name]
        try:
            Lambda = correlation_matrix(stream.locations, chain.support[name], hyper.psi)
            sigma2 = gibbs_sigma2(est.delta_s, Lambda, stream.sigma2_eps_mean, self.priors, rng)
        except SingularityError as e:
            logger.warning(f"σ² draw skipped for chain {chain.chain_id}, stream {name}: {e}")
            return
        chain.hyper[name] = replace(hyper, sigma2_norm=sigma2)

    def _theta_block(self, chain: ChainState, snapshot: Snapshot, rng: np.random.Generator) -> None:
        index = chain.chain_id % self.settings.chains_per_population
        gamma = draw_gamma(
            self.model.dimension, rng, gamma=self.settings.gamma, jump_probability=self.settings.jump_probability
        )
        proposal = demc_propose(chain.theta, snapshot.theta[chain.population], index, gamma, self.theta_jitter, rng)
        chain.proposed["theta"] += 1

        if self.scenario == "ignore":
            log_proposed = log_density_ignore(proposal, self.streams, self.model, self.priors)
            if metropolis_accept(chain.cached_logp, log_proposed, rng):
                chain.accepted["theta"] += 1
                chain.theta = proposal
                chain.cached_logp = log_proposed
            return

        ev = evaluate_gp(proposal, chain.hyper, chain.support, self.streams, self.model, self.priors)
        if metropolis_accept(chain.cached_logp, ev.logp, rng):
            chain.accepted["theta"] += 1
            chain.theta = proposal
            chain.cached_logp = ev.logp
            chain.stream_terms = ev.stream_terms
            chain.discrepancy = ev.estimates
            chain.predictions = ev.predictions

    def _cycle(self, chain: ChainState, snapshot: Snapshot, rng: np.random.Generator, cycle: int) -> None:
        if self.scenario == "gp":
            for stream in self.streams:
                self._psi_block(chain, stream, snapshot, rng)
            for stream in self.streams:
                self._sigma2_block(chain, stream, rng)
            self._refresh(chain)
        self._theta_block(chain, snapshot, rng)

        burn_in = self.settings.effective_burn_in
        if cycle >= burn_in and (cycle - burn_in) % self.settings.thin == 0:
            chain.records.append(self._record(chain, cycle))

    def _record(self, chain: ChainState, cycle: int) -> tuple:
        row = [chain.chain_id, chain.population, cycle, *chain.theta.tolist()]
        if self.scenario == "gp":
            row += [chain.hyper[s.name].psi for s in self.streams]
            row += [chain.hyper[s.name].sigma2_norm for s in self.streams]
        return (*row, chain.cached_logp)

    # -- run --------------------------------------------------------------

    def columns(self) -> list[str]:
        columns = [*ID_COLUMNS, *self.model.parameter_names]
        if self.scenario == "gp":
            columns += [psi_column(s.name) for s in self.streams]
            columns += [sigma2_column(s.name) for s in self.streams]
        return [*columns, "logp"]

    def run(self, seed: int | None = None, *, config: RunConfig | None = None) -> PosteriorArchive:
        """
        Run all cycles and collect the archive.

        Args:
            seed: Master seed (default: settings.seed)
            config: Run configuration recorded in the archive metadata

        Raises:
            InitializationError: If no chain starts at a finite log-density
            ModelEvaluationError: If the forward model fails
        """
        seed = self.settings.seed if seed is None else int(seed)
        cycles = self.settings.cycles
        rngs = [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(self.settings.chains)]
        chains = self.initialize(rngs)
        logger.info(f"Sampling {cycles} cycles (burn-in {self.settings.effective_burn_in}, thin {self.settings.thin}), seed={seed}")

        step = max(1, cycles // PROGRESS_STEPS)
        with ThreadPoolExecutor(max_workers=self.workers) as pool:
            for cycle in range(cycles):
                snapshot = self._snapshot(chains)
                if self.workers > 1:
                    list(pool.map(lambda pair: self._cycle(pair[0], snapshot, pair[1], cycle), zip(chains, rngs, strict=True)))
                else:
                    for chain, rng in zip(chains, rngs, strict=True):
                        self._cycle(chain, snapshot, rng, cycle)
                if (cycle + 1) % step == 0:
                    logps = [c.cached_logp for c in chains if math.isfinite(c.cached_logp)]
                    mean_logp = float(np.mean(logps)) if logps else -math.inf
                    logger.debug(f"Cycle {cycle + 1}/{cycles}: mean logp={mean_logp:.6g}")

        acceptance = self._acceptance(chains)
        logger.info("Acceptance rates: " + ", ".join(f"{k}={v:.3f}" for k, v in acceptance.items()))
        return self._archive(chains, seed, config, acceptance)

    @staticmethod
    def _acceptance(chains: Sequence[ChainState]) -> dict[str, float]:
        proposed: Counter = Counter()
        accepted: Counter = Counter()
        for chain in chains:
            proposed.update(chain.proposed)
            accepted.update(chain.accepted)
        return {k: accepted[k] / n for k, n in sorted(proposed.items()) if n > 0}

    def _archive(
        self, chains: Sequence[ChainState], seed: int, config: RunConfig | None, acceptance: dict[str, float]
    ) -> PosteriorArchive:
        config = config or RunConfig()
        rows = sorted((r for c in chains for r in c.records), key=lambda r: (r[2], r[0]))
        frame = pd.DataFrame(rows, columns=self.columns())
        metadata = ArchiveMetadata(
            scenario=self.scenario,
            source="sampler",
            parameter_names=list(self.model.parameter_names),
            stream_names=[s.name for s in self.streams],
            seed=seed,
            config_fingerprint=config.fingerprint(),
            config=config.model_dump(mode="json"),
            chains=self.settings.chains,
            populations=self.settings.populations,
            cycles=self.settings.cycles,
            burn_in=self.settings.effective_burn_in,
            thin=self.settings.thin,
            samples_per_chain=len(chains[0].records) if chains else 0,
            acceptance=acceptance,
        )
        return PosteriorArchive.from_frame(frame, metadata)


def run_sampler(
    config: RunConfig,
    model: ForwardModel,
    streams: Sequence[ObservationStream],
    scenario: str | None = None,
    rng_seed: int | None = None,
    *,
    workers: int = 1,
) -> PosteriorArchive:
    """
    Run the block sampler for a validated configuration.

    Args:
        config: Validated run configuration
        model: Forward model
        streams: Observation streams (must cover the model's streams)
        scenario: "ignore" or "gp" (default: config.scenario)
        rng_seed: Master seed (default: config.sampler.seed)
        workers: Threads evaluating chains within a cycle

    Returns:
        PosteriorArchive with provenance metadata
    """
    config = config.with_overrides(scenario=scenario, seed=rng_seed)
    priors = resolve_priors(config.priors, model, streams)
    sampler = BlockSampler(model, streams, config.sampler, priors, config.scenario, workers=workers)
    return sampler.run(config=config)

