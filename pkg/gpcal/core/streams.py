"""
Observation data streams.

A stream holds one quality of observations (one instrument, one record type)
with its own locations, values and known observation-error variances. Records
are kept sorted by location so that GP distances follow the covariate axis.
"""

from dataclasses import dataclass

import numpy as np

from gpcal.core.errors import InputError
from gpcal.core.gp import as_locations


@dataclass(frozen=True)
class ObservationStream:
    """
    One data stream.

    Attributes:
        name: Stream identifier (used in file names and column names)
        locations: Ascending covariate/time coordinates
        observations: Observed values o, aligned with locations
        sigma2_eps: Observation-error variance per record
    """

    name: str
    locations: np.ndarray
    observations: np.ndarray
    sigma2_eps: np.ndarray

    def __post_init__(self):
        if not self.name or not self.name.replace("_", "").replace("-", "").isalnum():
            raise InputError("Stream name must be alphanumeric", name=self.name)
        n = self.locations.size
        if self.observations.shape != (n,) or self.sigma2_eps.shape != (n,):
            raise InputError(
                "Observations, locations and variances must have equal length",
                stream=self.name,
                n_locations=n,
                n_observations=self.observations.size,
            )
        if np.any(np.diff(self.locations) < 0):
            raise InputError("Locations must be sorted ascending", stream=self.name)
        if not np.all(np.isfinite(self.observations)):
            raise InputError("Observations must be finite", stream=self.name)
        if np.any(~np.isfinite(self.sigma2_eps)) or np.any(self.sigma2_eps <= 0):
            raise InputError("Observation variance must be positive", stream=self.name)

    @classmethod
    def create(cls, name: str, locations, observations, sigma2_eps) -> "ObservationStream":
        """
        Build a stream from unsorted records.

        Args:
            name: Stream identifier
            locations: Record coordinates (any order)
            observations: Observed values, aligned with locations
            sigma2_eps: Scalar variance or one per record

        Returns:
            Stream with records sorted by location (stable for ties)
        """
        locs = as_locations(locations)
        obs = np.atleast_1d(np.asarray(observations, dtype=float))
        s2 = np.asarray(sigma2_eps, dtype=float)
        if s2.ndim == 0:
            s2 = np.full(locs.size, float(s2))
        order = np.argsort(locs, kind="stable")
        if obs.shape != locs.shape or s2.shape != locs.shape:
            raise InputError(
                "Observations, locations and variances must have equal length",
                stream=name,
                n_locations=locs.size,
                n_observations=obs.size,
            )
        return cls(name, locs[order], obs[order], s2[order])

    @property
    def n(self) -> int:
        return int(self.locations.size)

    @property
    def sigma2_eps_mean(self) -> float:
        """Mean observation variance, the normalizer of the discrepancy variance."""
        return float(np.mean(self.sigma2_eps))

    @property
    def location_range(self) -> float:
        return float(self.locations[-1] - self.locations[0])
