"""Weighted particle sets and per-step filter records.

A particle set moves through three stages in each filter step:

* ``UNNORMALIZED`` -- fresh proposals with raw log importance weights and
  the log of the mean raw weight (the incremental evidence term);
* ``NORMALIZED`` -- weights rescaled to sum to one;
* ``RESAMPLED`` -- equally weighted particles after resampling.

Sets are immutable after construction; the arrays they hold are marked
read-only so a set can be shared across threads or processes safely.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import DomainError

_NORMALIZATION_RTOL = 1e-12


class Stage(Enum):
    UNNORMALIZED = "unnormalized"
    NORMALIZED = "normalized"
    RESAMPLED = "resampled"


def _frozen_array(values, dtype=float) -> np.ndarray:
    arr = np.asarray(values, dtype=dtype)
    if arr.flags.writeable:
        arr = arr.copy()
        arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class WeightedParticleSet:
    """Particles with log weights and a pipeline stage tag.

    ``log_mean_weight`` is the log of the average raw weight and is
    defined only at stage ``UNNORMALIZED`` (it is the evidence increment
    contributed by the step).  Log weights may be ``-inf`` (zero weight)
    but never ``+inf`` or NaN.
    """

    particles: np.ndarray
    log_weights: np.ndarray
    stage: Stage
    log_mean_weight: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "particles", _frozen_array(self.particles))
        object.__setattr__(self, "log_weights", _frozen_array(self.log_weights))
        p, lw = self.particles, self.log_weights
        if p.ndim != 1 or lw.ndim != 1:
            raise DomainError("particles and log_weights must be 1-D arrays")
        if len(p) != len(lw):
            raise DomainError("particles and log_weights lengths differ")
        if len(p) == 0:
            raise DomainError("a particle set cannot be empty")
        if np.any(np.isnan(lw)) or np.any(np.isposinf(lw)):
            raise DomainError("log weights must not be NaN or +inf")
        if self.stage is Stage.UNNORMALIZED:
            if self.log_mean_weight is None:
                raise DomainError("unnormalized sets carry log_mean_weight")
        else:
            if self.log_mean_weight is not None:
                raise DomainError("log_mean_weight is defined only before normalization")
        if self.stage is Stage.NORMALIZED:
            total = float(np.sum(np.exp(lw)))
            if not math.isclose(total, 1.0, rel_tol=_NORMALIZATION_RTOL):
                raise DomainError(f"normalized weights sum to {total!r}, not 1")
        if self.stage is Stage.RESAMPLED:
            if np.any(lw != -math.log(len(p))):
                raise DomainError("resampled sets must have uniform weights 1/N")

    @property
    def n(self) -> int:
        return len(self.particles)

    def weights(self) -> np.ndarray:
        """Linear-domain weights (exp of the log weights)."""
        return np.exp(self.log_weights)


@dataclass(frozen=True)
class StepCloud:
    """Optional particle snapshot kept for plotting/histogram checks."""

    normalized_particles: np.ndarray
    normalized_weights: np.ndarray
    resampled_particles: np.ndarray


@dataclass(frozen=True)
class StepReport:
    """Diagnostics from one filter step.

    ``estimates`` holds the pre-resampling (normalized-stage) estimate of
    each registered test function; ``resampled_estimates`` the same after
    resampling.  ``log_mean_weight`` is the step's incremental
    log-evidence and ``ess`` the effective sample size of the normalized
    weights.  ``resampled`` records whether the step actually resampled
    (always true unless an ESS threshold was configured).
    """

    t: int
    ess: float
    log_mean_weight: float
    estimates: dict[str, float]
    resampled_estimates: dict[str, float]
    resampled: bool = True
    cloud: StepCloud | None = None


@dataclass(frozen=True)
class FilterRun:
    """Full trace of a filter pass over an observation sequence."""

    steps: tuple[StepReport, ...]
    log_evidence: float
    n: int
    master_seed: int | None = None
    labels: tuple[int, ...] = field(default=())

    def ess_trace(self) -> np.ndarray:
        return np.array([s.ess for s in self.steps])

    def estimate_trace(self, name: str, stage: str = "normalized") -> np.ndarray:
        """Per-step estimates of one test function at one stage."""
        if stage == "normalized":
            return np.array([s.estimates[name] for s in self.steps])
        if stage == "resampled":
            return np.array([s.resampled_estimates[name] for s in self.steps])
        raise ValueError(f"unknown stage {stage!r}")
