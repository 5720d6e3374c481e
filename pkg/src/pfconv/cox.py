"""Poisson-count observations of a reflected random-walk intensity.

The latent state is a nonnegative random walk reflected at zero,
x_t = |x_{t-1} + sqrt(eta) * eps_t|, whose one-step transition density is
the folded Gaussian kernel

    f(x | x') = (2 pi eta)^(-1/2) [exp(-(x-x')^2 / 2 eta)
                                   + exp(-(x+x')^2 / 2 eta)]

on x >= 0.  Counts are Poisson with intensity c * x_t, with the limit
convention g(y | 0) = 1 if y = 0 and 0 otherwise, which keeps the
likelihood continuous and bounded by 1 on the closed half-line.

The shipped importance distribution is a fixed Gamma(alpha, rate beta),
independent of the previous state and of the observation.  For alpha > 1
its density vanishes at 0 while transition * likelihood does not, so the
importance weight is pointwise unbounded near 0 even though its low-order
moments can stay finite.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .model import Proposal, StateSpaceModel
from .rng import RngStream


@dataclass(frozen=True)
class CoxParams:
    """Intensity slope c (lambda = c*x) and per-step increment variance eta."""

    c: float
    eta: float

    def __post_init__(self):
        if not self.c > 0:
            raise DomainError("intensity slope c must be positive")
        if not self.eta > 0:
            raise DomainError("increment variance eta must be positive")


@dataclass(frozen=True)
class GammaProposal:
    """Gamma(alpha, rate beta) importance distribution.

    For alpha > 1 the density vanishes at the origin, which puts the
    weights in the singular regime (pointwise unbounded near 0).
    """

    alpha: float
    beta: float

    def __post_init__(self):
        if not (self.alpha > 0 and self.beta > 0):
            raise DomainError("alpha and beta must be positive")

    @property
    def singular(self) -> bool:
        return self.alpha > 1


@dataclass(frozen=True)
class ObservationSeries:
    """Integer counts indexed by steps t = 1, 2, ..., T."""

    observations: tuple[tuple[int, int], ...]

    def __post_init__(self):
        obs = tuple((int(t), int(y)) for t, y in self.observations)
        object.__setattr__(self, "observations", obs)
        for i, (t, y) in enumerate(obs):
            if t != i + 1:
                raise DomainError(f"step indices must run 1..T; got {t} at position {i}")
            if y < 0:
                raise DomainError("counts must be nonnegative integers")

    def __iter__(self):
        return iter(self.observations)

    def __len__(self):
        return len(self.observations)

    def counts(self) -> np.ndarray:
        return np.array([y for _, y in self.observations], dtype=np.int64)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t", "y"])
            writer.writerows(self.observations)

    @classmethod
    def from_csv(cls, path) -> "ObservationSeries":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if header != ["t", "y"]:
                raise DomainError(f"expected header t,y in {path}, got {header}")
            rows = [(int(t), int(y)) for t, y in reader]
        return cls(tuple(rows))


# ---------------------------------------------------------------------------
# densities and samplers


def cox_transition_logdensity(x, x_prev, eta: float):
    """Log of the folded Gaussian transition kernel on the half-line."""
    if not eta > 0:
        raise DomainError("eta must be positive")
    x = np.asarray(x, dtype=float)
    x_prev = np.asarray(x_prev, dtype=float)
    if np.any(x < 0) or np.any(x_prev < 0):
        raise DomainError("states must be nonnegative")
    out = np.logaddexp(-((x - x_prev) ** 2) / (2 * eta),
                       -((x + x_prev) ** 2) / (2 * eta))
    out = out - 0.5 * math.log(2 * math.pi * eta)
    return out if out.ndim else float(out)


def cox_likelihood_logdensity(y: int, x, c: float):
    """Log Poisson(c*x) pmf at count y, with the continuous limit at x = 0."""
    y = int(y)
    if y < 0:
        raise DomainError("counts must be nonnegative")
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise DomainError("states must be nonnegative")
    lam = c * x
    if y == 0:
        out = -lam  # at x = 0 this is the limit value log 1 = 0
    else:
        with np.errstate(divide="ignore"):
            out = y * np.log(lam) - lam - math.lgamma(y + 1)
    return out if out.ndim else float(out)


def cox_prior_sample(rng: RngStream, size: int | None = None):
    """|xi| for xi standard normal (the time-zero state)."""
    draw = np.abs(rng.gen.standard_normal(size))
    return draw if size is not None else float(draw)


def gamma_propose(prop: GammaProposal, rng: RngStream, size: int | None = None):
    """Draw from Gamma(alpha, rate beta)."""
    draw = rng.gen.gamma(prop.alpha, 1.0 / prop.beta, size)
    return draw if size is not None else float(draw)


def gamma_logdensity(prop: GammaProposal, x):
    """Log Gamma density; -inf off the support (x <= 0 for alpha > 1)."""
    x = np.asarray(x, dtype=float)
    const = prop.alpha * math.log(prop.beta) - math.lgamma(prop.alpha)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(x > 0,
                       const + (prop.alpha - 1) * np.log(np.where(x > 0, x, 1.0))
                       - prop.beta * x,
                       -math.inf)
    return out if out.ndim else float(out)


# ---------------------------------------------------------------------------
# engine adapters


def make_cox_model(params: CoxParams) -> StateSpaceModel:
    return StateSpaceModel(
        state_dim=1,
        prior_sample=lambda rng, size: cox_prior_sample(rng, size),
        transition_logdensity=lambda x, xp: cox_transition_logdensity(x, xp, params.eta),
        likelihood_logdensity=lambda y, x: cox_likelihood_logdensity(y, x, params.c),
        likelihood_bound=1.0,  # Poisson pmf never exceeds 1
    )


def make_gamma_proposal(prop: GammaProposal) -> Proposal:
    """State- and observation-independent Gamma proposal."""
    return Proposal(
        propose=lambda x_prev, y, rng: gamma_propose(prop, rng, size=len(np.atleast_1d(x_prev))),
        logdensity=lambda x, x_prev, y: gamma_logdensity(prop, x),
    )


def make_bootstrap_proposal(params: CoxParams) -> Proposal:
    """Proposal identical to the transition; weights reduce to the likelihood."""

    def propose(x_prev, y, rng):
        x_prev = np.asarray(x_prev, dtype=float)
        eps = rng.gen.standard_normal(len(x_prev))
        return np.abs(x_prev + math.sqrt(params.eta) * eps)

    return Proposal(
        propose=propose,
        logdensity=lambda x, xp, y: cox_transition_logdensity(x, xp, params.eta),
    )


# ---------------------------------------------------------------------------
# simulator


def poisson_inverse_cdf(lam: float, u: float) -> int:
    """Poisson draw by CDF inversion of a single uniform (lam < 30)."""
    if lam < 0:
        raise DomainError("intensity must be nonnegative")
    if lam >= 30:
        raise DomainError("inversion sampler is restricted to lam < 30")
    pmf = math.exp(-lam)
    cdf = pmf
    k = 0
    while u > cdf:
        k += 1
        pmf *= lam / k
        cdf += pmf
        if k > 1000:  # unreachable for lam < 30; guards malformed input
            raise DomainError("poisson inversion failed to terminate")
    return k


def simulate(params: CoxParams, steps: int, master_seed: int
             ) -> tuple[np.ndarray, ObservationSeries]:
    """Simulate states x_0..x_T and counts y_1..y_T.

    Counts are drawn by single-uniform CDF inversion so committed
    fixtures reproduce bit-for-bit everywhere; intensities here stay far
    below the sampler's lam < 30 limit.
    """
    if steps < 1:
        raise DomainError("steps must be >= 1")
    root = RngStream(master_seed)
    states = np.empty(steps + 1)
    states[0] = cox_prior_sample(root.derive(0))
    rows = []
    sd = math.sqrt(params.eta)
    for t in range(1, steps + 1):
        gen = root.derive(t).gen
        states[t] = abs(states[t - 1] + sd * gen.standard_normal())
        y = poisson_inverse_cdf(params.c * states[t], gen.random())
        rows.append((t, y))
    return states, ObservationSeries(tuple(rows))


def states_to_csv(states: np.ndarray, path) -> None:
    """Write a trajectory as `t,x` rows at 17 significant digits."""
    with open(path, "w", newline="") as fh:
        fh.write("t,x\n")
        for t, x in enumerate(states):
            fh.write(f"{t},{x:.17g}\n")
