"""The particle filter engine.

One step of the filter moves an equally weighted particle set through
propose -> weight -> normalize -> resample.  All weight arithmetic is
done in the log domain with max-shifted summation because the shipped
models produce weights spanning hundreds of orders of magnitude (the
proposal density can vanish at points where the target does not).

The log weight of a proposed point x given its parent x' is

    log g(y | x) + (log f(x | x') - log q(x | x', y))

with the difference grouped so that a bootstrap proposal (q identical
to f) cancels exactly, bit for bit, leaving the log likelihood.
"""

from __future__ import annotations

import math
from typing import Iterable, Sequence

import numpy as np

from .errors import DegenerateWeights, PfconvError, StageMismatch, WeightNotFinite
from .model import Proposal, StateSpaceModel, TestFunction
from .moments import ess
from .particles import FilterRun, Stage, StepCloud, StepReport, WeightedParticleSet
from .resampling import ResampleScheme, apply_counts
from .rng import RngStream


def _log_mean_exp(lw: np.ndarray) -> float:
    m = float(np.max(lw))
    if m == -math.inf:
        return -math.inf
    return m + math.log(float(np.mean(np.exp(lw - m))))


def init_filter(model: StateSpaceModel, n: int, rng: RngStream) -> WeightedParticleSet:
    """Draw n particles from the prior with uniform weights 1/n."""
    if n < 1:
        raise ValueError("particle count must be >= 1")
    particles = model.prior_sample(rng, n)
    log_weights = np.full(n, -math.log(n))
    return WeightedParticleSet(particles, log_weights, Stage.RESAMPLED)


def _raw_log_weights(model, proposal, x_t, x_prev, y) -> np.ndarray:
    lq = np.asarray(proposal.logdensity(x_t, x_prev, y), dtype=float)
    lf = np.asarray(model.transition_logdensity(x_t, x_prev), dtype=float)
    lg = np.asarray(model.likelihood_logdensity(y, x_t), dtype=float)
    with np.errstate(invalid="ignore"):
        lw = lg + (lf - lq)
    bad = np.isnan(lw) | np.isposinf(lw)
    if np.any(bad):
        i = int(np.argmax(bad))
        raise WeightNotFinite(
            f"non-finite log weight at particle {i}: x={np.ravel(x_t)[i]!r} "
            f"(log q={np.ravel(lq)[i]!r}, log f={np.ravel(lf)[i]!r}, log g={np.ravel(lg)[i]!r})"
        )
    return lw


def log_unnormalized_weight(model: StateSpaceModel, proposal: Proposal,
                            x_t: float, x_prev: float, y) -> float:
    """Log importance weight log(g f / q) at a single point; -inf allowed."""
    lw = _raw_log_weights(model, proposal,
                          np.atleast_1d(float(x_t)), np.atleast_1d(float(x_prev)), y)
    return float(lw[0])


def propose_and_weight(prev: WeightedParticleSet, model: StateSpaceModel,
                       proposal: Proposal, y, rng: RngStream) -> WeightedParticleSet:
    """Move every particle through the proposal and attach raw log weights.

    The previous set is normally equally weighted (resampled); a
    normalized set is also accepted so that runs with an ESS-triggered
    resampler can carry weights across steps.  In that case the incoming
    weights multiply the step weights.  For an equally weighted parent
    the carried term is exactly zero in the log domain, so the default
    path is unchanged bit for bit.

    Raises WeightNotFinite if any weight evaluates to +inf or NaN, which
    means the proposal emitted a point it assigns zero density.
    """
    if prev.stage is Stage.UNNORMALIZED:
        raise StageMismatch("propose_and_weight expects resampled or normalized input")
    proposed = np.asarray(proposal.propose(prev.particles, y, rng), dtype=float)
    raw = _raw_log_weights(model, proposal, proposed, prev.particles, y)
    carried = prev.log_weights + math.log(prev.n)  # exactly 0 for 1/N weights
    lw = raw + carried
    # the evidence increment is the carried-weight average of the raw weights
    return WeightedParticleSet(proposed, lw, Stage.UNNORMALIZED,
                               log_mean_weight=_log_mean_exp(lw))


def normalize(pset: WeightedParticleSet) -> WeightedParticleSet:
    """Rescale weights to sum to one (max-shifted, overflow-safe)."""
    if pset.stage is not Stage.UNNORMALIZED:
        raise StageMismatch("normalize expects an unnormalized set")
    lw = pset.log_weights
    m = float(np.max(lw))
    if m == -math.inf:
        raise DegenerateWeights("all particles have zero weight")
    # Work entirely with the shifted values: for the dominant weights the
    # shift is exact in floating point, so the normalized weights sum to 1
    # to within a few ulps even when the raw magnitudes are ~1e6.
    shifted = lw - m
    log_total = math.log(float(np.sum(np.exp(shifted))))
    return WeightedParticleSet(pset.particles, shifted - log_total, Stage.NORMALIZED)


def estimate(pset: WeightedParticleSet, phi: TestFunction) -> float:
    """Weighted posterior estimate of a bounded test function.

    Computed as a self-normalized quotient so that the constant function
    maps to exactly 1.0 and the result can never exceed the sup-norm.
    """
    if pset.stage is Stage.UNNORMALIZED:
        raise StageMismatch(
            "estimate is defined after normalization; correct by log_mean_weight instead"
        )
    w = pset.weights()
    # Same pairwise reduction for numerator and denominator, so phi == 1
    # yields exactly 1.0 and |result| never exceeds the sup-norm.
    return float(np.sum(w * phi(pset.particles)) / np.sum(w))


def filter_step(state: WeightedParticleSet, model: StateSpaceModel, proposal: Proposal,
                y, resampler: ResampleScheme, rng: RngStream,
                test_functions: Sequence[TestFunction] = (), t: int = 0,
                record_cloud: int = 0, ess_threshold: float | None = None
                ) -> tuple[WeightedParticleSet, StepReport]:
    """One complete propose/weight/normalize/resample cycle.

    The report carries the pre-resampling estimates (the lower-variance
    ones), the post-resampling estimates, the effective sample size and
    the step's incremental log evidence.

    By default the step always resamples.  With ``ess_threshold`` set,
    resampling only happens when the effective sample size drops below
    ``ess_threshold * N``; otherwise the normalized set is carried
    forward with its weights.
    """
    unnorm = propose_and_weight(state, model, proposal, y, rng.derive(0))
    normalized = normalize(unnorm)
    ess_value = ess(normalized)
    do_resample = ess_threshold is None or ess_value < ess_threshold * normalized.n
    if do_resample:
        counts = resampler.resample(normalized.weights(), normalized.n, rng.derive(1))
        out = apply_counts(normalized, counts)
    else:
        out = normalized
    cloud = None
    if record_cloud > 0:
        k = min(record_cloud, normalized.n)
        cloud = StepCloud(
            normalized_particles=normalized.particles[:k].copy(),
            normalized_weights=normalized.weights()[:k],
            resampled_particles=out.particles[:k].copy(),
        )
    report = StepReport(
        t=t,
        ess=ess_value,
        log_mean_weight=unnorm.log_mean_weight,
        estimates={phi.name: estimate(normalized, phi) for phi in test_functions},
        resampled_estimates={phi.name: estimate(out, phi) for phi in test_functions},
        resampled=do_resample,
        cloud=cloud,
    )
    return out, report


def run_filter(model: StateSpaceModel, proposal: Proposal,
               observations: Iterable[tuple[int, object]], n: int,
               resampler: ResampleScheme, master_seed: int | RngStream,
               test_functions: Sequence[TestFunction] = (),
               record_clouds: int = 0,
               ess_threshold: float | None = None) -> FilterRun:
    """Run the filter over a (t, y) sequence, resampling at every step.

    Deterministic in (master_seed, n): the same seed always yields the
    same run.  Step errors propagate with the failing step attached.
    ``ess_threshold`` enables the optional skip-resampling mode (off by
    default; the convergence guarantees are stated for per-step
    resampling).
    """
    obs = list(observations)
    if not obs:
        raise ValueError("observations must be nonempty")
    if any(int(t) < 1 for t, _ in obs):
        raise ValueError("step indices must be >= 1 (label 0 keys the prior draw)")
    root = master_seed if isinstance(master_seed, RngStream) else RngStream(master_seed)
    state = init_filter(model, n, root.derive(0))
    steps = []
    log_evidence = 0.0
    for t, y in obs:
        try:
            state, report = filter_step(state, model, proposal, y, resampler,
                                         root.derive(int(t)), test_functions,
                                         t=int(t), record_cloud=record_clouds,
                                         ess_threshold=ess_threshold)
        except PfconvError as err:
            raise type(err)(f"filter step t={t}: {err}") from err
        log_evidence += report.log_mean_weight
        steps.append(report)
    seed = root.master_seed
    return FilterRun(steps=tuple(steps), log_evidence=log_evidence, n=n,
                     master_seed=seed, labels=root.labels)
