"""Abstract state-space model, importance proposal, and test functions.

All density callables work in the log domain and accept numpy arrays of
states (the shipped models are one-dimensional, so a state batch is a
1-D float array).  Log-densities may return ``-inf`` for zero density.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DomainError
from .rng import RngStream

Array = np.ndarray


@dataclass(frozen=True)
class StateSpaceModel:
    """A hidden Markov model given by prior, transition and likelihood.

    Attributes
    ----------
    state_dim : int
        Dimension of the state (shipped models use 1).
    prior_sample : callable
        ``(rng, size) -> states``; draws ``size`` independent states from
        the time-zero distribution.
    transition_logdensity : callable
        ``(x_t, x_prev) -> log density`` of the state transition.
    likelihood_logdensity : callable
        ``(y_t, x_t) -> log density`` of the observation given the state.
    likelihood_bound : float
        A constant c_g with ``likelihood <= c_g`` everywhere; the engine's
        mean-square guarantees require the likelihood to be bounded.
    """

    state_dim: int
    prior_sample: Callable[[RngStream, int], Array]
    transition_logdensity: Callable[[Array, Array], Array]
    likelihood_logdensity: Callable[[object, Array], Array]
    likelihood_bound: float

    def __post_init__(self):
        if self.state_dim < 1:
            raise DomainError("state_dim must be a positive integer")
        if not self.likelihood_bound > 0:
            raise DomainError("likelihood_bound must be positive")


@dataclass(frozen=True)
class Proposal:
    """Importance distribution used to move particles forward.

    ``propose(x_prev, y, rng)`` draws one new state per entry of
    ``x_prev``; ``logdensity(x_t, x_prev, y)`` evaluates the proposal
    density at the proposed points.  The proposal must dominate
    ``transition * likelihood``: wherever that product is positive the
    proposal density must be positive as well (checked statistically on
    the shipped models, not enforced here).
    """

    propose: Callable[[Array, object, RngStream], Array]
    logdensity: Callable[[Array, Array, object], Array]


@dataclass(frozen=True)
class TestFunction:
    """A bounded test function with a declared sup-norm."""

    name: str
    fn: Callable[[Array], Array] = field(repr=False)
    sup_norm: float

    def __post_init__(self):
        if not self.sup_norm > 0:
            raise DomainError("sup_norm must be positive")

    def __call__(self, x: Array) -> Array:
        return self.fn(x)


def _indicator_leq(a: float) -> TestFunction:
    return TestFunction(
        name=f"indicator_leq({a:g})",
        fn=lambda x: (np.asarray(x, dtype=float) <= a).astype(float),
        sup_norm=1.0,
    )


def _min_cap(a: float) -> TestFunction:
    if not a > 0:
        raise DomainError("min_cap requires a positive cap")
    return TestFunction(
        name=f"min_cap({a:g})",
        fn=lambda x: np.minimum(np.asarray(x, dtype=float), a),
        sup_norm=a,
    )


# Closed registry of admissible test functions.  Boundedness on the
# nonnegative state domain is part of each entry's contract.
_PARAMETRIC = {"indicator_leq": _indicator_leq, "min_cap": _min_cap}
_PLAIN = {
    "one": TestFunction("one", lambda x: np.ones_like(np.asarray(x, dtype=float)), 1.0),
    "exp_neg": TestFunction("exp_neg", lambda x: np.exp(-np.asarray(x, dtype=float)), 1.0),
}

_NAME_RE = re.compile(r"^([a-z_]+)\(([-+0-9.eE]+)\)$")


def make_test_function(name: str) -> TestFunction:
    """Resolve a registry name such as ``exp_neg`` or ``min_cap(10)``."""
    name = name.strip()
    if name in _PLAIN:
        return _PLAIN[name]
    m = _NAME_RE.match(name)
    if m and m.group(1) in _PARAMETRIC:
        return _PARAMETRIC[m.group(1)](float(m.group(2)))
    raise KeyError(f"unknown test function {name!r}")


def registry_names() -> list[str]:
    return sorted(_PLAIN) + [f"{k}(a)" for k in sorted(_PARAMETRIC)]
