"""Monte Carlo gain oracles: ``g~`` from continuation averages and ``g~*``/``h~``
from sampled candidate blocks.

Two sampling routes produce the same output distribution:

``literal``
    draws ``k`` full continuations per average and evaluates the objective on
    each of them.
``binomial``
    each empirical average of ``k`` Bernoulli(a) evaluations is drawn directly
    as ``Binomial(k, a) / k``, with ``a`` taken from an ``ExactOracle``. The
    objective's call counter is advanced by the ``k`` evaluations the literal
    route would have made. This is what makes dimension-1000 runs and 10^4-call
    tail experiments tractable; ``tests/test_estimator.py`` checks the two
    routes against each other.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from .objective import ExactOracle, Objective
from .space import ProductSpace

SAMPLING_ROUTES = ("literal", "binomial")


def _check_gamma(gamma: float) -> None:
    if not 0 < gamma < 1:
        raise ValueError(f"gamma must lie in (0, 1), got {gamma}")


def k_gain(gamma: float) -> int:
    """Continuations per empirical average so that ``Pr[|g~ - g| >= gamma] <= gamma/2``."""
    _check_gamma(gamma)
    raw = -12.0 * (math.log(gamma / 2) + math.log(math.log1p(gamma)) - math.log(-math.log(gamma / 2))) / gamma**2
    return max(1, math.ceil(raw))


def k_max(gamma: float) -> int:
    """Candidate blocks sampled by the max-gain oracle."""
    _check_gamma(gamma)
    return max(1, math.ceil(-math.log(gamma / 2) / math.log1p(gamma)))


@dataclass(frozen=True)
class EstimatorParams:
    gamma: float
    sampling: str = "literal"
    k_gain: int = field(default=0)
    k_max: int = field(default=0)

    def __post_init__(self):
        _check_gamma(self.gamma)
        if self.sampling not in SAMPLING_ROUTES:
            raise ValueError(f"sampling must be one of {SAMPLING_ROUTES}")
        if not self.k_gain:
            object.__setattr__(self, "k_gain", k_gain(self.gamma))
        if not self.k_max:
            object.__setattr__(self, "k_max", k_max(self.gamma))

    @property
    def calls_per_gain(self) -> int:
        return 2 * self.k_gain

    @property
    def calls_per_max_gain(self) -> int:
        return 2 * self.k_gain * self.k_max


def _rows_with_prefix(space: ProductSpace, prefix: Sequence, suffix: np.ndarray) -> np.ndarray:
    rows = np.empty((suffix.shape[0], space.n), dtype=suffix.dtype)
    if prefix:
        if suffix.dtype == object:
            for j, v in enumerate(prefix):
                rows[:, j] = [v] * suffix.shape[0]
        else:
            rows[:, : len(prefix)] = np.asarray(prefix)
    rows[:, len(prefix) :] = suffix
    return rows


def _literal_avg(space, objective, prefix, k, rng) -> float:
    suffix = space.sample_batch(rng, k, start=len(prefix))
    return float(objective.eval_batch(_rows_with_prefix(space, prefix, suffix)).mean())


def _binomial_avg(objective, exact, prefix, k, rng) -> float:
    objective.add_calls(k)
    a = min(max(exact.avg(prefix), 0.0), 1.0)
    return rng.binomial(k, a) / k


def _needs_exact(params, exact):
    if params.sampling == "binomial" and exact is None:
        raise ValueError("binomial sampling needs an ExactOracle for the conditional means")


def estimate_gain(
    space: ProductSpace,
    objective: Objective,
    prefix: Sequence,
    params: EstimatorParams,
    rng: np.random.Generator,
    *,
    exact: ExactOracle | None = None,
) -> float:
    """``a~(v<=i) - a~(v<=i-1)`` from two disjoint families of fresh continuations."""
    if len(prefix) < 1:
        raise ValueError("gain needs a prefix of length >= 1")
    _needs_exact(params, exact)
    k = params.k_gain
    prefix = tuple(prefix)
    if params.sampling == "literal":
        hi = _literal_avg(space, objective, prefix, k, rng)
        lo = _literal_avg(space, objective, prefix[:-1], k, rng)
    else:
        hi = _binomial_avg(objective, exact, prefix, k, rng)
        lo = _binomial_avg(objective, exact, prefix[:-1], k, rng)
    return hi - lo


def estimate_max_gain(
    space: ProductSpace,
    objective: Objective,
    prefix: Sequence,
    params: EstimatorParams,
    rng: np.random.Generator,
    *,
    exact: ExactOracle | None = None,
) -> tuple[float, Any]:
    """Max estimated gain over ``k_max`` i.i.d. candidate blocks, and its first argmax."""
    prefix = tuple(prefix)
    i = len(prefix)
    if i >= space.n:
        raise ValueError("no block left to choose")
    _needs_exact(params, exact)
    block = space.blocks[i]
    candidates = block.sample_many(rng, params.k_max)
    k = params.k_gain
    if params.sampling == "literal":
        gains = [estimate_gain(space, objective, prefix + (c,), params, rng) for c in candidates]
    else:
        # distributed as k_max separate estimate_gain calls, in one draw
        objective.add_calls(2 * k * len(candidates))
        base = exact.avg(prefix)
        distinct = {c: exact.avg(prefix + (c,)) for c in set(candidates)}
        a_hi = np.clip([distinct[c] for c in candidates], 0.0, 1.0)
        draws = rng.binomial(k, np.column_stack([a_hi, np.full(len(candidates), min(max(base, 0.0), 1.0))]))
        gains = (draws[:, 0] - draws[:, 1]) / k
    j = int(np.argmax(gains))
    return float(gains[j]), candidates[j]


class MonteCarloOracle:
    """Gain oracle answering with fresh Monte Carlo estimates on every query."""

    exact_mode = False

    def __init__(self, space: ProductSpace, objective: Objective, params: EstimatorParams, *, exact=None):
        _needs_exact(params, exact)
        self.space = space
        self.objective = objective
        self.params = params
        self.exact = exact

    def max_gain(self, prefix: Sequence, rng: np.random.Generator) -> tuple[float, Any]:
        return estimate_max_gain(self.space, self.objective, prefix, self.params, rng, exact=self.exact)

    def gain(self, prefix: Sequence, value: Any, rng: np.random.Generator) -> float:
        return estimate_gain(self.space, self.objective, tuple(prefix) + (value,), self.params, rng, exact=self.exact)

    def step_calls(self, kind: str) -> int:
        """Objective evaluations spent by one attack step ending in event ``kind``."""
        p = self.params
        return p.calls_per_max_gain + (0 if kind == "C1" else p.calls_per_gain)
