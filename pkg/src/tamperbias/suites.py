"""Built-in experiment suites shared by the CLI and the acceptance tests."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import bounds, objective as obj
from .estimator import EstimatorParams, estimate_gain, estimate_max_gain
from .objective import ExactOracle, enumerate_attack
from .space import derive_rng, uniform_bits

SUITE_TAUS = (0.05, 0.1, 0.2, 0.3, 0.4)
SUITE_NS = tuple(range(3, 13))
FLOAT_TOL = 1e-9
DRIFT_TOL = 1e-12


def suite_objectives(n: int) -> list[obj.Objective]:
    return [
        obj.and_(2),
        obj.and_(n),
        obj.or_(2),
        obj.or_(n),
        obj.xor(n),
        obj.majority(),
        obj.dictator(1),
        obj.threshold(list(range(1, n + 1)), n * (n + 1) / 4),
    ]


@dataclass
class ExactCase:
    objective: str
    n: int
    tau: float
    mu: float
    bias: float
    bias_bound: float
    expected_T: float
    budget_bound: float
    expected_hamming: float
    min_drift: float

    @property
    def bias_ok(self) -> bool:
        return self.bias >= self.bias_bound - FLOAT_TOL

    @property
    def budget_ok(self) -> bool:
        return self.expected_T <= self.budget_bound + FLOAT_TOL

    @property
    def drift_ok(self) -> bool:
        return self.min_drift >= -DRIFT_TOL


def exact_suite(ns=SUITE_NS, taus=SUITE_TAUS) -> list[ExactCase]:
    """Enumerate the exact-oracle attack on every (f, n, tau) of the small-case grid."""
    out = []
    for n in ns:
        space = uniform_bits(n)
        for f in suite_objectives(n):
            oracle = ExactOracle(space, f)
            mu = oracle.mu
            for tau in taus:
                r = enumerate_attack(space, f, tau, oracle=oracle)
                out.append(ExactCase(
                    f.name, n, tau, mu, r.bias,
                    1 - math.exp(-(mu**2) / (2 * n * tau**2)),
                    r.expected_T, (1 - mu) / tau, r.expected_hamming, r.min_drift,
                ))
    return out


# --- estimator tails ---


def binomial_slack(p: float, trials: int) -> float:
    """Three binomial standard deviations at success probability ``p``."""
    return 3 * math.sqrt(p * (1 - p) / trials)


@dataclass
class TailCase:
    objective: str
    n: int
    prefix: tuple
    gamma: float
    exact_gain: float
    gain_fail_rate: float
    gain_limit: float
    max_prefix: tuple
    max_low_rate: float
    max_limit: float

    @property
    def ok(self) -> bool:
        return self.gain_fail_rate <= self.gain_limit and self.max_low_rate <= self.max_limit


def _tail_pool(n):
    return [obj.and_(2), obj.or_(3), obj.xor(), obj.majority(), obj.dictator(1),
            obj.threshold([1, 2, 3, 1, 2, 3, 1, 2][:n], n)]


def estimator_tail_case(rng: np.random.Generator, gamma: float, calls: int, *, sampling: str = "binomial",
                        case_seed: int = 0) -> TailCase:
    """One random (f, prefix) on uniform bits: empirical tails of g~ and g~* over ``calls`` calls each."""
    n = int(rng.integers(4, 9))
    pool = _tail_pool(n)
    f = pool[int(rng.integers(len(pool)))]
    space = uniform_bits(n)
    exact = ExactOracle(space, f)
    params = EstimatorParams(gamma, sampling=sampling)
    plen = int(rng.integers(1, n))
    prefix = tuple(int(b) for b in rng.integers(0, 2, size=plen))
    g = exact.gain(prefix)
    mprefix = prefix[:-1]
    call_rng = derive_rng(case_seed, "tails")
    fails = sum(abs(estimate_gain(space, f, prefix, params, call_rng, exact=exact) - g) >= gamma
                for _ in range(calls))
    lows = sum(estimate_max_gain(space, f, mprefix, params, call_rng, exact=exact)[0] <= -2 * gamma
               for _ in range(calls))
    return TailCase(
        f.name, n, prefix, gamma, g,
        fails / calls, gamma / 2 + binomial_slack(gamma / 2, calls),
        mprefix, lows / calls, gamma + binomial_slack(gamma, calls),
    )


def estimator_tail_suite(cases: int = 20, calls: int = 10_000, gammas=(0.1, 0.2, 0.3), seed: int = 0,
                         *, sampling: str = "binomial") -> list[TailCase]:
    rng = derive_rng(seed, "tail-cases")
    out = []
    for c in range(cases):
        gamma = float(gammas[int(rng.integers(len(gammas)))])
        out.append(estimator_tail_case(rng, gamma, calls, sampling=sampling, case_seed=seed * 1000 + c))
    return out


# --- approximate-martingale tails ---


def synthetic_increments(n: int, tau: float, gamma: float, sequences: int, rng: np.random.Generator) -> np.ndarray:
    """Increments with ``|t_i| <= tau`` except with prob ``gamma`` and mean exactly ``-gamma``.

    Each step is a fair ``+-tau`` coin, replaced with probability gamma by a
    jump to ``-1``; the jump is the only out-of-range value and it pulls the
    conditional mean down to ``-gamma``, the worst case the hypotheses allow.
    """
    if tau >= 1:
        raise ValueError("tau must be < 1 so the jump exceeds it")
    steps = np.where(rng.random((sequences, n)) < 0.5, tau, -tau)
    if gamma > 0:
        # keeps E[t_i] = -gamma exactly: (1-gamma)*0 + gamma*(-1)
        steps[rng.random((sequences, n)) < gamma] = -1.0
    return steps


@dataclass
class AzumaCase:
    n: int
    tau: float
    gamma: float
    s: float
    empirical: float
    bound: float
    limit: float

    @property
    def ok(self) -> bool:
        return self.empirical <= self.limit


AZUMA_GRID = [
    (n, tau, gamma, c)
    for n in (10, 50, 100)
    for tau in (0.1, 0.3)
    for gamma in (0.0, 0.0005, 0.002)
    for c in (0.5, 1.0, 2.0)
]


def azuma_suite(grid=AZUMA_GRID, sequences: int = 100_000, seed: int = 0) -> list[AzumaCase]:
    """Empirical ``Pr[sum t_i <= -s]`` against the approximate Azuma bound.

    ``s = n*gamma + c*tau*sqrt(n)`` so every grid point is in the nontrivial range.
    """
    out = []
    for idx, (n, tau, gamma, c) in enumerate(grid):
        s = n * gamma + c * tau * math.sqrt(n)
        rng = derive_rng(seed, "azuma", idx)
        sums = synthetic_increments(n, tau, gamma, sequences, rng).sum(axis=1)
        emp = float(np.mean(sums <= -s))
        bound = bounds.azuma_approx_bound(bounds.AzumaParams(n, tau, gamma, s))
        out.append(AzumaCase(n, tau, gamma, s, emp, bound, bound + binomial_slack(min(bound, 1.0), sequences)))
    return out

