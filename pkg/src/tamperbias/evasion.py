"""Evasion attacks: push test instances into the error region of a classifier.

The objective is the error-region indicator ``f(x) = [h(x) != c(x)]``; the
tampering attack on ``x`` then finds adversarial examples with small Hamming
distance from the original instance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import bounds
from .attack import (
    AttackParams,
    AttackReport,
    MeanEstimate,
    initial_mean,
    make_oracle,
    run_attack,
    run_trials,
    summarize,
    try_exact,
)
from .objective import ExactAttackResult, Objective, Oracle, enumerate_attack
from .space import ProductSpace


class DegenerateProblem(ValueError):
    """Initial mean is 0: no tampering can raise it."""


@dataclass
class EvasionProblem:
    space: ProductSpace
    hypothesis: Oracle
    concept: Oracle
    mu: float | None = None


def _batch_labels(oracle, rows):
    if hasattr(oracle, "eval_batch"):
        return np.asarray(oracle.eval_batch(rows))
    return np.array([oracle(tuple(r)) for r in rows])


def error_region_objective(problem: EvasionProblem) -> Objective:
    h, c = problem.hypothesis, problem.concept

    def fn(x):
        return int(h(x) != c(x))

    def batch(rows):
        return _batch_labels(h, rows) != _batch_labels(c, rows)

    def symmetric(n):
        return all(getattr(o, "is_symmetric", lambda n: False)(n) for o in (h, c))

    return Objective(fn, batch=batch, name=f"err[{getattr(h, 'name', h)} vs {getattr(c, 'name', c)}]",
                     symmetric=symmetric)


def attack_instance(problem: EvasionProblem, x, params: AttackParams, rng, *, objective=None, oracle=None):
    """Tamper with a given instance; returns ``(x_adv, trace)``."""
    if not problem.space.contains(x):
        raise ValueError("instance is outside the instance space")
    f = objective or error_region_objective(problem)
    return run_attack(problem.space, f, params, rng, u=x, oracle=oracle)


@dataclass
class EvasionReport:
    adversarial_risk: float
    adversarial_risk_ci: tuple[float, float]
    hamming_mean: float
    t_mean: float
    mu: MeanEstimate
    comparator: float | None
    rho: float
    attack: AttackReport


def _problem_mean(problem, f, exact, seed):
    if problem.mu is not None:
        return MeanEstimate(problem.mu, problem.mu, problem.mu, 0, exact=True)
    return initial_mean(problem.space, f, exact=exact, seed=seed)


def evaluate_evasion(problem: EvasionProblem, params: AttackParams, trials: int, seed: int, *,
                     rho: float = 0.99, workers: int = 1) -> EvasionReport:
    """Attack ``trials`` fresh instances and compare the average budget with the theorem."""
    f = error_region_objective(problem)
    exact = try_exact(problem.space, f) if (params.mode == "exact" or params.sampling == "binomial") else None
    mu = _problem_mean(problem, f, exact, seed)
    if mu.mean <= 0:
        raise DegenerateProblem("initial risk is 0; the error region is empty or unseen")
    oracle = make_oracle(problem.space, f, params, exact=exact)
    rows = run_trials(problem.space, f, params, trials, seed, workers=workers, oracle=oracle)
    rep = summarize(rows, mu=mu, params=params, n=problem.space.n, rho=rho)
    comparator = bounds.evasion_budget(problem.space.n, mu.mean, rho) if mu.mean < rho else None
    return EvasionReport(rep.bias_hat, rep.bias_ci, rep.hamming_mean, rep.t_mean, mu, comparator, rho, rep)


def exact_evasion(problem: EvasionProblem, tau: float) -> ExactAttackResult:
    """Adversarial risk, ``E[T]`` and ``E[hamming]`` of the exact-oracle attack, by enumeration."""
    return enumerate_attack(problem.space, error_region_objective(problem), tau)
