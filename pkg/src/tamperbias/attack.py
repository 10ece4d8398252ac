"""Online tampering attack that biases a Boolean objective towards 1.

At block i the attacker sees the finalized prefix ``v_1..v_{i-1}`` and the
untampered block ``u_i``. It queries the max-gain oracle once, getting an
estimate ``g*`` and a candidate block ``w``. It replaces ``u_i`` by ``w``
if ``g* >= tau`` (event C1) or, failing that, if the estimated gain of
``u_i`` is ``<= -tau`` (event C2). Otherwise it keeps ``u_i`` (event C3).
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np
from scipy.stats import binomtest

from . import bounds
from .estimator import EstimatorParams, MonteCarloOracle
from .objective import ExactOracle, Objective
from .space import NotEnumerableError, ProductSpace, SupportCapExceeded, derive_rng, hamming

MODES = ("exact", "monte_carlo")


@dataclass(frozen=True)
class ScheduleInfo:
    k: float
    gamma_terms: tuple[float, float, float, float]


@dataclass(frozen=True)
class AttackParams:
    """Attack configuration.

    ``mode="exact"`` uses exact oracles (gamma must be 0). ``mode="monte_carlo"``
    needs ``0 < gamma < 1``; ``sampling`` picks the estimator route.
    """

    tau: float
    gamma: float = 0.0
    mode: str = "exact"
    mu: float | None = None
    rho: float | None = None
    sampling: str = "literal"
    schedule: ScheduleInfo | None = None

    def __post_init__(self):
        if not 0 < self.tau < 1:
            raise ValueError(f"tau must lie in (0, 1), got {self.tau}")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.mode == "exact" and self.gamma != 0:
            raise ValueError("exact mode takes gamma = 0")
        if self.mode == "monte_carlo" and not 0 < self.gamma < 1:
            raise ValueError("monte_carlo mode needs gamma in (0, 1)")

    @property
    def estimator(self) -> EstimatorParams | None:
        if self.mode == "exact":
            return None
        return EstimatorParams(self.gamma, sampling=self.sampling)


def schedule_params(n: int, mu: float, rho: float, *, sampling: str = "literal") -> AttackParams:
    """Parameters that provably push mean ``mu`` to at least ``rho``.

    ``k = ln(2/(1-rho))``, ``tau = mu / (1.9 sqrt(k n))`` and gamma is the
    minimum of four terms. The gamma this yields is far too small to run
    beyond tiny n; use it for reporting.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if not 0 < mu < rho < 1:
        raise ValueError(f"need 0 < mu < rho < 1, got mu={mu}, rho={rho}")
    k = math.log(2 / (1 - rho))
    tau = mu / (1.9 * math.sqrt(k * n))
    terms = (
        mu / (20 * n),
        mu / (80 * math.sqrt(k * n)),
        (1 - rho) / (8 * n),
        math.sqrt(math.log(2 / (1 - rho))) / (3 * n * math.sqrt(n)),
    )
    return AttackParams(
        tau=tau,
        gamma=min(terms),
        mode="monte_carlo",
        mu=mu,
        rho=rho,
        sampling=sampling,
        schedule=ScheduleInfo(k=k, gamma_terms=terms),
    )


class ExactGainOracle:
    """Gain oracle backed by exact conditional means (no randomness used)."""

    exact_mode = True

    def __init__(self, exact: ExactOracle):
        self.exact = exact

    def max_gain(self, prefix: Sequence, rng=None) -> tuple[float, Any]:
        return self.exact.max_gain(prefix)

    def gain(self, prefix: Sequence, value: Any, rng=None) -> float:
        return self.exact.gain(tuple(prefix) + (value,))

    def step_calls(self, kind: str) -> int:
        # tabulation cost is shared by all runs and not charged per step
        return 0


def try_exact(space: ProductSpace, objective: Objective) -> ExactOracle | None:
    try:
        return ExactOracle(space, objective)
    except (NotEnumerableError, SupportCapExceeded):
        return None


def make_oracle(space: ProductSpace, objective: Objective, params: AttackParams, *, exact: ExactOracle | None = None):
    if params.mode == "exact":
        return ExactGainOracle(exact or ExactOracle(space, objective))
    est = params.estimator
    if est.sampling == "binomial" and exact is None:
        exact = ExactOracle(space, objective)
    return MonteCarloOracle(space, objective, est, exact=exact)


@dataclass(frozen=True)
class StepEvent:
    kind: str  # "C1", "C2" or "C3"
    original: Any
    final: Any

    @property
    def tampered(self) -> bool:
        return self.kind != "C3"


@dataclass
class AttackTrace:
    original: tuple
    final: tuple
    steps: list[StepEvent]
    objective_value: int
    oracle_calls: int

    @property
    def T(self) -> int:
        return sum(1 for s in self.steps if s.tampered)

    @property
    def hamming_cost(self) -> int:
        return hamming(self.original, self.final)


def tamper_step(prefix: Sequence, u_i: Any, params: AttackParams, oracle, rng) -> tuple[Any, StepEvent]:
    """Decide block i from the finalized prefix and the untampered block only."""
    g_star, w = oracle.max_gain(prefix, rng)
    if g_star >= params.tau:
        return w, StepEvent("C1", u_i, w)
    if oracle.gain(prefix, u_i, rng) <= -params.tau:
        return w, StepEvent("C2", u_i, w)
    return u_i, StepEvent("C3", u_i, u_i)


def run_attack(
    space: ProductSpace,
    objective: Objective,
    params: AttackParams,
    rng: np.random.Generator,
    *,
    u: Sequence | None = None,
    oracle=None,
) -> tuple[tuple, AttackTrace]:
    """Sample ``u`` (unless given) and tamper with it block by block.

    ``rng`` is split into a data stream for ``u`` and an oracle stream, so the
    decision at block i depends only on ``u_1..u_i`` and the seed.
    """
    data_rng, oracle_rng = rng.spawn(2)
    if u is None:
        u = space.sample_full(data_rng)
    u = tuple(u)
    if len(u) != space.n:
        raise ValueError("untampered tuple has the wrong length")
    oracle = oracle or make_oracle(space, objective, params)
    prefix: list = []
    steps = []
    for i, u_i in enumerate(u):
        v_i, event = tamper_step(prefix, u_i, params, oracle, oracle_rng)
        if not space.blocks[i].contains(v_i):
            raise AssertionError(f"block {i + 1}: {v_i!r} left the support")
        prefix.append(v_i)
        steps.append(event)
    v = tuple(prefix)
    value = objective.eval(v)
    calls = 1 + sum(oracle.step_calls(e.kind) for e in steps)
    trace = AttackTrace(u, v, steps, value, calls)
    return v, trace


def chernoff_samples(eps: float = 0.05, delta: float = 0.01) -> int:
    """Samples so an empirical mean is within ``eps`` except with prob ``delta``."""
    return math.ceil(3 * math.log(2 / delta) / eps**2)


@dataclass(frozen=True)
class MeanEstimate:
    mean: float
    ci_low: float
    ci_high: float
    samples: int
    exact: bool = False

    def __float__(self):
        return self.mean


def binomial_ci(successes: int, trials: int, level: float = 0.95) -> tuple[float, float]:
    """Clopper-Pearson interval."""
    ci = binomtest(int(successes), int(trials)).proportion_ci(confidence_level=level, method="exact")
    return float(ci.low), float(ci.high)


def estimate_mu(space: ProductSpace, objective: Objective, samples: int, rng: np.random.Generator) -> MeanEstimate:
    if samples < 1:
        raise ValueError("samples must be >= 1")
    if space.enumerable:
        vals = objective.eval_batch(space.sample_batch(rng, samples))
    else:
        vals = np.array([objective.eval(space.sample_full(rng)) for _ in range(samples)])
    hits = int(vals.sum())
    lo, hi = binomial_ci(hits, samples)
    return MeanEstimate(hits / samples, lo, hi, samples)


def initial_mean(space, objective, *, exact=None, seed: int = 0, eps: float = 0.05) -> MeanEstimate:
    """Exact mean when an exact oracle is available, else a Chernoff-sized estimate."""
    exact = exact or try_exact(space, objective)
    if exact is not None:
        mu = exact.mu
        return MeanEstimate(mu, mu, mu, 0, exact=True)
    return estimate_mu(space, objective, chernoff_samples(eps), derive_rng(seed, "mu"))


@dataclass
class TrialResult:
    trial: int
    objective_value: int
    T: int
    hamming: int
    oracle_calls: int
    wallclock_ms: float
    trace: AttackTrace | None = None


@dataclass
class AttackReport:
    trials: int
    bias_hat: float
    bias_ci: tuple[float, float]
    t_mean: float
    hamming_mean: float
    hamming_sem: float
    calls_total: int
    mu: MeanEstimate
    params: AttackParams
    bounds: dict[str, float | None]
    rows: list[TrialResult] = field(repr=False, default_factory=list)


def comparator_bounds(n: int, mu: float, params: AttackParams, rho: float) -> dict[str, float | None]:
    out: dict[str, float | None] = {}
    tau, gamma = params.tau, params.gamma
    if mu > 0:
        out["ideal_bias_bound"] = bounds.ideal_bias_bound(n, mu, tau)
        out["bias_lower_bound"] = bounds.bias_lower_bound(n, mu, tau, gamma)
    out["ideal_budget_bound"] = bounds.ideal_budget_bound(n, mu, tau)
    out["budget_upper_bound"] = bounds.budget_upper_bound(n, mu, tau, gamma) if tau > 2 * gamma else None
    out["theorem_budget"] = bounds.theorem_budget(n, mu, rho) if 0 < mu < rho < 1 else None
    return out


def _one_trial(space, objective, params, oracle, seed, t, keep_trace):
    start = time.perf_counter()
    _, trace = run_attack(space, objective, params, derive_rng(seed, "attack", t), oracle=oracle)
    ms = (time.perf_counter() - start) * 1e3
    return TrialResult(t, trace.objective_value, trace.T, trace.hamming_cost, trace.oracle_calls, ms,
                       trace if keep_trace else None)


def run_trials(space, objective, params, trials, seed, *, workers=1, oracle=None, keep_traces=False):
    """Independent attack runs on per-trial streams, returned in trial order."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if oracle is None:
        oracle = make_oracle(space, objective, params)

    def job(t):
        return _one_trial(space, objective, params, oracle, seed, t, keep_traces)

    if workers <= 1:
        return [job(t) for t in range(trials)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(job, range(trials)))


def summarize(rows, *, mu, params, n, rho=0.99) -> AttackReport:
    vals = np.array([r.objective_value for r in rows])
    ham = np.array([r.hamming for r in rows], dtype=float)
    hits = int(vals.sum())
    return AttackReport(
        trials=len(rows),
        bias_hat=hits / len(rows),
        bias_ci=binomial_ci(hits, len(rows)),
        t_mean=float(np.mean([r.T for r in rows])),
        hamming_mean=float(ham.mean()),
        hamming_sem=float(ham.std(ddof=1) / math.sqrt(len(rows))) if len(rows) > 1 else 0.0,
        calls_total=int(sum(r.oracle_calls for r in rows)),
        mu=mu,
        params=params,
        bounds=comparator_bounds(n, mu.mean, params, rho),
        rows=list(rows),
    )


def measure(
    space: ProductSpace,
    objective: Objective,
    params: AttackParams,
    trials: int,
    seed: int,
    *,
    rho: float | None = None,
    workers: int = 1,
    keep_traces: bool = False,
) -> AttackReport:
    """Run ``trials`` attacks and compare the aggregate with the closed-form bounds."""
    exact = try_exact(space, objective) if (params.mode == "exact" or params.sampling == "binomial") else None
    if params.mu is not None:
        mu = MeanEstimate(params.mu, params.mu, params.mu, 0, exact=True)
    else:
        mu = initial_mean(space, objective, exact=exact, seed=seed)
    oracle = make_oracle(space, objective, params, exact=exact)
    rows = run_trials(space, objective, params, trials, seed, workers=workers, oracle=oracle, keep_traces=keep_traces)
    rho = rho if rho is not None else (params.rho if params.rho is not None else 0.99)
    return summarize(rows, mu=mu, params=params, n=space.n, rho=rho)
