"""Online clean-label poisoning of a training stream of m examples.

The attacked product space is ``x^m``: one block per training example, each
block value an instance tuple. Labels are never attacked; every emitted pair
is ``(v_i, c(v_i))``. Two goals are supported:

* ``ChosenInstance(x)``: make the learned hypothesis mislabel a fixed ``x``.
* ``Confidence(eps)``: make the learned hypothesis have risk >= eps, with risk
  estimated on fresh samples and thresholded at ``199 eps / 200``.
"""

from __future__ import annotations

import math
import subprocess
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from . import bounds
from .attack import (
    AttackParams,
    AttackReport,
    AttackTrace,
    MeanEstimate,
    StepEvent,
    binomial_ci,
    initial_mean,
    make_oracle,
    run_attack,
    run_trials,
    summarize,
    try_exact,
)
from .objective import ExactAttackResult, Objective, enumerate_attack, format_tuple, parse_token
from .space import DEFAULT_CAP, ProductSpace, derive_rng, power

PROBE_SIZE = 1000
RISK_CHUNK = 1 << 18


# --- hypotheses and toy learners ---


class ConstantHypothesis:
    def __init__(self, label):
        self.label = label

    def __call__(self, x):
        return self.label

    def predict_batch(self, rows):
        return np.full(len(rows), self.label, dtype=object if isinstance(self.label, str) else None)


class ThresholdHypothesis:
    def __init__(self, coord: int, cut: float):
        self.coord, self.cut = coord, cut

    def __call__(self, x):
        return int(x[self.coord] >= self.cut)

    def predict_batch(self, rows):
        return (np.asarray(rows, dtype=float)[:, self.coord] >= self.cut).astype(np.int64)


class CentroidHypothesis:
    def __init__(self, labels: list, centroids: np.ndarray):
        self.labels, self.centroids = labels, centroids

    def predict_batch(self, rows):
        rows = np.asarray(rows, dtype=np.int64)
        dist = (rows[:, None, :] != self.centroids[None, :, :]).sum(axis=2)
        # argmin returns the first minimum: ties go to the first class
        return np.array(self.labels, dtype=object)[dist.argmin(axis=1)]

    def __call__(self, x):
        return self.predict_batch([x])[0]


class ToyLearner:
    """Deterministic learners used in experiments.

    ``majority_label``: constant hypothesis with the modal training label,
    ties broken by the first example's label.
    ``threshold_1d``: predicts 1 iff ``x[coord] >= cut``; the cut minimizes
    training error over observed values and +inf, ties to the smallest cut.
    ``nearest_centroid``: per-class coordinate-wise majority vector, nearest
    under Hamming distance, ties to the first class in sorted label order.
    """

    KINDS = ("majority_label", "threshold_1d", "nearest_centroid")
    deterministic = True

    def __init__(self, kind: str, coord: int = 0):
        if kind not in self.KINDS:
            raise ValueError(f"unknown learner kind {kind!r}; expected one of {self.KINDS}")
        self.kind, self.coord = kind, coord
        self.name = kind

    def __repr__(self):
        return f"ToyLearner({self.kind!r})"

    def symmetric_in(self, m: int) -> bool:
        """True when reordering the m training pairs cannot change the hypothesis."""
        if self.kind == "majority_label":
            return m % 2 == 1  # binary labels cannot tie
        return True

    def __call__(self, pairs: Sequence[tuple[tuple, Any]]):
        if not pairs:
            raise ValueError("empty training set")
        return getattr(self, "_" + self.kind)(pairs)

    def _majority_label(self, pairs):
        counts: dict = {}
        for _, y in pairs:
            counts[y] = counts.get(y, 0) + 1
        top = max(counts.values())
        modal = [y for y, c in counts.items() if c == top]
        label = modal[0] if len(modal) == 1 else pairs[0][1]
        return ConstantHypothesis(label)

    def _threshold_1d(self, pairs):
        xs = np.array([x[self.coord] for x, _ in pairs], dtype=float)
        ys = np.array([y for _, y in pairs], dtype=np.int64)
        cuts = np.append(np.unique(xs), np.inf)
        errs = [int(np.sum((xs >= c).astype(np.int64) != ys)) for c in cuts]
        return ThresholdHypothesis(self.coord, float(cuts[int(np.argmin(errs))]))

    def _nearest_centroid(self, pairs):
        labels = sorted({y for _, y in pairs})
        rows = np.array([x for x, _ in pairs], dtype=float)
        ys = [y for _, y in pairs]
        cents = []
        for lab in labels:
            mask = np.array([y == lab for y in ys])
            cents.append((rows[mask].mean(axis=0) > 0.5).astype(np.int64))
        return CentroidHypothesis(labels, np.array(cents))


def make_toy_learner(kind: str, coord: int = 0) -> ToyLearner:
    return ToyLearner(kind, coord)


class ExternalHypothesis:
    def __init__(self, cmd, pairs):
        self.cmd, self.pairs = cmd, list(pairs)

    def predict_batch(self, rows):
        lines = [f"{format_tuple(x)}\t{y}" for x, y in self.pairs]
        lines.append("")
        lines.extend(format_tuple(r) for r in rows)
        out = subprocess.run(self.cmd, shell=isinstance(self.cmd, str), input="\n".join(lines) + "\n",
                             capture_output=True, text=True, check=True).stdout.split()
        if len(out) != len(rows):
            raise RuntimeError(f"external learner answered {len(out)} labels for {len(rows)} probes")
        return np.array([parse_token(t) for t in out], dtype=object)

    def __call__(self, x):
        return self.predict_batch([x])[0]


class ExternalLearner:
    """Learner run as a subprocess per training set.

    stdin: one ``instance-tokens<TAB>label`` line per training pair, a blank
    line, then one probe instance per line. stdout: one label per probe.
    """

    deterministic = True

    def __init__(self, cmd, *, symmetric: bool = False):
        self.cmd = cmd
        self._symmetric = symmetric
        self.name = f"external({cmd!r})"

    def symmetric_in(self, m):
        return self._symmetric

    def __call__(self, pairs):
        return ExternalHypothesis(self.cmd, pairs)


def predict_many(h, rows) -> np.ndarray:
    if hasattr(h, "predict_batch"):
        return np.asarray(h.predict_batch(rows))
    if hasattr(h, "eval_batch"):
        return np.asarray(h.eval_batch(rows))
    return np.array([h(tuple(r)) for r in rows], dtype=object)


# --- problems and objectives ---


@dataclass(frozen=True)
class ChosenInstance:
    target: tuple


@dataclass(frozen=True)
class Confidence:
    epsilon: float


@dataclass(frozen=True)
class RiskEstimatorParams:
    epsilon: float
    delta_risk: float = 0.01
    n_risk: int = 0

    @staticmethod
    def min_samples(epsilon: float, delta_risk: float) -> int:
        return math.ceil(3 * math.log(2 / delta_risk) / (epsilon / 100) ** 2)

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError("epsilon must be > 0")
        if not 0 < self.delta_risk < 1:
            raise ValueError("delta_risk must lie in (0, 1)")
        need = self.min_samples(self.epsilon, self.delta_risk)
        if not self.n_risk:
            object.__setattr__(self, "n_risk", need)
        elif self.n_risk < need:
            raise ValueError(f"n_risk={self.n_risk} below the {need} samples needed to separate "
                             f"risk >= eps from risk < 99 eps/100")

    @property
    def cutoff(self) -> float:
        return 199 * self.epsilon / 200


@dataclass
class PoisoningProblem:
    learner: Any
    concept: Any
    instance_space: ProductSpace
    m: int
    goal: ChosenInstance | Confidence
    check_seed: int = 0

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("m must be >= 1")
        if not getattr(self.learner, "deterministic", True):
            raise ValueError("randomized learners are not supported")
        self._check_determinism()

    def _check_determinism(self):
        rng = derive_rng(self.check_seed, "determinism")
        xs = [self.instance_space.sample_full(rng) for _ in range(self.m)]
        pairs = [(x, self.concept(x)) for x in xs]
        probes = self.instance_space.sample_batch(rng, PROBE_SIZE)
        a = predict_many(self.learner(pairs), probes)
        b = predict_many(self.learner(pairs), probes)
        if not np.array_equal(a, b):
            raise ValueError("learner is not deterministic: two runs on one training set disagree")

    def example_space(self, cap: int = DEFAULT_CAP) -> ProductSpace:
        return power(self.instance_space, self.m, cap)

    def labeled(self, xs) -> list[tuple[tuple, Any]]:
        return [(tuple(x), self.concept(tuple(x))) for x in xs]


def _learner_symmetric(problem):
    sym = getattr(problem.learner, "symmetric_in", None)
    return (lambda n: n == problem.m and bool(sym(n))) if sym else False


def chosen_instance_objective(problem: PoisoningProblem) -> Objective:
    """1 iff the hypothesis trained on the correctly-labeled stream mislabels the target."""
    if not isinstance(problem.goal, ChosenInstance):
        raise ValueError("problem goal is not chosen_instance")
    target = tuple(problem.goal.target)
    c_target = problem.concept(target)

    def fn(xs):
        h = problem.learner(problem.labeled(xs))
        return int(h(target) != c_target)

    return Objective(fn, name=f"chosen_instance({target})", symmetric=_learner_symmetric(problem))


def confidence_objective(problem: PoisoningProblem, risk: RiskEstimatorParams | None = None, *,
                         seed: int = 0) -> Objective:
    """1 iff the learned hypothesis has estimated risk >= 199 eps / 200.

    The test sample for a training stream is drawn from a stream keyed by
    ``(seed, stream contents)``, so the objective is a pure function.
    """
    if not isinstance(problem.goal, Confidence):
        raise ValueError("problem goal is not confidence")
    risk = risk or RiskEstimatorParams(problem.goal.epsilon)
    c = problem.concept

    def fn(xs):
        if risk.epsilon > 1:
            return 0
        h = problem.learner(problem.labeled(xs))
        rng = derive_rng(seed, "risk", repr(tuple(xs)))
        wrong = 0
        for start in range(0, risk.n_risk, RISK_CHUNK):
            test = problem.instance_space.sample_batch(rng, min(RISK_CHUNK, risk.n_risk - start))
            wrong += int(np.sum(predict_many(h, test) != predict_many(c, test)))
        return int(wrong / risk.n_risk >= risk.cutoff)

    return Objective(fn, name=f"confidence({risk.epsilon})", symmetric=_learner_symmetric(problem))


def goal_objective(problem: PoisoningProblem, risk: RiskEstimatorParams | None = None, seed: int = 0) -> Objective:
    if isinstance(problem.goal, ChosenInstance):
        return chosen_instance_objective(problem)
    return confidence_objective(problem, risk, seed=seed)


@dataclass
class PoisonResult:
    pairs: list[tuple[tuple, Any]]
    trace: AttackTrace
    mu: float
    degenerate: bool


def poison_training_stream(problem: PoisoningProblem, objective: Objective, params: AttackParams, rng, *,
                           mu: float | None = None, space: ProductSpace | None = None, oracle=None) -> PoisonResult:
    """Tamper with one sampled training stream online; labels always come from the concept."""
    space = space or problem.example_space()
    if mu is None:
        mu = initial_mean(space, objective).mean
    if mu <= 0:
        data_rng, _ = rng.spawn(2)
        u = space.sample_full(data_rng)
        steps = [StepEvent("C3", x, x) for x in u]
        trace = AttackTrace(u, u, steps, objective.eval(u), 1)
        return PoisonResult(problem.labeled(u), trace, mu, True)
    v, trace = run_attack(space, objective, params, rng, oracle=oracle)
    pairs = problem.labeled(v)
    for x, y in pairs:
        assert y == problem.concept(x), "poisoned pair carries a wrong label"
    return PoisonResult(pairs, trace, mu, False)


@dataclass
class PoisoningReport:
    goal: str
    bad_rate: float  # Err_A, or 1 - Conf_A for the confidence goal
    bad_rate_ci: tuple[float, float]
    t_mean: float
    hamming_mean: float
    mu: MeanEstimate
    comparator: float | None
    comparator_name: str
    degenerate: bool
    attack: AttackReport | None = field(default=None, repr=False)


def evaluate_poisoning(problem: PoisoningProblem, params: AttackParams, trials: int, seed: int, *,
                       rho: float = 0.99, risk: RiskEstimatorParams | None = None,
                       workers: int = 1) -> PoisoningReport:
    space = problem.example_space()
    f = goal_objective(problem, risk, seed)
    goal = "chosen_instance" if isinstance(problem.goal, ChosenInstance) else "confidence"
    exact = try_exact(space, f) if (params.mode == "exact" or params.sampling == "binomial") else None
    mu = initial_mean(space, f, exact=exact, seed=seed)
    if goal == "chosen_instance":
        name = "poisoning_budget_chosen"
        comparator = bounds.poisoning_budget_chosen(problem.m, mu.mean, rho) if 0 < mu.mean < rho else None
    else:
        # bad-event mean mu -> rho is confidence 1-mu -> 1-rho
        name = "poisoning_budget_confidence"
        ok = 0 < mu.mean < rho
        comparator = bounds.poisoning_budget_confidence(problem.m, 1 - rho, 1 - mu.mean) if ok else None
    if mu.mean <= 0:
        return PoisoningReport(goal, 0.0, binomial_ci(0, 1), 0.0, 0.0, mu, comparator, name, True)
    oracle = make_oracle(space, f, params, exact=exact)
    rows = run_trials(space, f, params, trials, seed, workers=workers, oracle=oracle)
    rep = summarize(rows, mu=mu, params=params, n=problem.m, rho=rho)
    return PoisoningReport(goal, rep.bias_hat, rep.bias_ci, rep.t_mean, rep.hamming_mean, mu, comparator, name,
                           False, rep)


def exact_poisoning(problem: PoisoningProblem, tau: float, *, objective: Objective | None = None) -> ExactAttackResult:
    """Exact ``E[f]``, ``E[T]`` and ``E[hamming]`` of the exact-oracle poisoning attack."""
    f = objective or goal_objective(problem)
    return enumerate_attack(problem.example_space(), f, tau)
