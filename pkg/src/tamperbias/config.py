"""Experiment configs: a flat TOML schema plus a small call grammar for specs.

Specs are written as Python-style calls with literal arguments, e.g.
``uniform_bits(12)``, ``threshold([1, 2, 3], 3)`` or ``majority``. They are
parsed with :mod:`ast` and never evaluated.

Schema (all keys optional unless noted)::

    kind = "bias"                      # bias | evasion | poisoning | verify_exact
                                       # | estimator_tails | bounds
    space = "uniform_bits(1001)"       # bias, evasion
    objective = "majority"             # bias
    hypothesis = "and(2)"              # evasion
    concept = "constant(0)"            # evasion, poisoning
    instance_space = "uniform_bits(1)" # poisoning
    learner = "majority_label"         # poisoning
    m = 25                             # poisoning
    goal = "chosen_instance"           # poisoning: chosen_instance | confidence
    target = [1]                       # chosen_instance
    epsilon = 0.4                      # confidence

    [params]
    seed = 7                           # required
    mode = "monte_carlo"               # exact | monte_carlo
    tau = 0.01
    gamma = 0.05
    sampling = "binomial"              # literal | binomial
    schedule = false                   # derive tau/gamma from (mu, rho)
    mu = 0.5
    rho = 0.99
    trials = 200

    [output]
    out = "runs/maj1001"
    workers = 4
    timings = false

    [bounds]                           # kind = "bounds"
    formula = "theorem_budget"
    args = { n = 100, mu = 0.5, rho = 0.99 }

    [suite]                            # verify_exact / estimator_tails
    ns = [3, 4, 5]
    taus = [0.1, 0.2]
    cases = 20
    calls = 10000
    gammas = [0.1, 0.2, 0.3]
"""

from __future__ import annotations

import ast
import re
import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import bounds, objective as obj, poisoning, space as sp
from .attack import MODES
from .estimator import SAMPLING_ROUTES

KINDS = ("bias", "evasion", "poisoning", "verify_exact", "estimator_tails", "bounds")
GOALS = ("chosen_instance", "confidence")


class SpecError(ValueError):
    """A spec string or config value that cannot be resolved."""


def parse_call(text: str) -> tuple[str, list, dict]:
    """``"name(1, [2, 3], k=4)"`` -> ``("name", [1, [2, 3]], {"k": 4})``; a bare name has no args."""
    m = re.fullmatch(r"\s*([A-Za-z_]\w*)\s*(.*?)\s*", text, re.S)
    if not m:
        raise SpecError(f"spec {text!r} is not of the form name(args)")
    name, rest = m.groups()
    if not rest:
        return name, [], {}
    # parse the argument list under a placeholder name: spec names may be keywords (and, or)
    try:
        node = ast.parse("f" + rest, mode="eval").body
    except SyntaxError as e:
        raise SpecError(f"cannot parse spec {text!r}: {e.msg}") from None
    if not isinstance(node, ast.Call) or not isinstance(node.func, ast.Name) or node.func.id != "f":
        raise SpecError(f"spec {text!r} is not of the form name(args)")
    try:
        args = [ast.literal_eval(a) for a in node.args]
        kwargs = {k.arg: ast.literal_eval(k.value) for k in node.keywords}
    except ValueError:
        raise SpecError(f"spec {text!r}: arguments must be literals") from None
    return name, args, kwargs


def _build(table: dict, text: str, what: str):
    name, args, kwargs = parse_call(text)
    if name not in table:
        raise SpecError(f"unknown {what} {name!r}; expected one of {sorted(table)}")
    try:
        return table[name](*args, **kwargs)
    except TypeError as e:
        raise SpecError(f"{what} {text!r}: {e}") from None


SPACES = {
    "uniform_bits": sp.uniform_bits,
    "uniform_ints": sp.uniform_ints,
    # one positional argument per block: explicit([[v, w], ...], [[v, w], ...])
    "explicit": lambda *blocks: sp.explicit(blocks),
    # uniform bits reachable only through a sampler: not enumerable
    "sampled_bits": lambda n: sp.sampler_space(n, lambda rng: int(rng.integers(2)), 1),
}

OBJECTIVES = {
    "and": obj.and_,
    "or": obj.or_,
    "xor": obj.xor,
    "majority": obj.majority,
    "dictator": obj.dictator,
    "threshold": obj.threshold,
    "constant": obj.constant,
    "external": obj.external,
}

LEARNERS = {
    "majority_label": lambda: poisoning.make_toy_learner("majority_label"),
    "threshold_1d": lambda coord=0: poisoning.make_toy_learner("threshold_1d", coord),
    "nearest_centroid": lambda: poisoning.make_toy_learner("nearest_centroid"),
    "external": poisoning.ExternalLearner,
}


def build_space(text: str) -> sp.ProductSpace:
    return _build(SPACES, text, "space")


def build_objective(text: str):
    return _build(OBJECTIVES, text, "objective")


def build_learner(text: str):
    return _build(LEARNERS, text, "learner")


@dataclass
class Params:
    seed: int | None = None
    mode: str = "exact"
    tau: float | None = None
    gamma: float = 0.0
    sampling: str = "literal"
    schedule: bool = False
    mu: float | None = None
    rho: float = 0.99
    trials: int = 100


@dataclass
class ExperimentConfig:
    kind: str
    space: str | None = None
    objective: str | None = None
    hypothesis: str | None = None
    concept: str | None = None
    instance_space: str | None = None
    learner: str | None = None
    m: int | None = None
    goal: str = "chosen_instance"
    target: list | None = None
    epsilon: float | None = None
    params: Params = field(default_factory=Params)
    out: str = "runs"
    workers: int = 1
    timings: bool = False
    bounds: dict = field(default_factory=dict)
    suite: dict = field(default_factory=dict)
    source: str = ""


TOP_KEYS = {"kind", "space", "objective", "hypothesis", "concept", "instance_space", "learner", "m", "goal",
            "target", "epsilon"}


def from_dict(data: dict, source: str = "") -> ExperimentConfig:
    unknown = set(data) - TOP_KEYS - {"params", "output", "bounds", "suite"}
    if unknown:
        raise SpecError(f"unknown config keys: {sorted(unknown)}")
    pdata = dict(data.get("params", {}))
    bad = set(pdata) - set(Params.__dataclass_fields__)
    if bad:
        raise SpecError(f"unknown params keys: {sorted(bad)}")
    out = data.get("output", {})
    return ExperimentConfig(
        **{k: data[k] for k in TOP_KEYS if k in data},
        params=Params(**pdata),
        out=out.get("out", "runs"),
        workers=int(out.get("workers", 1)),
        timings=bool(out.get("timings", False)),
        bounds=dict(data.get("bounds", {})),
        suite=dict(data.get("suite", {})),
        source=source,
    )


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        with path.open("rb") as fh:
            data = tomllib.load(fh)
    except FileNotFoundError:
        raise SpecError(f"{path}: no such config file") from None
    except tomllib.TOMLDecodeError as e:
        raise SpecError(f"{path}: {e}") from None
    if "kind" not in data:
        raise SpecError(f"{path}: missing top-level 'kind'")
    return from_dict(data, source=str(path))


@dataclass(frozen=True)
class Diagnostic:
    field: str
    reason: str
    severity: str = "error"  # or "warning"

    def __str__(self):
        return f"{self.severity}: {self.field}: {self.reason}"


def _check_spec(diags, fld, text, builder):
    if text is None:
        diags.append(Diagnostic(fld, "required"))
        return None
    try:
        return builder(text)
    except (SpecError, ValueError) as e:
        diags.append(Diagnostic(fld, str(e)))
        return None


def validate_config(cfg: ExperimentConfig) -> list[Diagnostic]:
    """Diagnostics naming field and reason; no errors means runnable (warnings may remain)."""
    d: list[Diagnostic] = []
    p = cfg.params
    if cfg.kind not in KINDS:
        d.append(Diagnostic("kind", f"must be one of {KINDS}"))
        return d
    if p.seed is None:
        if cfg.kind != "bounds":
            d.append(Diagnostic("params.seed", "params.seed required"))
    elif not isinstance(p.seed, int) or p.seed < 0:
        d.append(Diagnostic("params.seed", "must be a non-negative integer"))
    if cfg.workers < 1:
        d.append(Diagnostic("output.workers", "must be >= 1"))

    if cfg.kind == "bounds":
        name = cfg.bounds.get("formula")
        if name not in bounds.FORMULAS:
            d.append(Diagnostic("bounds.formula", f"must be one of {sorted(bounds.FORMULAS)}"))
        if not isinstance(cfg.bounds.get("args", {}), dict):
            d.append(Diagnostic("bounds.args", "must be a table"))
        return d
    if cfg.kind in ("verify_exact", "estimator_tails"):
        return d

    if p.mode not in MODES:
        d.append(Diagnostic("params.mode", f"must be one of {MODES}"))
    if p.sampling not in SAMPLING_ROUTES:
        d.append(Diagnostic("params.sampling", f"must be one of {SAMPLING_ROUTES}"))
    if p.trials < 1:
        d.append(Diagnostic("params.trials", "must be >= 1"))
    if not 0 < p.rho < 1:
        d.append(Diagnostic("params.rho", "must lie in (0, 1)"))
    if p.schedule:
        if p.mu is None:
            d.append(Diagnostic("params.mu", "schedule needs mu"))
        if p.mode != "monte_carlo":
            d.append(Diagnostic("params.schedule", "schedule applies to monte_carlo mode"))
    else:
        if p.tau is None or not 0 < p.tau < 1:
            d.append(Diagnostic("params.tau", "required, in (0, 1)"))
        if p.mode == "exact" and p.gamma != 0:
            d.append(Diagnostic("params.gamma", "exact mode takes gamma = 0"))
        if p.mode == "monte_carlo":
            if not 0 < p.gamma < 1:
                d.append(Diagnostic("params.gamma", "monte_carlo mode needs gamma in (0, 1)"))
            elif p.tau is not None and p.tau <= 2 * p.gamma:
                d.append(Diagnostic("params.tau", "tau <= 2*gamma: the expected-tampering bound needs "
                                    "tau > 2*gamma and will not be reported", "warning"))

    if cfg.kind in ("bias", "evasion"):
        space = _check_spec(d, "space", cfg.space, build_space)
        names = ("objective",) if cfg.kind == "bias" else ("hypothesis", "concept")
        for nm in names:
            _check_spec(d, nm, getattr(cfg, nm), build_objective)
    else:
        space = _check_spec(d, "instance_space", cfg.instance_space, build_space)
        _check_spec(d, "concept", cfg.concept, build_objective)
        _check_spec(d, "learner", cfg.learner, build_learner)
        if not isinstance(cfg.m, int) or cfg.m < 1:
            d.append(Diagnostic("m", "required integer >= 1"))
        if cfg.goal not in GOALS:
            d.append(Diagnostic("goal", f"must be one of {GOALS}"))
        elif cfg.goal == "chosen_instance":
            if cfg.target is None:
                d.append(Diagnostic("target", "chosen_instance goal needs target"))
            elif space is not None and not space.contains(tuple(cfg.target)):
                d.append(Diagnostic("target", "target is outside instance_space"))
        elif cfg.epsilon is None or cfg.epsilon <= 0:
            d.append(Diagnostic("epsilon", "confidence goal needs epsilon > 0"))

    needs_exact = p.mode == "exact" or p.sampling == "binomial"
    if space is not None and needs_exact and not space.enumerable:
        what = "exact mode" if p.mode == "exact" else "binomial sampling"
        d.append(Diagnostic("space", f"{what} needs enumerable space"))
    return d


def errors(diags: list[Diagnostic]) -> list[Diagnostic]:
    return [x for x in diags if x.severity == "error"]
