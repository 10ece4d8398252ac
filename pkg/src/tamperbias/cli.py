"""Command-line experiment runner.

    tamperbias bias --config configs/maj1001.toml --workers 4 --out runs/maj
    tamperbias bounds theorem_budget n=100 mu=0.5 rho=0.99
    tamperbias validate --config configs/evasion_and2.toml

Exit codes: 0 ok, 1 runtime failure, 2 invalid config, 3 comparator
violation under ``--check``.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import math
import sys
import time
from pathlib import Path

from . import bounds, suites
from .attack import AttackParams, AttackReport, measure, schedule_params
from .config import (
    ExperimentConfig,
    Params,
    SpecError,
    build_learner,
    build_objective,
    build_space,
    errors,
    load_config,
    validate_config,
)
from .estimator import EstimatorParams
from .evasion import DegenerateProblem, EvasionProblem, evaluate_evasion
from .poisoning import ChosenInstance, Confidence, PoisoningProblem, evaluate_poisoning

EXIT_OK, EXIT_RUNTIME, EXIT_INVALID, EXIT_CHECK = 0, 1, 2, 3

CSV_COLUMNS = ["trial", "seed", "n", "mu_hat", "rho_target", "tau", "gamma", "k_gain", "k_max",
               "objective_value", "T", "hamming", "oracle_calls", "wallclock_ms"]

SUBCOMMANDS = {
    "bias": "bias",
    "evasion": "evasion",
    "poison": "poisoning",
    "verify-exact": "verify_exact",
    "estimator-tails": "estimator_tails",
    "bounds": "bounds",
}


class ConfigInvalid(Exception):
    pass


def _num(x):
    """Stable text for CSV cells."""
    if x is None:
        return ""
    if isinstance(x, float):
        return repr(round(x, 12))
    return str(x)


def _write_csv(path: Path, header: list[str], rows: list[list]):
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_num(x) for x in r])


def _write_json(path: Path, payload: dict):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def attack_params(cfg: ExperimentConfig, n: int) -> AttackParams:
    p = cfg.params
    if p.schedule:
        return schedule_params(n, p.mu, p.rho, sampling=p.sampling)
    return AttackParams(tau=p.tau, gamma=p.gamma, mode=p.mode, mu=p.mu, rho=p.rho, sampling=p.sampling)


def _k(params: AttackParams):
    if params.mode == "exact":
        return None, None
    est = params.estimator
    return est.k_gain, est.k_max


def _check(name, measured, bound, ok):
    return {"formula": name, "value": bound, "measured": measured, "pass": bool(ok)}


def attack_checks(rep: AttackReport, n: int, rho: float, comparator_name: str, comparator: float | None) -> list[dict]:
    """Measured statistics against the closed-form guarantees that apply to this run."""
    out = []
    if comparator is not None:
        out.append(_check(comparator_name, rep.hamming_mean, comparator, rep.hamming_mean <= comparator))
    b = rep.bounds
    p = rep.params
    if p.mode == "exact":
        if "ideal_bias_bound" in b:
            out.append(_check("ideal_bias_bound", rep.bias_hat, b["ideal_bias_bound"],
                              rep.bias_ci[1] >= b["ideal_bias_bound"]))
        bound = b["ideal_budget_bound"]
        out.append(_check("ideal_budget_bound", rep.t_mean, bound, rep.t_mean - 3 * _t_sem(rep) <= bound))
    else:
        if "bias_lower_bound" in b:
            out.append(_check("bias_lower_bound", rep.bias_hat, b["bias_lower_bound"],
                              rep.bias_ci[1] >= b["bias_lower_bound"]))
        if b.get("budget_upper_bound") is not None:
            bound = b["budget_upper_bound"]
            out.append(_check("budget_upper_bound", rep.t_mean, bound, rep.t_mean - 3 * _t_sem(rep) <= bound))
    if p.schedule is not None:
        out.append(_check("rho_target", rep.bias_hat, rho, rep.bias_ci[1] >= rho))
    return out


def _t_sem(rep: AttackReport) -> float:
    ts = [r.T for r in rep.rows]
    if len(ts) < 2:
        return 0.0
    m = sum(ts) / len(ts)
    return math.sqrt(sum((t - m) ** 2 for t in ts) / (len(ts) - 1) / len(ts))


def _trial_rows(rep: AttackReport, seed: int, n: int, rho: float, timings: bool) -> list[list]:
    p = rep.params
    kg, km = _k(p)
    rows = []
    for r in rep.rows:
        rows.append([r.trial, seed, n, rep.mu.mean, rho, p.tau, p.gamma, kg, km, r.objective_value, r.T,
                     r.hamming, r.oracle_calls, r.wallclock_ms if timings else None])
    total_ms = sum(r.wallclock_ms for r in rep.rows) if timings else None
    rows.append(["summary", seed, n, rep.mu.mean, rho, p.tau, p.gamma, kg, km, rep.bias_hat, rep.t_mean,
                 rep.hamming_mean, rep.calls_total, total_ms])
    return rows


def _attack_summary(cfg, rep: AttackReport, n: int, checks: list[dict], extra: dict | None = None) -> dict:
    p = rep.params
    kg, km = _k(p)
    out = {
        "kind": cfg.kind,
        "config": cfg.source,
        "seed": cfg.params.seed,
        "trials": rep.trials,
        "n": n,
        "mu": dataclasses.asdict(rep.mu),
        "params": {"mode": p.mode, "tau": p.tau, "gamma": p.gamma, "sampling": p.sampling, "rho": cfg.params.rho,
                   "k_gain": kg, "k_max": km,
                   "schedule": dataclasses.asdict(p.schedule) if p.schedule else None},
        "measured": {"bias_hat": rep.bias_hat, "bias_ci95": list(rep.bias_ci), "t_mean": rep.t_mean,
                     "hamming_mean": rep.hamming_mean, "hamming_sem": rep.hamming_sem,
                     "oracle_calls_total": rep.calls_total},
        "bounds": rep.bounds,
        "comparators": checks,
        "pass": all(c["pass"] for c in checks),
    }
    out.update(extra or {})
    return out


def run_bias(cfg: ExperimentConfig):
    space, f = build_space(cfg.space), build_objective(cfg.objective)
    params = attack_params(cfg, space.n)
    rep = measure(space, f, params, cfg.params.trials, cfg.params.seed, rho=cfg.params.rho, workers=cfg.workers)
    rho = cfg.params.rho
    comp = bounds.theorem_budget(space.n, rep.mu.mean, rho) if 0 < rep.mu.mean < rho else None
    checks = attack_checks(rep, space.n, rho, "theorem_budget", comp)
    header = CSV_COLUMNS
    return _trial_rows(rep, cfg.params.seed, space.n, rho, cfg.timings), header, _attack_summary(cfg, rep, space.n,
                                                                                                 checks)


def run_evasion(cfg: ExperimentConfig):
    space = build_space(cfg.space)
    problem = EvasionProblem(space, build_objective(cfg.hypothesis), build_objective(cfg.concept),
                             mu=cfg.params.mu)
    params = attack_params(cfg, space.n)
    rep = evaluate_evasion(problem, params, cfg.params.trials, cfg.params.seed, rho=cfg.params.rho,
                           workers=cfg.workers)
    checks = attack_checks(rep.attack, space.n, cfg.params.rho, "theorem_budget", rep.comparator)
    extra = {"adversarial_risk": rep.adversarial_risk, "adversarial_risk_ci95": list(rep.adversarial_risk_ci)}
    summary = _attack_summary(cfg, rep.attack, space.n, checks, extra)
    return _trial_rows(rep.attack, cfg.params.seed, space.n, cfg.params.rho, cfg.timings), CSV_COLUMNS, summary


def run_poisoning(cfg: ExperimentConfig):
    inst = build_space(cfg.instance_space)
    goal = ChosenInstance(tuple(cfg.target)) if cfg.goal == "chosen_instance" else Confidence(cfg.epsilon)
    problem = PoisoningProblem(build_learner(cfg.learner), build_objective(cfg.concept), inst, cfg.m, goal,
                               check_seed=cfg.params.seed)
    params = attack_params(cfg, cfg.m)
    rep = evaluate_poisoning(problem, params, cfg.params.trials, cfg.params.seed, rho=cfg.params.rho,
                             workers=cfg.workers)
    header = ["m" if c == "n" else c for c in CSV_COLUMNS]
    if rep.degenerate:
        summary = {"kind": cfg.kind, "config": cfg.source, "seed": cfg.params.seed, "m": cfg.m, "goal": rep.goal,
                   "mu": dataclasses.asdict(rep.mu), "degenerate": True,
                   "comparators": [{"formula": rep.comparator_name, "value": rep.comparator, "measured": None,
                                    "pass": True}],
                   "pass": True, "note": "initial bad-event probability is 0; no attack mounted"}
        return [], header, summary
    checks = attack_checks(rep.attack, cfg.m, cfg.params.rho, rep.comparator_name, rep.comparator)
    extra = {"goal": rep.goal, "m": cfg.m, "degenerate": False, "bad_event_rate": rep.bad_rate,
             "bad_event_rate_ci95": list(rep.bad_rate_ci)}
    summary = _attack_summary(cfg, rep.attack, cfg.m, checks, extra)
    return _trial_rows(rep.attack, cfg.params.seed, cfg.m, cfg.params.rho, cfg.timings), header, summary


def run_verify_exact(cfg: ExperimentConfig):
    ns = cfg.suite.get("ns", suites.SUITE_NS)
    taus = cfg.suite.get("taus", suites.SUITE_TAUS)
    cases = suites.exact_suite(ns, taus)
    header = ["objective", "n", "tau", "mu", "bias", "bias_bound", "expected_T", "budget_bound", "expected_hamming",
              "min_drift", "pass"]
    rows = [[c.objective, c.n, c.tau, c.mu, c.bias, c.bias_bound, c.expected_T, c.budget_bound, c.expected_hamming,
             c.min_drift, int(c.bias_ok and c.budget_ok and c.drift_ok)] for c in cases]
    checks = [
        {"formula": "ideal_bias_bound", "cases": len(cases), "failures": sum(not c.bias_ok for c in cases)},
        {"formula": "ideal_budget_bound", "cases": len(cases), "failures": sum(not c.budget_ok for c in cases)},
        {"formula": "martingale_positivity", "cases": len(cases), "failures": sum(not c.drift_ok for c in cases)},
    ]
    for c in checks:
        c["pass"] = c["failures"] == 0
    summary = {"kind": cfg.kind, "config": cfg.source, "ns": list(ns), "taus": list(taus), "comparators": checks,
               "pass": all(c["pass"] for c in checks)}
    return rows, header, summary


def run_estimator_tails(cfg: ExperimentConfig):
    s = cfg.suite
    cases = suites.estimator_tail_suite(int(s.get("cases", 20)), int(s.get("calls", 10_000)),
                                        tuple(s.get("gammas", (0.1, 0.2, 0.3))), cfg.params.seed)
    header = ["case", "objective", "n", "prefix", "gamma", "k_gain", "k_max", "exact_gain", "gain_fail_rate",
              "gain_limit", "max_low_rate", "max_limit", "pass"]
    rows = []
    for i, c in enumerate(cases):
        est = EstimatorParams(c.gamma)
        rows.append([i, c.objective, c.n, "".join(map(str, c.prefix)), c.gamma, est.k_gain, est.k_max,
                     c.exact_gain, c.gain_fail_rate, c.gain_limit, c.max_low_rate, c.max_limit, int(c.ok)])
    checks = [
        {"formula": "gain_tail gamma/2 + 3 sigma", "failures": sum(c.gain_fail_rate > c.gain_limit for c in cases)},
        {"formula": "max_gain_tail gamma + 3 sigma", "failures": sum(c.max_low_rate > c.max_limit for c in cases)},
    ]
    for c in checks:
        c["pass"] = c["failures"] == 0
    summary = {"kind": cfg.kind, "config": cfg.source, "seed": cfg.params.seed, "cases": len(cases),
               "comparators": checks, "pass": all(c["pass"] for c in checks)}
    return rows, header, summary


RUNNERS = {
    "bias": run_bias,
    "evasion": run_evasion,
    "poisoning": run_poisoning,
    "verify_exact": run_verify_exact,
    "estimator_tails": run_estimator_tails,
}


def eval_formula(name: str, args: dict) -> float:
    if name not in bounds.FORMULAS:
        raise SpecError(f"unknown formula {name!r}; expected one of {sorted(bounds.FORMULAS)}")
    try:
        return bounds.FORMULAS[name](**args)
    except TypeError as e:
        raise SpecError(f"{name}: {e}") from None


def _parse_kv(items: list[str]) -> dict:
    out = {}
    for it in items:
        if "=" not in it:
            raise SpecError(f"expected key=value, got {it!r}")
        k, v = it.split("=", 1)
        try:
            out[k] = float(v)
        except ValueError:
            raise SpecError(f"{k}: not a number: {v!r}") from None
    return out


def _resolve_config(args, kind: str) -> ExperimentConfig:
    if args.config:
        cfg = load_config(args.config)
        if cfg.kind != kind:
            raise ConfigInvalid(f"config kind {cfg.kind!r} does not match subcommand {args.command!r}")
    elif kind in ("verify_exact", "estimator_tails", "bounds"):
        cfg = ExperimentConfig(kind=kind, params=Params(seed=0))
    else:
        raise ConfigInvalid(f"{args.command} needs --config")
    if args.seed is not None:
        cfg.params.seed = args.seed
    if args.trials is not None:
        cfg.params.trials = args.trials
    if args.workers is not None:
        cfg.workers = args.workers
    if args.out is not None:
        cfg.out = args.out
    if args.timings:
        cfg.timings = True
    return cfg


def cmd_bounds(args) -> int:
    if args.formula:
        cfg = ExperimentConfig(kind="bounds", bounds={"formula": args.formula, "args": _parse_kv(args.params)})
    else:
        cfg = _resolve_config(args, "bounds")
    diags = errors(validate_config(cfg))
    if diags:
        raise ConfigInvalid("; ".join(map(str, diags)))
    name, fargs = cfg.bounds["formula"], cfg.bounds.get("args", {})
    value = eval_formula(name, fargs)
    print(f"{name}({', '.join(f'{k}={v:g}' for k, v in fargs.items())}) = {value:.6g}")
    if args.out:
        _write_json(Path(args.out) / "summary.json", {"kind": "bounds", "formula": name, "args": fargs,
                                                      "value": value})
    return EXIT_OK


def cmd_validate(args) -> int:
    cfg = load_config(args.config)
    diags = validate_config(cfg)
    for d in diags:
        print(d)
    if errors(diags):
        return EXIT_INVALID
    print(f"{args.config}: ok")
    return EXIT_OK


def cmd_run(args) -> int:
    kind = SUBCOMMANDS[args.command]
    cfg = _resolve_config(args, kind)
    diags = validate_config(cfg)
    for d in diags:
        if d.severity == "warning":
            print(d, file=sys.stderr)
    if errors(diags):
        raise ConfigInvalid("; ".join(map(str, errors(diags))))
    start = time.perf_counter()
    rows, header, summary = RUNNERS[kind](cfg)
    out = Path(cfg.out)
    _write_csv(out / f"{kind}.csv", header, rows)
    if cfg.timings:
        summary["wallclock_s"] = time.perf_counter() - start
    _write_json(out / "summary.json", summary)
    for c in summary.get("comparators", []):
        mark = "PASS" if c["pass"] else "FAIL"
        detail = f"value={c['value']:.6g} measured={c['measured']:.6g}" if "measured" in c and c["measured"] is not None \
            else f"failures={c.get('failures', 0)}"
        print(f"[{mark}] {c['formula']}: {detail}")
    print(f"wrote {out / f'{kind}.csv'} and {out / 'summary.json'}")
    if args.check and not summary["pass"]:
        return EXIT_CHECK
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="tamperbias", description="Online tampering attacks and their guarantees.")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="TOML experiment config")
        p.add_argument("--seed", type=int, help="override params.seed")
        p.add_argument("--trials", type=int, help="override params.trials")
        p.add_argument("--workers", type=int, help="parallel trial workers")
        p.add_argument("--out", help="output directory")
        p.add_argument("--check", action="store_true", help="exit 3 if a comparator is violated")
        p.add_argument("--timings", action="store_true", help="record wallclock (breaks byte-identical output)")

    for name in ("bias", "evasion", "poison", "verify-exact", "estimator-tails"):
        p = sub.add_parser(name)
        common(p)
        p.set_defaults(func=cmd_run)
    p = sub.add_parser("bounds", help="evaluate a closed-form bound")
    common(p)
    p.add_argument("formula", nargs="?", help=f"one of {', '.join(sorted(bounds.FORMULAS))}")
    p.add_argument("params", nargs="*", help="key=value arguments")
    p.set_defaults(func=cmd_bounds)
    p = sub.add_parser("validate", help="check a config without running it")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_validate)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigInvalid, SpecError) as e:
        print(f"invalid config: {e}", file=sys.stderr)
        return EXIT_INVALID
    except DegenerateProblem as e:
        print(f"degenerate problem: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as e:  # noqa: BLE001 - report any runtime failure as exit 1
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
