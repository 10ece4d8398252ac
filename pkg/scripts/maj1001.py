"""Majority over n fair bits: bias and Hamming budget of the Monte Carlo attack.

    python3 scripts/maj1001.py --n 1001 --trials 200 --workers 4
"""

import argparse
import json

from tamperbias import bounds
from tamperbias.attack import AttackParams, measure
from tamperbias.objective import majority
from tamperbias.space import uniform_bits


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=1001)
    ap.add_argument("--tau", type=float, default=0.01)
    ap.add_argument("--gamma", type=float, default=0.05)
    ap.add_argument("--trials", type=int, default=200)
    ap.add_argument("--seed", type=int, default=20240)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--rho", type=float, default=0.99)
    args = ap.parse_args()

    params = AttackParams(tau=args.tau, gamma=args.gamma, mode="monte_carlo", sampling="binomial")
    rep = measure(uniform_bits(args.n), majority(), params, args.trials, args.seed, rho=args.rho,
                  workers=args.workers)
    out = {
        "n": args.n,
        "bias_hat": rep.bias_hat,
        "bias_ci95": rep.bias_ci,
        "hamming_mean": rep.hamming_mean,
        "t_mean": rep.t_mean,
        "theorem_budget": bounds.theorem_budget(args.n, rep.mu.mean, args.rho),
        "oracle_calls": rep.calls_total,
    }
    print(json.dumps(out, indent=2))


if __name__ == "__main__":
    main()
