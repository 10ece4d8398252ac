"""Exact clean-label poisoning of a majority-label learner across tau and m.

Prints Err, E[T] and E[hamming] of the exact-oracle attack next to the
gamma = 0 bias and budget bounds.

    python3 scripts/poison_tradeoff.py --ms 9 25 49
"""

import argparse
import csv
import sys

from tamperbias import bounds
from tamperbias.objective import dictator
from tamperbias.poisoning import ChosenInstance, PoisoningProblem, exact_poisoning, make_toy_learner
from tamperbias.space import uniform_bits


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--ms", type=int, nargs="+", default=[9, 25, 49])
    ap.add_argument("--taus", type=float, nargs="+", default=[0.02, 0.05, 0.1, 0.2])
    args = ap.parse_args()

    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["m", "tau", "mu", "err", "bias_bound", "expected_T", "budget_bound", "expected_hamming"])
    for m in args.ms:
        problem = PoisoningProblem(make_toy_learner("majority_label"), dictator(1), uniform_bits(1), m,
                                   ChosenInstance((1,)))
        for tau in args.taus:
            r = exact_poisoning(problem, tau)
            w.writerow([m, tau, round(r.mu, 6), round(r.bias, 6),
                        round(bounds.ideal_bias_bound(m, r.mu, tau), 6), round(r.expected_T, 6),
                        round(bounds.ideal_budget_bound(m, r.mu, tau), 6), round(r.expected_hamming, 6)])


if __name__ == "__main__":
    main()
