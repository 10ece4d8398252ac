"""Exact evasion on small threshold classifiers: adversarial risk and Hamming cost versus n.

    python3 scripts/evasion_sweep.py --ns 4 8 12 --tau 0.1
"""

import argparse

from tamperbias.evasion import EvasionProblem, exact_evasion
from tamperbias.objective import majority, threshold
from tamperbias.space import uniform_bits


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--ns", type=int, nargs="+", default=[4, 8, 12])
    ap.add_argument("--tau", type=float, default=0.1)
    args = ap.parse_args()

    print(f"{'n':>3} {'risk0':>8} {'adv_risk':>8} {'E[T]':>8} {'E[ham]':>8}")
    for n in args.ns:
        # h votes by majority, c requires at least 3/4 of the bits: they disagree on a band
        problem = EvasionProblem(uniform_bits(n), majority(), threshold([1] * n, 0.75 * n))
        r = exact_evasion(problem, args.tau)
        print(f"{n:>3} {r.mu:8.4f} {r.bias:8.4f} {r.expected_T:8.4f} {r.expected_hamming:8.4f}")


if __name__ == "__main__":
    main()
