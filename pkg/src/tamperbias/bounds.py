"""Closed-form guarantees for the tampering attack, used as report comparators.

Probabilities are clamped to [0, 1] and per-run tampering counts to [0, n].
The headline budget formulas (``theorem_budget`` and the poisoning variants)
are returned unclamped so reports show the formula value itself.
"""

from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class AzumaParams:
    n: int
    tau: float
    gamma: float
    s: float

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if self.tau <= 0:
            raise ValueError("tau must be > 0")
        if self.gamma < 0:
            raise ValueError("gamma must be >= 0")


def azuma_approx_bound(p: AzumaParams) -> float:
    """Tail bound ``Pr[sum t_i <= -s]`` for approximately-martingale increments.

    Hypotheses: ``Pr[|t_i| > tau] <= gamma`` and ``E[t_i | past] >= -gamma``.
    Returns 1 when ``s <= n*gamma`` (no nontrivial bound).
    """
    n, tau, gamma, s = p.n, p.tau, p.gamma, p.s
    if s <= n * gamma:
        return 1.0
    val = math.exp(-((s - n * gamma) ** 2) / (2 * n * (tau + gamma) ** 2)) + n * gamma
    return min(1.0, val)


def _check_mu(mu):
    if not 0 < mu <= 1:
        raise ValueError(f"mu must lie in (0, 1], got {mu}")


def bias_lower_bound(n: int, mu: float, tau: float, gamma: float, *, variant: str = "proof") -> float:
    """Lower bound on ``E[f(v)]`` under the Monte Carlo attack.

    ``variant="proof"`` uses ``(mu - 3n*gamma)^2`` in the exponent numerator,
    ``variant="statement"`` uses ``(mu - 2n*gamma)^2``. When the bracketed term
    is not positive the bound is vacuous and 0 is returned.
    """
    _check_mu(mu)
    if tau <= 0:
        raise ValueError("tau must be > 0")
    c = {"proof": 3, "statement": 2}[variant]
    lead = mu - c * n * gamma
    if lead <= 0:
        return 0.0
    val = 1.0 - math.exp(-(lead**2) / (2 * n * (tau + 4 * gamma) ** 2)) - 4 * n * gamma
    return min(1.0, max(0.0, val))


def budget_upper_bound(n: int, mu: float, tau: float, gamma: float) -> float:
    """Upper bound on the expected number of tampered blocks ``E[T]``."""
    if tau <= 2 * gamma:
        raise ValueError(f"need tau > 2*gamma (tau={tau}, gamma={gamma})")
    if not 0 <= mu <= 1:
        raise ValueError("mu must lie in [0, 1]")
    val = (1 - mu + n * gamma) / (tau - 2 * gamma) + 3 * n * n * gamma
    return min(float(n), max(0.0, val))


def ideal_bias_bound(n: int, mu: float, tau: float) -> float:
    """``1 - exp(-mu^2 / (2 n tau^2))``: exact-oracle bias guarantee."""
    return bias_lower_bound(n, mu, tau, 0.0)


def ideal_budget_bound(n: int, mu: float, tau: float) -> float:
    """``(1 - mu) / tau``: exact-oracle bound on ``E[T]``."""
    return budget_upper_bound(n, mu, tau, 0.0)


def _check_mu_rho(mu, rho):
    if not 0 < mu < rho < 1:
        raise ValueError(f"need 0 < mu < rho < 1, got mu={mu}, rho={rho}")


def theorem_budget(n: int, mu: float, rho: float) -> float:
    """Average Hamming budget ``(2/mu) * sqrt(n ln(2/(1-rho)))`` to push mean mu to rho."""
    _check_mu_rho(mu, rho)
    return (2 / mu) * math.sqrt(n * math.log(2 / (1 - rho)))


evasion_budget = theorem_budget


def poisoning_budget_chosen(m: int, mu: float, rho: float) -> float:
    """Replaced-example budget for raising chosen-instance error from mu to rho."""
    return theorem_budget(m, mu, rho)


def poisoning_budget_confidence(m: int, mu: float, rho: float) -> float:
    """Replaced-example budget for driving confidence from rho down to mu."""
    _check_mu_rho(mu, rho)
    return (2 / (1 - rho)) * math.sqrt(m * math.log(2 / mu))


FORMULAS = {
    "azuma_approx_bound": (lambda n, tau, gamma, s: azuma_approx_bound(AzumaParams(int(n), tau, gamma, s))),
    "bias_lower_bound": (lambda n, mu, tau, gamma: bias_lower_bound(int(n), mu, tau, gamma)),
    "bias_lower_bound_statement": (
        lambda n, mu, tau, gamma: bias_lower_bound(int(n), mu, tau, gamma, variant="statement")
    ),
    "budget_upper_bound": (lambda n, mu, tau, gamma: budget_upper_bound(int(n), mu, tau, gamma)),
    "ideal_bias_bound": (lambda n, mu, tau: ideal_bias_bound(int(n), mu, tau)),
    "ideal_budget_bound": (lambda n, mu, tau: ideal_budget_bound(int(n), mu, tau)),
    "theorem_budget": (lambda n, mu, rho: theorem_budget(int(n), mu, rho)),
    "poisoning_budget_chosen": (lambda m, mu, rho: poisoning_budget_chosen(int(m), mu, rho)),
    "poisoning_budget_confidence": (lambda m, mu, rho: poisoning_budget_confidence(int(m), mu, rho)),
}
