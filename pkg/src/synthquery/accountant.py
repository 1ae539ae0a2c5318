"""Privacy cost of a run as a function of (T, s, eta, n).

Round ``t`` draws ``s`` samples from an exponential mechanism whose score has
sensitivity ``(t - 1) / n``, so each sample costs ``2 * eta * (t - 1) / n``
and round 1 is free.  Three accountants compose those costs:

* ``pure``   - basic composition, ``eta * T * (T - 1) * s / n``
* ``approx`` - advanced composition with every sample charged the last
               round's cost ``2 * eta * (T - 1) / n``
* ``hetero`` - advanced composition with each sample charged its own round's cost

All logarithms are natural; ``|X| = 2^d`` only enters through ``d * ln 2``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

ACCOUNTANTS = ("pure", "approx", "hetero")
DEFAULT_MAX_T = 1_000_000


@dataclass(frozen=True)
class RunParams:
    T: int
    s: int
    eta: float
    n: int

    def __post_init__(self):
        if self.T < 1 or self.s < 1 or self.n < 1:
            raise ValueError(f"T, s and n must be positive integers: {self}")
        if not self.eta > 0:
            raise ValueError(f"eta must be positive, got {self.eta}")


@dataclass(frozen=True)
class PrivacyReport:
    pure: float
    approx: float
    hetero: float
    delta: float
    params: RunParams

    def to_dict(self) -> dict:
        out = asdict(self)
        out["params"] = asdict(self.params)
        return out


def _check_delta(delta: float) -> None:
    if not 0 < delta < 1:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")


def pure_epsilon(p: RunParams) -> float:
    return p.eta * p.T * (p.T - 1) * p.s / p.n


def approx_epsilon(p: RunParams, delta: float) -> float:
    _check_delta(delta)
    if p.T == 1:
        return 0.0
    per_sample = 2 * p.eta * (p.T - 1) / p.n
    k = p.s * (p.T - 1)
    return per_sample * math.sqrt(2 * k * math.log(1 / delta)) + k * per_sample * math.expm1(per_sample)


def hetero_epsilon(p: RunParams, delta: float) -> float:
    _check_delta(delta)
    if p.T == 1:
        return 0.0
    eps_t = 2 * p.eta * np.arange(1, p.T, dtype=np.float64) / p.n
    sq = p.s * float(np.sum(eps_t * eps_t))
    lin = p.s * float(np.sum(eps_t * np.expm1(eps_t)))
    return math.sqrt(2 * math.log(1 / delta) * sq) + lin


def epsilon(p: RunParams, delta: float | None, accountant: str) -> float:
    if accountant == "pure":
        return pure_epsilon(p)
    if accountant == "approx":
        return approx_epsilon(p, delta)
    if accountant == "hetero":
        return hetero_epsilon(p, delta)
    raise ValueError(f"unknown accountant {accountant!r}; choose from {ACCOUNTANTS}")


def report(p: RunParams, delta: float) -> PrivacyReport:
    return PrivacyReport(pure_epsilon(p), approx_epsilon(p, delta), hetero_epsilon(p, delta), delta, p)


def max_rounds(eps: float, delta: float | None, eta: float, s: int, n: int,
               accountant: str = "hetero", ceiling: int = DEFAULT_MAX_T) -> int:
    """Largest ``T <= ceiling`` whose cost under ``accountant`` stays within ``eps``.

    Every accountant is 0 at ``T = 1`` and increasing afterwards, so the
    answer is found by doubling then bisection.  Returns 1 when even two
    rounds are too expensive.
    """
    if not eps > 0:
        raise ValueError(f"epsilon must be positive, got {eps}")

    def cost(T: int) -> float:
        return epsilon(RunParams(T, s, eta, n), delta, accountant)

    lo, hi = 1, 2
    while hi <= ceiling and cost(hi) <= eps:
        lo, hi = hi, hi * 2
    if hi > ceiling:
        if cost(ceiling) <= eps:
            return ceiling
        hi = ceiling
    # cost(lo) <= eps < cost(hi)
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if cost(mid) <= eps:
            lo = mid
        else:
            hi = mid
    return lo


def theory_params(alpha: float, beta: float, size_q: int, d: int) -> tuple[int, float, int]:
    """Rounds, step size and sample count that give the accuracy guarantee.

    ``d`` is the number of binary attributes (``|X| = 2^d``).
    """
    if not (0 < alpha < 1 and 0 < beta < 1):
        raise ValueError("alpha and beta must lie in (0, 1)")
    if size_q < 2 or d < 1:
        raise ValueError("need |Q| >= 2 and d >= 1")
    T = math.ceil(16 * math.log(size_q) / alpha**2)
    eta = alpha / 4
    log_term = math.log(2) + d * math.log(2) + math.log(T) - math.log(beta)
    s = math.ceil(48 * log_term / alpha**2)
    return T, eta, s


def concentration_samples(alpha: float, beta: float, d: int) -> int:
    """Samples so the empirical aggregate query is within ``alpha / 4`` of the
    weighted one at every record, with probability ``1 - beta``."""
    return math.ceil(48 * (math.log(2) + d * math.log(2) - math.log(beta)) / alpha**2)


def remark_alpha(eps: float, delta: float, size_q: int, d: int, n: int, gamma: float) -> float:
    """Asymptotic accuracy at budget ``(eps, delta)`` with the hidden constant set to 1."""
    if min(eps, delta, size_q, d, n, gamma) <= 0:
        raise ValueError("all arguments must be positive")
    log_x = math.log(2) + d * math.log(2) - math.log(gamma)
    return (math.sqrt(math.log(size_q)) * math.log(1 / delta) ** (1 / 6) * log_x ** (1 / 6)
            / (n * eps) ** (1 / 3))
