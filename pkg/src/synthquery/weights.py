"""Multiplicative-weights distribution over queries.

Weights are kept as logs: ``log_weights = eta * cumulative_payoff`` where the
cumulative payoff of query ``q`` after records ``x^1..x^{t-1}`` is
``sum_i q(D) - q(x^i)``.  Queries the synthetic records answer badly (large
payoff) gain weight, so sampling from the normalized weights is the
exponential mechanism with that cumulative payoff as its score.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .queries import QueryClass


@dataclass
class WeightState:
    log_weights: np.ndarray
    cumulative_payoff: np.ndarray
    eta: float
    t: int = 1
    history: list = field(default_factory=list, repr=False)

    def __len__(self) -> int:
        return len(self.log_weights)


def init_uniform(qclass: QueryClass, eta: float) -> WeightState:
    if eta <= 0:
        raise ValueError(f"eta must be positive, got {eta}")
    if len(qclass) == 0:
        raise ValueError("cannot build a distribution over an empty query class")
    m = len(qclass)
    return WeightState(np.zeros(m), np.zeros(m), float(eta))


def round_payoffs(qclass: QueryClass, x) -> np.ndarray:
    """``q(D) - q(x)`` for every query in the class."""
    if qclass.true_answers is None:
        raise ValueError("query class has no true answers; run evaluate_all first")
    return qclass.true_answers - qclass.evaluate_records(x)[0]


def update(state: WeightState, x, qclass: QueryClass) -> WeightState:
    """Fold record ``x`` into the weights; returns a new state."""
    cum = state.cumulative_payoff + round_payoffs(qclass, x)
    return WeightState(state.eta * cum, cum, state.eta, state.t + 1, state.history)


def distribution(state: WeightState) -> np.ndarray:
    lw = state.log_weights
    w = np.exp(lw - lw.max())
    return w / w.sum()


def sample(state: WeightState, s: int, rng: np.random.Generator) -> np.ndarray:
    """``s`` i.i.d. query indices by inverse CDF over the normalized weights."""
    if s < 1:
        raise ValueError("sample size must be at least 1")
    cdf = np.cumsum(distribution(state))
    u = rng.random(s) * cdf[-1]
    return np.minimum(np.searchsorted(cdf, u, side="right"), len(cdf) - 1)


def top_k(state: WeightState, qclass: QueryClass, k: int = 10) -> list[dict]:
    """Heaviest queries, for per-round debug dumps."""
    p = distribution(state)
    order = np.argsort(-p, kind="stable")[:k]
    return [{"query": str(qclass[j]), "p": float(p[j])} for j in order]
