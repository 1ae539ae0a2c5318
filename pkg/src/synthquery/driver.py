"""The main query-release loop, error metrics and simple baselines."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import accountant as acct
from .core import Database, QueryKind, SchemaError
from .queries import QueryClass, evaluate_all
from .solver import OPTIMAL, SolverConfig, build_csp, solve
from .weights import WeightState, distribution, init_uniform, sample, update

log = logging.getLogger(__name__)

MODES = ("theory", "manual", "budget")


class RunAborted(RuntimeError):
    def __init__(self, message: str, trace: "RunTrace"):
        super().__init__(message)
        self.trace = trace


@dataclass(frozen=True)
class RunConfig:
    mode: str = "manual"
    # theory mode
    alpha: float | None = None
    beta: float | None = None
    # manual mode (s and eta are also used by budget mode)
    T: int | None = None
    s: int | None = None
    eta: float | None = None
    # budget mode
    epsilon: float | None = None
    delta: float = 1e-3
    accountant: str = "hetero"
    max_T: int = acct.DEFAULT_MAX_T
    solver: SolverConfig = field(default_factory=SolverConfig)
    seed: int = 0
    positive_only: bool = True

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown run mode {self.mode!r}")
        if not 0 < self.delta < 1:
            raise ValueError(f"delta must lie in (0, 1), got {self.delta}")
        if self.mode == "theory":
            if self.alpha is None or self.beta is None:
                raise ValueError("theory mode needs alpha and beta")
            if not (0 < self.alpha < 1 and 0 < self.beta < 1):
                raise ValueError("alpha and beta must lie in (0, 1)")
        else:
            if self.s is None or self.eta is None:
                raise ValueError(f"{self.mode} mode needs s and eta")
            if self.s < 1 or not self.eta > 0:
                raise ValueError("s must be >= 1 and eta > 0")
        if self.mode == "manual" and (self.T is None or self.T < 1):
            raise ValueError("manual mode needs T >= 1")
        if self.mode == "budget":
            if self.epsilon is None or not self.epsilon > 0:
                raise ValueError("budget mode needs epsilon > 0")
            if self.accountant not in acct.ACCOUNTANTS:
                raise ValueError(f"unknown accountant {self.accountant!r}")

    def schedule(self, size_q: int, d: int, n: int) -> tuple[int, int, float]:
        """``(T, s, eta)`` for this run."""
        if self.mode == "theory":
            T, eta, s = acct.theory_params(self.alpha, self.beta, size_q, d)
            return T, s, eta
        if self.mode == "manual":
            return self.T, self.s, self.eta
        T = acct.max_rounds(self.epsilon, self.delta, self.eta, self.s, n,
                            self.accountant, ceiling=self.max_T)
        return T, self.s, self.eta


@dataclass
class RoundInfo:
    t: int
    sampled: dict
    record: str
    objective: int
    total_weight: int
    status: str
    seconds: float

    def to_dict(self, timing: bool = True) -> dict:
        out = {"t": self.t, "sampled": self.sampled, "record": self.record,
               "objective": self.objective, "total_weight": self.total_weight,
               "status": self.status}
        if timing:
            out["seconds"] = self.seconds
        return out


@dataclass
class RunTrace:
    T: int
    s: int
    eta: float
    rounds: list[RoundInfo] = field(default_factory=list)
    privacy: acct.PrivacyReport | None = None
    seconds: float = 0.0

    @property
    def optimal_rounds(self) -> int:
        return sum(r.status == OPTIMAL for r in self.rounds)

    @property
    def timeout_rounds(self) -> int:
        return len(self.rounds) - self.optimal_rounds


def _round_seed(seed: int, t: int) -> int:
    return int(np.random.SeedSequence([seed, t]).generate_state(1)[0])


def run_release(db: Database, qclass: QueryClass, config: RunConfig,
                  state_hook=None) -> tuple[Database, RunTrace]:
    """Play the query-release game for ``T`` rounds and return the best responses.

    Each round samples ``s`` queries from the current weights, solves the
    resulting weighted MAXCSP for a record, and reweights queries by how
    badly that record answers them.  The synthetic database is the multiset
    of chosen records.  ``state_hook(t, state)`` is called before sampling
    in every round, for debug dumps.
    """
    if qclass.true_answers is None:
        raise ValueError("query class has no true answers; run evaluate_all first")
    if qclass.max_index >= db.d:
        raise SchemaError(f"queries reference attribute {qclass.max_index}, d={db.d}")
    T, s, eta = config.schedule(len(qclass), db.d, db.n)
    log.info("running %d rounds, s=%d, eta=%g", T, s, eta)
    trace = RunTrace(T, s, eta)
    state = init_uniform(qclass, eta)
    sample_rng = np.random.default_rng(np.random.SeedSequence([config.seed, 0]))
    records = []
    start = time.perf_counter()
    for t in range(1, T + 1):
        t0 = time.perf_counter()
        if state_hook is not None:
            state_hook(t, state)
        picks = sample(state, s, sample_rng)
        csp = build_csp(picks, qclass, db.d)
        round_seed = _round_seed(config.seed, t)
        solver_cfg = replace(config.solver, seed=round_seed)
        try:
            res = solve(csp, solver_cfg, np.random.default_rng([round_seed, 1]))
        except Exception as exc:
            trace.privacy = acct.report(acct.RunParams(max(1, t - 1), s, eta, db.n), config.delta)
            raise RunAborted(f"solver failed in round {t}: {exc}", trace) from exc
        state = update(state, res.x, qclass)
        records.append(res.x)
        uniq, counts = np.unique(picks, return_counts=True)
        trace.rounds.append(RoundInfo(
            t, {int(j): int(c) for j, c in zip(uniq, counts)},
            "".join("01"[b] for b in res.x.tolist()), res.objective, csp.total_weight,
            res.status, time.perf_counter() - t0,
        ))
    trace.seconds = time.perf_counter() - start
    trace.privacy = acct.report(acct.RunParams(T, s, eta, db.n), config.delta)
    return Database(np.stack(records), db.feature_names), trace


@dataclass
class ErrorReport:
    avg_error: float
    max_error: float
    num_queries: int
    name: str = "synthetic"
    per_query: np.ndarray | None = field(default=None, repr=False)
    answers: np.ndarray | None = field(default=None, repr=False)

    def to_dict(self) -> dict:
        return {"name": self.name, "avgError": self.avg_error, "maxError": self.max_error,
                "numQueries": self.num_queries}


def _true_answers(qclass: QueryClass, db: Database) -> np.ndarray:
    if qclass.true_answers is not None:
        return qclass.true_answers
    return evaluate_all(qclass, db).true_answers


def _report(qclass: QueryClass, truth: np.ndarray, answers: np.ndarray, positive_only: bool,
            name: str) -> ErrorReport:
    mask = qclass.positive_mask if positive_only else np.ones(len(qclass), dtype=bool)
    err = np.abs(truth[mask] - answers[mask])
    return ErrorReport(float(err.mean()), float(err.max()), int(mask.sum()), name, err, answers[mask])


def error_report(qclass: QueryClass, db: Database, synth: Database,
                 positive_only: bool = True, name: str = "synthetic") -> ErrorReport:
    if db.d != synth.d:
        raise SchemaError(f"database has d={db.d}, synthetic data d={synth.d}")
    truth = _true_answers(qclass, db)
    answers = evaluate_all(qclass, synth).true_answers
    return _report(qclass, truth, answers, positive_only, name)


def avg_error(qclass: QueryClass, db: Database, synth: Database, positive_only: bool = True) -> float:
    return error_report(qclass, db, synth, positive_only).avg_error


def max_error(qclass: QueryClass, db: Database, synth: Database, positive_only: bool = True) -> float:
    return error_report(qclass, db, synth, positive_only).max_error


def baseline_zeros(d: int, qclass: QueryClass, db: Database, positive_only: bool = True) -> ErrorReport:
    """Errors of a database whose records are all zeros."""
    zeros = Database(np.zeros((1, d), dtype=np.uint8))
    return error_report(qclass, db, zeros, positive_only, name="zeros")


def uniform_answers(qclass: QueryClass) -> np.ndarray:
    """Answers on the database holding every record once, computed analytically."""
    if not np.all(np.isin(qclass.kinds, (QueryKind.MARGINAL, QueryKind.PARITY))):
        raise ValueError("uniform baseline supports marginal and parity queries only")
    marginal = qclass.kinds == QueryKind.MARGINAL
    pos = np.where(marginal, 1 / 8, 1 / 2)
    neg = np.where(marginal, 7 / 8, 1 / 2)
    return np.where(qclass.neg, neg, pos)


def baseline_uniform(qclass: QueryClass, db: Database, positive_only: bool = True) -> ErrorReport:
    truth = _true_answers(qclass, db)
    return _report(qclass, truth, uniform_answers(qclass), positive_only, "uniform")


def laplace_scale(num_queries: int, n: int, eps: float, delta: float) -> float:
    """Per-answer Laplace scale so ``num_queries`` releases of sensitivity
    ``1/n`` compose to roughly ``(eps, delta)`` under advanced composition."""
    return math.sqrt(2 * num_queries * math.log(1 / delta)) / (n * eps)


def baseline_laplace(qclass: QueryClass, db: Database, eps: float, delta: float, seed: int,
                     positive_only: bool = True) -> ErrorReport:
    """Noisy answers only (no synthetic data), clamped to [0, 1]."""
    if not eps > 0:
        raise ValueError("epsilon must be positive")
    truth = _true_answers(qclass, db)
    mask = qclass.positive_mask if positive_only else np.ones(len(qclass), dtype=bool)
    scale = laplace_scale(int(mask.sum()), db.n, eps, delta)
    rng = np.random.default_rng(seed)
    noisy = np.clip(truth + rng.laplace(0.0, scale, size=len(truth)), 0.0, 1.0)
    return _report(qclass, truth, noisy, positive_only, "laplace")


def sampling_concentration_check(state: WeightState, qclass: QueryClass, s: int, alpha: float,
                                 trials: int, seed: int = 0, d: int | None = None) -> dict:
    """Empirical failure rate of ``sup_x |qbar(x) - Q(x)| < alpha / 4``.

    ``qbar`` averages ``s`` queries drawn from the state's distribution and
    ``Q`` is the distribution-weighted query; the sup runs over all ``2^d``
    records, so ``d`` must be small.
    """
    from .solver import _all_records

    d = qclass.max_index + 1 if d is None else d
    if d > 12:
        raise ValueError(f"d={d} too large to enumerate the record universe (limit 12)")
    universe = _all_records(d)
    values = qclass.evaluate_records(universe).astype(np.float64)
    p = distribution(state)
    weighted = values @ p
    rng = np.random.default_rng(seed)
    deviations = np.empty(trials)
    for i in range(trials):
        picks = sample(state, s, rng)
        freq = np.bincount(picks, minlength=len(p)) / s
        deviations[i] = np.max(np.abs(values @ freq - weighted))
    failures = int(np.count_nonzero(deviations >= alpha / 4))
    return {"trials": trials, "failures": failures, "failure_rate": failures / trials,
            "threshold": alpha / 4, "max_deviation": float(deviations.max()),
            "mean_deviation": float(deviations.mean())}


def results_dict(db: Database, qclass: QueryClass, config: RunConfig, trace: RunTrace,
                 report: ErrorReport) -> dict:
    priv = trace.privacy
    used = {"pure": priv.pure, "approx": priv.approx, "hetero": priv.hetero}
    name = config.accountant if config.mode == "budget" else "hetero"
    return {
        "epsilon": used[name],
        "delta": priv.delta,
        "accountant": name,
        "privacy": {"pure": priv.pure, "approx": priv.approx, "hetero": priv.hetero},
        "mode": config.mode,
        "T": trace.T,
        "s": trace.s,
        "eta": trace.eta,
        "n": db.n,
        "d": db.d,
        "numQueries": len(qclass),
        "avgError": report.avg_error,
        "maxError": report.max_error,
        "runtimeMs": round(trace.seconds * 1000),
        "seed": config.seed,
        "solverStats": {"optimalRounds": trace.optimal_rounds,
                        "timeoutRounds": trace.timeout_rounds},
    }


def sweep(db: Database, qclass: QueryClass, epsilons, base: RunConfig, seeds=(0,)) -> list[dict]:
    """Budget-mode runs over a grid of epsilons; one row per (epsilon, seed)."""
    rows = []
    for eps in epsilons:
        for seed in seeds:
            cfg = replace(base, mode="budget", epsilon=float(eps), seed=seed)
            synth, trace = run_release(db, qclass, cfg)
            rep = error_report(qclass, db, synth, cfg.positive_only)
            rows.append({"epsilon": float(eps), "seed": seed, "T": trace.T,
                         "avg_error": rep.avg_error, "max_error": rep.max_error})
    return rows


def sweep_means(rows: list[dict]) -> list[dict]:
    out = []
    for eps in dict.fromkeys(r["epsilon"] for r in rows):
        sel = [r for r in rows if r["epsilon"] == eps]
        out.append({"epsilon": eps,
                    "avg_error": float(np.mean([r["avg_error"] for r in sel])),
                    "max_error": float(np.mean([r["max_error"] for r in sel]))})
    return out


__all__ = [
    "RunConfig", "RunTrace", "RoundInfo", "RunAborted", "ErrorReport", "run_release",
    "error_report", "avg_error", "max_error", "baseline_zeros", "baseline_uniform",
    "baseline_laplace", "laplace_scale", "uniform_answers", "sampling_concentration_check",
    "results_dict", "sweep", "sweep_means",
]
