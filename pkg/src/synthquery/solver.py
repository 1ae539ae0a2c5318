"""Best response of the data player: a weighted MAXCSP over sampled queries.

Each sampled query becomes a clause on three attributes.  A record's
objective is the weighted number of clauses it satisfies.  Two solvers are
provided: full enumeration (small ``d``, exact) and a WalkSAT-style local
search with restarts.  ``export_lp`` writes the equivalent integer program.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

from .core import Query, QueryKind, SchemaError, as_record
from .queries import QueryClass, evaluate_records

OPTIMAL = "optimal"
TIMEOUT_INCUMBENT = "timeoutIncumbent"
FREE_POLICIES = ("zeros", "ones", "random", "bias")


class SolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class CspInstance:
    d: int
    queries: tuple[Query, ...]
    mult: np.ndarray
    kinds: np.ndarray = field(repr=False)
    idx: np.ndarray = field(repr=False)
    neg: np.ndarray = field(repr=False)

    @classmethod
    def from_clauses(cls, d: int, clauses) -> "CspInstance":
        """Build from ``(query, multiplicity)`` pairs; repeated queries merge."""
        merged: dict[Query, int] = {}
        for q, m in clauses:
            if m < 1:
                raise SolverError(f"clause multiplicity must be positive, got {m}")
            if max(q.indices) >= d:
                raise SchemaError(f"clause {q} out of range for d={d}")
            merged[q] = merged.get(q, 0) + int(m)
        qs = tuple(merged)
        return cls(
            d=d,
            queries=qs,
            mult=np.array([merged[q] for q in qs], dtype=np.int64),
            kinds=np.array([q.kind for q in qs], dtype=np.int8),
            idx=np.array([q.indices for q in qs], dtype=np.int64).reshape(-1, 3),
            neg=np.array([q.negated for q in qs], dtype=bool),
        )

    @property
    def total_weight(self) -> int:
        return int(self.mult.sum())

    def __len__(self) -> int:
        return len(self.queries)

    def touched(self) -> np.ndarray:
        mask = np.zeros(self.d, dtype=bool)
        mask[self.idx.ravel()] = True
        return mask

    def upper_bound(self) -> int:
        """Total weight minus the weight lost to contradictory pairs.

        A query and its negation can never both hold, so at least the smaller
        multiplicity of every such pair is unsatisfied.
        """
        pos = {q: m for q, m in zip(self.queries, self.mult.tolist())}
        lost = 0
        for q, m in pos.items():
            if not q.negated:
                other = pos.get(Query(q.kind, q.indices, True))
                if other is not None:
                    lost += min(m, other)
        return self.total_weight - lost

    def dump(self) -> str:
        """Query-file lines with a trailing multiplicity column."""
        return "".join(f"{q} {m}\n" for q, m in zip(self.queries, self.mult.tolist()))


@dataclass(frozen=True)
class SolverConfig:
    mode: str = "local"
    exact_dim_limit: int = 24
    timeout: float = 20.0
    restarts: int = 10
    max_flips: int | None = None
    noise: float = 0.3
    free_policy: str = "zeros"
    bias: np.ndarray | None = field(default=None, repr=False)
    seed: int = 0
    threads: int = 1

    def __post_init__(self):
        if self.mode not in ("exact", "local"):
            raise SolverError(f"unknown solver mode {self.mode!r}")
        if self.timeout <= 0:
            raise SolverError("timeout must be positive")
        if not 1 <= self.exact_dim_limit <= 30:
            raise SolverError("exact_dim_limit must lie in [1, 30]")
        if self.restarts < 1:
            raise SolverError("need at least one restart")
        if self.free_policy not in FREE_POLICIES:
            raise SolverError(f"unknown free-attribute policy {self.free_policy!r}")

    def flips_for(self, d: int) -> int:
        return self.max_flips if self.max_flips is not None else max(200, 10 * d)


@dataclass(frozen=True)
class SolveResult:
    x: np.ndarray
    objective: int
    status: str
    free_attributes: tuple[int, ...]


def build_csp(samples, qclass: QueryClass, d: int | None = None) -> CspInstance:
    """Collapse a multiset of sampled query positions into weighted clauses."""
    samples = np.asarray(samples)
    if samples.size == 0:
        raise SolverError("no sampled queries")
    d = int(qclass.max_index) + 1 if d is None else d
    if d <= qclass.max_index:
        raise SchemaError(f"query class references attribute {qclass.max_index}, d={d}")
    uniq, counts = np.unique(samples, return_counts=True)
    return CspInstance(
        d=d,
        queries=tuple(qclass[int(j)] for j in uniq),
        mult=counts.astype(np.int64),
        kinds=qclass.kinds[uniq].copy(),
        idx=qclass.idx[uniq].copy(),
        neg=qclass.neg[uniq].copy(),
    )


def clause_values(csp: CspInstance, records) -> np.ndarray:
    return evaluate_records(csp.kinds, csp.idx, csp.neg, records)


def objective(csp: CspInstance, x) -> int:
    x = as_record(x)
    if len(x) < csp.d:
        raise SchemaError(f"record has {len(x)} bits, instance needs {csp.d}")
    if len(csp) == 0:
        return 0
    return int(clause_values(csp, x)[0] @ csp.mult)


def assign_free_attributes(x, touched, config: SolverConfig, rng=None) -> np.ndarray:
    """Fill the bits outside ``touched`` according to ``config.free_policy``."""
    x = np.array(as_record(x), copy=True)
    mask = np.zeros(len(x), dtype=bool)
    touched = np.asarray(touched)
    if touched.dtype == bool:
        mask[:] = touched
    else:
        mask[touched.astype(np.int64)] = True
    free = ~mask
    policy = config.free_policy
    if policy == "bias" and config.bias is None:
        raise SolverError("bias policy needs a bias vector")
    if policy == "zeros":
        x[free] = 0
    elif policy == "ones":
        x[free] = 1
    else:
        rng = rng if rng is not None else np.random.default_rng(config.seed)
        if policy == "random":
            draw = rng.integers(0, 2, size=len(x), dtype=np.uint8)
        else:
            p = np.asarray(config.bias, dtype=np.float64)
            if len(p) != len(x):
                raise SolverError(f"bias vector has {len(p)} entries for {len(x)} attributes")
            draw = (rng.random(len(x)) < p).astype(np.uint8)
        x[free] = draw[free]
    return x


@lru_cache(maxsize=8)
def _all_records(d: int) -> np.ndarray:
    """Every record of length ``d`` in lexicographic order (attribute 0 most significant)."""
    k = np.arange(1 << d, dtype=np.int64)
    shifts = np.arange(d - 1, -1, -1, dtype=np.int64)
    out = ((k[:, None] >> shifts) & 1).astype(np.uint8)
    out.setflags(write=False)
    return out


def _records_range(d: int, lo: int, hi: int) -> np.ndarray:
    if d <= 16:
        return _all_records(d)[lo:hi]
    k = np.arange(lo, hi, dtype=np.int64)
    shifts = np.arange(d - 1, -1, -1, dtype=np.int64)
    return ((k[:, None] >> shifts) & 1).astype(np.uint8)


def _finish(csp: CspInstance, x: np.ndarray, config: SolverConfig, status: str,
            rng=None) -> SolveResult:
    touched = csp.touched()
    x = assign_free_attributes(x, touched, config, rng)
    return SolveResult(x, objective(csp, x), status, tuple(np.flatnonzero(~touched).tolist()))


def solve_exact(csp: CspInstance, config: SolverConfig = SolverConfig(mode="exact"),
                rng=None) -> SolveResult:
    """Enumerate all ``2^d`` records; ties go to the lexicographically smallest."""
    d = csp.d
    if d > config.exact_dim_limit:
        raise SolverError(
            f"d={d} exceeds exact_dim_limit={config.exact_dim_limit}; use local search"
        )
    if len(csp) == 0:
        return _finish(csp, np.zeros(d, dtype=np.uint8), config, OPTIMAL, rng)
    deadline = time.monotonic() + config.timeout
    total = 1 << d
    chunk = max(1, min(total, (1 << 22) // max(1, len(csp))))
    best_val, best_k = -1, 0
    status = OPTIMAL
    for lo in range(0, total, chunk):
        hi = min(total, lo + chunk)
        scores = clause_values(csp, _records_range(d, lo, hi)).astype(np.int64) @ csp.mult
        j = int(np.argmax(scores))
        if scores[j] > best_val:
            best_val, best_k = int(scores[j]), lo + j
        if best_val == csp.total_weight:
            break
        if hi < total and time.monotonic() > deadline:
            status = TIMEOUT_INCUMBENT
            break
    x = _records_range(d, best_k, best_k + 1)[0].copy()
    return _finish(csp, x, config, status, rng)


class _LocalSearch:
    """Assignment plus incrementally maintained clause counts and flip gains.

    ``gain[v]`` is the objective change from flipping attribute ``v``.  A flip
    only touches the clauses in ``v``'s occurrence list, so only their
    contributions to ``gain`` are recomputed.
    """

    def __init__(self, csp: CspInstance, x: np.ndarray):
        self.csp = csp
        self.idx = csp.idx
        self.marginal = csp.kinds == QueryKind.MARGINAL
        self.neg = csp.neg
        self.w = csp.mult
        flat = csp.idx.ravel()
        order = np.argsort(flat, kind="stable")
        starts = np.searchsorted(flat[order], np.arange(csp.d + 1))
        clause_of = order // 3
        self.occ = [clause_of[starts[v]:starts[v + 1]] for v in range(csp.d)]
        self.x = x
        self.counts = x[csp.idx].sum(axis=1, dtype=np.int64)
        self.sat = self._satisfied(self.counts, slice(None))
        self.value = int(self.w @ self.sat)
        self.gain = np.bincount(flat, weights=self._contrib(slice(None)).ravel(),
                                minlength=csp.d).astype(np.int64)

    def _satisfied(self, counts, sel) -> np.ndarray:
        marginal, neg = self.marginal[sel], self.neg[sel]
        if counts.ndim == 2:
            marginal, neg = marginal[:, None], neg[:, None]
        return np.where(marginal, counts == 3, (counts & 1) == 0) ^ neg

    def _contrib(self, sel) -> np.ndarray:
        """Per clause and position: objective change if that attribute flips."""
        cur = self.x[self.idx[sel]].astype(np.int64)
        after = self.counts[sel][:, None] + 1 - 2 * cur
        sat = self.sat[sel]
        changed = self._satisfied(after, sel) != sat[:, None]
        return changed * np.where(sat, -self.w[sel], self.w[sel])[:, None]

    def flip(self, v: int) -> None:
        cl = self.occ[v]
        old = self._contrib(cl)
        old_sat = self.sat[cl]
        self.counts[cl] += 1 - 2 * int(self.x[v])
        self.x[v] ^= 1
        new_sat = self._satisfied(self.counts[cl], cl)
        self.sat[cl] = new_sat
        self.value += int(self.w[cl] @ (new_sat.astype(np.int64) - old_sat))
        np.add.at(self.gain, self.idx[cl].ravel(), (self._contrib(cl) - old).ravel())


def _better(obj: int, x: np.ndarray, best_obj: int, best_x: np.ndarray | None) -> bool:
    if best_x is None or obj > best_obj:
        return True
    return obj == best_obj and x.tobytes() < best_x.tobytes()


def _local_run(csp: CspInstance, config: SolverConfig, restart: int, deadline: float,
               bound: int):
    rng = np.random.default_rng(config.seed + restart)
    d = csp.d
    if restart == 0:
        x = np.zeros(d, dtype=np.uint8)
    else:
        x = rng.integers(0, 2, size=d, dtype=np.uint8)
    ls = _LocalSearch(csp, x)

    # greedy ascent: best single flip, lowest index on ties
    while True:
        v = int(np.argmax(ls.gain))
        if ls.gain[v] <= 0:
            break
        ls.flip(v)

    best_obj, best_x = ls.value, ls.x.copy()
    cut = False
    for step in range(config.flips_for(d)):
        if best_obj >= bound:
            break
        if step % 64 == 63 and time.monotonic() > deadline:
            cut = True
            break
        unsat = np.flatnonzero(~ls.sat)
        c = int(unsat[rng.integers(unsat.size)])
        vars_c = csp.idx[c]
        if rng.random() < config.noise:
            v = int(vars_c[rng.integers(3)])
        else:
            v = int(vars_c[int(np.argmax(ls.gain[vars_c]))])
        ls.flip(v)
        if _better(ls.value, ls.x, best_obj, best_x):
            best_obj, best_x = ls.value, ls.x.copy()
    else:
        cut = True
    return best_obj, best_x, cut


def solve_local(csp: CspInstance, config: SolverConfig = SolverConfig(), rng=None) -> SolveResult:
    """Greedy ascent then noisy clause-directed flips, over several restarts.

    Restart ``r`` is seeded with ``config.seed + r``; restart 0 starts from the
    all-zeros record.  The best incumbent wins, ties by smaller record.
    Status is ``optimal`` only when the incumbent reaches the contradictory-pair
    upper bound; otherwise the flip budget or timeout ended the search.
    """
    d = csp.d
    if len(csp) == 0:
        return _finish(csp, np.zeros(d, dtype=np.uint8), config, OPTIMAL, rng)
    deadline = time.monotonic() + config.timeout
    bound = csp.upper_bound()

    def run(r: int):
        return _local_run(csp, config, r, deadline, bound)

    if config.threads > 1 and config.restarts > 1:
        with ThreadPoolExecutor(min(config.threads, config.restarts)) as pool:
            results = list(pool.map(run, range(config.restarts)))
    else:
        results = [run(r) for r in range(config.restarts)]
    best_obj, best_x = -1, None
    for obj, x, _ in results:
        if _better(obj, x, best_obj, best_x):
            best_obj, best_x = obj, x
    status = OPTIMAL if best_obj >= bound else TIMEOUT_INCUMBENT
    return _finish(csp, best_x, config, status, rng)


def solve(csp: CspInstance, config: SolverConfig, rng=None) -> SolveResult:
    if config.mode == "exact":
        return solve_exact(csp, config, rng)
    return solve_local(csp, config, rng)


def lp_text(csp: CspInstance) -> str:
    """Integer program for the instance in LP file format.

    Marginal:          x_a + x_b + x_c >= 3 c
    Negated marginal:  (1-x_a) + (1-x_b) + (1-x_c) >= c
    Parity:            x_a + x_b + x_c = 2 d + c - 1
    Negated parity:    x_a + x_b + x_c = 2 d + c
    with x, c binary and d in {0, 1, 2}; clause weights are objective coefficients.
    """
    lines = ["\\ weighted MAXCSP best response", "Maximize"]
    terms = []
    for i, m in enumerate(csp.mult.tolist()):
        terms.append(f"c{i}" if m == 1 else f"{m} c{i}")
    lines.append(" obj: " + (" + ".join(terms) if terms else "0 c_dummy"))
    lines.append("Subject To")
    parity_vars = []
    for i, q in enumerate(csp.queries):
        a, b, c = q.indices
        if q.kind is QueryKind.MARGINAL:
            if not q.negated:
                row = f"x{a} + x{b} + x{c} - 3 c{i} >= 0"
            else:
                row = f"- x{a} - x{b} - x{c} - c{i} >= -3"
        else:
            parity_vars.append(f"d{i}")
            rhs = 0 if q.negated else -1
            row = f"x{a} + x{b} + x{c} - 2 d{i} - c{i} = {rhs}"
        lines.append(f" r{i}: {row}")
    if parity_vars:
        lines.append("Bounds")
        lines.extend(f" 0 <= {v} <= 2" for v in parity_vars)
    lines.append("Binary")
    binaries = [f"x{j}" for j in range(csp.d)] + [f"c{i}" for i in range(len(csp))]
    if not terms:
        binaries.append("c_dummy")
    for k in range(0, len(binaries), 10):
        lines.append(" " + " ".join(binaries[k:k + 10]))
    if parity_vars:
        lines.append("Generals")
        for k in range(0, len(parity_vars), 10):
            lines.append(" " + " ".join(parity_vars[k:k + 10]))
    lines.append("End")
    return "\n".join(lines) + "\n"


def export_lp(csp: CspInstance, path) -> None:
    Path(path).write_text(lp_text(csp))


def dump_csp(csp: CspInstance, path) -> None:
    Path(path).write_text(csp.dump())


__all__ = [
    "CspInstance", "SolverConfig", "SolveResult", "SolverError", "build_csp", "objective",
    "solve_exact", "solve_local", "solve", "assign_free_attributes", "export_lp", "lp_text",
    "dump_csp", "OPTIMAL", "TIMEOUT_INCUMBENT",
]
