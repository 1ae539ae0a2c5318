import itertools

import numpy as np
import pytest

from synthquery.core import Query, QueryKind
from synthquery.solver import CspInstance


def naive_value(q: Query, x) -> int:
    """Reference predicate, written out case by case."""
    bits = [int(x[i]) for i in q.indices]
    if q.kind is QueryKind.MARGINAL:
        v = 1 if bits == [1, 1, 1] else 0
    else:
        v = 1 if sum(bits) in (0, 2) else 0
    return 1 - v if q.negated else v


def random_query(rng, d, kind=None, negated=None) -> Query:
    a, b, c = rng.choice(d, size=3, replace=False)
    if kind is None:
        kind = QueryKind(int(rng.integers(2)))
    if negated is None:
        negated = bool(rng.integers(2))
    return Query(kind, (int(a), int(b), int(c)), negated)


def random_csp(rng, d, s, kinds=(QueryKind.MARGINAL, QueryKind.PARITY)) -> CspInstance:
    clauses = []
    for _ in range(s):
        kind = kinds[int(rng.integers(len(kinds)))]
        clauses.append((random_query(rng, d, kind), 1))
    return CspInstance.from_clauses(d, clauses)


def brute_force_scores(csp: CspInstance) -> np.ndarray:
    """Weighted clause count of every record, indexed by the record read as a
    big-endian integer (attribute 0 is the most significant bit).

    Works on integer bit masks, independent of the solver's gather-based
    evaluation.
    """
    d = csp.d
    k = np.arange(1 << d, dtype=np.int64)
    scores = np.zeros(1 << d, dtype=np.int64)
    for q, m in zip(csp.queries, csp.mult.tolist()):
        mask = sum(1 << (d - 1 - i) for i in q.indices)
        hit = k & mask
        if q.kind is QueryKind.MARGINAL:
            v = hit == mask
        else:
            v = np.bitwise_count(hit) % 2 == 0
        if q.negated:
            v = ~v
        scores += m * v
    return scores


def int_to_record(k: int, d: int) -> tuple[int, ...]:
    return tuple((k >> (d - 1 - i)) & 1 for i in range(d))


def brute_force_optimum(csp: CspInstance) -> tuple[int, tuple[int, ...]]:
    """Best weighted clause count over all 2^d records and the lexicographically
    smallest record attaining it."""
    scores = brute_force_scores(csp)
    k = int(np.argmax(scores))
    return int(scores[k]), int_to_record(k, csp.d)


def acceptance_instances(count=200, seed=2024):
    """Random CSPs with d <= 16, mixed kinds, s <= 100."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        d = int(rng.integers(3, 17))
        s = int(rng.integers(1, 101))
        out.append(random_csp(rng, d, s))
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def _parse_linear(expr: str) -> dict[str, float]:
    """'x0 + x1 - 3 c0' -> {'x0': 1, 'x1': 1, 'c0': -3}."""
    coeffs: dict[str, float] = {}
    sign, coef = 1.0, None
    for tok in expr.split():
        if tok in "+-":
            sign = 1.0 if tok == "+" else -1.0
        elif tok[0].isdigit():
            coef = float(tok)
        else:
            coeffs[tok] = coeffs.get(tok, 0.0) + sign * (1.0 if coef is None else coef)
            sign, coef = 1.0, None
    return coeffs


def parse_lp(text: str) -> dict:
    """Minimal reader for the LP files written by ``export_lp``."""
    section = None
    obj: dict[str, float] = {}
    rows = []
    bounds: dict[str, tuple[float, float]] = {}
    binary, general = set(), set()
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("\\"):
            continue
        if line in ("Maximize", "Subject To", "Bounds", "Binary", "Generals", "End"):
            section = line
            continue
        if section == "Maximize":
            obj = _parse_linear(line.split(":", 1)[1])
        elif section == "Subject To":
            body = line.split(":", 1)[1]
            for op in (">=", "<=", "="):
                if op in body:
                    lhs, rhs = body.split(op)
                    rows.append((_parse_linear(lhs), op, float(rhs)))
                    break
        elif section == "Bounds":
            lo, _, var, _, hi = line.split()
            bounds[var] = (float(lo), float(hi))
        elif section == "Binary":
            binary.update(line.split())
        elif section == "Generals":
            general.update(line.split())
    return {"objective": obj, "rows": rows, "bounds": bounds, "binary": binary,
            "general": general}


def lp_max_objective(lp: dict, x) -> float | None:
    """Max objective over the non-x variables with x fixed; None if infeasible.

    Every constraint holds exactly one clause variable and at most one
    integer helper, so the maximization separates row by row.
    """
    total = 0.0
    fixed = {f"x{i}": int(v) for i, v in enumerate(x)}
    for coeffs, op, rhs in lp["rows"]:
        base = sum(c * fixed[v] for v, c in coeffs.items() if v in fixed)
        free = [v for v in coeffs if v not in fixed]
        domains = []
        for v in free:
            if v in lp["binary"]:
                domains.append((0, 1))
            else:
                lo, hi = lp["bounds"][v]
                domains.append(tuple(range(int(lo), int(hi) + 1)))
        best = None
        for combo in itertools.product(*domains):
            val = base + sum(coeffs[v] * a for v, a in zip(free, combo))
            ok = {">=": val >= rhs, "<=": val <= rhs, "=": val == rhs}[op]
            if ok:
                score = sum(lp["objective"].get(v, 0.0) * a for v, a in zip(free, combo))
                best = score if best is None else max(best, score)
        if best is None:
            return None
        total += best
    return total
