"""Negation-closed query classes, random workloads and bulk evaluation."""

from __future__ import annotations

import itertools
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .core import Database, Query, QueryKind, SchemaError, as_record, negate


class WorkloadError(ValueError):
    pass


@dataclass(frozen=True)
class WorkloadSpec:
    kind: QueryKind
    count: int
    seed: int = 0
    sensible: bool = False

    def __post_init__(self):
        if self.count < 1:
            raise WorkloadError("workload size must be at least 1")
        object.__setattr__(self, "kind", QueryKind(self.kind))


class QueryClass:
    """Queries closed under negation, stored pairwise: position ``2k`` holds a
    query and ``2k + 1`` its negation.

    Besides the ``Query`` objects the class keeps flat numpy views
    (``kinds``, ``idx``, ``neg``) used by every vectorized evaluator.
    """

    def __init__(self, queries: Sequence[Query], true_answers: np.ndarray | None = None):
        self.queries = tuple(queries)
        if len(self.queries) == 0 or len(self.queries) % 2:
            raise WorkloadError("a negation-closed class has a positive even size")
        for j in range(0, len(self.queries), 2):
            if self.queries[j + 1] != negate(self.queries[j]):
                raise WorkloadError(f"position {j + 1} is not the negation of position {j}")
        self.index = {q: j for j, q in enumerate(self.queries)}
        if len(self.index) != len(self.queries):
            raise WorkloadError("duplicate query in class")
        self.kinds = np.array([q.kind for q in self.queries], dtype=np.int8)
        self.idx = np.array([q.indices for q in self.queries], dtype=np.int64)
        self.neg = np.array([q.negated for q in self.queries], dtype=bool)
        for arr in (self.kinds, self.idx, self.neg):
            arr.setflags(write=False)
        if true_answers is not None:
            true_answers = np.array(true_answers, dtype=np.float64)
            true_answers.setflags(write=False)
        self.true_answers = true_answers

    def __len__(self) -> int:
        return len(self.queries)

    def __getitem__(self, j: int) -> Query:
        return self.queries[j]

    def lookup(self, q: Query) -> int:
        return self.index[q]

    def partner(self, j: int) -> int:
        """Position of the negation of query ``j``."""
        return j ^ 1

    @property
    def max_index(self) -> int:
        return int(self.idx.max())

    @property
    def positive_mask(self) -> np.ndarray:
        return ~self.neg

    def with_answers(self, answers: np.ndarray) -> "QueryClass":
        return QueryClass(self.queries, answers)

    def evaluate_records(self, records: np.ndarray) -> np.ndarray:
        """Values of every query on each row of ``records``, shape ``(r, |Q|)``."""
        return evaluate_records(self.kinds, self.idx, self.neg, records)


def evaluate_records(kinds, idx, neg, records) -> np.ndarray:
    if isinstance(records, str):
        records = as_record(records)
    records = np.atleast_2d(np.asarray(records, dtype=np.uint8))
    if idx.size and idx.max() >= records.shape[1]:
        raise SchemaError(
            f"queries reference attribute {int(idx.max())} but records have "
            f"{records.shape[1]} attributes"
        )
    ones = records[:, idx].sum(axis=2, dtype=np.int8)
    marginal = ones == 3
    parity = (ones & 1) == 0
    values = np.where(kinds == QueryKind.MARGINAL, marginal, parity)
    return (values ^ neg).astype(np.uint8)


def close_under_negation(positive: Iterable[Query]) -> QueryClass:
    out: list[Query] = []
    seen: set[Query] = set()
    for q in positive:
        if q in seen or negate(q) in seen:
            raise WorkloadError(f"duplicate query {q} in workload")
        seen.add(q)
        out.extend((q, negate(q)))
    return QueryClass(out)


def _feature_groups(d: int, feature_map) -> np.ndarray:
    if feature_map is None:
        return np.arange(d)
    return feature_map.group_ids(d)


def count_valid_triples(d: int, feature_map=None) -> int:
    """Number of index triples whose features lie in three distinct groups."""
    groups = _feature_groups(d, feature_map)
    sizes = np.bincount(groups).astype(object)
    # third elementary symmetric polynomial of the group sizes
    e1 = e2 = e3 = 0
    for s in sizes:
        e3 += e2 * s
        e2 += e1 * s
        e1 += s
    return int(e3)


def generate_workload(spec: WorkloadSpec, d: int, feature_map=None) -> list[Query]:
    """Draw ``spec.count`` distinct positive queries uniformly over valid triples.

    Triples are unordered and stored sorted.  In sensible mode no two indices
    may come from the same feature group of ``feature_map``.
    """
    if d < 3:
        raise WorkloadError("need at least 3 attributes for 3-way queries")
    if spec.sensible and feature_map is None:
        raise WorkloadError("sensible workloads need a feature map")
    groups = _feature_groups(d, feature_map if spec.sensible else None)
    total = count_valid_triples(d, feature_map if spec.sensible else None)
    if spec.count > total:
        raise WorkloadError(f"asked for {spec.count} queries but only {total} valid triples exist")
    rng = np.random.default_rng(spec.seed)

    if spec.count * 2 > total:
        triples = [
            t for t in itertools.combinations(range(d), 3)
            if len({groups[t[0]], groups[t[1]], groups[t[2]]}) == 3
        ]
        chosen = rng.choice(len(triples), size=spec.count, replace=False)
        picked = [triples[i] for i in chosen]
    else:
        seen: set[tuple[int, int, int]] = set()
        picked = []
        while len(picked) < spec.count:
            batch = rng.integers(0, d, size=(max(64, 2 * (spec.count - len(picked))), 3))
            for row in batch:
                a, b, c = (int(v) for v in row)
                if a == b or b == c or a == c:
                    continue
                if groups[a] == groups[b] or groups[b] == groups[c] or groups[a] == groups[c]:
                    continue
                t = tuple(sorted((a, b, c)))
                if t in seen:
                    continue
                seen.add(t)
                picked.append(t)
                if len(picked) == spec.count:
                    break
    return [Query(spec.kind, t) for t in picked]


def _batch_counts(cols: np.ndarray, kinds, idx, lo: int, hi: int) -> np.ndarray:
    """Integer hit counts for positive versions of queries on a word slice."""
    a = cols[idx[:, 0], lo:hi]
    b = cols[idx[:, 1], lo:hi]
    c = cols[idx[:, 2], lo:hi]
    conj = np.bitwise_count(a & b & c).sum(axis=1, dtype=np.int64)
    odd = np.bitwise_count(a ^ b ^ c).sum(axis=1, dtype=np.int64)
    return np.where(kinds == QueryKind.MARGINAL, conj, -odd)


def positive_counts(qclass: QueryClass, db: Database, threads: int = 1,
                    batch_words: int = 1 << 22) -> np.ndarray:
    """Counts of records satisfying each positive query of the class.

    Returned array has one entry per pair (``|Q| / 2``).  Work is split over
    record words; partial integer counts are summed, so the result does not
    depend on ``threads``.
    """
    kinds = qclass.kinds[0::2]
    idx = qclass.idx[0::2]
    cols = db.packed_columns
    n_words = cols.shape[1]
    step = max(1, batch_words // max(1, n_words))

    def run(lo: int, hi: int) -> np.ndarray:
        out = np.empty(len(kinds), dtype=np.int64)
        for s in range(0, len(kinds), step):
            out[s:s + step] = _batch_counts(cols, kinds[s:s + step], idx[s:s + step], lo, hi)
        return out

    threads = max(1, min(threads, n_words))
    bounds = np.linspace(0, n_words, threads + 1).astype(int)
    if threads == 1:
        raw = run(0, n_words)
    else:
        with ThreadPoolExecutor(threads) as pool:
            parts = list(pool.map(run, bounds[:-1], bounds[1:]))
        raw = np.sum(parts, axis=0)
    # parity entries hold -odd; even = n - odd
    return np.where(kinds == QueryKind.MARGINAL, raw, db.n + raw)


def evaluate_all(qclass: QueryClass, db: Database, threads: int = 1) -> QueryClass:
    """Return a copy of ``qclass`` with ``true_answers`` set to ``q(D)``."""
    if db.n == 0:
        raise SchemaError("cannot evaluate queries on an empty database")
    if qclass.max_index >= db.d:
        raise SchemaError(
            f"queries reference attribute {qclass.max_index} but database has d={db.d}"
        )
    pos = positive_counts(qclass, db, threads=threads)
    # the stored positive of a pair may itself be a negated query
    first_neg = qclass.neg[0::2]
    pos = np.where(first_neg, db.n - pos, pos)
    answers = np.empty(len(qclass), dtype=np.float64)
    answers[0::2] = pos / db.n
    answers[1::2] = (db.n - pos) / db.n
    return qclass.with_answers(answers)


_LINE = re.compile(r"^([MP])\s+([+-])\s+(\d+)\s+(\d+)\s+(\d+)(?:\s+(\d+))?$")


def parse_queries(text: str, with_multiplicity: bool = False):
    out = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = _LINE.match(line)
        if m is None or (m.group(6) is not None and not with_multiplicity):
            raise WorkloadError(f"line {lineno}: cannot parse query {raw!r}")
        kind = QueryKind.MARGINAL if m.group(1) == "M" else QueryKind.PARITY
        q = Query(kind, (int(m.group(3)), int(m.group(4)), int(m.group(5))), m.group(2) == "-")
        if with_multiplicity:
            out.append((q, int(m.group(6) or 1)))
        else:
            out.append(q)
    return out


def format_queries(queries: Iterable[Query]) -> str:
    return "".join(f"{q}\n" for q in queries)


def write_queries(queries: Iterable[Query], path) -> None:
    Path(path).write_text(format_queries(queries))


def read_queries(path) -> list[Query]:
    return parse_queries(Path(path).read_text())


def load_workload(path) -> QueryClass:
    """Read a workload file of positive queries and close it under negation."""
    queries = read_queries(path)
    if any(q.negated for q in queries):
        raise WorkloadError("workload files store positive queries only")
    return close_under_negation(queries)
