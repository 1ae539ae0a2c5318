"""Records, databases, queries and the query-release game payoff.

Records are 0/1 vectors over ``d`` binary attributes.  A database stores its
records as a dense ``(n, d)`` uint8 matrix (repeated rows are multiplicity)
and lazily builds a column-packed copy for fast conjunction/parity counting.

Parity queries are evaluated in {0, 1}: a positive parity is 1 when an even
number of its attributes are set.  With that convention both query kinds are
linear queries and every payoff lies in [-1, 1].
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np


class SchemaError(ValueError):
    """Raised when a record, query or database disagrees with the schema."""


class QueryKind(enum.IntEnum):
    MARGINAL = 0
    PARITY = 1

    @property
    def code(self) -> str:
        return "M" if self is QueryKind.MARGINAL else "P"


@dataclass(frozen=True, order=True)
class Query:
    """A 3-way marginal or 3-wise parity over distinct attribute indices."""

    kind: QueryKind
    indices: tuple[int, int, int]
    negated: bool = False

    def __post_init__(self):
        idx = tuple(int(i) for i in self.indices)
        if len(idx) != 3 or len(set(idx)) != 3:
            raise SchemaError(f"query needs 3 distinct indices, got {self.indices!r}")
        if min(idx) < 0:
            raise SchemaError(f"negative attribute index in {idx!r}")
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "kind", QueryKind(self.kind))

    @classmethod
    def marginal(cls, a: int, b: int, c: int, negated: bool = False) -> "Query":
        return cls(QueryKind.MARGINAL, (a, b, c), negated)

    @classmethod
    def parity(cls, a: int, b: int, c: int, negated: bool = False) -> "Query":
        return cls(QueryKind.PARITY, (a, b, c), negated)

    def __str__(self) -> str:
        sign = "-" if self.negated else "+"
        return f"{self.kind.code} {sign} " + " ".join(map(str, self.indices))


def negate(q: Query) -> Query:
    return Query(q.kind, q.indices, not q.negated)


def _check_record(x: np.ndarray, q: Query) -> None:
    if max(q.indices) >= x.shape[-1]:
        raise SchemaError(
            f"query {q} references attribute {max(q.indices)} "
            f"but records have {x.shape[-1]} attributes"
        )


def as_record(bits) -> np.ndarray:
    """Coerce a bit string ("101"), sequence or array into a uint8 vector."""
    if isinstance(bits, str):
        if set(bits) - {"0", "1"}:
            raise SchemaError(f"record {bits!r} contains non-bit characters")
        return np.frombuffer(bits.encode(), dtype=np.uint8) - ord("0")
    x = np.asarray(bits, dtype=np.uint8)
    if x.ndim != 1:
        raise SchemaError("a record is a 1-d bit vector")
    if np.any(x > 1):
        raise SchemaError("record bits must be 0 or 1")
    return x


def eval_query(q: Query, x) -> int:
    """Value of ``q`` on one record, in {0, 1}."""
    x = as_record(x)
    _check_record(x, q)
    a, b, c = q.indices
    ones = int(x[a]) + int(x[b]) + int(x[c])
    if q.kind is QueryKind.MARGINAL:
        value = int(ones == 3)
    else:
        value = int(ones % 2 == 0)
    return 1 - value if q.negated else value


def payoff(q_value_on_d: float, q: Query, x) -> float:
    """Game payoff ``q(D) - q(x)``; the data player wants it small."""
    return q_value_on_d - eval_query(q, x)


class Database:
    """A multiset of records sharing ``d`` attributes.

    Instances are treated as immutable; the backing array is made read-only.
    """

    def __init__(self, records, feature_names: Sequence[str] | None = None):
        arr = np.array(records, dtype=np.uint8, copy=True)
        if arr.ndim != 2:
            raise SchemaError("records must form an (n, d) matrix")
        if np.any(arr > 1):
            raise SchemaError("record bits must be 0 or 1")
        arr.setflags(write=False)
        self.bits = arr
        if feature_names is not None:
            feature_names = tuple(feature_names)
            if len(feature_names) != arr.shape[1]:
                raise SchemaError(
                    f"{len(feature_names)} feature names for {arr.shape[1]} attributes"
                )
            if len(set(feature_names)) != len(feature_names):
                raise SchemaError("feature names must be distinct")
        self.feature_names = feature_names

    @classmethod
    def from_strings(cls, rows: Iterable[str]) -> "Database":
        return cls(np.stack([as_record(r) for r in rows]))

    @property
    def n(self) -> int:
        return self.bits.shape[0]

    @property
    def d(self) -> int:
        return self.bits.shape[1]

    def __len__(self) -> int:
        return self.n

    def __eq__(self, other) -> bool:
        if not isinstance(other, Database):
            return NotImplemented
        return self.bits.shape == other.bits.shape and bool(np.all(self.bits == other.bits))

    def __repr__(self) -> str:
        return f"Database(n={self.n}, d={self.d})"

    def names(self) -> tuple[str, ...]:
        if self.feature_names is not None:
            return self.feature_names
        return tuple(f"x{i}" for i in range(self.d))

    @cached_property
    def packed_columns(self) -> np.ndarray:
        """Attribute columns packed 64 records per word, shape ``(d, ceil(n/64))``.

        Padding bits are zero, so AND-ed conjunction counts are exact;
        parity code must account for the padding separately.
        """
        packed = np.packbits(self.bits.T, axis=1, bitorder="little")
        pad = (-packed.shape[1]) % 8
        if pad:
            packed = np.pad(packed, ((0, 0), (0, pad)))
        return np.ascontiguousarray(packed).view(np.uint64)


def eval_query_db(q: Query, db: Database) -> float:
    """Fraction of records (multiplicity counted) on which ``q`` is 1."""
    if db.n == 0:
        raise SchemaError("cannot evaluate a query on an empty database")
    if max(q.indices) >= db.d:
        raise SchemaError(f"query {q} out of range for d={db.d}")
    cols = db.bits[:, list(q.indices)].astype(np.int64)
    ones = cols.sum(axis=1)
    if q.kind is QueryKind.MARGINAL:
        hits = np.count_nonzero(ones == 3)
    else:
        hits = np.count_nonzero(ones % 2 == 0)
    if q.negated:
        hits = db.n - hits
    return hits / db.n
