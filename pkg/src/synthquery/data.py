"""CSV ingestion with one-hot/bucket binarization, bias-model data, database files."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import Database, SchemaError


class ParseError(ValueError):
    pass


@dataclass(frozen=True)
class ColumnSpec:
    name: str
    kind: str  # "categorical" | "continuous" | "binary"
    buckets: int | None = None
    values: tuple[str, ...] | None = None
    range: tuple[float, float] | None = None

    def __post_init__(self):
        if self.kind not in ("categorical", "continuous", "binary"):
            raise SchemaError(f"column {self.name!r}: unknown kind {self.kind!r}")
        if self.kind == "continuous" and (self.buckets is None or self.buckets < 2):
            raise SchemaError(f"column {self.name!r}: continuous columns need buckets >= 2")
        if self.values is not None and len(set(self.values)) != len(self.values):
            raise SchemaError(f"column {self.name!r}: repeated category")
        if self.range is not None and not self.range[0] < self.range[1]:
            raise SchemaError(f"column {self.name!r}: empty range {self.range}")


@dataclass(frozen=True)
class SchemaSpec:
    columns: tuple[ColumnSpec, ...]

    @classmethod
    def from_dict(cls, obj: dict) -> "SchemaSpec":
        cols = []
        for c in obj["columns"]:
            cols.append(ColumnSpec(
                name=c["name"],
                kind=c["kind"],
                buckets=c.get("buckets"),
                values=tuple(str(v) for v in c["values"]) if "values" in c else None,
                range=tuple(c["range"]) if "range" in c else None,
            ))
        names = [c.name for c in cols]
        if len(set(names)) != len(names):
            raise SchemaError("schema column names must be distinct")
        return cls(tuple(cols))

    @classmethod
    def load(cls, path) -> "SchemaSpec":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class FeatureGroup:
    column: str
    start: int
    stop: int
    kind: str = "binary"
    labels: tuple[str, ...] = ()
    edges: tuple[float, ...] = ()


@dataclass(frozen=True)
class FeatureMap:
    """Which output features came from which input column."""

    groups: tuple[FeatureGroup, ...]

    @property
    def d(self) -> int:
        return self.groups[-1].stop if self.groups else 0

    def group_ids(self, d: int | None = None) -> np.ndarray:
        d = self.d if d is None else d
        if d != self.d:
            raise SchemaError(f"feature map covers {self.d} features, database has {d}")
        ids = np.empty(d, dtype=np.int64)
        for g, grp in enumerate(self.groups):
            ids[grp.start:grp.stop] = g
        return ids

    def to_dict(self) -> dict:
        return {"groups": [
            {"column": g.column, "start": g.start, "stop": g.stop, "kind": g.kind,
             "labels": list(g.labels), "edges": list(g.edges)}
            for g in self.groups
        ]}

    @classmethod
    def from_dict(cls, obj: dict) -> "FeatureMap":
        groups = tuple(
            FeatureGroup(g["column"], g["start"], g["stop"], g.get("kind", "binary"),
                         tuple(g.get("labels", ())), tuple(g.get("edges", ())))
            for g in obj["groups"]
        )
        pos = 0
        for g in groups:
            if g.start != pos or g.stop <= g.start:
                raise SchemaError("feature groups must partition [0, d) in order")
            pos = g.stop
        return cls(groups)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path) -> "FeatureMap":
        return cls.from_dict(json.loads(Path(path).read_text()))

    @classmethod
    def singletons(cls, d: int) -> "FeatureMap":
        return cls(tuple(FeatureGroup(f"x{i}", i, i + 1) for i in range(d)))


@dataclass(frozen=True)
class BiasVector:
    p: np.ndarray = field(repr=False)

    def __post_init__(self):
        p = np.asarray(self.p, dtype=np.float64)
        if p.ndim != 1 or np.any((p < 0) | (p > 1)):
            raise SchemaError("bias probabilities must lie in [0, 1]")
        object.__setattr__(self, "p", p)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps({"p": [float(v) for v in self.p]}) + "\n")

    @classmethod
    def load(cls, path) -> "BiasVector":
        return cls(np.array(json.loads(Path(path).read_text())["p"]))


def _bucket_edges(lo: float, hi: float, k: int) -> tuple[float, ...]:
    return tuple(lo + (hi - lo) * i / k for i in range(k + 1))


def _bucket_of(v: float, lo: float, hi: float, k: int) -> int:
    if hi == lo:
        return 0
    return min(k - 1, int(math.floor((v - lo) / (hi - lo) * k)))


def ingest_csv(path, schema: SchemaSpec) -> tuple[Database, FeatureMap]:
    """Binarize a CSV file: one-hot categoricals, equi-width buckets for
    continuous columns, pass-through for binary columns.

    Missing values, unknown categories and out-of-range numbers are errors.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        missing = [c.name for c in schema.columns if c.name not in header]
        if missing:
            raise ParseError(f"{path}: header lacks schema columns {missing}")
        rows = []
        for lineno, row in enumerate(reader, 2):
            if not row:
                continue
            if len(row) != len(header):
                raise ParseError(f"{path}: row {lineno} has {len(row)} fields, expected {len(header)}")
            rows.append((lineno, [v.strip() for v in row]))
    if not rows:
        raise ParseError(f"{path}: no data rows")

    n = len(rows)
    blocks: list[np.ndarray] = []
    groups: list[FeatureGroup] = []
    names: list[str] = []
    start = 0
    for col in schema.columns:
        j = header.index(col.name)
        raw = []
        for lineno, row in rows:
            if row[j] == "":
                raise ParseError(f"{path}: row {lineno}: missing value in column {col.name!r}")
            raw.append((lineno, row[j]))

        if col.kind == "binary":
            block = np.empty((n, 1), dtype=np.uint8)
            for i, (lineno, v) in enumerate(raw):
                if v not in ("0", "1"):
                    raise ParseError(f"{path}: row {lineno}: column {col.name!r} is not 0/1: {v!r}")
                block[i, 0] = int(v)
            labels: tuple[str, ...] = (col.name,)
            edges: tuple[float, ...] = ()
        elif col.kind == "categorical":
            cats = col.values if col.values is not None else tuple(sorted({v for _, v in raw}))
            pos = {c: k for k, c in enumerate(cats)}
            block = np.zeros((n, len(cats)), dtype=np.uint8)
            for i, (lineno, v) in enumerate(raw):
                if v not in pos:
                    raise ParseError(f"{path}: row {lineno}: unknown category {v!r} in column {col.name!r}")
                block[i, pos[v]] = 1
            labels = tuple(f"{col.name}={c}" for c in cats)
            edges = ()
        else:
            vals = []
            for lineno, v in raw:
                try:
                    vals.append(float(v))
                except ValueError:
                    raise ParseError(f"{path}: row {lineno}: column {col.name!r} is not numeric: {v!r}") from None
            lo, hi = col.range if col.range is not None else (min(vals), max(vals))
            k = col.buckets
            block = np.zeros((n, k), dtype=np.uint8)
            for i, (v, (lineno, _)) in enumerate(zip(vals, raw)):
                if not lo <= v <= hi:
                    raise ParseError(f"{path}: row {lineno}: {v} outside range [{lo}, {hi}] of {col.name!r}")
                block[i, _bucket_of(v, lo, hi, k)] = 1
            edges = _bucket_edges(lo, hi, k)
            labels = tuple(f"{col.name}[{edges[b]:g},{edges[b + 1]:g})" for b in range(k))
        blocks.append(block)
        width = block.shape[1]
        groups.append(FeatureGroup(col.name, start, start + width, col.kind, labels, edges))
        names.extend(labels)
        start += width

    return Database(np.hstack(blocks), names), FeatureMap(tuple(groups))


def generate_synthetic(d: int, n: int, seed: int) -> tuple[Database, BiasVector]:
    """Bias-model data: attribute ``i`` is 1 with its own probability ``p_i ~ U[0, 1]``."""
    if d < 1 or n < 1:
        raise SchemaError("need d >= 1 and n >= 1")
    rng = np.random.default_rng(seed)
    p = rng.random(d)
    bits = (rng.random((n, d)) < p).astype(np.uint8)
    return Database(bits), BiasVector(p)


def expand_literals(db: Database) -> tuple[Database, FeatureMap]:
    """Append the complement of every attribute: feature ``d + i`` is ``1 - x_i``.

    Positive conjunctions over the expanded features that respect the returned
    feature map are exactly conjunctions of literals over the original ones.
    """
    d = db.d
    bits = np.hstack([db.bits, 1 - db.bits])
    names = list(db.names()) + [f"not {nm}" for nm in db.names()]
    # feature i and d + i share a group, but the map must list contiguous ranges,
    # so reorder columns to (x0, not x0, x1, not x1, ...)
    order = np.ravel(np.column_stack([np.arange(d), np.arange(d) + d]))
    groups = tuple(FeatureGroup(names[i], 2 * i, 2 * i + 2, "categorical",
                                (names[i], names[d + i])) for i in range(d))
    return Database(bits[:, order], [names[k] for k in order]), FeatureMap(groups)


def write_database(db: Database, path, feature_names: Sequence[str] | None = None) -> None:
    """CSV of 0/1 with a feature-name header; row order is preserved."""
    names = tuple(feature_names) if feature_names is not None else db.names()
    lines = [",".join(names)]
    lines.extend(",".join("01"[b] for b in row) for row in db.bits.tolist())
    Path(path).write_text("\n".join(lines) + "\n")


def read_database(path) -> Database:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: empty file") from None
        rows = []
        for lineno, row in enumerate(reader, 2):
            if not row:
                continue
            if len(row) != len(header):
                raise ParseError(f"{path}: row {lineno} has {len(row)} fields, expected {len(header)}")
            for v in row:
                if v not in ("0", "1"):
                    raise ParseError(f"{path}: row {lineno}: bad bit {v!r}")
            rows.append([int(v) for v in row])
    if not rows:
        raise ParseError(f"{path}: database has no records")
    return Database(np.array(rows, dtype=np.uint8), header)
