"""Differentially private synthetic data for large sets of 3-way queries."""

from .core import Database, Query, QueryKind, SchemaError, eval_query, eval_query_db, negate, payoff
from .queries import (
    QueryClass,
    WorkloadSpec,
    close_under_negation,
    evaluate_all,
    generate_workload,
)

__version__ = "0.1.0"

__all__ = [
    "Database", "Query", "QueryKind", "SchemaError", "eval_query", "eval_query_db", "negate",
    "payoff", "QueryClass", "WorkloadSpec", "close_under_negation", "evaluate_all",
    "generate_workload",
]
