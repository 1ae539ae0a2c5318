import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from synthquery.core import (
    Database,
    Query,
    QueryKind,
    SchemaError,
    as_record,
    eval_query,
    eval_query_db,
    negate,
    payoff,
)

from conftest import naive_value


def test_marginal_examples():
    assert eval_query(Query.marginal(0, 1, 2), "111") == 1
    assert eval_query(Query.marginal(0, 1, 2, negated=True), "110") == 1
    assert eval_query(Query.marginal(0, 1, 2), "110") == 0


def test_parity_examples():
    # two set bits is even
    assert eval_query(Query.parity(0, 1, 2), "110") == 1
    assert eval_query(Query.parity(0, 1, 2), "100") == 0
    assert eval_query(Query.parity(0, 1, 2), "000") == 1
    assert eval_query(Query.parity(0, 1, 2), "111") == 0
    assert eval_query(Query.parity(0, 1, 2, negated=True), "111") == 1


def test_index_out_of_range():
    with pytest.raises(SchemaError):
        eval_query(Query.marginal(0, 1, 5), "111")


def test_query_validation():
    with pytest.raises(SchemaError):
        Query.marginal(0, 0, 1)
    with pytest.raises(SchemaError):
        Query.marginal(-1, 0, 1)


def test_eval_query_db_hand_enumeration():
    db = Database.from_strings(["111", "110", "011"])
    assert eval_query_db(Query.marginal(0, 1, 2), db) == pytest.approx(1 / 3)
    assert eval_query_db(Query.parity(0, 1, 2), Database.from_strings(["000"])) == 1.0


def test_eval_query_db_counts_multiplicity():
    db = Database.from_strings(["111", "111", "000"])
    assert eval_query_db(Query.marginal(0, 1, 2), db) == pytest.approx(2 / 3)


def test_eval_query_db_empty():
    with pytest.raises(SchemaError):
        eval_query_db(Query.marginal(0, 1, 2), Database(np.zeros((0, 3))))


def test_negate_is_involution():
    q = Query.marginal(1, 2, 3)
    assert negate(q) == Query.marginal(1, 2, 3, negated=True)
    assert negate(negate(q)) == q


def test_negation_complements_every_record_d5():
    for kind in QueryKind:
        for idx in itertools.combinations(range(5), 3):
            q = Query(kind, idx)
            for x in itertools.product((0, 1), repeat=5):
                assert eval_query(negate(q), x) == 1 - eval_query(q, x)
                assert eval_query(q, x) == naive_value(q, x)


def test_payoff_examples():
    q = Query.marginal(0, 1, 2)
    assert payoff(0.5, q, "111") == pytest.approx(-0.5)
    assert payoff(1.0, q, "111") == 0
    assert payoff(0.0, q, "011") == 0


records = st.lists(st.integers(0, 1), min_size=6, max_size=6)
queries = st.builds(
    lambda kind, idx, neg: Query(kind, tuple(idx), neg),
    st.sampled_from(list(QueryKind)),
    st.lists(st.integers(0, 5), min_size=3, max_size=3, unique=True),
    st.booleans(),
)


@given(queries, st.lists(records, min_size=1, max_size=8))
def test_payoff_antisymmetry(q, rows):
    db = Database(rows)
    v = eval_query_db(q, db)
    for x in rows:
        assert payoff(1 - v, negate(q), x) == pytest.approx(-payoff(v, q, x))
        assert -1 <= payoff(v, q, x) <= 1


@given(queries, st.lists(records, min_size=1, max_size=8), records, st.data())
@settings(max_examples=60)
def test_sensitivity_one_over_n(q, rows, replacement, data):
    db = Database(rows)
    i = data.draw(st.integers(0, len(rows) - 1))
    rows2 = [list(r) for r in rows]
    rows2[i] = replacement
    diff = abs(eval_query_db(q, db) - eval_query_db(q, Database(rows2)))
    assert diff <= 1 / len(rows) + 1e-12
    assert 0 <= eval_query_db(q, db) <= 1


def test_database_rejects_bad_bits():
    with pytest.raises(SchemaError):
        Database([[0, 2, 1]])
    with pytest.raises(SchemaError):
        as_record("10a")


def test_database_is_read_only():
    db = Database.from_strings(["101"])
    with pytest.raises(ValueError):
        db.bits[0, 0] = 0


def test_packed_columns_roundtrip(rng):
    bits = rng.integers(0, 2, size=(131, 7), dtype=np.uint8)
    db = Database(bits)
    cols = db.packed_columns
    assert cols.shape == (7, 3)
    unpacked = np.unpackbits(cols.view(np.uint8), axis=1, bitorder="little")[:, :131]
    np.testing.assert_array_equal(unpacked.T, bits)
