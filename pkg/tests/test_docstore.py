import random

import pytest
from hypothesis import given, settings, strategies as st

from ncwc.docstore import CollectionRef, DocStore
from ncwc.errors import ConnectorError
from ncwc.values import Document


REF = CollectionRef("db1", "c1")


def make_doc(i, **extra):
    return Document.from_py({"_id": f"d{i}", "n": i, **extra}, generate_id=False)


def test_insert_and_scan_order(tmp_path):
    store = DocStore(tmp_path)
    docs = [make_doc(i) for i in range(3)]
    assert store.insert_many(REF, docs) == 3
    assert list(store.scan(REF)) == docs
    assert list(store.scan(REF)) == docs


def test_duplicate_id_rejects_batch_atomically(tmp_path):
    store = DocStore(tmp_path)
    batch = [make_doc(1), make_doc(2), make_doc(1)]
    with pytest.raises(ConnectorError) as err:
        store.insert_many(REF, batch)
    assert err.value.code == "E_DUP_ID"
    assert list(store.scan(REF)) == [] if store.has_collection(REF) else True
    store.insert_many(REF, [make_doc(1)])
    with pytest.raises(ConnectorError):
        store.insert_many(REF, [make_doc(2), make_doc(1)])
    assert [d.id for d in store.scan(REF)] == ["d1"]


def test_scan_missing_collection(tmp_path):
    with pytest.raises(ConnectorError) as err:
        list(DocStore(tmp_path).scan(REF))
    assert err.value.code == "E_NO_COLLECTION"


def test_listings(tmp_path):
    store = DocStore(tmp_path)
    assert store.list_databases() == []
    store.insert_many(REF, [make_doc(1)])
    store.insert_many(CollectionRef("db1", "b0"), [make_doc(1)])
    assert store.list_databases() == ["db1"]
    assert store.list_collections("db1") == ["b0", "c1"]
    with pytest.raises(ConnectorError) as err:
        store.list_collections("nope")
    assert err.value.code == "E_NO_DATABASE"


def test_drop_collection(tmp_path):
    store = DocStore(tmp_path)
    assert store.drop_collection(REF) is False
    store.insert_many(REF, [make_doc(1)])
    assert store.drop_collection(REF) is True
    assert not store.has_collection(REF)


def test_durability_across_reopen(tmp_path):
    docs = [make_doc(i, payload=[i, str(i)]) for i in range(50)]
    DocStore(tmp_path).insert_many(REF, docs)
    assert list(DocStore(tmp_path).scan(REF)) == docs


def test_large_round_trip_id_multiset(tmp_path):
    store = DocStore(tmp_path)
    rng = random.Random(7)
    docs = [
        Document.from_py(
            {"_id": f"id{i}", "x": rng.randrange(100), "tags": [rng.random()]},
            generate_id=False,
        )
        for i in range(10_000)
    ]
    assert store.insert_many(REF, docs) == 10_000
    assert sorted(d.id for d in store.scan(REF)) == sorted(d.id for d in docs)


def test_generated_ids_when_missing(tmp_path):
    store = DocStore(tmp_path)
    store.insert_many(REF, [{"x": 1}, {"x": 2}])
    ids = [d.id for d in store.scan(REF)]
    assert len(set(ids)) == 2


@settings(max_examples=30, deadline=None)
@given(
    st.lists(
        st.tuples(st.sampled_from(["insert", "drop"]), st.integers(0, 5)),
        max_size=12,
    )
)
def test_id_uniqueness_under_random_ops(tmp_path_factory, ops):
    # Random insert/drop sequences never produce duplicate ids in a scan.
    store = DocStore(tmp_path_factory.mktemp("store"))
    counter = 0
    for op, k in ops:
        if op == "insert":
            batch = [make_doc(counter + i) for i in range(k)]
            counter += k
            try:
                store.insert_many(REF, batch)
            except ConnectorError:
                pass
        else:
            store.drop_collection(REF)
    if store.has_collection(REF):
        ids = [d.id for d in store.scan(REF)]
        assert len(ids) == len(set(ids))
