"""The six transfer jobs, checked against an independent round-trip
oracle, instrumented counters, and the benchmark harness."""

from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import ncwc.jobs as jobs_module
from ncwc.docstore import CollectionRef, DocStore
from ncwc.errors import ConnectorError
from ncwc.interchange import RecordBatch
from ncwc.jobs import (
    BENCH_SEQUENCE,
    JobKind,
    JobSpec,
    generate_collection,
    run_benchmark,
    run_job,
    save_documents,
)
from ncwc.schema import WarehouseType
from ncwc.session import SessionConfig, build_session
from ncwc.values import DocValue, Document, Tag
from ncwc.warehouse import SaveMode

from helpers import collection_lines, expected_round_trip, scan_as_lines


def make_env(tmp_path, **kw):
    config = SessionConfig(
        warehouse_root=str(tmp_path / "wh"),
        staging_dir=str(tmp_path / "stage"),
        session_root=str(tmp_path / "sess"),
        docstore_root=str(tmp_path / "docs"),
        **kw,
    )
    return build_session(config), DocStore(config.docstore_root)


def doc(**fields) -> Document:
    return Document.from_py(fields, generate_id=False)


D = CollectionRef("default", "src")


# -- doc -> warehouse ---------------------------------------------------------


def test_doc_to_warehouse_creates_and_fills(tmp_path):
    session, store = make_env(tmp_path)
    store.insert_many(D, [doc(_id="a", x=1), doc(_id="b", x=2), doc(_id="c", x=3)])
    spec = JobSpec(JobKind.DOC_TO_WAREHOUSE, ("default", "src"), ("default", "t"))
    report = run_job(spec, session, store)
    assert report.rows_moved == 3
    assert report.inference_passes == 1
    assert report.serialization_steps == 2
    assert report.staging_files >= 1
    desc = session.warehouse.describe_table("default", "t")
    assert desc == [("_id", "STRING", False), ("x", "INT", False)]
    got = sorted((row[0].value, row[1].value) for row in session.warehouse.scan_table("default", "t"))
    assert got == [("a", 1), ("b", 2), ("c", 3)]


def test_doc_to_warehouse_epurates_null_column(tmp_path):
    session, store = make_env(tmp_path)
    docs = [
        Document.from_py({"_id": f"d{i}", "x": i, "y": i if i % 2 == 0 else None, "z": None})
        for i in range(10)
    ]
    store.insert_many(D, docs)
    run_job(JobSpec(JobKind.DOC_TO_WAREHOUSE, ("default", "src"), ("default", "t")), session, store)
    names = [n for n, _, _ in session.warehouse.describe_table("default", "t")]
    assert names == ["_id", "x", "y"]
    nulls = sum(1 for row in session.warehouse.scan_table("default", "t") if row[2].tag == Tag.NULL)
    assert nulls == 5


def test_doc_to_warehouse_drop_table_flag(tmp_path):
    session, store = make_env(tmp_path)
    session.execute("create table t (other BOOLEAN)")
    store.insert_many(D, [doc(_id="a", x=1)])
    spec = JobSpec(JobKind.DOC_TO_WAREHOUSE, ("default", "src"), ("default", "t"))
    with pytest.raises(ConnectorError) as err:
        run_job(spec, session, store)
    assert err.value.code == "E_SCHEMA_MISMATCH"
    dropped = JobSpec(
        JobKind.DOC_TO_WAREHOUSE, ("default", "src"), ("default", "t"), drop_table=True
    )
    report = run_job(dropped, session, store)
    assert report.rows_moved == 1
    assert [n for n, _, _ in session.warehouse.describe_table("default", "t")] == ["_id", "x"]


def test_doc_to_warehouse_missing_collection(tmp_path):
    session, store = make_env(tmp_path)
    spec = JobSpec(JobKind.DOC_TO_WAREHOUSE, ("default", "ghost"), ("default", "t"))
    with pytest.raises(ConnectorError) as err:
        run_job(spec, session, store)
    assert err.value.code == "E_NO_COLLECTION"


# -- warehouse -> doc ---------------------------------------------------------


def seed_docs():
    return [
        doc(_id="a", x=1, note="hi"),
        doc(_id="b", x=2),
        doc(_id="c", x=3, note="yo"),
    ]


def test_warehouse_round_trip_restores_collection(tmp_path):
    session, store = make_env(tmp_path)
    store.insert_many(D, seed_docs())
    run_job(JobSpec(JobKind.DOC_TO_WAREHOUSE, ("default", "src"), ("default", "t")), session, store)
    report = run_job(
        JobSpec(JobKind.WAREHOUSE_TO_DOC, ("default", "t"), ("default", "back")), session, store
    )
    assert report.rows_moved == 3
    assert report.serialization_steps == 2
    assert report.inference_passes == 0
    assert collection_lines(store, CollectionRef("default", "back")) == expected_round_trip(seed_docs())
    # the staging temp table is gone
    assert session.catalog.list_tables("default") == []


def test_warehouse_to_doc_missing_source(tmp_path):
    session, store = make_env(tmp_path)
    spec = JobSpec(JobKind.WAREHOUSE_TO_DOC, ("default", "ghost"), ("default", "back"))
    with pytest.raises(ConnectorError) as err:
        run_job(spec, session, store)
    assert err.value.code == "E_NO_TABLE"
    assert session.catalog.list_tables("default") == []
    assert not store.has_collection(CollectionRef("default", "back"))


def test_warehouse_to_doc_generates_ids_and_drops_nulls(tmp_path):
    session, store = make_env(tmp_path)
    session.execute("create table t (x BIGINT, y BIGINT)")
    txn = session.warehouse.begin("default", "t")
    session.warehouse.write_rows(
        txn,
        [[DocValue.int64(1), DocValue.null()], [DocValue.int64(2), DocValue.int64(9)]],
        SaveMode.APPEND,
    )
    txn.commit()
    run_job(JobSpec(JobKind.WAREHOUSE_TO_DOC, ("default", "t"), ("default", "back")), session, store)
    docs = sorted(store.scan(CollectionRef("default", "back")), key=lambda d: d.root.get("x").value)
    assert len({d.id for d in docs}) == 2
    assert docs[0].root.get("y") is None
    assert docs[1].root.get("y").value == 9


def test_warehouse_to_doc_respects_collection_mode(tmp_path):
    session, store = make_env(tmp_path)
    store.insert_many(D, seed_docs())
    run_job(JobSpec(JobKind.DOC_TO_WAREHOUSE, ("default", "src"), ("default", "t")), session, store)
    spec = JobSpec(JobKind.WAREHOUSE_TO_DOC, ("default", "t"), ("default", "src"))
    with pytest.raises(ConnectorError) as err:
        run_job(spec, session, store)
    assert err.value.code == "E_EXISTS"
    assert session.catalog.list_tables("default") == []  # temp cleaned up on failure
    ignored = JobSpec(
        JobKind.WAREHOUSE_TO_DOC, ("default", "t"), ("default", "src"), mode=SaveMode.IGNORE
    )
    assert run_job(ignored, session, store).rows_moved == 0
    assert len(list(store.scan(D))) == 3


# -- doc <-> session ----------------------------------------------------------


def test_doc_to_session_and_back(tmp_path):
    session, store = make_env(tmp_path)
    store.insert_many(D, seed_docs())
    report = run_job(
        JobSpec(JobKind.DOC_TO_SESSION, ("default", "src"), ("default", "s")), session, store
    )
    assert report.rows_moved == 3 and report.inference_passes == 1
    back = run_job(
        JobSpec(JobKind.SESSION_TO_DOC, ("default", "s"), ("default", "back")), session, store
    )
    assert back.rows_moved == 3 and back.inference_passes == 0
    assert collection_lines(store, CollectionRef("default", "back")) == expected_round_trip(seed_docs())


def test_session_to_doc_empty_table_creates_collection(tmp_path):
    session, store = make_env(tmp_path)
    empty = RecordBatch.from_rows((("x", WarehouseType("BIGINT")),), [])
    session.session_save_as_table(empty, "default", "s", SaveMode.ERROR_IF_EXISTS)
    report = run_job(
        JobSpec(JobKind.SESSION_TO_DOC, ("default", "s"), ("default", "out")), session, store
    )
    assert report.rows_moved == 0
    ref = CollectionRef("default", "out")
    assert store.has_collection(ref)
    assert list(store.scan(ref)) == []


# -- session <-> warehouse -----------------------------------------------------


def session_batch(*ns) -> RecordBatch:
    schema = (("_id", WarehouseType("STRING")), ("n", WarehouseType("BIGINT")))
    return RecordBatch.from_rows(
        schema, [[DocValue.text(f"r{n}"), DocValue.int64(n)] for n in ns]
    )


def test_session_to_warehouse_auto_creates(tmp_path):
    session, store = make_env(tmp_path)
    session.session_save_as_table(session_batch(1, 2), "default", "s", SaveMode.APPEND)
    spec = JobSpec(
        JobKind.SESSION_TO_WAREHOUSE, ("default", "s"), ("default", "t"), mode=SaveMode.APPEND
    )
    report = run_job(spec, session, store)
    assert report.rows_moved == 2
    assert report.inference_passes == 0
    assert report.serialization_steps == 0
    meta = session.warehouse.meta("default", "t")
    assert [(n, t.render()) for n, t in meta.columns] == [("_id", "STRING"), ("n", "BIGINT")]
    run_job(spec, session, store)
    assert len(scan_as_lines(session.warehouse, "default", "t")) == 4
    overwrite = JobSpec(
        JobKind.SESSION_TO_WAREHOUSE, ("default", "s"), ("default", "t"), mode=SaveMode.OVERWRITE
    )
    run_job(overwrite, session, store)
    assert len(scan_as_lines(session.warehouse, "default", "t")) == 2


def test_warehouse_to_session_parallelism_independent(tmp_path):
    lines = []
    for parallelism in (1, 4):
        root = tmp_path / f"p{parallelism}"
        session, store = make_env(root, parallelism=parallelism)
        session.execute("create table t (_id STRING, n BIGINT)")
        for chunk in ([1, 2], [3], [4, 5, 6]):
            txn = session.warehouse.begin("default", "t")
            session.warehouse.write_rows(
                txn,
                [[DocValue.text(f"r{n}"), DocValue.int64(n)] for n in chunk],
                SaveMode.APPEND,
            )
            txn.commit()
        report = run_job(
            JobSpec(JobKind.WAREHOUSE_TO_SESSION, ("default", "t"), ("default", "s")),
            session,
            store,
        )
        assert report.rows_moved == 6
        assert report.split_count == min(parallelism, 3)
        lines.append((root / "sess" / "default" / "s" / "data.ncwc").read_bytes())
    assert lines[0] == lines[1]


def test_warehouse_to_session_mode_and_empty_source(tmp_path):
    session, store = make_env(tmp_path)
    session.execute("create table t (_id STRING, n BIGINT)")
    spec = JobSpec(JobKind.WAREHOUSE_TO_SESSION, ("default", "t"), ("default", "s"))
    report = run_job(spec, session, store)
    assert report.rows_moved == 0
    assert session.session_read("default", "s").schema == (
        ("_id", WarehouseType("STRING")),
        ("n", WarehouseType("BIGINT")),
    )
    with pytest.raises(ConnectorError) as err:
        run_job(spec, session, store)
    assert err.value.code == "E_EXISTS"
    assert scan_as_lines(session.warehouse, "default", "t") == []


# -- counters, residue, determinism -------------------------------------------


def six_specs():
    return [
        JobSpec(JobKind.DOC_TO_WAREHOUSE, ("default", "src"), ("default", "w"), drop_table=True),
        JobSpec(JobKind.WAREHOUSE_TO_DOC, ("default", "w"), ("default", "c1")),
        JobSpec(JobKind.DOC_TO_SESSION, ("default", "src"), ("default", "s")),
        JobSpec(JobKind.SESSION_TO_DOC, ("default", "s"), ("default", "c2")),
        JobSpec(JobKind.SESSION_TO_WAREHOUSE, ("default", "s"), ("default", "w2")),
        JobSpec(JobKind.WAREHOUSE_TO_SESSION, ("default", "w"), ("default", "s2")),
    ]


def test_counters_match_instrumented_inference(tmp_path, monkeypatch):
    session, store = make_env(tmp_path)
    store.insert_many(D, seed_docs())
    calls = []
    real = jobs_module.infer_schema
    monkeypatch.setattr(
        jobs_module, "infer_schema", lambda docs: (calls.append(1), real(docs))[1]
    )
    expected_serialization = [2, 2, 2, 2, 0, 0]
    for spec, serialization in zip(six_specs(), expected_serialization):
        calls.clear()
        report = run_job(spec, session, store)
        assert report.inference_passes == len(calls)
        assert report.serialization_steps == serialization


def test_jobs_leave_no_staging_residue(tmp_path):
    session, store = make_env(tmp_path)
    store.insert_many(D, seed_docs())
    staging = tmp_path / "stage"
    for spec in six_specs():
        run_job(spec, session, store)
        assert list(staging.iterdir()) == []
    # injected failure: warehouse write rejected by mode, staging still clean
    bad = JobSpec(JobKind.SESSION_TO_WAREHOUSE, ("default", "s"), ("default", "w2"))
    with pytest.raises(ConnectorError):
        run_job(bad, session, store)
    assert list(staging.iterdir()) == []


def test_job_determinism(tmp_path):
    session, store = make_env(tmp_path)
    store.insert_many(D, seed_docs())
    data_file = tmp_path / "sess" / "default" / "s" / "data.ncwc"
    contents = []
    for mode in (SaveMode.ERROR_IF_EXISTS, SaveMode.OVERWRITE):
        run_job(
            JobSpec(JobKind.DOC_TO_SESSION, ("default", "src"), ("default", "s"), mode=mode),
            session,
            store,
        )
        contents.append(data_file.read_bytes())
    assert contents[0] == contents[1]
    wh_lines = []
    for _ in range(2):
        run_job(
            JobSpec(
                JobKind.DOC_TO_WAREHOUSE, ("default", "src"), ("default", "t"), drop_table=True
            ),
            session,
            store,
        )
        wh_lines.append(scan_as_lines(session.warehouse, "default", "t"))
    assert wh_lines[0] == wh_lines[1]


def test_save_documents_modes(tmp_path):
    _, store = make_env(tmp_path)
    ref = CollectionRef("default", "c")
    assert save_documents(store, ref, [doc(_id="a")], SaveMode.ERROR_IF_EXISTS) == 1
    with pytest.raises(ConnectorError):
        save_documents(store, ref, [doc(_id="b")], SaveMode.ERROR_IF_EXISTS)
    assert save_documents(store, ref, [doc(_id="b")], SaveMode.IGNORE) == 0
    assert save_documents(store, ref, [doc(_id="b")], SaveMode.APPEND) == 1
    assert {d.id for d in store.scan(ref)} == {"a", "b"}
    assert save_documents(store, ref, [doc(_id="z")], SaveMode.OVERWRITE) == 1
    assert {d.id for d in store.scan(ref)} == {"z"}


def test_jobspec_validation():
    with pytest.raises(ConnectorError):
        JobSpec(JobKind.DOC_TO_SESSION, ("default",), ("default", "t"))
    with pytest.raises(ConnectorError):
        JobSpec(JobKind.DOC_TO_SESSION, ("default", "c"), ("default", "t"), temp_table_name="x")
    JobSpec(JobKind.WAREHOUSE_TO_DOC, ("default", "t"), ("default", "c"), temp_table_name="x")


# -- randomized round trip -----------------------------------------------------

_scalars = st.one_of(
    st.booleans().map(DocValue.boolean),
    st.integers(-(2**31), 2**31 - 1).map(DocValue.int32),
    st.integers(-(2**63), 2**63 - 1).map(DocValue.int64),
    st.floats(allow_nan=False, allow_infinity=False).map(DocValue.double),
    st.text(max_size=6).map(DocValue.text),
    st.integers(-(10**12), 10**12).map(DocValue.timestamp),
    st.binary(max_size=5).map(DocValue.binary),
)

_collections = st.lists(
    st.dictionaries(st.sampled_from(["a", "b", "c", "d"]), _scalars, max_size=4),
    min_size=1,
    max_size=8,
)


@settings(max_examples=30, deadline=None)
@given(rows=_collections)
def test_round_trip_property(tmp_path_factory, rows):
    docs = [
        Document.from_value(
            DocValue.object((("_id", DocValue.text(f"id{i}")),) + tuple(fields.items()))
        )
        for i, fields in enumerate(rows)
    ]
    tmp = tmp_path_factory.mktemp("job")
    session, store = make_env(tmp)
    store.insert_many(D, docs)
    run_job(JobSpec(JobKind.DOC_TO_WAREHOUSE, ("default", "src"), ("default", "t")), session, store)
    run_job(JobSpec(JobKind.WAREHOUSE_TO_DOC, ("default", "t"), ("default", "back")), session, store)
    assert collection_lines(store, CollectionRef("default", "back")) == expected_round_trip(docs)


# -- benchmark -----------------------------------------------------------------


def test_run_benchmark_six_rows(tmp_path):
    results = run_benchmark(rows=120, parallelism=2, work_dir=tmp_path / "bench")
    assert [r.job for r in results] == list(BENCH_SEQUENCE)
    assert all(r.report.rows_moved == 120 for r in results)
    by_job = {r.job: r.report for r in results}
    assert by_job["doc_to_warehouse"].inference_passes == 1
    assert by_job["doc_to_session"].inference_passes == 1
    for catalog_job in ("session_to_warehouse", "warehouse_to_session"):
        assert by_job[catalog_job].inference_passes == 0
        assert by_job[catalog_job].serialization_steps == 0
    for doc_job in ("doc_to_warehouse", "warehouse_to_doc", "doc_to_session", "session_to_doc"):
        assert by_job[doc_job].serialization_steps == 2
    assert all(r.report.wall_time_ms >= 0 for r in results)
    with pytest.raises(ConnectorError) as err:
        run_benchmark(rows=1, parallelism=1, work_dir=tmp_path / "bench")
    assert err.value.code == "E_IO"


def test_generate_collection_shape(tmp_path):
    _, store = make_env(tmp_path)
    ref = CollectionRef("default", "g")
    generate_collection(store, ref, 40)
    docs = list(store.scan(ref))
    assert len(docs) == 40
    assert all(d.root.get("z").tag == Tag.NULL for d in docs)
    nulls = sum(1 for d in docs if d.root.get("y").tag == Tag.NULL)
    assert nulls == 20
    assert any(d.root.get("tags").tag == Tag.ARRAY for d in docs)
