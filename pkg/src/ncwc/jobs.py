"""The six transfer procedures and the benchmark harness.

Every job moves whole datasets between three stores: document
collections, warehouse tables, and session-catalog tables.  Jobs that
touch documents convert between sparse documents and fixed-width rows;
jobs between the two table catalogs move rows untouched.  Each job
returns a TransferReport whose counters make that difference visible:

* ``inference_passes``: schema inference runs (only document sources
  need one).
* ``serialization_steps``: two per document/row conversion, one for
  reading values out of the source representation and one for encoding
  them into the destination's.  Catalog-to-catalog jobs report zero.
"""

from __future__ import annotations

import enum
import random
import time
import uuid
from dataclasses import dataclass
from pathlib import Path

from .docstore import CollectionRef, DocStore
from .errors import ConnectorError
from .interchange import RecordBatch, TransferReport, plan_splits
from .schema import (
    WarehouseType,
    coerce_for_column,
    flatten_schema,
    infer_schema,
    remove_null_schema,
)
from .session import Session, SessionConfig, build_session
from .values import DocValue, Document, Tag
from .warehouse import SaveMode


class JobKind(enum.Enum):
    DOC_TO_WAREHOUSE = "doc_to_warehouse"
    WAREHOUSE_TO_DOC = "warehouse_to_doc"
    DOC_TO_SESSION = "doc_to_session"
    SESSION_TO_DOC = "session_to_doc"
    SESSION_TO_WAREHOUSE = "session_to_warehouse"
    WAREHOUSE_TO_SESSION = "warehouse_to_session"


@dataclass(frozen=True)
class JobSpec:
    """One transfer: source and dest are (database, name) pairs."""

    kind: JobKind
    source: tuple[str, str]
    dest: tuple[str, str]
    mode: SaveMode = SaveMode.ERROR_IF_EXISTS
    drop_table: bool = False
    temp_table_name: str | None = None

    def __post_init__(self):
        for ref in (self.source, self.dest):
            if len(ref) != 2 or not all(isinstance(p, str) and p for p in ref):
                raise ConnectorError("E_TYPE", f"bad ref {ref!r}, want (database, name)")
        if self.temp_table_name is not None and self.kind != JobKind.WAREHOUSE_TO_DOC:
            raise ConnectorError("E_TYPE", "temp_table_name applies only to warehouse-to-doc")


# -- document/row conversion --------------------------------------------------


def document_to_row(doc: Document, columns) -> list[DocValue]:
    """Project a document onto the column list; absent fields become NULL."""
    fields = dict(doc.root.value)
    return [
        coerce_for_column(fields.get(name, DocValue.null()), wtype, name)
        for name, wtype in columns
    ]


def row_to_document(columns, row) -> Document:
    """One document per row; SQL NULLs are omitted (documents are sparse)
    and a missing ``_id`` is minted."""
    fields = [(name, v) for (name, _), v in zip(columns, row) if v.tag != Tag.NULL]
    return Document.from_value(DocValue.object(fields), generate_id=True)


def project_documents(docs) -> tuple[RecordBatch, int]:
    """Infer the epurated column set over the documents and project every
    document onto it; returns the batch and the inference-pass count.

    Column types come from the flattened ``name;TYPE`` form so the batch
    schema is exactly what the table definition will say."""
    schema = remove_null_schema(infer_schema(docs))
    columns = []
    for entry in flatten_schema(schema):
        name, _, type_text = entry.partition(";")
        columns.append((name, WarehouseType.parse(type_text)))
    columns = tuple(columns)
    rows = [document_to_row(doc, columns) for doc in docs]
    return RecordBatch.from_rows(columns, rows), 1


def save_documents(store: DocStore, ref: CollectionRef, docs, mode: SaveMode) -> int:
    """Insert documents under the save-mode rules used for tables."""
    if store.has_collection(ref):
        if mode == SaveMode.ERROR_IF_EXISTS:
            raise ConnectorError("E_EXISTS", f"collection {ref} exists")
        if mode == SaveMode.IGNORE:
            return 0
        if mode == SaveMode.OVERWRITE:
            store.drop_collection(ref)
    return store.insert_many(ref, docs)


# -- the six jobs -------------------------------------------------------------


def import_doc_to_warehouse(spec: JobSpec, session: Session, store: DocStore) -> TransferReport:
    start = time.perf_counter()
    docs = list(store.scan(CollectionRef(*spec.source)))
    database, table = spec.dest
    if spec.drop_table:
        session.warehouse.drop_table(database, table, if_exists=True, purge=True)
    batch, passes = project_documents(docs)
    builder = session.warehouse.create_table_builder(database, table).if_not_exists()
    for name, wtype in batch.schema:
        builder.column(name, wtype.render())
    builder.create()
    report = session.write_dataset(batch, database, table, spec.mode)
    report.inference_passes = passes
    report.serialization_steps = 2
    report.wall_time_ms = (time.perf_counter() - start) * 1000
    return report


def import_warehouse_to_doc(spec: JobSpec, session: Session, store: DocStore) -> TransferReport:
    start = time.perf_counter()
    temp = spec.temp_table_name or f"__ncwc_tmp_{uuid.uuid4().hex}"
    inner = JobSpec(JobKind.WAREHOUSE_TO_SESSION, spec.source, ("default", temp))
    try:
        report = import_warehouse_to_session(inner, session, store)
        batch = session.session_read("default", temp)
        docs = [row_to_document(batch.schema, row) for row in batch.rows()]
        report.rows_moved = save_documents(store, CollectionRef(*spec.dest), docs, spec.mode)
    finally:
        session.catalog.drop("default", temp, if_exists=True)
    report.serialization_steps = 2
    report.wall_time_ms = (time.perf_counter() - start) * 1000
    return report


def import_doc_to_session(spec: JobSpec, session: Session, store: DocStore) -> TransferReport:
    start = time.perf_counter()
    docs = list(store.scan(CollectionRef(*spec.source)))
    batch, passes = project_documents(docs)
    written = session.session_save_as_table(batch, spec.dest[0], spec.dest[1], spec.mode)
    return TransferReport(
        rows_moved=written,
        inference_passes=passes,
        serialization_steps=2,
        wall_time_ms=(time.perf_counter() - start) * 1000,
    )


def import_session_to_doc(spec: JobSpec, session: Session, store: DocStore) -> TransferReport:
    start = time.perf_counter()
    batch = session.session_read(*spec.source)
    docs = [row_to_document(batch.schema, row) for row in batch.rows()]
    written = save_documents(store, CollectionRef(*spec.dest), docs, spec.mode)
    return TransferReport(
        rows_moved=written,
        serialization_steps=2,
        wall_time_ms=(time.perf_counter() - start) * 1000,
    )


def import_session_to_warehouse(spec: JobSpec, session: Session, store: DocStore) -> TransferReport:
    start = time.perf_counter()
    batch = session.session_read(*spec.source)
    database, table = spec.dest
    if not session.warehouse.has_table(database, table):
        builder = session.warehouse.create_table_builder(database, table)
        for name, wtype in batch.schema:
            builder.column(name, wtype.render())
        builder.create()
    report = session.write_dataset(batch, database, table, spec.mode)
    report.wall_time_ms = (time.perf_counter() - start) * 1000
    return report


def import_warehouse_to_session(spec: JobSpec, session: Session, store: DocStore) -> TransferReport:
    start = time.perf_counter()
    database, table = spec.source
    splits = plan_splits(session.warehouse, database, table, session.config.parallelism)
    batch = session.execute_query(f"select * from {database}.{table}")
    written = session.session_save_as_table(batch, spec.dest[0], spec.dest[1], spec.mode)
    return TransferReport(
        rows_moved=written,
        split_count=len(splits),
        wall_time_ms=(time.perf_counter() - start) * 1000,
    )


_RUNNERS = {
    JobKind.DOC_TO_WAREHOUSE: import_doc_to_warehouse,
    JobKind.WAREHOUSE_TO_DOC: import_warehouse_to_doc,
    JobKind.DOC_TO_SESSION: import_doc_to_session,
    JobKind.SESSION_TO_DOC: import_session_to_doc,
    JobKind.SESSION_TO_WAREHOUSE: import_session_to_warehouse,
    JobKind.WAREHOUSE_TO_SESSION: import_warehouse_to_session,
}


def run_job(spec: JobSpec, session: Session, store: DocStore) -> TransferReport:
    return _RUNNERS[spec.kind](spec, session, store)


# -- benchmark ----------------------------------------------------------------


@dataclass
class BenchRow:
    job: str
    report: TransferReport

    def to_dict(self) -> dict:
        return {"job": self.job, **self.report.to_dict()}


def generate_collection(store: DocStore, ref: CollectionRef, rows: int, seed: int = 7) -> None:
    """Synthetic documents with arrays and Null fields: ``tags`` is an
    int array, ``y`` is null in half the documents, ``z`` always null."""
    rng = random.Random(seed)
    docs = []
    for i in range(rows):
        tags = DocValue.array(
            [DocValue.int64(rng.randrange(100)) for _ in range(rng.randrange(4))]
        )
        docs.append(
            Document.from_value(
                DocValue.object(
                    (
                        ("_id", DocValue.text(f"doc{i:08d}")),
                        ("seq", DocValue.int64(i)),
                        ("name", DocValue.text(f"name-{rng.randrange(10_000)}")),
                        ("score", DocValue.double(rng.random() * 100)),
                        ("tags", tags),
                        ("y", DocValue.int64(rng.randrange(1000)) if i % 2 == 0 else DocValue.null()),
                        ("z", DocValue.null()),
                    )
                )
            )
        )
    store.insert_many(ref, docs)


BENCH_SEQUENCE = (
    "doc_to_warehouse",
    "warehouse_to_doc",
    "doc_to_session",
    "session_to_doc",
    "session_to_warehouse",
    "warehouse_to_session",
)


def run_benchmark(rows: int, parallelism: int, work_dir) -> list[BenchRow]:
    """Generate one synthetic collection and run all six jobs over it,
    in the order doc->warehouse, warehouse->doc, doc->session,
    session->doc, session->warehouse, warehouse->session."""
    work = Path(work_dir)
    roots = {name: work / name for name in ("warehouse", "staging", "session", "docs")}
    for path in roots.values():
        if path.exists():
            raise ConnectorError("E_IO", f"scratch root {path} already exists")
    config = SessionConfig(
        warehouse_root=str(roots["warehouse"]),
        staging_dir=str(roots["staging"]),
        session_root=str(roots["session"]),
        docstore_root=str(roots["docs"]),
        parallelism=parallelism,
    )
    session = build_session(config)
    store = DocStore(config.docstore_root)
    source = ("default", "bench_src")
    generate_collection(store, CollectionRef(*source), rows)

    specs = {
        "doc_to_warehouse": JobSpec(
            JobKind.DOC_TO_WAREHOUSE, source, ("default", "bench_wh"), drop_table=True
        ),
        "warehouse_to_doc": JobSpec(
            JobKind.WAREHOUSE_TO_DOC, ("default", "bench_wh"), ("default", "bench_roundtrip")
        ),
        "doc_to_session": JobSpec(JobKind.DOC_TO_SESSION, source, ("default", "bench_sess")),
        "session_to_doc": JobSpec(
            JobKind.SESSION_TO_DOC, ("default", "bench_sess"), ("default", "bench_from_sess")
        ),
        "session_to_warehouse": JobSpec(
            JobKind.SESSION_TO_WAREHOUSE, ("default", "bench_sess"), ("default", "bench_wh_copy")
        ),
        "warehouse_to_session": JobSpec(
            JobKind.WAREHOUSE_TO_SESSION, ("default", "bench_wh"), ("default", "bench_sess_copy")
        ),
    }
    return [BenchRow(name, run_job(specs[name], session, store)) for name in BENCH_SEQUENCE]
