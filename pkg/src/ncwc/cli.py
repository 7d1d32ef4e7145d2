"""Command-line front end.

Every subcommand is a thin shell over the library: ingest files into the
document store, run statements, move datasets with the transfer jobs,
drive the streaming sink, benchmark all six jobs, and list catalog
contents.  Exit codes: 0 success, 1 domain error (the message on stderr
carries the stable error code), 2 usage error.
"""

from __future__ import annotations

import argparse
import sys
import tempfile
from pathlib import Path

from .docstore import CollectionRef, DocStore
from .errors import ConnectorError
from .hql import SelectAll, parse as parse_statement
from .jobs import JobKind, JobSpec, run_benchmark, run_job, document_to_row
from .report import (
    batch_json,
    batch_table,
    bench_table,
    canonical_json,
    format_table,
    write_bench_csv,
    write_bench_figure,
    write_bench_json,
)
from .session import SessionConfig, build_session
from .streaming import StreamSink, run_stream
from .values import Document, from_canonical_json
from .warehouse import SaveMode

JOB_NAMES = {
    "doc2wh": JobKind.DOC_TO_WAREHOUSE,
    "wh2doc": JobKind.WAREHOUSE_TO_DOC,
    "doc2sess": JobKind.DOC_TO_SESSION,
    "sess2doc": JobKind.SESSION_TO_DOC,
    "sess2wh": JobKind.SESSION_TO_WAREHOUSE,
    "wh2sess": JobKind.WAREHOUSE_TO_SESSION,
}


def _positive(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not an integer")
    if value < 1:
        raise argparse.ArgumentTypeError("value must be >= 1")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ncwc", description="document-store/warehouse connector"
    )
    parser.add_argument("--config", help="config file (else $NCWC_CONFIG, else defaults)")
    parser.add_argument("--json", action="store_true", help="machine output as canonical JSON")
    sub = parser.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("ingest", help="load a JSON-lines file into a collection")
    p.add_argument("--db", default=None)
    p.add_argument("--collection", required=True)
    p.add_argument("--file", required=True)

    p = sub.add_parser("query", help="run one statement")
    p.add_argument("--sql", required=True)

    p = sub.add_parser("transfer", help="run one transfer job")
    p.add_argument("--job", required=True, choices=sorted(JOB_NAMES))
    p.add_argument("--source", required=True, help="db.name or name")
    p.add_argument("--dest", required=True, help="db.name or name")
    p.add_argument(
        "--mode",
        default="errorifexists",
        choices=["errorifexists", "append", "overwrite", "ignore"],
    )
    p.add_argument("--drop-table", action="store_true")

    p = sub.add_parser("stream", help="stream a JSON-lines file into a table")
    p.add_argument("--source", required=True)
    p.add_argument("--table", required=True)
    p.add_argument("--batch-size", type=_positive, required=True)

    p = sub.add_parser("bench", help="run the six-job benchmark")
    p.add_argument("--rows", type=_positive, default=1000)
    p.add_argument("--parallelism", type=_positive, default=2)
    p.add_argument("--work-dir", default=None, help="scratch root (must not exist)")
    p.add_argument("--out-dir", default=None, help="also write bench.csv/.json/.png here")

    p = sub.add_parser("show", help="list catalog contents")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--tables", action="store_true")
    group.add_argument("--databases", action="store_true")
    group.add_argument("--collections", action="store_true")
    p.add_argument("--db", default=None)

    return parser


def _ref(text: str, config: SessionConfig) -> tuple[str, str]:
    database, dot, name = text.partition(".")
    if dot:
        return database, name
    return config.default_db, text


def _load_documents(path) -> list[Document]:
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise ConnectorError("E_IO", f"cannot read {path}: {exc}") from exc
    return [
        Document.from_value(from_canonical_json(line), generate_id=True)
        for line in lines
        if line.strip()
    ]


def _emit_list(args, title: str, names) -> None:
    if args.json:
        print(canonical_json(list(names)))
    else:
        print(format_table([title], [[n] for n in names]))


def cmd_ingest(args, config: SessionConfig) -> int:
    store = DocStore(config.docstore_root)
    ref = CollectionRef(args.db or config.default_db, args.collection)
    count = store.insert_many(ref, _load_documents(args.file))
    if args.json:
        print(canonical_json({"inserted": count}))
    else:
        print(f"inserted {count} documents into {ref}")
    return 0


def cmd_query(args, config: SessionConfig) -> int:
    session = build_session(config)
    statement = parse_statement(args.sql)
    if isinstance(statement, SelectAll):
        batch = session.execute_query(args.sql)
    else:
        batch = session.execute(args.sql)
    if args.json:
        print(batch_json(batch))
    elif batch.schema:
        print(batch_table(batch))
    return 0


def cmd_transfer(args, config: SessionConfig) -> int:
    spec = JobSpec(
        kind=JOB_NAMES[args.job],
        source=_ref(args.source, config),
        dest=_ref(args.dest, config),
        mode=SaveMode.parse(args.mode),
        drop_table=args.drop_table,
    )
    session = build_session(config)
    store = DocStore(config.docstore_root)
    report = run_job(spec, session, store)
    if args.json:
        print(canonical_json(report.to_dict()))
    else:
        print(f"moved {report.rows_moved} rows ({args.source} -> {args.dest})")
    return 0


def cmd_stream(args, config: SessionConfig) -> int:
    session = build_session(config)
    database, table = _ref(args.table, config)
    meta = session.warehouse.meta(database, table)
    rows = [document_to_row(doc, meta.columns) for doc in _load_documents(args.source)]
    sink = StreamSink(session.warehouse, database, table)
    # Batches already in the log are skipped by the sink; with the same
    # --batch-size a re-run is a clean no-op, not a short stream.
    replayed = min((sink.last_committed_batch_id() + 1) * args.batch_size, len(rows))
    committed = run_stream(iter([rows]), sink, args.batch_size)
    if args.json:
        print(canonical_json({"committed_rows": committed, "replayed_rows": replayed}))
    else:
        print(f"committed {committed} rows to {database}.{table}")
    if committed + replayed != len(rows):
        print(
            f"stream stopped early: {committed + replayed} of {len(rows)} rows committed",
            file=sys.stderr,
        )
        return 1
    return 0


def cmd_bench(args, config: SessionConfig) -> int:
    work_dir = args.work_dir or tempfile.mkdtemp(prefix="ncwc_bench_")
    results = run_benchmark(args.rows, args.parallelism, work_dir)
    if args.json:
        print(canonical_json([r.to_dict() for r in results]))
    else:
        print(bench_table(results))
    if args.out_dir:
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_bench_csv(out / "bench.csv", results)
        write_bench_json(out / "bench.json", results)
        write_bench_figure(out / "bench.png", results)
    return 0


def cmd_show(args, config: SessionConfig) -> int:
    session = build_session(config)
    if args.databases:
        _emit_list(args, "database_name", session.warehouse.show_databases())
    elif args.tables:
        _emit_list(args, "table_name", session.warehouse.show_tables(args.db or config.default_db))
    else:
        store = DocStore(config.docstore_root)
        _emit_list(args, "collection_name", store.list_collections(args.db or config.default_db))
    return 0


_COMMANDS = {
    "ingest": cmd_ingest,
    "query": cmd_query,
    "transfer": cmd_transfer,
    "stream": cmd_stream,
    "bench": cmd_bench,
    "show": cmd_show,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = SessionConfig.load(args.config)
        return _COMMANDS[args.cmd](args, config)
    except ConnectorError as exc:
        print(exc, file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
