"""Embedded transactional columnar warehouse.

Layout on disk, all under one root directory:

    <root>/<db>/<table>/_meta.json                 table metadata
    <root>/<db>/<table>/_txn.log                   append-only transaction log
    <root>/<db>/<table>/<partition dirs>/<bucket>-<segment>.ncwc
    <root>/.trash/<db>/<name>.<txn_id>/            non-purge table drops

Visibility is governed entirely by the log: a segment file exists to a
reader only if some COMMIT record references it, and a COMMIT with
op=OVERWRITE hides everything committed before it.  The log is replayed
up to the first malformed line, so a torn write at the tail behaves as
if the interrupted transaction never happened.

Segment files are text: a header line ``NCWC1 <canonical-JSON schema>``
followed by one canonical-JSON array per row.  Rows carry every column,
partition columns included, which keeps each file self-describing.
"""

from __future__ import annotations

import enum
import json
import os
import re
import shutil
import threading
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from urllib.parse import quote, unquote

from .errors import ConnectorError
from .schema import WarehouseType, check_ident, coerce_for_column, decode_for_column
from .values import DocValue, Tag, canonical_encode, from_canonical_json, to_canonical_json

SEGMENT_MAGIC = "NCWC1"
SEGMENT_EXT = ".ncwc"

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3


def fnv1a64(data: bytes) -> int:
    h = _FNV_OFFSET
    for byte in data:
        h = ((h ^ byte) * _FNV_PRIME) & 0xFFFFFFFFFFFFFFFF
    return h


class SaveMode(enum.Enum):
    ERROR_IF_EXISTS = "ErrorIfExists"
    APPEND = "Append"
    OVERWRITE = "Overwrite"
    IGNORE = "Ignore"

    @classmethod
    def parse(cls, text: str) -> "SaveMode":
        for mode in cls:
            if mode.value.lower() == text.strip().lower():
                return mode
        raise ConnectorError("E_TYPE", f"unknown save mode {text!r}")


@dataclass(frozen=True)
class TableMeta:
    database: str
    name: str
    columns: tuple[tuple[str, WarehouseType], ...]
    partition_cols: tuple[str, ...] = ()
    bucket_cols: tuple[str, ...] = ()
    num_buckets: int = 0

    def __post_init__(self):
        check_ident(self.database, "database name")
        check_ident(self.name, "table name")
        names = [n for n, _ in self.columns]
        if len(set(names)) != len(names):
            raise ConnectorError("E_BAD_META", "duplicate column names")
        for n in names:
            check_ident(n, "column name")
        for group, what in ((self.partition_cols, "partition"), (self.bucket_cols, "bucket")):
            for col in group:
                if col not in names:
                    raise ConnectorError("E_BAD_META", f"{what} column {col!r} not in columns")
        if set(self.partition_cols) & set(self.bucket_cols):
            raise ConnectorError("E_BAD_META", "partition and bucket columns overlap")
        if self.bucket_cols:
            if self.num_buckets < 1:
                raise ConnectorError("E_BAD_META", "num_buckets must be >= 1")
        elif self.num_buckets:
            raise ConnectorError("E_BAD_META", "num_buckets without bucket columns")

    def column_type(self, name: str) -> WarehouseType:
        for n, t in self.columns:
            if n == name:
                return t
        raise ConnectorError("E_BAD_META", f"no column {name!r}")

    def column_index(self, name: str) -> int:
        for i, (n, _) in enumerate(self.columns):
            if n == name:
                return i
        raise ConnectorError("E_BAD_META", f"no column {name!r}")

    def to_json(self) -> str:
        return json.dumps(
            {
                "database": self.database,
                "name": self.name,
                "columns": [{"name": n, "type": t.render()} for n, t in self.columns],
                "partition_cols": list(self.partition_cols),
                "bucket_cols": list(self.bucket_cols),
                "num_buckets": self.num_buckets,
            },
            sort_keys=True,
            separators=(",", ":"),
        )

    @classmethod
    def from_json(cls, text: str) -> "TableMeta":
        try:
            raw = json.loads(text)
            return cls(
                database=raw["database"],
                name=raw["name"],
                columns=tuple((c["name"], WarehouseType.parse(c["type"])) for c in raw["columns"]),
                partition_cols=tuple(raw["partition_cols"]),
                bucket_cols=tuple(raw["bucket_cols"]),
                num_buckets=raw["num_buckets"],
            )
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise ConnectorError("E_BAD_META", f"bad table metadata: {exc}") from exc


@dataclass(frozen=True)
class Segment:
    segment_id: str
    partition_key: tuple[tuple[str, str], ...]
    bucket_index: int
    row_count: int
    file: Path


@dataclass(frozen=True)
class TxnRecord:
    txn_id: int
    state: str  # BEGIN | COMMIT | ABORT
    op: str = "APPEND"  # APPEND | OVERWRITE
    batch_id: int | None = None
    segments: tuple[str, ...] = field(default=())

    def to_json(self) -> str:
        return json.dumps(
            {
                "txn_id": self.txn_id,
                "state": self.state,
                "op": self.op,
                "batch_id": self.batch_id,
                "segments": list(self.segments),
            },
            sort_keys=True,
            separators=(",", ":"),
        )

    @classmethod
    def from_json(cls, text: str) -> "TxnRecord":
        raw = json.loads(text)
        rec = cls(
            txn_id=raw["txn_id"],
            state=raw["state"],
            op=raw["op"],
            batch_id=raw["batch_id"],
            segments=tuple(raw["segments"]),
        )
        if rec.state not in ("BEGIN", "COMMIT", "ABORT") or rec.op not in ("APPEND", "OVERWRITE"):
            raise ValueError(f"bad txn record {text!r}")
        if not isinstance(rec.txn_id, int):
            raise ValueError(f"bad txn id in {text!r}")
        return rec


def assign_bucket(row: list[DocValue], meta: TableMeta) -> int:
    """FNV-1a 64 over the concatenated canonical encodings of the bucket
    column values, modulo num_buckets."""
    if not meta.bucket_cols:
        raise ConnectorError("E_NO_BUCKET_SPEC", f"table {meta.name} is not bucketed")
    data = b"".join(canonical_encode(row[meta.column_index(c)]) for c in meta.bucket_cols)
    return fnv1a64(data) % meta.num_buckets


# -- segment files ------------------------------------------------------


def write_segment_file(path: Path, columns, rows) -> None:
    header = json.dumps(
        [{"name": n, "type": t.render()} for n, t in columns],
        sort_keys=True,
        separators=(",", ":"),
    )
    lines = [f"{SEGMENT_MAGIC} {header}\n"]
    for row in rows:
        lines.append(to_canonical_json(DocValue.array(row)) + "\n")
    path.parent.mkdir(parents=True, exist_ok=True)
    try:
        with open(path, "w", encoding="utf-8") as fh:
            fh.writelines(lines)
            fh.flush()
            os.fsync(fh.fileno())
    except OSError as exc:
        raise ConnectorError("E_IO", f"cannot write segment {path}: {exc}") from exc


def read_segment_file(path: Path) -> tuple[list[tuple[str, WarehouseType]], list[list[DocValue]]]:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise ConnectorError("E_IO", f"cannot read segment {path}: {exc}") from exc
    if not lines or not lines[0].startswith(SEGMENT_MAGIC + " "):
        raise ConnectorError("E_BAD_META", f"{path} is not a segment file")
    try:
        raw_cols = json.loads(lines[0][len(SEGMENT_MAGIC) + 1 :])
        columns = [(c["name"], WarehouseType.parse(c["type"])) for c in raw_cols]
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise ConnectorError("E_BAD_META", f"bad segment header in {path}: {exc}") from exc
    types = [t for _, t in columns]
    rows = []
    for line in lines[1:]:
        line = line.strip()
        if not line:
            continue
        decoded = from_canonical_json(line)
        if decoded.tag != Tag.ARRAY or len(decoded.value) != len(columns):
            raise ConnectorError("E_BAD_META", f"bad row in {path}")
        rows.append([decode_for_column(v, t) for v, t in zip(decoded.value, types)])
    return columns, rows


def render_partition_value(v: DocValue) -> str:
    return to_canonical_json(v)


def partition_dir_name(col: str, rendered: str) -> str:
    # Percent-encode both halves so arbitrary JSON text stays a safe
    # single path component.
    return f"{quote(col, safe='')}={quote(rendered, safe='')}"


def parse_partition_dir(name: str) -> tuple[str, str]:
    col, _, rendered = name.partition("=")
    return unquote(col), unquote(rendered)


# -- transactions --------------------------------------------------------

_REGISTRY_LOCK = threading.Lock()
_OPEN_TXNS: set[tuple[str, str, str]] = set()


class Txn:
    """Handle for one open table transaction."""

    def __init__(self, warehouse: "Warehouse", database: str, table: str, txn_id: int,
                 batch_id: int | None = None):
        self.warehouse = warehouse
        self.database = database
        self.table = table
        self.txn_id = txn_id
        self.batch_id = batch_id
        self.op = "APPEND"
        self.segments: list[Segment] = []
        self.closed = False

    def _key(self):
        return (self.warehouse.root_key, self.database, self.table)

    def commit(self) -> None:
        self._finish("COMMIT")

    def abort(self) -> None:
        for seg in self.segments:
            try:
                seg.file.unlink()
            except FileNotFoundError:
                pass
        self._finish("ABORT")

    def _finish(self, state: str) -> None:
        if self.closed:
            raise ConnectorError("E_NO_TXN", "transaction already closed")
        record = TxnRecord(
            txn_id=self.txn_id,
            state=state,
            op=self.op if state == "COMMIT" else "APPEND",
            batch_id=self.batch_id,
            segments=tuple(s.segment_id for s in self.segments),
        )
        self.warehouse._append_log(self.database, self.table, record)
        self.closed = True
        with _REGISTRY_LOCK:
            _OPEN_TXNS.discard(self._key())

    def release(self) -> None:
        """Drop the in-process writer slot without logging a record, the
        way a crashed process would; the dangling BEGIN stays invisible."""
        self.closed = True
        with _REGISTRY_LOCK:
            _OPEN_TXNS.discard(self._key())


class CreateTableBuilder:
    """Fluent table definition: name the columns, then ``create()``."""

    def __init__(self, warehouse: "Warehouse", database: str, name: str):
        self._warehouse = warehouse
        self._database = database
        self._name = name
        self._columns: list[tuple[str, WarehouseType]] = []
        self._partition_cols: tuple[str, ...] = ()
        self._bucket_cols: tuple[str, ...] = ()
        self._num_buckets = 0
        self._if_not_exists = False

    def if_not_exists(self) -> "CreateTableBuilder":
        self._if_not_exists = True
        return self

    def column(self, name: str, type_text: str) -> "CreateTableBuilder":
        self._columns.append((name, WarehouseType.parse(type_text)))
        return self

    def partitioned_by(self, *cols: str) -> "CreateTableBuilder":
        self._partition_cols = cols
        return self

    def clustered_by(self, cols, num_buckets: int) -> "CreateTableBuilder":
        self._bucket_cols = tuple(cols)
        self._num_buckets = num_buckets
        return self

    def create(self) -> bool:
        meta = TableMeta(
            database=self._database,
            name=self._name,
            columns=tuple(self._columns),
            partition_cols=self._partition_cols,
            bucket_cols=self._bucket_cols,
            num_buckets=self._num_buckets,
        )
        return self._warehouse.create_table(meta, if_not_exists=self._if_not_exists)


class Warehouse:
    """Catalog of databases and transactional tables under one root."""

    def __init__(self, root):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.root_key = os.path.realpath(self.root)
        (self.root / "default").mkdir(exist_ok=True)

    # -- catalog ---------------------------------------------------------

    def _db_dir(self, database: str) -> Path:
        return self.root / check_ident(database, "database name")

    def _table_dir(self, database: str, name: str) -> Path:
        return self._db_dir(database) / check_ident(name, "table name")

    def create_database(self, name: str, if_not_exists: bool = False) -> bool:
        path = self._db_dir(name)
        if path.exists():
            if if_not_exists:
                return False
            raise ConnectorError("E_EXISTS", f"database {name!r} exists")
        path.mkdir(parents=True)
        return True

    def drop_database(self, name: str, if_exists: bool = False, cascade: bool = False) -> bool:
        path = self._db_dir(name)
        if not path.exists():
            if if_exists:
                return False
            raise ConnectorError("E_NO_DATABASE", f"no database {name!r}")
        if self.show_tables(name) and not cascade:
            raise ConnectorError("E_NOT_EMPTY", f"database {name!r} has tables")
        shutil.rmtree(path)
        return True

    def has_database(self, name: str) -> bool:
        return self._db_dir(name).is_dir()

    def show_databases(self) -> list[str]:
        return sorted(p.name for p in self.root.iterdir() if p.is_dir() and p.name != ".trash")

    def show_tables(self, database: str) -> list[str]:
        db_dir = self._db_dir(database)
        if not db_dir.is_dir():
            raise ConnectorError("E_NO_DATABASE", f"no database {database!r}")
        return sorted(p.name for p in db_dir.iterdir() if (p / "_meta.json").exists())

    def create_table(self, meta: TableMeta, if_not_exists: bool = False) -> bool:
        if not self.has_database(meta.database):
            raise ConnectorError("E_NO_DATABASE", f"no database {meta.database!r}")
        if not meta.columns:
            raise ConnectorError("E_BAD_META", "table needs at least one column")
        table_dir = self._table_dir(meta.database, meta.name)
        if (table_dir / "_meta.json").exists():
            if if_not_exists:
                return False
            raise ConnectorError("E_EXISTS", f"table {meta.database}.{meta.name} exists")
        table_dir.mkdir(parents=True, exist_ok=True)
        (table_dir / "_meta.json").write_text(meta.to_json() + "\n", encoding="utf-8")
        (table_dir / "_txn.log").touch()
        return True

    def create_table_builder(self, database: str, name: str) -> CreateTableBuilder:
        return CreateTableBuilder(self, database, name)

    def drop_table(self, database: str, name: str, if_exists: bool = False,
                   purge: bool = False) -> bool:
        table_dir = self._table_dir(database, name)
        if not (table_dir / "_meta.json").exists():
            if if_exists:
                return False
            raise ConnectorError("E_NO_TABLE", f"no table {database}.{name}")
        if purge:
            shutil.rmtree(table_dir)
        else:
            txn_id = self._next_txn_id(database, name)
            dest = self.root / ".trash" / database / f"{name}.{txn_id}"
            dest.parent.mkdir(parents=True, exist_ok=True)
            shutil.move(str(table_dir), str(dest))
        return True

    def has_table(self, database: str, name: str) -> bool:
        return (self._table_dir(database, name) / "_meta.json").exists()

    def meta(self, database: str, name: str) -> TableMeta:
        path = self._table_dir(database, name) / "_meta.json"
        if not path.exists():
            raise ConnectorError("E_NO_TABLE", f"no table {database}.{name}")
        return TableMeta.from_json(path.read_text(encoding="utf-8"))

    def describe_table(self, database: str, name: str, extended: bool = False):
        """Rows of (column, type, partition flag); extended adds table facts
        with a None flag."""
        meta = self.meta(database, name)
        rows = [(n, t.render(), n in meta.partition_cols) for n, t in meta.columns]
        if extended:
            rows.append(("# database", meta.database, None))
            rows.append(("# location", str(self._table_dir(database, name)), None))
            rows.append(("# partition_cols", ",".join(meta.partition_cols), None))
            rows.append(("# bucket_cols", ",".join(meta.bucket_cols), None))
            rows.append(("# num_buckets", str(meta.num_buckets), None))
        return rows

    # -- transaction log ---------------------------------------------------

    def _log_path(self, database: str, name: str) -> Path:
        return self._table_dir(database, name) / "_txn.log"

    def read_log(self, database: str, name: str) -> list[TxnRecord]:
        """Parse the log up to the first malformed line."""
        path = self._log_path(database, name)
        if not path.parent.joinpath("_meta.json").exists():
            raise ConnectorError("E_NO_TABLE", f"no table {database}.{name}")
        records = []
        if path.exists():
            with open(path, "r", encoding="utf-8") as fh:
                for line in fh:
                    if not line.endswith("\n"):
                        break
                    try:
                        records.append(TxnRecord.from_json(line))
                    except (ValueError, KeyError, TypeError):
                        break
        return records

    @staticmethod
    def _drop_torn_tail(path: Path) -> None:
        # A crash can leave a half-written final line; replay already
        # ignores it, so cut it off before appending or the next record
        # would fuse with the fragment and become unreadable too.
        try:
            with open(path, "rb+") as fh:
                fh.seek(0, os.SEEK_END)
                size = fh.tell()
                if size == 0:
                    return
                fh.seek(size - 1)
                if fh.read(1) == b"\n":
                    return
                fh.seek(0)
                data = fh.read()
                fh.truncate(data.rfind(b"\n") + 1)
        except FileNotFoundError:
            pass

    def _append_log(self, database: str, name: str, record: TxnRecord) -> None:
        path = self._log_path(database, name)
        self._drop_torn_tail(path)
        try:
            with open(path, "a", encoding="utf-8") as fh:
                fh.write(record.to_json() + "\n")
                fh.flush()
                os.fsync(fh.fileno())
        except OSError as exc:
            raise ConnectorError("E_IO", f"cannot append txn log: {exc}") from exc

    def _next_txn_id(self, database: str, name: str) -> int:
        records = self.read_log(database, name)
        return max((r.txn_id for r in records), default=0) + 1

    def begin(self, database: str, name: str, batch_id: int | None = None) -> Txn:
        """Open the table's single writer transaction and log BEGIN."""
        self.meta(database, name)
        key = (self.root_key, database, name)
        with _REGISTRY_LOCK:
            if key in _OPEN_TXNS:
                raise ConnectorError("E_TXN_OPEN", f"table {database}.{name} has an open transaction")
            _OPEN_TXNS.add(key)
        try:
            txn = Txn(self, database, name, self._next_txn_id(database, name), batch_id)
            self._append_log(database, name, TxnRecord(txn.txn_id, "BEGIN", batch_id=batch_id))
        except BaseException:
            with _REGISTRY_LOCK:
                _OPEN_TXNS.discard(key)
            raise
        return txn

    # -- data path ----------------------------------------------------------

    def _segment_files(self, database: str, name: str) -> dict[str, Path]:
        """Map segment_id -> file for every segment file under the table."""
        table_dir = self._table_dir(database, name)
        found = {}
        for path in table_dir.rglob(f"*{SEGMENT_EXT}"):
            stem = path.name[: -len(SEGMENT_EXT)]
            _, _, segment_id = stem.partition("-")
            found[segment_id] = path
        return found

    def _segment_from_file(self, table_dir: Path, segment_id: str, path: Path) -> Segment:
        stem = path.name[: -len(SEGMENT_EXT)]
        bucket_text, _, _ = stem.partition("-")
        partition_key = []
        for part in path.parent.relative_to(table_dir).parts:
            if "=" in part:
                partition_key.append(parse_partition_dir(part))
        _, rows = read_segment_file(path)
        return Segment(
            segment_id=segment_id,
            partition_key=tuple(partition_key),
            bucket_index=int(bucket_text),
            row_count=len(rows),
            file=path,
        )

    def visible_segments(self, database: str, name: str) -> list[tuple[int, Segment]]:
        """Committed segments in scan order: (txn_id, then segment_id)."""
        records = self.read_log(database, name)
        commits: list[TxnRecord] = []
        for rec in records:
            if rec.state != "COMMIT":
                continue
            if rec.op == "OVERWRITE":
                commits = [rec]
            else:
                commits.append(rec)
        files = self._segment_files(database, name)
        table_dir = self._table_dir(database, name)
        out = []
        for rec in sorted(commits, key=lambda r: r.txn_id):
            for segment_id in sorted(rec.segments):
                path = files.get(segment_id)
                if path is None:
                    raise ConnectorError(
                        "E_BAD_META", f"committed segment {segment_id} missing on disk"
                    )
                out.append((rec.txn_id, self._segment_from_file(table_dir, segment_id, path)))
        return out

    def has_committed_rows(self, database: str, name: str) -> bool:
        return bool(self.visible_segments(database, name))

    def read_segment_rows(self, database: str, name: str, path: Path) -> list[list[DocValue]]:
        meta = self.meta(database, name)
        columns, rows = read_segment_file(path)
        if [n for n, _ in columns] != [n for n, _ in meta.columns]:
            raise ConnectorError("E_BAD_META", f"segment {path} does not match table schema")
        return rows

    def write_rows(self, txn: Txn, rows, mode: SaveMode) -> list[Segment]:
        """Group rows by (partition, bucket) into new segment files.

        ErrorIfExists fails and Ignore no-ops when the table already has
        committed rows; Overwrite marks the transaction so its COMMIT
        hides everything before it.
        """
        if txn.closed:
            raise ConnectorError("E_NO_TXN", "transaction is closed")
        database, name = txn.database, txn.table
        meta = self.meta(database, name)
        if mode in (SaveMode.ERROR_IF_EXISTS, SaveMode.IGNORE) and self.has_committed_rows(database, name):
            if mode == SaveMode.IGNORE:
                return []
            raise ConnectorError("E_EXISTS", f"table {database}.{name} already has rows")
        if mode == SaveMode.OVERWRITE:
            txn.op = "OVERWRITE"

        coerced = []
        names = [n for n, _ in meta.columns]
        types = [t for _, t in meta.columns]
        for row in rows:
            if len(row) != len(names):
                raise ConnectorError("E_TYPE", f"row has {len(row)} values, table has {len(names)}")
            coerced.append([coerce_for_column(v, t, n) for v, t, n in zip(row, types, names)])

        groups: dict[tuple, list] = {}
        for row in coerced:
            pkey = tuple(
                (c, render_partition_value(row[meta.column_index(c)])) for c in meta.partition_cols
            )
            bucket = assign_bucket(row, meta) if meta.bucket_cols else 0
            groups.setdefault((pkey, bucket), []).append(row)

        table_dir = self._table_dir(database, name)
        segments = []
        for (pkey, bucket), group_rows in groups.items():
            segment_id = str(uuid.uuid4())
            rel = Path(*(partition_dir_name(c, r) for c, r in pkey))
            path = table_dir / rel / f"{bucket}-{segment_id}{SEGMENT_EXT}"
            write_segment_file(path, meta.columns, group_rows)
            segments.append(
                Segment(segment_id, pkey, bucket, len(group_rows), path)
            )
        txn.segments.extend(segments)
        return segments

    def adopt_segment_file(self, txn: Txn, source: Path) -> Segment:
        """Move a staged segment file into the table layout (no row rewrite)."""
        database, name = txn.database, txn.table
        meta = self.meta(database, name)
        columns, rows = read_segment_file(source)
        if [(n, t.render()) for n, t in columns] != [(n, t.render()) for n, t in meta.columns]:
            raise ConnectorError(
                "E_SCHEMA_MISMATCH", f"staged file {source.name} does not match {database}.{name}"
            )
        stem = source.name[: -len(SEGMENT_EXT)]
        bucket_text, _, segment_id = stem.partition("-")
        # Partition dirs are the maximal run of `col=value` components
        # directly above the file; anything further up is staging scaffolding.
        pkey_parts: list[str] = []
        for part in reversed(source.parent.parts):
            if "=" not in part:
                break
            pkey_parts.append(part)
        pkey = [parse_partition_dir(p) for p in reversed(pkey_parts)]
        rel = Path(*(partition_dir_name(c, r) for c, r in pkey))
        dest = self._table_dir(database, name) / rel / source.name
        dest.parent.mkdir(parents=True, exist_ok=True)
        shutil.move(str(source), str(dest))
        segment = Segment(segment_id, tuple(pkey), int(bucket_text), len(rows), dest)
        txn.segments.append(segment)
        return segment

    def scan_table(self, database: str, name: str):
        """Yield committed rows in (txn_id, segment_id, row position) order."""
        self.meta(database, name)
        for _, segment in self.visible_segments(database, name):
            for row in self.read_segment_rows(database, name, segment.file):
                yield row
