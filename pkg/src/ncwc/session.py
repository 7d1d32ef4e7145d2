"""Connector session: configuration, the statement front end, and the
bridge between the two catalogs.

A session owns handles to the warehouse catalog (transactional tables)
and the session catalog (lightweight tables local to this tool, one
directory per table holding a metadata file and a single data file that
are replaced atomically).  The two catalogs never see each other's
tables.

Configuration is a flat ``key = value`` file (``#`` comments) pointed at
by the ``NCWC_CONFIG`` environment variable; explicit overrides beat the
file, the file beats built-in defaults.  Authentication is simulated: the
first session against a warehouse root writes a credentials file there
and every later session must present the same user and password.
"""

from __future__ import annotations

import json
import os
import shutil
import tempfile
from dataclasses import dataclass
from pathlib import Path

from .errors import ConnectorError
from .hql import (
    CreateTable,
    Describe,
    DropTable,
    SelectAll,
    ShowDatabases,
    ShowTables,
    parse,
)
from .interchange import (
    RecordBatch,
    TransferReport,
    commit_load,
    parallel_read,
    stage_write,
    staging_job_dir,
)
from .schema import WarehouseType, check_ident
from .values import DocValue
from .warehouse import SaveMode, TableMeta, Warehouse, read_segment_file, write_segment_file

ENV_CONFIG = "NCWC_CONFIG"

CONFIG_KEYS = {
    "connector.warehouse.root": "warehouse_root",
    "connector.staging.dir": "staging_dir",
    "connector.session.root": "session_root",
    "connector.docstore.root": "docstore_root",
    "connector.parallelism": "parallelism",
    "connector.default.db": "default_db",
    "connector.user": "user",
    "connector.password": "password",
}


@dataclass(frozen=True)
class SessionConfig:
    warehouse_root: str = "ncwc_data/warehouse"
    staging_dir: str = "ncwc_data/staging"
    session_root: str = "ncwc_data/session"
    docstore_root: str = "ncwc_data/docstore"
    parallelism: int = 2
    default_db: str = "default"
    user: str = "hive"
    password: str = "123456"

    def __post_init__(self):
        if self.parallelism < 1:
            raise ConnectorError("E_TYPE", "connector.parallelism must be >= 1")
        paths = [self.warehouse_root, self.staging_dir, self.session_root, self.docstore_root]
        if len({os.path.abspath(p) for p in paths}) != len(paths):
            raise ConnectorError("E_TYPE", "configured directories must be distinct")
        check_ident(self.default_db, "database name")

    @classmethod
    def load(cls, config_path: str | None = None, overrides: dict | None = None) -> "SessionConfig":
        """Resolve configuration: overrides > config file > defaults.

        The file is taken from ``config_path`` or, failing that, the
        ``NCWC_CONFIG`` environment variable.
        """
        values: dict[str, str] = {}
        path = config_path or os.environ.get(ENV_CONFIG)
        if path:
            values.update(parse_config_file(path))
        for key, value in (overrides or {}).items():
            if value is not None:
                values[key] = value
        kwargs = {}
        for key, value in values.items():
            if key not in CONFIG_KEYS:
                raise ConnectorError("E_TYPE", f"unknown config key {key!r}")
            field = CONFIG_KEYS[key]
            if field == "parallelism":
                try:
                    value = int(value)
                except ValueError:
                    raise ConnectorError("E_TYPE", f"connector.parallelism: {value!r} is not an integer")
            kwargs[field] = value
        return cls(**kwargs)


def parse_config_file(path) -> dict[str, str]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConnectorError("E_IO", f"cannot read config file {path}: {exc}") from exc
    values = {}
    for line_no, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConnectorError("E_TYPE", f"{path}:{line_no}: expected 'key = value'")
        values[key.strip()] = value.strip()
    return values


class SessionCatalog:
    """Tables of the session-local catalog: one directory per table with
    ``meta.json`` and ``data.ncwc``, both replaced atomically on writes."""

    def __init__(self, root):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def _table_dir(self, database: str, name: str) -> Path:
        return self.root / check_ident(database, "database name") / check_ident(name, "table name")

    def has_table(self, database: str, name: str) -> bool:
        return (self._table_dir(database, name) / "meta.json").exists()

    def list_databases(self) -> list[str]:
        return sorted(p.name for p in self.root.iterdir() if p.is_dir())

    def list_tables(self, database: str) -> list[str]:
        db_dir = self.root / check_ident(database, "database name")
        if not db_dir.is_dir():
            return []
        return sorted(p.name for p in db_dir.iterdir() if (p / "meta.json").exists())

    def save_as_table(self, batch: RecordBatch, database: str, name: str,
                      mode: SaveMode) -> int:
        """Write the batch as the table's contents under the save mode;
        creates the table (schema from the batch) when absent.  Returns
        rows written."""
        table_dir = self._table_dir(database, name)
        exists = self.has_table(database, name)
        if exists:
            if mode == SaveMode.ERROR_IF_EXISTS:
                raise ConnectorError("E_EXISTS", f"session table {database}.{name} exists")
            if mode == SaveMode.IGNORE:
                return 0
        rows = list(batch.rows())
        if exists and mode == SaveMode.APPEND:
            existing = self.read(database, name)
            if existing.schema != batch.schema:
                raise ConnectorError(
                    "E_SCHEMA_MISMATCH",
                    f"append to {database}.{name} with a different schema",
                )
            rows = list(existing.rows()) + rows
        meta = TableMeta(database=database, name=name, columns=tuple(batch.schema))
        table_dir.mkdir(parents=True, exist_ok=True)
        self._replace(table_dir / "meta.json", meta.to_json() + "\n")
        data_tmp = table_dir / "data.ncwc.tmp"
        write_segment_file(data_tmp, batch.schema, rows)
        os.replace(data_tmp, table_dir / "data.ncwc")
        return batch.row_count

    @staticmethod
    def _replace(path: Path, text: str) -> None:
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)

    def read(self, database: str, name: str) -> RecordBatch:
        table_dir = self._table_dir(database, name)
        if not self.has_table(database, name):
            raise ConnectorError("E_NO_TABLE", f"no session table {database}.{name}")
        columns, rows = read_segment_file(table_dir / "data.ncwc")
        return RecordBatch.from_rows(columns, rows)

    def drop(self, database: str, name: str, if_exists: bool = False) -> bool:
        table_dir = self._table_dir(database, name)
        if not self.has_table(database, name):
            if if_exists:
                return False
            raise ConnectorError("E_NO_TABLE", f"no session table {database}.{name}")
        shutil.rmtree(table_dir)
        return True


_CREDENTIALS_FILE = "_credentials"


def _check_credentials(warehouse_root: Path, user: str, password: str) -> None:
    if not user or not password:
        raise ConnectorError("E_AUTH", "user and password must be non-empty")
    path = warehouse_root / _CREDENTIALS_FILE
    record = json.dumps({"password": password, "user": user}, sort_keys=True)
    if path.exists():
        if path.read_text(encoding="utf-8").strip() != record:
            raise ConnectorError("E_AUTH", f"credentials rejected for user {user!r}")
    else:
        path.write_text(record + "\n", encoding="utf-8")


class Session:
    """User-facing handle bundling configuration and both catalogs."""

    def __init__(self, config: SessionConfig):
        self.config = config
        self.warehouse = Warehouse(config.warehouse_root)
        _check_credentials(self.warehouse.root, config.user, config.password)
        self.catalog = SessionCatalog(config.session_root)
        Path(config.staging_dir).mkdir(parents=True, exist_ok=True)
        self.warehouse.create_database(config.default_db, if_not_exists=True)
        self.current_db = config.default_db

    def set_database(self, database: str) -> None:
        if not self.warehouse.has_database(database):
            raise ConnectorError("E_NO_DATABASE", f"no database {database!r}")
        self.current_db = database

    def _resolve(self, database: str | None) -> str:
        return database if database is not None else self.current_db

    # -- statements ------------------------------------------------------

    def execute(self, text: str) -> RecordBatch:
        """Run a metadata/DDL statement; SELECT belongs to execute_query."""
        stmt = parse(text)
        string = WarehouseType("STRING")
        if isinstance(stmt, ShowDatabases):
            return RecordBatch.from_rows(
                (("database_name", string),),
                [[DocValue.text(n)] for n in self.warehouse.show_databases()],
            )
        if isinstance(stmt, ShowTables):
            return RecordBatch.from_rows(
                (("table_name", string),),
                [[DocValue.text(n)] for n in self.warehouse.show_tables(self.current_db)],
            )
        if isinstance(stmt, Describe):
            rows = self.warehouse.describe_table(
                self._resolve(stmt.database), stmt.table, extended=stmt.extended
            )
            return RecordBatch.from_rows(
                (("col_name", string), ("data_type", string), ("partition", WarehouseType("BOOLEAN"))),
                [
                    [
                        DocValue.text(name),
                        DocValue.text(dtype),
                        DocValue.null() if flag is None else DocValue.boolean(flag),
                    ]
                    for name, dtype, flag in rows
                ],
            )
        if isinstance(stmt, DropTable):
            self.warehouse.drop_table(
                self._resolve(stmt.database), stmt.table, if_exists=stmt.if_exists, purge=True
            )
            return RecordBatch.from_rows((), [])
        if isinstance(stmt, CreateTable):
            meta = TableMeta(
                database=self.current_db,
                name=stmt.table,
                columns=stmt.columns,
                bucket_cols=stmt.bucket_cols,
                num_buckets=stmt.num_buckets,
            )
            self.warehouse.create_table(meta, if_not_exists=stmt.if_not_exists)
            return RecordBatch.from_rows((), [])
        raise ConnectorError("E_TYPE", "SELECT statements go through execute_query")

    def execute_query(self, text: str) -> RecordBatch:
        """Run ``SELECT * FROM ...`` as a parallel read of the warehouse."""
        stmt = parse(text)
        if not isinstance(stmt, SelectAll):
            raise ConnectorError("E_TYPE", "execute_query accepts only SELECT statements")
        batch = parallel_read(
            self.warehouse, self._resolve(stmt.database), stmt.table, self.config.parallelism
        )
        if stmt.limit is not None and stmt.limit < batch.row_count:
            rows = []
            for i, row in enumerate(batch.rows()):
                if i >= stmt.limit:
                    break
                rows.append(row)
            return RecordBatch.from_rows(batch.schema, rows)
        return batch

    # -- data movement ----------------------------------------------------

    def write_dataset(self, batch: RecordBatch, database: str | None, table: str,
                      mode: SaveMode) -> TransferReport:
        """Stage the batch and load it into a warehouse table."""
        database = self._resolve(database)
        meta = self.warehouse.meta(database, table)
        staged = stage_write(batch, self.config.staging_dir, meta)
        try:
            report = commit_load(self.warehouse, database, table, staged, mode)
        except Exception:
            for job_dir in {staging_job_dir(f) for f in staged}:
                shutil.rmtree(job_dir, ignore_errors=True)
            raise
        return report

    def session_save_as_table(self, batch: RecordBatch, database: str, table: str,
                              mode: SaveMode) -> int:
        return self.catalog.save_as_table(batch, database, table, mode)

    def session_read(self, database: str, table: str) -> RecordBatch:
        return self.catalog.read(database, table)


def build_session(config: SessionConfig | None = None) -> Session:
    return Session(config or SessionConfig())
