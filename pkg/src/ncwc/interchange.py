"""Data plane between catalogs: split planning, parallel reads, and the
staged write path (stage files first, then adopt them in one transaction).

A read plans the table's visible segments into at most ``parallelism``
input splits, fetches every split (concurrently in ``parallel_read``)
and assembles one batch.  Assembly always emits rows in the table's
scan order, so the assembled bytes do not depend on the parallelism
used to fetch them.

A write stages segment files under ``staging_dir/<job-uuid>/`` and then
``commit_load`` adopts them into the table by moving files inside one
transaction; a crash anywhere in between leaves the table contents
unchanged because visibility comes from the transaction log alone.
"""

from __future__ import annotations

import shutil
import time
import uuid
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from .errors import ConnectorError
from .schema import WarehouseType, coerce_for_column
from .values import DocValue
from .warehouse import (
    SEGMENT_EXT,
    SaveMode,
    Segment,
    TableMeta,
    Warehouse,
    assign_bucket,
    partition_dir_name,
    read_segment_file,
    render_partition_value,
    write_segment_file,
)


@dataclass
class RecordBatch:
    """Columnar batch: one value vector per schema column."""

    schema: tuple[tuple[str, WarehouseType], ...]
    columns: list[list[DocValue]]
    row_count: int

    @classmethod
    def from_rows(cls, schema, rows) -> "RecordBatch":
        schema = tuple(schema)
        columns: list[list[DocValue]] = [[] for _ in schema]
        count = 0
        for row in rows:
            if len(row) != len(schema):
                raise ConnectorError(
                    "E_TYPE", f"row has {len(row)} values, schema has {len(schema)}"
                )
            for vec, value in zip(columns, row):
                vec.append(value)
            count += 1
        return cls(schema=schema, columns=columns, row_count=count)

    def rows(self):
        for i in range(self.row_count):
            yield [vec[i] for vec in self.columns]

    def column(self, name: str) -> list[DocValue]:
        for (n, _), vec in zip(self.schema, self.columns):
            if n == name:
                return vec
        raise ConnectorError("E_TYPE", f"no column {name!r} in batch")

    def column_names(self) -> list[str]:
        return [n for n, _ in self.schema]


@dataclass(frozen=True)
class InputSplit:
    database: str
    table: str
    split_index: int
    segment_ids: tuple[str, ...]


@dataclass
class TransferReport:
    rows_moved: int = 0
    split_count: int = 0
    inference_passes: int = 0
    serialization_steps: int = 0
    staging_files: int = 0
    wall_time_ms: float = 0.0

    def to_dict(self) -> dict:
        return {
            "rows_moved": self.rows_moved,
            "split_count": self.split_count,
            "inference_passes": self.inference_passes,
            "serialization_steps": self.serialization_steps,
            "staging_files": self.staging_files,
            "wall_time_ms": round(self.wall_time_ms, 3),
        }


def _plan(database: str, table: str, segments: list[tuple[int, Segment]],
          parallelism: int) -> list[InputSplit]:
    if parallelism < 1:
        raise ConnectorError("E_TYPE", f"parallelism must be >= 1, got {parallelism}")
    slots: list[list[Segment]] = [[] for _ in range(parallelism)]
    totals = [0] * parallelism
    for _, segment in segments:
        target = min(range(parallelism), key=lambda i: (totals[i], i))
        slots[target].append(segment)
        totals[target] += segment.row_count
    splits = []
    for slot in slots:
        if slot:
            splits.append(
                InputSplit(database, table, len(splits), tuple(s.segment_id for s in slot))
            )
    return splits


def plan_splits(warehouse: Warehouse, database: str, table: str,
                parallelism: int) -> list[InputSplit]:
    """Assign visible segments greedily to the split with the fewest rows
    so far (ties to the lowest index); empty tables plan zero splits."""
    return _plan(database, table, warehouse.visible_segments(database, table), parallelism)


def _fetch_rows_by_segment(warehouse: Warehouse, split: InputSplit) -> dict[str, list]:
    visible = {
        seg.segment_id: seg for _, seg in warehouse.visible_segments(split.database, split.table)
    }
    out = {}
    for segment_id in split.segment_ids:
        segment = visible.get(segment_id)
        if segment is None:
            raise ConnectorError("E_STALE_SPLIT", f"segment {segment_id} no longer visible")
        out[segment_id] = warehouse.read_segment_rows(split.database, split.table, segment.file)
    return out


def fetch_split(warehouse: Warehouse, split: InputSplit) -> RecordBatch:
    """Rows of the split's segments, concatenated in segment_id order."""
    by_segment = _fetch_rows_by_segment(warehouse, split)
    meta = warehouse.meta(split.database, split.table)
    rows = []
    for segment_id in sorted(split.segment_ids):
        rows.extend(by_segment[segment_id])
    return RecordBatch.from_rows(meta.columns, rows)


def parallel_read(warehouse: Warehouse, database: str, table: str,
                  parallelism: int) -> RecordBatch:
    """Fetch all splits, up to ``parallelism`` concurrently, and assemble
    the batch in scan order regardless of how segments were assigned."""
    meta = warehouse.meta(database, table)
    snapshot = warehouse.visible_segments(database, table)
    splits = _plan(database, table, snapshot, parallelism)
    if not splits:
        return RecordBatch.from_rows(meta.columns, [])
    if len(splits) == 1:
        fetched = _fetch_rows_by_segment(warehouse, splits[0])
    else:
        fetched = {}
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            for part in pool.map(lambda s: _fetch_rows_by_segment(warehouse, s), splits):
                fetched.update(part)
    rows = []
    for _, segment in snapshot:
        rows.extend(fetched[segment.segment_id])
    return RecordBatch.from_rows(meta.columns, rows)


def stage_write(batch: RecordBatch, staging_dir, meta: TableMeta) -> list[Path]:
    """Write the batch as segment files under a fresh job directory,
    grouped by the table's partition and bucket layout.  Nothing becomes
    visible until commit_load adopts the files."""
    if batch.column_names() != [n for n, _ in meta.columns]:
        raise ConnectorError(
            "E_SCHEMA_MISMATCH",
            f"batch columns {batch.column_names()} do not match table "
            f"{[n for n, _ in meta.columns]}",
        )
    for (name, btype), (_, ttype) in zip(batch.schema, meta.columns):
        if not _column_compatible(btype, ttype):
            raise ConnectorError(
                "E_SCHEMA_MISMATCH",
                f"column {name}: batch type {btype.render()} vs table {ttype.render()}",
            )
    names = [n for n, _ in meta.columns]
    types = [t for _, t in meta.columns]
    groups: dict[tuple, list] = {}
    for row in batch.rows():
        row = [coerce_for_column(v, t, n) for v, t, n in zip(row, types, names)]
        pkey = tuple(
            (c, render_partition_value(row[meta.column_index(c)])) for c in meta.partition_cols
        )
        bucket = assign_bucket(row, meta) if meta.bucket_cols else 0
        groups.setdefault((pkey, bucket), []).append(row)
    if not groups:
        return []
    job_dir = Path(staging_dir) / str(uuid.uuid4())
    files = []
    for (pkey, bucket), rows in groups.items():
        rel = Path(*(partition_dir_name(c, r) for c, r in pkey))
        path = job_dir / rel / f"{bucket}-{uuid.uuid4()}{SEGMENT_EXT}"
        write_segment_file(path, meta.columns, rows)
        files.append(path)
    return files


def _column_compatible(batch_type: WarehouseType, table_type: WarehouseType) -> bool:
    if batch_type == table_type:
        return True
    widenings = {
        ("TINYINT", "SMALLINT"), ("TINYINT", "INT"), ("TINYINT", "BIGINT"),
        ("SMALLINT", "INT"), ("SMALLINT", "BIGINT"),
        ("INT", "BIGINT"),
        ("TINYINT", "DOUBLE"), ("SMALLINT", "DOUBLE"), ("INT", "DOUBLE"),
        ("BIGINT", "DOUBLE"), ("FLOAT", "DOUBLE"),
        ("TINYINT", "FLOAT"), ("SMALLINT", "FLOAT"), ("INT", "FLOAT"), ("BIGINT", "FLOAT"),
    }
    return (batch_type.kind, table_type.kind) in widenings


def staging_job_dir(path: Path) -> Path:
    """The job directory one staged file was written under (its parent,
    above any `col=value` partition components)."""
    d = Path(path).parent
    while "=" in d.name:
        d = d.parent
    return d


def commit_load(warehouse: Warehouse, database: str, table: str, staged: list[Path],
                mode: SaveMode, failpoints=None) -> TransferReport:
    """Adopt staged segment files into the table in a single transaction.

    Files move, rows are never rewritten.  Ordinary errors roll back:
    moved files return to staging and the transaction aborts, leaving
    table and staging as they were.  ``failpoints``, when given, is
    called with a step label before each state change; raising
    ``CrashInjected`` from it simulates a hard stop at that boundary
    (no rollback, no abort record), which the log must tolerate.
    """
    start = time.monotonic()

    def hit(step: str):
        if failpoints is not None:
            failpoints(step)

    meta = warehouse.meta(database, table)
    for path in staged:
        if not path.exists():
            raise ConnectorError("E_IO", f"staged file {path} missing")
    # Validate every file before touching the table.
    total_rows = 0
    for path in staged:
        columns, rows = read_segment_file(path)
        if [(n, t.render()) for n, t in columns] != [(n, t.render()) for n, t in meta.columns]:
            raise ConnectorError(
                "E_SCHEMA_MISMATCH", f"staged file {path.name} does not match {database}.{table}"
            )
        total_rows += len(rows)

    if mode in (SaveMode.ERROR_IF_EXISTS, SaveMode.IGNORE) and warehouse.has_committed_rows(
        database, table
    ):
        if mode == SaveMode.ERROR_IF_EXISTS:
            raise ConnectorError("E_EXISTS", f"table {database}.{table} already has rows")
        for job_dir in {staging_job_dir(f) for f in staged}:
            _remove_job_dir(job_dir)
        return TransferReport(
            rows_moved=0,
            staging_files=len(staged),
            wall_time_ms=(time.monotonic() - start) * 1000,
        )

    if not staged and mode != SaveMode.OVERWRITE:
        return TransferReport(rows_moved=0, wall_time_ms=(time.monotonic() - start) * 1000)

    hit("begin")
    txn = warehouse.begin(database, table)
    moved: list[tuple[Path, Path]] = []
    try:
        if mode == SaveMode.OVERWRITE:
            txn.op = "OVERWRITE"
        for i, path in enumerate(staged):
            hit(f"move:{i}")
            segment = warehouse.adopt_segment_file(txn, path)
            moved.append((segment.file, path))
        hit("commit")
        txn.commit()
        hit("cleanup")
    except Exception:
        # Recoverable failure: put every moved file back and abort, so
        # both the table and the staging directory look untouched.
        for dest, original in moved:
            if dest.exists():
                shutil.move(str(dest), str(original))
        txn.segments.clear()
        if not txn.closed:
            txn.abort()
        raise
    except BaseException:
        # Simulated crash: release the writer slot and stop dead; the
        # log's missing COMMIT keeps everything invisible.
        if not txn.closed:
            txn.release()
        raise
    for job_dir in {staging_job_dir(f) for f in staged}:
        _remove_job_dir(job_dir)
    return TransferReport(
        rows_moved=total_rows,
        staging_files=len(staged),
        wall_time_ms=(time.monotonic() - start) * 1000,
    )


def _remove_job_dir(job_dir: Path) -> None:
    shutil.rmtree(job_dir, ignore_errors=True)
