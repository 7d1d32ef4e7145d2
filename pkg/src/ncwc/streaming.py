"""Micro-batch streaming sink.

Each micro-batch is one warehouse transaction: begin, write the batch's
rows as uncommitted segments, commit to make them visible atomically.
Batch ids ride along on the BEGIN and COMMIT records, which gives replay
protection: after recovery the sink rebuilds the highest committed batch
id from the log and turns any batch at or below it into a no-op.

The sink appends only; it never plans splits or touches the read path.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ConnectorError
from .warehouse import SaveMode, Txn, Warehouse


@dataclass
class BatchHandle:
    """One micro-batch in flight; ``txn`` is None for replayed batches."""

    batch_id: int
    txn: Txn | None

    @property
    def duplicate(self) -> bool:
        return self.txn is None


class StreamSink:
    def __init__(self, warehouse: Warehouse, database: str, table: str):
        warehouse.meta(database, table)
        self.warehouse = warehouse
        self.database = database
        self.table = table

    def last_committed_batch_id(self) -> int:
        """Highest batch id among COMMIT records, or -1 before any."""
        best = -1
        for record in self.warehouse.read_log(self.database, self.table):
            if record.state == "COMMIT" and record.batch_id is not None:
                best = max(best, record.batch_id)
        return best

    def begin_batch(self, batch_id: int) -> BatchHandle:
        if batch_id < 0:
            raise ConnectorError("E_TYPE", "batch_id must be >= 0")
        if batch_id <= self.last_committed_batch_id():
            return BatchHandle(batch_id, None)
        txn = self.warehouse.begin(self.database, self.table, batch_id=batch_id)
        return BatchHandle(batch_id, txn)

    def write_batch(self, handle: BatchHandle, rows) -> int:
        if handle.duplicate:
            return 0
        return self.warehouse.write_rows(handle.txn, rows, SaveMode.APPEND)

    def commit_batch(self, handle: BatchHandle) -> None:
        if not handle.duplicate:
            handle.txn.commit()

    def abort_batch(self, handle: BatchHandle) -> None:
        if not handle.duplicate:
            handle.txn.abort()


def _chunks(source, max_rows_per_batch: int):
    """Flatten row groups and re-cut them into batches of at most
    max_rows_per_batch rows; a group boundary never splits a row."""
    pending: list = []
    for group in source:
        for row in group:
            pending.append(row)
            if len(pending) == max_rows_per_batch:
                yield pending
                pending = []
    if pending:
        yield pending


def run_stream(source, sink: StreamSink, max_rows_per_batch: int) -> int:
    """Drive the sink over the source, one transaction per micro-batch.

    Batches are numbered from 0, so re-running the same source over a
    recovered sink replays committed batches as no-ops.  A failure inside
    a batch aborts that batch and stops the stream; rows committed so far
    are returned.  No transaction is ever left open.
    """
    if max_rows_per_batch < 1:
        raise ConnectorError("E_TYPE", "max_rows_per_batch must be >= 1")
    committed = 0
    for batch_id, rows in enumerate(_chunks(source, max_rows_per_batch)):
        handle = sink.begin_batch(batch_id)
        try:
            sink.write_batch(handle, rows)
            sink.commit_batch(handle)
        except Exception:
            if not (handle.duplicate or handle.txn.closed):
                sink.abort_batch(handle)
            return committed
        if not handle.duplicate:
            committed += len(rows)
    return committed
