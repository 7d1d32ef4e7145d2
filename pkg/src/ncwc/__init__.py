"""Embedded document-store to columnar-warehouse connector."""

from .docstore import CollectionRef, DocStore
from .errors import ConnectorError, ParseError
from .interchange import (
    InputSplit,
    RecordBatch,
    TransferReport,
    commit_load,
    fetch_split,
    parallel_read,
    plan_splits,
    stage_write,
)
from .jobs import JobKind, JobSpec, run_benchmark, run_job
from .schema import (
    InferredSchema,
    WarehouseType,
    flatten_schema,
    infer_schema,
    map_type,
    remove_null_schema,
)
from .session import Session, SessionConfig, build_session
from .streaming import StreamSink, run_stream
from .values import DocValue, Document, Tag, canonical_decode, canonical_encode
from .warehouse import SaveMode, TableMeta, Warehouse

__all__ = [
    "CollectionRef",
    "ConnectorError",
    "DocStore",
    "DocValue",
    "Document",
    "InferredSchema",
    "InputSplit",
    "JobKind",
    "JobSpec",
    "ParseError",
    "RecordBatch",
    "SaveMode",
    "Session",
    "SessionConfig",
    "StreamSink",
    "TableMeta",
    "Tag",
    "TransferReport",
    "Warehouse",
    "WarehouseType",
    "build_session",
    "canonical_decode",
    "canonical_encode",
    "commit_load",
    "fetch_split",
    "flatten_schema",
    "infer_schema",
    "map_type",
    "parallel_read",
    "plan_splits",
    "remove_null_schema",
    "run_benchmark",
    "run_job",
    "run_stream",
    "stage_write",
]
