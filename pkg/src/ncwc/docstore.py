"""Embedded schemaless document store.

Databases are directories under the store root, collections are
JSON-lines files (`<root>/<db>/<collection>.jsonl`, one canonical-JSON
document per line).  Both are created on first insert.  The only read
is a full scan in insertion order; a scan snapshots the file length at
open, so it never observes inserts that start afterwards.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path

from .errors import ConnectorError
from .schema import check_ident
from .values import Document, from_canonical_json, to_canonical_json


@dataclass(frozen=True)
class CollectionRef:
    database: str
    collection: str

    def __post_init__(self):
        check_ident(self.database, "database name")
        check_ident(self.collection, "collection name")

    def __str__(self) -> str:
        return f"{self.database}.{self.collection}"


class DocStore:
    """Document store rooted at a directory."""

    def __init__(self, root_dir):
        self.root_dir = Path(root_dir)
        self.root_dir.mkdir(parents=True, exist_ok=True)

    def _path(self, ref: CollectionRef) -> Path:
        return self.root_dir / ref.database / f"{ref.collection}.jsonl"

    def insert_many(self, ref: CollectionRef, docs) -> int:
        """Append documents; all-or-nothing on duplicate ``_id``."""
        docs = [d if isinstance(d, Document) else Document.from_py(d) for d in docs]
        seen = set(self._existing_ids(ref))
        for doc in docs:
            if doc.id in seen:
                raise ConnectorError("E_DUP_ID", f"duplicate _id {doc.id!r} in {ref}")
            seen.add(doc.id)
        path = self._path(ref)
        path.parent.mkdir(parents=True, exist_ok=True)
        lines = "".join(to_canonical_json(doc.root) + "\n" for doc in docs)
        try:
            with open(path, "a", encoding="utf-8") as fh:
                fh.write(lines)
                fh.flush()
                os.fsync(fh.fileno())
        except OSError as exc:
            raise ConnectorError("E_IO", f"cannot write {path}: {exc}") from exc
        return len(docs)

    def _existing_ids(self, ref: CollectionRef):
        path = self._path(ref)
        if not path.exists():
            return
        for doc in self.scan(ref):
            yield doc.id

    def scan(self, ref: CollectionRef):
        """Yield every document once, in insertion order."""
        path = self._path(ref)
        if not path.exists():
            raise ConnectorError("E_NO_COLLECTION", f"no collection {ref}")
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.readlines()
        for line in lines:
            line = line.strip()
            if line:
                yield Document(from_canonical_json(line))

    def has_collection(self, ref: CollectionRef) -> bool:
        return self._path(ref).exists()

    def list_databases(self) -> list[str]:
        return sorted(p.name for p in self.root_dir.iterdir() if p.is_dir())

    def list_collections(self, database: str) -> list[str]:
        db_dir = self.root_dir / check_ident(database, "database name")
        if not db_dir.is_dir():
            raise ConnectorError("E_NO_DATABASE", f"no database {database!r}")
        return sorted(p.stem for p in db_dir.glob("*.jsonl"))

    def drop_collection(self, ref: CollectionRef) -> bool:
        path = self._path(ref)
        if not path.exists():
            return False
        path.unlink()
        return True
