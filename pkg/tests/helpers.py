"""Shared test utilities, most importantly an independent replay oracle
that reconstructs visible table rows straight from the transaction log
and segment files, without going through the warehouse code under test.
"""

from __future__ import annotations

import json
from pathlib import Path

from ncwc.values import DocValue, Tag, to_canonical_json


def oracle_scan_lines(table_dir: Path) -> list[str]:
    """Visible rows as canonical-JSON text lines, derived by hand.

    Replays `_txn.log` (stopping at the first malformed line), keeps the
    commits with the OVERWRITE barrier applied, then reads the raw row
    lines of each referenced segment file in (txn_id, segment_id) order.
    """
    table_dir = Path(table_dir)
    commits: list[dict] = []
    log = table_dir / "_txn.log"
    if log.exists():
        with open(log, "r", encoding="utf-8") as fh:
            for line in fh:
                if not line.endswith("\n"):
                    break
                try:
                    rec = json.loads(line)
                except json.JSONDecodeError:
                    break
                if not isinstance(rec, dict) or rec.get("state") not in (
                    "BEGIN",
                    "COMMIT",
                    "ABORT",
                ):
                    break
                if rec["state"] == "COMMIT":
                    if rec["op"] == "OVERWRITE":
                        commits = [rec]
                    else:
                        commits.append(rec)
    files = {}
    for path in table_dir.rglob("*.ncwc"):
        _, _, segment_id = path.name[: -len(".ncwc")].partition("-")
        files[segment_id] = path
    lines: list[str] = []
    for rec in sorted(commits, key=lambda r: r["txn_id"]):
        for segment_id in sorted(rec["segments"]):
            body = files[segment_id].read_text(encoding="utf-8").splitlines()
            lines.extend(line for line in body[1:] if line.strip())
    return lines


def scan_as_lines(warehouse, database: str, name: str) -> list[str]:
    return [
        to_canonical_json(DocValue.array(row))
        for row in warehouse.scan_table(database, name)
    ]


def int_row(*values) -> list[DocValue]:
    return [DocValue.from_py(v) for v in values]


# -- independent oracle for the document round trip ----------------------

_CHAIN = {Tag.INT32: 0, Tag.INT64: 1, Tag.DOUBLE: 2}


def _joined_types(docs) -> dict[str, Tag]:
    types: dict[str, Tag] = {}
    for document in docs:
        for name, value in document.root.value:
            if value.tag == Tag.NULL:
                continue
            if name not in types:
                types[name] = value.tag
            elif types[name] != value.tag:
                a, b = types[name], value.tag
                if a in _CHAIN and b in _CHAIN:
                    types[name] = a if _CHAIN[a] >= _CHAIN[b] else b
                else:
                    types[name] = Tag.TEXT
    return types


def _convert(value: DocValue, target: Tag) -> DocValue:
    # Arrays and objects land in text columns, so they come back as
    # their canonical JSON rendering even when every document agreed.
    if target in (Tag.ARRAY, Tag.OBJECT):
        return DocValue.text(to_canonical_json(value))
    if value.tag == target:
        return value
    if target == Tag.INT64 and value.tag == Tag.INT32:
        return DocValue.int64(value.value)
    if target == Tag.DOUBLE and value.tag in (Tag.INT32, Tag.INT64):
        return DocValue.double(float(value.value))
    if target == Tag.TEXT:
        return DocValue.text(to_canonical_json(value))
    raise AssertionError(f"oracle cannot convert {value.tag} to {target}")


def expected_round_trip(docs) -> list[str]:
    """Canonical JSON multiset the collection should equal after a trip
    through the warehouse: values widened to the joined column type,
    null fields omitted, order forgotten."""
    types = _joined_types(docs)
    out = []
    for document in docs:
        fields = [
            (name, _convert(value, types[name]))
            for name, value in document.root.value
            if value.tag != Tag.NULL
        ]
        out.append(to_canonical_json(DocValue.object(fields)))
    return sorted(out)


def collection_lines(store, ref) -> list[str]:
    return sorted(to_canonical_json(d.root) for d in store.scan(ref))
