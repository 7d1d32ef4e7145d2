"""Schema inference over heterogeneous document collections.

Inference folds every document's top-level fields through a widening
join: Int32 < Int64 < Double form a numeric chain, any other mixed pair
widens to Text.  A field that is Null in every document where it appears
gets the Null type; those columns cannot exist in a warehouse table and
are removed by ``remove_null_schema`` before DDL.

``FieldType`` is the document-side type (one tag per DocValue shape);
``WarehouseType`` is the column type of the warehouse.  ``map_type``
bridges the two: Array and Object columns become STRING (their values
are serialized to canonical JSON text when rows are built).
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .errors import ConnectorError
from .values import DocValue, Document, Tag

FieldType = Tag

_NUMERIC_CHAIN = (Tag.INT32, Tag.INT64, Tag.DOUBLE)

_IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\Z")


def check_ident(name: str, what: str = "identifier") -> str:
    """Validate a database/table/collection name."""
    if not isinstance(name, str) or len(name) > 64 or not _IDENT_RE.match(name):
        raise ConnectorError("E_TYPE", f"invalid {what}: {name!r}")
    return name


def join_types(a: Tag, b: Tag) -> Tag:
    """Least upper bound of two non-Null field types under widening."""
    if a == b:
        return a
    if a in _NUMERIC_CHAIN and b in _NUMERIC_CHAIN:
        return max(a, b, key=_NUMERIC_CHAIN.index)
    return Tag.TEXT


@dataclass(frozen=True)
class ColumnSpec:
    name: str
    ftype: Tag


@dataclass(frozen=True)
class InferredSchema:
    columns: tuple[ColumnSpec, ...] = ()

    def as_map(self) -> dict[str, Tag]:
        return {c.name: c.ftype for c in self.columns}

    def names(self) -> list[str]:
        return [c.name for c in self.columns]


def infer_schema(docs) -> InferredSchema:
    """One column per distinct top-level field, in first-appearance order.

    A column's type is the widening join of all its non-Null occurrences;
    it stays Null only when no document ever gives the field a type.
    Documents missing the field do not affect it.
    """
    order: list[str] = []
    types: dict[str, Tag] = {}
    for doc in docs:
        root = doc.root if isinstance(doc, Document) else doc
        for name, value in root.fields():
            if name not in types:
                order.append(name)
                types[name] = value.tag
            elif value.tag == Tag.NULL:
                pass
            elif types[name] == Tag.NULL:
                types[name] = value.tag
            else:
                types[name] = join_types(types[name], value.tag)
    return InferredSchema(tuple(ColumnSpec(n, types[n]) for n in order))


def remove_null_schema(schema: InferredSchema) -> InferredSchema:
    """Drop Null-typed columns, preserving the order of the survivors."""
    return InferredSchema(tuple(c for c in schema.columns if c.ftype != Tag.NULL))


_TYPE_KINDS = (
    "BOOLEAN", "TINYINT", "SMALLINT", "INT", "BIGINT", "FLOAT",
    "DOUBLE", "DECIMAL", "CHAR", "STRING", "TIMESTAMP", "BINARY",
)

_TYPE_RE = re.compile(r"([A-Za-z]+)\s*(?:\(\s*(\d+)\s*(?:,\s*(\d+)\s*)?\))?\Z")


@dataclass(frozen=True)
class WarehouseType:
    """A warehouse column type; DECIMAL and CHAR carry parameters."""

    kind: str
    params: tuple[int, ...] = field(default=())

    def __post_init__(self):
        if self.kind not in _TYPE_KINDS:
            raise ConnectorError("E_BAD_META", f"unknown column type {self.kind!r}")
        want = 2 if self.kind == "DECIMAL" else 1 if self.kind == "CHAR" else 0
        if len(self.params) != want:
            raise ConnectorError(
                "E_BAD_META", f"{self.kind} takes {want} parameter(s), got {self.params}"
            )

    def render(self) -> str:
        if self.params:
            return f"{self.kind}({','.join(str(p) for p in self.params)})"
        return self.kind

    def __str__(self) -> str:
        return self.render()

    @classmethod
    def parse(cls, text: str) -> "WarehouseType":
        m = _TYPE_RE.match(text.strip())
        if not m:
            raise ConnectorError("E_BAD_META", f"cannot parse column type {text!r}")
        kind = m.group(1).upper()
        params = tuple(int(g) for g in m.groups()[1:] if g is not None)
        return cls(kind, params)


_TAG_TO_WAREHOUSE = {
    Tag.BOOLEAN: "BOOLEAN",
    Tag.INT32: "INT",
    Tag.INT64: "BIGINT",
    Tag.DOUBLE: "DOUBLE",
    Tag.TEXT: "STRING",
    Tag.TIMESTAMP: "TIMESTAMP",
    Tag.BINARY: "BINARY",
    Tag.ARRAY: "STRING",
    Tag.OBJECT: "STRING",
}


def map_type(ftype: Tag) -> WarehouseType:
    """Warehouse type for a non-Null field type; total over non-Null tags."""
    if ftype == Tag.NULL:
        raise ConnectorError("E_NULL_TYPE", "Null-typed column has no warehouse type")
    return WarehouseType(_TAG_TO_WAREHOUSE[ftype])


def flatten_schema(schema: InferredSchema) -> list[str]:
    """Render one ``<name>;<TYPE>`` string per column."""
    for c in schema.columns:
        if c.ftype == Tag.NULL:
            raise ConnectorError("E_NULL_COLUMN", f"column {c.name!r} is Null-typed")
    return [f"{c.name};{map_type(c.ftype).render()}" for c in schema.columns]


def coerce_for_column(value: DocValue, wtype: WarehouseType, column: str) -> DocValue:
    """Convert a document value to the shape a warehouse column stores.

    Nulls pass through (SQL NULL).  Numeric values widen to the declared
    width; values in a STRING column that are not already text serialize
    to canonical JSON.  Anything else incompatible raises E_TYPE.
    """
    from .values import to_canonical_json

    if value.tag == Tag.NULL:
        return value
    kind = value.tag
    k = wtype.kind
    if k == "BOOLEAN" and kind == Tag.BOOLEAN:
        return value
    if k in ("TINYINT", "SMALLINT", "INT") and kind in (Tag.INT32, Tag.INT64):
        lo, hi = {
            "TINYINT": (-(2**7), 2**7 - 1),
            "SMALLINT": (-(2**15), 2**15 - 1),
            "INT": (-(2**31), 2**31 - 1),
        }[k]
        if not lo <= value.value <= hi:
            raise ConnectorError("E_TYPE", f"column {column}: {value.value} out of {k} range")
        return DocValue.int32(value.value)
    if k == "BIGINT" and kind in (Tag.INT32, Tag.INT64):
        return DocValue.int64(value.value)
    if k in ("FLOAT", "DOUBLE") and kind in (Tag.INT32, Tag.INT64, Tag.DOUBLE):
        return DocValue.double(float(value.value))
    if k == "DECIMAL" and kind in (Tag.INT32, Tag.INT64, Tag.DOUBLE, Tag.TEXT):
        return value
    if k == "CHAR" and kind == Tag.TEXT:
        if len(value.value) > wtype.params[0]:
            raise ConnectorError("E_TYPE", f"column {column}: text longer than CHAR({wtype.params[0]})")
        return value
    if k == "STRING":
        if kind == Tag.TEXT:
            return value
        return DocValue.text(to_canonical_json(value))
    if k == "TIMESTAMP" and kind == Tag.TIMESTAMP:
        return value
    if k == "BINARY" and kind == Tag.BINARY:
        return value
    raise ConnectorError(
        "E_TYPE", f"column {column}: {kind.name} value not compatible with {wtype.render()}"
    )


def decode_for_column(value: DocValue, wtype: WarehouseType) -> DocValue:
    """Fix up a value decoded from canonical JSON against its declared type.

    JSON cannot mark 64-bit integers, so small BIGINT values decode as
    Int32 and need widening back.
    """
    if value.tag == Tag.INT32 and wtype.kind == "BIGINT":
        return DocValue.int64(value.value)
    return value
