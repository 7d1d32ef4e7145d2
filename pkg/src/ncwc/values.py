"""Dynamically typed document values and their two canonical encodings.

A ``DocValue`` is a tagged value tree (the rough shape of a BSON value):
Null, Boolean, Int32, Int64, Double, Text, Timestamp (epoch milliseconds,
UTC), Binary, Array, Object.  A ``Document`` is an Object with a mandatory
``_id`` text field.

Two encodings are defined here and used everywhere else:

* ``canonical_encode`` / ``canonical_decode``: an injective binary form
  (tag byte + big-endian payload) used by the bucketing hash.
* ``to_canonical_json`` / ``from_canonical_json``: deterministic JSON text
  (sorted object keys, no insignificant whitespace) used for files on
  disk and wherever a complex value becomes a STRING column.  Timestamps
  render as ``{"$ts": n}`` and binary as ``{"$bin": "<base64>"}`` so they
  stay distinguishable from plain integers and strings; those two keys
  are reserved and must not be used as single-key object field names.

JSON cannot tell a 32-bit integer from a 64-bit one, so decoding maps an
integer to Int32 when it fits in signed 32 bits and to Int64 otherwise.
Double equality is bit-level: -0.0 and 0.0 are distinct values (they
encode differently), NaN equals NaN.
"""

from __future__ import annotations

import base64
import enum
import json
import struct
import uuid
from typing import Any, Iterable, Iterator

from .errors import ConnectorError

_INT32_MIN = -(2**31)
_INT32_MAX = 2**31 - 1
_INT64_MIN = -(2**63)
_INT64_MAX = 2**63 - 1


class Tag(enum.IntEnum):
    """Type tag of a document value; the numeric value is the encoding tag byte."""

    NULL = 0
    BOOLEAN = 1
    INT32 = 2
    INT64 = 3
    DOUBLE = 4
    TEXT = 5
    TIMESTAMP = 6
    BINARY = 7
    ARRAY = 8
    OBJECT = 9


def check_field_name(name: str) -> str:
    """Validate an object field name: non-empty, no ';' and no '.'."""
    if not isinstance(name, str) or not name:
        raise ConnectorError("E_TYPE", "field name must be a non-empty string")
    if ";" in name or "." in name:
        raise ConnectorError("E_TYPE", f"field name {name!r} contains ';' or '.'")
    return name


class DocValue:
    """Immutable tagged document value.

    ``value`` holds the payload for the tag: None, bool, int, float, str,
    bytes, a tuple of DocValue (Array) or a tuple of (name, DocValue)
    pairs in insertion order (Object).
    """

    __slots__ = ("tag", "value")

    def __init__(self, tag: Tag, value: Any = None):
        if tag == Tag.NULL:
            value = None
        elif tag == Tag.BOOLEAN:
            if not isinstance(value, bool):
                raise ConnectorError("E_TYPE", f"Boolean needs bool, got {value!r}")
        elif tag in (Tag.INT32, Tag.INT64, Tag.TIMESTAMP):
            if isinstance(value, bool) or not isinstance(value, int):
                raise ConnectorError("E_TYPE", f"{tag.name} needs int, got {value!r}")
            lo, hi = (_INT32_MIN, _INT32_MAX) if tag == Tag.INT32 else (_INT64_MIN, _INT64_MAX)
            if not lo <= value <= hi:
                raise ConnectorError("E_TYPE", f"{tag.name} out of range: {value}")
        elif tag == Tag.DOUBLE:
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ConnectorError("E_TYPE", f"Double needs float, got {value!r}")
            value = float(value)
        elif tag == Tag.TEXT:
            if not isinstance(value, str):
                raise ConnectorError("E_TYPE", f"Text needs str, got {value!r}")
        elif tag == Tag.BINARY:
            if not isinstance(value, (bytes, bytearray)):
                raise ConnectorError("E_TYPE", f"Binary needs bytes, got {value!r}")
            value = bytes(value)
        elif tag == Tag.ARRAY:
            value = tuple(value)
            for item in value:
                if not isinstance(item, DocValue):
                    raise ConnectorError("E_TYPE", f"Array item must be DocValue, got {item!r}")
        elif tag == Tag.OBJECT:
            pairs = tuple((k, v) for k, v in value)
            seen = set()
            for name, item in pairs:
                check_field_name(name)
                if name in seen:
                    raise ConnectorError("E_TYPE", f"duplicate field name {name!r}")
                seen.add(name)
                if not isinstance(item, DocValue):
                    raise ConnectorError("E_TYPE", f"Object value must be DocValue, got {item!r}")
            value = pairs
        else:
            raise ConnectorError("E_TYPE", f"unknown tag {tag!r}")
        object.__setattr__(self, "tag", tag)
        object.__setattr__(self, "value", value)

    def __setattr__(self, name, val):
        raise AttributeError("DocValue is immutable")

    @classmethod
    def _trusted(cls, tag: Tag, value) -> "DocValue":
        # Skips __init__ validation; only for decode paths whose dispatch
        # already proved the payload shape.  Hot: runs once per value.
        v = object.__new__(cls)
        object.__setattr__(v, "tag", tag)
        object.__setattr__(v, "value", value)
        return v

    # Equality ignores Object field order (the canonical encodings sort
    # keys, so order-insensitive equality keeps "equal values, identical
    # bytes" true) and compares doubles bit for bit.
    def _key(self):
        if self.tag == Tag.DOUBLE:
            return (int(self.tag), struct.pack(">d", self.value))
        if self.tag == Tag.ARRAY:
            return (int(self.tag), tuple(v._key() for v in self.value))
        if self.tag == Tag.OBJECT:
            return (int(self.tag), tuple(sorted((k, v._key()) for k, v in self.value)))
        return (int(self.tag), self.value)

    def __eq__(self, other):
        if not isinstance(other, DocValue):
            return NotImplemented
        return self._key() == other._key()

    def __hash__(self):
        return hash(self._key())

    def __repr__(self):
        return f"DocValue({self.tag.name}, {self.value!r})"

    # -- constructors -------------------------------------------------

    @classmethod
    def null(cls) -> "DocValue":
        return _NULL

    @classmethod
    def boolean(cls, b: bool) -> "DocValue":
        return cls(Tag.BOOLEAN, b)

    @classmethod
    def int32(cls, n: int) -> "DocValue":
        return cls(Tag.INT32, n)

    @classmethod
    def int64(cls, n: int) -> "DocValue":
        return cls(Tag.INT64, n)

    @classmethod
    def double(cls, x: float) -> "DocValue":
        return cls(Tag.DOUBLE, x)

    @classmethod
    def text(cls, s: str) -> "DocValue":
        return cls(Tag.TEXT, s)

    @classmethod
    def timestamp(cls, ms: int) -> "DocValue":
        return cls(Tag.TIMESTAMP, ms)

    @classmethod
    def binary(cls, b: bytes) -> "DocValue":
        return cls(Tag.BINARY, b)

    @classmethod
    def array(cls, items: Iterable["DocValue"]) -> "DocValue":
        return cls(Tag.ARRAY, items)

    @classmethod
    def object(cls, fields) -> "DocValue":
        """Build an Object from a dict or an iterable of (name, DocValue) pairs."""
        if isinstance(fields, dict):
            fields = fields.items()
        return cls(Tag.OBJECT, fields)

    @classmethod
    def from_py(cls, obj: Any) -> "DocValue":
        """Map a plain Python object to a DocValue.

        Integers become Int32 when they fit in signed 32 bits, Int64
        otherwise.  Timestamps and binary cannot be expressed as plain
        Python scalars here; pass DocValue instances for those.
        """
        if isinstance(obj, DocValue):
            return obj
        if obj is None:
            return _NULL
        if isinstance(obj, bool):
            return cls(Tag.BOOLEAN, obj)
        if isinstance(obj, int):
            tag = Tag.INT32 if _INT32_MIN <= obj <= _INT32_MAX else Tag.INT64
            return cls(tag, obj)
        if isinstance(obj, float):
            return cls(Tag.DOUBLE, obj)
        if isinstance(obj, str):
            return cls(Tag.TEXT, obj)
        if isinstance(obj, (bytes, bytearray)):
            return cls(Tag.BINARY, obj)
        if isinstance(obj, (list, tuple)):
            return cls(Tag.ARRAY, tuple(cls.from_py(v) for v in obj))
        if isinstance(obj, dict):
            return cls(Tag.OBJECT, tuple((k, cls.from_py(v)) for k, v in obj.items()))
        raise ConnectorError("E_TYPE", f"cannot convert {type(obj).__name__} to DocValue")

    def to_py(self) -> Any:
        """Inverse of from_py for scalars; Timestamp/Binary stay wrapped dicts."""
        if self.tag == Tag.ARRAY:
            return [v.to_py() for v in self.value]
        if self.tag == Tag.OBJECT:
            return {k: v.to_py() for k, v in self.value}
        if self.tag == Tag.TIMESTAMP:
            return {"$ts": self.value}
        if self.tag == Tag.BINARY:
            return {"$bin": base64.b64encode(self.value).decode("ascii")}
        return self.value

    def fields(self) -> Iterator[tuple[str, "DocValue"]]:
        if self.tag != Tag.OBJECT:
            raise ConnectorError("E_TYPE", "fields() requires an Object value")
        return iter(self.value)

    def get(self, name: str) -> "DocValue | None":
        if self.tag != Tag.OBJECT:
            raise ConnectorError("E_TYPE", "get() requires an Object value")
        for k, v in self.value:
            if k == name:
                return v
        return None


_NULL = DocValue(Tag.NULL)


class Document:
    """An Object value carrying a mandatory text ``_id``."""

    __slots__ = ("root", "id")

    def __init__(self, root: DocValue):
        if root.tag != Tag.OBJECT:
            raise ConnectorError("E_TYPE", "document root must be an Object")
        ident = root.get("_id")
        if ident is None or ident.tag != Tag.TEXT:
            raise ConnectorError("E_TYPE", "document needs a Text '_id' field")
        object.__setattr__(self, "root", root)
        object.__setattr__(self, "id", ident.value)

    def __setattr__(self, name, val):
        raise AttributeError("Document is immutable")

    def __eq__(self, other):
        if not isinstance(other, Document):
            return NotImplemented
        return self.root == other.root

    def __hash__(self):
        return hash(self.root)

    def __repr__(self):
        return f"Document({self.root!r})"

    @classmethod
    def from_value(cls, root: DocValue, generate_id: bool = False) -> "Document":
        """Wrap an Object value as a Document, minting a UUIDv4 ``_id`` if asked."""
        if generate_id and root.tag == Tag.OBJECT and root.get("_id") is None:
            fields = (("_id", DocValue.text(str(uuid.uuid4()))),) + root.value
            root = DocValue(Tag.OBJECT, fields)
        return cls(root)

    @classmethod
    def from_py(cls, obj: dict, generate_id: bool = True) -> "Document":
        return cls.from_value(DocValue.from_py(obj), generate_id=generate_id)


# -- binary canonical encoding ----------------------------------------


def canonical_encode(v: DocValue) -> bytes:
    """Injective binary encoding: tag byte, then a fixed-width or
    length-prefixed big-endian payload; object keys in code-point order."""
    out = bytearray()
    _encode_into(v, out)
    return bytes(out)


def _encode_into(v: DocValue, out: bytearray) -> None:
    out.append(int(v.tag))
    tag = v.tag
    if tag == Tag.NULL:
        return
    if tag == Tag.BOOLEAN:
        out.append(1 if v.value else 0)
    elif tag == Tag.INT32:
        out += struct.pack(">i", v.value)
    elif tag in (Tag.INT64, Tag.TIMESTAMP):
        out += struct.pack(">q", v.value)
    elif tag == Tag.DOUBLE:
        out += struct.pack(">d", v.value)
    elif tag == Tag.TEXT:
        raw = v.value.encode("utf-8")
        out += struct.pack(">I", len(raw))
        out += raw
    elif tag == Tag.BINARY:
        out += struct.pack(">I", len(v.value))
        out += v.value
    elif tag == Tag.ARRAY:
        out += struct.pack(">I", len(v.value))
        for item in v.value:
            _encode_into(item, out)
    elif tag == Tag.OBJECT:
        entries = sorted(v.value, key=lambda kv: kv[0])
        out += struct.pack(">I", len(entries))
        for name, item in entries:
            raw = name.encode("utf-8")
            out += struct.pack(">I", len(raw))
            out += raw
            _encode_into(item, out)


def canonical_decode(data: bytes) -> DocValue:
    """Inverse of canonical_encode; rejects trailing bytes."""
    v, pos = _decode_at(data, 0)
    if pos != len(data):
        raise ConnectorError("E_TYPE", f"{len(data) - pos} trailing bytes after value")
    return v


def _decode_at(data: bytes, pos: int) -> tuple[DocValue, int]:
    try:
        tag = Tag(data[pos])
    except (ValueError, IndexError):
        raise ConnectorError("E_TYPE", f"bad tag byte at offset {pos}")
    pos += 1
    if tag == Tag.NULL:
        return _NULL, pos
    if tag == Tag.BOOLEAN:
        return DocValue(tag, data[pos] != 0), pos + 1
    if tag == Tag.INT32:
        return DocValue(tag, struct.unpack_from(">i", data, pos)[0]), pos + 4
    if tag in (Tag.INT64, Tag.TIMESTAMP):
        return DocValue(tag, struct.unpack_from(">q", data, pos)[0]), pos + 8
    if tag == Tag.DOUBLE:
        return DocValue(tag, struct.unpack_from(">d", data, pos)[0]), pos + 8
    if tag in (Tag.TEXT, Tag.BINARY):
        n = struct.unpack_from(">I", data, pos)[0]
        pos += 4
        raw = data[pos : pos + n]
        if len(raw) != n:
            raise ConnectorError("E_TYPE", "truncated payload")
        pos += n
        return DocValue(tag, raw.decode("utf-8") if tag == Tag.TEXT else raw), pos
    if tag == Tag.ARRAY:
        n = struct.unpack_from(">I", data, pos)[0]
        pos += 4
        items = []
        for _ in range(n):
            item, pos = _decode_at(data, pos)
            items.append(item)
        return DocValue(tag, tuple(items)), pos
    # OBJECT
    n = struct.unpack_from(">I", data, pos)[0]
    pos += 4
    pairs = []
    for _ in range(n):
        klen = struct.unpack_from(">I", data, pos)[0]
        pos += 4
        key = data[pos : pos + klen].decode("utf-8")
        pos += klen
        item, pos = _decode_at(data, pos)
        pairs.append((key, item))
    return DocValue(tag, tuple(pairs)), pos


# -- canonical JSON text -----------------------------------------------


def _to_jsonable(v: DocValue) -> Any:
    tag = v.tag
    if tag in (Tag.NULL, Tag.BOOLEAN, Tag.INT32, Tag.INT64, Tag.TEXT):
        return v.value
    if tag == Tag.DOUBLE:
        if v.value != v.value or v.value in (float("inf"), float("-inf")):
            raise ConnectorError("E_TYPE", "NaN/Inf have no canonical JSON form")
        return v.value
    if tag == Tag.TIMESTAMP:
        return {"$ts": v.value}
    if tag == Tag.BINARY:
        return {"$bin": base64.b64encode(v.value).decode("ascii")}
    if tag == Tag.ARRAY:
        return [_to_jsonable(item) for item in v.value]
    return {k: _to_jsonable(item) for k, item in v.value}


def to_canonical_json(v: DocValue) -> str:
    """Deterministic JSON text: sorted keys, no whitespace, UTF-8 verbatim."""
    return json.dumps(
        _to_jsonable(v), sort_keys=True, separators=(",", ":"),
        ensure_ascii=False, allow_nan=False,
    )


def _from_jsonable(obj: Any) -> DocValue:
    if obj is None:
        return _NULL
    if isinstance(obj, bool):
        return DocValue._trusted(Tag.BOOLEAN, obj)
    if isinstance(obj, int):
        if _INT32_MIN <= obj <= _INT32_MAX:
            return DocValue._trusted(Tag.INT32, obj)
        return DocValue(Tag.INT64, obj)
    if isinstance(obj, float):
        return DocValue._trusted(Tag.DOUBLE, obj)
    if isinstance(obj, str):
        return DocValue._trusted(Tag.TEXT, obj)
    if isinstance(obj, list):
        return DocValue._trusted(Tag.ARRAY, tuple(_from_jsonable(v) for v in obj))
    if isinstance(obj, dict):
        if len(obj) == 1:
            if "$ts" in obj and isinstance(obj["$ts"], int):
                return DocValue(Tag.TIMESTAMP, obj["$ts"])
            if "$bin" in obj and isinstance(obj["$bin"], str):
                return DocValue(Tag.BINARY, base64.b64decode(obj["$bin"]))
        # json.loads guarantees unique keys; names still need vetting
        fields = []
        for k, v in obj.items():
            check_field_name(k)
            fields.append((k, _from_jsonable(v)))
        return DocValue._trusted(Tag.OBJECT, tuple(fields))
    raise ConnectorError("E_TYPE", f"cannot decode JSON value {obj!r}")


def from_canonical_json(text: str) -> DocValue:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConnectorError("E_TYPE", f"bad JSON: {exc}") from exc
    return _from_jsonable(obj)
