"""Core domain model: dataset schemas, resources, records and their validation.

Everything here is an immutable value object. The schema a user defines is
the contract every stored record must satisfy, and `validate_schema` /
`conform_record` are the two pure functions that enforce it. All other
modules (rules, transform, store, API) share these types and their canonical
JSON shapes.

Canonical value formats, used everywhere a typed value is serialized:

* string    -> as-is
* integer   -> decimal digits, optional leading ``-``
* float     -> shortest round-trip repr, ``.`` decimal separator
* boolean   -> ``true`` / ``false``
* date      -> ISO-8601 ``YYYY-MM-DD``
* datetime  -> ISO-8601 UTC with ``Z`` suffix
* null      -> JSON ``null``; empty field in CSV
"""

from __future__ import annotations

import re
import secrets
import time
from dataclasses import dataclass, field, replace
from datetime import date, datetime, timezone
from enum import Enum
from typing import TYPE_CHECKING, Any, Iterable, Mapping, Optional

if TYPE_CHECKING:  # pragma: no cover - only for annotations
    from .rules import RuleSet

__all__ = [
    "Datatype",
    "AttributeSpec",
    "DatasetSchema",
    "Dataset",
    "ResourcePool",
    "Resource",
    "ResourceOrigin",
    "UploadOrigin",
    "UrlOrigin",
    "CkanLinkOrigin",
    "Provenance",
    "DataRecord",
    "User",
    "SchemaError",
    "validate_schema",
    "conform_record",
    "schema_from_json",
    "new_id",
    "utcnow",
]

IDENTIFIER_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")

# Crockford base32, no I/L/O/U. Keeps ids URL-safe and lexically sortable.
_B32_ALPHABET = "0123456789ABCDEFGHJKMNPQRSTVWXYZ"


def new_id() -> str:
    """Return a fresh 26-char sortable identifier (48-bit ms timestamp + 80 random bits)."""
    value = (int(time.time() * 1000) & (2**48 - 1)) << 80 | secrets.randbits(80)
    chars = []
    for shift in range(125, -1, -5):
        chars.append(_B32_ALPHABET[(value >> shift) & 0x1F])
    return "".join(chars)


def utcnow() -> datetime:
    return datetime.now(timezone.utc)


def timestamp_to_json(ts: Optional[datetime]) -> Optional[str]:
    if ts is None:
        return None
    ts = ts.astimezone(timezone.utc)
    if ts.microsecond:
        return ts.strftime("%Y-%m-%dT%H:%M:%S.%fZ")
    return ts.strftime("%Y-%m-%dT%H:%M:%SZ")


def timestamp_from_json(raw: Optional[str]) -> Optional[datetime]:
    if raw is None:
        return None
    return parse_iso_datetime(raw)


def parse_iso_datetime(raw: str) -> datetime:
    """Parse an ISO-8601 datetime; naive inputs are taken as UTC."""
    text = raw.strip()
    if text.endswith(("Z", "z")):
        text = text[:-1] + "+00:00"
    parsed = datetime.fromisoformat(text)
    if parsed.tzinfo is None:
        parsed = parsed.replace(tzinfo=timezone.utc)
    return parsed.astimezone(timezone.utc)


class Datatype(str, Enum):
    STRING = "string"
    INTEGER = "integer"
    FLOAT = "float"
    BOOLEAN = "boolean"
    DATE = "date"
    DATETIME = "datetime"


_PYTHON_TYPES = {
    Datatype.STRING: str,
    Datatype.INTEGER: int,
    Datatype.FLOAT: float,
    Datatype.BOOLEAN: bool,
    Datatype.DATE: date,
    Datatype.DATETIME: datetime,
}


class SchemaError(ValueError):
    """Raised when a schema payload cannot even be constructed."""

    def __init__(self, violations: list[str]):
        super().__init__("; ".join(violations))
        self.violations = violations


@dataclass(frozen=True)
class AttributeSpec:
    """One column of the user-defined target structure."""

    name: str
    datatype: Datatype
    description: str = ""
    required: bool = True
    format_hint: Optional[str] = None

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "description": self.description,
            "datatype": self.datatype.value,
            "required": self.required,
            "format_hint": self.format_hint,
        }


@dataclass(frozen=True)
class DatasetSchema:
    """Ordered attribute list plus a version that bumps on structural change."""

    attributes: tuple[AttributeSpec, ...]
    version: int = 1

    def attribute_names(self) -> list[str]:
        return [a.name for a in self.attributes]

    def get(self, name: str) -> Optional[AttributeSpec]:
        for a in self.attributes:
            if a.name == name:
                return a
        return None

    def to_json(self) -> dict:
        return {
            "attributes": [a.to_json() for a in self.attributes],
            "version": self.version,
        }

    def bump(self, attributes: Iterable[AttributeSpec]) -> "DatasetSchema":
        return DatasetSchema(attributes=tuple(attributes), version=self.version + 1)


def validate_schema(schema: DatasetSchema) -> list[str]:
    """Return every violation in the schema; an empty list means it is valid."""
    violations: list[str] = []
    if not schema.attributes:
        violations.append("empty attribute list")
    seen: set[str] = set()
    for attr in schema.attributes:
        if not attr.name or not IDENTIFIER_RE.match(attr.name):
            violations.append(f"invalid attribute name {attr.name!r}")
        if attr.name in seen:
            violations.append(f"duplicate name {attr.name}")
        seen.add(attr.name)
        if attr.format_hint is not None and attr.datatype not in (
            Datatype.DATE,
            Datatype.DATETIME,
        ):
            violations.append(
                f"format_hint on {attr.name} requires a date or datetime attribute"
            )
    if schema.version < 1:
        violations.append("schema version must be >= 1")
    return violations


def conform_record(values: Mapping[str, Any], schema: DatasetSchema) -> list[str]:
    """Check a raw value map against the schema. Pure; violations are data."""
    violations: list[str] = []
    names = schema.attribute_names()
    for name in names:
        if name not in values:
            violations.append(f"missing {name}")
    for key in values:
        if key not in names:
            violations.append(f"unexpected attribute {key}")
    for attr in schema.attributes:
        if attr.name not in values:
            continue
        value = values[attr.name]
        if value is None:
            if attr.required:
                violations.append(f"null value for required {attr.name}")
            continue
        if not _type_matches(value, attr.datatype):
            violations.append(f"type mismatch: {attr.name}")
    return violations


def _type_matches(value: Any, datatype: Datatype) -> bool:
    # bool is an int subclass and datetime a date subclass; keep them apart.
    if datatype == Datatype.BOOLEAN:
        return type(value) is bool
    if datatype == Datatype.INTEGER:
        return type(value) is int
    if datatype == Datatype.FLOAT:
        return type(value) is float
    if datatype == Datatype.STRING:
        return type(value) is str
    if datatype == Datatype.DATE:
        return isinstance(value, date) and not isinstance(value, datetime)
    if datatype == Datatype.DATETIME:
        return isinstance(value, datetime)
    return False


def schema_from_json(payload: Any) -> DatasetSchema:
    """Build a DatasetSchema from its JSON shape.

    Raises SchemaError listing every structural and semantic violation, so
    API callers can surface them all at once.
    """
    violations: list[str] = []
    if not isinstance(payload, dict):
        raise SchemaError(["schema must be an object"])
    raw_attrs = payload.get("attributes")
    if not isinstance(raw_attrs, list):
        raise SchemaError(["schema.attributes must be a list"])
    attrs: list[AttributeSpec] = []
    for i, raw in enumerate(raw_attrs):
        if not isinstance(raw, dict):
            violations.append(f"attribute #{i} must be an object")
            continue
        name = raw.get("name")
        if not isinstance(name, str):
            violations.append(f"attribute #{i} missing name")
            name = f"_attr{i}"
        dt_raw = raw.get("datatype")
        try:
            dt = Datatype(dt_raw)
        except ValueError:
            violations.append(f"unknown datatype {dt_raw!r} on {name}")
            dt = Datatype.STRING
        required = raw.get("required", True)
        if not isinstance(required, bool):
            violations.append(f"required on {name} must be boolean")
            required = True
        hint = raw.get("format_hint")
        if hint is not None and not isinstance(hint, str):
            violations.append(f"format_hint on {name} must be a string")
            hint = None
        attrs.append(
            AttributeSpec(
                name=name,
                datatype=dt,
                description=str(raw.get("description", "")),
                required=required,
                format_hint=hint,
            )
        )
    version = payload.get("version", 1)
    if not isinstance(version, int) or isinstance(version, bool):
        violations.append("schema version must be an integer")
        version = 1
    schema = DatasetSchema(attributes=tuple(attrs), version=version)
    violations.extend(validate_schema(schema))
    if violations:
        raise SchemaError(violations)
    return schema


@dataclass(frozen=True)
class User:
    id: str
    username: str
    email: str
    credential_digest: str
    created_at: datetime

    def to_json(self) -> dict:
        # credential_digest stays out of every API response by construction
        return {
            "id": self.id,
            "username": self.username,
            "email": self.email,
            "created_at": timestamp_to_json(self.created_at),
        }


@dataclass(frozen=True)
class Dataset:
    id: str
    title: str
    description: str
    tags: frozenset[str]
    owner: str
    schema: DatasetSchema
    created_at: datetime
    updated_at: datetime
    license: Optional[str] = None

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "title": self.title,
            "description": self.description,
            "tags": sorted(self.tags),
            "owner": self.owner,
            "schema": self.schema.to_json(),
            "created_at": timestamp_to_json(self.created_at),
            "updated_at": timestamp_to_json(self.updated_at),
            "license": self.license,
        }


@dataclass(frozen=True)
class UploadOrigin:
    filename: str

    def to_json(self) -> dict:
        return {"type": "upload", "filename": self.filename}


@dataclass(frozen=True)
class UrlOrigin:
    url: str

    def to_json(self) -> dict:
        return {"type": "url", "url": self.url}


@dataclass(frozen=True)
class CkanLinkOrigin:
    base_url: str
    ckan_resource_id: str

    def to_json(self) -> dict:
        return {
            "type": "ckan_link",
            "base_url": self.base_url,
            "ckan_resource_id": self.ckan_resource_id,
        }


ResourceOrigin = UploadOrigin | UrlOrigin | CkanLinkOrigin


def origin_from_json(payload: Any) -> ResourceOrigin:
    if not isinstance(payload, dict):
        raise ValueError("origin must be an object")
    kind = payload.get("type")
    if kind == "upload":
        return UploadOrigin(filename=str(payload["filename"]))
    if kind == "url":
        return UrlOrigin(url=str(payload["url"]))
    if kind == "ckan_link":
        return CkanLinkOrigin(
            base_url=str(payload["base_url"]),
            ckan_resource_id=str(payload["ckan_resource_id"]),
        )
    raise ValueError(f"unknown origin type {kind!r}")


RESOURCE_STATUSES = ("registered", "fetched", "ingested", "failed")


@dataclass(frozen=True)
class Resource:
    id: str
    pool_id: str
    origin: ResourceOrigin
    format: str  # "csv" | "tsv"
    checksum: Optional[str] = None
    fetched_at: Optional[datetime] = None
    status: str = "registered"
    rows_read: int = 0
    records_produced: int = 0
    rows_rejected: int = 0

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "pool_id": self.pool_id,
            "origin": self.origin.to_json(),
            "format": self.format,
            "checksum": self.checksum,
            "fetched_at": timestamp_to_json(self.fetched_at),
            "status": self.status,
            "rows_read": self.rows_read,
            "records_produced": self.records_produced,
            "rows_rejected": self.rows_rejected,
        }


@dataclass(frozen=True)
class ResourcePool:
    id: str
    dataset_id: str
    name: str
    rules: "RuleSet"
    created_at: datetime

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "dataset_id": self.dataset_id,
            "name": self.name,
            "rules": self.rules.to_json(),
            "created_at": timestamp_to_json(self.created_at),
        }


@dataclass(frozen=True)
class Provenance:
    resource_id: str
    source_row_index: int

    def to_json(self) -> dict:
        return {
            "resource_id": self.resource_id,
            "source_row_index": self.source_row_index,
        }


@dataclass(frozen=True)
class DataRecord:
    dataset_id: str
    values: Mapping[str, Any]
    provenance: Provenance
    ingested_at: datetime

    def to_json(self, schema: DatasetSchema) -> dict:
        return {
            "dataset_id": self.dataset_id,
            "values": values_to_json(self.values, schema),
            "provenance": self.provenance.to_json(),
            "ingested_at": timestamp_to_json(self.ingested_at),
        }


def canonical_scalar(value: Any) -> Any:
    """Map a typed value onto its canonical JSON scalar."""
    if value is None or type(value) in (str, int, float, bool):
        return value
    if isinstance(value, datetime):
        return timestamp_to_json(value)
    if isinstance(value, date):
        return value.isoformat()
    raise TypeError(f"unsupported value type {type(value).__name__}")


def csv_cell(value: Any) -> str:
    """Canonical CSV text for a typed value; None becomes the empty field."""
    if value is None:
        return ""
    if value is True:
        return "true"
    if value is False:
        return "false"
    if isinstance(value, datetime):
        return timestamp_to_json(value) or ""
    if isinstance(value, date):
        return value.isoformat()
    if isinstance(value, float):
        return repr(value)
    return str(value)


def values_to_json(values: Mapping[str, Any], schema: DatasetSchema) -> dict:
    """Serialize a conforming value map in schema attribute order."""
    return {a.name: canonical_scalar(values.get(a.name)) for a in schema.attributes}


def values_from_json(payload: Mapping[str, Any], schema: DatasetSchema) -> dict:
    """Re-type canonical JSON scalars into the schema's Python values."""
    out: dict[str, Any] = {}
    for attr in schema.attributes:
        raw = payload.get(attr.name)
        if raw is None:
            out[attr.name] = None
        elif attr.datatype == Datatype.DATE:
            out[attr.name] = date.fromisoformat(raw)
        elif attr.datatype == Datatype.DATETIME:
            out[attr.name] = parse_iso_datetime(raw)
        elif attr.datatype == Datatype.FLOAT:
            out[attr.name] = float(raw)
        else:
            out[attr.name] = raw
    return out


def with_updated(dataset: Dataset, **changes: Any) -> Dataset:
    """Copy a dataset with field changes and a refreshed updated_at."""
    return replace(dataset, updated_at=utcnow(), **changes)
