"""Embedded persistence: metadata, record store, payloads, and query engine.

One sqlite3 file (or ":memory:") carries two contracts. The metadata side
holds users, datasets, pools and resources with referential integrity and
cascade deletes. The record side holds aggregated rows keyed by provenance,
plus a content-addressed payload store for fetched source bytes.

All writes go through a single connection guarded by a lock, so the store is
safe to share across API worker threads. Record replacement is transactional:
a failed ingestion never leaves a resource half-written.
"""

from __future__ import annotations

import hashlib
import io
import json
import sqlite3
import threading
from dataclasses import dataclass
from datetime import datetime
from typing import Any, Callable, Iterable, Iterator, Optional

from .model import (
    DataRecord,
    Dataset,
    DatasetSchema,
    Datatype,
    Provenance,
    Resource,
    ResourcePool,
    User,
    canonical_scalar,
    conform_record,
    csv_cell,
    origin_from_json,
    schema_from_json,
    timestamp_from_json,
    timestamp_to_json,
    values_from_json,
    values_to_json,
)
from .rules import RuleSet
from .transform import CoercionError, coerce_value

__all__ = [
    "Storage",
    "QuerySpec",
    "QueryResult",
    "Filter",
    "SortKey",
    "parse_filter",
    "parse_sort",
    "StorageError",
    "NotFoundError",
    "ConflictError",
    "IntegrityError",
    "QueryError",
    "QUERY_OPS",
    "MAX_LIMIT",
    "DEFAULT_LIMIT",
]

QUERY_OPS = ("eq", "ne", "lt", "lte", "gt", "gte", "contains")
DEFAULT_LIMIT = 100
MAX_LIMIT = 1000


class StorageError(Exception):
    pass


class NotFoundError(StorageError):
    pass


class ConflictError(StorageError):
    pass


class IntegrityError(StorageError):
    pass


class QueryError(ValueError):
    """A query spec that cannot be evaluated against the dataset's schema."""


@dataclass(frozen=True)
class Filter:
    attribute: str
    op: str
    operand: str


@dataclass(frozen=True)
class SortKey:
    attribute: str
    descending: bool = False


@dataclass(frozen=True)
class QuerySpec:
    filters: tuple[Filter, ...] = ()
    sort: tuple[SortKey, ...] = ()
    limit: Optional[int] = None
    offset: int = 0
    projection: Optional[tuple[str, ...]] = None


@dataclass
class QueryResult:
    records: list[DataRecord]
    total_matched: int
    limit: int
    offset: int


def parse_filter(text: str) -> Filter:
    """Parse the ``attribute:op:operand`` filter form.

    The operand may itself contain colons (timestamps do), so only the first
    two are structural.
    """
    parts = text.split(":", 2)
    if len(parts) != 3 or not parts[0]:
        raise QueryError(f"malformed filter {text!r}, expected attribute:op:operand")
    attribute, op, operand = parts
    if op not in QUERY_OPS:
        raise QueryError(f"unknown filter operator {op!r}")
    return Filter(attribute=attribute, op=op, operand=operand)


def parse_sort(text: str) -> SortKey:
    """Parse the ``attribute:asc`` / ``attribute:desc`` sort form."""
    attribute, sep, direction = text.partition(":")
    if not attribute:
        raise QueryError(f"malformed sort key {text!r}")
    if not sep or direction == "asc":
        return SortKey(attribute=attribute)
    if direction == "desc":
        return SortKey(attribute=attribute, descending=True)
    raise QueryError(f"unknown sort direction {direction!r}, expected asc or desc")


# --- entity (de)serialization for storage rows ------------------------------
# Distinct from the API to_json shapes: these keep private fields (the
# credential digest) and exist only inside the sqlite file.


def _user_dump(u: User) -> str:
    return json.dumps(
        {
            "id": u.id,
            "username": u.username,
            "email": u.email,
            "credential_digest": u.credential_digest,
            "created_at": timestamp_to_json(u.created_at),
        }
    )


def _user_load(raw: str) -> User:
    d = json.loads(raw)
    return User(
        id=d["id"],
        username=d["username"],
        email=d["email"],
        credential_digest=d["credential_digest"],
        created_at=timestamp_from_json(d["created_at"]),
    )


def _dataset_dump(ds: Dataset) -> str:
    return json.dumps(ds.to_json())


def _dataset_load(raw: str) -> Dataset:
    d = json.loads(raw)
    return Dataset(
        id=d["id"],
        title=d["title"],
        description=d["description"],
        tags=frozenset(d["tags"]),
        owner=d["owner"],
        schema=schema_from_json(d["schema"]),
        created_at=timestamp_from_json(d["created_at"]),
        updated_at=timestamp_from_json(d["updated_at"]),
        license=d.get("license"),
    )


def _pool_dump(p: ResourcePool) -> str:
    return json.dumps(p.to_json())


def _pool_load(raw: str) -> ResourcePool:
    d = json.loads(raw)
    return ResourcePool(
        id=d["id"],
        dataset_id=d["dataset_id"],
        name=d["name"],
        rules=RuleSet.from_json(d["rules"]),
        created_at=timestamp_from_json(d["created_at"]),
    )


def _resource_dump(r: Resource) -> str:
    return json.dumps(r.to_json())


def _resource_load(raw: str) -> Resource:
    d = json.loads(raw)
    return Resource(
        id=d["id"],
        pool_id=d["pool_id"],
        origin=origin_from_json(d["origin"]),
        format=d["format"],
        checksum=d.get("checksum"),
        fetched_at=timestamp_from_json(d.get("fetched_at")),
        status=d["status"],
        rows_read=d["rows_read"],
        records_produced=d["records_produced"],
        rows_rejected=d["rows_rejected"],
    )


_SCHEMA_SQL = """
CREATE TABLE IF NOT EXISTS users (
    id TEXT PRIMARY KEY,
    username TEXT NOT NULL UNIQUE,
    body TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS datasets (
    id TEXT PRIMARY KEY,
    owner TEXT NOT NULL,
    title TEXT NOT NULL,
    body TEXT NOT NULL,
    UNIQUE (owner, title)
);
CREATE TABLE IF NOT EXISTS pools (
    id TEXT PRIMARY KEY,
    dataset_id TEXT NOT NULL,
    body TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS resources (
    id TEXT PRIMARY KEY,
    pool_id TEXT NOT NULL,
    dataset_id TEXT NOT NULL,
    body TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS records (
    dataset_id TEXT NOT NULL,
    resource_id TEXT NOT NULL,
    source_row_index INTEGER NOT NULL,
    ingested_at TEXT NOT NULL,
    values_json TEXT NOT NULL,
    PRIMARY KEY (resource_id, source_row_index)
);
CREATE INDEX IF NOT EXISTS records_by_dataset
    ON records (dataset_id, resource_id, source_row_index);
CREATE TABLE IF NOT EXISTS payloads (
    checksum TEXT PRIMARY KEY,
    size INTEGER NOT NULL,
    data BLOB NOT NULL
);
CREATE TABLE IF NOT EXISTS tokens (
    token_digest TEXT PRIMARY KEY,
    user_id TEXT NOT NULL,
    expires_at TEXT NOT NULL
);
"""


class Storage:
    """sqlite3-backed store shared by the API service and the test suite."""

    def __init__(self, path: str = ":memory:"):
        self.path = path
        self._lock = threading.RLock()
        self._conn = sqlite3.connect(path, check_same_thread=False)
        self._conn.execute("PRAGMA foreign_keys = ON")
        with self._lock, self._conn:
            self._conn.executescript(_SCHEMA_SQL)

    def close(self) -> None:
        with self._lock:
            self._conn.close()

    # --- generic metadata dispatch ------------------------------------

    def metadata_put(self, entity: Any) -> None:
        """Insert or update one metadata entity, enforcing integrity rules."""
        with self._lock, self._conn:
            if isinstance(entity, User):
                self._put_user(entity)
            elif isinstance(entity, Dataset):
                self._put_dataset(entity)
            elif isinstance(entity, ResourcePool):
                self._put_pool(entity)
            elif isinstance(entity, Resource):
                self._put_resource(entity)
            else:
                raise TypeError(f"unsupported entity type {type(entity).__name__}")

    def metadata_get(self, entity_type: str, entity_id: str) -> Any:
        loader = {
            "user": ("users", _user_load),
            "dataset": ("datasets", _dataset_load),
            "pool": ("pools", _pool_load),
            "resource": ("resources", _resource_load),
        }.get(entity_type)
        if loader is None:
            raise TypeError(f"unsupported entity type {entity_type!r}")
        table, load = loader
        with self._lock:
            row = self._conn.execute(
                f"SELECT body FROM {table} WHERE id = ?", (entity_id,)
            ).fetchone()
        if row is None:
            raise NotFoundError(f"{entity_type} {entity_id} not found")
        return load(row[0])

    def metadata_list(self, entity_type: str, **scope: str) -> list[Any]:
        """List entities, optionally scoped to a parent id.

        datasets take no scope; pools accept dataset_id; resources accept
        pool_id. Results come back in id order (ids are time-sortable).
        """
        with self._lock:
            if entity_type == "dataset":
                rows = self._conn.execute(
                    "SELECT body FROM datasets ORDER BY id"
                ).fetchall()
                return [_dataset_load(r[0]) for r in rows]
            if entity_type == "pool":
                dataset_id = scope.get("dataset_id")
                if dataset_id is not None:
                    rows = self._conn.execute(
                        "SELECT body FROM pools WHERE dataset_id = ? ORDER BY id",
                        (dataset_id,),
                    ).fetchall()
                else:
                    rows = self._conn.execute(
                        "SELECT body FROM pools ORDER BY id"
                    ).fetchall()
                return [_pool_load(r[0]) for r in rows]
            if entity_type == "resource":
                pool_id = scope.get("pool_id")
                if pool_id is not None:
                    rows = self._conn.execute(
                        "SELECT body FROM resources WHERE pool_id = ? ORDER BY id",
                        (pool_id,),
                    ).fetchall()
                else:
                    rows = self._conn.execute(
                        "SELECT body FROM resources ORDER BY id"
                    ).fetchall()
                return [_resource_load(r[0]) for r in rows]
            if entity_type == "user":
                rows = self._conn.execute(
                    "SELECT body FROM users ORDER BY id"
                ).fetchall()
                return [_user_load(r[0]) for r in rows]
        raise TypeError(f"unsupported entity type {entity_type!r}")

    def metadata_delete(
        self, entity_type: str, entity_id: str, *, cascade: bool = False
    ) -> None:
        """Delete an entity; with dependents present, require cascade=True."""
        with self._lock, self._conn:
            if entity_type == "dataset":
                self._require_row("datasets", entity_id, "dataset")
                pool_ids = [
                    r[0]
                    for r in self._conn.execute(
                        "SELECT id FROM pools WHERE dataset_id = ?", (entity_id,)
                    )
                ]
                if pool_ids and not cascade:
                    raise IntegrityError("dataset still has pools; cascade required")
                for pool_id in pool_ids:
                    self._delete_pool(pool_id)
                self._conn.execute(
                    "DELETE FROM records WHERE dataset_id = ?", (entity_id,)
                )
                self._conn.execute("DELETE FROM datasets WHERE id = ?", (entity_id,))
            elif entity_type == "pool":
                self._require_row("pools", entity_id, "pool")
                dependents = self._conn.execute(
                    "SELECT COUNT(*) FROM resources WHERE pool_id = ?", (entity_id,)
                ).fetchone()[0]
                if dependents and not cascade:
                    raise IntegrityError("pool still has resources; cascade required")
                self._delete_pool(entity_id)
            elif entity_type == "resource":
                self._require_row("resources", entity_id, "resource")
                dependents = self._conn.execute(
                    "SELECT COUNT(*) FROM records WHERE resource_id = ?", (entity_id,)
                ).fetchone()[0]
                if dependents and not cascade:
                    raise IntegrityError("resource still has records; cascade required")
                self._conn.execute(
                    "DELETE FROM records WHERE resource_id = ?", (entity_id,)
                )
                self._conn.execute("DELETE FROM resources WHERE id = ?", (entity_id,))
            elif entity_type == "user":
                self._require_row("users", entity_id, "user")
                owned = self._conn.execute(
                    "SELECT COUNT(*) FROM datasets WHERE owner = ?", (entity_id,)
                ).fetchone()[0]
                if owned:
                    raise IntegrityError("user still owns datasets")
                self._conn.execute("DELETE FROM users WHERE id = ?", (entity_id,))
            else:
                raise TypeError(f"unsupported entity type {entity_type!r}")

    def _require_row(self, table: str, entity_id: str, label: str) -> None:
        row = self._conn.execute(
            f"SELECT 1 FROM {table} WHERE id = ?", (entity_id,)
        ).fetchone()
        if row is None:
            raise NotFoundError(f"{label} {entity_id} not found")

    def _delete_pool(self, pool_id: str) -> None:
        resource_ids = [
            r[0]
            for r in self._conn.execute(
                "SELECT id FROM resources WHERE pool_id = ?", (pool_id,)
            )
        ]
        for resource_id in resource_ids:
            self._conn.execute(
                "DELETE FROM records WHERE resource_id = ?", (resource_id,)
            )
        self._conn.execute("DELETE FROM resources WHERE pool_id = ?", (pool_id,))
        self._conn.execute("DELETE FROM pools WHERE id = ?", (pool_id,))

    def _put_user(self, user: User) -> None:
        clash = self._conn.execute(
            "SELECT id FROM users WHERE username = ? AND id != ?",
            (user.username, user.id),
        ).fetchone()
        if clash:
            raise ConflictError(f"username {user.username} already taken")
        self._conn.execute(
            "INSERT INTO users (id, username, body) VALUES (?, ?, ?) "
            "ON CONFLICT(id) DO UPDATE SET username = excluded.username, "
            "body = excluded.body",
            (user.id, user.username, _user_dump(user)),
        )

    def _put_dataset(self, dataset: Dataset) -> None:
        owner = self._conn.execute(
            "SELECT 1 FROM users WHERE id = ?", (dataset.owner,)
        ).fetchone()
        if owner is None:
            raise IntegrityError(f"owner {dataset.owner} does not exist")
        clash = self._conn.execute(
            "SELECT id FROM datasets WHERE owner = ? AND title = ? AND id != ?",
            (dataset.owner, dataset.title, dataset.id),
        ).fetchone()
        if clash:
            raise ConflictError(
                f"dataset titled {dataset.title!r} already exists for this owner"
            )
        self._conn.execute(
            "INSERT INTO datasets (id, owner, title, body) VALUES (?, ?, ?, ?) "
            "ON CONFLICT(id) DO UPDATE SET owner = excluded.owner, "
            "title = excluded.title, body = excluded.body",
            (dataset.id, dataset.owner, dataset.title, _dataset_dump(dataset)),
        )

    def _put_pool(self, pool: ResourcePool) -> None:
        parent = self._conn.execute(
            "SELECT 1 FROM datasets WHERE id = ?", (pool.dataset_id,)
        ).fetchone()
        if parent is None:
            raise IntegrityError(f"dataset {pool.dataset_id} does not exist")
        self._conn.execute(
            "INSERT INTO pools (id, dataset_id, body) VALUES (?, ?, ?) "
            "ON CONFLICT(id) DO UPDATE SET dataset_id = excluded.dataset_id, "
            "body = excluded.body",
            (pool.id, pool.dataset_id, _pool_dump(pool)),
        )

    def _put_resource(self, resource: Resource) -> None:
        parent = self._conn.execute(
            "SELECT dataset_id FROM pools WHERE id = ?", (resource.pool_id,)
        ).fetchone()
        if parent is None:
            raise IntegrityError(f"pool {resource.pool_id} does not exist")
        self._conn.execute(
            "INSERT INTO resources (id, pool_id, dataset_id, body) "
            "VALUES (?, ?, ?, ?) "
            "ON CONFLICT(id) DO UPDATE SET pool_id = excluded.pool_id, "
            "dataset_id = excluded.dataset_id, body = excluded.body",
            (resource.id, resource.pool_id, parent[0], _resource_dump(resource)),
        )

    def user_by_username(self, username: str) -> Optional[User]:
        with self._lock:
            row = self._conn.execute(
                "SELECT body FROM users WHERE username = ?", (username,)
            ).fetchone()
        return _user_load(row[0]) if row else None

    def dataset_for_pool(self, pool_id: str) -> Dataset:
        pool = self.metadata_get("pool", pool_id)
        return self.metadata_get("dataset", pool.dataset_id)

    # --- records --------------------------------------------------------

    def replace_records_for_resource(
        self,
        dataset_id: str,
        resource_id: str,
        records: Iterable[DataRecord],
        *,
        resource: Optional[Resource] = None,
    ) -> int:
        """Atomically swap a resource's records for a new generation.

        Old records vanish, new ones land, and (optionally) the resource row
        updates, all in one transaction. Returns the number inserted.
        """
        dataset = self.metadata_get("dataset", dataset_id)
        schema = dataset.schema
        staged = list(records)
        for record in staged:
            if record.provenance.resource_id != resource_id:
                raise IntegrityError(
                    f"record provenance names {record.provenance.resource_id}, "
                    f"not {resource_id}"
                )
            violations = conform_record(record.values, schema)
            if violations:
                raise IntegrityError(
                    "nonconforming record at source row "
                    f"{record.provenance.source_row_index}: {'; '.join(violations)}"
                )
        inserted = 0
        with self._lock, self._conn:
            self._require_row("resources", resource_id, "resource")
            self._conn.execute(
                "DELETE FROM records WHERE resource_id = ?", (resource_id,)
            )
            for record in staged:
                self._conn.execute(
                    "INSERT INTO records (dataset_id, resource_id, "
                    "source_row_index, ingested_at, values_json) "
                    "VALUES (?, ?, ?, ?, ?)",
                    (
                        dataset_id,
                        record.provenance.resource_id,
                        record.provenance.source_row_index,
                        timestamp_to_json(record.ingested_at),
                        json.dumps(values_to_json(record.values, schema)),
                    ),
                )
                inserted += 1
            if resource is not None:
                self._put_resource(resource)
        return inserted

    def record_count(self, dataset_id: str) -> int:
        with self._lock:
            return self._conn.execute(
                "SELECT COUNT(*) FROM records WHERE dataset_id = ?", (dataset_id,)
            ).fetchone()[0]

    def has_records(self, dataset_id: str) -> bool:
        return self.record_count(dataset_id) > 0

    def _fetch_records(self, dataset: Dataset) -> list[DataRecord]:
        with self._lock:
            rows = self._conn.execute(
                "SELECT resource_id, source_row_index, ingested_at, values_json "
                "FROM records WHERE dataset_id = ? "
                "ORDER BY resource_id, source_row_index",
                (dataset.id,),
            ).fetchall()
        records = []
        for resource_id, row_index, ingested_at, values_json in rows:
            records.append(
                DataRecord(
                    dataset_id=dataset.id,
                    values=values_from_json(json.loads(values_json), dataset.schema),
                    provenance=Provenance(
                        resource_id=resource_id, source_row_index=row_index
                    ),
                    ingested_at=timestamp_from_json(ingested_at),
                )
            )
        return records

    def _matching_records(
        self, dataset: Dataset, spec: QuerySpec
    ) -> list[DataRecord]:
        predicates = [_compile_filter(f, dataset.schema) for f in spec.filters]
        records = [
            r
            for r in self._fetch_records(dataset)
            if all(p(r.values) for p in predicates)
        ]
        # later keys first so earlier keys dominate; each pass is stable and
        # parks nulls at the end regardless of direction
        for key in reversed(spec.sort):
            if dataset.schema.get(key.attribute) is None:
                raise QueryError(f"unknown sort attribute {key.attribute!r}")
            name = key.attribute
            non_null = sorted(
                (r for r in records if r.values.get(name) is not None),
                key=lambda r: r.values[name],
                reverse=key.descending,
            )
            nulls = [r for r in records if r.values.get(name) is None]
            records = non_null + nulls
        return records

    @staticmethod
    def _projected_names(dataset: Dataset, spec: QuerySpec) -> list[str]:
        if spec.projection is None:
            return dataset.schema.attribute_names()
        names = list(spec.projection)
        if not names:
            raise QueryError("empty projection")
        for name in names:
            if dataset.schema.get(name) is None:
                raise QueryError(f"unknown projection attribute {name!r}")
        return names

    def query_records(self, dataset_id: str, spec: QuerySpec) -> QueryResult:
        """Evaluate a query and return one page plus the total match count."""
        dataset = self.metadata_get("dataset", dataset_id)
        self._projected_names(dataset, spec)
        limit = DEFAULT_LIMIT if spec.limit is None else spec.limit
        if not 1 <= limit <= MAX_LIMIT:
            raise QueryError(f"limit must be between 1 and {MAX_LIMIT}")
        if spec.offset < 0:
            raise QueryError("offset must be >= 0")
        matched = self._matching_records(dataset, spec)
        page = matched[spec.offset : spec.offset + limit]
        return QueryResult(
            records=page,
            total_matched=len(matched),
            limit=limit,
            offset=spec.offset,
        )

    def page_items(self, dataset_id: str, spec: QuerySpec, result: QueryResult) -> list[dict]:
        """Project a query result into the JSON item maps the API returns."""
        dataset = self.metadata_get("dataset", dataset_id)
        names = self._projected_names(dataset, spec)
        return [
            {name: canonical_scalar(r.values.get(name)) for name in names}
            for r in result.records
        ]

    def export_records(
        self, dataset_id: str, spec: QuerySpec, format: str
    ) -> Iterator[bytes]:
        """Stream every matching record as CSV or a JSON array.

        Unlike query_records, no default page size applies: an export without
        an explicit limit covers the full match set.
        """
        dataset = self.metadata_get("dataset", dataset_id)
        names = self._projected_names(dataset, spec)
        if spec.limit is not None and not 1 <= spec.limit <= MAX_LIMIT:
            raise QueryError(f"limit must be between 1 and {MAX_LIMIT}")
        matched = self._matching_records(dataset, spec)
        if spec.offset:
            matched = matched[spec.offset :]
        if spec.limit is not None:
            matched = matched[: spec.limit]
        if format == "csv":
            return _emit_csv(matched, names)
        if format == "json":
            return _emit_json(matched, names)
        raise QueryError(f"unsupported export format {format!r}")

    # --- payloads ---------------------------------------------------------

    def payload_put(self, data: bytes) -> tuple[str, int]:
        checksum = hashlib.sha256(data).hexdigest()
        with self._lock, self._conn:
            self._conn.execute(
                "INSERT OR IGNORE INTO payloads (checksum, size, data) "
                "VALUES (?, ?, ?)",
                (checksum, len(data), data),
            )
        return checksum, len(data)

    def payload_get(self, checksum: str) -> bytes:
        with self._lock:
            row = self._conn.execute(
                "SELECT data FROM payloads WHERE checksum = ?", (checksum,)
            ).fetchone()
        if row is None:
            raise NotFoundError(f"payload {checksum} not found")
        return row[0]

    # --- tokens -------------------------------------------------------------
    # Only a digest of the bearer token is stored; the raw token exists just
    # in the login response.

    @staticmethod
    def _token_digest(token: str) -> str:
        return hashlib.sha256(token.encode("utf-8")).hexdigest()

    def token_put(self, token: str, user_id: str, expires_at: datetime) -> None:
        with self._lock, self._conn:
            self._conn.execute(
                "INSERT OR REPLACE INTO tokens (token_digest, user_id, expires_at) "
                "VALUES (?, ?, ?)",
                (self._token_digest(token), user_id, timestamp_to_json(expires_at)),
            )

    def token_user(self, token: str, now: datetime) -> Optional[str]:
        with self._lock:
            row = self._conn.execute(
                "SELECT user_id, expires_at FROM tokens WHERE token_digest = ?",
                (self._token_digest(token),),
            ).fetchone()
        if row is None:
            return None
        if timestamp_from_json(row[1]) <= now:
            self.token_delete(token)
            return None
        return row[0]

    def token_delete(self, token: str) -> None:
        with self._lock, self._conn:
            self._conn.execute(
                "DELETE FROM tokens WHERE token_digest = ?",
                (self._token_digest(token),),
            )

    # --- digest --------------------------------------------------------------

    def digest(self) -> str:
        """Hex digest of all durable content, timestamp- and token-free.

        Two stores that went through equivalent ingestions (same inputs,
        same rules) produce the same digest even though wall-clock fields
        differ, which is what makes re-ingestion idempotence checkable.
        """
        with self._lock:
            users = [
                json.loads(r[0]) for r in self._conn.execute(
                    "SELECT body FROM users ORDER BY id"
                )
            ]
            datasets = [
                json.loads(r[0]) for r in self._conn.execute(
                    "SELECT body FROM datasets ORDER BY id"
                )
            ]
            pools = [
                json.loads(r[0]) for r in self._conn.execute(
                    "SELECT body FROM pools ORDER BY id"
                )
            ]
            resources = [
                json.loads(r[0]) for r in self._conn.execute(
                    "SELECT body FROM resources ORDER BY id"
                )
            ]
            records = [
                {
                    "dataset_id": row[0],
                    "resource_id": row[1],
                    "source_row_index": row[2],
                    "values": json.loads(row[3]),
                }
                for row in self._conn.execute(
                    "SELECT dataset_id, resource_id, source_row_index, values_json "
                    "FROM records ORDER BY dataset_id, resource_id, source_row_index"
                )
            ]
            payloads = [
                {"checksum": row[0], "size": row[1]}
                for row in self._conn.execute(
                    "SELECT checksum, size FROM payloads ORDER BY checksum"
                )
            ]
        for group in (users, datasets, pools, resources):
            for entry in group:
                for key in ("created_at", "updated_at", "fetched_at"):
                    entry.pop(key, None)
        body = json.dumps(
            {
                "users": users,
                "datasets": datasets,
                "pools": pools,
                "resources": resources,
                "records": records,
                "payloads": payloads,
            },
            sort_keys=True,
            separators=(",", ":"),
        )
        return hashlib.sha256(body.encode("utf-8")).hexdigest()


# --- filter compilation and export emitters -----------------------------------


def _compile_filter(f: Filter, schema: DatasetSchema) -> Callable[[Any], bool]:
    attr = schema.get(f.attribute)
    if attr is None:
        raise QueryError(f"unknown filter attribute {f.attribute!r}")
    if attr.datatype == Datatype.BOOLEAN and f.op not in ("eq", "ne"):
        raise QueryError(f"operator {f.op} not valid for boolean {f.attribute}")
    if f.op == "contains":
        if attr.datatype != Datatype.STRING:
            raise QueryError(f"contains requires a string attribute, not {f.attribute}")
        needle = f.operand

        def check_contains(values: Any) -> bool:
            value = values.get(f.attribute)
            return value is not None and needle in value

        return check_contains

    try:
        operand = coerce_value(f.operand, attr.datatype, None)
    except CoercionError:
        raise QueryError(
            f"operand {f.operand!r} is not a valid {attr.datatype.value}"
        ) from None
    if operand is None:
        raise QueryError(f"empty operand for filter on {f.attribute}")

    name, op = f.attribute, f.op

    def check(values: Any) -> bool:
        value = values.get(name)
        if value is None:
            return False  # null never satisfies a comparison
        if op == "eq":
            return value == operand
        if op == "ne":
            return value != operand
        if op == "lt":
            return value < operand
        if op == "lte":
            return value <= operand
        if op == "gt":
            return value > operand
        return value >= operand

    return check


def _emit_csv(records: list[DataRecord], names: list[str]) -> Iterator[bytes]:
    import csv

    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(names)
    for i, record in enumerate(records):
        writer.writerow([csv_cell(record.values.get(n)) for n in names])
        if (i + 1) % 500 == 0:
            yield buffer.getvalue().encode("utf-8")
            buffer.seek(0)
            buffer.truncate()
    tail = buffer.getvalue()
    if tail:
        yield tail.encode("utf-8")


def _emit_json(records: list[DataRecord], names: list[str]) -> Iterator[bytes]:
    yield b"["
    for i, record in enumerate(records):
        item = {n: canonical_scalar(record.values.get(n)) for n in names}
        prefix = b"," if i else b""
        yield prefix + json.dumps(item).encode("utf-8")
    yield b"]"
