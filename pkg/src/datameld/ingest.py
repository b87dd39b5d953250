"""Resource acquisition and the parse-transform-store pipeline.

Resources arrive three ways: direct upload (payload stored at registration),
a plain remote URL, or a link to a CKAN portal entry resolved through the
portal's action API. Fetching is capped (timeout, size, redirects) and the
payload lands in the content-addressed store, so identical files are held
once no matter how many pools reference them.

Ingestion re-runs are replacement, not append: all records whose provenance
names the resource are swapped in one transaction, so re-ingesting the same
payload is idempotent and a failure leaves the previous generation intact.
Ingestions of the same resource serialize on a per-resource lock; distinct
resources may run concurrently.
"""

from __future__ import annotations

import hashlib
import threading
import time
from dataclasses import dataclass, field, replace
from datetime import datetime
from typing import Any, Optional
from urllib.parse import urlsplit

import requests

from .model import (
    CkanLinkOrigin,
    DataRecord,
    Provenance,
    Resource,
    ResourceOrigin,
    UploadOrigin,
    UrlOrigin,
    new_id,
    utcnow,
)
from .rules import RuleRegistry, coverage_map, structural_violations
from .store import Storage
from .transform import (
    EncodingError,
    TableData,
    TransformStructureError,
    UnterminatedQuoteError,
    apply_rules_streamed,
    parse_table,
)

__all__ = [
    "Ingestor",
    "FetchLimits",
    "FetchedPayload",
    "IngestReport",
    "IngestionError",
    "FetchError",
    "FormatError",
    "OriginError",
    "StateError",
    "RulesError",
    "CkanError",
]

DEFAULT_SAMPLE_ROWS = 50

_SUFFIX_FORMATS = {"csv": "csv", "tsv": "tsv", "tab": "tsv"}
_CONTENT_TYPE_FORMATS = {
    "text/csv": "csv",
    "application/csv": "csv",
    "text/tab-separated-values": "tsv",
}


class IngestionError(Exception):
    """Pipeline failure with a machine-readable code for the API envelope."""

    def __init__(self, code: str, message: str, details: Optional[Any] = None):
        super().__init__(message)
        self.code = code
        self.details = details


class FetchError(IngestionError):
    pass


class FormatError(IngestionError):
    def __init__(self, message: str):
        super().__init__("undeterminable-format", message)


class OriginError(IngestionError):
    def __init__(self, message: str):
        super().__init__("invalid-origin", message)


class StateError(IngestionError):
    def __init__(self, message: str):
        super().__init__("invalid-state", message)


class RulesError(IngestionError):
    def __init__(self, violations: list[str]):
        super().__init__(
            "rules-not-valid",
            "pool rules do not validate against this resource",
            details={"violations": violations},
        )
        self.violations = violations


class CkanError(IngestionError):
    pass


@dataclass(frozen=True)
class FetchLimits:
    timeout_s: float = 30.0
    max_bytes: int = 64 * 1024 * 1024
    max_redirects: int = 3


@dataclass(frozen=True)
class FetchedPayload:
    data: bytes
    content_type: Optional[str]
    checksum: str
    fetched_at: datetime
    size_bytes: int


@dataclass
class IngestReport:
    """What one ingestion run did.

    rows_read here is the raw transform count, so
    records_produced + rows_rejected + rows_filtered == rows_read. The
    Resource counters exclude filtered rows (filtering is intentional, not
    failure), hence resource.rows_read == report.rows_read - rows_filtered.
    """

    resource_id: str
    rows_read: int
    records_produced: int
    rows_rejected: int
    rows_filtered: int
    errors: list = field(default_factory=list)  # first 100 row errors
    duration_ms: float = 0.0

    def to_json(self) -> dict:
        return {
            "resource_id": self.resource_id,
            "rows_read": self.rows_read,
            "records_produced": self.records_produced,
            "rows_rejected": self.rows_rejected,
            "rows_filtered": self.rows_filtered,
            "errors": list(self.errors),
            "duration_ms": self.duration_ms,
        }


def _format_from_name(name: Optional[str]) -> Optional[str]:
    if not name:
        return None
    _, _, suffix = name.rpartition(".")
    return _SUFFIX_FORMATS.get(suffix.lower())


def _format_from_content_type(content_type: Optional[str]) -> Optional[str]:
    if not content_type:
        return None
    bare = content_type.split(";", 1)[0].strip().lower()
    return _CONTENT_TYPE_FORMATS.get(bare)


def _valid_http_url(url: str) -> bool:
    parts = urlsplit(url)
    return parts.scheme in ("http", "https") and bool(parts.netloc)


class Ingestor:
    """Registers, fetches, samples and ingests resources against a Storage."""

    def __init__(
        self,
        storage: Storage,
        limits: Optional[FetchLimits] = None,
        sample_rows: int = DEFAULT_SAMPLE_ROWS,
        registry: Optional[RuleRegistry] = None,
    ):
        self.storage = storage
        self.limits = limits or FetchLimits()
        self.sample_rows = sample_rows
        self.registry = registry
        self._locks: dict[str, threading.Lock] = {}
        self._locks_guard = threading.Lock()

    def _lock_for(self, resource_id: str) -> threading.Lock:
        with self._locks_guard:
            return self._locks.setdefault(resource_id, threading.Lock())

    # --- registration ----------------------------------------------------

    def register_resource(
        self,
        pool_id: str,
        origin: ResourceOrigin,
        payload: Optional[bytes] = None,
        format_override: Optional[str] = None,
        content_type: Optional[str] = None,
    ) -> Resource:
        """Create a Resource under a pool.

        Uploads store their payload immediately and come out fetched; link
        origins stay registered until fetch(). Format resolution order:
        explicit override, filename/url suffix, content type, and for CKAN
        links the portal's format field.
        """
        pool = self.storage.metadata_get("pool", pool_id)
        if format_override is not None and format_override not in ("csv", "tsv"):
            raise FormatError(f"unsupported format override {format_override!r}")
        fmt = format_override
        checksum: Optional[str] = None
        fetched_at = None
        status = "registered"

        if isinstance(origin, UploadOrigin):
            if payload is None:
                raise OriginError("upload origin requires a payload")
            fmt = (
                fmt
                or _format_from_name(origin.filename)
                or _format_from_content_type(content_type)
            )
            if fmt is None:
                raise FormatError(
                    f"cannot determine format of {origin.filename!r}; pass one explicitly"
                )
            checksum, _ = self.storage.payload_put(payload)
            fetched_at = utcnow()
            status = "fetched"
        elif isinstance(origin, UrlOrigin):
            if not _valid_http_url(origin.url):
                raise OriginError(f"not an absolute http(s) URL: {origin.url!r}")
            fmt = fmt or _format_from_name(urlsplit(origin.url).path)
            if fmt is None:
                raise FormatError(
                    f"cannot determine format from {origin.url!r}; pass one explicitly"
                )
        elif isinstance(origin, CkanLinkOrigin):
            if not _valid_http_url(origin.base_url):
                raise OriginError(
                    f"not an absolute http(s) URL: {origin.base_url!r}"
                )
            info = self.resolve_ckan(origin.base_url, origin.ckan_resource_id)
            fmt = (
                fmt
                or _SUFFIX_FORMATS.get(str(info.get("format") or "").lower())
                or _format_from_name(urlsplit(info["download_url"]).path)
            )
            if fmt is None:
                raise FormatError(
                    "portal entry does not state a supported format; pass one explicitly"
                )
        else:
            raise TypeError(f"unsupported origin {type(origin).__name__}")

        resource = Resource(
            id=new_id(),
            pool_id=pool.id,
            origin=origin,
            format=fmt,
            checksum=checksum,
            fetched_at=fetched_at,
            status=status,
        )
        self.storage.metadata_put(resource)
        return resource

    # --- CKAN linking ----------------------------------------------------

    def resolve_ckan(self, base_url: str, ckan_resource_id: str) -> dict:
        """Look a resource up through a portal's action API (v3 shape)."""
        url = f"{base_url.rstrip('/')}/api/3/action/resource_show"
        try:
            response = requests.get(
                url, params={"id": ckan_resource_id}, timeout=self.limits.timeout_s
            )
        except requests.RequestException as exc:
            raise CkanError("portal-unreachable", f"portal request failed: {exc}")
        if response.status_code != 200:
            raise CkanError(
                "portal-error", f"portal returned status {response.status_code}"
            )
        try:
            body = response.json()
        except ValueError:
            raise CkanError("portal-error", "portal response is not JSON")
        if not body.get("success"):
            raise CkanError("portal-error", "portal reported success=false")
        result = body.get("result") or {}
        if not result.get("url"):
            raise CkanError("missing-url", "portal entry has no download url")
        return {
            "download_url": result["url"],
            "name": result.get("name"),
            "format": result.get("format"),
            "last_modified": result.get("last_modified"),
        }

    # --- fetching ----------------------------------------------------------

    def fetch(self, resource_id: str) -> Resource:
        """Download a link-origin resource's payload into the payload store.

        Re-fetching unchanged bytes only refreshes the timestamp (the store
        is content-addressed). Fetch failures mark the resource failed.
        """
        with self._lock_for(resource_id):
            resource = self.storage.metadata_get("resource", resource_id)
            if isinstance(resource.origin, UploadOrigin):
                raise StateError("uploaded resources are already held locally")
            if resource.status not in ("registered", "fetched"):
                raise StateError(
                    f"cannot fetch a resource in status {resource.status}"
                )
            if isinstance(resource.origin, CkanLinkOrigin):
                info = self.resolve_ckan(
                    resource.origin.base_url, resource.origin.ckan_resource_id
                )
                url = info["download_url"]
            else:
                url = resource.origin.url
            try:
                payload = self._download(url)
            except FetchError:
                self.storage.metadata_put(replace(resource, status="failed"))
                raise
            checksum, _ = self.storage.payload_put(payload.data)
            updated = replace(
                resource,
                checksum=checksum,
                fetched_at=payload.fetched_at,
                status="fetched",
            )
            self.storage.metadata_put(updated)
            return updated

    def _download(self, url: str) -> FetchedPayload:
        session = requests.Session()
        session.max_redirects = self.limits.max_redirects
        try:
            with session.get(
                url,
                stream=True,
                timeout=self.limits.timeout_s,
                allow_redirects=True,
            ) as response:
                if not 200 <= response.status_code < 300:
                    raise FetchError(
                        "http-status", f"fetch returned {response.status_code}"
                    )
                chunks: list[bytes] = []
                total = 0
                for chunk in response.iter_content(chunk_size=65536):
                    total += len(chunk)
                    if total > self.limits.max_bytes:
                        raise FetchError(
                            "size-cap",
                            f"payload exceeds the {self.limits.max_bytes}-byte cap",
                        )
                    chunks.append(chunk)
                content_type = response.headers.get("Content-Type")
        except requests.Timeout:
            raise FetchError(
                "timeout", f"fetch exceeded {self.limits.timeout_s}s"
            )
        except requests.TooManyRedirects:
            raise FetchError(
                "too-many-redirects",
                f"more than {self.limits.max_redirects} redirects",
            )
        except requests.RequestException as exc:
            raise FetchError("network", f"fetch failed: {exc}")
        data = b"".join(chunks)
        return FetchedPayload(
            data=data,
            content_type=content_type,
            checksum=hashlib.sha256(data).hexdigest(),
            fetched_at=utcnow(),
            size_bytes=len(data),
        )

    # --- sampling and ingestion ------------------------------------------

    def sample_resource(
        self,
        resource_id: str,
        n: Optional[int] = None,
        header_row: Optional[int] = None,
    ) -> TableData:
        """Parse the first n data rows of a fetched resource. Pure read."""
        resource = self.storage.metadata_get("resource", resource_id)
        if resource.checksum is None:
            raise StateError("resource payload has not been fetched")
        payload = self.storage.payload_get(resource.checksum)
        return parse_table(
            payload,
            resource.format,
            header_row=header_row,
            limit=n if n is not None else self.sample_rows,
        )

    def ingest_resource(self, resource_id: str) -> IngestReport:
        """Transform a fetched resource and swap in its record generation.

        The gate before any work is structural: every rule kind registered,
        params valid, every required attribute covered. Row-level problems
        never abort a run; they are counted and reported, which is what lets
        dirty real-world files land with their clean rows intact.
        """
        started = time.perf_counter()
        with self._lock_for(resource_id):
            resource = self.storage.metadata_get("resource", resource_id)
            if resource.checksum is None:
                raise StateError("resource payload has not been fetched")
            pool = self.storage.metadata_get("pool", resource.pool_id)
            dataset = self.storage.metadata_get("dataset", pool.dataset_id)
            rules = pool.rules
            if not rules.rules:
                raise StateError("pool has no rules yet")
            violations = structural_violations(rules, dataset.schema, self.registry)
            _, gaps = coverage_map(rules, dataset.schema, self.registry)
            violations.extend(gaps)
            if violations:
                self.storage.metadata_put(replace(resource, status="failed"))
                raise RulesError(violations)

            payload = self.storage.payload_get(resource.checksum)
            try:
                result = apply_rules_streamed(
                    payload, resource.format, rules, dataset.schema, self.registry
                )
            except (
                EncodingError,
                UnterminatedQuoteError,
                TransformStructureError,
            ) as exc:
                self.storage.metadata_put(replace(resource, status="failed"))
                raise IngestionError("transform-failed", str(exc))

            now = utcnow()
            records = [
                DataRecord(
                    dataset_id=dataset.id,
                    values=entry["values"],
                    provenance=Provenance(
                        resource_id=resource_id,
                        source_row_index=entry["source_row_index"],
                    ),
                    ingested_at=now,
                )
                for entry in result.records
            ]
            rejected = result.distinct_error_rows()
            updated = replace(
                resource,
                status="ingested",
                rows_read=result.rows_read - result.rows_filtered,
                records_produced=len(records),
                rows_rejected=rejected,
            )
            self.storage.replace_records_for_resource(
                dataset.id, resource_id, records, resource=updated
            )
            return IngestReport(
                resource_id=resource_id,
                rows_read=result.rows_read,
                records_produced=len(records),
                rows_rejected=rejected,
                rows_filtered=result.rows_filtered,
                errors=result.row_errors[:100],
                duration_ms=(time.perf_counter() - started) * 1000,
            )
