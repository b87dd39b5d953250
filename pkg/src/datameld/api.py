"""HTTP service: open read-only data access plus authenticated publishing.

Reads (dataset browsing, schema, querying, export, samples) need no
credentials. Everything that mutates state needs a bearer token from
POST /api/v1/sessions, and mutations against a dataset are restricted to
its owner. All error responses share one envelope:

    {"code": "<machine-readable>", "message": "<human>", "details": {...}?}

The data route is strictly read-only and versioned under /api/v1 so clients
can rely on the contract not shifting underneath them.
"""

from __future__ import annotations

import json
from typing import Any, Optional

import uvicorn
from fastapi import FastAPI, Request, Response
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse, StreamingResponse
from starlette.exceptions import HTTPException as StarletteHTTPException

from . import ingest as ingest_mod
from .auth import hash_credential, new_token, token_expiry, verify_credential
from .config import ServiceConfig
from .ingest import Ingestor
from .model import (
    Dataset,
    DatasetSchema,
    ResourcePool,
    SchemaError,
    UploadOrigin,
    User,
    new_id,
    origin_from_json,
    schema_from_json,
    timestamp_to_json,
    utcnow,
    with_updated,
)
from .rules import (
    RuleGenerationError,
    RuleInput,
    RuleSet,
    coverage_map,
    generate_rules,
    structural_violations,
    validate_rules,
)
from .store import (
    ConflictError,
    IntegrityError,
    NotFoundError,
    QueryError,
    QuerySpec,
    Storage,
    parse_filter,
    parse_sort,
)
from .transform import EncodingError, UnterminatedQuoteError, parse_table

__all__ = ["create_app", "serve", "ApiError"]


class ApiError(Exception):
    """Raised inside handlers; rendered as the error envelope."""

    def __init__(
        self,
        status: int,
        code: str,
        message: str,
        details: Optional[Any] = None,
    ):
        super().__init__(message)
        self.status = status
        self.code = code
        self.details = details


def _envelope(
    status: int, code: str, message: str, details: Optional[Any] = None
) -> JSONResponse:
    body: dict[str, Any] = {"code": code, "message": message}
    if details is not None:
        body["details"] = details
    return JSONResponse(status_code=status, content=body)


_HTTP_CODES = {
    400: "bad-request",
    401: "unauthorized",
    403: "forbidden",
    404: "not-found",
    405: "method-not-allowed",
    409: "conflict",
    422: "validation-failed",
}


def create_app(
    storage: Storage,
    config: Optional[ServiceConfig] = None,
    ingestor: Optional[Ingestor] = None,
) -> FastAPI:
    config = config or ServiceConfig()
    ingestor = ingestor or Ingestor(
        storage, limits=config.limits(), sample_rows=config.sample_rows
    )
    app = FastAPI(title="datameld", docs_url=None, redoc_url=None)
    app.state.storage = storage
    app.state.ingestor = ingestor
    app.state.config = config

    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )

    # --- exception rendering ------------------------------------------------

    @app.exception_handler(ApiError)
    async def _on_api_error(request: Request, exc: ApiError) -> JSONResponse:
        return _envelope(exc.status, exc.code, str(exc), exc.details)

    @app.exception_handler(StarletteHTTPException)
    async def _on_http_error(
        request: Request, exc: StarletteHTTPException
    ) -> JSONResponse:
        code = _HTTP_CODES.get(exc.status_code, "error")
        return _envelope(exc.status_code, code, str(exc.detail))

    @app.exception_handler(RequestValidationError)
    async def _on_request_validation(
        request: Request, exc: RequestValidationError
    ) -> JSONResponse:
        return _envelope(400, "bad-request", "malformed request parameters")

    @app.exception_handler(NotFoundError)
    async def _on_not_found(request: Request, exc: NotFoundError) -> JSONResponse:
        return _envelope(404, "not-found", str(exc))

    @app.exception_handler(ConflictError)
    async def _on_conflict(request: Request, exc: ConflictError) -> JSONResponse:
        return _envelope(409, "conflict", str(exc))

    @app.exception_handler(IntegrityError)
    async def _on_integrity(request: Request, exc: IntegrityError) -> JSONResponse:
        return _envelope(409, "integrity-violation", str(exc))

    @app.exception_handler(QueryError)
    async def _on_query_error(request: Request, exc: QueryError) -> JSONResponse:
        return _envelope(400, "bad-query", str(exc))

    @app.exception_handler(SchemaError)
    async def _on_schema_error(request: Request, exc: SchemaError) -> JSONResponse:
        return _envelope(
            422, "validation-failed", "schema is not valid",
            details={"violations": exc.violations},
        )

    @app.exception_handler(RuleGenerationError)
    async def _on_rule_generation(
        request: Request, exc: RuleGenerationError
    ) -> JSONResponse:
        return _envelope(422, exc.code, str(exc))

    @app.exception_handler(ingest_mod.IngestionError)
    async def _on_ingestion_error(
        request: Request, exc: ingest_mod.IngestionError
    ) -> JSONResponse:
        if isinstance(exc, (ingest_mod.FetchError, ingest_mod.CkanError)):
            status = 502
        elif isinstance(exc, ingest_mod.StateError):
            status = 409
        else:
            status = 422
        return _envelope(status, exc.code, str(exc), exc.details)

    # --- helpers ---------------------------------------------------------

    def authenticate(request: Request) -> User:
        header = request.headers.get("authorization") or ""
        if not header.lower().startswith("bearer "):
            raise ApiError(401, "missing-token", "authentication required")
        token = header[7:].strip()
        user_id = storage.token_user(token, utcnow())
        if user_id is None:
            raise ApiError(401, "invalid-token", "token is unknown or expired")
        return storage.metadata_get("user", user_id)

    def require_owner(user: User, dataset: Dataset) -> None:
        if dataset.owner != user.id:
            raise ApiError(403, "forbidden", "only the dataset owner may do this")

    async def json_body(request: Request) -> dict:
        try:
            body = await request.json()
        except (json.JSONDecodeError, UnicodeDecodeError):
            raise ApiError(400, "bad-request", "request body is not valid JSON")
        if not isinstance(body, dict):
            raise ApiError(400, "bad-request", "request body must be a JSON object")
        return body

    def dataset_of_pool(pool_id: str) -> tuple[ResourcePool, Dataset]:
        pool = storage.metadata_get("pool", pool_id)
        return pool, storage.metadata_get("dataset", pool.dataset_id)

    def dataset_of_resource(resource_id: str):
        resource = storage.metadata_get("resource", resource_id)
        pool, dataset = dataset_of_pool(resource.pool_id)
        return resource, pool, dataset

    def build_query_spec(request: Request) -> tuple[QuerySpec, str]:
        params = request.query_params
        filters = tuple(parse_filter(f) for f in params.getlist("filter"))
        sort = tuple(parse_sort(s) for s in params.getlist("sort"))

        def int_param(name: str) -> Optional[int]:
            raw = params.get(name)
            if raw is None:
                return None
            try:
                return int(raw)
            except ValueError:
                raise ApiError(400, "bad-request", f"malformed {name} {raw!r}")

        limit = int_param("limit")
        offset = int_param("offset") or 0
        fields = params.get("fields")
        projection = (
            tuple(name.strip() for name in fields.split(",")) if fields else None
        )
        format = params.get("format", "json")
        if format not in ("json", "csv"):
            raise ApiError(400, "bad-request", f"unknown format {format!r}")
        spec = QuerySpec(
            filters=filters,
            sort=sort,
            limit=limit,
            offset=offset,
            projection=projection,
        )
        return spec, format

    def csv_stream(dataset_id: str, spec: QuerySpec) -> StreamingResponse:
        stream = storage.export_records(dataset_id, spec, "csv")
        return StreamingResponse(
            stream,
            media_type="text/csv; charset=utf-8",
            headers={
                "Content-Disposition": f'attachment; filename="{dataset_id}.csv"'
            },
        )

    # --- health and accounts ----------------------------------------------

    @app.get("/api/v1/health")
    def health() -> dict:
        return {"status": "ok"}

    @app.post("/api/v1/users", status_code=201)
    async def register_user(request: Request) -> JSONResponse:
        body = await json_body(request)
        username = str(body.get("username") or "").strip()
        email = str(body.get("email") or "").strip()
        password = body.get("password") or ""
        violations = []
        if len(username) < 3:
            violations.append("username must be at least 3 characters")
        if "@" not in email:
            violations.append("email must contain @")
        if not isinstance(password, str) or len(password) < 8:
            violations.append("password must be at least 8 characters")
        if violations:
            raise ApiError(
                422, "validation-failed", "registration input is not valid",
                details={"violations": violations},
            )
        user = User(
            id=new_id(),
            username=username,
            email=email,
            credential_digest=hash_credential(password),
            created_at=utcnow(),
        )
        storage.metadata_put(user)
        return JSONResponse(status_code=201, content=user.to_json())

    @app.post("/api/v1/sessions", status_code=201)
    async def login(request: Request) -> JSONResponse:
        body = await json_body(request)
        username = str(body.get("username") or "")
        password = body.get("password") or ""
        user = storage.user_by_username(username)
        if user is None or not verify_credential(password, user.credential_digest):
            raise ApiError(401, "invalid-credentials", "bad username or password")
        token = new_token()
        expires_at = token_expiry(utcnow())
        storage.token_put(token, user.id, expires_at)
        return JSONResponse(
            status_code=201,
            content={
                "token": token,
                "user_id": user.id,
                "expires_at": timestamp_to_json(expires_at),
            },
        )

    # --- datasets -------------------------------------------------------

    @app.get("/api/v1/datasets")
    def list_datasets() -> dict:
        items = [d.to_json() for d in storage.metadata_list("dataset")]
        return {"items": items, "total": len(items)}

    @app.post("/api/v1/datasets", status_code=201)
    async def create_dataset(request: Request) -> JSONResponse:
        user = authenticate(request)
        body = await json_body(request)
        title = str(body.get("title") or "").strip()
        if not title:
            raise ApiError(
                422, "validation-failed", "dataset input is not valid",
                details={"violations": ["title must be non-empty"]},
            )
        schema = schema_from_json(body.get("schema"))
        dataset = Dataset(
            id=new_id(),
            title=title,
            description=str(body.get("description") or ""),
            tags=frozenset(str(t) for t in body.get("tags") or []),
            owner=user.id,
            schema=schema,
            created_at=utcnow(),
            updated_at=utcnow(),
            license=body.get("license"),
        )
        storage.metadata_put(dataset)
        return JSONResponse(status_code=201, content=dataset.to_json())

    @app.get("/api/v1/datasets/{dataset_id}")
    def show_dataset(dataset_id: str) -> dict:
        return storage.metadata_get("dataset", dataset_id).to_json()

    @app.put("/api/v1/datasets/{dataset_id}")
    async def update_dataset(dataset_id: str, request: Request) -> dict:
        user = authenticate(request)
        dataset = storage.metadata_get("dataset", dataset_id)
        require_owner(user, dataset)
        body = await json_body(request)
        changes: dict[str, Any] = {}
        if "title" in body:
            title = str(body["title"]).strip()
            if not title:
                raise ApiError(
                    422, "validation-failed", "dataset input is not valid",
                    details={"violations": ["title must be non-empty"]},
                )
            changes["title"] = title
        if "description" in body:
            changes["description"] = str(body["description"])
        if "tags" in body:
            changes["tags"] = frozenset(str(t) for t in body["tags"] or [])
        if "license" in body:
            changes["license"] = body["license"]
        if "schema" in body:
            if storage.has_records(dataset_id):
                raise ApiError(
                    409, "schema-frozen",
                    "the schema cannot change once records exist",
                )
            parsed = schema_from_json(body["schema"])
            changes["schema"] = DatasetSchema(
                attributes=parsed.attributes, version=dataset.schema.version + 1
            )
        updated = with_updated(dataset, **changes)
        storage.metadata_put(updated)
        return updated.to_json()

    @app.delete("/api/v1/datasets/{dataset_id}", status_code=204)
    def delete_dataset(dataset_id: str, request: Request) -> Response:
        user = authenticate(request)
        dataset = storage.metadata_get("dataset", dataset_id)
        require_owner(user, dataset)
        cascade = request.query_params.get("cascade") in ("true", "1", "yes")
        storage.metadata_delete("dataset", dataset_id, cascade=cascade)
        return Response(status_code=204)

    @app.get("/api/v1/datasets/{dataset_id}/schema")
    def show_schema(dataset_id: str) -> dict:
        return storage.metadata_get("dataset", dataset_id).schema.to_json()

    # --- data access (public, read-only) ----------------------------------

    @app.get("/api/v1/datasets/{dataset_id}/data")
    def query_data(dataset_id: str, request: Request):
        spec, format = build_query_spec(request)
        if format == "csv":
            return csv_stream(dataset_id, spec)
        result = storage.query_records(dataset_id, spec)
        items = storage.page_items(dataset_id, spec, result)
        return {
            "items": items,
            "total": result.total_matched,
            "limit": result.limit,
            "offset": result.offset,
        }

    @app.get("/api/v1/datasets/{dataset_id}/export")
    def export_data(dataset_id: str, request: Request):
        spec, format = build_query_spec(request)
        if format == "csv":
            return csv_stream(dataset_id, spec)
        stream = storage.export_records(dataset_id, spec, "json")
        return StreamingResponse(stream, media_type="application/json")

    # --- pools ----------------------------------------------------------

    @app.get("/api/v1/datasets/{dataset_id}/pools")
    def list_pools(dataset_id: str) -> dict:
        storage.metadata_get("dataset", dataset_id)
        items = [
            p.to_json()
            for p in storage.metadata_list("pool", dataset_id=dataset_id)
        ]
        return {"items": items, "total": len(items)}

    @app.post("/api/v1/datasets/{dataset_id}/pools", status_code=201)
    async def create_pool(dataset_id: str, request: Request) -> JSONResponse:
        user = authenticate(request)
        dataset = storage.metadata_get("dataset", dataset_id)
        require_owner(user, dataset)
        body = await json_body(request)
        name = str(body.get("name") or "").strip()
        if not name:
            raise ApiError(
                422, "validation-failed", "pool input is not valid",
                details={"violations": ["name must be non-empty"]},
            )
        # rules start as an empty version-0 placeholder until the first PUT
        pool = ResourcePool(
            id=new_id(),
            dataset_id=dataset_id,
            name=name,
            rules=RuleSet(header_row=None, rules=(), version=0),
            created_at=utcnow(),
        )
        storage.metadata_put(pool)
        return JSONResponse(status_code=201, content=pool.to_json())

    @app.get("/api/v1/pools/{pool_id}")
    def show_pool(pool_id: str) -> dict:
        return storage.metadata_get("pool", pool_id).to_json()

    @app.put("/api/v1/pools/{pool_id}/rules")
    async def put_rules(pool_id: str, request: Request) -> dict:
        user = authenticate(request)
        pool, dataset = dataset_of_pool(pool_id)
        require_owner(user, dataset)
        body = await json_body(request)
        if "attributes" in body:
            candidate = generate_rules(RuleInput.from_json(body), dataset.schema)
        else:
            try:
                candidate = RuleSet.from_json(body)
            except (KeyError, TypeError, ValueError):
                raise ApiError(400, "bad-request", "rules body is malformed")
        violations = structural_violations(candidate, dataset.schema)
        _, gaps = coverage_map(candidate, dataset.schema)
        violations.extend(gaps)
        if violations:
            raise ApiError(
                422, "validation-failed", "rules do not validate: "
                + "; ".join(violations),
                details={"violations": violations},
            )
        versioned = RuleSet(
            header_row=candidate.header_row,
            rules=candidate.rules,
            version=pool.rules.version + 1,
        )
        updated = ResourcePool(
            id=pool.id,
            dataset_id=pool.dataset_id,
            name=pool.name,
            rules=versioned,
            created_at=pool.created_at,
        )
        storage.metadata_put(updated)
        return updated.to_json()

    @app.post("/api/v1/pools/{pool_id}/preview")
    async def preview_rules(pool_id: str, request: Request) -> dict:
        user = authenticate(request)
        pool, dataset = dataset_of_pool(pool_id)
        require_owner(user, dataset)
        body = await json_body(request)
        resource_id = body.get("resource_id")
        if not resource_id:
            raise ApiError(400, "bad-request", "preview needs a resource_id")
        resource = storage.metadata_get("resource", str(resource_id))
        if resource.pool_id != pool.id:
            raise ApiError(
                409, "conflict", "resource belongs to a different pool"
            )
        if resource.checksum is None:
            raise ApiError(
                409, "invalid-state", "resource payload has not been fetched"
            )
        n = body.get("n", config.sample_rows)
        if not isinstance(n, int) or isinstance(n, bool) or n < 1:
            raise ApiError(400, "bad-request", "n must be a positive integer")
        rules_body = body.get("rules")
        if not isinstance(rules_body, dict):
            raise ApiError(400, "bad-request", "preview needs a rules object")
        payload = storage.payload_get(resource.checksum)

        def sample_with(header_row):
            try:
                return parse_table(payload, resource.format, header_row, limit=n)
            except (EncodingError, UnterminatedQuoteError) as exc:
                raise ApiError(422, "transform-failed", str(exc))

        if "attributes" in rules_body:
            rule_input = RuleInput.from_json(rules_body)
            sample = sample_with(rule_input.header_row)
            candidate = generate_rules(rule_input, dataset.schema, sample)
        else:
            try:
                candidate = RuleSet.from_json(rules_body)
            except (KeyError, TypeError, ValueError):
                raise ApiError(400, "bad-request", "rules body is malformed")
            sample = sample_with(candidate.header_row)
        report = validate_rules(candidate, dataset.schema, sample)
        response = report.to_json()
        response["rules"] = candidate.to_json()
        return response

    # --- resources --------------------------------------------------------

    @app.post("/api/v1/pools/{pool_id}/resources", status_code=201)
    async def add_resource(pool_id: str, request: Request) -> JSONResponse:
        user = authenticate(request)
        pool, dataset = dataset_of_pool(pool_id)
        require_owner(user, dataset)
        content_type = (request.headers.get("content-type") or "").lower()
        if content_type.startswith("multipart/form-data"):
            form = await request.form()
            upload = form.get("file")
            if upload is None or isinstance(upload, str):
                raise ApiError(400, "bad-request", "multipart body needs a file part")
            payload = await upload.read()
            filename = str(form.get("filename") or upload.filename or "upload")
            origin = UploadOrigin(filename=filename)
            resource = ingestor.register_resource(
                pool_id,
                origin,
                payload=payload,
                format_override=form.get("format") or None,
                content_type=upload.content_type,
            )
        else:
            body = await json_body(request)
            try:
                origin = origin_from_json(body.get("origin"))
            except (KeyError, TypeError, ValueError) as exc:
                raise ApiError(422, "validation-failed", f"bad origin: {exc}")
            if isinstance(origin, UploadOrigin):
                raise ApiError(
                    400, "bad-request",
                    "upload origins require a multipart request with a file part",
                )
            resource = ingestor.register_resource(
                pool_id, origin, format_override=body.get("format")
            )
        return JSONResponse(status_code=201, content=resource.to_json())

    @app.get("/api/v1/resources/{resource_id}")
    def show_resource(resource_id: str) -> dict:
        return storage.metadata_get("resource", resource_id).to_json()

    @app.get("/api/v1/resources/{resource_id}/sample")
    def sample_resource(resource_id: str, request: Request) -> dict:
        params = request.query_params

        def int_param(name: str) -> Optional[int]:
            raw = params.get(name)
            if raw is None:
                return None
            try:
                return int(raw)
            except ValueError:
                raise ApiError(400, "bad-request", f"malformed {name} {raw!r}")

        n = int_param("n")
        header_row = int_param("header_row")
        try:
            table = ingestor.sample_resource(resource_id, n=n, header_row=header_row)
        except (EncodingError, UnterminatedQuoteError) as exc:
            raise ApiError(422, "transform-failed", str(exc))
        return {
            "headers": table.headers,
            "rows": table.rows,
            "source_offsets": table.source_offsets,
        }

    @app.post("/api/v1/resources/{resource_id}/fetch")
    def fetch_resource(resource_id: str, request: Request) -> dict:
        user = authenticate(request)
        _, _, dataset = dataset_of_resource(resource_id)
        require_owner(user, dataset)
        return ingestor.fetch(resource_id).to_json()

    @app.post("/api/v1/resources/{resource_id}/ingest")
    def ingest_resource(resource_id: str, request: Request) -> dict:
        user = authenticate(request)
        _, _, dataset = dataset_of_resource(resource_id)
        require_owner(user, dataset)
        return ingestor.ingest_resource(resource_id).to_json()

    return app


def serve(config: ServiceConfig) -> None:
    """Open the store, build the app, and block serving it."""
    storage = Storage(config.store_path)
    app = create_app(storage, config)
    uvicorn.run(app, host=config.host, port=config.port, log_level="warning")
