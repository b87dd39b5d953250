"""Command-line client for the platform, plus the `serve` entry point.

Every subcommand except `serve` talks to a running service over HTTP, so the
CLI and any other API consumer see exactly the same behavior. In
``--output json`` mode the response body is passed through byte-identically;
table mode renders a readable summary.

Exit codes: 0 success, 1 request or validation failure reported by the
service (or connection failure), 2 usage error.
"""

from __future__ import annotations

import json
import sys
from dataclasses import dataclass
from typing import Any, Optional

import click
import requests

from .config import ServiceConfig, config_from_env

REQUEST_TIMEOUT_S = 120

# route → subcommand map; the contract-coverage test walks the app's route
# table against this, so adding a route without a command fails the suite
ROUTES_TO_COMMANDS: dict[tuple[str, str], str] = {
    ("GET", "/api/v1/health"): "health",
    ("POST", "/api/v1/users"): "register",
    ("POST", "/api/v1/sessions"): "login",
    ("GET", "/api/v1/datasets"): "dataset list",
    ("POST", "/api/v1/datasets"): "dataset create",
    ("GET", "/api/v1/datasets/{dataset_id}"): "dataset show",
    ("PUT", "/api/v1/datasets/{dataset_id}"): "dataset update",
    ("DELETE", "/api/v1/datasets/{dataset_id}"): "dataset delete",
    ("GET", "/api/v1/datasets/{dataset_id}/schema"): "dataset schema",
    ("GET", "/api/v1/datasets/{dataset_id}/data"): "data query",
    ("GET", "/api/v1/datasets/{dataset_id}/export"): "export",
    ("GET", "/api/v1/datasets/{dataset_id}/pools"): "pool list",
    ("POST", "/api/v1/datasets/{dataset_id}/pools"): "pool create",
    ("GET", "/api/v1/pools/{pool_id}"): "pool show",
    ("PUT", "/api/v1/pools/{pool_id}/rules"): "pool set-rules",
    ("POST", "/api/v1/pools/{pool_id}/preview"): "preview",
    ("POST", "/api/v1/pools/{pool_id}/resources"): "resource upload",
    ("GET", "/api/v1/resources/{resource_id}"): "resource status",
    ("GET", "/api/v1/resources/{resource_id}/sample"): "resource sample",
    ("POST", "/api/v1/resources/{resource_id}/fetch"): "resource fetch",
    ("POST", "/api/v1/resources/{resource_id}/ingest"): "resource ingest",
}


@dataclass
class ClientContext:
    server: str
    token: Optional[str]
    output: str

    def request(
        self, method: str, path: str, **kwargs: Any
    ) -> requests.Response:
        headers = dict(kwargs.pop("headers", {}))
        if self.token:
            headers["Authorization"] = f"Bearer {self.token}"
        url = self.server.rstrip("/") + path
        try:
            return requests.request(
                method, url, headers=headers, timeout=REQUEST_TIMEOUT_S, **kwargs
            )
        except requests.RequestException as exc:
            click.echo(f"error: cannot reach {self.server}: {exc}", err=True)
            sys.exit(1)


def _render_table(payload: Any) -> str:
    if isinstance(payload, dict) and isinstance(payload.get("items"), list):
        items = payload["items"]
        if items and all(isinstance(i, dict) for i in items):
            columns: list[str] = []
            for item in items:
                for key in item:
                    if key not in columns:
                        columns.append(key)
            cells = [
                [_short(item.get(c)) for c in columns] for item in items
            ]
            widths = [
                max(len(col), *(len(row[i]) for row in cells))
                for i, col in enumerate(columns)
            ]
            lines = [
                "  ".join(col.ljust(widths[i]) for i, col in enumerate(columns))
            ]
            for row in cells:
                lines.append(
                    "  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row))
                )
            extras = {k: v for k, v in payload.items() if k != "items"}
            if extras:
                lines.append(json.dumps(extras))
            return "\n".join(lines)
    if isinstance(payload, dict):
        return "\n".join(f"{k}: {_short(v, 120)}" for k, v in payload.items())
    return json.dumps(payload, indent=2)


def _short(value: Any, cap: int = 48) -> str:
    text = value if isinstance(value, str) else json.dumps(value)
    return text if len(text) <= cap else text[: cap - 1] + "…"


def emit(ctx: ClientContext, response: requests.Response) -> None:
    """Print a response and exit nonzero on API failure."""
    content_type = response.headers.get("content-type", "")
    if ctx.output == "json" or content_type.startswith("text/csv"):
        sys.stdout.buffer.write(response.content)
        sys.stdout.buffer.flush()
    else:
        if response.content:
            try:
                payload = response.json()
            except ValueError:
                payload = None
            if payload is not None:
                click.echo(_render_table(payload))
            else:
                click.echo(response.text)
    if response.status_code >= 400:
        try:
            body = response.json()
        except ValueError:
            body = {}
        code = body.get("code", response.status_code)
        message = body.get("message", response.reason)
        click.echo(f"error {code}: {message}", err=True)
        for violation in (body.get("details") or {}).get("violations", []):
            click.echo(f"  - {violation}", err=True)
        sys.exit(1)


def _query_params(
    filters: tuple[str, ...],
    sorts: tuple[str, ...],
    limit: Optional[int],
    offset: Optional[int],
    fields: Optional[str],
    format: Optional[str],
) -> list[tuple[str, str]]:
    params: list[tuple[str, str]] = [("filter", f) for f in filters]
    params += [("sort", s) for s in sorts]
    if limit is not None:
        params.append(("limit", str(limit)))
    if offset is not None:
        params.append(("offset", str(offset)))
    if fields:
        params.append(("fields", fields))
    if format:
        params.append(("format", format))
    return params


@click.group()
@click.option(
    "--server",
    envvar="DATAMELD_SERVER",
    default="http://127.0.0.1:8000",
    show_default=True,
    help="Base URL of the service.",
)
@click.option(
    "--token",
    envvar="DATAMELD_TOKEN",
    default=None,
    help="Bearer token (or set DATAMELD_TOKEN).",
)
@click.option(
    "--output",
    type=click.Choice(["json", "table"]),
    default="table",
    show_default=True,
    help="json passes response bodies through byte-for-byte.",
)
@click.pass_context
def main(ctx: click.Context, server: str, token: Optional[str], output: str) -> None:
    """Publish, transform and query open datasets over the platform API."""
    ctx.obj = ClientContext(server=server, token=token, output=output)


@main.command()
@click.option("--host", default=None)
@click.option("--port", type=int, default=None)
@click.option("--store", default=None, help="sqlite file path, or :memory:")
@click.option("--sample-rows", type=int, default=None)
@click.option("--fetch-timeout", type=float, default=None)
@click.option("--fetch-max-bytes", type=int, default=None)
@click.option("--fetch-max-redirects", type=int, default=None)
def serve(
    host: Optional[str],
    port: Optional[int],
    store: Optional[str],
    sample_rows: Optional[int],
    fetch_timeout: Optional[float],
    fetch_max_bytes: Optional[int],
    fetch_max_redirects: Optional[int],
) -> None:
    """Run the HTTP service locally (blocks until stopped)."""
    from .api import serve as run_service

    base = config_from_env()
    config = ServiceConfig(
        host=host if host is not None else base.host,
        port=port if port is not None else base.port,
        store_path=store if store is not None else base.store_path,
        sample_rows=sample_rows if sample_rows is not None else base.sample_rows,
        fetch_timeout_s=(
            fetch_timeout if fetch_timeout is not None else base.fetch_timeout_s
        ),
        fetch_max_bytes=(
            fetch_max_bytes if fetch_max_bytes is not None else base.fetch_max_bytes
        ),
        fetch_max_redirects=(
            fetch_max_redirects
            if fetch_max_redirects is not None
            else base.fetch_max_redirects
        ),
    )
    run_service(config)


@main.command()
@click.pass_obj
def health(ctx: ClientContext) -> None:
    """Check that the service is up."""
    emit(ctx, ctx.request("GET", "/api/v1/health"))


@main.command()
@click.option("--username", required=True)
@click.option("--email", required=True)
@click.option("--password", required=True)
@click.pass_obj
def register(ctx: ClientContext, username: str, email: str, password: str) -> None:
    """Create a publishing account."""
    emit(
        ctx,
        ctx.request(
            "POST",
            "/api/v1/users",
            json={"username": username, "email": email, "password": password},
        ),
    )


@main.command()
@click.option("--username", required=True)
@click.option("--password", required=True)
@click.pass_obj
def login(ctx: ClientContext, username: str, password: str) -> None:
    """Exchange credentials for a bearer token."""
    emit(
        ctx,
        ctx.request(
            "POST",
            "/api/v1/sessions",
            json={"username": username, "password": password},
        ),
    )


# --- dataset ------------------------------------------------------------


@main.group()
def dataset() -> None:
    """Create and manage datasets."""


@dataset.command("create")
@click.option("--title", required=True)
@click.option("--description", default="")
@click.option("--tags", default="", help="Comma-separated tag list.")
@click.option("--license", "license_", default=None)
@click.option(
    "--schema-file",
    required=True,
    type=click.Path(exists=True, dir_okay=False, allow_dash=True),
    help="JSON file holding {attributes: [...]}.",
)
@click.pass_obj
def dataset_create(
    ctx: ClientContext,
    title: str,
    description: str,
    tags: str,
    license_: Optional[str],
    schema_file: str,
) -> None:
    """Create a dataset from a schema definition file."""
    with click.open_file(schema_file, "r") as handle:
        schema = json.load(handle)
    body = {
        "title": title,
        "description": description,
        "tags": [t.strip() for t in tags.split(",") if t.strip()],
        "license": license_,
        "schema": schema,
    }
    emit(ctx, ctx.request("POST", "/api/v1/datasets", json=body))


@dataset.command("list")
@click.pass_obj
def dataset_list(ctx: ClientContext) -> None:
    emit(ctx, ctx.request("GET", "/api/v1/datasets"))


@dataset.command("show")
@click.argument("dataset_id")
@click.pass_obj
def dataset_show(ctx: ClientContext, dataset_id: str) -> None:
    emit(ctx, ctx.request("GET", f"/api/v1/datasets/{dataset_id}"))


@dataset.command("schema")
@click.argument("dataset_id")
@click.pass_obj
def dataset_schema(ctx: ClientContext, dataset_id: str) -> None:
    emit(ctx, ctx.request("GET", f"/api/v1/datasets/{dataset_id}/schema"))


@dataset.command("update")
@click.argument("dataset_id")
@click.option("--title", default=None)
@click.option("--description", default=None)
@click.option("--tags", default=None, help="Comma-separated tag list.")
@click.option("--license", "license_", default=None)
@click.option(
    "--schema-file",
    default=None,
    type=click.Path(exists=True, dir_okay=False, allow_dash=True),
)
@click.pass_obj
def dataset_update(
    ctx: ClientContext,
    dataset_id: str,
    title: Optional[str],
    description: Optional[str],
    tags: Optional[str],
    license_: Optional[str],
    schema_file: Optional[str],
) -> None:
    body: dict[str, Any] = {}
    if title is not None:
        body["title"] = title
    if description is not None:
        body["description"] = description
    if tags is not None:
        body["tags"] = [t.strip() for t in tags.split(",") if t.strip()]
    if license_ is not None:
        body["license"] = license_
    if schema_file is not None:
        with click.open_file(schema_file, "r") as handle:
            body["schema"] = json.load(handle)
    if not body:
        raise click.UsageError("nothing to update")
    emit(ctx, ctx.request("PUT", f"/api/v1/datasets/{dataset_id}", json=body))


@dataset.command("delete")
@click.argument("dataset_id")
@click.option("--cascade", is_flag=True, help="Also delete pools and resources.")
@click.pass_obj
def dataset_delete(ctx: ClientContext, dataset_id: str, cascade: bool) -> None:
    params = {"cascade": "true"} if cascade else {}
    emit(
        ctx,
        ctx.request("DELETE", f"/api/v1/datasets/{dataset_id}", params=params),
    )


# --- pool ----------------------------------------------------------------


@main.group()
def pool() -> None:
    """Group resources that share one rule set."""


@pool.command("create")
@click.option("--dataset", "dataset_id", required=True)
@click.option("--name", required=True)
@click.pass_obj
def pool_create(ctx: ClientContext, dataset_id: str, name: str) -> None:
    emit(
        ctx,
        ctx.request(
            "POST", f"/api/v1/datasets/{dataset_id}/pools", json={"name": name}
        ),
    )


@pool.command("list")
@click.option("--dataset", "dataset_id", required=True)
@click.pass_obj
def pool_list(ctx: ClientContext, dataset_id: str) -> None:
    emit(ctx, ctx.request("GET", f"/api/v1/datasets/{dataset_id}/pools"))


@pool.command("show")
@click.argument("pool_id")
@click.pass_obj
def pool_show(ctx: ClientContext, pool_id: str) -> None:
    emit(ctx, ctx.request("GET", f"/api/v1/pools/{pool_id}"))


@pool.command("set-rules")
@click.argument("pool_id")
@click.option(
    "--rules-file",
    required=True,
    type=click.Path(exists=True, dir_okay=False, allow_dash=True),
    help="JSON rule set, or per-attribute choices to generate one from.",
)
@click.pass_obj
def pool_set_rules(ctx: ClientContext, pool_id: str, rules_file: str) -> None:
    with click.open_file(rules_file, "r") as handle:
        rules = json.load(handle)
    emit(ctx, ctx.request("PUT", f"/api/v1/pools/{pool_id}/rules", json=rules))


@main.command()
@click.option("--pool", "pool_id", required=True)
@click.option("--resource", "resource_id", required=True)
@click.option(
    "--rules-file",
    required=True,
    type=click.Path(exists=True, dir_okay=False, allow_dash=True),
)
@click.option("-n", "sample_size", type=int, default=None, help="Sample row count.")
@click.pass_obj
def preview(
    ctx: ClientContext,
    pool_id: str,
    resource_id: str,
    rules_file: str,
    sample_size: Optional[int],
) -> None:
    """Dry-run candidate rules over a resource sample."""
    with click.open_file(rules_file, "r") as handle:
        rules = json.load(handle)
    body: dict[str, Any] = {"resource_id": resource_id, "rules": rules}
    if sample_size is not None:
        body["n"] = sample_size
    emit(ctx, ctx.request("POST", f"/api/v1/pools/{pool_id}/preview", json=body))


# --- resource ----------------------------------------------------------


@main.group()
def resource() -> None:
    """Register, fetch and ingest raw inputs."""


@resource.command("upload")
@click.option("--pool", "pool_id", required=True)
@click.option(
    "--file",
    "file_path",
    required=True,
    type=click.Path(exists=True, dir_okay=False, allow_dash=True),
    help="Payload path, or - for stdin.",
)
@click.option("--filename", default=None, help="Recorded name (defaults to the path name).")
@click.option("--format", "format_", type=click.Choice(["csv", "tsv"]), default=None)
@click.pass_obj
def resource_upload(
    ctx: ClientContext,
    pool_id: str,
    file_path: str,
    filename: Optional[str],
    format_: Optional[str],
) -> None:
    with click.open_file(file_path, "rb") as handle:
        payload = handle.read()
    name = filename or (file_path.rsplit("/", 1)[-1] if file_path != "-" else "stdin")
    data = {}
    if format_:
        data["format"] = format_
    emit(
        ctx,
        ctx.request(
            "POST",
            f"/api/v1/pools/{pool_id}/resources",
            files={"file": (name, payload)},
            data=data,
        ),
    )


@resource.command("link")
@click.option("--pool", "pool_id", required=True)
@click.option("--url", default=None, help="Direct file URL.")
@click.option("--ckan-base", default=None, help="CKAN portal base URL.")
@click.option("--ckan-id", default=None, help="CKAN resource id.")
@click.option("--format", "format_", type=click.Choice(["csv", "tsv"]), default=None)
@click.pass_obj
def resource_link(
    ctx: ClientContext,
    pool_id: str,
    url: Optional[str],
    ckan_base: Optional[str],
    ckan_id: Optional[str],
    format_: Optional[str],
) -> None:
    """Register a remote file by URL or CKAN reference."""
    if url and (ckan_base or ckan_id):
        raise click.UsageError("pass either --url or --ckan-base/--ckan-id, not both")
    if url:
        origin: dict[str, Any] = {"type": "url", "url": url}
    elif ckan_base and ckan_id:
        origin = {
            "type": "ckan_link",
            "base_url": ckan_base,
            "ckan_resource_id": ckan_id,
        }
    else:
        raise click.UsageError("pass --url, or both --ckan-base and --ckan-id")
    body: dict[str, Any] = {"origin": origin}
    if format_:
        body["format"] = format_
    emit(ctx, ctx.request("POST", f"/api/v1/pools/{pool_id}/resources", json=body))


@resource.command("status")
@click.argument("resource_id")
@click.pass_obj
def resource_status(ctx: ClientContext, resource_id: str) -> None:
    emit(ctx, ctx.request("GET", f"/api/v1/resources/{resource_id}"))


@resource.command("sample")
@click.argument("resource_id")
@click.option("-n", "sample_size", type=int, default=None)
@click.option("--header-row", type=int, default=None)
@click.pass_obj
def resource_sample(
    ctx: ClientContext,
    resource_id: str,
    sample_size: Optional[int],
    header_row: Optional[int],
) -> None:
    params: dict[str, str] = {}
    if sample_size is not None:
        params["n"] = str(sample_size)
    if header_row is not None:
        params["header_row"] = str(header_row)
    emit(
        ctx,
        ctx.request(
            "GET", f"/api/v1/resources/{resource_id}/sample", params=params
        ),
    )


@resource.command("fetch")
@click.argument("resource_id")
@click.pass_obj
def resource_fetch(ctx: ClientContext, resource_id: str) -> None:
    emit(ctx, ctx.request("POST", f"/api/v1/resources/{resource_id}/fetch"))


@resource.command("ingest")
@click.argument("resource_id")
@click.pass_obj
def resource_ingest(ctx: ClientContext, resource_id: str) -> None:
    emit(ctx, ctx.request("POST", f"/api/v1/resources/{resource_id}/ingest"))


# --- data ---------------------------------------------------------------


@main.group()
def data() -> None:
    """Query aggregated records."""


@data.command("query")
@click.option("--dataset", "dataset_id", required=True)
@click.option("--filter", "filters", multiple=True, help="attribute:op:operand")
@click.option("--sort", "sorts", multiple=True, help="attribute:asc|desc")
@click.option("--limit", type=int, default=None)
@click.option("--offset", type=int, default=None)
@click.option("--fields", default=None, help="Comma-separated projection.")
@click.option("--format", "format_", type=click.Choice(["json", "csv"]), default=None)
@click.pass_obj
def data_query(
    ctx: ClientContext,
    dataset_id: str,
    filters: tuple[str, ...],
    sorts: tuple[str, ...],
    limit: Optional[int],
    offset: Optional[int],
    fields: Optional[str],
    format_: Optional[str],
) -> None:
    params = _query_params(filters, sorts, limit, offset, fields, format_)
    emit(
        ctx,
        ctx.request("GET", f"/api/v1/datasets/{dataset_id}/data", params=params),
    )


@main.command()
@click.option("--dataset", "dataset_id", required=True)
@click.option("--filter", "filters", multiple=True, help="attribute:op:operand")
@click.option("--sort", "sorts", multiple=True, help="attribute:asc|desc")
@click.option("--limit", type=int, default=None)
@click.option("--offset", type=int, default=None)
@click.option("--fields", default=None, help="Comma-separated projection.")
@click.option(
    "--format", "format_", type=click.Choice(["json", "csv"]), default="csv",
    show_default=True,
)
@click.option(
    "--out",
    required=True,
    type=click.Path(dir_okay=False, allow_dash=True),
    help="Destination file, or - for stdout.",
)
@click.pass_obj
def export(
    ctx: ClientContext,
    dataset_id: str,
    filters: tuple[str, ...],
    sorts: tuple[str, ...],
    limit: Optional[int],
    offset: Optional[int],
    fields: Optional[str],
    format_: str,
    out: str,
) -> None:
    """Download every matching record as CSV or JSON."""
    params = _query_params(filters, sorts, limit, offset, fields, format_)
    response = ctx.request(
        "GET", f"/api/v1/datasets/{dataset_id}/export", params=params
    )
    if response.status_code >= 400:
        emit(ctx, response)
        return
    with click.open_file(out, "wb") as handle:
        handle.write(response.content)
    if out != "-":
        click.echo(f"wrote {len(response.content)} bytes to {out}", err=True)


if __name__ == "__main__":
    main()
