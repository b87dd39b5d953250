#!/usr/bin/env python3
"""Full publishing walkthrough against a throwaway local service.

Boots the HTTP service on an ephemeral port with an in-memory store,
publishes the thirty-day fisheries corpus plus the alternate-layout file
through the public API, then queries, filters and exports like a consumer
would. Prints what happened at every step. Nothing persists.
"""

from __future__ import annotations

import sys
import threading
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

import requests
import uvicorn

from datameld.api import create_app
from datameld.config import ServiceConfig
from datameld.sampledata import (
    FISHERIES_SCHEMA_JSON,
    fisheries_rules_a,
    fisheries_rules_b,
    make_daily_files,
    make_layout_b_file,
)
from datameld.store import Storage


def start_server() -> tuple[str, uvicorn.Server, threading.Thread]:
    app = create_app(Storage(":memory:"), ServiceConfig())
    config = uvicorn.Config(app, host="127.0.0.1", port=0, log_level="error")
    server = uvicorn.Server(config)
    thread = threading.Thread(target=server.run, daemon=True)
    thread.start()
    while not server.started:
        time.sleep(0.01)
    port = server.servers[0].sockets[0].getsockname()[1]
    return f"http://127.0.0.1:{port}", server, thread


def main() -> None:
    base, server, thread = start_server()
    print(f"service up at {base}")
    try:
        run_scenario(base)
    finally:
        server.should_exit = True
        thread.join(timeout=5)
        print("service stopped")


def run_scenario(base: str) -> None:
    s = requests.Session()

    r = s.post(f"{base}/api/v1/users", json={
        "username": "demo", "email": "demo@example.net", "password": "north-coast-5",
    })
    r.raise_for_status()
    token = s.post(f"{base}/api/v1/sessions", json={
        "username": "demo", "password": "north-coast-5",
    }).json()["token"]
    s.headers["Authorization"] = f"Bearer {token}"
    print("registered and logged in as 'demo'")

    dataset = s.post(f"{base}/api/v1/datasets", json={
        "title": "Wholesale fish markets",
        "description": "Daily wholesale market reports, aggregated",
        "tags": ["fisheries", "markets"],
        "schema": FISHERIES_SCHEMA_JSON,
    }).json()
    print(f"created dataset {dataset['id']} ({dataset['title']})")

    pool_a = s.post(f"{base}/api/v1/datasets/{dataset['id']}/pools",
                    json={"name": "daily reports"}).json()
    s.put(f"{base}/api/v1/pools/{pool_a['id']}/rules",
          json=fisheries_rules_a().to_json()).raise_for_status()

    produced = rejected = 0
    for day in make_daily_files(days=30):
        resource = s.post(
            f"{base}/api/v1/pools/{pool_a['id']}/resources",
            files={"file": (day.name, day.text.encode(), "text/csv")},
        ).json()
        report = s.post(f"{base}/api/v1/resources/{resource['id']}/ingest").json()
        produced += report["records_produced"]
        rejected += report["rows_rejected"]
    print(f"pool 'daily reports': 30 files, {produced} records, {rejected} rows rejected")

    # same dataset, second pool for the differently shaped report
    pool_b = s.post(f"{base}/api/v1/datasets/{dataset['id']}/pools",
                    json={"name": "alternate layout"}).json()
    s.put(f"{base}/api/v1/pools/{pool_b['id']}/rules",
          json=fisheries_rules_b().to_json()).raise_for_status()
    other = make_layout_b_file()
    resource = s.post(
        f"{base}/api/v1/pools/{pool_b['id']}/resources",
        files={"file": (other.name, other.text.encode(), "text/csv")},
    ).json()
    report = s.post(f"{base}/api/v1/resources/{resource['id']}/ingest").json()
    print(f"pool 'alternate layout': 1 file, {report['records_produced']} records")

    total = s.get(f"{base}/api/v1/datasets/{dataset['id']}/data",
                  params={"limit": 1}).json()["total"]
    print(f"dataset now serves {total} records")

    page = s.get(
        f"{base}/api/v1/datasets/{dataset['id']}/data",
        params=[("filter", "species:eq:Carite"), ("sort", "date:asc"), ("limit", "5")],
    ).json()
    print(f"\nfirst Carite records of {page['total']} matching:")
    for item in page["items"]:
        print(f"  {item['date']}  {item['species']:<10} {item['price']:>8}  {item['volume_kg']:>4} kg")

    csv_export = s.get(
        f"{base}/api/v1/datasets/{dataset['id']}/export",
        params=[("filter", "price:gte:50"), ("format", "csv")],
    )
    lines = csv_export.text.splitlines()
    print(f"\nCSV export of price >= 50: {len(lines) - 1} records")
    for line in lines[:4]:
        print(f"  {line}")


if __name__ == "__main__":
    main()
