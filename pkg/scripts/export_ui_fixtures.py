#!/usr/bin/env python3
"""Regenerate the frontend test fixtures from the real backend.

Runs the service in-process, publishes the thirty-day fisheries corpus,
and snapshots the exact wire payloads the web client consumes: a preview
report (clean and uncovered variants), an ingestion report, the paged
Carite query responses, and the folded trend series computed by the
independent oracle. The web suite asserts against these files, so the UI
is always tested against payloads the actual service produced.

Counts are pinned: regeneration fails loudly if the corpus drifts.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT / "src"))
sys.path.insert(0, str(ROOT / "tests"))

from fastapi.testclient import TestClient

from datameld.api import create_app
from datameld.config import ServiceConfig
from datameld.rules import Rule, RuleSet
from datameld.sampledata import (
    FISHERIES_SCHEMA_JSON,
    fisheries_rules_a,
    make_daily_files,
)
from datameld.store import Storage

from oracles import fold_series

FIXTURES = ROOT / "frontend" / "tests" / "fixtures"
PAGE_SIZE = 50


def publish(client: TestClient) -> dict:
    r = client.post("/api/v1/users", json={
        "username": "fixtures", "email": "fixtures@example.net",
        "password": "leeward-side-3",
    })
    assert r.status_code == 201, r.text
    token = client.post("/api/v1/sessions", json={
        "username": "fixtures", "password": "leeward-side-3",
    }).json()["token"]
    headers = {"Authorization": f"Bearer {token}"}

    dataset = client.post("/api/v1/datasets", headers=headers, json={
        "title": "Wholesale fish markets",
        "description": "Daily wholesale market reports, aggregated",
        "tags": ["fisheries", "markets"],
        "schema": FISHERIES_SCHEMA_JSON,
    }).json()
    pool = client.post(
        f"/api/v1/datasets/{dataset['id']}/pools", headers=headers,
        json={"name": "daily reports"},
    ).json()
    r = client.put(
        f"/api/v1/pools/{pool['id']}/rules", headers=headers,
        json=fisheries_rules_a().to_json(),
    )
    assert r.status_code == 200, r.text

    first_report = None
    first_resource = None
    for day in make_daily_files(days=30):
        resource = client.post(
            f"/api/v1/pools/{pool['id']}/resources", headers=headers,
            files={"file": (day.name, day.text.encode(), "text/csv")},
        ).json()
        report = client.post(
            f"/api/v1/resources/{resource['id']}/ingest", headers=headers
        ).json()
        if first_report is None:
            first_report, first_resource = report, resource
    return {
        "headers": headers,
        "dataset": dataset,
        "pool": pool,
        "first_resource": first_resource,
        "first_report": first_report,
    }


def carite_pages(client: TestClient, dataset_id: str) -> list[dict]:
    pages = []
    offset = 0
    while True:
        params = [
            ("filter", "species:eq:Carite"),
            ("sort", "date:asc"),
            ("limit", str(PAGE_SIZE)),
            ("offset", str(offset)),
        ]
        r = client.get(f"/api/v1/datasets/{dataset_id}/data", params=params)
        assert r.status_code == 200, r.text
        body = r.json()
        pages.append({"params": dict(params), "body": body})
        if len(body["items"]) < PAGE_SIZE:
            return pages
        offset += PAGE_SIZE


def uncovered_rules() -> dict:
    kept = [r for r in fisheries_rules_a().rules if r.target_attribute != "price"]
    return RuleSet(header_row=0, rules=tuple(kept), version=1).to_json()


def write(name: str, payload) -> None:
    path = FIXTURES / name
    path.write_text(json.dumps(payload, indent=2) + "\n")
    print(f"wrote {path.relative_to(ROOT)}")


def main() -> None:
    FIXTURES.mkdir(parents=True, exist_ok=True)
    app = create_app(Storage(":memory:"), ServiceConfig(sample_rows=50))
    with TestClient(app) as client:
        ids = publish(client)
        dataset_id = ids["dataset"]["id"]

        dataset = client.get(f"/api/v1/datasets/{dataset_id}").json()
        write("dataset.json", dataset)

        report = ids["first_report"]
        assert report["records_produced"] == 20 and report["rows_rejected"] == 0
        write("ingest_report.json", report)

        preview = client.post(
            f"/api/v1/pools/{ids['pool']['id']}/preview",
            headers=ids["headers"],
            json={
                "resource_id": ids["first_resource"]["id"],
                "rules": fisheries_rules_a().to_json(),
                "n": 10,
            },
        )
        assert preview.status_code == 200, preview.text
        body = preview.json()
        assert body["ok"] is True and len(body["sample_outcomes"]) == 10
        write("preview_report.json", body)

        uncovered = client.post(
            f"/api/v1/pools/{ids['pool']['id']}/preview",
            headers=ids["headers"],
            json={
                "resource_id": ids["first_resource"]["id"],
                "rules": uncovered_rules(),
                "n": 10,
            },
        )
        body = uncovered.json()
        assert body["ok"] is False and "price uncovered" in body["violations"]
        write("preview_uncovered.json", body)

        # a file with corrupted rows, so the preview carries error cells
        dirty = next(f for f in make_daily_files(days=30) if f.bad_row_count > 0)
        resource = client.post(
            f"/api/v1/pools/{ids['pool']['id']}/resources",
            headers=ids["headers"],
            files={"file": (f"dirty_{dirty.name}", dirty.text.encode(), "text/csv")},
        ).json()
        errored = client.post(
            f"/api/v1/pools/{ids['pool']['id']}/preview",
            headers=ids["headers"],
            json={
                "resource_id": resource["id"],
                "rules": fisheries_rules_a().to_json(),
                "n": 20,
            },
        )
        body = errored.json()
        error_cells = [
            cell
            for outcome in body["sample_outcomes"]
            for cell in outcome["cells"].values()
            if "error" in cell
        ]
        assert error_cells, "dirty preview fixture carries no error cells"
        write("preview_with_errors.json", body)

        pages = carite_pages(client, dataset_id)
        write("carite_pages.json", pages)

        rows = [item for page in pages for item in page["body"]["items"]]
        series = fold_series(rows, "date", "volume_kg")
        assert len(rows) == 94, f"expected 94 Carite records, got {len(rows)}"
        assert len(series) == 30, f"expected 30 points, got {len(series)}"
        assert series[0] == ("2016-03-01", 1157), series[0]
        assert sum(y for _, y in series) == 24278
        write("expected_series.json", [[x, y] for x, y in series])


if __name__ == "__main__":
    main()
