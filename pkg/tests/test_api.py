"""HTTP surface: auth, CRUD, rules, preview, data access, error envelope."""

from __future__ import annotations

import json
from datetime import timedelta

import pytest

from conftest import PASSWORD, register_and_login, value_multiset
from datameld.model import utcnow
from datameld.sampledata import (
    FISHERIES_SCHEMA_JSON,
    fisheries_rules_a,
    fisheries_schema,
    make_daily_files,
)
from test_ingest import StubServer

DAY_ONE = make_daily_files(days=1)[0]

RULE_INPUT_BODY = {
    "attributes": {
        "date": {"mode": "date", "source": "Date", "pattern": "%d/%m/%Y"},
        "species": {"mode": "map", "source": "Produce"},
        "price": {"mode": "map", "source": "Price"},
        "volume_kg": {"mode": "map", "source": "Volume"},
    },
    "header_row": 0,
}


def create_dataset(client, headers, title="Wholesale fish markets") -> dict:
    r = client.post(
        "/api/v1/datasets",
        json={
            "title": title,
            "description": "Daily wholesale market reports",
            "tags": ["fisheries", "prices"],
            "schema": FISHERIES_SCHEMA_JSON,
        },
        headers=headers,
    )
    assert r.status_code == 201, r.text
    return r.json()


def create_pool(client, headers, dataset_id, name="daily") -> dict:
    r = client.post(
        f"/api/v1/datasets/{dataset_id}/pools",
        json={"name": name},
        headers=headers,
    )
    assert r.status_code == 201, r.text
    return r.json()


def set_rules(client, headers, pool_id, body=None) -> dict:
    r = client.put(
        f"/api/v1/pools/{pool_id}/rules",
        json=body if body is not None else fisheries_rules_a().to_json(),
        headers=headers,
    )
    assert r.status_code == 200, r.text
    return r.json()


def upload_file(client, headers, pool_id, name=None, text=None) -> dict:
    r = client.post(
        f"/api/v1/pools/{pool_id}/resources",
        files={
            "file": (
                name or DAY_ONE.name,
                (text if text is not None else DAY_ONE.text).encode(),
                "text/csv",
            )
        },
        headers=headers,
    )
    assert r.status_code == 201, r.text
    return r.json()


def publish_fixture(client, headers) -> dict:
    """dataset + pool + rules + one ingested file, all through the API."""
    dataset = create_dataset(client, headers)
    pool = create_pool(client, headers, dataset["id"])
    set_rules(client, headers, pool["id"])
    resource = upload_file(client, headers, pool["id"])
    r = client.post(f"/api/v1/resources/{resource['id']}/ingest", headers=headers)
    assert r.status_code == 200, r.text
    return {
        "dataset": dataset,
        "pool": pool,
        "resource": resource,
        "report": r.json(),
    }


class TestHealth:
    def test_health_is_public(self, client):
        r = client.get("/api/v1/health")
        assert r.status_code == 200
        assert r.json()["status"] == "ok"


class TestAccounts:
    def test_register_returns_no_credential_material(self, client):
        r = client.post(
            "/api/v1/users",
            json={"username": "ana", "email": "ana@example.net", "password": PASSWORD},
        )
        assert r.status_code == 201
        body = r.json()
        assert body["username"] == "ana"
        assert "credential_digest" not in body
        assert "password" not in body
        assert PASSWORD not in r.text

    def test_register_validation_lists_all_violations(self, client):
        r = client.post(
            "/api/v1/users",
            json={"username": "ab", "email": "nope", "password": "short"},
        )
        assert r.status_code == 422
        body = r.json()
        assert body["code"] == "validation-failed"
        assert len(body["details"]["violations"]) == 3

    def test_duplicate_username_conflicts(self, client):
        payload = {"username": "ana", "email": "ana@example.net", "password": PASSWORD}
        assert client.post("/api/v1/users", json=payload).status_code == 201
        r = client.post("/api/v1/users", json=payload)
        assert r.status_code == 409
        assert r.json()["code"] == "conflict"

    def test_login_issues_expiring_token(self, client):
        register_and_login(client)  # creates ana
        r = client.post(
            "/api/v1/sessions", json={"username": "ana", "password": PASSWORD}
        )
        assert r.status_code == 201
        body = r.json()
        assert body["token"]
        assert body["expires_at"].endswith("Z")

    def test_wrong_password_rejected_without_detail_leak(self, client):
        register_and_login(client)
        r = client.post(
            "/api/v1/sessions", json={"username": "ana", "password": "wrong-pass"}
        )
        assert r.status_code == 401
        assert r.json()["code"] == "invalid-credentials"

    def test_mutations_require_a_token(self, client):
        r = client.post("/api/v1/datasets", json={"title": "X"})
        assert r.status_code == 401
        assert r.json()["code"] == "missing-token"

    def test_garbage_token_rejected(self, client):
        r = client.post(
            "/api/v1/datasets",
            json={"title": "X"},
            headers={"Authorization": "Bearer not-a-real-token"},
        )
        assert r.status_code == 401
        assert r.json()["code"] == "invalid-token"

    def test_expired_token_rejected(self, client, storage, user):
        storage.token_put("stale", user.id, utcnow() - timedelta(minutes=1))
        r = client.post(
            "/api/v1/datasets",
            json={"title": "X"},
            headers={"Authorization": "Bearer stale"},
        )
        assert r.status_code == 401

    def test_non_owner_cannot_mutate(self, client):
        owner = register_and_login(client, "ana")
        dataset = create_dataset(client, owner)
        intruder = register_and_login(client, "bruno")
        r = client.put(
            f"/api/v1/datasets/{dataset['id']}",
            json={"title": "Hijacked"},
            headers=intruder,
        )
        assert r.status_code == 403
        assert r.json()["code"] == "forbidden"

    def test_reads_are_public(self, client):
        headers = register_and_login(client)
        dataset = create_dataset(client, headers)
        for path in (
            "/api/v1/datasets",
            f"/api/v1/datasets/{dataset['id']}",
            f"/api/v1/datasets/{dataset['id']}/schema",
            f"/api/v1/datasets/{dataset['id']}/data",
        ):
            assert client.get(path).status_code == 200, path


class TestDatasets:
    def test_create_and_fetch_round_trip(self, client):
        headers = register_and_login(client)
        created = create_dataset(client, headers)
        fetched = client.get(f"/api/v1/datasets/{created['id']}").json()
        assert fetched == created
        assert fetched["schema"]["attributes"][0]["name"] == "date"
        assert sorted(fetched["tags"]) == ["fisheries", "prices"]

    def test_invalid_schema_rejected_with_violations(self, client):
        headers = register_and_login(client)
        r = client.post(
            "/api/v1/datasets",
            json={
                "title": "Broken",
                "schema": {
                    "attributes": [
                        {"name": "x", "datatype": "string"},
                        {"name": "x", "datatype": "decimal"},
                    ]
                },
            },
            headers=headers,
        )
        assert r.status_code == 422
        violations = r.json()["details"]["violations"]
        assert any("duplicate name x" in v for v in violations)
        assert any("decimal" in v for v in violations)

    def test_missing_dataset_is_enveloped_404(self, client):
        r = client.get("/api/v1/datasets/nonesuch")
        assert r.status_code == 404
        body = r.json()
        assert body["code"] == "not-found"
        assert "nonesuch" in body["message"]

    def test_update_title_bumps_updated_at(self, client):
        headers = register_and_login(client)
        dataset = create_dataset(client, headers)
        r = client.put(
            f"/api/v1/datasets/{dataset['id']}",
            json={"title": "Renamed", "description": "new"},
            headers=headers,
        )
        assert r.status_code == 200
        assert r.json()["title"] == "Renamed"
        assert r.json()["updated_at"] >= dataset["updated_at"]

    def test_schema_mutable_until_records_exist(self, client):
        headers = register_and_login(client)
        dataset = create_dataset(client, headers)
        r = client.put(
            f"/api/v1/datasets/{dataset['id']}",
            json={"schema": FISHERIES_SCHEMA_JSON},
            headers=headers,
        )
        assert r.status_code == 200
        assert r.json()["schema"]["version"] == 2

    def test_schema_frozen_after_ingestion(self, client):
        headers = register_and_login(client)
        ids = publish_fixture(client, headers)
        r = client.put(
            f"/api/v1/datasets/{ids['dataset']['id']}",
            json={"schema": FISHERIES_SCHEMA_JSON},
            headers=headers,
        )
        assert r.status_code == 409
        assert r.json()["code"] == "schema-frozen"
        # other fields stay editable
        ok = client.put(
            f"/api/v1/datasets/{ids['dataset']['id']}",
            json={"title": "Still fine"},
            headers=headers,
        )
        assert ok.status_code == 200

    def test_delete_refuses_dependents_then_cascades(self, client):
        headers = register_and_login(client)
        ids = publish_fixture(client, headers)
        dataset_id = ids["dataset"]["id"]
        refused = client.delete(f"/api/v1/datasets/{dataset_id}", headers=headers)
        assert refused.status_code == 409
        assert refused.json()["code"] == "integrity-violation"
        done = client.delete(
            f"/api/v1/datasets/{dataset_id}?cascade=true", headers=headers
        )
        assert done.status_code == 204
        assert client.get(f"/api/v1/datasets/{dataset_id}").status_code == 404

    def test_listing_carries_items_and_total(self, client):
        headers = register_and_login(client)
        create_dataset(client, headers, title="One")
        create_dataset(client, headers, title="Two")
        body = client.get("/api/v1/datasets").json()
        assert body["total"] == 2
        assert {d["title"] for d in body["items"]} == {"One", "Two"}


class TestPoolsAndRules:
    def test_new_pool_has_placeholder_rules(self, client):
        headers = register_and_login(client)
        dataset = create_dataset(client, headers)
        pool = create_pool(client, headers, dataset["id"])
        assert pool["rules"]["version"] == 0
        assert pool["rules"]["rules"] == []

    def test_put_ruleset_json_bumps_version(self, client):
        headers = register_and_login(client)
        dataset = create_dataset(client, headers)
        pool = create_pool(client, headers, dataset["id"])
        updated = set_rules(client, headers, pool["id"])
        assert updated["rules"]["version"] == 1
        again = set_rules(client, headers, pool["id"])
        assert again["rules"]["version"] == 2

    def test_put_rule_input_generates_rules(self, client):
        headers = register_and_login(client)
        dataset = create_dataset(client, headers)
        pool = create_pool(client, headers, dataset["id"])
        updated = set_rules(client, headers, pool["id"], RULE_INPUT_BODY)
        kinds = [r["kind"] for r in updated["rules"]["rules"]]
        assert kinds == ["date_parse", "column_map", "column_map", "column_map"]
        targets = [r["target_attribute"] for r in updated["rules"]["rules"]]
        assert targets == ["date", "species", "price", "volume_kg"]

    def test_uncovered_required_attribute_is_422_naming_it(self, client):
        headers = register_and_login(client)
        dataset = create_dataset(client, headers)
        pool = create_pool(client, headers, dataset["id"])
        gappy = fisheries_rules_a().to_json()
        gappy["rules"] = [
            r for r in gappy["rules"] if r["target_attribute"] != "price"
        ]
        r = client.put(
            f"/api/v1/pools/{pool['id']}/rules", json=gappy, headers=headers
        )
        assert r.status_code == 422
        body = r.json()
        assert "price uncovered" in body["message"]
        assert "price uncovered" in body["details"]["violations"]

    def test_unregistered_kind_rejected(self, client):
        headers = register_and_login(client)
        dataset = create_dataset(client, headers)
        pool = create_pool(client, headers, dataset["id"])
        bad = {
            "header_row": 0,
            "rules": [
                {"kind": "frobnicate", "target_attribute": "date", "params": {}}
            ],
        }
        r = client.put(f"/api/v1/pools/{pool['id']}/rules", json=bad, headers=headers)
        assert r.status_code == 422
        assert "frobnicate" in r.json()["message"]

    def test_pool_listing_scoped_to_dataset(self, client):
        headers = register_and_login(client)
        dataset = create_dataset(client, headers)
        other = create_dataset(client, headers, title="Other")
        create_pool(client, headers, dataset["id"], name="a")
        create_pool(client, headers, dataset["id"], name="b")
        create_pool(client, headers, other["id"], name="c")
        body = client.get(f"/api/v1/datasets/{dataset['id']}/pools").json()
        assert body["total"] == 2
        assert {p["name"] for p in body["items"]} == {"a", "b"}


class TestResources:
    def test_multipart_upload_registers_fetched_resource(self, client):
        headers = register_and_login(client)
        dataset = create_dataset(client, headers)
        pool = create_pool(client, headers, dataset["id"])
        resource = upload_file(client, headers, pool["id"])
        assert resource["status"] == "fetched"
        assert resource["format"] == "csv"
        assert resource["origin"] == {
            "type": "upload",
            "filename": DAY_ONE.name,
        }

    def test_json_url_origin_registers(self, client):
        headers = register_and_login(client)
        dataset = create_dataset(client, headers)
        pool = create_pool(client, headers, dataset["id"])
        r = client.post(
            f"/api/v1/pools/{pool['id']}/resources",
            json={
                "origin": {"type": "url", "url": "https://data.example.net/d.csv"}
            },
            headers=headers,
        )
        assert r.status_code == 201
        assert r.json()["status"] == "registered"

    def test_json_upload_origin_is_a_bad_request(self, client):
        headers = register_and_login(client)
        dataset = create_dataset(client, headers)
        pool = create_pool(client, headers, dataset["id"])
        r = client.post(
            f"/api/v1/pools/{pool['id']}/resources",
            json={"origin": {"type": "upload", "filename": "x.csv"}},
            headers=headers,
        )
        assert r.status_code == 400

    def test_undeterminable_format_is_422(self, client):
        headers = register_and_login(client)
        dataset = create_dataset(client, headers)
        pool = create_pool(client, headers, dataset["id"])
        r = client.post(
            f"/api/v1/pools/{pool['id']}/resources",
            files={"file": ("report.dat", b"a,b\n", "application/octet-stream")},
            headers=headers,
        )
        assert r.status_code == 422
        assert r.json()["code"] == "undeterminable-format"

    def test_sample_route_returns_parsed_rows(self, client):
        headers = register_and_login(client)
        dataset = create_dataset(client, headers)
        pool = create_pool(client, headers, dataset["id"])
        resource = upload_file(client, headers, pool["id"])
        r = client.get(
            f"/api/v1/resources/{resource['id']}/sample?n=5&header_row=0"
        )
        assert r.status_code == 200
        body = r.json()
        assert body["headers"] == ["Date", "Produce", "Price", "Volume"]
        assert len(body["rows"]) == 5

    def test_sample_with_malformed_n_is_400(self, client):
        headers = register_and_login(client)
        dataset = create_dataset(client, headers)
        pool = create_pool(client, headers, dataset["id"])
        resource = upload_file(client, headers, pool["id"])
        r = client.get(f"/api/v1/resources/{resource['id']}/sample?n=five")
        assert r.status_code == 400

    def test_fetch_route_downloads_via_http(self, client, storage):
        stub = StubServer()
        try:
            url = stub.serve_csv("/daily.csv", DAY_ONE.text)
            headers = register_and_login(client)
            dataset = create_dataset(client, headers)
            pool = create_pool(client, headers, dataset["id"])
            r = client.post(
                f"/api/v1/pools/{pool['id']}/resources",
                json={"origin": {"type": "url", "url": url}},
                headers=headers,
            )
            resource_id = r.json()["id"]
            fetched = client.post(
                f"/api/v1/resources/{resource_id}/fetch", headers=headers
            )
            assert fetched.status_code == 200, fetched.text
            assert fetched.json()["status"] == "fetched"
        finally:
            stub.close()

    def test_fetch_failure_maps_to_502(self, client):
        stub = StubServer()
        try:
            headers = register_and_login(client)
            dataset = create_dataset(client, headers)
            pool = create_pool(client, headers, dataset["id"])
            r = client.post(
                f"/api/v1/pools/{pool['id']}/resources",
                json={"origin": {"type": "url", "url": f"{stub.url}/absent.csv"}},
                headers=headers,
            )
            resource_id = r.json()["id"]
            failed = client.post(
                f"/api/v1/resources/{resource_id}/fetch", headers=headers
            )
            assert failed.status_code == 502
            assert failed.json()["code"] == "http-status"
        finally:
            stub.close()


class TestIngestionFlow:
    def test_happy_path_counts_and_values(self, client, storage):
        headers = register_and_login(client)
        ids = publish_fixture(client, headers)
        report = ids["report"]
        assert report["records_produced"] == len(DAY_ONE.clean_rows)
        assert report["rows_rejected"] == DAY_ONE.bad_row_count
        data = client.get(
            f"/api/v1/datasets/{ids['dataset']['id']}/data?limit=1000"
        ).json()
        assert data["total"] == len(DAY_ONE.clean_rows)
        got = value_multiset(data["items"], fisheries_schema())
        want = value_multiset(
            [
                {k: v for k, v in row.items()}
                for row in json.loads(
                    json.dumps(
                        [
                            {
                                "date": r["date"].isoformat(),
                                "species": r["species"],
                                "price": r["price"],
                                "volume_kg": r["volume_kg"],
                            }
                            for r in DAY_ONE.clean_rows
                        ]
                    )
                )
            ],
            fisheries_schema(),
        )
        assert got == want

    def test_reingest_is_idempotent_over_http(self, client, storage):
        headers = register_and_login(client)
        ids = publish_fixture(client, headers)
        before = storage.digest()
        r = client.post(
            f"/api/v1/resources/{ids['resource']['id']}/ingest", headers=headers
        )
        assert r.status_code == 200
        assert storage.digest() == before

    def test_ingest_unfetched_resource_is_409(self, client):
        headers = register_and_login(client)
        dataset = create_dataset(client, headers)
        pool = create_pool(client, headers, dataset["id"])
        set_rules(client, headers, pool["id"])
        r = client.post(
            f"/api/v1/pools/{pool['id']}/resources",
            json={
                "origin": {"type": "url", "url": "https://data.example.net/d.csv"}
            },
            headers=headers,
        )
        resource_id = r.json()["id"]
        blocked = client.post(
            f"/api/v1/resources/{resource_id}/ingest", headers=headers
        )
        assert blocked.status_code == 409
        assert blocked.json()["code"] == "invalid-state"

    def test_ingest_requires_ownership(self, client):
        owner = register_and_login(client, "ana")
        ids = publish_fixture(client, owner)
        other = register_and_login(client, "bruno")
        r = client.post(
            f"/api/v1/resources/{ids['resource']['id']}/ingest", headers=other
        )
        assert r.status_code == 403


class TestDataAccess:
    @pytest.fixture()
    def published(self, client):
        headers = register_and_login(client)
        ids = publish_fixture(client, headers)
        ids["headers"] = headers
        return ids

    def test_item_keys_follow_schema_order(self, published, client):
        data = client.get(
            f"/api/v1/datasets/{published['dataset']['id']}/data?limit=5"
        ).json()
        for item in data["items"]:
            assert list(item) == ["date", "species", "price", "volume_kg"]

    def test_filter_sort_limit_offset(self, published, client):
        base = f"/api/v1/datasets/{published['dataset']['id']}/data"
        everything = client.get(
            base + "?sort=price:desc&limit=1000"
        ).json()
        prices = [item["price"] for item in everything["items"]]
        assert prices == sorted(prices, reverse=True)
        page = client.get(base + "?sort=price:desc&limit=3&offset=2").json()
        assert page["items"] == everything["items"][2:5]
        assert page["limit"] == 3
        assert page["offset"] == 2
        filtered = client.get(base + "?filter=species:eq:Carite&limit=1000").json()
        assert all(item["species"] == "Carite" for item in filtered["items"])
        assert filtered["total"] == sum(
            1 for r in DAY_ONE.clean_rows if r["species"] == "Carite"
        )

    def test_conjunctive_filters(self, published, client):
        base = f"/api/v1/datasets/{published['dataset']['id']}/data"
        combined = client.get(
            base + "?filter=species:eq:Carite&filter=price:gte:30&limit=1000"
        ).json()
        want = sum(
            1
            for r in DAY_ONE.clean_rows
            if r["species"] == "Carite" and r["price"] >= 30
        )
        assert combined["total"] == want

    def test_fields_projection(self, published, client):
        data = client.get(
            f"/api/v1/datasets/{published['dataset']['id']}/data"
            "?fields=species,price&limit=4"
        ).json()
        for item in data["items"]:
            assert list(item) == ["species", "price"]

    def test_unknown_filter_operator_named_in_400(self, published, client):
        r = client.get(
            f"/api/v1/datasets/{published['dataset']['id']}/data"
            "?filter=species:like:Carite"
        )
        assert r.status_code == 400
        body = r.json()
        assert body["code"] == "bad-query"
        assert "like" in body["message"]

    def test_unknown_attribute_named_in_400(self, published, client):
        r = client.get(
            f"/api/v1/datasets/{published['dataset']['id']}/data"
            "?filter=weight:eq:3"
        )
        assert r.status_code == 400
        assert "weight" in r.json()["message"]

    def test_post_to_data_route_is_enveloped_405(self, published, client):
        r = client.post(f"/api/v1/datasets/{published['dataset']['id']}/data")
        assert r.status_code == 405
        body = r.json()
        assert body["code"] == "method-not-allowed"
        assert body["message"]

    def test_csv_format_streams_with_disposition(self, published, client):
        r = client.get(
            f"/api/v1/datasets/{published['dataset']['id']}/data?format=csv"
        )
        assert r.status_code == 200
        assert r.headers["content-type"].startswith("text/csv")
        assert "attachment" in r.headers["content-disposition"]
        first_line = r.content.split(b"\n", 1)[0]
        assert first_line == b"date,species,price,volume_kg"

    def test_export_json_is_a_plain_array(self, published, client):
        r = client.get(
            f"/api/v1/datasets/{published['dataset']['id']}/export?format=json"
        )
        assert r.status_code == 200
        rows = r.json()
        assert isinstance(rows, list)
        assert len(rows) == len(DAY_ONE.clean_rows)
        assert set(rows[0]) == {"date", "species", "price", "volume_kg"}

    def test_export_csv_covers_all_matches_without_limit(self, client):
        headers = register_and_login(client)
        dataset = create_dataset(client, headers)
        pool = create_pool(client, headers, dataset["id"])
        set_rules(client, headers, pool["id"])
        files = make_daily_files(days=8)
        for f in files:
            resource = upload_file(client, headers, pool["id"], f.name, f.text)
            client.post(f"/api/v1/resources/{resource['id']}/ingest", headers=headers)
        r = client.get(f"/api/v1/datasets/{dataset['id']}/export?format=csv")
        lines = r.content.decode().strip().split("\n")
        total_clean = sum(len(f.clean_rows) for f in files)
        assert total_clean > 100  # more than one data page
        assert len(lines) == total_clean + 1

    def test_data_csv_respects_query(self, published, client):
        r = client.get(
            f"/api/v1/datasets/{published['dataset']['id']}/data"
            "?format=csv&filter=species:eq:Carite&fields=species"
        )
        lines = r.content.decode().strip().split("\n")
        assert lines[0] == "species"
        assert set(lines[1:]) == {"Carite"}

    def test_cors_allows_browser_clients(self, published, client):
        r = client.get(
            f"/api/v1/datasets/{published['dataset']['id']}/data",
            headers={"Origin": "http://localhost:5173"},
        )
        assert r.headers.get("access-control-allow-origin") == "*"


class TestPreviewRoute:
    @pytest.fixture()
    def staged(self, client):
        headers = register_and_login(client)
        dataset = create_dataset(client, headers)
        pool = create_pool(client, headers, dataset["id"])
        resource = upload_file(client, headers, pool["id"])
        return {
            "headers": headers,
            "dataset": dataset,
            "pool": pool,
            "resource": resource,
        }

    def test_preview_reports_without_side_effects(self, staged, client, storage):
        before = storage.digest()
        r = client.post(
            f"/api/v1/pools/{staged['pool']['id']}/preview",
            json={
                "resource_id": staged["resource"]["id"],
                "n": 10,
                "rules": fisheries_rules_a().to_json(),
            },
            headers=staged["headers"],
        )
        assert r.status_code == 200, r.text
        body = r.json()
        assert body["ok"] in (True, False)
        assert len(body["sample_outcomes"]) == 10
        assert body["rules"]["rules"]
        assert body["attribute_coverage"]["price"]["covered"] is True
        assert storage.digest() == before
        # pool rules untouched
        pool = client.get(f"/api/v1/pools/{staged['pool']['id']}").json()
        assert pool["rules"]["version"] == 0

    def test_preview_accepts_rule_input_form(self, staged, client):
        r = client.post(
            f"/api/v1/pools/{staged['pool']['id']}/preview",
            json={
                "resource_id": staged["resource"]["id"],
                "n": 5,
                "rules": RULE_INPUT_BODY,
            },
            headers=staged["headers"],
        )
        assert r.status_code == 200, r.text
        assert r.json()["rules"]["rules"][0]["kind"] == "date_parse"

    def test_preview_surfaces_per_row_problems(self, staged, client):
        rules = fisheries_rules_a().to_json()
        rules["rules"][2]["params"]["source"] = "Volume"  # price from a text column? no, Volume is ints; use Produce
        rules["rules"][2]["params"]["source"] = "Produce"
        r = client.post(
            f"/api/v1/pools/{staged['pool']['id']}/preview",
            json={
                "resource_id": staged["resource"]["id"],
                "n": 5,
                "rules": rules,
            },
            headers=staged["headers"],
        )
        assert r.status_code == 200
        body = r.json()
        assert body["ok"] is False
        assert any("price" in v for v in body["violations"])

    def test_preview_with_foreign_resource_conflicts(self, staged, client):
        other_pool = create_pool(
            client, staged["headers"], staged["dataset"]["id"], name="other"
        )
        r = client.post(
            f"/api/v1/pools/{other_pool['id']}/preview",
            json={
                "resource_id": staged["resource"]["id"],
                "rules": fisheries_rules_a().to_json(),
            },
            headers=staged["headers"],
        )
        assert r.status_code == 409

    def test_preview_needs_auth(self, staged, client):
        r = client.post(
            f"/api/v1/pools/{staged['pool']['id']}/preview",
            json={
                "resource_id": staged["resource"]["id"],
                "rules": fisheries_rules_a().to_json(),
            },
        )
        assert r.status_code == 401

    def test_preview_rejects_bad_n(self, staged, client):
        for bad_n in (0, -3, "ten", True):
            r = client.post(
                f"/api/v1/pools/{staged['pool']['id']}/preview",
                json={
                    "resource_id": staged["resource"]["id"],
                    "n": bad_n,
                    "rules": fisheries_rules_a().to_json(),
                },
                headers=staged["headers"],
            )
            assert r.status_code == 400, bad_n


class TestErrorEnvelope:
    def test_every_error_carries_code_and_message(self, client):
        headers = register_and_login(client)
        cases = [
            client.get("/api/v1/datasets/ghost"),
            client.post("/api/v1/datasets", json={"title": ""}, headers=headers),
            client.post("/api/v1/datasets"),
            client.delete("/api/v1/health"),
            client.post(
                "/api/v1/sessions", json={"username": "x", "password": "y"}
            ),
        ]
        for response in cases:
            assert response.status_code >= 400
            body = response.json()
            assert isinstance(body["code"], str) and body["code"]
            assert isinstance(body["message"], str) and body["message"]

    def test_malformed_json_body_is_400(self, client):
        headers = register_and_login(client)
        r = client.post(
            "/api/v1/datasets",
            content=b"{not json",
            headers={**headers, "Content-Type": "application/json"},
        )
        assert r.status_code == 400
        assert r.json()["code"] == "bad-request"
