"""Shared fixtures: an in-memory stack, a seeded publisher, and oracles."""

from __future__ import annotations

from collections import Counter
from typing import Iterable, Mapping

import pytest
from fastapi.testclient import TestClient

from datameld.api import create_app
from datameld.auth import hash_credential
from datameld.config import ServiceConfig
from datameld.ingest import Ingestor
from datameld.model import (
    Dataset,
    DatasetSchema,
    ResourcePool,
    User,
    canonical_scalar,
    new_id,
    utcnow,
)
from datameld.rules import RuleSet
from datameld.sampledata import fisheries_schema
from datameld.store import Storage

PASSWORD = "gulf-stream-9"


@pytest.fixture()
def storage() -> Storage:
    return Storage(":memory:")


@pytest.fixture()
def user(storage: Storage) -> User:
    u = User(
        id=new_id(),
        username="maria",
        email="maria@example.net",
        credential_digest=hash_credential(PASSWORD),
        created_at=utcnow(),
    )
    storage.metadata_put(u)
    return u


@pytest.fixture()
def dataset(storage: Storage, user: User) -> Dataset:
    d = Dataset(
        id=new_id(),
        title="Wholesale fish markets",
        description="Daily wholesale market reports",
        tags=frozenset({"fisheries"}),
        owner=user.id,
        schema=fisheries_schema(),
        created_at=utcnow(),
        updated_at=utcnow(),
    )
    storage.metadata_put(d)
    return d


def make_pool(
    storage: Storage, dataset: Dataset, rules: RuleSet, name: str = "daily"
) -> ResourcePool:
    pool = ResourcePool(
        id=new_id(),
        dataset_id=dataset.id,
        name=name,
        rules=rules,
        created_at=utcnow(),
    )
    storage.metadata_put(pool)
    return pool


@pytest.fixture()
def ingestor(storage: Storage) -> Ingestor:
    return Ingestor(storage)


@pytest.fixture()
def client(storage: Storage) -> Iterable[TestClient]:
    app = create_app(storage, ServiceConfig(sample_rows=50))
    with TestClient(app) as c:
        yield c


def register_and_login(client: TestClient, username: str = "ana") -> dict:
    """Create an account through the API and return auth headers."""
    r = client.post(
        "/api/v1/users",
        json={
            "username": username,
            "email": f"{username}@example.net",
            "password": PASSWORD,
        },
    )
    assert r.status_code == 201, r.text
    r = client.post(
        "/api/v1/sessions", json={"username": username, "password": PASSWORD}
    )
    assert r.status_code == 201, r.text
    return {"Authorization": f"Bearer {r.json()['token']}"}


def value_multiset(
    rows: Iterable[Mapping], schema: DatasetSchema
) -> Counter:
    """Order-insensitive canonical fingerprint of record value maps."""
    names = schema.attribute_names()
    return Counter(
        tuple((n, canonical_scalar(row.get(n))) for n in names) for row in rows
    )
