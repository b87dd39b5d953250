"""Service configuration, resolvable from environment variables or flags."""

from __future__ import annotations

import os
from dataclasses import dataclass

from .ingest import FetchLimits


@dataclass(frozen=True)
class ServiceConfig:
    host: str = "127.0.0.1"
    port: int = 8000
    store_path: str = "datameld.db"  # sqlite file; ":memory:" for ephemeral
    sample_rows: int = 50  # default preview/sample size
    fetch_timeout_s: float = 30.0
    fetch_max_bytes: int = 64 * 1024 * 1024
    fetch_max_redirects: int = 3

    def limits(self) -> FetchLimits:
        return FetchLimits(
            timeout_s=self.fetch_timeout_s,
            max_bytes=self.fetch_max_bytes,
            max_redirects=self.fetch_max_redirects,
        )


def config_from_env(base: ServiceConfig = ServiceConfig()) -> ServiceConfig:
    """Overlay DATAMELD_* environment variables on a base config."""
    env = os.environ
    return ServiceConfig(
        host=env.get("DATAMELD_HOST", base.host),
        port=int(env.get("DATAMELD_PORT", base.port)),
        store_path=env.get("DATAMELD_STORE", base.store_path),
        sample_rows=int(env.get("DATAMELD_SAMPLE_ROWS", base.sample_rows)),
        fetch_timeout_s=float(env.get("DATAMELD_FETCH_TIMEOUT", base.fetch_timeout_s)),
        fetch_max_bytes=int(env.get("DATAMELD_FETCH_MAX_BYTES", base.fetch_max_bytes)),
        fetch_max_redirects=int(
            env.get("DATAMELD_FETCH_MAX_REDIRECTS", base.fetch_max_redirects)
        ),
    )
