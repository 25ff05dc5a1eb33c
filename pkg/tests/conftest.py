from __future__ import annotations

import json
from pathlib import Path

import pytest

from crashlens.config import AppConfig

DEFAULT_TRACE = (
    "java.lang.NullPointerException\n"
    "\tat br.ufrn.app.Core.run(Core.java:10)\n"
    "\tat org.framework.Web.handle(Web.java:99)"
)


def make_record(
    crash_id: str,
    timestamp: str = "2022-03-08T12:00:00Z",
    uri: str = "/app/home",
    user: str | None = "alice",
    session_id: str | None = "sess-1",
    stack_trace: str = DEFAULT_TRACE,
) -> dict:
    return {
        "crash_id": crash_id,
        "timestamp": timestamp,
        "uri": uri,
        "user": user,
        "session_id": session_id,
        "stack_trace": stack_trace,
    }


def write_ndjson(path: Path, records: list) -> Path:
    lines = []
    for record in records:
        lines.append(record if isinstance(record, str) else json.dumps(record))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


@pytest.fixture
def config() -> AppConfig:
    return AppConfig(app_package_prefixes=("br.ufrn",))


@pytest.fixture
def strict_config() -> AppConfig:
    return AppConfig(app_package_prefixes=("br.ufrn",), strict=True)
