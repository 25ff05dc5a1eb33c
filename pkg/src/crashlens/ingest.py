"""Corpus loading from newline-delimited JSON exports, plus time windowing.

Input format, one JSON object per line:

    {"crash_id": "...", "timestamp": "RFC-3339", "uri": "...",
     "user": "... or null", "session_id": "... or null",
     "stack_trace": "raw multi-line trace"}

In lenient mode, malformed records are counted and skipped; strict mode
turns them into FormatError. Identical stack_trace strings share one parsed
StackTrace object, so corpora with heavy duplication stay cheap.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from pathlib import Path

from .config import AppConfig
from .errors import DuplicateIdError, FormatError, MalformedTraceError
from .trace import CrashReport, StackTrace, parse_stack_trace

UTC_MIN = datetime.min.replace(tzinfo=timezone.utc)
UTC_MAX = datetime.max.replace(tzinfo=timezone.utc)


def parse_timestamp(text: str) -> datetime:
    """Parse an RFC-3339 timestamp into an aware UTC datetime."""
    raw = text.strip()
    if raw.endswith(("Z", "z")):
        raw = raw[:-1] + "+00:00"
    ts = datetime.fromisoformat(raw)
    if ts.tzinfo is None:
        raise ValueError(f"timestamp lacks a UTC offset: {text!r}")
    return ts.astimezone(timezone.utc)


def format_timestamp(ts: datetime) -> str:
    """Render an aware datetime as RFC-3339 UTC with a Z suffix."""
    ts = ts.astimezone(timezone.utc)
    if ts.microsecond:
        return ts.isoformat().replace("+00:00", "Z")
    return ts.strftime("%Y-%m-%dT%H:%M:%SZ")


@dataclass(frozen=True, slots=True)
class TimeWindow:
    """Half-open interval [start, end) over aware UTC instants."""

    start: datetime
    end: datetime

    def __post_init__(self):
        if self.start >= self.end:
            raise ValueError(f"empty time window: {self.start} .. {self.end}")

    def __contains__(self, ts: datetime) -> bool:
        return self.start <= ts < self.end

    @classmethod
    def parse(cls, text: str) -> "TimeWindow":
        """Parse `start..end`, each an RFC-3339 timestamp or a bare date."""
        try:
            start_text, end_text = text.split("..", 1)
        except ValueError:
            raise ValueError(f"expected start..end, got {text!r}") from None
        return cls(_parse_bound(start_text), _parse_bound(end_text))

    @classmethod
    def unbounded(cls) -> "TimeWindow":
        return cls(UTC_MIN, UTC_MAX)

    def as_json(self) -> dict:
        return {"start": format_timestamp(self.start), "end": format_timestamp(self.end)}


def _parse_bound(text: str) -> datetime:
    text = text.strip()
    if "T" not in text and " " not in text:
        return datetime.fromisoformat(text).replace(tzinfo=timezone.utc)
    return parse_timestamp(text)


@dataclass(frozen=True, slots=True)
class CrashCorpus:
    """An ingested batch of crash reports, all inside one time window."""

    reports: tuple[CrashReport, ...]
    window_start: datetime
    window_end: datetime
    skipped_count: int

    def __len__(self) -> int:
        return len(self.reports)

    def reports_by_id(self) -> dict[str, CrashReport]:
        return {r.crash_id: r for r in self.reports}


_NULLABLE_FIELDS = ("user", "session_id")


def _record_to_report(record: dict, trace_cache: dict[str, StackTrace]) -> CrashReport:
    for key in ("crash_id", "timestamp", "uri", "stack_trace"):
        if not isinstance(record.get(key), str):
            raise FormatError(f"field {key!r} missing or not a string")
    for key in _NULLABLE_FIELDS:
        value = record.get(key)
        if value is not None and not isinstance(value, str):
            raise FormatError(f"field {key!r} must be a string or null")
    try:
        ts = parse_timestamp(record["timestamp"])
    except ValueError as exc:
        raise FormatError(str(exc)) from exc
    raw_trace = record["stack_trace"]
    trace = trace_cache.get(raw_trace)
    if trace is None:
        trace = parse_stack_trace(raw_trace)
        trace_cache[raw_trace] = trace
    return CrashReport(
        crash_id=record["crash_id"],
        timestamp=ts,
        uri=record["uri"],
        user=record.get("user"),
        session_id=record.get("session_id"),
        trace=trace,
    )


def load_corpus(path: str | Path, window: TimeWindow, config: AppConfig) -> CrashCorpus:
    """Load an NDJSON export into a windowed corpus.

    Report order follows file order. Malformed and out-of-window records are
    skipped and counted; in strict mode (config.strict) a malformed record
    raises FormatError and a duplicated crash_id raises DuplicateIdError.
    Lenient mode keeps the first record for a duplicated id.
    """
    reports: list[CrashReport] = []
    seen: set[str] = set()
    skipped = 0
    trace_cache: dict[str, StackTrace] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
                if not isinstance(record, dict):
                    raise FormatError("record is not a JSON object")
                report = _record_to_report(record, trace_cache)
            except (json.JSONDecodeError, MalformedTraceError, FormatError) as exc:
                if config.strict:
                    raise FormatError(f"{path}:{line_no}: {exc}") from exc
                skipped += 1
                continue
            if report.timestamp not in window:
                skipped += 1
                continue
            if report.crash_id in seen:
                if config.strict:
                    raise DuplicateIdError(
                        f"{path}:{line_no}: duplicate crash_id {report.crash_id!r}"
                    )
                skipped += 1
                continue
            seen.add(report.crash_id)
            reports.append(report)
    return CrashCorpus(
        reports=tuple(reports),
        window_start=window.start,
        window_end=window.end,
        skipped_count=skipped,
    )


def weekly_windows(span: TimeWindow) -> list[TimeWindow]:
    """Split a span into consecutive 7-day windows aligned to Monday 00:00 UTC.

    The first and last windows are clipped to the span, so their union is
    exactly the span and no two windows overlap.
    """
    start = span.start.astimezone(timezone.utc)
    end = span.end.astimezone(timezone.utc)
    day0 = start.replace(hour=0, minute=0, second=0, microsecond=0)
    monday = day0 - timedelta(days=day0.weekday())
    windows: list[TimeWindow] = []
    cursor = start
    boundary = monday + timedelta(days=7)
    while cursor < end:
        upper = min(boundary, end)
        windows.append(TimeWindow(cursor, upper))
        cursor = upper
        boundary += timedelta(days=7)
    return windows
