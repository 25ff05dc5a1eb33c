"""Weekly group summaries, issue payloads, and their renderings.

summarize_groups turns a partition into the rows of the weekly spreadsheet:
who crashed how often, between which dates, on how many URIs, for how many
users, touching which application classes. build_issue assembles everything
a developer should see when a group is turned into a tracker task: the file
and method rankings, the most affected URIs with their most affected users,
and a few deterministic samples of raw traces, crash ids and sessions.

All renderers are pure and deterministic: same payload, same bytes.
Sampling always takes the earliest members first (ties broken by crash_id)
so repeated runs over the same corpus produce identical payloads.
"""

from __future__ import annotations

import csv
import io
from collections import Counter
from dataclasses import dataclass
from datetime import datetime
from typing import Any, Iterable

from .config import AppConfig
from .grouping import CrashGroup, LevelPartition
from .ingest import CrashCorpus, TimeWindow, format_timestamp
from .ranking import FileRanking, MethodRank
from .trace import CrashReport, StackTrace, declaring_file

CSV_HEADER = (
    "group_id",
    "first_seen",
    "last_seen",
    "crash_count",
    "uri_count",
    "user_count",
    "system_classes",
)

# The three standing requests attached to every generated task.
INSTRUCTIONS = (
    "When taking this task:\n"
    "1. Keep the fix in its own commit, separate from any refactoring.\n"
    "2. Reference this task's identifier in the fix commit message.\n"
    "3. After closing the task, fill in the short feedback survey."
)


@dataclass(frozen=True, slots=True)
class GroupSummary:
    """One spreadsheet row describing a crash group."""

    group_id: str
    first_seen: datetime
    last_seen: datetime
    crash_count: int
    affected_uri_count: int
    affected_user_count: int
    system_classes: tuple[str, ...]


@dataclass(frozen=True, slots=True)
class UriImpact:
    """One affected URI with its report count and most affected users."""

    uri: str
    count: int
    top_users: tuple[tuple[str, int], ...]


@dataclass(frozen=True, slots=True)
class IssuePayload:
    """Everything that goes into one tracker task for a crash group."""

    group_id: str
    window: TimeWindow
    top_files: FileRanking
    top_methods: tuple[MethodRank, ...]
    first_seen: datetime
    last_seen: datetime
    crash_count: int
    top_uris: tuple[UriImpact, ...]
    trace_samples: tuple[str, ...]
    crash_id_samples: tuple[str, ...]
    session_samples: tuple[str, ...]
    instructions: str


def _app_files(trace: StackTrace, config: AppConfig) -> set[str]:
    return {
        declaring_file(frame.qualified_method)
        for frame in trace.frames
        if config.is_app_package(frame.qualified_method.package)
    }


def _members_earliest_first(group: CrashGroup, index: dict[str, CrashReport]) -> list[CrashReport]:
    members = [index[crash_id] for crash_id in group.members]
    members.sort(key=lambda r: (r.timestamp, r.crash_id))
    return members


def summarize_groups(
    partition: LevelPartition, corpus: CrashCorpus, config: AppConfig
) -> list[GroupSummary]:
    """One row per group, busiest groups first (ties by group id)."""
    index = corpus.reports_by_id()
    files_cache: dict[int, set[str]] = {}
    summaries = []
    for grp in partition.groups:
        uris: set[str] = set()
        users: set[str] = set()
        classes: set[str] = set()
        for crash_id in grp.members:
            report = index[crash_id]
            uris.add(report.uri)
            if report.user is not None:
                users.add(report.user)
            trace = report.trace
            cached = files_cache.get(id(trace))
            if cached is None:
                cached = _app_files(trace, config)
                files_cache[id(trace)] = cached
            classes.update(cached)
        summaries.append(
            GroupSummary(
                group_id=grp.id,
                first_seen=grp.first_seen,
                last_seen=grp.last_seen,
                crash_count=len(grp.members),
                affected_uri_count=len(uris),
                affected_user_count=len(users),
                system_classes=tuple(sorted(classes)),
            )
        )
    summaries.sort(key=lambda s: (-s.crash_count, s.group_id))
    return summaries


def build_issue(
    group: CrashGroup,
    ranking: FileRanking,
    methods: list[MethodRank] | tuple[MethodRank, ...],
    corpus: CrashCorpus,
    config: AppConfig,
) -> IssuePayload:
    """Assemble the task payload for one group."""
    members = _members_earliest_first(group, corpus.reports_by_id())

    uri_counts = Counter(report.uri for report in members)
    top_uris = []
    for uri, count in sorted(uri_counts.items(), key=lambda kv: (-kv[1], kv[0]))[
        : config.top_n_uris
    ]:
        user_counts = Counter(
            report.user for report in members if report.uri == uri and report.user is not None
        )
        top_users = tuple(
            sorted(user_counts.items(), key=lambda kv: (-kv[1], kv[0]))[
                : config.top_n_users_per_uri
            ]
        )
        top_uris.append(UriImpact(uri=uri, count=count, top_users=top_users))

    trace_samples: list[str] = []
    seen_raw: set[str] = set()
    for report in members:
        if len(trace_samples) >= config.sample_trace_count:
            break
        raw = report.trace.raw_text
        if raw not in seen_raw:
            seen_raw.add(raw)
            trace_samples.append(raw)

    session_samples: list[str] = []
    seen_sessions: set[str] = set()
    for report in members:
        if len(session_samples) >= config.sample_crash_id_count:
            break
        session = report.session_id
        if session is not None and session not in seen_sessions:
            seen_sessions.add(session)
            session_samples.append(session)

    return IssuePayload(
        group_id=group.id,
        window=TimeWindow(corpus.window_start, corpus.window_end),
        top_files=ranking,
        top_methods=tuple(methods),
        first_seen=group.first_seen,
        last_seen=group.last_seen,
        crash_count=len(group.members),
        top_uris=tuple(top_uris),
        trace_samples=tuple(trace_samples),
        crash_id_samples=tuple(
            report.crash_id for report in members[: config.sample_crash_id_count]
        ),
        session_samples=tuple(session_samples),
        instructions=INSTRUCTIONS,
    )


def export_spreadsheet_csv(summaries: list[GroupSummary]) -> str:
    """The weekly spreadsheet as CSV text (classes joined with `;`)."""
    buffer = io.StringIO()
    writer = csv.writer(buffer)
    writer.writerow(CSV_HEADER)
    for summary in summaries:
        writer.writerow(
            [
                summary.group_id,
                format_timestamp(summary.first_seen),
                format_timestamp(summary.last_seen),
                summary.crash_count,
                summary.affected_uri_count,
                summary.affected_user_count,
                ";".join(summary.system_classes),
            ]
        )
    return buffer.getvalue()


def _markdown_escape(text: str) -> str:
    return text.replace("|", "\\|")


def render_issue_markdown(payload: IssuePayload) -> str:
    """One task document; section order and formatting are fixed."""
    lines: list[str] = []
    lines.append(f"# Crash group {payload.group_id}")
    lines.append("")
    lines.append("## Summary")
    lines.append("")
    lines.append(f"- Window: {format_timestamp(payload.window.start)} .. {format_timestamp(payload.window.end)}")
    lines.append(f"- First seen: {format_timestamp(payload.first_seen)}")
    lines.append(f"- Last seen: {format_timestamp(payload.last_seen)}")
    lines.append(f"- Crash reports: {payload.crash_count}")
    lines.append("")

    lines.append("## Suspicious files")
    lines.append("")
    if payload.top_files.entries:
        lines.append("| rank | file | score | iad | ibf | ff |")
        lines.append("| --- | --- | --- | --- | --- | --- |")
        for position, entry in enumerate(payload.top_files.entries, start=1):
            lines.append(
                f"| {position} | {_markdown_escape(entry.file)} | {entry.score:.6f} "
                f"| {entry.iad:.6f} | {entry.ibf:.6f} | {entry.ff:.6f} |"
            )
        lines.append("")
        lines.append(
            f"{payload.top_files.candidates_considered} candidate file(s) considered."
        )
    else:
        lines.append("none recorded (no application frames; infrastructure-only crash)")
    lines.append("")

    lines.append("## Suspicious methods")
    lines.append("")
    if payload.top_methods:
        for rank in payload.top_methods:
            rendered = ", ".join(f"{method} ({count})" for method, count in rank.methods)
            lines.append(f"- {rank.file}: {rendered}")
    else:
        lines.append("none recorded")
    lines.append("")

    lines.append("## Affected URIs and users")
    lines.append("")
    if payload.top_uris:
        for impact in payload.top_uris:
            lines.append(f"- {impact.uri} ({impact.count} reports)")
            for user, count in impact.top_users:
                lines.append(f"  - {user} ({count})")
    else:
        lines.append("none recorded")
    lines.append("")

    lines.append("## Samples")
    lines.append("")
    lines.append(
        "- Crash ids: " + (", ".join(payload.crash_id_samples) or "none recorded")
    )
    lines.append(
        "- Sessions: " + (", ".join(payload.session_samples) or "none recorded")
    )
    lines.append("")
    if payload.trace_samples:
        for sample in payload.trace_samples:
            lines.append("```")
            lines.append(sample)
            lines.append("```")
            lines.append("")
    else:
        lines.append("no trace samples recorded")
        lines.append("")

    lines.append("## Instructions")
    lines.append("")
    lines.append(payload.instructions)
    lines.append("")
    return "\n".join(lines)


def summary_to_json(summary: GroupSummary) -> dict[str, Any]:
    return {
        "group_id": summary.group_id,
        "first_seen": format_timestamp(summary.first_seen),
        "last_seen": format_timestamp(summary.last_seen),
        "crash_count": summary.crash_count,
        "uri_count": summary.affected_uri_count,
        "user_count": summary.affected_user_count,
        "system_classes": list(summary.system_classes),
    }


def summaries_to_json(summaries: Iterable[GroupSummary]) -> list[dict[str, Any]]:
    return [summary_to_json(s) for s in summaries]


def issue_to_json(payload: IssuePayload) -> dict[str, Any]:
    return {
        "group_id": payload.group_id,
        "window": payload.window.as_json(),
        "first_seen": format_timestamp(payload.first_seen),
        "last_seen": format_timestamp(payload.last_seen),
        "crash_count": payload.crash_count,
        "files": [
            {
                "file": entry.file,
                "iad": entry.iad,
                "ibf": entry.ibf,
                "ff": entry.ff,
                "score": entry.score,
            }
            for entry in payload.top_files.entries
        ],
        "candidates_considered": payload.top_files.candidates_considered,
        "methods": [
            {
                "file": rank.file,
                "methods": [{"method": m, "traces": c} for m, c in rank.methods],
            }
            for rank in payload.top_methods
        ],
        "uris": [
            {
                "uri": impact.uri,
                "count": impact.count,
                "users": [{"user": u, "count": c} for u, c in impact.top_users],
            }
            for impact in payload.top_uris
        ],
        "trace_samples": list(payload.trace_samples),
        "crash_id_samples": list(payload.crash_id_samples),
        "session_samples": list(payload.session_samples),
        "instructions": payload.instructions,
    }
