"""Suspicious-file scoring per crash group, and method ranking within files.

For a group B and candidate file f the score is the product of three
factors:

- FF, file frequency: the share of B's traces that contain a frame of f.
  Presence is per trace, so a file occurring in five frames of one trace
  counts once for that trace.
- IAD, inverse average distance: 1 / mean(1 + p) over B's traces containing
  f, where p is the closest-to-crash-point position of f's frames in that
  trace. Files at the crash point of every trace get 1.0.
- IBF, inverse bucket frequency: ln(1 + G / g_f) where G is how many groups
  the window has and g_f how many of them contain f anywhere. Files smeared
  across every group bottom out at ln 2 instead of zero.

Candidates are the files whose frames carry an application package (per
AppConfig.app_package_prefixes); framework and JDK frames are not
actionable and only dilute the list. Scores use the traces as parsed, one
vote per member report.

Files are ranked by descending score; ties prefer the file nearer the crash
point (higher IAD) and then the lexicographically smaller name. Within a
top file, methods are ranked by how many member traces contain them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Iterable

from .config import AppConfig
from .errors import FileUnseenError, FormatError, NoCandidatesError
from .grouping import CrashGroup, LevelPartition
from .ingest import CrashCorpus
from .trace import CrashReport, StackTrace, declaring_file


@dataclass(frozen=True, slots=True)
class FileScore:
    """One candidate file with its three factors and their product."""

    file: str
    iad: float
    ibf: float
    ff: float
    score: float


@dataclass(frozen=True, slots=True)
class FileRanking:
    """Top candidate files of one group, descending by score."""

    group_id: str
    entries: tuple[FileScore, ...]
    candidates_considered: int


@dataclass(frozen=True, slots=True)
class MethodRank:
    """Methods of one ranked file, ordered by trace participation."""

    file: str
    methods: tuple[tuple[str, int], ...]


@dataclass(frozen=True, slots=True)
class GroupRanking:
    """A group's file ranking plus the per-file method breakdowns.

    Groups without any application frame get an empty ranking here, which
    keeps them visible downstream as infrastructure-only crashes.
    """

    ranking: FileRanking
    methods: tuple[MethodRank, ...]


class _TraceStats:
    """Per-trace candidate facts, computed once and reused across groups."""

    __slots__ = ("file_min_position", "method_min_position")

    def __init__(self, trace: StackTrace, config: AppConfig) -> None:
        self.file_min_position: dict[str, int] = {}
        self.method_min_position: dict[tuple[str, str], int] = {}
        for frame in trace.frames:
            if not config.is_app_package(frame.qualified_method.package):
                continue
            file_name = declaring_file(frame.qualified_method)
            position = frame.position
            held = self.file_min_position.get(file_name)
            if held is None or position < held:
                self.file_min_position[file_name] = position
            method_key = (file_name, frame.qualified_method.method)
            held = self.method_min_position.get(method_key)
            if held is None or position < held:
                self.method_min_position[method_key] = position


class _Scorer:
    """Shared state for ranking many groups of one corpus and partition."""

    def __init__(self, all_groups: LevelPartition, corpus: CrashCorpus, config: AppConfig) -> None:
        self._config = config
        self._group_count = len(all_groups.groups)
        self._reports = corpus.reports_by_id()
        self._stats_cache: dict[int, _TraceStats] = {}
        self._group_presence: dict[str, int] = {}
        for grp in all_groups.groups:
            for file_name in self._group_files(grp):
                self._group_presence[file_name] = self._group_presence.get(file_name, 0) + 1

    def _stats(self, trace: StackTrace) -> _TraceStats:
        stats = self._stats_cache.get(id(trace))
        if stats is None:
            stats = _TraceStats(trace, self._config)
            self._stats_cache[id(trace)] = stats
        return stats

    def _member_traces(self, group: CrashGroup) -> dict[int, tuple[StackTrace, int]]:
        """Distinct member traces with how many reports carry each."""
        weights: dict[int, tuple[StackTrace, int]] = {}
        for crash_id in group.members:
            trace = self._reports[crash_id].trace
            held = weights.get(id(trace))
            weights[id(trace)] = (trace, 1 if held is None else held[1] + 1)
        return weights

    def _group_files(self, group: CrashGroup) -> set[str]:
        files: set[str] = set()
        for trace, _ in self._member_traces(group).values():
            files.update(self._stats(trace).file_min_position)
        return files

    def ibf(self, file_name: str) -> float:
        containing = self._group_presence.get(file_name, 0)
        if containing == 0:
            raise FileUnseenError(f"file {file_name!r} appears in no group of this window")
        return math.log(1.0 + self._group_count / containing)

    def rank_files(self, group: CrashGroup) -> FileRanking:
        member_count = len(group.members)
        presence: dict[str, int] = {}
        distance_sum: dict[str, int] = {}
        for trace, count in self._member_traces(group).values():
            for file_name, min_position in self._stats(trace).file_min_position.items():
                presence[file_name] = presence.get(file_name, 0) + count
                distance_sum[file_name] = (
                    distance_sum.get(file_name, 0) + count * (1 + min_position)
                )
        if not presence:
            raise NoCandidatesError(
                f"group {group.id} has no application frames (infrastructure-only crash)"
            )
        entries = []
        for file_name, containing in presence.items():
            ff = containing / member_count
            iad = containing / distance_sum[file_name]
            ibf = self.ibf(file_name)
            entries.append(
                FileScore(file=file_name, iad=iad, ibf=ibf, ff=ff, score=iad * ibf * ff)
            )
        entries.sort(key=lambda e: (-e.score, -e.iad, e.file))
        return FileRanking(
            group_id=group.id,
            entries=tuple(entries[: self._config.top_n_files]),
            candidates_considered=len(entries),
        )

    def rank_methods(self, ranking: FileRanking, group: CrashGroup) -> tuple[MethodRank, ...]:
        weights = self._member_traces(group)
        ranks = []
        for entry in ranking.entries:
            counts: dict[str, int] = {}
            min_positions: dict[str, int] = {}
            for trace, count in weights.values():
                for (file_name, method), position in self._stats(trace).method_min_position.items():
                    if file_name != entry.file:
                        continue
                    counts[method] = counts.get(method, 0) + count
                    held = min_positions.get(method)
                    if held is None or position < held:
                        min_positions[method] = position
            ordered = sorted(counts, key=lambda m: (-counts[m], min_positions[m], m))
            ranks.append(
                MethodRank(file=entry.file, methods=tuple((m, counts[m]) for m in ordered))
            )
        return tuple(ranks)


def file_frequency(f: str, B: CrashGroup, corpus: CrashCorpus) -> float:
    """Share of the group's traces containing a frame of file f."""
    reports = corpus.reports_by_id()
    containing = sum(1 for cid in B.members if f in _files_of(reports[cid].trace))
    return containing / len(B.members)


def inverse_avg_distance(f: str, B: CrashGroup, corpus: CrashCorpus) -> float:
    """1 / mean(1 + closest position of f) over the group's traces with f."""
    reports = corpus.reports_by_id()
    distances = []
    for cid in B.members:
        trace = reports[cid].trace
        positions = [
            frame.position
            for frame in trace.frames
            if declaring_file(frame.qualified_method) == f
        ]
        if positions:
            distances.append(1 + min(positions))
    if not distances:
        return 0.0
    return len(distances) / sum(distances)


def inverse_bucket_frequency(f: str, all_groups: LevelPartition, corpus: CrashCorpus) -> float:
    """ln(1 + total groups / groups containing f); FileUnseen when none do."""
    reports = corpus.reports_by_id()
    containing = 0
    for grp in all_groups.groups:
        if any(f in _files_of(reports[cid].trace) for cid in grp.members):
            containing += 1
    if containing == 0:
        raise FileUnseenError(f"file {f!r} appears in no group of this window")
    return math.log(1.0 + len(all_groups.groups) / containing)


def _files_of(trace: StackTrace) -> set[str]:
    return {declaring_file(frame.qualified_method) for frame in trace.frames}


def rank_files(
    B: CrashGroup, all_groups: LevelPartition, corpus: CrashCorpus, config: AppConfig
) -> FileRanking:
    """Score the group's application files and keep the configured top slice.

    Raises NoCandidates when no member frame belongs to an application
    package, which marks the group as an infrastructure-only crash.
    """
    return _Scorer(all_groups, corpus, config).rank_files(B)


def rank_methods(
    ranking: FileRanking, B: CrashGroup, corpus: CrashCorpus, config: AppConfig
) -> list[MethodRank]:
    """Rank each top file's methods by how many member traces contain them."""
    scorer = _Scorer(LevelPartition(level=0, groups=()), corpus, config)
    return list(scorer.rank_methods(ranking, B))


def rank_all(
    all_groups: LevelPartition, corpus: CrashCorpus, config: AppConfig
) -> tuple[GroupRanking, ...]:
    """Rank every group of the partition, sharing per-trace work.

    Groups without application frames come back with an empty ranking
    instead of an error, so callers can still report them.
    """
    scorer = _Scorer(all_groups, corpus, config)
    rankings = []
    for grp in all_groups.groups:
        try:
            ranking = scorer.rank_files(grp)
        except NoCandidatesError:
            ranking = FileRanking(group_id=grp.id, entries=(), candidates_considered=0)
        rankings.append(
            GroupRanking(ranking=ranking, methods=scorer.rank_methods(ranking, grp))
        )
    return tuple(rankings)


def ranking_to_json(group_ranking: GroupRanking) -> dict[str, Any]:
    methods_by_file = {rank.file: rank.methods for rank in group_ranking.methods}
    files = []
    for entry in group_ranking.ranking.entries:
        files.append(
            {
                "file": entry.file,
                "iad": entry.iad,
                "ibf": entry.ibf,
                "ff": entry.ff,
                "score": entry.score,
                "methods": [
                    {"method": method, "traces": count}
                    for method, count in methods_by_file.get(entry.file, ())
                ],
            }
        )
    return {
        "group_id": group_ranking.ranking.group_id,
        "candidates_considered": group_ranking.ranking.candidates_considered,
        "files": files,
    }


def rankings_to_json(rankings: Iterable[GroupRanking]) -> list[dict[str, Any]]:
    return [ranking_to_json(r) for r in rankings]


def ranking_from_json(data: Any) -> GroupRanking:
    if not isinstance(data, dict):
        raise FormatError("each ranking must be a JSON object")
    try:
        entries = []
        methods = []
        for item in data["files"]:
            entries.append(
                FileScore(
                    file=item["file"],
                    iad=float(item["iad"]),
                    ibf=float(item["ibf"]),
                    ff=float(item["ff"]),
                    score=float(item["score"]),
                )
            )
            methods.append(
                MethodRank(
                    file=item["file"],
                    methods=tuple((m["method"], int(m["traces"])) for m in item["methods"]),
                )
            )
        ranking = FileRanking(
            group_id=data["group_id"],
            entries=tuple(entries),
            candidates_considered=int(data["candidates_considered"]),
        )
        return GroupRanking(ranking=ranking, methods=tuple(methods))
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"bad ranking object: {exc}") from exc


def rankings_from_json(data: Any) -> tuple[GroupRanking, ...]:
    if not isinstance(data, list):
        raise FormatError("rankings file must hold a JSON array")
    return tuple(ranking_from_json(item) for item in data)
