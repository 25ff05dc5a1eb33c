"""Clustering of crash reports into groups, at four cumulative levels.

Level 1 buckets reports whose parsed traces are identical (same exception
type, same frame sequence including line numbers). Level 2 merges Level-1
groups whose traces become equal once volatile generated identifiers are
normalized away. Level 3 merges Level-2 groups when one group's method
sequence is a contiguous subsequence of the other's (line numbers ignored).
Level 4 merges Level-3 groups that crash in the same source file, i.e. whose
top frames resolve to the same qualified file name.

Each level coarsens the previous one, so a group's members only ever grow.
After a merge the group's signature is the set of its member signatures and
the grouping predicate holds if it holds for any element of that set.

Group ids are the lexicographically least member crash_id, which makes
partitions deterministic for a fixed corpus no matter the report order.
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import datetime
from typing import Any, Iterable, Union

from .config import AppConfig
from .errors import FormatError, InvalidLevelError
from .ingest import CrashCorpus, format_timestamp, parse_timestamp
from .trace import (
    CrashReport,
    Frame,
    NormalizationRules,
    QualifiedMethod,
    declaring_file,
    method_sequence,
    normalize_frames,
    parse_frame_line,
    parse_stack_trace,
    render_frames,
)

LEVEL_COUNT = 4

_SIGNATURE_KINDS = {
    1: "exact-trace",
    2: "normalized-frames",
    3: "method-sequences",
    4: "crash-point-files",
}


@dataclass(frozen=True, slots=True)
class ExactTraceSignature:
    """Level-1 signature: the parsed trace itself (message excluded)."""

    exception_type: str
    frames: tuple[Frame, ...]


@dataclass(frozen=True, slots=True)
class NormalizedFrameSignature:
    """Level-2 signature: the frame sequence after normalization."""

    frames: tuple[Frame, ...]


# Level 3 stores a frozenset of method sequences (one per merged Level-2
# group); Level 4 a frozenset of qualified crash-point file names.
MethodSequence = tuple[str, ...]
GroupSignature = Union[
    ExactTraceSignature,
    NormalizedFrameSignature,
    frozenset,
]


@dataclass(frozen=True, slots=True)
class CrashGroup:
    """One cluster of crash reports at a given level.

    id is the lexicographically least member crash_id. first_seen and
    last_seen are the extreme member timestamps.
    """

    id: str
    level: int
    members: frozenset[str]
    signature: GroupSignature
    first_seen: datetime
    last_seen: datetime

    @property
    def crash_count(self) -> int:
        return len(self.members)


@dataclass(frozen=True, slots=True)
class LevelPartition:
    """All groups of one level; together they cover the corpus exactly once."""

    level: int
    groups: tuple[CrashGroup, ...]

    def __len__(self) -> int:
        return len(self.groups)

    def group_of(self) -> dict[str, CrashGroup]:
        """Map each member crash_id to its group."""
        index: dict[str, CrashGroup] = {}
        for group in self.groups:
            for crash_id in group.members:
                index[crash_id] = group
        return index


class _UnionFind:
    """Disjoint sets over indexes 0..n-1 with path compression."""

    def __init__(self, size: int) -> None:
        self._parent = list(range(size))

    def find(self, index: int) -> int:
        parent = self._parent
        root = index
        while parent[root] != root:
            root = parent[root]
        while parent[index] != root:
            parent[index], index = root, parent[index]
        return root

    def union(self, left: int, right: int) -> None:
        left_root = self.find(left)
        right_root = self.find(right)
        if left_root != right_root:
            self._parent[right_root] = left_root

    def components(self) -> list[list[int]]:
        by_root: dict[int, list[int]] = {}
        for index in range(len(self._parent)):
            by_root.setdefault(self.find(index), []).append(index)
        return list(by_root.values())


def _ordered(groups: Iterable[CrashGroup]) -> tuple[CrashGroup, ...]:
    return tuple(sorted(groups, key=lambda g: g.id))


def _merge_groups(level: int, signature: GroupSignature, groups: list[CrashGroup]) -> CrashGroup:
    members: frozenset[str] = frozenset().union(*(g.members for g in groups))
    return CrashGroup(
        id=min(g.id for g in groups),
        level=level,
        members=members,
        signature=signature,
        first_seen=min(g.first_seen for g in groups),
        last_seen=max(g.last_seen for g in groups),
    )


def group_level1(corpus: CrashCorpus) -> LevelPartition:
    """Bucket reports whose traces are identical.

    Identity means same exception type and same frame sequence, line numbers
    included. The exception message is deliberately not part of the identity:
    messages carry request-specific values (ids, parameters) that would
    splinter otherwise identical crashes.
    """
    member_ids: list[list[str]] = []
    first_seen: list[datetime] = []
    last_seen: list[datetime] = []
    keys: list[tuple[str, tuple[Frame, ...]]] = []
    # Reports loaded from the same raw text share one trace object, so the
    # id() shortcut skips hashing the frame tuple for repeated traces.
    bucket_by_trace: dict[int, int] = {}
    bucket_by_key: dict[tuple[str, tuple[Frame, ...]], int] = {}
    for report in corpus.reports:
        bucket = bucket_by_trace.get(id(report.trace))
        if bucket is None:
            key = (report.trace.exception_type, report.trace.frames)
            bucket = bucket_by_key.get(key)
            if bucket is None:
                bucket = len(keys)
                bucket_by_key[key] = bucket
                keys.append(key)
                member_ids.append([])
                first_seen.append(report.timestamp)
                last_seen.append(report.timestamp)
            bucket_by_trace[id(report.trace)] = bucket
        member_ids[bucket].append(report.crash_id)
        if report.timestamp < first_seen[bucket]:
            first_seen[bucket] = report.timestamp
        if report.timestamp > last_seen[bucket]:
            last_seen[bucket] = report.timestamp
    groups = [
        CrashGroup(
            id=min(ids),
            level=1,
            members=frozenset(ids),
            signature=ExactTraceSignature(exception_type=key[0], frames=key[1]),
            first_seen=first,
            last_seen=last,
        )
        for key, ids, first, last in zip(keys, member_ids, first_seen, last_seen)
    ]
    return LevelPartition(level=1, groups=_ordered(groups))


def group_level2(p1: LevelPartition, rules: NormalizationRules) -> LevelPartition:
    """Merge Level-1 groups whose normalized frame sequences are equal."""
    buckets: dict[tuple[Frame, ...], list[CrashGroup]] = {}
    for group in p1.groups:
        signature = group.signature
        assert isinstance(signature, ExactTraceSignature)
        normalized = normalize_frames(signature.frames, rules)
        buckets.setdefault(normalized, []).append(group)
    groups = [
        _merge_groups(2, NormalizedFrameSignature(frames=frames), merged)
        for frames, merged in buckets.items()
    ]
    return LevelPartition(level=2, groups=_ordered(groups))


def _is_contiguous_subsequence(needle: MethodSequence, haystack: MethodSequence) -> bool:
    needle_len = len(needle)
    if needle_len > len(haystack):
        return False
    first = needle[0]
    for start in range(len(haystack) - needle_len + 1):
        if haystack[start] == first and haystack[start : start + needle_len] == needle:
            return True
    return False


def either_contains(left: MethodSequence, right: MethodSequence) -> bool:
    """True when one method sequence is a contiguous run inside the other."""
    return _is_contiguous_subsequence(left, right) or _is_contiguous_subsequence(right, left)


def group_level3(p2: LevelPartition) -> LevelPartition:
    """Merge Level-2 groups linked by method-sequence containment.

    Each Level-2 group is reduced to its sequence of package.class.method
    rows (line numbers dropped). Two groups are linked when one sequence is a
    contiguous subsequence of the other; merging follows the transitive
    closure of that relation. Candidate pairs are narrowed through indexes on
    the first and last row: a contained sequence's endpoints must both occur
    in the containing one.
    """
    sequences: list[MethodSequence] = []
    for group in p2.groups:
        signature = group.signature
        assert isinstance(signature, NormalizedFrameSignature)
        sequences.append(method_sequence(signature.frames))

    by_first: dict[str, list[int]] = {}
    by_last: dict[str, list[int]] = {}
    for index, sequence in enumerate(sequences):
        by_first.setdefault(sequence[0], []).append(index)
        by_last.setdefault(sequence[-1], []).append(index)

    merged = _UnionFind(len(sequences))
    for container_index, container in enumerate(sequences):
        rows = set(container)
        starts_inside: set[int] = set()
        ends_inside: set[int] = set()
        for row in rows:
            starts_inside.update(by_first.get(row, ()))
            ends_inside.update(by_last.get(row, ()))
        for candidate in starts_inside & ends_inside:
            if candidate == container_index:
                continue
            if _is_contiguous_subsequence(sequences[candidate], container):
                merged.union(container_index, candidate)

    groups = [
        _merge_groups(
            3,
            frozenset(sequences[i] for i in component),
            [p2.groups[i] for i in component],
        )
        for component in merged.components()
    ]
    return LevelPartition(level=3, groups=_ordered(groups))


def _sequence_crash_file(sequence: MethodSequence) -> str:
    return declaring_file(QualifiedMethod.parse(sequence[0]))


def group_level4(p3: LevelPartition) -> LevelPartition:
    """Merge Level-3 groups whose crash points live in the same file.

    A merged Level-3 group carries one method sequence per original Level-2
    group, so its crash-point files are the qualified file names of those
    sequences' first rows. Any shared file links two groups; closure is
    transitive.
    """
    file_sets: list[frozenset[str]] = []
    for group in p3.groups:
        signature = group.signature
        assert isinstance(signature, frozenset)
        file_sets.append(frozenset(_sequence_crash_file(seq) for seq in signature))

    merged = _UnionFind(len(file_sets))
    seen_in: dict[str, int] = {}
    for index, files in enumerate(file_sets):
        for file_name in files:
            previous = seen_in.get(file_name)
            if previous is None:
                seen_in[file_name] = index
            else:
                merged.union(previous, index)

    groups = [
        _merge_groups(
            4,
            frozenset().union(*(file_sets[i] for i in component)),
            [p3.groups[i] for i in component],
        )
        for component in merged.components()
    ]
    return LevelPartition(level=4, groups=_ordered(groups))


def group(corpus: CrashCorpus, level: int, config: AppConfig) -> LevelPartition:
    """Cluster the corpus at the given level (cumulative through 1..level)."""
    if not isinstance(level, int) or level < 1 or level > LEVEL_COUNT:
        raise InvalidLevelError(f"grouping level must be an integer in 1..4, got {level!r}")
    partition = group_level1(corpus)
    if level >= 2:
        partition = group_level2(partition, config.normalization_rules)
    if level >= 3:
        partition = group_level3(partition)
    if level >= 4:
        partition = group_level4(partition)
    return partition


def match_report_to_group(report: CrashReport, closed: CrashGroup, config: AppConfig) -> bool:
    """Would this report have joined the group, under the group's level?

    Used to test whether crashes recur after the group they belonged to was
    handled: the group keeps its stored signature and new reports are checked
    against it without re-clustering.
    """
    trace = report.trace
    if closed.level == 1:
        signature = closed.signature
        assert isinstance(signature, ExactTraceSignature)
        return (
            trace.exception_type == signature.exception_type
            and trace.frames == signature.frames
        )
    normalized = normalize_frames(trace.frames, config.normalization_rules)
    if closed.level == 2:
        signature = closed.signature
        assert isinstance(signature, NormalizedFrameSignature)
        return normalized == signature.frames
    if closed.level == 3:
        signature = closed.signature
        assert isinstance(signature, frozenset)
        sequence = method_sequence(normalized)
        return any(either_contains(sequence, member) for member in signature)
    if closed.level == 4:
        signature = closed.signature
        assert isinstance(signature, frozenset)
        crash_file = declaring_file(normalized[0].qualified_method)
        return crash_file in signature
    raise InvalidLevelError(f"group has unsupported level {closed.level!r}")


def _signature_to_json(group: CrashGroup) -> dict[str, Any]:
    kind = _SIGNATURE_KINDS[group.level]
    signature = group.signature
    value: Any
    if group.level == 1:
        assert isinstance(signature, ExactTraceSignature)
        value = signature.exception_type + "\n" + render_frames(signature.frames)
    elif group.level == 2:
        assert isinstance(signature, NormalizedFrameSignature)
        value = [frame.render() for frame in signature.frames]
    elif group.level == 3:
        assert isinstance(signature, frozenset)
        value = sorted(list(seq) for seq in signature)
    else:
        assert isinstance(signature, frozenset)
        value = sorted(signature)
    return {"kind": kind, "value": value}


def _signature_from_json(level: int, data: Any) -> GroupSignature:
    if not isinstance(data, dict) or "kind" not in data or "value" not in data:
        raise FormatError("group signature must be an object with kind and value")
    kind = data["kind"]
    if kind != _SIGNATURE_KINDS.get(level):
        raise FormatError(f"signature kind {kind!r} does not belong to level {level}")
    value = data["value"]
    if level == 1:
        if not isinstance(value, str):
            raise FormatError("exact-trace signature value must be a string")
        trace = parse_stack_trace(value)
        return ExactTraceSignature(exception_type=trace.exception_type, frames=trace.frames)
    if level == 2:
        frames = []
        for position, line in enumerate(value):
            frame = parse_frame_line(line, position)
            if frame is None:
                raise FormatError(f"bad frame line in signature: {line!r}")
            frames.append(frame)
        return NormalizedFrameSignature(frames=tuple(frames))
    if level == 3:
        return frozenset(tuple(seq) for seq in value)
    return frozenset(value)


def group_to_json(group: CrashGroup) -> dict[str, Any]:
    return {
        "id": group.id,
        "level": group.level,
        "members": sorted(group.members),
        "first_seen": format_timestamp(group.first_seen),
        "last_seen": format_timestamp(group.last_seen),
        "signature": _signature_to_json(group),
    }


def group_from_json(data: Any) -> CrashGroup:
    if not isinstance(data, dict):
        raise FormatError("each group must be a JSON object")
    try:
        level = data["level"]
        members = frozenset(data["members"])
        return CrashGroup(
            id=data["id"],
            level=level,
            members=members,
            signature=_signature_from_json(level, data["signature"]),
            first_seen=parse_timestamp(data["first_seen"]),
            last_seen=parse_timestamp(data["last_seen"]),
        )
    except KeyError as exc:
        raise FormatError(f"group object is missing key {exc.args[0]!r}") from exc
    except (TypeError, ValueError) as exc:
        raise FormatError(f"bad group object: {exc}") from exc


def partition_to_json(partition: LevelPartition) -> list[dict[str, Any]]:
    """Render a partition as the JSON array stored in groups.json."""
    return [group_to_json(group) for group in partition.groups]


def partition_from_json(data: Any) -> LevelPartition:
    """Rebuild a partition from the groups.json array."""
    if not isinstance(data, list):
        raise FormatError("groups file must hold a JSON array")
    groups = tuple(group_from_json(item) for item in data)
    levels = {group.level for group in groups}
    if len(levels) > 1:
        raise FormatError(f"groups file mixes levels {sorted(levels)}")
    level = levels.pop() if levels else 0
    return LevelPartition(level=level, groups=_ordered(groups))
