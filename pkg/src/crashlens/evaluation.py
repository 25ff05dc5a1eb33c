"""Retrospective metrics: how well do the rankings point at the real fix?

Ground truth is a JSON export from the team's tracker: one task per crash
group, with the files and methods actually touched by the fix commits.
recall_at_n asks whether any changed file shows up in the top n suggestions;
average_precision weighs how early the changed files appear; method_hit_rate
does the file-and-method variant. recurrence_table replays a post-closure
corpus against the closed groups to flag bugs that kept crashing after
their task was resolved.

A task is evaluable only when its changed_files set is non-empty; tasks
without changed files are skipped by every file metric, and tasks without
changed methods are skipped by method_hit_rate.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Iterable, Mapping, Sequence

from .config import AppConfig
from .errors import EmptyTaskSetError, FormatError, MissingRankingError
from .grouping import LevelPartition, match_report_to_group
from .ingest import CrashCorpus
from .ranking import FileRanking, GroupRanking, MethodRank

DEFAULT_CUTOFFS = (1, 3, 5)


@dataclass(frozen=True, slots=True)
class GroundTruthTask:
    """One resolved tracker task tied back to its crash group."""

    task_id: str
    group_id: str
    changed_files: frozenset[str]
    changed_methods: frozenset[tuple[str, str]]


@dataclass(frozen=True, slots=True)
class TaskOutcome:
    """Per-task evaluation detail kept alongside the aggregate numbers."""

    task_id: str
    first_hit_rank: int | None
    average_precision: float


@dataclass(frozen=True)
class EvalReport:
    """Aggregate metrics at each cutoff plus the per-task breakdown."""

    recall_at: dict[int, float]
    map_at: dict[int, float]
    method_hit_rate: float
    per_task: tuple[TaskOutcome, ...]


def _evaluable(tasks: Iterable[GroundTruthTask]) -> list[GroundTruthTask]:
    return [task for task in tasks if task.changed_files]


def _ranking_for(task: GroundTruthTask, rankings: Mapping[str, FileRanking]) -> FileRanking:
    ranking = rankings.get(task.group_id)
    if ranking is None:
        raise MissingRankingError(
            f"task {task.task_id}: no ranking for group {task.group_id}"
        )
    return ranking


def first_hit_rank(task: GroundTruthTask, ranking: FileRanking) -> int | None:
    """1-based rank of the first suggested file the fix actually changed."""
    for position, entry in enumerate(ranking.entries, start=1):
        if entry.file in task.changed_files:
            return position
    return None


def recall_at_n(
    tasks: Sequence[GroundTruthTask], rankings: Mapping[str, FileRanking], n: int
) -> float:
    """Fraction of evaluable tasks with a changed file in the top n."""
    evaluable = _evaluable(tasks)
    if not evaluable:
        raise EmptyTaskSetError("no task has a non-empty changed_files set")
    hits = 0
    for task in evaluable:
        rank = first_hit_rank(task, _ranking_for(task, rankings))
        if rank is not None and rank <= n:
            hits += 1
    return hits / len(evaluable)


def average_precision(task: GroundTruthTask, ranking: FileRanking, n: int) -> float:
    """AP at cutoff n, normalized by min(changed file count, n).

    The cap keeps the score reachable when more files changed than the
    cutoff allows; a perfect prefix of relevant suggestions scores 1.0.
    """
    denominator = min(len(task.changed_files), n)
    if denominator == 0:
        return 0.0
    relevant_seen = 0
    total = 0.0
    for position, entry in enumerate(ranking.entries[:n], start=1):
        if entry.file in task.changed_files:
            relevant_seen += 1
            total += relevant_seen / position
    return total / denominator


def mean_average_precision(
    tasks: Sequence[GroundTruthTask], rankings: Mapping[str, FileRanking], n: int
) -> float:
    """Arithmetic mean of AP over the evaluable tasks."""
    evaluable = _evaluable(tasks)
    if not evaluable:
        raise EmptyTaskSetError("no task has a non-empty changed_files set")
    total = sum(
        average_precision(task, _ranking_for(task, rankings), n) for task in evaluable
    )
    return total / len(evaluable)


def method_hit_rate(
    tasks: Sequence[GroundTruthTask],
    method_ranks: Mapping[str, Sequence[MethodRank]],
) -> float:
    """Fraction of method-evaluable tasks with a suggested changed method.

    Only tasks with a non-empty changed_methods set count; a task whose
    group has no method suggestions is a miss, not an error. With no
    method-evaluable task at all the rate is 0.0.
    """
    scored = [task for task in tasks if task.changed_methods]
    if not scored:
        return 0.0
    hits = 0
    for task in scored:
        suggested = {
            (rank.file, method)
            for rank in method_ranks.get(task.group_id, ())
            for method, _count in rank.methods
        }
        if suggested & task.changed_methods:
            hits += 1
    return hits / len(scored)


def recurrence_table(
    closed_tasks: Sequence[GroundTruthTask],
    post_corpus: CrashCorpus,
    groups: LevelPartition,
    config: AppConfig,
) -> dict[str, bool]:
    """task_id -> did any post-closure report still match the task's group?

    A task whose group is missing from the partition can never match and
    comes back False.
    """
    by_id = {grp.id: grp for grp in groups.groups}
    table: dict[str, bool] = {}
    for task in closed_tasks:
        grp = by_id.get(task.group_id)
        recurred = False
        if grp is not None:
            for report in post_corpus.reports:
                if match_report_to_group(report, grp, config):
                    recurred = True
                    break
        table[task.task_id] = recurred
    return table


def index_rankings(
    rankings: Iterable[GroupRanking],
) -> tuple[dict[str, FileRanking], dict[str, tuple[MethodRank, ...]]]:
    """Split GroupRanking objects into the two lookup maps the metrics take."""
    files: dict[str, FileRanking] = {}
    methods: dict[str, tuple[MethodRank, ...]] = {}
    for group_ranking in rankings:
        files[group_ranking.ranking.group_id] = group_ranking.ranking
        methods[group_ranking.ranking.group_id] = group_ranking.methods
    return files, methods


def evaluate(
    tasks: Sequence[GroundTruthTask],
    rankings: Mapping[str, FileRanking],
    method_ranks: Mapping[str, Sequence[MethodRank]],
    cutoffs: Sequence[int] = DEFAULT_CUTOFFS,
) -> EvalReport:
    """Compute every metric at each cutoff; per-task AP uses the largest."""
    evaluable = _evaluable(tasks)
    if not evaluable:
        raise EmptyTaskSetError("no task has a non-empty changed_files set")
    ns = tuple(sorted(set(cutoffs)))
    if not ns or ns[0] < 1:
        raise ValueError("cutoffs must be positive integers")
    widest = ns[-1]
    per_task = []
    for task in evaluable:
        ranking = _ranking_for(task, rankings)
        per_task.append(
            TaskOutcome(
                task_id=task.task_id,
                first_hit_rank=first_hit_rank(task, ranking),
                average_precision=average_precision(task, ranking, widest),
            )
        )
    return EvalReport(
        recall_at={n: recall_at_n(tasks, rankings, n) for n in ns},
        map_at={n: mean_average_precision(tasks, rankings, n) for n in ns},
        method_hit_rate=method_hit_rate(tasks, method_ranks),
        per_task=tuple(per_task),
    )


def truth_from_json(data: Any) -> tuple[GroundTruthTask, ...]:
    """Parse the ground-truth array; FormatError on any schema violation."""
    if not isinstance(data, list):
        raise FormatError("truth file must hold a JSON array")
    tasks = []
    for index, item in enumerate(data):
        if not isinstance(item, dict):
            raise FormatError(f"truth entry {index} must be a JSON object")
        try:
            task_id = item["task_id"]
            group_id = item["group_id"]
            raw_files = item["changed_files"]
            raw_methods = item["changed_methods"]
        except KeyError as exc:
            raise FormatError(f"truth entry {index} is missing {exc}") from exc
        if not isinstance(task_id, str) or not isinstance(group_id, str):
            raise FormatError(f"truth entry {index}: ids must be strings")
        if not isinstance(raw_files, list) or not all(
            isinstance(f, str) for f in raw_files
        ):
            raise FormatError(
                f"truth entry {index}: changed_files must be a list of strings"
            )
        if not isinstance(raw_methods, list):
            raise FormatError(f"truth entry {index}: changed_methods must be a list")
        methods = []
        for pair in raw_methods:
            if (
                not isinstance(pair, dict)
                or not isinstance(pair.get("file"), str)
                or not isinstance(pair.get("method"), str)
            ):
                raise FormatError(
                    f"truth entry {index}: each changed method needs"
                    " string `file` and `method` fields"
                )
            methods.append((pair["file"], pair["method"]))
        tasks.append(
            GroundTruthTask(
                task_id=task_id,
                group_id=group_id,
                changed_files=frozenset(raw_files),
                changed_methods=frozenset(methods),
            )
        )
    return tuple(tasks)


def eval_report_to_json(report: EvalReport) -> dict[str, Any]:
    return {
        "recall_at": {str(n): value for n, value in sorted(report.recall_at.items())},
        "map_at": {str(n): value for n, value in sorted(report.map_at.items())},
        "method_hit_rate": report.method_hit_rate,
        "per_task": [
            {
                "task_id": outcome.task_id,
                "first_hit_rank": outcome.first_hit_rank,
                "average_precision": outcome.average_precision,
            }
            for outcome in report.per_task
        ],
    }
