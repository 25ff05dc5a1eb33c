"""Crash-report mining: grouping, suspect ranking, and weekly triage output."""

from .config import AppConfig, load_config
from .errors import (
    ConfigError,
    CrashlensError,
    DuplicateIdError,
    EmptyTaskSetError,
    FormatError,
    InvalidLevelError,
    MalformedTraceError,
    MissingRankingError,
    NoCandidatesError,
)
from .grouping import CrashGroup, LevelPartition, group, match_report_to_group
from .ingest import CrashCorpus, TimeWindow, load_corpus, weekly_windows
from .ranking import FileRanking, FileScore, GroupRanking, MethodRank, rank_all
from .report import GroupSummary, IssuePayload, build_issue, summarize_groups
from .trace import CrashReport, Frame, StackTrace, parse_stack_trace

__version__ = "0.1.0"

__all__ = [
    "AppConfig",
    "ConfigError",
    "CrashCorpus",
    "CrashGroup",
    "CrashReport",
    "CrashlensError",
    "DuplicateIdError",
    "EmptyTaskSetError",
    "FileRanking",
    "FileScore",
    "FormatError",
    "Frame",
    "GroupRanking",
    "GroupSummary",
    "InvalidLevelError",
    "IssuePayload",
    "LevelPartition",
    "MalformedTraceError",
    "MethodRank",
    "MissingRankingError",
    "NoCandidatesError",
    "StackTrace",
    "TimeWindow",
    "build_issue",
    "group",
    "load_config",
    "load_corpus",
    "match_report_to_group",
    "parse_stack_trace",
    "rank_all",
    "summarize_groups",
    "weekly_windows",
    "__version__",
]
