"""Command line front end: ingest, group, rank, report, eval, pipeline.

Every command reads its run configuration from a TOML file (--config, or the
CRASHLENS_CONFIG environment variable) and writes a manifest.json next to its
outputs recording the tool version, a hash of the effective configuration,
and a SHA-256 digest of every input file. Outputs are plain files on purpose:
the weekly triage loop works off a spreadsheet and a handful of markdown
documents, not a service.

Exit codes: 0 success, 1 input problem (malformed data, unknown ids, missing
files), 2 configuration problem, 3 internal invariant violation.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import re
import sys
from dataclasses import dataclass, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Mapping, Sequence

from . import __version__
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
)
from .evaluation import eval_report_to_json, evaluate, index_rankings, truth_from_json
from .grouping import group, partition_from_json, partition_to_json
from .ingest import TimeWindow, load_corpus
from .ranking import rank_all, rankings_from_json, rankings_to_json
from .report import (
    build_issue,
    export_spreadsheet_csv,
    render_issue_markdown,
    summaries_to_json,
    summarize_groups,
)

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_CONFIG = 2
EXIT_INTERNAL = 3

_INPUT_ERRORS = (
    FormatError,
    MalformedTraceError,
    DuplicateIdError,
    InvalidLevelError,
    MissingRankingError,
    EmptyTaskSetError,
    ValueError,
    OSError,
)


@dataclass(frozen=True)
class RunManifest:
    """What a run consumed and produced, written next to the outputs."""

    command: str
    version: str
    config_path: str
    config_hash: str
    window: dict[str, str]
    level: int | None
    inputs: dict[str, str]
    outputs: tuple[str, ...]
    created_at: str


def manifest_to_json(manifest: RunManifest) -> dict[str, Any]:
    return {
        "command": manifest.command,
        "version": manifest.version,
        "config_path": manifest.config_path,
        "config_hash": manifest.config_hash,
        "window": manifest.window,
        "level": manifest.level,
        "inputs": manifest.inputs,
        "outputs": list(manifest.outputs),
        "created_at": manifest.created_at,
        "exit_codes": {"input": EXIT_INPUT, "config": EXIT_CONFIG, "internal": EXIT_INTERNAL},
    }


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _config_hash(config: AppConfig) -> str:
    blob = json.dumps(
        {
            "app_package_prefixes": list(config.app_package_prefixes),
            "normalization_rules": [
                [rule.pattern, rule.replacement] for rule in config.normalization_rules
            ],
            "top_n_files": config.top_n_files,
            "top_n_uris": config.top_n_uris,
            "top_n_users_per_uri": config.top_n_users_per_uri,
            "sample_trace_count": config.sample_trace_count,
            "sample_crash_id_count": config.sample_crash_id_count,
            "strict": config.strict,
        },
        sort_keys=True,
    )
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def _now() -> str:
    return datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def _write_json(path: Path, data: Any) -> None:
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _write_text(path: Path, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def _safe_name(group_id: str) -> str:
    return re.sub(r"[^\w.-]", "_", group_id)


def _emit_manifest(
    out_dir: Path,
    command: str,
    config: AppConfig,
    config_path: str,
    window: TimeWindow,
    level: int | None,
    input_paths: Sequence[Path],
    outputs: Sequence[str],
) -> RunManifest:
    manifest = RunManifest(
        command=command,
        version=__version__,
        config_path=config_path,
        config_hash=_config_hash(config),
        window=window.as_json(),
        level=level,
        inputs={str(p): _sha256(p) for p in input_paths},
        outputs=tuple(outputs),
        created_at=_now(),
    )
    _write_json(out_dir / "manifest.json", manifest_to_json(manifest))
    return manifest


def _load_json_file(path: Path) -> Any:
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: not valid JSON: {exc}") from exc


def _resolve_selection(
    select: Sequence[str] | None, known_ids: Mapping[str, Any]
) -> list[str]:
    if select is None:
        return sorted(known_ids)
    unknown = [gid for gid in select if gid not in known_ids]
    if unknown:
        raise FormatError(f"unknown group id(s): {', '.join(sorted(unknown))}")
    return list(select)


def run_pipeline(
    config: AppConfig,
    input_path: str | Path,
    window: TimeWindow,
    out_dir: str | Path,
    *,
    level: int = 4,
    select: Sequence[str] | None = None,
    config_path: str = "<inline>",
) -> RunManifest:
    """Ingest, group, rank, and report in one pass; returns the manifest."""
    input_path = Path(input_path)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    corpus = load_corpus(input_path, window, config)
    partition = group(corpus, level, config)
    rankings = rank_all(partition, corpus, config)
    summaries = summarize_groups(partition, corpus, config)

    _write_json(out / "groups.json", partition_to_json(partition))
    _write_json(out / "ranks.json", rankings_to_json(rankings))
    _write_text(out / "summaries.csv", export_spreadsheet_csv(summaries))
    outputs = ["groups.json", "ranks.json", "summaries.csv"]

    groups_by_id = {grp.id: grp for grp in partition.groups}
    rankings_by_id = {r.ranking.group_id: r for r in rankings}
    for group_id in _resolve_selection(select, groups_by_id):
        bundle = rankings_by_id[group_id]
        payload = build_issue(
            groups_by_id[group_id], bundle.ranking, list(bundle.methods), corpus, config
        )
        name = f"issue-{_safe_name(group_id)}.md"
        _write_text(out / name, render_issue_markdown(payload))
        outputs.append(name)

    return _emit_manifest(
        out, "pipeline", config, config_path, window, level, [input_path], outputs
    )


def _resolve_config(args: argparse.Namespace) -> tuple[AppConfig, str]:
    path = args.config or os.environ.get("CRASHLENS_CONFIG")
    if not path:
        raise ConfigError("no configuration: pass --config or set CRASHLENS_CONFIG")
    config = load_config(path)
    overrides: dict[str, Any] = {}
    if args.strict:
        overrides["strict"] = True
    if getattr(args, "top", None) is not None:
        overrides["top_n_files"] = args.top
    if overrides:
        config = replace(config, **overrides)
    return config, str(path)


def _resolve_window(args: argparse.Namespace) -> TimeWindow:
    if getattr(args, "window", None):
        return TimeWindow.parse(args.window)
    return TimeWindow.unbounded()


def _cmd_ingest(args: argparse.Namespace) -> int:
    config, config_path = _resolve_config(args)
    window = _resolve_window(args)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    corpus = load_corpus(args.input, window, config)
    _write_json(
        out / "ingest.json",
        {
            "report_count": len(corpus),
            "skipped_count": corpus.skipped_count,
            "window": window.as_json(),
        },
    )
    _emit_manifest(
        out, "ingest", config, config_path, window, None, [Path(args.input)], ["ingest.json"]
    )
    return EXIT_OK


def _cmd_group(args: argparse.Namespace) -> int:
    config, config_path = _resolve_config(args)
    window = _resolve_window(args)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    corpus = load_corpus(args.input, window, config)
    partition = group(corpus, args.level, config)
    _write_json(out / "groups.json", partition_to_json(partition))
    _emit_manifest(
        out,
        "group",
        config,
        config_path,
        window,
        args.level,
        [Path(args.input)],
        ["groups.json"],
    )
    return EXIT_OK


def _cmd_rank(args: argparse.Namespace) -> int:
    config, config_path = _resolve_config(args)
    window = _resolve_window(args)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    corpus = load_corpus(args.input, window, config)
    partition = partition_from_json(_load_json_file(Path(args.groups)))
    rankings = rank_all(partition, corpus, config)
    _write_json(out / "ranks.json", rankings_to_json(rankings))
    _emit_manifest(
        out,
        "rank",
        config,
        config_path,
        window,
        partition.level or None,
        [Path(args.input), Path(args.groups)],
        ["ranks.json"],
    )
    return EXIT_OK


def _cmd_report(args: argparse.Namespace) -> int:
    config, config_path = _resolve_config(args)
    window = _resolve_window(args)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    corpus = load_corpus(args.input, window, config)
    partition = partition_from_json(_load_json_file(Path(args.groups)))
    rankings = rankings_from_json(_load_json_file(Path(args.ranks)))
    summaries = summarize_groups(partition, corpus, config)

    _write_text(out / "summaries.csv", export_spreadsheet_csv(summaries))
    outputs = ["summaries.csv"]
    if args.format == "json":
        _write_json(out / "summaries.json", summaries_to_json(summaries))
        outputs.append("summaries.json")

    groups_by_id = {grp.id: grp for grp in partition.groups}
    rankings_by_id = {r.ranking.group_id: r for r in rankings}
    for group_id in _resolve_selection(args.select, groups_by_id):
        bundle = rankings_by_id.get(group_id)
        if bundle is None:
            raise MissingRankingError(f"no ranking for group {group_id} in {args.ranks}")
        payload = build_issue(
            groups_by_id[group_id], bundle.ranking, list(bundle.methods), corpus, config
        )
        name = f"issue-{_safe_name(group_id)}.md"
        _write_text(out / name, render_issue_markdown(payload))
        outputs.append(name)

    _emit_manifest(
        out,
        "report",
        config,
        config_path,
        window,
        partition.level or None,
        [Path(args.input), Path(args.groups), Path(args.ranks)],
        outputs,
    )
    return EXIT_OK


def _cmd_eval(args: argparse.Namespace) -> int:
    config, config_path = _resolve_config(args)
    rankings = rankings_from_json(_load_json_file(Path(args.ranks)))
    tasks = truth_from_json(_load_json_file(Path(args.truth)))
    try:
        cutoffs = tuple(int(part) for part in args.n.split(","))
    except ValueError as exc:
        raise FormatError(f"--n must be a comma-separated list of integers: {args.n}") from exc
    files_by_group, methods_by_group = index_rankings(rankings)
    report = evaluate(tasks, files_by_group, methods_by_group, cutoffs)

    out_path = Path(args.out)
    out_dir = out_path.parent
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_json(out_path, eval_report_to_json(report))
    _emit_manifest(
        out_dir,
        "eval",
        config,
        config_path,
        TimeWindow.unbounded(),
        None,
        [Path(args.ranks), Path(args.truth)],
        [out_path.name],
    )
    return EXIT_OK


def _cmd_pipeline(args: argparse.Namespace) -> int:
    config, config_path = _resolve_config(args)
    window = _resolve_window(args)
    run_pipeline(
        config,
        args.input,
        window,
        args.out_dir,
        level=args.level,
        select=args.select,
        config_path=config_path,
    )
    return EXIT_OK


def _split_ids(value: str) -> list[str]:
    return [part for part in value.split(",") if part]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="crashlens",
        description="Group crash reports, rank suspicious files, emit triage reports.",
    )
    parser.add_argument(
        "--version", action="version", version=f"%(prog)s {__version__}"
    )

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML config file (or set CRASHLENS_CONFIG)")
    common.add_argument(
        "--strict", action="store_true", help="fail on malformed or duplicate records"
    )

    corpus_flags = argparse.ArgumentParser(add_help=False)
    corpus_flags.add_argument("--input", required=True, help="NDJSON crash report export")
    corpus_flags.add_argument(
        "--window", help="time window as START..END (RFC-3339 or YYYY-MM-DD)"
    )

    sub = parser.add_subparsers(dest="command", required=True)

    p_ingest = sub.add_parser(
        "ingest", parents=[common, corpus_flags], help="validate and count a corpus"
    )
    p_ingest.add_argument("--out-dir", required=True)
    p_ingest.set_defaults(handler=_cmd_ingest)

    p_group = sub.add_parser(
        "group", parents=[common, corpus_flags], help="partition a corpus into crash groups"
    )
    p_group.add_argument("--level", type=int, choices=(1, 2, 3, 4), default=4)
    p_group.add_argument("--out-dir", required=True)
    p_group.set_defaults(handler=_cmd_group)

    p_rank = sub.add_parser(
        "rank", parents=[common, corpus_flags], help="rank suspicious files per group"
    )
    p_rank.add_argument("--groups", required=True, help="groups.json from the group step")
    p_rank.add_argument("--top", type=int, help="override top_n_files")
    p_rank.add_argument("--out-dir", required=True)
    p_rank.set_defaults(handler=_cmd_rank)

    p_report = sub.add_parser(
        "report",
        parents=[common, corpus_flags],
        help="emit the weekly spreadsheet and issue documents",
    )
    p_report.add_argument("--groups", required=True)
    p_report.add_argument("--ranks", required=True)
    p_report.add_argument(
        "--select",
        type=_split_ids,
        default=None,
        help="comma-separated group ids to emit issues for (default: all)",
    )
    p_report.add_argument("--format", choices=("csv", "json"), default="csv")
    p_report.add_argument("--out-dir", required=True)
    p_report.set_defaults(handler=_cmd_report)

    p_eval = sub.add_parser(
        "eval", parents=[common], help="score rankings against bug-fix ground truth"
    )
    p_eval.add_argument("--ranks", required=True)
    p_eval.add_argument("--truth", required=True)
    p_eval.add_argument("--n", default="1,3,5", help="comma-separated cutoffs")
    p_eval.add_argument("--out", required=True, help="where to write eval.json")
    p_eval.set_defaults(handler=_cmd_eval)

    p_pipe = sub.add_parser(
        "pipeline",
        parents=[common, corpus_flags],
        help="ingest, group, rank, and report in one pass",
    )
    p_pipe.add_argument("--level", type=int, choices=(1, 2, 3, 4), default=4)
    p_pipe.add_argument("--select", type=_split_ids, default=None)
    p_pipe.add_argument("--top", type=int, help="override top_n_files")
    p_pipe.add_argument("--out-dir", required=True)
    p_pipe.set_defaults(handler=_cmd_pipeline)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except ConfigError as exc:
        print(f"crashlens: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except _INPUT_ERRORS as exc:
        print(f"crashlens: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except CrashlensError as exc:
        print(f"crashlens: internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except Exception as exc:
        print(f"crashlens: internal error: {exc!r}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
