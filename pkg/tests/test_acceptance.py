"""Acceptance suite: one test per shipping criterion.

Each test prints a single verdict line (visible with `pytest -s`; `pytest -v`
shows the same pass/fail per test name). The criteria cover oracle
equivalence for grouping and ranking, the scoring factor identities, the
metric fixtures, conformance of the documented examples, throughput on a
large synthetic corpus, and byte-level determinism against the checked-in
demo outputs.
"""

from __future__ import annotations

import json
import math
import random
import resource
import time
from collections import Counter
from datetime import datetime, timedelta, timezone
from pathlib import Path

from conftest import make_record
from corpusgen import corpus_from_records, planted_corpus, random_corpus_records
from oracles import oracle_partition, oracle_rank_files

from crashlens.cli import main
from crashlens.config import AppConfig
from crashlens.errors import NoCandidatesError
from crashlens.evaluation import (
    GroundTruthTask,
    average_precision,
    mean_average_precision,
    recall_at_n,
    recurrence_table,
)
from crashlens.grouping import group
from crashlens.ingest import CrashCorpus
from crashlens.ranking import FileRanking, FileScore, rank_all, rank_files
from crashlens.report import (
    build_issue,
    export_spreadsheet_csv,
    render_issue_markdown,
    summarize_groups,
)
from crashlens.trace import DEFAULT_NORMALIZATION_RULES, CrashReport, crash_point, parse_stack_trace

DEMO_DIR = Path(__file__).resolve().parent.parent / "demo"


def _verdict(number: int, text: str) -> None:
    print(f"ACCEPTANCE {number}: PASS - {text}")


def trace_text(exception: str, *frames: str) -> str:
    return "\n".join([exception, *(f"\tat {line}" for line in frames)])


def test_criterion_1_grouping_matches_pairwise_oracle():
    config = AppConfig(("br.app",))
    rules = DEFAULT_NORMALIZATION_RULES
    start = time.perf_counter()
    for seed in range(25):
        records, _families = planted_corpus(seed=seed)
        corpus = corpus_from_records(records)
        reports = list(corpus.reports)
        for level in (1, 2, 3, 4):
            partition = group(corpus, level, config)
            got = {frozenset(grp.members) for grp in partition.groups}
            want = oracle_partition(reports, level, rules)
            assert got == want, f"seed {seed} level {level}"
    elapsed = time.perf_counter() - start
    assert elapsed < 10.0, f"oracle comparison took {elapsed:.2f}s"
    _verdict(1, f"25 corpora match the pairwise oracle at all levels in {elapsed:.2f}s")


def test_criterion_2_coarsening_and_order_invariance():
    config = AppConfig(("aa",))
    cases = 0
    for seed in range(100):
        records = random_corpus_records(seed=seed, report_count=24)
        corpus = corpus_from_records(records)
        all_ids = {report.crash_id for report in corpus.reports}
        partitions = [group(corpus, level, config) for level in (1, 2, 3, 4)]

        for partition in partitions:
            members = [set(grp.members) for grp in partition.groups]
            assert sum(len(m) for m in members) == len(all_ids)
            assert set().union(*members) == all_ids

        for finer, coarser in zip(partitions, partitions[1:]):
            blocks = [set(grp.members) for grp in coarser.groups]
            for grp in finer.groups:
                assert any(set(grp.members) <= block for block in blocks)

        shuffled = records[:]
        random.Random(seed).shuffle(shuffled)
        reshuffled = corpus_from_records(shuffled)
        for level, partition in zip((1, 2, 3, 4), partitions):
            again = group(reshuffled, level, config)
            assert {frozenset(g.members) for g in again.groups} == {
                frozenset(g.members) for g in partition.groups
            }
            assert {g.id for g in again.groups} == {g.id for g in partition.groups}
        cases += 1
    assert cases >= 100
    _verdict(2, f"coarsening and shuffle invariance held on {cases} corpora")


def test_criterion_3_ranking_matches_brute_force():
    config = AppConfig(("aa",), top_n_files=50)
    prefixes = ("aa",)
    fixtures = 0
    groups_checked = 0
    for seed in range(25):
        records = random_corpus_records(seed=1000 + seed, report_count=40)
        corpus = corpus_from_records(records)
        partition = group(corpus, 3, config)
        by_id = corpus.reports_by_id()
        groups_reports = [
            [by_id[cid] for cid in grp.members] for grp in partition.groups
        ]
        for grp, members in zip(partition.groups, groups_reports):
            expected = oracle_rank_files(members, groups_reports, prefixes)
            try:
                ranking = rank_files(grp, partition, corpus, config)
            except NoCandidatesError:
                assert expected == []
                continue
            assert [e.file for e in ranking.entries] == [e["file"] for e in expected]
            for got, want in zip(ranking.entries, expected):
                assert abs(got.score - want["score"]) < 1e-9
                assert abs(got.iad - want["iad"]) < 1e-9
                assert abs(got.ibf - want["ibf"]) < 1e-9
                assert abs(got.ff - want["ff"]) < 1e-9
            groups_checked += 1
        fixtures += 1
    assert fixtures == 25
    assert groups_checked >= 25
    _verdict(3, f"{groups_checked} group rankings matched the brute-force oracle")


def test_criterion_4_factor_values_and_crash_point_dominance():
    ln2 = math.log(2.0)
    config = AppConfig(("aa",), top_n_files=50)
    for seed in range(100):
        rng = random.Random(7000 + seed)

        # Planted raw: Star sits at position 0 and appears nowhere else;
        # Base is appended to every raw so it shows up in every group.
        records = []
        star_tail = [
            f"aa.bb.K{rng.randrange(3)}.m{rng.randrange(3)}(K.java:{rng.randrange(1, 9)})"
            for _ in range(rng.randrange(1, 4))
        ]
        star_raw = trace_text(
            "java.lang.NullPointerException",
            "aa.zz.Star.go(Star.java:1)",
            *star_tail,
            "aa.shared.Base.init(Base.java:5)",
        )
        for member in range(rng.randrange(1, 5)):
            records.append(make_record(f"s{member:02d}", stack_trace=star_raw))

        other_count = rng.randrange(2, 6)
        for other in range(other_count):
            frames = [
                f"aa.bb.K{rng.randrange(3)}.m{rng.randrange(4)}"
                f"(K.java:{rng.randrange(1, 9)})"
                for _ in range(rng.randrange(1, 4))
            ]
            # A unique first frame keeps every raw distinct at level 1.
            raw = trace_text(
                "java.lang.IllegalStateException",
                f"aa.cc.G{other}.top(G{other}.java:{seed % 7 + 1})",
                *frames,
                "aa.shared.Base.init(Base.java:5)",
            )
            for member in range(rng.randrange(1, 4)):
                records.append(make_record(f"o{other}{member:02d}", stack_trace=raw))

        corpus = corpus_from_records(records)
        partition = group(corpus, 1, config)
        total_groups = len(partition.groups)
        assert total_groups == other_count + 1

        rankings = {
            r.ranking.group_id: r.ranking for r in rank_all(partition, corpus, config)
        }
        star_group_id = min(r["crash_id"] for r in records if r["crash_id"].startswith("s"))
        star_ranking = rankings[star_group_id]
        star_entry = next(e for e in star_ranking.entries if e.file == "aa.zz.Star")

        # Crash-point-only file: IAD exactly 1; omnipresent in group: FF exactly 1.
        assert star_entry.iad == 1.0
        assert star_entry.ff == 1.0
        # Unique to this group: maximal IBF, hence maximal score.
        assert abs(star_entry.ibf - math.log(1.0 + total_groups)) < 1e-12
        top_score = max(entry.score for entry in star_ranking.entries)
        assert star_entry.score == top_score
        assert star_ranking.entries[0].score == top_score

        # Base appears in every raw, so in every group: IBF must be ln 2,
        # and its FF within any group must be exactly 1.
        for ranking in rankings.values():
            base_entry = next(e for e in ranking.entries if e.file == "aa.shared.Base")
            assert abs(base_entry.ibf - ln2) < 1e-12
            assert base_entry.ff == 1.0
    _verdict(4, "factor identities and crash-point dominance held on 100 fixtures")


def test_criterion_5_metric_fixtures_and_recurrence_split():
    def ranking_of(group_id, *files):
        entries = tuple(
            FileScore(file=f, iad=1.0, ibf=1.0, ff=1.0, score=float(len(files) - k))
            for k, f in enumerate(files)
        )
        return FileRanking(group_id=group_id, entries=entries, candidates_considered=len(files))

    def truth(task_id, group_id, files):
        return GroundTruthTask(
            task_id=task_id,
            group_id=group_id,
            changed_files=frozenset(files),
            changed_methods=frozenset(),
        )

    # Hits at ranks 2 and 4.
    tasks = [truth("t1", "g1", {"a.B"}), truth("t2", "g2", {"a.F"})]
    rankings = {
        "g1": ranking_of("g1", "a.A", "a.B"),
        "g2": ranking_of("g2", "a.C", "a.D", "a.E", "a.F", "a.G"),
    }
    assert abs(recall_at_n(tasks, rankings, 1) - 0.0) < 1e-12
    assert abs(recall_at_n(tasks, rankings, 3) - 0.5) < 1e-12
    assert abs(recall_at_n(tasks, rankings, 5) - 1.0) < 1e-12

    # Average precision fixtures.
    single = truth("t", "g", {"a.B"})
    assert abs(average_precision(single, ranking_of("g", "a.B"), 5) - 1.0) < 1e-12
    at_three = truth("t", "g", {"a.D"})
    assert (
        abs(average_precision(at_three, ranking_of("g", "a.B", "a.C", "a.D"), 5) - 1.0 / 3.0)
        < 1e-12
    )
    pair = truth("t", "g", {"a.A", "a.D"})
    assert (
        abs(average_precision(pair, ranking_of("g", "a.A", "a.B", "a.C", "a.D"), 5) - 0.75)
        < 1e-12
    )

    # MAP over APs {1, .75, .5, .25}.
    map_tasks = [
        truth("m1", "g1", {"a.A"}),
        truth("m2", "g2", {"a.A", "a.D"}),
        truth("m3", "g3", {"a.B"}),
        truth("m4", "g4", {"a.D"}),
    ]
    map_rankings = {
        "g1": ranking_of("g1", "a.A"),
        "g2": ranking_of("g2", "a.A", "a.B", "a.C", "a.D"),
        "g3": ranking_of("g3", "a.A", "a.B"),
        "g4": ranking_of("g4", "a.A", "a.B", "a.C", "a.D"),
    }
    assert abs(mean_average_precision(map_tasks, map_rankings, 5) - 0.625) < 1e-12

    # Recall@N monotone in N on random fixtures.
    pool = [f"p.F{i}" for i in range(8)]
    for seed in range(50):
        rng = random.Random(seed)
        rand_tasks = []
        rand_rankings = {}
        for index in range(rng.randrange(2, 8)):
            gid = f"g{index}"
            order = pool[:]
            rng.shuffle(order)
            rand_rankings[gid] = ranking_of(gid, *order[: rng.randrange(1, 9)])
            changed = set(rng.sample(pool, rng.randrange(1, 4)))
            rand_tasks.append(truth(f"t{index}", gid, changed))
        values = [recall_at_n(rand_tasks, rand_rankings, n) for n in range(1, 9)]
        assert values == sorted(values)

    # Recurrence: 16 of 50 closed groups keep crashing.
    pre = [
        make_record(
            f"g{i:02d}",
            stack_trace=trace_text(
                "java.lang.IllegalStateException",
                f"app.mod.K{i:02d}.go(K{i:02d}.java:{i + 1})",
            ),
        )
        for i in range(50)
    ]
    corpus = corpus_from_records(pre)
    partition = group(corpus, 1, AppConfig(("app",)))
    closed = [
        GroundTruthTask(f"t{i:02d}", f"g{i:02d}", frozenset(), frozenset())
        for i in range(50)
    ]
    post = corpus_from_records(
        [make_record(f"p{i:02d}", stack_trace=pre[i]["stack_trace"]) for i in range(16)]
    )
    table = recurrence_table(closed, post, partition, AppConfig(("app",)))
    assert Counter(table.values()) == Counter({False: 34, True: 16})
    _verdict(5, "metric fixtures exact to 1e-12; recurrence split 34 false / 16 true")


def test_criterion_6_documented_examples_conform():
    config = AppConfig(("s.p",))

    # Generated-accessor variants differ only in the synthesized class name
    # and must land in one normalized-frame group.
    def accessor_trace(number: int) -> str:
        return trace_text(
            "java.lang.NullPointerException",
            "br.app.Core.crash(Core.java:10)",
            f"sun.reflect.GeneratedMethodAccessor{number}.invoke(Unknown Source)",
            "br.app.Outer.run(Outer.java:30)",
        )

    corpus = corpus_from_records(
        [
            make_record("a", stack_trace=accessor_trace(10184)),
            make_record("b", stack_trace=accessor_trace(10272)),
        ]
    )
    merged = group(corpus, 2, config)
    assert {frozenset(g.members) for g in merged.groups} == {frozenset({"a", "b"})}

    # Two crashes in different methods of one class share the crash-point
    # file and must merge at the coarsest level.
    method_a = trace_text(
        "java.lang.NullPointerException",
        "s.p.ClassMBean.methodA(ClassMBean.java:280)",
        "s.p.Framework.invoke(Framework.java:30)",
    )
    method_b = trace_text(
        "java.lang.IllegalStateException",
        "s.p.ClassMBean.methodB(ClassMBean.java:251)",
        "s.p.Other.call(Other.java:8)",
    )
    corpus = corpus_from_records(
        [make_record("a", stack_trace=method_a), make_record("b", stack_trace=method_b)]
    )
    coarse = group(corpus, 4, config)
    assert len(coarse.groups) == 1
    assert coarse.groups[0].signature == frozenset({"s.p.ClassMBean"})

    # A single-frame trace: the one frame is the crash point.
    single = parse_stack_trace(
        "java.lang.NullPointerException\n at s.p.ClassMBean.methodA(ClassMBean.java:280)"
    )
    top = crash_point(single)
    assert top.qualified_method.render() == "s.p.ClassMBean.methodA"
    assert top.line == 280

    # A chained trace: the deepest cause's top frame is the crash point.
    chained = "\n".join(
        [
            "javax.servlet.ServletException: wrapper",
            "\tat org.web.Dispatcher.forward(Dispatcher.java:90)",
            "Caused by: java.lang.NullPointerException: root",
            "\tat s.p.Dao.load(Dao.java:12)",
            "\tat s.p.Dao.query(Dao.java:40)",
            "\t... 5 more",
        ]
    )
    top = crash_point(parse_stack_trace(chained))
    assert top.qualified_method.render() == "s.p.Dao.load"
    assert top.line == 12
    _verdict(6, "accessor merge, same-class merge, and crash-point examples conform")


def _large_corpus() -> CrashCorpus:
    traces = []
    per_family = [7 if fam < 200 else 6 for fam in range(300)]
    for fam in range(300):
        for variant in range(per_family[fam]):
            lines = [
                f"app.mod{fam % 40}.C{fam:03d}.m{variant}(C{fam:03d}.java:{10 + variant})"
            ]
            for depth in range(1 + variant % 4):
                lines.append(f"app.lib.Util{depth}.step(Util{depth}.java:{20 + depth})")
            lines.append("org.fw.Web.handle(Web.java:99)")
            traces.append(parse_stack_trace(trace_text("java.lang.NullPointerException", *lines)))
    assert len(traces) == 2000

    base = datetime(2022, 3, 7, tzinfo=timezone.utc)
    uris = [f"/app/u{i}" for i in range(50)]
    users = [f"user{i}" for i in range(200)]
    rng = random.Random(42)
    reports = []
    for i in range(100_000):
        trace = traces[i] if i < len(traces) else traces[rng.randrange(len(traces))]
        reports.append(
            CrashReport(
                crash_id=f"r{i:06d}",
                timestamp=base + timedelta(seconds=i),
                uri=uris[i % 50],
                user=users[i % 200] if i % 7 else None,
                session_id=f"sess{i % 1000}",
                trace=trace,
            )
        )
    return CrashCorpus(
        reports=tuple(reports),
        window_start=base,
        window_end=base + timedelta(days=8),
        skipped_count=0,
    )


def test_criterion_7_large_corpus_performance():
    config = AppConfig(("app",))
    corpus = _large_corpus()

    start = time.perf_counter()
    partition = group(corpus, 4, config)
    rankings = rank_all(partition, corpus, config)
    summaries = summarize_groups(partition, corpus, config)
    csv_text = export_spreadsheet_csv(summaries)
    groups_by_id = {grp.id: grp for grp in partition.groups}
    rankings_by_id = {r.ranking.group_id: r for r in rankings}
    rendered = 0
    for group_id, grp in groups_by_id.items():
        bundle = rankings_by_id[group_id]
        payload = build_issue(grp, bundle.ranking, list(bundle.methods), corpus, config)
        rendered += len(render_issue_markdown(payload))
    elapsed = time.perf_counter() - start

    assert len(partition.groups) == 300
    assert len(summaries) == 300
    assert csv_text.count("\r\n") == 301
    assert rendered > 0
    assert elapsed < 60.0, f"pipeline over 100k reports took {elapsed:.1f}s"

    peak_kb = resource.getrusage(resource.RUSAGE_SELF).ru_maxrss
    assert peak_kb < 1024 * 1024, f"peak memory {peak_kb / 1024:.0f} MiB"
    _verdict(
        7,
        f"100k reports grouped, ranked, reported in {elapsed:.1f}s, "
        f"peak {peak_kb / 1024:.0f} MiB",
    )


def _canonical_manifest(path: Path) -> dict:
    data = json.loads(path.read_text(encoding="utf-8"))
    data.pop("created_at")
    data["config_path"] = Path(data["config_path"]).name
    data["inputs"] = sorted(data["inputs"].values())
    return data


def _run_demo(out_dir: Path) -> None:
    code = main(
        [
            "pipeline",
            "--config",
            str(DEMO_DIR / "config.toml"),
            "--input",
            str(DEMO_DIR / "crashes.ndjson"),
            "--window",
            "2022-03-07..2022-03-14",
            "--out-dir",
            str(out_dir / "pipeline"),
        ]
    )
    assert code == 0
    code = main(
        [
            "eval",
            "--config",
            str(DEMO_DIR / "config.toml"),
            "--ranks",
            str(out_dir / "pipeline" / "ranks.json"),
            "--truth",
            str(DEMO_DIR / "truth.json"),
            "--out",
            str(out_dir / "eval" / "eval.json"),
        ]
    )
    assert code == 0


def test_criterion_8_determinism_and_golden_outputs(tmp_path):
    run_a = tmp_path / "a"
    run_b = tmp_path / "b"
    _run_demo(run_a)
    _run_demo(run_b)

    compared = 0
    for golden in sorted(DEMO_DIR.glob("golden/*/*")):
        relative = golden.relative_to(DEMO_DIR / "golden")
        fresh_a = run_a / relative
        fresh_b = run_b / relative
        if golden.name == "manifest.json":
            assert _canonical_manifest(fresh_a) == _canonical_manifest(golden)
            assert _canonical_manifest(fresh_b) == _canonical_manifest(golden)
        else:
            assert fresh_a.read_bytes() == golden.read_bytes(), f"{relative} diverged"
            assert fresh_b.read_bytes() == golden.read_bytes(), f"{relative} diverged"
        compared += 1
    assert compared >= 8
    _verdict(8, f"two runs byte-identical to the {compared} checked-in demo outputs")
