"""Corpus types, loading, splitting, synthesis, and diff parsing."""

import json
from datetime import datetime, timedelta, timezone

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from driftrank._errors import CorpusParseError, ValidationError
from driftrank.corpus import (
    BugReport,
    CodeUnit,
    Corpus,
    Granularity,
    Regime,
    SynthConfig,
    count_hunk_lines,
    extract_hunks,
    generate_synthetic_corpus,
    load_corpus,
    make_task,
    save_corpus,
    split_train_test,
)

UTC = timezone.utc


def _bug(bug_id="b1", day=1, paths=("src/a.java",)):
    return BugReport(
        id=bug_id,
        title="t",
        description="broken widget",
        report_date=datetime(2021, 1, day, tzinfo=UTC),
        fix_commit=f"fix-{bug_id}",
        fix_date=datetime(2021, 1, day, 12, tzinfo=UTC),
        ground_truth_paths=frozenset(paths),
    )


def _unit(uid="u1", path="src/a.java", commit="fix-b1", day=1):
    return CodeUnit(
        id=uid,
        path=path,
        content="int a;\nint b;",
        granularity=Granularity.CHANGESET_FILE,
        commit=commit,
        commit_date=datetime(2021, 1, day, 12, tzinfo=UTC),
        regime=Regime.STATIONARY,
    )


class TestTypes:
    def test_bug_requires_ground_truth(self):
        with pytest.raises(ValidationError, match="ground_truth_paths"):
            _bug(paths=())

    def test_bug_report_date_before_fix(self):
        with pytest.raises(ValidationError, match="precede"):
            BugReport(
                id="b",
                title="",
                description="",
                report_date=datetime(2021, 1, 2, tzinfo=UTC),
                fix_commit="c",
                fix_date=datetime(2021, 1, 1, tzinfo=UTC),
                ground_truth_paths=frozenset({"p"}),
            )

    def test_hunk_needs_parent(self):
        with pytest.raises(ValidationError, match="parent_file_id"):
            CodeUnit(
                id="h1",
                path="p",
                content="+x",
                granularity=Granularity.HUNK,
                commit="c",
                commit_date=datetime(2021, 1, 1, tzinfo=UTC),
                regime=Regime.STATIONARY,
            )

    def test_changeset_file_rejects_parent(self):
        with pytest.raises(ValidationError, match="must not set parent_file_id"):
            CodeUnit(
                id="f1",
                path="p",
                content="x",
                granularity=Granularity.CHANGESET_FILE,
                commit="c",
                commit_date=datetime(2021, 1, 1, tzinfo=UTC),
                regime=Regime.STATIONARY,
                parent_file_id="other",
            )

    def test_dangling_link_is_an_error(self):
        with pytest.raises(ValidationError, match="b1→u9"):
            Corpus(bug_reports=[_bug()], code_units=[_unit()], links={"b1": ["u1", "u9"]})

    def test_bug_without_ground_truth_candidate_dropped_and_counted(self):
        corpus = Corpus(
            bug_reports=[_bug("b1"), _bug("b2", day=2, paths=("src/missing.java",))],
            code_units=[_unit()],
            links={"b1": ["u1"], "b2": ["u1"]},
        )
        assert [b.id for b in corpus.bug_reports] == ["b1"]
        assert corpus.dropped_bug_ids == ("b2",)


class TestLoadSave:
    def test_well_formed_round_trip(self, tmp_path):
        corpus = Corpus(
            bug_reports=[_bug("b1"), _bug("b2", day=2)],
            code_units=[_unit(f"u{i}", commit=f"c{i}") for i in range(6)],
            links={"b1": ["u0", "u1", "u2"], "b2": ["u3", "u4", "u5"]},
        )
        path = tmp_path / "c.json"
        save_corpus(corpus, path)
        loaded = load_corpus(path)
        assert len(loaded.bug_reports) == 2
        assert len(loaded.code_units) == 6
        assert loaded.bug_reports == corpus.bug_reports
        assert loaded.code_units == corpus.code_units
        assert loaded.links == corpus.links

    def test_malformed_json_names_line(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text('{"bug_reports": [\n  {"id": }\n]}')
        with pytest.raises(CorpusParseError, match="line 2"):
            load_corpus(path)

    def test_missing_field_named(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text(json.dumps({"bug_reports": [{"id": "b1"}], "code_units": [], "links": {}}))
        with pytest.raises(CorpusParseError, match=r"bug_reports\[0\].*title"):
            load_corpus(path)

    def test_synthetic_reload_equals_memory(self, tmp_path):
        corpus = generate_synthetic_corpus(SynthConfig(n_bugs=5, n_files=8), seed=7)
        path = tmp_path / "synth.json"
        save_corpus(corpus, path)
        loaded = load_corpus(path)
        assert loaded.bug_reports == corpus.bug_reports
        assert loaded.code_units == corpus.code_units
        assert loaded.links == corpus.links


class TestSplit:
    def _corpus_with_n_bugs(self, n, dates=None):
        bugs = [_bug(f"b{i:02d}", day=(dates[i] if dates else i + 1)) for i in range(n)]
        units = [_unit(f"u{i}", commit=f"c{i}") for i in range(n)]
        links = {f"b{i:02d}": [f"u{i}"] for i in range(n)}
        return Corpus(bug_reports=bugs, code_units=units, links=links)

    def test_ten_bugs_split_6_4(self):
        train, test = split_train_test(self._corpus_with_n_bugs(10))
        assert len(train) == 6 and len(test) == 4
        assert train == [f"b{i:02d}" for i in range(6)]

    def test_five_bugs_split_3_2(self):
        train, test = split_train_test(self._corpus_with_n_bugs(5))
        assert len(train) == 3 and len(test) == 2

    def test_date_ties_broken_by_id(self):
        corpus = self._corpus_with_n_bugs(2, dates=[5, 5])
        train, test = split_train_test(corpus)
        # stable-sort oracle on (date, id)
        expected = [b.id for b in sorted(corpus.bug_reports, key=lambda b: (b.report_date, b.id))]
        assert train + test == expected

    def test_partition_property(self):
        corpus = self._corpus_with_n_bugs(9)
        train, test = split_train_test(corpus)
        assert sorted(train + test) == sorted(b.id for b in corpus.bug_reports)
        assert not (set(train) & set(test))
        latest_train = max(corpus.bug(b).report_date for b in train)
        earliest_test = min(corpus.bug(b).report_date for b in test)
        assert latest_train <= earliest_test

    def test_single_bug_is_error(self):
        with pytest.raises(ValidationError, match="at least 2"):
            split_train_test(self._corpus_with_n_bugs(1))


DIFF_ONE_HUNK = """--- a/src/a.java
+++ b/src/a.java
@@ -0,0 +1,3 @@
+int a;
+int b;
+int c;
"""

DIFF_TWO_FILES = """diff --git a/x.java b/x.java
--- a/x.java
+++ b/x.java
@@ -1,2 +1,3 @@
 keep;
+new line;
 tail;
@@ -10,1 +11,2 @@
 ctx;
+added;
diff --git a/y.java b/y.java
--- a/y.java
+++ b/y.java
@@ -1,1 +1,1 @@
-old;
+new;
"""

DIFF_PURE_DELETE = """--- a/gone.java
+++ /dev/null
@@ -1,2 +0,0 @@
-dead;
-code;
"""


class TestExtractHunks:
    def test_single_hunk_of_three_added_lines(self):
        units = extract_hunks(DIFF_ONE_HUNK)
        assert len(units) == 1
        lines = units[0].content.splitlines()
        assert len(lines) == 3
        assert all(line.startswith("+") for line in lines)
        assert units[0].path == "src/a.java"

    def test_two_files_three_hunks(self):
        units = extract_hunks(DIFF_TWO_FILES)
        assert len(units) == 3
        assert [u.path for u in units] == ["x.java", "x.java", "y.java"]

    def test_empty_string(self):
        assert extract_hunks("") == []

    def test_header_without_hunks(self):
        assert extract_hunks("--- a/x\n+++ b/x\n") == []

    def test_pure_deletion_uses_old_path(self):
        units = extract_hunks(DIFF_PURE_DELETE)
        assert len(units) == 1
        assert units[0].path == "gone.java"
        assert units[0].content == "-dead;\n-code;"

    def test_malformed_hunk_header(self):
        with pytest.raises(CorpusParseError, match="line 3"):
            extract_hunks("--- a/x\n+++ b/x\n@@ garbage @@\n")

    def test_body_line_looking_like_header_is_consumed_by_count(self):
        diff = "--- a/x\n+++ b/x\n@@ -1,1 +1,2 @@\n-- removed-looking\n+alpha\n+beta\n"
        # old side: the '-- removed-looking' line is one removed line '- rem...'
        units = extract_hunks(diff)
        assert len(units) == 1
        added, removed, context = count_hunk_lines(units[0].content)
        assert (added, removed, context) == (2, 1, 0)

    @settings(max_examples=60, deadline=None)
    @given(
        old=st.lists(st.sampled_from(["a;", "b;", "c;", "dd;", "e();"]), max_size=12),
        new=st.lists(st.sampled_from(["a;", "b;", "c;", "dd;", "e();"]), max_size=12),
    )
    def test_line_classification_is_lossless(self, old, new):
        import difflib

        diff = "\n".join(difflib.unified_diff(old, new, fromfile="a/f", tofile="b/f", lineterm=""))
        units = extract_hunks(diff)
        expected_added = expected_removed = expected_context = 0
        in_body = False
        for line in diff.splitlines():
            if line.startswith("@@"):
                in_body = True
                continue
            if not in_body:
                continue
            if line.startswith("+"):
                expected_added += 1
            elif line.startswith("-"):
                expected_removed += 1
            else:
                expected_context += 1
        got = [count_hunk_lines(u.content) for u in units]
        assert sum(g[0] for g in got) == expected_added
        assert sum(g[1] for g in got) == expected_removed
        assert sum(g[2] for g in got) == expected_context


class TestSynth:
    def test_identical_seed_identical_bytes(self, tmp_path):
        a = generate_synthetic_corpus(SynthConfig(n_bugs=6, n_files=8), seed=1)
        b = generate_synthetic_corpus(SynthConfig(n_bugs=6, n_files=8), seed=1)
        pa, pb = tmp_path / "a.json", tmp_path / "b.json"
        save_corpus(a, pa)
        save_corpus(b, pb)
        assert pa.read_bytes() == pb.read_bytes()

    def test_full_signal_plants_all_tokens(self):
        cfg = SynthConfig(n_bugs=6, n_files=8, signal_strength=1.0, drift=0.0)
        corpus = generate_synthetic_corpus(cfg, seed=1)
        for bug in corpus.bug_reports:
            planted = {tok for tok in bug.description.split() if bug.description.split().count(tok) >= 2}
            gt_units = [
                u
                for u in corpus.code_units
                if u.path in bug.ground_truth_paths
                and u.commit == bug.fix_commit
                and u.granularity is Granularity.CHANGESET_FILE
            ]
            assert gt_units
            for unit in gt_units:
                for token in planted:
                    assert token in unit.content

    def test_invalid_signal_rejected(self):
        with pytest.raises(ValidationError):
            SynthConfig(signal_strength=1.5)
        with pytest.raises(ValidationError):
            SynthConfig(drift=-0.1)

    def test_retrieval_recall_at_signal_09(self, medium_corpus):
        from driftrank.env import build_task_index
        from driftrank.retrieval import query_top_k

        corpus = medium_corpus
        task = make_task(
            corpus, Regime.STATIONARY, Granularity.CHANGESET_FILE, [b.id for b in corpus.bug_reports]
        )
        index = build_task_index(corpus, task)
        hits = 0
        for bug in corpus.bug_reports:
            pool = set(corpus.links[bug.id])
            ranked = [u for u, _ in query_top_k(index, bug.description, index.n_docs) if u in pool]
            if any(corpus.unit(u).path in bug.ground_truth_paths for u in ranked[:5]):
                hits += 1
        assert hits / len(corpus.bug_reports) >= 0.8

    def test_non_stationary_window_invariant(self, small_corpus):
        for unit in small_corpus.code_units:
            if unit.regime is Regime.NON_STATIONARY:
                owner = next(
                    b
                    for b in small_corpus.bug_reports
                    if unit.id.startswith(f"ns-{b.id}-") or f"-{b.id}-" in unit.id
                )
                assert owner.report_date < unit.commit_date < owner.fix_date

    def test_hunks_have_parents(self, small_corpus):
        by_id = {u.id: u for u in small_corpus.code_units}
        hunks = [u for u in small_corpus.code_units if u.granularity is Granularity.HUNK]
        assert hunks
        for hunk in hunks:
            parent = by_id[hunk.parent_file_id]
            assert parent.path == hunk.path
            assert parent.commit == hunk.commit
