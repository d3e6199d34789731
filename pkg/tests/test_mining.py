"""Repository mining against scripted git fixtures."""

import subprocess
from datetime import datetime, timezone
from pathlib import Path

import pytest

from driftrank._errors import ValidationError
from driftrank.corpus import BugReport, Granularity, Regime, mine_repository

UTC = timezone.utc

pytestmark = pytest.mark.skipif(
    subprocess.run(["git", "--version"], capture_output=True).returncode != 0,
    reason="git unavailable",
)


def _git(repo: Path, *args, date: str | None = None):
    env = {
        "GIT_AUTHOR_NAME": "t",
        "GIT_AUTHOR_EMAIL": "t@example.com",
        "GIT_COMMITTER_NAME": "t",
        "GIT_COMMITTER_EMAIL": "t@example.com",
        "PATH": "/usr/bin:/bin:/usr/local/bin",
    }
    if date:
        env["GIT_AUTHOR_DATE"] = date
        env["GIT_COMMITTER_DATE"] = date
    subprocess.run(["git", "-C", str(repo), *args], check=True, capture_output=True, env=env)


def _commit_all(repo: Path, message: str, date: str) -> str:
    _git(repo, "add", "-A")
    _git(repo, "commit", "-m", message, date=date)
    out = subprocess.run(
        ["git", "-C", str(repo), "rev-parse", "HEAD"], capture_output=True, text=True, check=True
    )
    return out.stdout.strip()


@pytest.fixture()
def repo(tmp_path):
    repo = tmp_path / "repo"
    repo.mkdir()
    _git(repo, "init", "-q")
    return repo


def _bug(fix_commit, report_day=1, paths=("A.java",)):
    return BugReport(
        id="bug1",
        title="t",
        description="d",
        report_date=datetime(2021, 1, report_day, tzinfo=UTC),
        fix_commit=fix_commit,
        fix_date=datetime(2030, 1, 1, tzinfo=UTC),  # placeholder; mining reads the real one
        ground_truth_paths=frozenset(paths),
    )


class TestMineRepository:
    def test_single_fix_no_window_commits(self, repo):
        (repo / "A.java").write_text("class A {}\n")
        _commit_all(repo, "base", "2020-12-01T10:00:00+00:00")
        (repo / "A.java").write_text("class A { void f() {} }\n")
        fix = _commit_all(repo, "fix", "2021-01-05T10:00:00+00:00")

        corpus = mine_repository(repo, [_bug(fix)])
        files = [u for u in corpus.code_units if u.granularity is Granularity.CHANGESET_FILE]
        stationary = [u for u in files if u.regime is Regime.STATIONARY]
        non_stationary = [u for u in files if u.regime is Regime.NON_STATIONARY]
        assert len(stationary) == 1
        assert stationary[0].content == "class A { void f() {} }\n"
        assert len(non_stationary) == 0
        # the fix commit's diff produced hunks
        assert any(u.granularity is Granularity.HUNK and u.regime is Regime.STATIONARY
                   for u in corpus.code_units)

    def test_two_window_commits_two_versions(self, repo):
        (repo / "A.java").write_text("v0\n")
        _commit_all(repo, "base", "2020-12-01T10:00:00+00:00")
        (repo / "A.java").write_text("v1\n")
        _commit_all(repo, "edit1", "2021-01-02T10:00:00+00:00")
        (repo / "A.java").write_text("v2\n")
        _commit_all(repo, "edit2", "2021-01-03T10:00:00+00:00")
        (repo / "A.java").write_text("v3 fixed\n")
        fix = _commit_all(repo, "fix", "2021-01-05T10:00:00+00:00")

        corpus = mine_repository(repo, [_bug(fix)])
        ns = [
            u
            for u in corpus.code_units
            if u.regime is Regime.NON_STATIONARY and u.granularity is Granularity.CHANGESET_FILE
        ]
        assert sorted(u.content for u in ns) == ["v1\n", "v2\n"]
        for u in ns:
            assert datetime(2021, 1, 1, tzinfo=UTC) < u.commit_date
            assert u.commit_date < datetime(2021, 1, 5, 10, tzinfo=UTC)

    def test_window_without_ground_truth_changes_flags_bug(self, repo, caplog):
        (repo / "A.java").write_text("v0\n")
        (repo / "B.java").write_text("other\n")
        _commit_all(repo, "base", "2020-12-01T10:00:00+00:00")
        (repo / "B.java").write_text("other changed\n")
        _commit_all(repo, "unrelated", "2021-01-02T10:00:00+00:00")
        (repo / "A.java").write_text("v1 fixed\n")
        fix = _commit_all(repo, "fix", "2021-01-05T10:00:00+00:00")

        import logging

        with caplog.at_level(logging.WARNING, logger="driftrank.corpus.mining"):
            corpus = mine_repository(repo, [_bug(fix)])
        ns = [u for u in corpus.code_units if u.regime is Regime.NON_STATIONARY]
        assert ns == []
        assert any("no non-stationary data" in rec.message for rec in caplog.records)

    def test_missing_commit_names_bug(self, repo):
        (repo / "A.java").write_text("x\n")
        _commit_all(repo, "base", "2020-12-01T10:00:00+00:00")
        with pytest.raises(ValidationError, match="bug1.*deadbeef"):
            mine_repository(repo, [_bug("deadbeef")])

    def test_absent_file_skipped(self, repo):
        (repo / "A.java").write_text("x\n")
        _commit_all(repo, "base", "2020-12-01T10:00:00+00:00")
        (repo / "A.java").write_text("y\n")
        fix = _commit_all(repo, "fix", "2021-01-05T10:00:00+00:00")
        corpus = mine_repository(repo, [_bug(fix, paths=("A.java", "Missing.java"))])
        stationary = [
            u
            for u in corpus.code_units
            if u.regime is Regime.STATIONARY and u.granularity is Granularity.CHANGESET_FILE
        ]
        assert [u.path for u in stationary] == ["A.java"]

    def test_fix_date_read_from_repo(self, repo):
        (repo / "A.java").write_text("x\n")
        _commit_all(repo, "base", "2020-12-01T10:00:00+00:00")
        (repo / "A.java").write_text("y\n")
        fix = _commit_all(repo, "fix", "2021-01-05T10:00:00+00:00")
        corpus = mine_repository(repo, [_bug(fix)])
        assert corpus.bug_reports[0].fix_date == datetime(2021, 1, 5, 10, tzinfo=UTC)
