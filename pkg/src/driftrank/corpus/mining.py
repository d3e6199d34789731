"""Mining stationary and non-stationary code units out of a git repository.

All repository access goes through the system ``git`` executable with
plumbing-style commands; the exact invocations are listed in
docs/git-commands.md.
"""

from __future__ import annotations

import subprocess
from datetime import datetime
from pathlib import Path

from driftrank._errors import ValidationError
from driftrank._logging import get_logger
from driftrank.corpus.diffs import extract_hunks
from driftrank.corpus.types import BugReport, CodeUnit, Corpus, Granularity, Regime

log = get_logger(__name__)

_EMPTY_TREE = "4b825dc642cb6eb9a060e54bf8d69288fbee4904"


def _git(repo: Path, *args: str) -> str:
    proc = subprocess.run(
        ["git", "-C", str(repo), *args],
        capture_output=True,
        text=True,
    )
    if proc.returncode != 0:
        raise ValidationError(f"git {' '.join(args)} failed: {proc.stderr.strip()}")
    return proc.stdout


def _commit_date(repo: Path, commit: str) -> datetime:
    out = _git(repo, "show", "-s", "--format=%cI", commit).strip()
    return datetime.fromisoformat(out)


def _file_at(repo: Path, commit: str, path: str) -> str | None:
    proc = subprocess.run(
        ["git", "-C", str(repo), "show", f"{commit}:{path}"],
        capture_output=True,
        text=True,
    )
    if proc.returncode != 0:
        return None
    return proc.stdout


def _diff_for(repo: Path, commit: str, path: str) -> str:
    base = f"{commit}^"
    if not _has_parent(repo, commit):
        base = _EMPTY_TREE
    return _git(repo, "diff", base, commit, "--", path)


def _has_parent(repo: Path, commit: str) -> bool:
    proc = subprocess.run(
        ["git", "-C", str(repo), "rev-parse", "--verify", "--quiet", f"{commit}^"],
        capture_output=True,
        text=True,
    )
    return proc.returncode == 0


def _commits_touching(repo: Path, path: str, tip: str) -> list[tuple[str, datetime]]:
    """Commits up to ``tip`` that modified ``path``, oldest first."""
    out = _git(repo, "log", "--format=%H %cI", "--reverse", tip, "--", path)
    commits = []
    for line in out.splitlines():
        sha, _, iso = line.partition(" ")
        commits.append((sha, datetime.fromisoformat(iso)))
    return commits


def mine_repository(repo_path: str | Path, bug_meta: list[BugReport]) -> Corpus:
    """Build a corpus from a git working copy and bug metadata.

    Stationary units are the full ground-truth files at each fix commit;
    non-stationary units are every version of those files introduced by
    commits dated strictly between the report date and the fix-commit date
    (the fix commit itself stays stationary). Hunks come from each relevant
    commit's diff restricted to ground-truth paths. Files absent at a commit
    are skipped and logged; a missing fix commit is an error naming the bug.
    """
    repo = Path(repo_path)
    if not (repo / ".git").exists() and not (repo / "HEAD").exists():
        raise ValidationError(f"{repo} is not a git repository")

    bugs: list[BugReport] = []
    units: list[CodeUnit] = []
    links: dict[str, list[str]] = {}

    for bug in bug_meta:
        check = subprocess.run(
            ["git", "-C", str(repo), "rev-parse", "--verify", "--quiet", f"{bug.fix_commit}^{{commit}}"],
            capture_output=True,
            text=True,
        )
        if check.returncode != 0:
            raise ValidationError(f"bug {bug.id}: fix commit {bug.fix_commit} not found in {repo}")
        fix_sha = check.stdout.strip()
        fix_date = _commit_date(repo, fix_sha)
        bugs.append(
            BugReport(
                id=bug.id,
                title=bug.title,
                description=bug.description,
                report_date=bug.report_date,
                fix_commit=fix_sha,
                fix_date=fix_date,
                ground_truth_paths=bug.ground_truth_paths,
            )
        )
        resolved = bugs[-1]

        for path in sorted(bug.ground_truth_paths):
            file_tag = path.replace("/", "_")
            content = _file_at(repo, fix_sha, path)
            if content is None:
                log.info("bug %s: %s absent at fix commit %s, skipped", bug.id, path, fix_sha[:10])
            else:
                st_uid = f"st-{bug.id}-{file_tag}"
                diff = _diff_for(repo, fix_sha, path)
                units.append(
                    CodeUnit(
                        id=st_uid,
                        path=path,
                        content=content,
                        granularity=Granularity.CHANGESET_FILE,
                        commit=fix_sha,
                        commit_date=fix_date,
                        regime=Regime.STATIONARY,
                        diff=diff or None,
                    )
                )
                units.extend(
                    extract_hunks(
                        diff,
                        commit=fix_sha,
                        commit_date=fix_date,
                        regime=Regime.STATIONARY,
                        parent_ids={path: st_uid},
                        id_prefix=f"{st_uid}-h",
                    )
                )

            window = [
                (sha, when)
                for sha, when in _commits_touching(repo, path, fix_sha)
                if resolved.report_date < when < fix_date and sha != fix_sha
            ]
            for v, (sha, when) in enumerate(window, start=1):
                content = _file_at(repo, sha, path)
                if content is None:
                    log.info("bug %s: %s deleted at %s, skipped", bug.id, path, sha[:10])
                    continue
                ns_uid = f"ns-{bug.id}-{file_tag}-v{v}"
                diff = _diff_for(repo, sha, path)
                units.append(
                    CodeUnit(
                        id=ns_uid,
                        path=path,
                        content=content,
                        granularity=Granularity.CHANGESET_FILE,
                        commit=sha,
                        commit_date=when,
                        regime=Regime.NON_STATIONARY,
                        diff=diff or None,
                    )
                )
                units.extend(
                    extract_hunks(
                        diff,
                        commit=sha,
                        commit_date=when,
                        regime=Regime.NON_STATIONARY,
                        parent_ids={path: ns_uid},
                        id_prefix=f"{ns_uid}-h",
                    )
                )

        if not any(
            u.regime is Regime.NON_STATIONARY and u.path in bug.ground_truth_paths for u in units
        ):
            log.warning("bug %s: no non-stationary data in its report-to-fix window", bug.id)

    all_unit_ids = [u.id for u in units]
    for bug in bugs:
        links[bug.id] = list(all_unit_ids)
    return Corpus(bug_reports=bugs, code_units=units, links=links)
