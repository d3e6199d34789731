"""Domain types for bug-localization corpora.

A corpus ties bug reports to candidate code units (changeset-files or hunks)
mined at specific commits, tagged by data regime: *stationary* units are the
versions at the bug-fixing commit, *non-stationary* units are the versions
introduced by commits made while the bug was open.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from typing import Iterable

from driftrank._errors import ValidationError


class Granularity(str, Enum):
    CHANGESET_FILE = "changeset_file"
    HUNK = "hunk"


class Regime(str, Enum):
    STATIONARY = "stationary"
    NON_STATIONARY = "non_stationary"


def _as_utc(ts: datetime) -> datetime:
    if ts.tzinfo is None:
        return ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc)


@dataclass(frozen=True)
class BugReport:
    """One reported bug with its fixing commit and ground-truth file paths."""

    id: str
    title: str
    description: str
    report_date: datetime
    fix_commit: str
    fix_date: datetime
    ground_truth_paths: frozenset[str]

    def __post_init__(self) -> None:
        object.__setattr__(self, "report_date", _as_utc(self.report_date))
        object.__setattr__(self, "fix_date", _as_utc(self.fix_date))
        object.__setattr__(self, "ground_truth_paths", frozenset(self.ground_truth_paths))
        if not self.ground_truth_paths:
            raise ValidationError(f"bug {self.id}: ground_truth_paths must be non-empty")
        if self.report_date >= self.fix_date:
            raise ValidationError(
                f"bug {self.id}: report_date {self.report_date.isoformat()} must "
                f"strictly precede fix date {self.fix_date.isoformat()}"
            )


@dataclass(frozen=True)
class CodeUnit:
    """A changeset-file or hunk at a specific commit.

    For hunks, ``path`` is the parent file's path and ``parent_file_id``
    points at the changeset-file unit of the same commit. ``diff`` carries the
    unified diff that produced this version, when one is available; churn is
    read from it.
    """

    id: str
    path: str
    content: str
    granularity: Granularity
    commit: str
    commit_date: datetime
    regime: Regime
    parent_file_id: str | None = None
    diff: str | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "granularity", Granularity(self.granularity))
        object.__setattr__(self, "regime", Regime(self.regime))
        object.__setattr__(self, "commit_date", _as_utc(self.commit_date))
        if self.granularity is Granularity.HUNK and not self.parent_file_id:
            raise ValidationError(f"unit {self.id}: hunks require parent_file_id")
        if self.granularity is Granularity.CHANGESET_FILE and self.parent_file_id:
            raise ValidationError(f"unit {self.id}: changeset_file units must not set parent_file_id")


@dataclass
class Corpus:
    """Validated bundle of bug reports, code units, and candidate links.

    ``links`` maps a bug id to the unit ids that are valid candidates for it,
    across regimes and granularities; task assembly filters by unit
    attributes. Bugs whose linked units never intersect their ground truth
    are dropped at construction time and recorded in ``dropped_bug_ids``.
    """

    bug_reports: list[BugReport]
    code_units: list[CodeUnit]
    links: dict[str, list[str]]
    dropped_bug_ids: tuple[str, ...] = field(default_factory=tuple, compare=False)

    def __post_init__(self) -> None:
        self._validate()

    def _validate(self) -> None:
        unit_by_id = {u.id: u for u in self.code_units}
        if len(unit_by_id) != len(self.code_units):
            seen: set[str] = set()
            dupes = sorted({u.id for u in self.code_units if u.id in seen or seen.add(u.id)})
            raise ValidationError(f"duplicate code-unit ids: {', '.join(dupes)}")
        bug_by_id = {b.id: b for b in self.bug_reports}
        if len(bug_by_id) != len(self.bug_reports):
            raise ValidationError("duplicate bug ids")

        dangling = [
            f"{bug_id}→{uid}"
            for bug_id, uids in self.links.items()
            for uid in uids
            if uid not in unit_by_id
        ]
        unknown_bugs = sorted(set(self.links) - set(bug_by_id))
        if dangling or unknown_bugs:
            parts = []
            if dangling:
                parts.append("dangling links: " + ", ".join(sorted(dangling)))
            if unknown_bugs:
                parts.append("links for unknown bugs: " + ", ".join(unknown_bugs))
            raise ValidationError("; ".join(parts))

        kept: list[BugReport] = []
        dropped: list[str] = []
        for bug in self.bug_reports:
            linked = self.links.get(bug.id, [])
            if any(unit_by_id[uid].path in bug.ground_truth_paths for uid in linked):
                kept.append(bug)
            else:
                dropped.append(bug.id)
        if dropped:
            self.bug_reports = kept
            for bug_id in dropped:
                self.links.pop(bug_id, None)
            self.dropped_bug_ids = tuple(dropped)

    # -- lookups ---------------------------------------------------------

    def unit(self, unit_id: str) -> CodeUnit:
        return self._unit_index()[unit_id]

    def bug(self, bug_id: str) -> BugReport:
        return self._bug_index()[bug_id]

    def _unit_index(self) -> dict[str, CodeUnit]:
        idx = getattr(self, "_units_by_id", None)
        if idx is None or len(idx) != len(self.code_units):
            idx = {u.id: u for u in self.code_units}
            self._units_by_id = idx
        return idx

    def _bug_index(self) -> dict[str, BugReport]:
        idx = getattr(self, "_bugs_by_id", None)
        if idx is None or len(idx) != len(self.bug_reports):
            idx = {b.id: b for b in self.bug_reports}
            self._bugs_by_id = idx
        return idx

    def candidate_units(
        self, bug_id: str, regime: Regime, granularity: Granularity
    ) -> list[CodeUnit]:
        """Linked units of the given regime and granularity, link order kept."""
        units = self._unit_index()
        return [
            units[uid]
            for uid in self.links.get(bug_id, [])
            if units[uid].regime is regime and units[uid].granularity is granularity
        ]


@dataclass(frozen=True)
class TaskSpec:
    """One continual-learning task: a regime/granularity slice of the corpus."""

    regime: Regime
    granularity: Granularity
    bug_ids: tuple[str, ...]

    @property
    def name(self) -> str:
        return f"{self.regime.value}/{self.granularity.value}"


def split_train_test(corpus: Corpus) -> tuple[list[str], list[str]]:
    """60:40 date-ordered split of bug ids; ties broken by bug id.

    The earliest ceil(0.6*n) bugs form the train side.
    """
    n = len(corpus.bug_reports)
    if n < 2:
        raise ValidationError(f"need at least 2 bug reports to split, got {n}")
    ordered = sorted(corpus.bug_reports, key=lambda b: (b.report_date, b.id))
    n_train = math.ceil(0.6 * n)
    return [b.id for b in ordered[:n_train]], [b.id for b in ordered[n_train:]]


def make_task(
    corpus: Corpus,
    regime: Regime,
    granularity: Granularity,
    bug_ids: Iterable[str],
) -> TaskSpec:
    """Build a TaskSpec from the bugs that have candidates in this slice.

    Bugs without a single linked unit of the requested regime/granularity are
    silently excluded; date order (ties by id) is enforced.
    """
    usable = [
        corpus.bug(bid)
        for bid in bug_ids
        if corpus.candidate_units(bid, regime, granularity)
    ]
    usable.sort(key=lambda b: (b.report_date, b.id))
    return TaskSpec(regime=regime, granularity=granularity, bug_ids=tuple(b.id for b in usable))
