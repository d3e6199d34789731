"""Corpus file round-tripping.

The on-disk format is UTF-8 JSON with top-level keys ``bug_reports``,
``code_units`` and ``links``; timestamps are ISO-8601 UTC strings. The full
schema is documented in docs/corpus-format.md.
"""

from __future__ import annotations

import json
from datetime import datetime
from pathlib import Path

from driftrank._errors import CorpusParseError
from driftrank._logging import get_logger
from driftrank.corpus.types import BugReport, CodeUnit, Corpus

log = get_logger(__name__)

_BUG_FIELDS = ("id", "title", "description", "report_date", "fix_commit", "fix_date", "ground_truth_paths")
_UNIT_FIELDS = ("id", "path", "content", "granularity", "commit", "commit_date", "regime")


def _parse_ts(value: str, where: str) -> datetime:
    try:
        return datetime.fromisoformat(value.replace("Z", "+00:00"))
    except (ValueError, AttributeError) as exc:
        raise CorpusParseError(f"{where}: bad ISO-8601 timestamp {value!r}") from exc


def _require(record: dict, fields: tuple[str, ...], where: str) -> None:
    missing = [f for f in fields if f not in record]
    if missing:
        raise CorpusParseError(f"{where}: missing field(s) {', '.join(missing)}")


def load_corpus(path: str | Path) -> Corpus:
    """Load and validate a corpus file.

    Bugs whose linked candidates never intersect their ground truth are
    dropped (and counted on ``Corpus.dropped_bug_ids``) rather than failing
    the load, mirroring how projects without usable non-stationary data get
    excluded upstream.
    """
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise CorpusParseError(f"{path}: line {exc.lineno}, col {exc.colno}: {exc.msg}") from exc

    for key in ("bug_reports", "code_units", "links"):
        if key not in raw:
            raise CorpusParseError(f"{path}: missing top-level key {key!r}")

    bugs = []
    for i, rec in enumerate(raw["bug_reports"]):
        where = f"bug_reports[{i}]"
        _require(rec, _BUG_FIELDS, where)
        bugs.append(
            BugReport(
                id=rec["id"],
                title=rec["title"],
                description=rec["description"],
                report_date=_parse_ts(rec["report_date"], f"{where}.report_date"),
                fix_commit=rec["fix_commit"],
                fix_date=_parse_ts(rec["fix_date"], f"{where}.fix_date"),
                ground_truth_paths=frozenset(rec["ground_truth_paths"]),
            )
        )

    units = []
    for i, rec in enumerate(raw["code_units"]):
        where = f"code_units[{i}]"
        _require(rec, _UNIT_FIELDS, where)
        units.append(
            CodeUnit(
                id=rec["id"],
                path=rec["path"],
                content=rec["content"],
                granularity=rec["granularity"],
                commit=rec["commit"],
                commit_date=_parse_ts(rec["commit_date"], f"{where}.commit_date"),
                regime=rec["regime"],
                parent_file_id=rec.get("parent_file_id"),
                diff=rec.get("diff"),
            )
        )

    corpus = Corpus(bug_reports=bugs, code_units=units, links={k: list(v) for k, v in raw["links"].items()})
    if corpus.dropped_bug_ids:
        log.warning(
            "dropped %d bug(s) with no ground-truth candidate: %s",
            len(corpus.dropped_bug_ids),
            ", ".join(corpus.dropped_bug_ids),
        )
    return corpus


def save_corpus(corpus: Corpus, path: str | Path) -> None:
    """Write a corpus file; output bytes are a pure function of the corpus."""
    payload = {
        "bug_reports": [
            {
                "id": b.id,
                "title": b.title,
                "description": b.description,
                "report_date": b.report_date.isoformat(),
                "fix_commit": b.fix_commit,
                "fix_date": b.fix_date.isoformat(),
                "ground_truth_paths": sorted(b.ground_truth_paths),
            }
            for b in corpus.bug_reports
        ],
        "code_units": [
            {
                "id": u.id,
                "path": u.path,
                "content": u.content,
                "granularity": u.granularity.value,
                "commit": u.commit,
                "commit_date": u.commit_date.isoformat(),
                "regime": u.regime.value,
                "parent_file_id": u.parent_file_id,
                "diff": u.diff,
            }
            for u in corpus.code_units
        ],
        "links": {bug_id: list(uids) for bug_id, uids in corpus.links.items()},
    }
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
