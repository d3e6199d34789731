"""Unified-diff parsing into hunk code units."""

from __future__ import annotations

import re
from datetime import datetime, timezone

from driftrank._errors import CorpusParseError
from driftrank.corpus.types import CodeUnit, Granularity, Regime

_HUNK_RE = re.compile(r"^@@ -(\d+)(?:,(\d+))? \+(\d+)(?:,(\d+))? @@")

_EPOCH = datetime(1970, 1, 1, tzinfo=timezone.utc)


def _strip_git_prefix(path: str) -> str:
    if path.startswith(("a/", "b/")):
        return path[2:]
    return path


def extract_hunks(
    unified_diff: str,
    *,
    commit: str = "",
    commit_date: datetime | None = None,
    regime: Regime = Regime.STATIONARY,
    parent_ids: dict[str, str] | None = None,
    id_prefix: str = "hunk",
) -> list[CodeUnit]:
    """Split a ``git diff`` text into one CodeUnit per @@-delimited hunk.

    Hunk content keeps the +/-/context markers verbatim. The parent file path
    comes from the +++ header, falling back to the --- header for pure
    deletions. ``parent_ids`` maps file path to the changeset-file unit id the
    hunks should point at; paths without an entry get a synthesized parent id
    of the form ``<id_prefix>:<path>@<commit>``.

    Body extent is determined by the @@ line counts, so content lines that
    happen to look like headers cannot derail the parse. A count mismatch or
    malformed @@ line raises :class:`CorpusParseError` with the line number.
    """
    lines = unified_diff.splitlines()
    units: list[CodeUnit] = []
    when = commit_date if commit_date is not None else _EPOCH
    old_path: str | None = None
    new_path: str | None = None
    i = 0
    n = len(lines)
    while i < n:
        line = lines[i]
        if line.startswith("--- "):
            old_path = line[4:].split("\t")[0].strip()
            new_path = None
            i += 1
            continue
        if line.startswith("+++ "):
            new_path = line[4:].split("\t")[0].strip()
            i += 1
            continue
        if line.startswith("@@"):
            m = _HUNK_RE.match(line)
            if not m:
                raise CorpusParseError(f"line {i + 1}: malformed hunk header {line!r}")
            old_len = int(m.group(2)) if m.group(2) is not None else 1
            new_len = int(m.group(4)) if m.group(4) is not None else 1
            path = new_path if new_path and new_path != "/dev/null" else old_path
            if path is None:
                raise CorpusParseError(f"line {i + 1}: hunk header before any file header")
            path = _strip_git_prefix(path) if path != "/dev/null" else path
            body: list[str] = []
            seen_old = seen_new = 0
            i += 1
            while i < n and (seen_old < old_len or seen_new < new_len):
                body_line = lines[i]
                if body_line.startswith("\\"):  # "\ No newline at end of file"
                    i += 1
                    continue
                if body_line.startswith("+"):
                    seen_new += 1
                elif body_line.startswith("-"):
                    seen_old += 1
                elif body_line.startswith(" ") or body_line == "":
                    seen_old += 1
                    seen_new += 1
                else:
                    break
                body.append(body_line)
                i += 1
            if seen_old != old_len or seen_new != new_len:
                raise CorpusParseError(
                    f"line {i}: hunk body ended with {seen_old}/{old_len} old and "
                    f"{seen_new}/{new_len} new lines accounted for"
                )
            parent = (parent_ids or {}).get(path) or f"{id_prefix}:{path}@{commit}"
            units.append(
                CodeUnit(
                    id=f"{id_prefix}{len(units):04d}",
                    path=path,
                    content="\n".join(body),
                    granularity=Granularity.HUNK,
                    commit=commit,
                    commit_date=when,
                    regime=regime,
                    parent_file_id=parent,
                )
            )
            continue
        i += 1
    return units


def count_hunk_lines(content: str) -> tuple[int, int, int]:
    """(added, removed, context) line counts of a hunk body."""
    added = removed = context = 0
    for line in content.splitlines():
        if line.startswith("+"):
            added += 1
        elif line.startswith("-"):
            removed += 1
        else:
            context += 1
    return added, removed, context
