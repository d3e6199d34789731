"""Seeded synthetic corpora for desk-scale experiments.

The generator plants a controllable amount of lexical signal between bug
descriptions and their ground-truth files (``signal_strength``), degrades
non-stationary versions by replacing a fraction of tokens (``drift``), and
shapes the bug-inducing factors so that churn and prior-fix counts correlate
with relevance: hot files are picked as ground truth more often and receive
larger edits, while size and complexity stay independent noise.
"""

from __future__ import annotations

import difflib
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone

import numpy as np

from driftrank._errors import ValidationError
from driftrank.corpus.diffs import extract_hunks
from driftrank.corpus.types import BugReport, CodeUnit, Corpus, Granularity, Regime

_BASE_DATE = datetime(2020, 1, 1, tzinfo=timezone.utc)
_LETTERS = "abcdefghijklmnopqrstuvwxyz"


@dataclass(frozen=True)
class SynthConfig:
    n_bugs: int = 50
    n_files: int = 40
    vocab_size: int = 600
    signal_strength: float = 0.9
    drift: float = 0.3
    planted_tokens: int = 6
    report_filler_tokens: int = 10
    base_file_lines: int = 36
    max_ground_truth: int = 2
    max_intermediate_versions: int = 2

    def __post_init__(self) -> None:
        if not 0.0 <= self.signal_strength <= 1.0:
            raise ValidationError(f"signal_strength must be in [0,1], got {self.signal_strength}")
        if not 0.0 <= self.drift <= 1.0:
            raise ValidationError(f"drift must be in [0,1], got {self.drift}")
        if self.n_bugs < 1 or self.n_files < 2:
            raise ValidationError("need n_bugs >= 1 and n_files >= 2")


def _make_vocab(rng: np.random.Generator, size: int) -> list[str]:
    words: list[str] = []
    seen: set[str] = set()
    while len(words) < size:
        length = int(rng.integers(5, 9))
        word = "".join(_LETTERS[i] for i in rng.integers(0, 26, size=length))
        if word not in seen:
            seen.add(word)
            words.append(word)
    return words


def _base_content(rng: np.random.Generator, filler: list[str], n_lines: int) -> list[str]:
    pick = lambda: filler[int(rng.integers(0, len(filler)))]
    lines: list[str] = []
    for _ in range(n_lines):
        kind = rng.random()
        if kind < 0.10:
            lines.append("")
        elif kind < 0.25:
            lines.append(f"// {pick()} {pick()}")
        elif kind < 0.40:
            lines.append(f"if ({pick()} && {pick()}) {{ {pick()}.run(); }}")
        elif kind < 0.50:
            lines.append(f"for (item : {pick()}) {{ {pick()}.add(item); }}")
        else:
            lines.append(f"{pick()} = {pick()}.apply({pick()});")
    return lines


def _drift_lines(rng: np.random.Generator, lines: list[str], d: float, filler: list[str]) -> list[str]:
    """Replace each word token with probability d; structure is preserved."""
    if d <= 0.0:
        return list(lines)
    out: list[str] = []
    for line in lines:
        parts = line.split(" ")
        for i, part in enumerate(parts):
            core = part.strip("(){};.&|=,/")
            if core.isalpha() and len(core) > 2 and rng.random() < d:
                replacement = filler[int(rng.integers(0, len(filler)))]
                parts[i] = part.replace(core, replacement, 1)
        out.append(" ".join(parts))
    return out


def _plant(rng: np.random.Generator, lines: list[str], tokens: list[str], p: float) -> list[str]:
    """Insert a usage line for each planted token present with probability p."""
    out = list(lines)
    body = "\n".join(lines)
    for tok in tokens:
        if tok in body:
            continue
        if rng.random() < p:
            pos = int(rng.integers(0, len(out) + 1))
            out.insert(pos, f"{tok} = {tok}.resolve();")
    return out


def _udiff(a: list[str], b: list[str], path: str) -> str:
    return "\n".join(
        difflib.unified_diff(a, b, fromfile=f"a/{path}", tofile=f"b/{path}", lineterm="")
    )


def generate_synthetic_corpus(cfg: SynthConfig, seed: int) -> Corpus:
    """Deterministically generate a corpus; identical (cfg, seed) give
    identical corpora, byte for byte after serialization."""
    rng = np.random.default_rng(seed)
    n_topic = cfg.n_bugs * cfg.planted_tokens
    vocab = _make_vocab(rng, cfg.vocab_size + n_topic)
    topic_pool = vocab[:n_topic]
    filler = vocab[n_topic:]

    paths = [f"src/mod{i % 8}/widget{i:03d}.java" for i in range(cfg.n_files)]
    base_lines = {p: _base_content(rng, filler, cfg.base_file_lines) for p in paths}
    # Zipf-flavored hotness drives both ground-truth sampling and churn size.
    hotness = 1.0 / np.arange(1, cfg.n_files + 1) ** 0.8
    hotness /= hotness.sum()

    bugs: list[BugReport] = []
    units: list[CodeUnit] = []
    links: dict[str, list[str]] = {}

    for b in range(cfg.n_bugs):
        bug_id = f"bug{b:04d}"
        report_date = _BASE_DATE + timedelta(days=3 * b, hours=int(rng.integers(0, 12)))
        fix_date = report_date + timedelta(days=2 + int(rng.integers(0, 3)), hours=6)
        fix_commit = f"fix-{bug_id}"
        n_gt = 1 + int(rng.integers(0, cfg.max_ground_truth))
        gt_idx = rng.choice(cfg.n_files, size=n_gt, replace=False, p=hotness)
        gt_paths = [paths[i] for i in sorted(gt_idx.tolist())]
        planted = [topic_pool[b * cfg.planted_tokens + j] for j in range(cfg.planted_tokens)]

        desc_tokens = []
        for tok in planted:
            desc_tokens.extend([tok, tok])
        desc_tokens.extend(filler[int(rng.integers(0, len(filler)))] for _ in range(cfg.report_filler_tokens))
        description = " ".join(desc_tokens)
        title = f"failure around {planted[0]}"

        bugs.append(
            BugReport(
                id=bug_id,
                title=title,
                description=description,
                report_date=report_date,
                fix_commit=fix_commit,
                fix_date=fix_date,
                ground_truth_paths=frozenset(gt_paths),
            )
        )

        for path in gt_paths:
            hot = float(hotness[paths.index(path)] / hotness[0])
            versions: list[list[str]] = [_plant(rng, base_lines[path], planted, cfg.signal_strength)]
            m = 1 + int(rng.integers(0, cfg.max_intermediate_versions))
            for _ in range(m):
                versions.append(_drift_lines(rng, versions[-1], cfg.drift, filler))

            window = fix_date - report_date
            file_tag = path.rsplit("/", 1)[-1].split(".")[0]
            prev_unit_ids: list[str] = []
            for j in range(1, m + 1):
                commit = f"mid-{bug_id}-{file_tag}-{j}"
                commit_date = report_date + window * j / (m + 2)
                uid = f"ns-{bug_id}-{file_tag}-v{j}"
                diff = _udiff(versions[j - 1], versions[j], path)
                units.append(
                    CodeUnit(
                        id=uid,
                        path=path,
                        content="\n".join(versions[j]),
                        granularity=Granularity.CHANGESET_FILE,
                        commit=commit,
                        commit_date=commit_date,
                        regime=Regime.NON_STATIONARY,
                        diff=diff,
                    )
                )
                units.extend(
                    extract_hunks(
                        diff,
                        commit=commit,
                        commit_date=commit_date,
                        regime=Regime.NON_STATIONARY,
                        parent_ids={path: uid},
                        id_prefix=f"{uid}-h",
                    )
                )
                prev_unit_ids.append(uid)

            # Fix version: pure additions keep planted lines intact; edit size
            # scales with hotness so churn tracks how bug-prone a file is.
            fixed = _plant(rng, versions[-1], planted, cfg.signal_strength)
            n_new = 1 + int(rng.poisson(1.5 + 9.0 * hot))
            for _ in range(n_new):
                pos = int(rng.integers(0, len(fixed) + 1))
                word = filler[int(rng.integers(0, len(filler)))]
                fixed.insert(pos, f"{word} = {word}.guard();")
            st_uid = f"st-{bug_id}-{file_tag}"
            diff = _udiff(versions[-1], fixed, path)
            units.append(
                CodeUnit(
                    id=st_uid,
                    path=path,
                    content="\n".join(fixed),
                    granularity=Granularity.CHANGESET_FILE,
                    commit=fix_commit,
                    commit_date=fix_date,
                    regime=Regime.STATIONARY,
                    diff=diff,
                )
            )
            units.extend(
                extract_hunks(
                    diff,
                    commit=fix_commit,
                    commit_date=fix_date,
                    regime=Regime.STATIONARY,
                    parent_ids={path: st_uid},
                    id_prefix=f"{st_uid}-h",
                )
            )

    all_unit_ids = [u.id for u in units]
    for bug in bugs:
        links[bug.id] = list(all_unit_ids)

    return Corpus(bug_reports=bugs, code_units=units, links=links)
