"""Corpus ingestion, synthesis, mining, and splitting."""

from driftrank.corpus.diffs import count_hunk_lines, extract_hunks
from driftrank.corpus.io import load_corpus, save_corpus
from driftrank.corpus.mining import mine_repository
from driftrank.corpus.synth import SynthConfig, generate_synthetic_corpus
from driftrank.corpus.types import (
    BugReport,
    CodeUnit,
    Corpus,
    Granularity,
    Regime,
    TaskSpec,
    make_task,
    split_train_test,
)

__all__ = [
    "BugReport",
    "CodeUnit",
    "Corpus",
    "Granularity",
    "Regime",
    "SynthConfig",
    "TaskSpec",
    "count_hunk_lines",
    "extract_hunks",
    "generate_synthetic_corpus",
    "load_corpus",
    "make_task",
    "mine_repository",
    "save_corpus",
    "split_train_test",
]
