"""In-process BM25 index over code and bug-report text.

Stands in for an external search engine: documents are indexed once,
immutable afterwards, and queried with the classic BM25 scoring function
(k1=1.2, b=0.75 defaults).
"""

from __future__ import annotations

import json
import math
import re
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

from driftrank._errors import ValidationError

_WORD_RE = re.compile(r"[0-9A-Za-z]+")
_CAMEL_RE = re.compile(r"[A-Z]+(?=[A-Z][a-z])|[A-Z]?[a-z]+|[A-Z]+|[0-9]+")


def tokenize(text: str) -> list[str]:
    """Lowercased word tokens, with camelCase/snake_case identifiers split.

    Compound identifiers contribute both the whole lowercased word and its
    sub-tokens ("parseHttpInput" -> parsehttpinput, parse, http, input), so
    exact identifier matches stay distinctive while sub-token recall works.
    Tokens of length 1 are dropped.
    """
    out: list[str] = []
    for word in _WORD_RE.findall(text):
        parts = _CAMEL_RE.findall(word)
        lowered = word.lower()
        if len(lowered) > 1:
            out.append(lowered)
        if len(parts) > 1:
            out.extend(p.lower() for p in parts if len(p) > 1 and p.lower() != lowered)
    return out


@dataclass
class Bm25Index:
    postings: dict[str, list[tuple[str, int]]]
    doc_lengths: dict[str, int]
    avg_doc_length: float
    n_docs: int
    k1: float = 1.2
    b: float = 0.75

    def idf(self, token: str) -> float:
        df = len(self.postings.get(token, ()))
        return math.log((self.n_docs - df + 0.5) / (df + 0.5) + 1.0)

    def dump(self, path: str | Path) -> None:
        """Debug dump; not a stability-guaranteed format."""
        payload = {
            "n_docs": self.n_docs,
            "avg_doc_length": self.avg_doc_length,
            "k1": self.k1,
            "b": self.b,
            "doc_lengths": self.doc_lengths,
            "postings": {t: list(map(list, ps)) for t, ps in self.postings.items()},
        }
        Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True), encoding="utf-8")


def build_index(docs: list[tuple[str, str]], k1: float = 1.2, b: float = 0.75) -> Bm25Index:
    """Index (id, text) pairs; duplicate ids are an error."""
    ids = [doc_id for doc_id, _ in docs]
    if len(set(ids)) != len(ids):
        dupes = sorted({d for d, c in Counter(ids).items() if c > 1})
        raise ValidationError(f"duplicate document ids: {', '.join(dupes)}")
    postings: dict[str, list[tuple[str, int]]] = {}
    doc_lengths: dict[str, int] = {}
    for doc_id, text in docs:
        tokens = tokenize(text)
        doc_lengths[doc_id] = len(tokens)
        for token, tf in sorted(Counter(tokens).items()):
            postings.setdefault(token, []).append((doc_id, tf))
    n = len(docs)
    avg = (sum(doc_lengths.values()) / n) if n else 0.0
    return Bm25Index(postings=postings, doc_lengths=doc_lengths, avg_doc_length=avg, n_docs=n, k1=k1, b=b)


def query_top_k(index: Bm25Index, query: str, k: int) -> list[tuple[str, float]]:
    """Top-k documents by BM25 score, descending; ties broken by doc id.

    Documents sharing no query token score 0 and are excluded, so fewer than
    k results can come back. An empty query yields an empty list.
    """
    if k < 1:
        raise ValidationError(f"k must be >= 1, got {k}")
    tokens = tokenize(query)
    if not tokens:
        return []
    scores: dict[str, float] = {}
    for token, qtf in Counter(tokens).items():
        ps = index.postings.get(token)
        if not ps:
            continue
        idf = index.idf(token)
        for doc_id, tf in ps:
            length = index.doc_lengths[doc_id]
            denom = tf + index.k1 * (1.0 - index.b + index.b * length / index.avg_doc_length)
            scores[doc_id] = scores.get(doc_id, 0.0) + qtf * idf * tf * (index.k1 + 1.0) / denom
    ranked = sorted(scores.items(), key=lambda kv: (-kv[1], kv[0]))
    return ranked[:k]
