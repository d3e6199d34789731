"""Deterministic text embeddings and observation feature assembly.

The default embedder is a signed feature-hashing bag of tokens with L2
normalization: stateless, corpus-independent, and reproducible across
processes. An ``external`` mode loads precomputed vectors (e.g. from a
transformer encoder run offline) keyed by unit id, with bug reports stored
under ``report:<bug id>``.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING

import numpy as np

from driftrank._errors import ValidationError
from driftrank.retrieval import tokenize

if TYPE_CHECKING:
    from driftrank.env import Observation


@dataclass(frozen=True)
class EmbedderConfig:
    dim: int = 32
    mode: str = "hashed_tfidf"
    external_path: str | None = None

    def __post_init__(self) -> None:
        if self.mode not in ("hashed_tfidf", "external"):
            raise ValidationError(f"unknown embedder mode {self.mode!r}")
        if self.mode == "external" and not self.external_path:
            raise ValidationError("external embedder mode requires external_path")
        if self.dim < 1:
            raise ValidationError(f"dim must be >= 1, got {self.dim}")


@dataclass(eq=False)
class Embedding:
    values: np.ndarray
    norm: float

    @property
    def dim(self) -> int:
        return self.values.shape[0]


def _bucket_sign(token: str, dim: int) -> tuple[int, float]:
    digest = hashlib.blake2b(token.encode("utf-8"), digest_size=9).digest()
    bucket = int.from_bytes(digest[:8], "little") % dim
    sign = 1.0 if digest[8] & 1 else -1.0
    return bucket, sign


class Embedder:
    """Embeds texts (hashed mode) or looks up precomputed vectors (external)."""

    def __init__(self, cfg: EmbedderConfig):
        self.cfg = cfg
        self._external: dict[str, np.ndarray] | None = None
        if cfg.mode == "external":
            raw = json.loads(Path(cfg.external_path).read_text(encoding="utf-8"))
            self._external = {}
            for key, vec in raw.items():
                arr = np.asarray(vec, dtype=np.float64)
                if arr.shape != (cfg.dim,):
                    raise ValidationError(
                        f"external embedding {key!r} has dim {arr.shape}, expected ({cfg.dim},)"
                    )
                self._external[key] = arr

    def embed_text(self, text: str) -> Embedding:
        """Signed-hash token counts, L2-normalized; empty text stays zero."""
        if self.cfg.mode != "hashed_tfidf":
            raise ValidationError("embed_text requires hashed_tfidf mode; use embed_unit/embed_report")
        vec = np.zeros(self.cfg.dim, dtype=np.float64)
        for token in tokenize(text):
            bucket, sign = _bucket_sign(token, self.cfg.dim)
            vec[bucket] += sign
        norm = float(np.linalg.norm(vec))
        if norm > 0.0:
            vec /= norm
            norm = 1.0
        return Embedding(values=vec, norm=norm)

    def embed_unit(self, unit_id: str, text: str) -> Embedding:
        if self._external is None:
            return self.embed_text(text)
        try:
            vec = self._external[unit_id]
        except KeyError:
            raise ValidationError(f"no external embedding for unit {unit_id!r}") from None
        return Embedding(values=vec.copy(), norm=float(np.linalg.norm(vec)))

    def embed_report(self, bug_id: str, text: str) -> Embedding:
        if self._external is None:
            return self.embed_text(text)
        key = f"report:{bug_id}"
        try:
            vec = self._external[key]
        except KeyError:
            raise ValidationError(f"no external embedding for {key!r}") from None
        return Embedding(values=vec.copy(), norm=float(np.linalg.norm(vec)))


def combine(file_emb: Embedding, report_emb: Embedding) -> Embedding:
    """Concatenate file and report vectors, file part first."""
    if file_emb.dim != report_emb.dim:
        raise ValidationError(f"dim mismatch: {file_emb.dim} vs {report_emb.dim}")
    values = np.concatenate([file_emb.values, report_emb.values])
    return Embedding(values=values, norm=float(np.linalg.norm(values)))


def observation_features(obs: "Observation") -> np.ndarray:
    """Flat feature vector the network consumes.

    Layout: k candidate blocks of width 2d (zeroed once the slot is ranked;
    padded slots are zero throughout), then k availability flags (1 = ranked
    or padded), then one normalized progress entry, (t-1)/k, which is 0 on
    the initial observation and 1.0 once all k slots are ranked.
    """
    k, two_d = obs.candidate_embeddings.shape
    out = np.zeros(k * two_d + k + 1, dtype=np.float64)
    blocks = out[: k * two_d].reshape(k, two_d)
    blocks[:] = obs.candidate_embeddings
    flags = out[k * two_d : k * two_d + k]
    for slot in obs.ranked:
        blocks[slot] = 0.0
        flags[slot] = 1.0
    for slot in range(k):
        if obs.padded[slot]:
            flags[slot] = 1.0
    out[-1] = (obs.t - 1) / k
    return out
