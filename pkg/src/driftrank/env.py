"""Ranking MDP over retrieved candidate changesets.

An episode starts from the top-k BM25 candidates for one bug report. Each
action moves one candidate slot into the ranked list; fresh relevant picks
earn reward scaled down by step number and by the average gap between
relevant items in the ranked list so far, re-picks are penalized, and an
optional logistic factor model adds a per-unit bug-probability bonus.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from driftrank._errors import ValidationError
from driftrank.corpus.types import BugReport, Corpus, TaskSpec
from driftrank.embed import Embedder, observation_features
from driftrank.factors import compute_factors, predict_bug_probability
from driftrank.retrieval import Bm25Index, build_index, query_top_k

if TYPE_CHECKING:
    from driftrank.factors import LogisticModel

__all__ = [
    "EnvConfig",
    "BugCase",
    "Observation",
    "StepResult",
    "RankingEnv",
    "distance",
    "compute_reward",
    "valid_actions",
    "make_bug_cases",
    "build_task_index",
    "observation_features",
]


@dataclass(frozen=True)
class EnvConfig:
    k: int = 31
    reward_scale: float = 3.0
    gamma: float = 0.99
    max_steps: int | None = None
    allow_reselect: bool = True
    use_regression_bonus: bool = False

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValidationError(f"k must be >= 1, got {self.k}")
        if self.reward_scale <= 0.0:
            raise ValidationError(f"reward_scale must be > 0, got {self.reward_scale}")
        if not 0.0 < self.gamma <= 1.0:
            raise ValidationError(f"gamma must be in (0,1], got {self.gamma}")

    @property
    def step_cap(self) -> int:
        return self.max_steps if self.max_steps is not None else 4 * self.k


@dataclass(frozen=True)
class BugCase:
    """One bug report with its candidate pool for a task slice."""

    bug: BugReport
    candidate_ids: tuple[str, ...]
    relevant_ids: frozenset[str]


@dataclass
class Observation:
    candidate_embeddings: np.ndarray  # (k, 2d); zero rows for padded slots
    ranked: list[int]
    relevance_mask: np.ndarray  # (k,) bool
    padded: np.ndarray  # (k,) bool
    t: int
    slot_unit_ids: tuple[str | None, ...]
    bonuses: np.ndarray  # (k,) regression bonus per slot; zeros when disabled

    @property
    def k(self) -> int:
        return self.candidate_embeddings.shape[0]

    @property
    def n_live(self) -> int:
        return int(self.k - self.padded.sum())

    def features(self) -> np.ndarray:
        return observation_features(self)


@dataclass(frozen=True)
class StepResult:
    observation: Observation
    reward: float
    done: bool
    info: dict


def distance(ranked_relevant_positions: list[int]) -> float:
    """Mean gap between consecutive relevant positions; 1.0 below two items."""
    if len(ranked_relevant_positions) < 2:
        return 1.0
    gaps = [
        b - a for a, b in zip(ranked_relevant_positions, ranked_relevant_positions[1:])
    ]
    return sum(gaps) / len(gaps)


def compute_reward(obs: Observation, action: int, cfg: EnvConfig) -> tuple[float, dict]:
    """Reward for taking ``action`` from ``obs``.

    Re-picks (and picks of padded slots) cost -log2(t+1). A fresh pick earns
    M * relevance / (log2(t+1) * distance) where the distance is measured on
    the ranked list after placement. The per-slot bonus, when enabled, is
    added in both branches.
    """
    if not 0 <= action < obs.k:
        raise ValidationError(f"action {action} out of range [0, {obs.k})")
    log_term = math.log2(obs.t + 1)
    bonus = float(obs.bonuses[action]) if not obs.padded[action] else 0.0
    if obs.padded[action] or action in obs.ranked:
        reward = -log_term + (bonus if cfg.use_regression_bonus else 0.0)
        return reward, {"relevant_pick": False, "distance": None, "bonus": bonus}
    placed = obs.ranked + [action]
    positions = [i + 1 for i, slot in enumerate(placed) if obs.relevance_mask[slot]]
    dist = distance(positions)
    relevant = bool(obs.relevance_mask[action])
    reward = cfg.reward_scale * (1.0 if relevant else 0.0) / (log_term * dist)
    if cfg.use_regression_bonus:
        reward += bonus
    return reward, {"relevant_pick": relevant, "distance": dist, "bonus": bonus}


def valid_actions(obs: Observation, allow_reselect: bool) -> np.ndarray:
    """Boolean mask of selectable slots; padded slots are never selectable."""
    valid = ~obs.padded
    if not allow_reselect:
        for slot in obs.ranked:
            valid[slot] = False
    return valid


def step(obs: Observation, action: int, cfg: EnvConfig) -> StepResult:
    """Functional transition; raises if the episode is already over."""
    if is_done(obs, cfg):
        raise ValidationError("step() called on a finished episode")
    if not 0 <= action < obs.k:
        raise ValidationError(f"action {action} out of range [0, {obs.k})")
    if not cfg.allow_reselect and (action in obs.ranked or obs.padded[action]):
        raise ValidationError(f"re-selection of slot {action} is disabled")
    reward, info = compute_reward(obs, action, cfg)
    fresh = not obs.padded[action] and action not in obs.ranked
    new_obs = Observation(
        candidate_embeddings=obs.candidate_embeddings,
        ranked=obs.ranked + [action] if fresh else list(obs.ranked),
        relevance_mask=obs.relevance_mask,
        padded=obs.padded,
        t=obs.t + 1,
        slot_unit_ids=obs.slot_unit_ids,
        bonuses=obs.bonuses,
    )
    return StepResult(observation=new_obs, reward=reward, done=is_done(new_obs, cfg), info=info)


def is_done(obs: Observation, cfg: EnvConfig) -> bool:
    return len(obs.ranked) >= obs.n_live or obs.t > cfg.step_cap


def build_task_index(corpus: Corpus, task: TaskSpec, k1: float = 1.2, b: float = 0.75,
                     index_paths: bool = True) -> Bm25Index:
    """BM25 index over every unit in the task's regime/granularity slice."""
    seen: set[str] = set()
    docs: list[tuple[str, str]] = []
    for unit in corpus.code_units:
        if unit.regime is task.regime and unit.granularity is task.granularity and unit.id not in seen:
            seen.add(unit.id)
            text = f"{unit.content}\n{unit.path}" if index_paths else unit.content
            docs.append((unit.id, text))
    return build_index(docs, k1=k1, b=b)


def make_bug_cases(corpus: Corpus, task: TaskSpec) -> list[BugCase]:
    cases = []
    for bug_id in task.bug_ids:
        bug = corpus.bug(bug_id)
        units = corpus.candidate_units(bug_id, task.regime, task.granularity)
        relevant = frozenset(u.id for u in units if u.path in bug.ground_truth_paths)
        cases.append(
            BugCase(bug=bug, candidate_ids=tuple(u.id for u in units), relevant_ids=relevant)
        )
    return cases


class RankingEnv:
    """Binds a corpus slice, BM25 index, embedder, and an optional factor
    model into resettable episodes. Slates are deterministic per bug and
    cached across resets; step() itself is a pure function of Observation."""

    def __init__(
        self,
        cfg: EnvConfig,
        corpus: Corpus,
        index: Bm25Index,
        embedder: Embedder,
        factor_model: "LogisticModel | None" = None,
        include_title: bool = False,
    ):
        if cfg.use_regression_bonus and factor_model is None:
            raise ValidationError("use_regression_bonus requires a factor model")
        self.cfg = cfg
        self.corpus = corpus
        self.index = index
        self.embedder = embedder
        self.factor_model = factor_model
        self.include_title = include_title
        self._unit_emb: dict[str, np.ndarray] = {}
        self._bonus: dict[str, float] = {}
        self._slates: dict[str, Observation] = {}

    def _embed_unit(self, unit_id: str) -> np.ndarray:
        cached = self._unit_emb.get(unit_id)
        if cached is None:
            unit = self.corpus.unit(unit_id)
            cached = self.embedder.embed_unit(unit_id, unit.content).values
            self._unit_emb[unit_id] = cached
        return cached

    def _bonus_for(self, unit_id: str) -> float:
        if self.factor_model is None:
            return 0.0
        cached = self._bonus.get(unit_id)
        if cached is None:
            factors = compute_factors(self.corpus.unit(unit_id), self.corpus)
            cached = predict_bug_probability(self.factor_model, factors)
            self._bonus[unit_id] = cached
        return cached

    def reset(self, case: BugCase) -> Observation:
        """Initial observation: top-k retrieved candidates, empty ranked list."""
        slate = self._slates.get(case.bug.id)
        if slate is None:
            slate = self._build_slate(case)
            self._slates[case.bug.id] = slate
        return Observation(
            candidate_embeddings=slate.candidate_embeddings,
            ranked=[],
            relevance_mask=slate.relevance_mask,
            padded=slate.padded,
            t=1,
            slot_unit_ids=slate.slot_unit_ids,
            bonuses=slate.bonuses,
        )

    def step(self, obs: Observation, action: int) -> StepResult:
        return step(obs, action, self.cfg)

    def _build_slate(self, case: BugCase) -> Observation:
        k = self.cfg.k
        query = case.bug.description
        if self.include_title:
            query = f"{case.bug.title}\n{query}"
        pool = set(case.candidate_ids)
        hits = [
            (uid, score)
            for uid, score in query_top_k(self.index, query, self.index.n_docs or 1)
            if uid in pool
        ][:k]
        if not hits:
            raise ValidationError(f"bug {case.bug.id}: no retrievable candidates")

        report_emb = self.embedder.embed_report(case.bug.id, case.bug.description).values
        dim = report_emb.shape[0]
        embeddings = np.zeros((k, 2 * dim))
        relevance = np.zeros(k, dtype=bool)
        padded = np.ones(k, dtype=bool)
        bonuses = np.zeros(k)
        slot_ids: list[str | None] = [None] * k
        for i, (uid, _score) in enumerate(hits):
            unit_emb = self._embed_unit(uid)
            embeddings[i, :dim] = unit_emb
            embeddings[i, dim:] = report_emb
            relevance[i] = uid in case.relevant_ids
            padded[i] = False
            bonuses[i] = self._bonus_for(uid)
            slot_ids[i] = uid
        return Observation(
            candidate_embeddings=embeddings,
            ranked=[],
            relevance_mask=relevance,
            padded=padded,
            t=1,
            slot_unit_ids=tuple(slot_ids),
            bonuses=bonuses,
        )
