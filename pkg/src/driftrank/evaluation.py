"""Ranking-quality metrics, the forgetting metric, and report assembly."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from driftrank._errors import ValidationError
from driftrank._logging import get_logger
from driftrank.corpus.types import Corpus, TaskSpec
from driftrank.embed import Embedder, EmbedderConfig
from driftrank.env import RankingEnv, build_task_index, make_bug_cases
from driftrank.learners import TrainedAgent, TrainLog, greedy_episode

log = get_logger(__name__)


@dataclass
class RankedResult:
    bug_id: str
    ranked_unit_ids: list[str]
    relevant_ids: frozenset[str]

    def __post_init__(self) -> None:
        if len(set(self.ranked_unit_ids)) != len(self.ranked_unit_ids):
            raise ValidationError(f"bug {self.bug_id}: ranked ids must be unique")


@dataclass
class MetricsReport:
    mrr: float
    map: float
    top1: float
    top5: float
    top10: float
    n_bugs: int
    training_time_s: float = 0.0
    forgetting: dict[str, float] = field(default_factory=dict)
    n_skipped: int = 0

    def to_payload(self) -> dict:
        return {
            "mrr": self.mrr,
            "map": self.map,
            "top1": self.top1,
            "top5": self.top5,
            "top10": self.top10,
            "n_bugs": self.n_bugs,
            "training_time_s": self.training_time_s,
            "forgetting": self.forgetting,
            "n_skipped": self.n_skipped,
        }

    def to_text(self) -> str:
        rows = [
            ("MRR", f"{self.mrr:.4f}"),
            ("MAP", f"{self.map:.4f}"),
            ("top@1", f"{self.top1:.4f}"),
            ("top@5", f"{self.top5:.4f}"),
            ("top@10", f"{self.top10:.4f}"),
            ("bugs", str(self.n_bugs)),
            ("skipped", str(self.n_skipped)),
            ("train time (s)", f"{self.training_time_s:.2f}"),
        ]
        rows.extend((f"forgetting[{k}]", f"{v:.4f}") for k, v in sorted(self.forgetting.items()))
        width = max(len(name) for name, _ in rows)
        return "\n".join(f"{name:<{width}}  {value}" for name, value in rows)


def _first_relevant_rank(result: RankedResult) -> int | None:
    for i, uid in enumerate(result.ranked_unit_ids, start=1):
        if uid in result.relevant_ids:
            return i
    return None


def mrr(results: list[RankedResult]) -> float:
    """Mean reciprocal rank of the first relevant item (0 when none ranked)."""
    if not results:
        raise ValidationError("mrr needs at least one result")
    total = 0.0
    for result in results:
        rank = _first_relevant_rank(result)
        total += 0.0 if rank is None else 1.0 / rank
    return total / len(results)


def average_precision(result: RankedResult) -> float:
    """Precision at each relevant hit, divided by the FULL relevant count, so
    relevant units missing from the ranking pull the score down."""
    if not result.relevant_ids:
        return 0.0
    hits = 0
    total = 0.0
    for i, uid in enumerate(result.ranked_unit_ids, start=1):
        if uid in result.relevant_ids:
            hits += 1
            total += hits / i
    return total / len(result.relevant_ids)


def map_metric(results: list[RankedResult]) -> float:
    if not results:
        raise ValidationError("map_metric needs at least one result")
    return float(np.mean([average_precision(r) for r in results]))


def top_at_k(results: list[RankedResult], k: int) -> float:
    """Fraction of bugs with a relevant item among the first k ranked."""
    if k < 1:
        raise ValidationError(f"k must be >= 1, got {k}")
    if not results:
        raise ValidationError("top_at_k needs at least one result")
    hits = sum(
        1
        for r in results
        if any(uid in r.relevant_ids for uid in r.ranked_unit_ids[:k])
    )
    return hits / len(results)


def expected_random_mrr(n_candidates: int, n_relevant: int) -> float:
    """Closed-form E[1/rank of first relevant] under a uniformly random
    permutation of n candidates, m of them relevant:
    sum_r (1/r) * C(n-r, m-1) / C(n, m)."""
    n, m = n_candidates, min(n_relevant, n_candidates)
    if m <= 0 or n <= 0:
        return 0.0
    denom = math.comb(n, m)
    return sum(math.comb(n - r, m - 1) / (denom * r) for r in range(1, n - m + 2))


def forgetting(returns: list[list[float]], phase_tasks: list[int]) -> list[float]:
    """Per-task normalized drop after the first subsequent foreign phase.

    For task i, take its latest training phase p that is followed by a phase
    training a different task j; F_i = (r[i][p] - r[i][j]) / |max_j r[i][j]|.
    Tasks never followed by foreign training yield NaN. A zero maximum return
    for a task is an error (the normalization is undefined).
    """
    n_tasks = len(returns)
    n_phases = len(phase_tasks)
    if any(len(row) != n_phases for row in returns):
        raise ValidationError("returns matrix must have one column per phase")
    out: list[float] = []
    for i in range(n_tasks):
        row = returns[i]
        pair: tuple[int, int] | None = None
        for p in range(n_phases):
            if phase_tasks[p] != i:
                continue
            for j in range(p + 1, n_phases):
                if phase_tasks[j] != i:
                    pair = (p, j)
                    break
        if pair is None:
            out.append(float("nan"))
            continue
        peak = max(row)
        if peak == 0.0:
            raise ValidationError(f"task {i}: max return is 0, forgetting undefined")
        p, j = pair
        out.append((row[p] - row[j]) / abs(peak))
    return out


def evaluate_agent(
    agent: TrainedAgent,
    corpus: Corpus,
    task: TaskSpec,
    embedder_cfg: EmbedderConfig | None = None,
    factor_model=None,
    bm25_params: tuple[float, float] = (1.2, 0.75),
    train_log: TrainLog | None = None,
    training_time_s: float = 0.0,
    per_bug_csv: str | Path | None = None,
) -> MetricsReport:
    """Greedy evaluation over a test task.

    One deterministic argmax episode per bug (re-selection disabled); the
    relevant set contains every linked unit of this task slice whose path is
    in the bug's ground truth, whether retrieved into the slate or not. Bugs
    with zero retrievable candidates are skipped and counted.
    """
    embedder = Embedder(embedder_cfg or EmbedderConfig())
    index = build_task_index(corpus, task, k1=bm25_params[0], b=bm25_params[1])
    env = RankingEnv(agent.env_cfg, corpus, index, embedder, factor_model=factor_model)
    cases = make_bug_cases(corpus, task)
    if not cases:
        raise ValidationError(f"task {task.name}: empty test set")

    results: list[RankedResult] = []
    skipped = 0
    for case in cases:
        try:
            ranked_ids, _ = greedy_episode(env, case, agent.params)
        except ValidationError:
            skipped += 1
            log.info("bug %s skipped at evaluation: no candidates", case.bug.id)
            continue
        results.append(
            RankedResult(bug_id=case.bug.id, ranked_unit_ids=ranked_ids, relevant_ids=case.relevant_ids)
        )
    if not results:
        raise ValidationError(f"task {task.name}: every bug was skipped")

    forget: dict[str, float] = {}
    if train_log is not None:
        values = forgetting(train_log.returns, train_log.phase_tasks)
        forget = {name: values[i] for i, name in enumerate(train_log.task_names)}

    report = MetricsReport(
        mrr=mrr(results),
        map=map_metric(results),
        top1=top_at_k(results, 1),
        top5=top_at_k(results, 5),
        top10=top_at_k(results, 10),
        n_bugs=len(results),
        training_time_s=training_time_s,
        forgetting=forget,
        n_skipped=skipped,
    )
    if per_bug_csv is not None:
        _write_per_bug_csv(per_bug_csv, results)
    return report


def _write_per_bug_csv(path: str | Path, results: list[RankedResult]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["bug_id", "first_relevant_rank", "average_precision"])
        for r in results:
            rank = _first_relevant_rank(r)
            writer.writerow([r.bug_id, "" if rank is None else rank, f"{average_precision(r):.6f}"])


def save_report(report: MetricsReport, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(report.to_payload(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def load_report(path: str | Path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))
