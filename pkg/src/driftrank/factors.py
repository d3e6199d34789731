"""Bug-inducing factor metrics and the logistic model that shapes rewards.

Five metrics per code unit: size (LOC), executable size (MLOC), a cyclomatic
complexity approximation (VG), prior bug fixes touching the same path (PRE),
and churn from the unit's diff. A logistic regression over standardized
factors is pruned by Wald p-values and then by variance inflation, and its
predicted bug probability can be added to the environment reward.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from driftrank._errors import ValidationError
from driftrank.corpus.diffs import count_hunk_lines
from driftrank.corpus.types import CodeUnit, Corpus, Granularity

FACTOR_NAMES = ("loc", "mloc", "vg", "pre", "churn")

_BRANCH_WORD_RE = re.compile(r"\b(if|for|while|case|catch)\b")


@dataclass(frozen=True)
class FactorVector:
    loc: int
    mloc: int
    vg: int
    pre: int
    churn: int

    def as_array(self, names: tuple[str, ...] = FACTOR_NAMES) -> np.ndarray:
        return np.array([float(getattr(self, n)) for n in names])


@dataclass
class LogisticModel:
    """Fitted logistic regression with Wald statistics.

    ``weights`` holds the intercept last; ``means``/``stds`` are the
    standardization statistics applied to inputs before scoring (identity
    when the model was fit on raw features).
    """

    feature_names: tuple[str, ...]
    weights: np.ndarray  # (p + 1,), intercept last
    standard_errors: np.ndarray
    p_values: np.ndarray
    converged: bool
    means: np.ndarray = field(default_factory=lambda: np.zeros(0))
    stds: np.ndarray = field(default_factory=lambda: np.ones(0))

    def __post_init__(self) -> None:
        p = len(self.feature_names)
        if not (len(self.weights) == len(self.standard_errors) == len(self.p_values) == p + 1):
            raise ValidationError("coefficient vectors must all have length n_features + 1")
        if self.means.size == 0:
            self.means = np.zeros(p)
        if self.stds.size == 0:
            self.stds = np.ones(p)

    def to_json(self, path: str | Path) -> None:
        payload = {
            "feature_names": list(self.feature_names),
            "weights": self.weights.tolist(),
            "standard_errors": self.standard_errors.tolist(),
            "p_values": self.p_values.tolist(),
            "converged": self.converged,
            "means": self.means.tolist(),
            "stds": self.stds.tolist(),
        }
        Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True), encoding="utf-8")

    @classmethod
    def from_json(cls, path: str | Path) -> "LogisticModel":
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(
            feature_names=tuple(raw["feature_names"]),
            weights=np.asarray(raw["weights"]),
            standard_errors=np.asarray(raw["standard_errors"]),
            p_values=np.asarray(raw["p_values"]),
            converged=raw["converged"],
            means=np.asarray(raw["means"]),
            stds=np.asarray(raw["stds"]),
        )


@dataclass(frozen=True)
class SelectionConfig:
    p_threshold: float = 0.05
    vif_max: float = 2.5
    standardize: bool = True

    def __post_init__(self) -> None:
        if not 0.0 < self.p_threshold < 1.0:
            raise ValidationError(f"p_threshold must be in (0,1), got {self.p_threshold}")
        if self.vif_max <= 1.0:
            raise ValidationError(f"vif_max must be > 1, got {self.vif_max}")


# ---------------------------------------------------------------------------
# metric computation
# ---------------------------------------------------------------------------

def _strip_comments_and_strings(code: str) -> str:
    """Remove //, /* */ and # comments plus string literal bodies.

    Non-nesting block comments; string quotes are kept so lines with only a
    literal still count as code. Newlines inside block comments survive so
    line counts stay aligned.
    """
    out: list[str] = []
    i = 0
    n = len(code)
    state = "code"
    quote = ""
    while i < n:
        ch = code[i]
        nxt = code[i + 1] if i + 1 < n else ""
        if state == "code":
            if ch in ("\"", "'"):
                state, quote = "string", ch
                out.append(ch)
            elif ch == "/" and nxt == "/":
                state = "line_comment"
                i += 1
            elif ch == "#":
                state = "line_comment"
            elif ch == "/" and nxt == "*":
                state = "block_comment"
                i += 1
            else:
                out.append(ch)
        elif state == "string":
            if ch == "\\":
                i += 1
            elif ch == quote:
                state = "code"
                out.append(ch)
            elif ch == "\n":
                state = "code"  # unterminated literal: stop at end of line
                out.append(ch)
        elif state == "line_comment":
            if ch == "\n":
                state = "code"
                out.append(ch)
        elif state == "block_comment":
            if ch == "*" and nxt == "/":
                state = "code"
                i += 1
            elif ch == "\n":
                out.append(ch)
        i += 1
    return "".join(out)


def _code_text(unit: CodeUnit) -> str:
    """Unit text for size/complexity metrics; hunk marker columns stripped."""
    if unit.granularity is Granularity.HUNK:
        return "\n".join(line[1:] for line in unit.content.splitlines())
    return unit.content


def _vg(stripped: str) -> int:
    branches = len(_BRANCH_WORD_RE.findall(stripped))
    branches += stripped.count("&&") + stripped.count("||") + stripped.count("?")
    return 1 + branches


def _churn(unit: CodeUnit) -> int:
    if unit.granularity is Granularity.HUNK:
        added, removed, _ = count_hunk_lines(unit.content)
        return added + removed
    if unit.diff is None:
        return 0
    added = removed = 0
    for line in unit.diff.splitlines():
        if line.startswith("+++") or line.startswith("---"):
            continue
        if line.startswith("+"):
            added += 1
        elif line.startswith("-"):
            removed += 1
    return added + removed


def compute_factors(unit: CodeUnit, corpus: Corpus) -> FactorVector:
    """The five factor metrics for one unit.

    PRE counts other bugs whose fixes touched this unit's path before this
    unit's commit date. Churn comes from the unit's diff (or its own +/- lines
    for hunks); stationary full files without a stored diff get 0.
    """
    text = _code_text(unit)
    lines = text.splitlines()
    loc = sum(1 for line in lines if line.strip())
    stripped = _strip_comments_and_strings(text)
    mloc = sum(1 for line in stripped.splitlines() if line.strip())
    vg = _vg(stripped)
    pre = sum(
        1
        for bug in corpus.bug_reports
        if unit.path in bug.ground_truth_paths
        and bug.fix_date < unit.commit_date
        and bug.fix_commit != unit.commit
    )
    return FactorVector(loc=loc, mloc=mloc, vg=vg, pre=pre, churn=_churn(unit))


# ---------------------------------------------------------------------------
# logistic regression via IRLS
# ---------------------------------------------------------------------------

_MAX_ITER = 100
_TOL = 1e-8
_RIDGE = 1e-4
_DIVERGENCE_BOUND = 30.0


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-np.clip(z, -500.0, 500.0)))


def log_likelihood(X: np.ndarray, y: np.ndarray, beta: np.ndarray) -> float:
    """Bernoulli log-likelihood with an intercept column appended last."""
    design = np.column_stack([X, np.ones(len(X))])
    p = np.clip(_sigmoid(design @ beta), 1e-15, 1.0 - 1e-15)
    return float(np.sum(y * np.log(p) + (1.0 - y) * np.log(1.0 - p)))


def _irls(design: np.ndarray, y: np.ndarray, ridge: float) -> tuple[np.ndarray, np.ndarray, bool]:
    """Returns (beta, hessian, converged)."""
    n, p = design.shape
    beta = np.zeros(p)
    hess = np.eye(p)
    converged = False
    for _ in range(_MAX_ITER):
        eta = design @ beta
        prob = _sigmoid(eta)
        w = np.maximum(prob * (1.0 - prob), 1e-10)
        grad = design.T @ (y - prob) - 2.0 * ridge * beta
        hess = design.T @ (design * w[:, None]) + 2.0 * ridge * np.eye(p)
        try:
            delta = np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError:
            return beta, hess, False
        beta = beta + delta
        if np.max(np.abs(beta)) > _DIVERGENCE_BOUND and ridge == 0.0:
            return beta, hess, False
        if np.max(np.abs(delta)) < _TOL:
            converged = True
            break
    return beta, hess, converged


def fit_logistic(
    X: np.ndarray,
    y: np.ndarray,
    feature_names: tuple[str, ...] | None = None,
) -> LogisticModel:
    """Maximum-likelihood logistic fit with Wald standard errors.

    On separable or otherwise diverging data the fit falls back to a small
    L2 ridge (1e-4) and the model is flagged converged=False.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2:
        raise ValidationError("X must be 2-D")
    n, p = X.shape
    if n <= p + 1:
        raise ValidationError(f"need n > p+1 samples, got n={n}, p={p}")
    if feature_names is None:
        feature_names = tuple(f"x{i}" for i in range(p))
    stds = X.std(axis=0)
    for j, s in enumerate(stds):
        if s == 0.0:
            raise ValidationError(f"column {feature_names[j]!r} is constant")

    design = np.column_stack([X, np.ones(n)])
    beta, hess, converged = _irls(design, y, ridge=0.0)
    if not converged:
        # Per-sample ridge: penalizes the mean log-likelihood by 1e-4*|beta|^2.
        beta, hess, _ = _irls(design, y, ridge=_RIDGE * n)

    cov = np.linalg.inv(hess)
    se = np.sqrt(np.maximum(np.diag(cov), 0.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(se > 0.0, beta / se, np.inf)
    p_values = np.array([math.erfc(abs(zi) / math.sqrt(2.0)) for zi in z])
    return LogisticModel(
        feature_names=feature_names,
        weights=beta,
        standard_errors=se,
        p_values=p_values,
        converged=converged,
    )


def compute_vif(X: np.ndarray) -> list[float]:
    """Variance inflation factor per column: 1/(1-R^2) against the rest."""
    X = np.asarray(X, dtype=np.float64)
    n, p = X.shape
    if p < 2:
        raise ValidationError(f"need at least 2 columns, got {p}")
    if n <= p:
        raise ValidationError(f"need n > p, got n={n}, p={p}")
    out: list[float] = []
    for j in range(p):
        target = X[:, j]
        sst = float(np.sum((target - target.mean()) ** 2))
        if sst == 0.0:
            raise ValidationError(f"column {j} is constant")
        others = np.column_stack([np.delete(X, j, axis=1), np.ones(n)])
        coef, _, _, _ = np.linalg.lstsq(others, target, rcond=None)
        ssr = float(np.sum((target - others @ coef) ** 2))
        r2 = 1.0 - ssr / sst
        out.append(float("inf") if r2 >= 1.0 - 1e-12 else 1.0 / (1.0 - r2))
    return out


def select_features(
    X: np.ndarray,
    y: np.ndarray,
    cfg: SelectionConfig = SelectionConfig(),
    feature_names: tuple[str, ...] = FACTOR_NAMES,
) -> LogisticModel:
    """Backward elimination: drop the worst insignificant feature until all
    Wald p-values clear the threshold, then drop the worst collinear feature
    until all VIFs do; the two passes alternate until stable and the final
    model is refit on the survivors.

    Raises when every feature gets eliminated; callers treat that as
    "disable the reward bonus".
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.shape[1] != len(feature_names):
        raise ValidationError("feature_names length must match X columns")

    if cfg.standardize:
        means, stds = X.mean(axis=0), X.std(axis=0)
        for j, s in enumerate(stds):
            if s == 0.0:
                raise ValidationError(f"column {feature_names[j]!r} is constant")
        work = (X - means) / stds
    else:
        means, stds = np.zeros(X.shape[1]), np.ones(X.shape[1])
        work = X

    keep = list(range(X.shape[1]))

    def fit_current() -> LogisticModel:
        return fit_logistic(work[:, keep], y, tuple(feature_names[i] for i in keep))

    model = None
    changed = True
    while changed:
        changed = False
        # Wald pass: one feature at a time, worst first.
        while keep:
            model = fit_current()
            feat_p = model.p_values[:-1]
            worst = int(np.argmax(feat_p))
            if feat_p[worst] >= cfg.p_threshold:
                del keep[worst]
                changed = True
            else:
                break
        if not keep:
            raise ValidationError("no significant features survive selection")
        # VIF pass: needs at least two columns to be defined.
        while len(keep) >= 2:
            vifs = compute_vif(work[:, keep])
            worst = int(np.argmax(vifs))
            if vifs[worst] > cfg.vif_max:
                del keep[worst]
                changed = True
            else:
                break

    model = fit_current()
    model.means = means[keep]
    model.stds = stds[keep]
    return model


def predict_bug_probability(model: LogisticModel, factors: FactorVector) -> float:
    """Sigmoid of the standardized linear score, strictly inside (0, 1)."""
    x = factors.as_array(model.feature_names)
    z = (x - model.means) / model.stds
    score = float(z @ model.weights[:-1] + model.weights[-1])
    prob = 1.0 / (1.0 + math.exp(-max(-500.0, min(500.0, score))))
    return min(max(prob, 1e-12), 1.0 - 1e-12)
