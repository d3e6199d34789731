"""Command-line entry point wiring corpora, factor models, indexes, training,
and evaluation into reproducible experiment runs.

Subcommands: mine | synth | train-factors | index | train | evaluate | report.
Exit codes: 0 success, 1 validation/usage error, 2 runtime error. Unlisted
``--section.key value`` pairs override config-file keys; flags win over the
file, the file over defaults. CLB_LOG={error,info,debug} controls logging.
"""

from __future__ import annotations

import argparse
import json
import subprocess
import sys
from datetime import datetime
from pathlib import Path

import numpy as np

import driftrank
from driftrank import evaluation, factors, learners, nets, retrieval
from driftrank._errors import DriftrankError, ValidationError
from driftrank._logging import configure_logging, get_logger
from driftrank.config import ExperimentConfig
from driftrank.corpus import (
    BugReport,
    Granularity,
    Regime,
    SynthConfig,
    generate_synthetic_corpus,
    load_corpus,
    make_task,
    mine_repository,
    save_corpus,
    split_train_test,
)
from driftrank.embed import EmbedderConfig
from driftrank.env import EnvConfig, build_task_index

log = get_logger(__name__)

_GRANULARITY = {"file": Granularity.CHANGESET_FILE, "hunk": Granularity.HUNK}


class _Parser(argparse.ArgumentParser):
    """argparse that exits 1 (not 2) on usage errors, per the CLI contract."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _version() -> str:
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty"],
            capture_output=True,
            text=True,
            cwd=Path(__file__).parent,
        )
        if out.returncode == 0 and out.stdout.strip():
            return out.stdout.strip()
    except OSError:
        pass
    return f"driftrank-{driftrank.__version__}"


def _write_json(path: Path, payload: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _collect_overrides(pairs: list[str]) -> dict[str, str]:
    overrides: dict[str, str] = {}
    i = 0
    while i < len(pairs):
        item = pairs[i]
        if not item.startswith("--") or "." not in item:
            raise ValidationError(f"unrecognized argument {item!r} (expected --section.key value)")
        if "=" in item:
            dotted, _, value = item[2:].partition("=")
            overrides[dotted] = value
            i += 1
            continue
        if i + 1 >= len(pairs):
            raise ValidationError(f"override {item!r} is missing a value")
        overrides[item[2:]] = pairs[i + 1]
        i += 2
    return overrides


def _stable_overrides(args: argparse.Namespace) -> dict[str, str]:
    mapping = {
        "corpus": "paths.corpus",
        "out": "paths.out",
        "factor_model": "paths.factor_model",
        "granularity": "run.granularity",
        "learner": "run.learner",
        "regression": "run.regression",
        "seed": "run.seeds",
        "episodes": "train.episodes_per_task",
        "cycles": "train.cycles",
        "k": "env.k",
        "dim": "embed.dim",
    }
    out: dict[str, str] = {}
    for attr, dotted in mapping.items():
        value = getattr(args, attr, None)
        if value is not None:
            out[dotted] = str(value)
    return out


def _resolve(args: argparse.Namespace, extra: list[str]) -> ExperimentConfig:
    overrides = _stable_overrides(args)
    overrides.update(_collect_overrides(extra))
    return ExperimentConfig.resolve(getattr(args, "config", None), overrides)


def _load_corpus_checked(path: str) -> "driftrank.corpus.Corpus":
    if not path:
        raise ValidationError("no corpus path given (set --corpus or paths.corpus)")
    if not Path(path).exists():
        raise ValidationError(f"corpus file not found: {path}")
    return load_corpus(path)


def _tasks_for(corpus, granularity: Granularity, bug_ids: list[str]):
    return [
        make_task(corpus, Regime.STATIONARY, granularity, bug_ids),
        make_task(corpus, Regime.NON_STATIONARY, granularity, bug_ids),
    ]


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def _cmd_synth(args: argparse.Namespace, extra: list[str]) -> int:
    if extra:
        raise ValidationError(f"unrecognized arguments: {' '.join(extra)}")
    cfg = SynthConfig(
        n_bugs=args.bugs,
        n_files=args.files,
        vocab_size=args.vocab,
        signal_strength=args.signal,
        drift=args.drift,
    )
    corpus = generate_synthetic_corpus(cfg, seed=args.seed)
    save_corpus(corpus, args.out)
    print(f"wrote {args.out}: {len(corpus.bug_reports)} bugs, {len(corpus.code_units)} units")
    return 0


def _cmd_mine(args: argparse.Namespace, extra: list[str]) -> int:
    if extra:
        raise ValidationError(f"unrecognized arguments: {' '.join(extra)}")
    meta_path = Path(args.bugs)
    if not meta_path.exists():
        raise ValidationError(f"bug metadata file not found: {meta_path}")
    raw = json.loads(meta_path.read_text(encoding="utf-8"))
    bug_meta = [
        BugReport(
            id=rec["id"],
            title=rec.get("title", ""),
            description=rec.get("description", ""),
            report_date=datetime.fromisoformat(rec["report_date"].replace("Z", "+00:00")),
            fix_commit=rec["fix_commit"],
            # the real fix date is read from the repository during mining
            fix_date=datetime.fromisoformat(
                rec.get("fix_date", "9999-01-01T00:00:00+00:00").replace("Z", "+00:00")
            ),
            ground_truth_paths=frozenset(rec["ground_truth_paths"]),
        )
        for rec in raw
    ]
    corpus = mine_repository(args.repo, bug_meta)
    save_corpus(corpus, args.out)
    print(f"wrote {args.out}: {len(corpus.bug_reports)} bugs, {len(corpus.code_units)} units")
    return 0


def _factor_rows(corpus, granularity: Granularity, bug_ids: list[str]):
    rows, labels = [], []
    for bug_id in bug_ids:
        bug = corpus.bug(bug_id)
        for unit_id in corpus.links.get(bug_id, []):
            unit = corpus.unit(unit_id)
            if unit.granularity is not granularity:
                continue
            rows.append(factors.compute_factors(unit, corpus).as_array())
            labels.append(1.0 if unit.path in bug.ground_truth_paths else 0.0)
    return np.array(rows), np.array(labels)


def _cmd_train_factors(args: argparse.Namespace, extra: list[str]) -> int:
    cfg = _resolve(args, extra)
    corpus = _load_corpus_checked(cfg.get("paths", "corpus"))
    granularity = _GRANULARITY[cfg.get("run", "granularity")]
    train_ids, _ = split_train_test(corpus)
    X, y = _factor_rows(corpus, granularity, train_ids)
    if len(X) == 0:
        raise ValidationError("no factor rows: corpus has no units of this granularity")
    model = factors.select_features(X, y, cfg.selection_config(), factors.FACTOR_NAMES)
    model.to_json(args.out)
    kept = ", ".join(model.feature_names)
    print(f"wrote {args.out}: surviving features [{kept}] over {len(X)} rows")
    return 0


def _cmd_index(args: argparse.Namespace, extra: list[str]) -> int:
    cfg = _resolve(args, extra)
    corpus = _load_corpus_checked(cfg.get("paths", "corpus"))
    granularity = _GRANULARITY[cfg.get("run", "granularity")]
    regime = Regime(args.regime)
    bug_ids = [b.id for b in corpus.bug_reports]
    task = make_task(corpus, regime, granularity, bug_ids)
    k1, b = cfg.bm25_params()
    index = build_task_index(corpus, task, k1=k1, b=b)
    stats = {
        "n_docs": index.n_docs,
        "avg_doc_length": index.avg_doc_length,
        "vocabulary": len(index.postings),
        "k1": index.k1,
        "b": index.b,
    }
    _write_json(Path(args.out), stats)
    if args.dump:
        index.dump(args.dump)
    print(f"wrote {args.out}: {index.n_docs} docs, vocab {len(index.postings)}")
    return 0


def _cmd_train(args: argparse.Namespace, extra: list[str]) -> int:
    cfg = _resolve(args, extra)
    corpus = _load_corpus_checked(cfg.get("paths", "corpus"))
    granularity = _GRANULARITY[cfg.get("run", "granularity")]
    env_cfg = cfg.env_config()
    embedder_cfg = cfg.embedder_config()
    factor_model = None
    if env_cfg.use_regression_bonus:
        model_path = cfg.get("paths", "factor_model")
        if not model_path or not Path(model_path).exists():
            raise ValidationError(
                "regression bonus is on but paths.factor_model is missing; "
                "run train-factors first or pass --regression off"
            )
        factor_model = factors.LogisticModel.from_json(model_path)

    train_ids, _ = split_train_test(corpus)
    tasks = _tasks_for(corpus, granularity, train_ids)
    out_dir = Path(cfg.get("paths", "out"))
    out_dir.mkdir(parents=True, exist_ok=True)
    version = _version()

    for seed in cfg.seeds():
        train_cfg = cfg.train_config(seed)
        agent, tlog = learners.train_continual(
            corpus,
            tasks,
            train_cfg,
            env_cfg,
            embedder_cfg=embedder_cfg,
            factor_model=factor_model,
            hidden=cfg.hidden_layers(),
            bm25_params=cfg.bm25_params(),
            version=version,
        )
        tlog.config = cfg.as_dict()
        learners.save_agent(
            agent,
            out_dir / f"agent_seed{seed}.json",
            granularity=cfg.get("run", "granularity"),
            embed_dim=embedder_cfg.dim,
        )
        _write_json(out_dir / f"trainlog_seed{seed}.json", tlog.to_payload())
        _write_json(out_dir / f"timings_seed{seed}.json", tlog.timings_payload())
        print(f"seed {seed}: trained {tlog.episodes} episodes, wrote {out_dir}/agent_seed{seed}.json")
    return 0


def _cmd_evaluate(args: argparse.Namespace, extra: list[str]) -> int:
    cfg = _resolve(args, extra)
    corpus = _load_corpus_checked(cfg.get("paths", "corpus"))
    agent_path = Path(args.agent)
    if not agent_path.exists():
        raise ValidationError(f"agent checkpoint not found: {agent_path}")
    agent, meta = learners.load_agent(agent_path)
    granularity = _GRANULARITY[meta.get("granularity", cfg.get("run", "granularity"))]
    embedder_cfg = EmbedderConfig(dim=meta.get("embed_dim", int(cfg.get("embed", "dim"))))

    factor_model = None
    if agent.env_cfg.use_regression_bonus:
        model_path = cfg.get("paths", "factor_model")
        if not model_path or not Path(model_path).exists():
            raise ValidationError("agent was trained with the regression bonus; pass --factor-model")
        factor_model = factors.LogisticModel.from_json(model_path)

    train_log = None
    if args.trainlog:
        payload = json.loads(Path(args.trainlog).read_text(encoding="utf-8"))
        train_log = learners.TrainLog(
            task_names=payload["task_names"],
            phase_tasks=payload["phase_tasks"],
            returns=payload["returns"],
        )
    training_time = 0.0
    if args.timings:
        training_time = float(
            json.loads(Path(args.timings).read_text(encoding="utf-8"))["total_wall_clock_s"]
        )

    _, test_ids = split_train_test(corpus)
    out_dir = Path(cfg.get("paths", "out"))
    out_dir.mkdir(parents=True, exist_ok=True)
    for task in _tasks_for(corpus, granularity, test_ids):
        per_bug = out_dir / f"per_bug_{task.regime.value}.csv" if args.per_bug_csv else None
        report = evaluation.evaluate_agent(
            agent,
            corpus,
            task,
            embedder_cfg=embedder_cfg,
            factor_model=factor_model,
            bm25_params=cfg.bm25_params(),
            train_log=train_log,
            training_time_s=training_time,
            per_bug_csv=per_bug,
        )
        report_path = out_dir / f"report_{task.regime.value}.json"
        _write_json(report_path, report.to_payload())
        (out_dir / f"report_{task.regime.value}.txt").write_text(report.to_text() + "\n", encoding="utf-8")
        print(f"{task.regime.value}: MRR {report.mrr:.4f} MAP {report.map:.4f} -> {report_path}")
    return 0


def _cmd_report(args: argparse.Namespace, extra: list[str]) -> int:
    if extra:
        raise ValidationError(f"unrecognized arguments: {' '.join(extra)}")
    if not args.inputs:
        raise ValidationError("report needs at least one input file")
    rows = []
    for path in args.inputs:
        if not Path(path).exists():
            raise ValidationError(f"report input not found: {path}")
        rows.append(evaluation.load_report(path))
    fields = ("mrr", "map", "top1", "top5", "top10", "training_time_s")
    summary: dict[str, dict[str, float]] = {}
    for name in fields:
        values = np.array([float(r[name]) for r in rows])
        summary[name] = {
            "mean": float(values.mean()),
            "std": float(values.std(ddof=1)) if len(values) > 1 else 0.0,
            "n": len(values),
        }
    _write_json(Path(args.out), summary)
    width = max(len(f) for f in fields)
    for name in fields:
        s = summary[name]
        print(f"{name:<{width}}  {s['mean']:.4f} ± {s['std']:.4f}  (n={s['n']})")
    if args.csv:
        with open(args.csv, "w", encoding="utf-8") as fh:
            fh.write("metric,mean,std,n\n")
            for name in fields:
                s = summary[name]
                fh.write(f"{name},{s['mean']:.6f},{s['std']:.6f},{s['n']}\n")
    return 0


# ---------------------------------------------------------------------------
# argument wiring
# ---------------------------------------------------------------------------

def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="sectioned key=value config file")
    parser.add_argument("--corpus", help="corpus JSON path")
    parser.add_argument("--out", help="output path or directory")
    parser.add_argument("--granularity", choices=("file", "hunk"))
    parser.add_argument("--learner", choices=("clear", "ewc", "naive"))
    parser.add_argument("--regression", choices=("on", "off"))
    parser.add_argument("--seed", help="seed or comma-separated seed list")
    parser.add_argument("--episodes", type=int, help="episodes per task")
    parser.add_argument("--cycles", type=int)
    parser.add_argument("--k", type=int, help="candidate slots per episode")
    parser.add_argument("--dim", type=int, help="embedding dimension")
    parser.add_argument("--factor-model", dest="factor_model", help="logistic model JSON")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="driftrank", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[], help="generate a synthetic corpus")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--bugs", type=int, default=50)
    p.add_argument("--files", type=int, default=40)
    p.add_argument("--vocab", type=int, default=600)
    p.add_argument("--signal", type=float, default=0.9)
    p.add_argument("--drift", type=float, default=0.3)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("mine", help="mine a git repository into a corpus")
    p.add_argument("--repo", required=True)
    p.add_argument("--bugs", required=True, help="bug metadata JSON list")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_mine)

    p = sub.add_parser("train-factors", help="fit the pruned logistic factor model")
    _add_common(p)
    p.set_defaults(func=_cmd_train_factors, out_required=True)

    p = sub.add_parser("index", help="build a BM25 index and dump stats")
    _add_common(p)
    p.add_argument("--regime", choices=("stationary", "non_stationary"), default="stationary")
    p.add_argument("--dump", help="also dump the full index JSON here")
    p.set_defaults(func=_cmd_index, out_required=True)

    p = sub.add_parser("train", help="train one agent per seed")
    _add_common(p)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("evaluate", help="evaluate an agent on the test split")
    _add_common(p)
    p.add_argument("--agent", required=True, help="agent checkpoint JSON")
    p.add_argument("--trainlog", help="trainlog JSON (enables the forgetting column)")
    p.add_argument("--timings", help="timings sidecar JSON (fills training_time_s)")
    p.add_argument("--per-bug-csv", dest="per_bug_csv", action="store_true")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("report", help="aggregate reports to mean±std")
    p.add_argument("--inputs", nargs="+", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--csv")
    p.set_defaults(func=_cmd_report)

    return parser


def run_command(argv: list[str]) -> int:
    configure_logging()
    parser = build_parser()
    try:
        args, extra = parser.parse_known_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if getattr(args, "out_required", False) and not getattr(args, "out", None):
            raise ValidationError("--out is required for this subcommand")
        return args.func(args, extra)
    except (ValidationError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except DriftrankError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        log.exception("unhandled failure")
        print(f"internal error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    raise SystemExit(run_command(sys.argv[1:]))


if __name__ == "__main__":
    main()
