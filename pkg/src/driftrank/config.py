"""Experiment configuration: a flat sectioned key=value file, overridable by
``--section.key value`` command-line flags (flags win)."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from driftrank._errors import ValidationError
from driftrank.embed import EmbedderConfig
from driftrank.env import EnvConfig
from driftrank.factors import SelectionConfig
from driftrank.learners import TrainConfig

_DEFAULTS: dict[str, dict[str, str]] = {
    "paths": {"corpus": "", "out": "runs", "factor_model": "", "external_embeddings": ""},
    "run": {"granularity": "file", "learner": "clear", "regression": "off", "seeds": "0"},
    "env": {
        "k": "31",
        "reward_scale": "3.0",
        "gamma": "0.99",
        "max_steps": "",
        "allow_reselect": "true",
    },
    "net": {"hidden": "128,64", "activation": "tanh", "init_scale": "1.0"},
    "train": {
        "episodes_per_task": "500",
        "cycles": "2",
        "segment_length": "16",
        "batch_size": "16",
        "replay_ratio": "0.5",
        "clone_policy_coef": "0.01",
        "clone_value_coef": "0.005",
        "entropy_coef": "0.01",
        "lr": "0.001",
        "max_grad_norm": "40.0",
        "optimizer": "sgd",
        "rho_bar": "1.0",
        "c_bar": "1.0",
        "ewc_lambda": "100.0",
        "buffer_capacity": "5000",
        "probe_bugs": "8",
        "fisher_episodes": "8",
    },
    "embed": {"dim": "32"},
    "bm25": {"k1": "1.2", "b": "0.75", "include_title": "false"},
    "selection": {"p_threshold": "0.05", "vif_max": "2.5", "standardize": "true"},
}


def parse_keyfile(path: str | Path) -> dict[str, dict[str, str]]:
    """Parse ``[section]`` / ``key = value`` lines; '#' starts a comment."""
    sections: dict[str, dict[str, str]] = {}
    current: str | None = None
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1].strip()
            sections.setdefault(current, {})
            continue
        if "=" not in line:
            raise ValidationError(f"{path}: line {lineno}: expected key = value, got {raw!r}")
        if current is None:
            raise ValidationError(f"{path}: line {lineno}: key outside any [section]")
        key, _, value = line.partition("=")
        sections[current][key.strip()] = value.strip()
    return sections


def _as_bool(value: str, where: str) -> bool:
    lowered = value.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValidationError(f"{where}: expected a boolean, got {value!r}")


@dataclass
class ExperimentConfig:
    """Fully resolved configuration for one experiment run."""

    sections: dict[str, dict[str, str]] = field(default_factory=dict)

    @classmethod
    def resolve(
        cls,
        config_path: str | Path | None = None,
        overrides: dict[str, str] | None = None,
    ) -> "ExperimentConfig":
        """defaults < config file < --section.key overrides."""
        merged = {name: dict(values) for name, values in _DEFAULTS.items()}
        if config_path:
            if not Path(config_path).exists():
                raise ValidationError(f"config file not found: {config_path}")
            for name, values in parse_keyfile(config_path).items():
                merged.setdefault(name, {}).update(values)
        for dotted, value in (overrides or {}).items():
            if "." not in dotted:
                raise ValidationError(f"override {dotted!r} must look like section.key")
            section, _, key = dotted.partition(".")
            merged.setdefault(section, {})[key] = value
        return cls(sections=merged)

    def get(self, section: str, key: str) -> str:
        try:
            return self.sections[section][key]
        except KeyError:
            raise ValidationError(f"missing config key {section}.{key}") from None

    # -- typed views -----------------------------------------------------

    def env_config(self) -> EnvConfig:
        max_steps = self.get("env", "max_steps")
        return EnvConfig(
            k=int(self.get("env", "k")),
            reward_scale=float(self.get("env", "reward_scale")),
            gamma=float(self.get("env", "gamma")),
            max_steps=int(max_steps) if max_steps else None,
            allow_reselect=_as_bool(self.get("env", "allow_reselect"), "env.allow_reselect"),
            use_regression_bonus=self.get("run", "regression").lower() == "on",
        )

    def train_config(self, seed: int) -> TrainConfig:
        t = self.sections["train"]
        return TrainConfig(
            episodes_per_task=int(t["episodes_per_task"]),
            cycles=int(t["cycles"]),
            segment_length=int(t["segment_length"]),
            batch_size=int(t["batch_size"]),
            replay_ratio=float(t["replay_ratio"]),
            clone_policy_coef=float(t["clone_policy_coef"]),
            clone_value_coef=float(t["clone_value_coef"]),
            entropy_coef=float(t["entropy_coef"]),
            learner=self.get("run", "learner"),
            seed=seed,
            lr=float(t["lr"]),
            max_grad_norm=float(t["max_grad_norm"]),
            optimizer=t["optimizer"],
            rho_bar=float(t["rho_bar"]),
            c_bar=float(t["c_bar"]),
            ewc_lambda=float(t["ewc_lambda"]),
            buffer_capacity=int(t["buffer_capacity"]),
            probe_bugs=int(t["probe_bugs"]),
            fisher_episodes=int(t["fisher_episodes"]),
        )

    def embedder_config(self) -> EmbedderConfig:
        external = self.sections["paths"].get("external_embeddings", "")
        return EmbedderConfig(
            dim=int(self.get("embed", "dim")),
            mode="external" if external else "hashed_tfidf",
            external_path=external or None,
        )

    def selection_config(self) -> SelectionConfig:
        return SelectionConfig(
            p_threshold=float(self.get("selection", "p_threshold")),
            vif_max=float(self.get("selection", "vif_max")),
            standardize=_as_bool(self.get("selection", "standardize"), "selection.standardize"),
        )

    def hidden_layers(self) -> tuple[int, ...]:
        raw = self.get("net", "hidden").strip()
        if not raw:
            return ()
        return tuple(int(part) for part in raw.split(",") if part.strip())

    def bm25_params(self) -> tuple[float, float]:
        return float(self.get("bm25", "k1")), float(self.get("bm25", "b"))

    def seeds(self) -> list[int]:
        raw = self.get("run", "seeds")
        seeds = [int(part) for part in raw.split(",") if part.strip()]
        if not seeds:
            raise ValidationError("run.seeds must name at least one seed")
        return seeds

    def as_dict(self) -> dict:
        return {name: dict(values) for name, values in sorted(self.sections.items())}
