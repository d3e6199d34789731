"""Continual learners over the ranking environment.

Three training regimes share one V-Trace actor-critic base:

* ``clear``  — updates on a mixture of new and replayed trajectory segments,
  with behavioral cloning (policy KL and value L2 to stored behavior) applied
  to the replayed part only;
* ``ewc``    — sequential training with a quadratic penalty anchoring
  parameters to each finished task phase, weighted by an empirical diagonal
  Fisher computed at the phase boundary;
* ``naive``  — plain sequential V-Trace, the forgetting baseline.

Tasks are visited cyclically; at every phase boundary the greedy-policy mean
return is probed on every task, which is what the forgetting metric consumes.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from driftrank import nets
from driftrank._errors import ValidationError
from driftrank._logging import get_logger
from driftrank.corpus.types import Corpus, TaskSpec
from driftrank.embed import Embedder, EmbedderConfig
from driftrank.env import (
    BugCase,
    EnvConfig,
    RankingEnv,
    build_task_index,
    make_bug_cases,
    valid_actions,
)
from driftrank.nets import ActorCriticParams, Gradients, LossSpec, NetConfig

log = get_logger(__name__)

LEARNERS = ("clear", "ewc", "naive")


@dataclass
class Transition:
    features: np.ndarray
    action: int
    reward: float
    behavior_log_probs: np.ndarray
    behavior_value: float
    valid_mask: np.ndarray
    done: bool


@dataclass
class Trajectory:
    """One episode segment plus what is needed to bootstrap past its end.

    ``bootstrap_features`` is None exactly when the last transition ended the
    episode; ``bootstrap_value`` is the behavior-time value of the bootstrap
    state (0 when terminal), used by the value-cloning term.
    """

    transitions: list[Transition]
    bootstrap_features: np.ndarray | None
    bootstrap_value: float

    def __len__(self) -> int:
        return len(self.transitions)


@dataclass(frozen=True)
class VTraceConfig:
    gamma: float = 0.99
    rho_bar: float = 1.0
    c_bar: float = 1.0

    def __post_init__(self) -> None:
        if not 0.0 < self.gamma <= 1.0:
            raise ValidationError(f"gamma must be in (0,1], got {self.gamma}")
        if self.rho_bar < 1.0 or self.c_bar < 1.0:
            raise ValidationError("rho_bar and c_bar must be >= 1")
        if self.rho_bar < self.c_bar:
            raise ValidationError("rho_bar must be >= c_bar")


def vtrace_targets(
    traj: Trajectory,
    current_values: np.ndarray,
    current_log_probs: np.ndarray,
    cfg: VTraceConfig,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Off-policy corrected value targets and policy-gradient advantages.

    ``current_values`` has length T+1 (a value per step plus the bootstrap);
    ``current_log_probs`` holds the current policy's log-probability of each
    taken action. Returns (v, rho, pg_adv), each of length T.
    """
    t_len = len(traj.transitions)
    current_values = np.asarray(current_values, dtype=np.float64)
    current_log_probs = np.asarray(current_log_probs, dtype=np.float64)
    if current_values.shape != (t_len + 1,):
        raise ValidationError(f"need {t_len + 1} values, got {current_values.shape}")
    if current_log_probs.shape != (t_len,):
        raise ValidationError(f"need {t_len} log-probs, got {current_log_probs.shape}")

    log_mu = np.array([tr.behavior_log_probs[tr.action] for tr in traj.transitions])
    log_ratio = current_log_probs - log_mu
    if not np.isfinite(log_ratio).all():
        raise ValidationError("non-finite importance log-ratios")
    ratio = np.exp(log_ratio)
    rho = np.minimum(cfg.rho_bar, ratio)
    c = np.minimum(cfg.c_bar, ratio)

    rewards = np.array([tr.reward for tr in traj.transitions])
    deltas = rho * (rewards + cfg.gamma * current_values[1:] - current_values[:-1])

    acc = 0.0
    v_minus_V = np.empty(t_len)
    for t in range(t_len - 1, -1, -1):
        acc = deltas[t] + cfg.gamma * c[t] * acc
        v_minus_V[t] = acc
    v = current_values[:-1] + v_minus_V

    v_next = np.append(v[1:], current_values[-1])
    pg_adv = rho * (rewards + cfg.gamma * v_next - current_values[:-1])
    return v, rho, pg_adv


class ReplayBuffer:
    """Reservoir-sampled trajectory store with a seeded sampler."""

    def __init__(self, capacity: int, seed: int = 0):
        if capacity < 1:
            raise ValidationError(f"capacity must be >= 1, got {capacity}")
        self.capacity = capacity
        self._rng = np.random.default_rng(seed)
        self._items: list[Trajectory] = []
        self._n_seen = 0

    def __len__(self) -> int:
        return len(self._items)

    def add(self, traj: Trajectory) -> None:
        self._n_seen += 1
        if len(self._items) < self.capacity:
            self._items.append(traj)
        else:
            j = int(self._rng.integers(0, self._n_seen))
            if j < self.capacity:
                self._items[j] = traj

    def sample(self, k: int) -> list[Trajectory]:
        if k < 1 or not self._items:
            return []
        k = min(k, len(self._items))
        idx = self._rng.choice(len(self._items), size=k, replace=False)
        return [self._items[int(i)] for i in idx]


@dataclass
class EwcState:
    """Anchors (params, Fisher diagonal) per finished task phase."""

    lam: float
    anchors: list[tuple[np.ndarray, np.ndarray]] = field(default_factory=list)

    def add_anchor(self, params_flat: np.ndarray, fisher_flat: np.ndarray) -> None:
        if params_flat.shape != fisher_flat.shape:
            raise ValidationError("anchor and Fisher shapes differ")
        if (fisher_flat < 0.0).any():
            raise ValidationError("Fisher entries must be non-negative")
        self.anchors.append((params_flat.copy(), fisher_flat.copy()))


def ewc_fisher(params: ActorCriticParams, probe_trajs: list[Trajectory]) -> np.ndarray:
    """Empirical diagonal Fisher: mean squared log-policy gradient over the
    probe transitions (flat layout matches ``params.flat()``)."""
    transitions = [tr for traj in probe_trajs for tr in traj.transitions]
    if not transitions:
        raise ValidationError("ewc_fisher needs a non-empty probe set")
    features = np.stack([tr.features for tr in transitions])
    actions = np.array([tr.action for tr in transitions])
    valid = np.stack([tr.valid_mask for tr in transitions])
    return nets.logp_grad_sq_mean(params, features, actions, valid)


def ewc_penalized_grads(
    base_grads: Gradients,
    params: ActorCriticParams,
    ewc: EwcState,
) -> Gradients:
    """base + sum over anchors of lam * F * (theta - theta_anchor)."""
    flat = base_grads.flat()
    theta = params.flat()
    for anchor, fisher in ewc.anchors:
        if anchor.shape != theta.shape:
            raise ValidationError("anchor shape does not match params")
        flat = flat + ewc.lam * fisher * (theta - anchor)
    return Gradients.from_flat(params.cfg, flat)


@dataclass(frozen=True)
class TrainConfig:
    episodes_per_task: int = 7500
    cycles: int = 2
    segment_length: int = 16
    batch_size: int = 16
    replay_ratio: float = 0.5
    clone_policy_coef: float = 0.01
    clone_value_coef: float = 0.005
    entropy_coef: float = 0.01
    learner: str = "clear"
    seed: int = 0
    lr: float = 1e-3
    max_grad_norm: float = 40.0
    optimizer: str = "sgd"
    rho_bar: float = 1.0
    c_bar: float = 1.0
    ewc_lambda: float = 100.0
    buffer_capacity: int = 5000
    probe_bugs: int = 8
    fisher_episodes: int = 8

    def __post_init__(self) -> None:
        if self.learner not in LEARNERS:
            raise ValidationError(f"learner must be one of {LEARNERS}")
        if self.episodes_per_task < 1 or self.cycles < 1:
            raise ValidationError("episodes_per_task and cycles must be >= 1")
        if not 0.0 <= self.replay_ratio <= 1.0:
            raise ValidationError(f"replay_ratio must be in [0,1], got {self.replay_ratio}")
        if self.optimizer not in ("sgd", "rmsprop"):
            raise ValidationError("optimizer must be sgd or rmsprop")
        if self.learner in ("ewc", "naive") and self.replay_ratio != 0.0:
            object.__setattr__(self, "replay_ratio", 0.0)


# ---------------------------------------------------------------------------
# updates
# ---------------------------------------------------------------------------

def _batch_arrays(trajs: list[tuple[Trajectory, bool]], cfg: TrainConfig, vcfg: VTraceConfig,
                  params: ActorCriticParams):
    """Assemble one flat sample batch (with V-Trace targets) from segments."""
    rows_x: list[np.ndarray] = []
    rows_valid: list[np.ndarray] = []
    for traj, _ in trajs:
        rows_x.extend(tr.features for tr in traj.transitions)
        rows_valid.extend(tr.valid_mask for tr in traj.transitions)
        if traj.bootstrap_features is not None:
            rows_x.append(traj.bootstrap_features)
            rows_valid.append(np.ones_like(traj.transitions[0].valid_mask))
    X = np.stack(rows_x)
    valid_all = np.stack(rows_valid)
    _, log_probs_all, values_all = nets.forward(params, X, valid_all)

    n_rows = sum(len(t) for t, _ in trajs)
    actions = np.empty(n_rows, dtype=np.int64)
    value_targets = np.empty(n_rows)
    pg_coefs = np.empty(n_rows)
    clone_p = np.zeros(n_rows)
    clone_v = np.zeros(n_rows)
    behavior_values = np.zeros(n_rows)
    behavior_lp = np.zeros((n_rows, params.cfg.n_actions))
    keep = np.zeros(len(X), dtype=bool)

    offset = 0
    out = 0
    for traj, replayed in trajs:
        t_len = len(traj)
        has_boot = traj.bootstrap_features is not None
        span = slice(offset, offset + t_len)
        values = values_all[offset : offset + t_len + (1 if has_boot else 0)]
        if has_boot:
            cur_values = values
        else:
            cur_values = np.append(values, 0.0)
        acts = np.array([tr.action for tr in traj.transitions])
        cur_lp = log_probs_all[span][np.arange(t_len), acts]
        v, _rho, pg_adv = vtrace_targets(traj, cur_values, cur_lp, vcfg)

        sl = slice(out, out + t_len)
        actions[sl] = acts
        value_targets[sl] = v
        pg_coefs[sl] = pg_adv
        behavior_values[sl] = [tr.behavior_value for tr in traj.transitions]
        behavior_lp[sl] = [tr.behavior_log_probs for tr in traj.transitions]
        if replayed:
            clone_p[sl] = cfg.clone_policy_coef
            clone_v[sl] = cfg.clone_value_coef
        keep[offset : offset + t_len] = True
        offset += t_len + (1 if has_boot else 0)
        out += t_len

    spec = LossSpec(
        actions=actions,
        value_targets=value_targets,
        pg_coefs=pg_coefs,
        entropy_coef=cfg.entropy_coef,
        clone_policy_coefs=clone_p,
        behavior_log_probs=behavior_lp,
        clone_value_coefs=clone_v,
        behavior_values=behavior_values,
    )
    features = X[keep]
    valid = valid_all[keep]
    stats = _loss_stats(log_probs_all[keep], values_all[keep], valid, spec)
    return features, valid, spec, stats


def _loss_stats(log_probs, values, valid, spec: LossSpec) -> dict:
    n = len(values)
    idx = np.arange(n)
    pi = np.exp(log_probs)
    entropy = -np.where(valid, pi * log_probs, 0.0).sum(axis=1)
    mu = np.where(valid, np.exp(spec.behavior_log_probs), 0.0)
    kl = np.where(valid & (mu > 0.0), mu * (spec.behavior_log_probs - log_probs), 0.0).sum(axis=1)
    return {
        "value_loss": float(np.mean(0.5 * (values - spec.value_targets) ** 2)),
        "pg_loss": float(-np.mean(spec.pg_coefs * log_probs[idx, spec.actions])),
        "entropy": float(np.mean(entropy)),
        "clone_kl": float(np.mean(spec.clone_policy_coefs * kl)),
        "n_samples": n,
    }


def _apply(params, grads, cfg: TrainConfig, optimizer) -> ActorCriticParams:
    if optimizer is not None:
        return optimizer.step(params, grads, cfg.lr, cfg.max_grad_norm)
    return nets.apply_update(params, grads, cfg.lr, cfg.max_grad_norm)


def vtrace_update(
    params: ActorCriticParams,
    trajs: list[Trajectory],
    cfg: TrainConfig,
    vcfg: VTraceConfig,
    ewc: EwcState | None = None,
    optimizer=None,
) -> tuple[ActorCriticParams, dict]:
    """One V-Trace actor-critic step on new segments only (ewc/naive path)."""
    if not trajs:
        raise ValidationError("vtrace_update needs at least one trajectory")
    features, valid, spec, stats = _batch_arrays([(t, False) for t in trajs], cfg, vcfg, params)
    grads = nets.backward(params, features, valid, spec)
    if ewc is not None and ewc.anchors:
        grads = ewc_penalized_grads(grads, params, ewc)
    return _apply(params, grads, cfg, optimizer), stats


def clear_update(
    params: ActorCriticParams,
    new_trajs: list[Trajectory],
    buffer: ReplayBuffer,
    cfg: TrainConfig,
    vcfg: VTraceConfig,
    optimizer=None,
) -> tuple[ActorCriticParams, dict]:
    """One mixed new/replay update; new trajectories enter the buffer after.

    The batch takes ceil((1-replay_ratio)*B) new and floor(replay_ratio*B)
    replayed segments. V-Trace targets are recomputed under the current
    policy for both parts; the cloning terms apply to replayed samples only.
    An empty buffer yields an all-new warmup batch.
    """
    if not new_trajs:
        raise ValidationError("clear_update needs at least one new trajectory")
    n_new = math.ceil((1.0 - cfg.replay_ratio) * cfg.batch_size)
    n_replay = math.floor(cfg.replay_ratio * cfg.batch_size)
    batch: list[tuple[Trajectory, bool]] = [(t, False) for t in new_trajs[:n_new]]
    if n_replay > 0:
        replayed = buffer.sample(n_replay)
        if not replayed:
            log.debug("replay buffer empty; all-new warmup batch")
        batch.extend((t, True) for t in replayed)

    features, valid, spec, stats = _batch_arrays(batch, cfg, vcfg, params)
    grads = nets.backward(params, features, valid, spec)
    new_params = _apply(params, grads, cfg, optimizer)
    for traj in new_trajs:
        buffer.add(traj)
    stats["n_new"] = min(len(new_trajs), n_new)
    stats["n_replay"] = len(batch) - stats["n_new"]
    return new_params, stats


# ---------------------------------------------------------------------------
# rollouts
# ---------------------------------------------------------------------------

def run_episode(
    env: RankingEnv,
    case: BugCase,
    params: ActorCriticParams,
    rng: np.random.Generator,
    segment_length: int,
) -> tuple[list[Trajectory], float, int]:
    """Sample one episode from the current policy and cut it into segments."""
    obs = env.reset(case)
    feats: list[np.ndarray] = []
    acts: list[int] = []
    rewards: list[float] = []
    lps: list[np.ndarray] = []
    vals: list[float] = []
    valids: list[np.ndarray] = []
    done = False
    while not done:
        valid = valid_actions(obs, env.cfg.allow_reselect)
        x = obs.features()
        log_probs, value = nets.policy_value(params, x, valid)
        probs = np.exp(log_probs)
        probs /= probs.sum()
        action = int(rng.choice(len(probs), p=probs))
        result = env.step(obs, action)
        feats.append(x)
        acts.append(action)
        rewards.append(result.reward)
        lps.append(log_probs)
        vals.append(value)
        valids.append(valid)
        obs = result.observation
        done = result.done

    t_total = len(acts)
    trajs: list[Trajectory] = []
    for start in range(0, t_total, segment_length):
        end = min(start + segment_length, t_total)
        transitions = [
            Transition(
                features=feats[i],
                action=acts[i],
                reward=rewards[i],
                behavior_log_probs=lps[i],
                behavior_value=vals[i],
                valid_mask=valids[i],
                done=(i == t_total - 1),
            )
            for i in range(start, end)
        ]
        if end < t_total:
            boot_feats: np.ndarray | None = feats[end]
            boot_value = vals[end]
        else:
            boot_feats = None
            boot_value = 0.0
        trajs.append(Trajectory(transitions=transitions, bootstrap_features=boot_feats, bootstrap_value=boot_value))
    return trajs, float(sum(rewards)), t_total


def greedy_episode(
    env: RankingEnv,
    case: BugCase,
    params: ActorCriticParams,
) -> tuple[list[str], float]:
    """Deterministic argmax rollout with re-selection disabled.

    Returns the ranked unit ids (a permutation of the live slate) and the
    total reward under the environment's reward function.
    """
    obs = env.reset(case)
    total = 0.0
    ranked_ids: list[str] = []
    while len(obs.ranked) < obs.n_live:
        valid = valid_actions(obs, allow_reselect=False)
        log_probs, _ = nets.policy_value(params, obs.features(), valid)
        action = int(np.argmax(np.where(valid, log_probs, -np.inf)))
        result = env.step(obs, action)
        unit_id = obs.slot_unit_ids[action]
        if unit_id is not None:
            ranked_ids.append(unit_id)
        total += result.reward
        obs = result.observation
    return ranked_ids, total


# ---------------------------------------------------------------------------
# the cyclical training loop
# ---------------------------------------------------------------------------

@dataclass
class TrainLog:
    task_names: list[str]
    phase_tasks: list[int] = field(default_factory=list)
    returns: list[list[float]] = field(default_factory=list)  # [task][phase]
    phase_losses: list[dict] = field(default_factory=list)
    phase_mean_train_return: list[float] = field(default_factory=list)
    episodes: int = 0
    env_steps: int = 0
    seed: int = 0
    version: str = ""
    config: dict = field(default_factory=dict)
    wall_clock_s: list[float] = field(default_factory=list, compare=False)

    def to_payload(self) -> dict:
        """Deterministic content only; wall-clock lives in the timings sidecar."""
        return {
            "task_names": self.task_names,
            "phase_tasks": self.phase_tasks,
            "returns": self.returns,
            "phase_losses": self.phase_losses,
            "phase_mean_train_return": self.phase_mean_train_return,
            "episodes": self.episodes,
            "env_steps": self.env_steps,
            "seed": self.seed,
            "version": self.version,
            "config": self.config,
        }

    def timings_payload(self) -> dict:
        return {
            "phase_wall_clock_s": self.wall_clock_s,
            "total_wall_clock_s": float(sum(self.wall_clock_s)),
        }


@dataclass
class TrainedAgent:
    params: ActorCriticParams
    env_cfg: EnvConfig
    learner: str
    ewc_state: EwcState | None = None
    buffer_meta: dict = field(default_factory=dict)


def save_agent(agent: TrainedAgent, path, granularity: str = "file", embed_dim: int = 32) -> None:
    """Checkpoint = nets format plus learner/env/EWC/buffer metadata."""
    extra = {
        "learner": agent.learner,
        "granularity": granularity,
        "embed_dim": embed_dim,
        "env": {
            "k": agent.env_cfg.k,
            "reward_scale": agent.env_cfg.reward_scale,
            "gamma": agent.env_cfg.gamma,
            "max_steps": agent.env_cfg.max_steps,
            "allow_reselect": agent.env_cfg.allow_reselect,
            "use_regression_bonus": agent.env_cfg.use_regression_bonus,
        },
        "buffer": agent.buffer_meta,
        "ewc": None,
    }
    if agent.ewc_state is not None:
        extra["ewc"] = {
            "lambda": agent.ewc_state.lam,
            "anchors": [
                [anchor.tolist(), fisher.tolist()] for anchor, fisher in agent.ewc_state.anchors
            ],
        }
    nets.save_checkpoint(agent.params, path, extra=extra)


def load_agent(path) -> tuple[TrainedAgent, dict]:
    params, extra = nets.load_checkpoint(path)
    env_raw = extra["env"]
    env_cfg = EnvConfig(
        k=env_raw["k"],
        reward_scale=env_raw["reward_scale"],
        gamma=env_raw["gamma"],
        max_steps=env_raw["max_steps"],
        allow_reselect=env_raw["allow_reselect"],
        use_regression_bonus=env_raw["use_regression_bonus"],
    )
    ewc = None
    if extra.get("ewc"):
        ewc = EwcState(lam=extra["ewc"]["lambda"])
        for anchor, fisher in extra["ewc"]["anchors"]:
            ewc.add_anchor(np.asarray(anchor), np.asarray(fisher))
    agent = TrainedAgent(
        params=params,
        env_cfg=env_cfg,
        learner=extra["learner"],
        ewc_state=ewc,
        buffer_meta=extra.get("buffer", {}),
    )
    return agent, extra


def probe_return(env: RankingEnv, cases: list[BugCase], params: ActorCriticParams) -> float:
    if not cases:
        return 0.0
    return float(np.mean([greedy_episode(env, c, params)[1] for c in cases]))


def train_continual(
    corpus: Corpus,
    tasks: list[TaskSpec],
    cfg: TrainConfig,
    env_cfg: EnvConfig,
    net_cfg: NetConfig | None = None,
    embedder_cfg: EmbedderConfig | None = None,
    factor_model=None,
    hidden: tuple[int, ...] = (128, 64),
    bm25_params: tuple[float, float] = (1.2, 0.75),
    version: str = "",
) -> tuple[TrainedAgent, TrainLog]:
    """Cyclical continual training across the given tasks.

    Bugs inside a task are visited round-robin; each episode triggers one
    update. At every phase boundary the greedy mean return is probed on every
    task's probe set, and EWC additionally anchors (params, Fisher) for the
    phase it just finished. Deterministic for a fixed (cfg.seed, config).
    """
    if len(tasks) < 1:
        raise ValidationError("need at least one task")
    embedder = Embedder(embedder_cfg or EmbedderConfig())

    envs: list[RankingEnv] = []
    cases_per_task: list[list[BugCase]] = []
    run_env_cfg = env_cfg
    for task in tasks:
        index = build_task_index(corpus, task, k1=bm25_params[0], b=bm25_params[1])
        env = RankingEnv(run_env_cfg, corpus, index, embedder, factor_model=factor_model)
        cases = []
        for case in make_bug_cases(corpus, task):
            try:
                env.reset(case)
            except ValidationError:
                log.info("task %s: bug %s has no retrievable candidates, skipped", task.name, case.bug.id)
                continue
            cases.append(case)
        if not cases:
            raise ValidationError(f"task {task.name} has no usable bugs")
        envs.append(env)
        cases_per_task.append(cases)

    dim = embedder.cfg.dim
    input_dim = run_env_cfg.k * 2 * dim + run_env_cfg.k + 1
    if net_cfg is None:
        net_cfg = NetConfig(
            input_dim=input_dim, n_actions=run_env_cfg.k, hidden=hidden, init_seed=cfg.seed
        )
    elif net_cfg.input_dim != input_dim or net_cfg.n_actions != run_env_cfg.k:
        raise ValidationError(
            f"net config expects input_dim={input_dim}, n_actions={run_env_cfg.k}"
        )

    params = nets.init_params(net_cfg)
    rng = np.random.default_rng(cfg.seed)
    buffer = ReplayBuffer(cfg.buffer_capacity, seed=cfg.seed + 1)
    vcfg = VTraceConfig(gamma=run_env_cfg.gamma, rho_bar=cfg.rho_bar, c_bar=cfg.c_bar)
    ewc = EwcState(lam=cfg.ewc_lambda) if cfg.learner == "ewc" else None
    optimizer = nets.RmsPropState() if cfg.optimizer == "rmsprop" else None

    tlog = TrainLog(
        task_names=[t.name for t in tasks],
        returns=[[] for _ in tasks],
        seed=cfg.seed,
        version=version,
    )
    probe_sets = [cases[: cfg.probe_bugs] for cases in cases_per_task]

    for cycle in range(cfg.cycles):
        for ti, task in enumerate(tasks):
            t0 = time.perf_counter()
            env, cases = envs[ti], cases_per_task[ti]
            loss_acc: dict[str, float] = {}
            return_acc = 0.0
            for episode in range(cfg.episodes_per_task):
                case = cases[episode % len(cases)]
                trajs, ep_return, steps = run_episode(env, case, params, rng, cfg.segment_length)
                tlog.episodes += 1
                tlog.env_steps += steps
                return_acc += ep_return
                if cfg.learner == "clear":
                    params, stats = clear_update(params, trajs, buffer, cfg, vcfg, optimizer)
                else:
                    params, stats = vtrace_update(params, trajs, cfg, vcfg, ewc=ewc, optimizer=optimizer)
                for key in ("value_loss", "pg_loss", "entropy", "clone_kl"):
                    loss_acc[key] = loss_acc.get(key, 0.0) + stats[key]

            if ewc is not None:
                probe_trajs: list[Trajectory] = []
                for episode in range(cfg.fisher_episodes):
                    case = cases[episode % len(cases)]
                    trajs, _, _ = run_episode(env, case, params, rng, cfg.segment_length)
                    probe_trajs.extend(trajs)
                ewc.add_anchor(params.flat(), ewc_fisher(params, probe_trajs))

            tlog.phase_tasks.append(ti)
            for tj in range(len(tasks)):
                tlog.returns[tj].append(probe_return(envs[tj], probe_sets[tj], params))
            tlog.phase_losses.append(
                {k: v / cfg.episodes_per_task for k, v in sorted(loss_acc.items())}
            )
            tlog.phase_mean_train_return.append(return_acc / cfg.episodes_per_task)
            tlog.wall_clock_s.append(time.perf_counter() - t0)
            log.info(
                "cycle %d task %s done: mean train return %.3f",
                cycle,
                task.name,
                tlog.phase_mean_train_return[-1],
            )

    agent = TrainedAgent(
        params=params,
        env_cfg=run_env_cfg,
        learner=cfg.learner,
        ewc_state=ewc,
        buffer_meta={"capacity": buffer.capacity, "size": len(buffer)},
    )
    return agent, tlog
