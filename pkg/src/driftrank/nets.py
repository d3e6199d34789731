"""Small actor-critic network with hand-written forward and backward passes.

A shared MLP trunk feeds a softmax policy head over the k candidate slots and
a scalar value head. Gradients are exact derivatives of a composite scalar
loss assembled from per-sample coefficients (value targets, policy-gradient
coefficients, entropy, and behavioral-cloning terms), validated against
finite differences in the test suite.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from driftrank import kernels
from driftrank._errors import ValidationError

MASKED_LOGIT = kernels.MASKED_LOGIT

_ACTIVATIONS = ("tanh", "relu")


@dataclass(frozen=True)
class NetConfig:
    input_dim: int
    n_actions: int
    hidden: tuple[int, ...] = (128, 64)
    activation: str = "tanh"
    init_seed: int = 0
    init_scale: float = 1.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if self.activation not in _ACTIVATIONS:
            raise ValidationError(f"activation must be one of {_ACTIVATIONS}")
        if any(h < 1 for h in self.hidden):
            raise ValidationError("hidden widths must be >= 1")
        if self.input_dim < 1 or self.n_actions < 1:
            raise ValidationError("input_dim and n_actions must be >= 1")

    @property
    def act_id(self) -> int:
        return 0 if self.activation == "tanh" else 1


class _Blocks:
    """Shared container for parameter-shaped data with a flat view."""

    __slots__ = ("cfg", "trunk_ws", "trunk_bs", "w_pi", "b_pi", "w_v", "b_v")

    def __init__(self, cfg, trunk_ws, trunk_bs, w_pi, b_pi, w_v, b_v):
        self.cfg = cfg
        self.trunk_ws = trunk_ws
        self.trunk_bs = trunk_bs
        self.w_pi = w_pi
        self.b_pi = b_pi
        self.w_v = w_v
        self.b_v = float(b_v)

    def _arrays(self) -> list[np.ndarray]:
        out: list[np.ndarray] = []
        for w, b in zip(self.trunk_ws, self.trunk_bs):
            out.extend((w, b))
        out.extend((self.w_pi, self.b_pi, self.w_v, np.array([self.b_v])))
        return out

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self._arrays()])

    @property
    def n_params(self) -> int:
        return sum(a.size for a in self._arrays())

    @classmethod
    def from_flat(cls, cfg: NetConfig, vec: np.ndarray) -> "_Blocks":
        shapes = _layer_shapes(cfg)
        total = sum(int(np.prod(s)) for s in shapes)
        if vec.shape != (total,):
            raise ValidationError(f"flat vector has shape {vec.shape}, expected ({total},)")
        parts = []
        offset = 0
        for shape in shapes:
            size = int(np.prod(shape))
            parts.append(vec[offset : offset + size].reshape(shape).copy())
            offset += size
        n_hidden = len(cfg.hidden)
        trunk_ws = [parts[2 * i] for i in range(n_hidden)]
        trunk_bs = [parts[2 * i + 1] for i in range(n_hidden)]
        w_pi, b_pi, w_v, b_v = parts[2 * n_hidden :]
        return cls(cfg, trunk_ws, trunk_bs, w_pi, b_pi, w_v, float(b_v[0]))

    def copy(self) -> "_Blocks":
        return type(self).from_flat(self.cfg, self.flat())


class ActorCriticParams(_Blocks):
    """All learnable weights: trunk, policy head, value head."""


class Gradients(_Blocks):
    """Same shapes as :class:`ActorCriticParams`."""


def _layer_shapes(cfg: NetConfig) -> list[tuple[int, ...]]:
    shapes: list[tuple[int, ...]] = []
    fan_in = cfg.input_dim
    for width in cfg.hidden:
        shapes.append((width, fan_in))
        shapes.append((width,))
        fan_in = width
    shapes.append((cfg.n_actions, fan_in))
    shapes.append((cfg.n_actions,))
    shapes.append((fan_in,))
    shapes.append((1,))
    return shapes


def init_params(cfg: NetConfig) -> ActorCriticParams:
    """Seeded uniform init scaled by init_scale/sqrt(fan_in); zero biases."""
    rng = np.random.default_rng(cfg.init_seed)
    trunk_ws, trunk_bs = [], []
    fan_in = cfg.input_dim
    for width in cfg.hidden:
        bound = cfg.init_scale / np.sqrt(fan_in)
        trunk_ws.append(rng.uniform(-bound, bound, size=(width, fan_in)))
        trunk_bs.append(np.zeros(width))
        fan_in = width
    bound = cfg.init_scale / np.sqrt(fan_in)
    w_pi = rng.uniform(-bound, bound, size=(cfg.n_actions, fan_in))
    b_pi = np.zeros(cfg.n_actions)
    w_v = rng.uniform(-bound, bound, size=fan_in)
    return ActorCriticParams(cfg, trunk_ws, trunk_bs, w_pi, b_pi, w_v, 0.0)


def _check_features(cfg: NetConfig, features: np.ndarray) -> np.ndarray:
    features = np.asarray(features, dtype=np.float64)
    if features.ndim == 1:
        features = features[None, :]
    if features.shape[1] != cfg.input_dim:
        raise ValidationError(f"features have dim {features.shape[1]}, expected {cfg.input_dim}")
    return features


def _check_mask(cfg: NetConfig, valid_mask: np.ndarray, n: int) -> np.ndarray:
    valid = np.asarray(valid_mask, dtype=bool)
    if valid.ndim == 1:
        valid = np.broadcast_to(valid, (n, cfg.n_actions))
    if valid.shape != (n, cfg.n_actions):
        raise ValidationError(f"mask has shape {valid.shape}, expected ({n}, {cfg.n_actions})")
    return valid


def _trunk_forward(params: ActorCriticParams, x: np.ndarray) -> tuple[list[np.ndarray], np.ndarray]:
    """Returns ([h_0 .. h_L], h_L) where h_0 is the input batch."""
    hs = [x]
    h = x
    tanh = params.cfg.activation == "tanh"
    for w, b in zip(params.trunk_ws, params.trunk_bs):
        z = h @ w.T + b
        h = np.tanh(z) if tanh else np.maximum(z, 0.0)
        hs.append(h)
    return hs, h


def _heads(params: ActorCriticParams, h: np.ndarray, valid: np.ndarray):
    logits = h @ params.w_pi.T + params.b_pi
    logits = np.where(valid, logits, MASKED_LOGIT)
    m = logits.max(axis=1, keepdims=True)
    log_probs = logits - (m + np.log(np.exp(logits - m).sum(axis=1, keepdims=True)))
    values = h @ params.w_v + params.b_v
    return logits, log_probs, values


def forward(params: ActorCriticParams, features: np.ndarray, valid_mask: np.ndarray):
    """(logits, log_probs, value) for one observation or a batch.

    Invalid slots carry logit -1e9; exp(log_probs) sums to 1 over the rest.
    """
    x = _check_features(params.cfg, features)
    valid = _check_mask(params.cfg, valid_mask, x.shape[0])
    _, h = _trunk_forward(params, x)
    logits, log_probs, values = _heads(params, h, valid)
    if np.asarray(features).ndim == 1:
        return logits[0], log_probs[0], float(values[0])
    return logits, log_probs, values


def policy_value(params: ActorCriticParams, features: np.ndarray, valid_mask: np.ndarray):
    """Hot path for rollouts: (log_probs, value) via the selected kernel."""
    valid = np.ascontiguousarray(np.asarray(valid_mask, dtype=np.uint8))
    return kernels.policy_value_single(
        params.trunk_ws,
        params.trunk_bs,
        params.w_pi,
        params.b_pi,
        params.w_v,
        params.b_v,
        np.ascontiguousarray(features, dtype=np.float64),
        valid,
        params.cfg.act_id,
    )


@dataclass
class LossSpec:
    """Per-sample coefficients of the composite training loss.

    The scalar loss, averaged over the batch, is::

        0.5*(V - value_target)^2            value regression
        - pg_coef * log pi(action)          policy gradient (coef held constant)
        + entropy_coef * sum pi log pi      negative entropy
        + clone_policy_coef * KL(mu || pi)  policy cloning to stored behavior
        + clone_value_coef * (V - behavior_value)^2
    """

    actions: np.ndarray
    value_targets: np.ndarray
    pg_coefs: np.ndarray
    entropy_coef: float = 0.0
    clone_policy_coefs: np.ndarray | None = None
    behavior_log_probs: np.ndarray | None = None
    clone_value_coefs: np.ndarray | None = None
    behavior_values: np.ndarray | None = None

    def _filled(self, n: int, k: int) -> "LossSpec":
        def vec(a, length):
            return np.zeros(length) if a is None else np.asarray(a, dtype=np.float64)

        return LossSpec(
            actions=np.asarray(self.actions, dtype=np.int64),
            value_targets=vec(self.value_targets, n),
            pg_coefs=vec(self.pg_coefs, n),
            entropy_coef=float(self.entropy_coef),
            clone_policy_coefs=vec(self.clone_policy_coefs, n),
            behavior_log_probs=(
                np.zeros((n, k)) if self.behavior_log_probs is None else np.asarray(self.behavior_log_probs)
            ),
            clone_value_coefs=vec(self.clone_value_coefs, n),
            behavior_values=vec(self.behavior_values, n),
        )


def composite_loss(
    params: ActorCriticParams,
    features: np.ndarray,
    valid_mask: np.ndarray,
    spec: LossSpec,
) -> float:
    """Scalar loss backward() differentiates; kept separate for gradient checks."""
    x = _check_features(params.cfg, features)
    n, k = x.shape[0], params.cfg.n_actions
    valid = _check_mask(params.cfg, valid_mask, n)
    spec = spec._filled(n, k)
    _, h = _trunk_forward(params, x)
    _, log_probs, values = _heads(params, h, valid)
    pi = np.exp(log_probs)

    idx = np.arange(n)
    loss = 0.5 * np.sum((values - spec.value_targets) ** 2)
    loss -= np.sum(spec.pg_coefs * log_probs[idx, spec.actions])
    loss += spec.entropy_coef * np.sum(np.where(valid, pi * log_probs, 0.0))
    mu = np.where(valid, np.exp(spec.behavior_log_probs), 0.0)
    kl = np.where(valid & (mu > 0.0), mu * (spec.behavior_log_probs - log_probs), 0.0).sum(axis=1)
    loss += np.sum(spec.clone_policy_coefs * kl)
    loss += np.sum(spec.clone_value_coefs * (values - spec.behavior_values) ** 2)
    return float(loss / n)


def backward(
    params: ActorCriticParams,
    features: np.ndarray,
    valid_mask: np.ndarray,
    spec: LossSpec,
) -> Gradients:
    """Exact gradients of :func:`composite_loss`, averaged over the batch."""
    x = _check_features(params.cfg, features)
    n, k = x.shape[0], params.cfg.n_actions
    valid = _check_mask(params.cfg, valid_mask, n)
    spec = spec._filled(n, k)
    if not np.isfinite(x).all():
        raise ValidationError("non-finite features")
    for name in ("value_targets", "pg_coefs", "clone_policy_coefs", "clone_value_coefs", "behavior_values"):
        if not np.isfinite(getattr(spec, name)).all():
            raise ValidationError(f"non-finite loss coefficients: {name}")

    hs, h = _trunk_forward(params, x)
    _, log_probs, values = _heads(params, h, valid)
    pi = np.exp(log_probs)

    idx = np.arange(n)
    d_values = (values - spec.value_targets) + 2.0 * spec.clone_value_coefs * (values - spec.behavior_values)

    onehot = np.zeros((n, k))
    onehot[idx, spec.actions] = 1.0
    d_logits = spec.pg_coefs[:, None] * (pi - onehot)
    neg_entropy = np.where(valid, pi * log_probs, 0.0).sum(axis=1, keepdims=True)
    d_logits += spec.entropy_coef * pi * (np.where(valid, log_probs, 0.0) - neg_entropy)
    mu = np.where(valid, np.exp(spec.behavior_log_probs), 0.0)
    d_logits += spec.clone_policy_coefs[:, None] * (pi * mu.sum(axis=1, keepdims=True) - mu)
    d_logits = np.where(valid, d_logits, 0.0)

    g_w_pi = d_logits.T @ h
    g_b_pi = d_logits.sum(axis=0)
    g_w_v = d_values @ h
    g_b_v = d_values.sum()

    d_h = d_logits @ params.w_pi + d_values[:, None] * params.w_v
    g_trunk_ws, g_trunk_bs = [], []
    tanh = params.cfg.activation == "tanh"
    for layer in range(len(params.trunk_ws) - 1, -1, -1):
        h_out, h_in = hs[layer + 1], hs[layer]
        d_z = d_h * (1.0 - h_out**2) if tanh else d_h * (h_out > 0.0)
        g_trunk_ws.append(d_z.T @ h_in)
        g_trunk_bs.append(d_z.sum(axis=0))
        d_h = d_z @ params.trunk_ws[layer]
    g_trunk_ws.reverse()
    g_trunk_bs.reverse()

    inv_n = 1.0 / n
    return Gradients(
        params.cfg,
        [g * inv_n for g in g_trunk_ws],
        [g * inv_n for g in g_trunk_bs],
        g_w_pi * inv_n,
        g_b_pi * inv_n,
        g_w_v * inv_n,
        g_b_v * inv_n,
    )


def logp_grad_sq_mean(
    params: ActorCriticParams,
    features: np.ndarray,
    actions: np.ndarray,
    valid_mask: np.ndarray,
) -> np.ndarray:
    """Mean over samples of the squared per-sample gradient of log pi(a|x).

    Used as the empirical diagonal Fisher. Per-sample weight gradients are
    outer products d_z (x) h, so their squares contract as d_z^2 @ h^2 without
    materializing anything per sample. The value head gets exact zeros.
    """
    x = _check_features(params.cfg, features)
    n, k = x.shape[0], params.cfg.n_actions
    valid = _check_mask(params.cfg, valid_mask, n)
    actions = np.asarray(actions, dtype=np.int64)

    hs, h = _trunk_forward(params, x)
    _, log_probs, _ = _heads(params, h, valid)
    pi = np.exp(log_probs)
    idx = np.arange(n)
    d_logits = -pi
    d_logits[idx, actions] += 1.0
    d_logits = np.where(valid, d_logits, 0.0)

    f_w_pi = (d_logits**2).T @ h**2
    f_b_pi = (d_logits**2).sum(axis=0)
    d_h = d_logits @ params.w_pi
    f_trunk_ws, f_trunk_bs = [], []
    tanh = params.cfg.activation == "tanh"
    for layer in range(len(params.trunk_ws) - 1, -1, -1):
        h_out, h_in = hs[layer + 1], hs[layer]
        d_z = d_h * (1.0 - h_out**2) if tanh else d_h * (h_out > 0.0)
        f_trunk_ws.append((d_z**2).T @ h_in**2)
        f_trunk_bs.append((d_z**2).sum(axis=0))
        d_h = d_z @ params.trunk_ws[layer]
    f_trunk_ws.reverse()
    f_trunk_bs.reverse()

    inv_n = 1.0 / n
    fisher = Gradients(
        params.cfg,
        [f * inv_n for f in f_trunk_ws],
        [f * inv_n for f in f_trunk_bs],
        f_w_pi * inv_n,
        f_b_pi * inv_n,
        np.zeros_like(params.w_v),
        0.0,
    )
    return fisher.flat()


def clip_by_global_norm(flat_grads: np.ndarray, max_norm: float) -> np.ndarray:
    norm = float(np.linalg.norm(flat_grads))
    if max_norm > 0.0 and norm > max_norm:
        return flat_grads * (max_norm / norm)
    return flat_grads


def apply_update(
    params: ActorCriticParams,
    grads: Gradients,
    lr: float,
    max_grad_norm: float = 0.0,
) -> ActorCriticParams:
    """Global-norm clipping followed by a plain SGD step."""
    if lr < 0.0:
        raise ValidationError(f"lr must be >= 0, got {lr}")
    g = clip_by_global_norm(grads.flat(), max_grad_norm)
    return ActorCriticParams.from_flat(params.cfg, params.flat() - lr * g)


@dataclass
class RmsPropState:
    """Optional RMSProp optimizer; SGD stays the default for verifiability."""

    decay: float = 0.99
    epsilon: float = 1e-5
    accumulator: np.ndarray | None = field(default=None, repr=False)

    def step(
        self,
        params: ActorCriticParams,
        grads: Gradients,
        lr: float,
        max_grad_norm: float = 0.0,
    ) -> ActorCriticParams:
        g = clip_by_global_norm(grads.flat(), max_grad_norm)
        if self.accumulator is None:
            self.accumulator = np.zeros_like(g)
        self.accumulator = self.decay * self.accumulator + (1.0 - self.decay) * g**2
        update = g / np.sqrt(self.accumulator + self.epsilon)
        return ActorCriticParams.from_flat(params.cfg, params.flat() - lr * update)


def save_checkpoint(params: ActorCriticParams, path: str | Path, extra: dict | None = None) -> None:
    """JSON checkpoint with a config echo; round-trips bit-exactly."""
    payload = {
        "config": {
            "input_dim": params.cfg.input_dim,
            "n_actions": params.cfg.n_actions,
            "hidden": list(params.cfg.hidden),
            "activation": params.cfg.activation,
            "init_seed": params.cfg.init_seed,
            "init_scale": params.cfg.init_scale,
        },
        "flat": params.flat().tolist(),
    }
    if extra:
        payload["extra"] = extra
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True), encoding="utf-8")


def load_checkpoint(path: str | Path) -> tuple[ActorCriticParams, dict]:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    cfg = NetConfig(
        input_dim=payload["config"]["input_dim"],
        n_actions=payload["config"]["n_actions"],
        hidden=tuple(payload["config"]["hidden"]),
        activation=payload["config"]["activation"],
        init_seed=payload["config"]["init_seed"],
        init_scale=payload["config"]["init_scale"],
    )
    params = ActorCriticParams.from_flat(cfg, np.asarray(payload["flat"], dtype=np.float64))
    return params, payload.get("extra", {})
