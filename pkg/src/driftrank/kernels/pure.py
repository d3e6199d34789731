"""Pure numpy implementation of the rollout hot kernel."""

from __future__ import annotations

import numpy as np

MASKED_LOGIT = -1e9


def policy_value_single(trunk_ws, trunk_bs, w_pi, b_pi, w_v, b_v, x, valid, act_id):
    """Fused policy/value forward pass for one observation.

    ``valid`` is uint8 (1 = selectable); invalid slots get logit -1e9 before
    the log-softmax. ``act_id``: 0 = tanh, 1 = relu.
    """
    h = x
    for w, b in zip(trunk_ws, trunk_bs):
        z = w @ h + b
        h = np.tanh(z) if act_id == 0 else np.maximum(z, 0.0)
    logits = w_pi @ h + b_pi
    logits[valid == 0] = MASKED_LOGIT
    m = logits.max()
    log_probs = logits - (m + np.log(np.exp(logits - m).sum()))
    value = float(w_v @ h + b_v)
    return log_probs, value
