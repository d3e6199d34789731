"""Hot-kernel backend selection.

The compiled Cython kernel is preferred when its extension built; otherwise
the numpy fallback is used. Set CLB_KERNELS=pure to force the fallback (e.g.
to benchmark or to debug a suspected kernel discrepancy).
"""

from __future__ import annotations

import importlib
import os

from driftrank.kernels import pure as _pure

MASKED_LOGIT = _pure.MASKED_LOGIT

_fast = None
if os.environ.get("CLB_KERNELS", "").lower() != "pure":
    try:
        _fast = importlib.import_module("driftrank.kernels._fast")
    except ImportError:
        _fast = None

if _fast is not None:
    BACKEND = "cython"
    policy_value_single = _fast.policy_value_single
else:
    BACKEND = "pure"
    policy_value_single = _pure.policy_value_single


def available_backends() -> dict[str, object]:
    """Name -> policy_value_single implementation, for tests and benchmarks."""
    backends: dict[str, object] = {"pure": _pure.policy_value_single}
    if _fast is not None:
        backends["cython"] = _fast.policy_value_single
    return backends
