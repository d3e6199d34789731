# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled rollout hot kernel: fused single-observation policy/value forward."""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, log, tanh

cnp.import_array()

cdef double MASKED_LOGIT = -1e9


def policy_value_single(list trunk_ws, list trunk_bs,
                        double[:, ::1] w_pi, double[::1] b_pi,
                        double[::1] w_v, double b_v,
                        double[::1] x, unsigned char[::1] valid, int act_id):
    """Mirror of driftrank.kernels.pure.policy_value_single."""
    cdef Py_ssize_t li, i, j, rows, cols, k, hdim
    cdef double acc, m, total, lse, value
    cdef double[:, ::1] w
    cdef double[::1] b, h, out
    cdef cnp.ndarray out_arr, logits_arr

    h = x
    for li in range(len(trunk_ws)):
        w = trunk_ws[li]
        b = trunk_bs[li]
        rows = w.shape[0]
        cols = w.shape[1]
        out_arr = np.empty(rows, dtype=np.float64)
        out = out_arr
        for i in range(rows):
            acc = b[i]
            for j in range(cols):
                acc += w[i, j] * h[j]
            if act_id == 0:
                out[i] = tanh(acc)
            else:
                out[i] = acc if acc > 0.0 else 0.0
        h = out

    k = w_pi.shape[0]
    hdim = w_pi.shape[1]
    logits_arr = np.empty(k, dtype=np.float64)
    cdef double[::1] logits = logits_arr
    m = MASKED_LOGIT
    for i in range(k):
        if valid[i]:
            acc = b_pi[i]
            for j in range(hdim):
                acc += w_pi[i, j] * h[j]
            logits[i] = acc
        else:
            logits[i] = MASKED_LOGIT
        if logits[i] > m:
            m = logits[i]

    total = 0.0
    for i in range(k):
        total += exp(logits[i] - m)
    lse = m + log(total)
    for i in range(k):
        logits[i] = logits[i] - lse

    value = b_v
    for j in range(hdim):
        value += w_v[j] * h[j]
    return logits_arr, value
