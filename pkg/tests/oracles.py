"""Independent reference implementations the fast kernels are checked against."""

from __future__ import annotations

import numpy as np


def conv2d_direct(x, w, b, stride=1, pad=0):
    """Six-nested-loop cross-correlation, 64-bit accumulation."""
    x = np.asarray(x, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    n, c_in, h, win = x.shape
    c_out, _, k, _ = w.shape
    if pad:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    ho = (h + 2 * pad - k) // stride + 1
    wo = (win + 2 * pad - k) // stride + 1
    out = np.zeros((n, c_out, ho, wo))
    for ni in range(n):
        for oc in range(c_out):
            for i in range(ho):
                for j in range(wo):
                    acc = 0.0
                    for ic in range(c_in):
                        for kh in range(k):
                            for kw in range(k):
                                acc += (
                                    x[ni, ic, i * stride + kh, j * stride + kw]
                                    * w[oc, ic, kh, kw]
                                )
                    out[ni, oc, i, j] = acc + b[oc]
    return out
