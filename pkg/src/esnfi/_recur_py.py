"""Pure numpy version of the hidden-state recursion kernel."""

import numpy as np


def recur_batch(weff, drive, h0):
    """Run ``h_l = tanh(weff @ h_{l-1} + drive[b, l])`` for every batch row.

    Same contract as the compiled kernel: ``drive`` is ``(B, L, n)``, ``h0``
    is ``(B, n)`` and the result stacks every visited state as ``(B, L, n)``.
    """
    weff = np.asarray(weff, dtype=np.float64)
    drive = np.asarray(drive, dtype=np.float64)
    h = np.array(h0, dtype=np.float64)
    B, L, n = drive.shape
    if weff.shape != (n, n):
        raise ValueError("weff must be n x n with n matching drive")
    if h.shape != (B, n):
        raise ValueError("h0 must have shape (B, n)")
    out = np.empty((B, L, n))
    wt = weff.T
    for l in range(L):
        h = np.tanh(h @ wt + drive[:, l, :])
        out[:, l, :] = h
    return out
