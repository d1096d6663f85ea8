"""Compiled per-path account recursion.

One pass over a chunk of normals evolves every account and reduces each path
to the handful of numbers the estimators need, so full paths are never held
in memory.
"""

import math

import numba as nb
import numpy as np


@nb.njit(cache=True, nogil=True)
def run_accounts(xi, w0, drift, vol, gdt, fee_mult, disc, rec_steps, w_rec, fee_rec, out):
    """Evolve accounts ``W_{k+1} = max(0, W_k R_k - G dt)`` for each row of ``xi``.

    A single-row ``xi`` is shared by every path (deterministic market).

    ``out`` columns: terminal value, trigger step (-1 if none), shortfall the
    guarantee pays at the trigger step, discounted fees up to the trigger.
    ``w_rec``/``fee_rec`` receive the account value and cumulative discounted
    fees at grid steps ``rec_steps`` (sorted, may include the final step).
    """
    m = out.shape[0]
    n = xi.shape[1]
    nrec = rec_steps.shape[0]
    shared = xi.shape[0] == 1
    for j in range(m):
        row = 0 if shared else j
        w = w0
        fee = 0.0
        trig = -1
        short = 0.0
        ri = 0
        for k in range(n):
            while ri < nrec and rec_steps[ri] == k:
                w_rec[j, ri] = w
                fee_rec[j, ri] = fee
                ri += 1
            x = w * math.exp(drift + vol * xi[row, k])
            fee += x * fee_mult * disc[k + 1]
            if x > gdt:
                w = x - gdt
            else:
                short = gdt - x
                w = 0.0
                trig = k + 1
                break
        while ri < nrec:
            w_rec[j, ri] = w
            fee_rec[j, ri] = fee
            ri += 1
        out[j, 0] = w
        out[j, 1] = trig
        out[j, 2] = short
        out[j, 3] = fee


@nb.njit(cache=True, nogil=True)
def account_paths(xi, w0, drift, vol, gdt, fee_mult, w_out):
    """Full account trajectories, ``w_out`` shaped ``(paths, steps + 1)``."""
    m = w_out.shape[0]
    n = xi.shape[1]
    shared = xi.shape[0] == 1
    for j in range(m):
        row = 0 if shared else j
        w = w0
        w_out[j, 0] = w
        for k in range(n):
            if w > 0.0:
                x = w * math.exp(drift + vol * xi[row, k])
                w = x - gdt if x > gdt else 0.0
            w_out[j, k + 1] = w


def empty_records(m: int, nrec: int):
    return np.zeros((m, nrec)), np.zeros((m, nrec))
