"""Pure-NumPy tethered sweeps, vectorised across chains.

Mirrors ``_kernels.pyx`` operation for operation so that both backends consume
the same uniforms in the same order; see :func:`tetherbm.kernels.tmc_sweeps`
for the argument contract.
"""
import numpy as np

from .rbm import sigmoid


def tmc_sweeps(V, H, PH, S, targets, W, b, c, A, offset, alpha, U, trace,
               sum_v=None, sum_ph=None, sum_vph=None, n_threads=1):
    nc, nv = V.shape
    nh = H.shape[1]
    n_sweeps = U.shape[1]
    half_alpha = 0.5 * alpha
    WT = W.T
    accumulate = sum_v is not None
    for t in range(n_sweeps):
        H[:] = U[:, t, :nh] < PH
        F = b + H @ WT
        Uv = U[:, t, nh:]
        s = S.copy()
        for i in range(nv):
            a = A[:, i]
            s0 = s - V[:, i:i + 1] * a
            d0 = targets - (s0 - offset)
            d1 = d0 - a
            x = F[:, i] - half_alpha * (d1 * d1 - d0 * d0).sum(axis=1)
            new = (Uv[:, i] < sigmoid(x)).astype(np.float64)
            V[:, i] = new
            s = s0 + new[:, None] * a
        S[:] = V @ A.T
        PH[:] = sigmoid(c + V @ W)
        trace[:, t] = S - offset
        if accumulate:
            sum_v += V
            sum_ph += PH
            sum_vph += V[:, :, None] * PH[:, None, :]
