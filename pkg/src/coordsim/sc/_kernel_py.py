"""Batched successive-cancellation kernel in numpy (fallback backend).

Operates on the un-permuted Kronecker tree: ``leaves[k, b, i]`` is
``P(W_i = 1 | observation)`` for the codeword ``w = u F^{(x)n}`` of
sample ``b`` under context ``k``. Callers apply the bit reversal.
"""
import numpy as np

FROZEN, SAMPLE, ARGMAX = 0, 1, 2


def sc_kernel(leaves, actions, ctx, frozen, uniforms):
    leaves = np.ascontiguousarray(leaves, dtype=np.float64)
    n_ctx, B, N = leaves.shape
    actions = np.asarray(actions, dtype=np.int8)
    ctx = np.asarray(ctx, dtype=np.intp)
    u = np.zeros((B, N), dtype=np.uint8)
    post = np.zeros((B, N), dtype=np.float64)

    def leaf(P, j):
        p = P[ctx[j], :, 0]
        post[:, j] = p
        act = actions[j]
        if act == FROZEN:
            bit = frozen[:, j].astype(np.uint8)
        elif act == SAMPLE:
            bit = (uniforms[:, j] < p).astype(np.uint8)
        else:
            bit = (p > 0.5).astype(np.uint8)
        u[:, j] = bit
        return bit[:, None]

    def node(P, j0):
        m = P.shape[-1]
        if m == 1:
            return leaf(P, j0)
        h = m // 2
        a = P[..., :h]
        b = P[..., h:]
        cl = node(a + b - 2.0 * a * b, j0)
        one = cl.astype(bool)[None]
        # P(x_L = cl ^ 1) and P(x_L = cl)
        flip = np.where(one, 1.0 - a, a)
        keep = np.where(one, a, 1.0 - a)
        num1 = b * flip
        tot = num1 + (1.0 - b) * keep
        with np.errstate(invalid="ignore", divide="ignore"):
            right = np.where(tot > 0, num1 / tot, 0.5)
        cr = node(right, j0 + h)
        return np.concatenate([cl ^ cr, cr], axis=-1)

    node(leaves, 0)
    return u, post
