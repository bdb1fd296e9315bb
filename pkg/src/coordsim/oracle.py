"""Exact induced law of ``(X^N, Y^N)`` for one block at tiny block lengths.

Every step of the codec is propagated as a distribution: pool bits are
enumerated (shared ones jointly at both ends), randomized-rounding draws
branch with their exact posterior weights and channel noise is summed over.
Posteriors come from brute-force sums over all ``2^N`` words under the
dense generator, not from the successive-cancellation kernels.
"""
from __future__ import annotations

import itertools
from functools import lru_cache

import numpy as np

from .codec import CoordCodec
from .polar import dense_generator
from .prob import JointPmf
from .sc import ARGMAX, FROZEN, SAMPLE

ENUM_BUDGET = 1 << 26
_POOL = -1  # frozen position holding a private uniform pool bit


class EnumerationBudgetError(RuntimeError):
    pass


class _Sweeper:
    """Distribution over ``u`` produced by one sweep, by exhaustive posteriors."""

    def __init__(self, n: int):
        self.N = N = 1 << n
        G = dense_generator(n)
        words = np.array(list(itertools.product((0, 1), repeat=N)), dtype=np.uint8)
        self.words = words
        self.codewords = (words.astype(int) @ G) % 2

    def law(self, pos_probs: np.ndarray) -> np.ndarray:
        """``L(u) = prod_i P(c_i)`` with ``c = u G``; ``pos_probs`` is ``(N, 2)``."""
        idx = np.arange(self.N)
        return np.prod(pos_probs[idx, self.codewords], axis=1)

    def run(self, laws, actions, ctx, fixed) -> dict[tuple, float]:
        """``fixed[j]`` is a bit for known positions or ``_POOL`` for a private uniform bit."""
        out: dict[tuple, float] = {}
        words = self.words

        def rec(j, mask, prefix, w):
            if w == 0.0:
                return
            if j == self.N:
                key = tuple(prefix)
                out[key] = out.get(key, 0.0) + w
                return
            act = actions[j]
            if act == FROZEN:
                if fixed[j] == _POOL:
                    for bit in (0, 1):
                        rec(j + 1, mask & (words[:, j] == bit), prefix + [bit], w * 0.5)
                else:
                    bit = fixed[j]
                    rec(j + 1, mask & (words[:, j] == bit), prefix + [bit], w)
                return
            L = laws[ctx[j]]
            tot = L[mask].sum()
            p1 = L[mask & (words[:, j] == 1)].sum() / tot if tot > 0 else 0.5
            if act == SAMPLE:
                branches = ((1, p1), (0, 1.0 - p1))
            else:
                branches = ((1 if p1 > 0.5 else 0, 1.0),)
            for bit, pb in branches:
                rec(j + 1, mask & (words[:, j] == bit), prefix + [bit], w * pb)

        rec(0, np.ones(len(words), bool), [], 1.0)
        return out

    def transform(self, u) -> tuple:
        idx = int(np.dot(np.asarray(u, dtype=np.int64), 1 << np.arange(self.N - 1, -1, -1)))
        return tuple(int(v) for v in self.codewords[idx])


def _cond_table(joint: JointPmf, v: str, given: tuple[str, ...]) -> np.ndarray:
    """``P(V=v | S=s)`` as an array indexed ``[s_flat, v]``; uniform rows where ``P(s)=0``."""
    t = joint.marginal((v, *given)).table.reshape(joint.size(v), -1).T
    tot = t.sum(axis=1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(tot > 0, t / tot, 1.0 / t.shape[1])


def enumeration_size(codec: CoordCodec, mode: str) -> int:
    """Upper bound on enumerated realizations for one block."""
    sizes = codec.sys.alphabet_sizes
    N, L = codec.N, codec.layout
    bits = L.J_size + L.J1_bar_size + L.J2_bar_size + L.M1_size + L.M2_size
    bits += int((codec.enc_c_policy.actions == SAMPLE).sum())
    bits += int((codec.enc_a_policy.actions == SAMPLE).sum())
    bits += int((codec.synth_policy.actions == SAMPLE).sum())
    if mode == "sample":
        bits += int((codec._dec_policy(0, mode).actions == SAMPLE).sum())
    total = sizes["X"] ** N * sizes["B"] ** N
    return total * (1 << bits)


def exhaustive_oracle(codec: CoordCodec, mode: str = "sample", literal_step4: bool = False,
                      budget: int = ENUM_BUDGET) -> JointPmf:
    """Exact ``P~(x^N, y^N)`` for ``k = 1`` with an error-free block-2 payload.

    The returned table has axes ``("XN", "YN")``; a word is indexed in
    row-major order with its first symbol most significant.
    """
    if codec.layout.k != 1:
        raise ValueError("the exhaustive oracle covers k = 1 only")
    size = enumeration_size(codec, mode)
    if size > budget:
        raise EnumerationBudgetError(f"enumeration size {size:.3g} exceeds budget {budget:.3g}")
    n = codec.layout.N.bit_length() - 1
    N = codec.N
    sw = _Sweeper(n)
    sys, L = codec.sys, codec.layout
    j = sys.joint
    sz = sys.alphabet_sizes
    nx, ny, nb, nc = sz["X"], sz["Y"], sz["B"], sz["C"]

    pC = j.marginal(("C",)).table
    pA = j.marginal(("A",)).table
    C_X = _cond_table(j, "C", ("X",))
    C_B = _cond_table(j, "C", ("B",))
    A_C = _cond_table(j, "A", ("C",))
    A_CX = _cond_table(j, "A", ("C", "X"))
    Y_BC = _cond_table(j, "Y", ("B", "C"))
    qx = j.marginal(("X",)).table
    W = sys.p_b_given_a.rows

    law_C = sw.law(np.broadcast_to(pC, (N, 2)))
    law_A = sw.law(np.broadcast_to(pA, (N, 2)))

    enc_c, enc_a, synth = codec.enc_c_policy, codec.enc_a_policy, codec.synth_policy
    dec = codec._dec_policy(0, mode)

    a31, a32 = codec._a31, codec._a32
    nj, nj1 = codec._nj, codec._nj1

    J_total = L.J_size + L.J1_bar_size

    def enc_c_fixed(pool_bits):
        Ji, J1 = pool_bits[:L.J_size], pool_bits[L.J_size:]
        fixed = np.zeros(N, int)
        fixed[L.j_positions] = Ji[:nj]
        fixed[L.j1_positions] = J1[:nj1]
        fixed[a31] = Ji[nj:]
        fixed[a32] = J1[nj1:]
        return fixed

    @lru_cache(maxsize=None)
    def enc_a_law(x, c):
        fixed = np.zeros(N, int)
        fixed[L.m1_positions] = _POOL
        fixed[L.j2_positions] = _POOL
        laws = [law_A, sw.law(A_C[list(c)]),
                sw.law(A_CX[[ci * nx + xi for ci, xi in zip(c, x)]])]
        res: dict[tuple, float] = {}
        for u1, w in sw.run(laws, enc_a.actions, enc_a.context, fixed).items():
            a = sw.transform(u1)
            res[a] = res.get(a, 0.0) + w
        return res

    @lru_cache(maxsize=None)
    def channel_law(a):
        res = {}
        for b in itertools.product(range(nb), repeat=N):
            w = float(np.prod(W[list(a), list(b)]))
            if w > 0:
                res[b] = w
        return res

    @lru_cache(maxsize=None)
    def dec_law(b, pool_bits, f3):
        fixed = enc_c_fixed(np.array(pool_bits))
        fixed[L.f3] = f3
        laws = [law_C, sw.law(C_B[list(b)])]
        res: dict[tuple, float] = {}
        for u2h, w in sw.run(laws, dec.actions, dec.context, fixed).items():
            if literal_step4:
                u2h = list(u2h)
                pb = np.array(pool_bits)
                for p, v in zip(a31, pb[nj:L.J_size]):
                    u2h[p] = int(v)
                for p, v in zip(a32, pb[L.J_size + nj1:]):
                    u2h[p] = int(v)
            ch = sw.transform(u2h)
            res[ch] = res.get(ch, 0.0) + w
        return res

    @lru_cache(maxsize=None)
    def synth_law(b, ch):
        fixed = np.zeros(N, int)
        fixed[L.m2_positions] = _POOL
        laws = [sw.law(Y_BC[[bi * nc + ci for bi, ci in zip(b, ch)]])]
        res: dict[tuple, float] = {}
        for t, w in sw.run(laws, synth.actions, synth.context, fixed).items():
            y = sw.transform(t)
            res[y] = res.get(y, 0.0) + w
        return res

    table = np.zeros((nx ** N, ny ** N))
    wx = nx ** np.arange(N - 1, -1, -1)
    wy = ny ** np.arange(N - 1, -1, -1)
    pool_weight = 0.5 ** J_total
    for x in itertools.product(range(nx), repeat=N):
        px = float(np.prod(qx[list(x)]))
        if px == 0:
            continue
        laws_c = [law_C, sw.law(C_X[list(x)])]
        xi = int(np.dot(x, wx))
        for pool_bits in itertools.product((0, 1), repeat=J_total):
            fixed = enc_c_fixed(np.array(pool_bits, int))
            for u2, w2 in sw.run(laws_c, enc_c.actions, enc_c.context, fixed).items():
                c = sw.transform(u2)
                f3 = tuple(u2[p] for p in L.f3)
                for a, wa in enc_a_law(x, c).items():
                    for b, wb in channel_law(a).items():
                        for ch, wd in dec_law(b, pool_bits, f3).items():
                            for y, wy_ in synth_law(b, ch).items():
                                yi = int(np.dot(y, wy))
                                table[xi, yi] += px * pool_weight * w2 * wa * wb * wd * wy_
    return JointPmf(table, ("XN", "YN"))


def target_word_joint(sys, N: int) -> JointPmf:
    """``q_XY^{(x)N}`` indexed like :func:`exhaustive_oracle`."""
    q = sys.q_xy.table
    nx, ny = q.shape
    out = np.ones((1, 1))
    for _ in range(N):
        out = np.einsum("ij,kl->ikjl", out, q).reshape(out.shape[0] * nx, out.shape[1] * ny)
    return JointPmf(out, ("XN", "YN"))
