"""Chained randomized encoder (node X) and reverse-order decoder with Y synthesis (node Y).

All routines are batched: leading axis ``B`` indexes independent runs
(trials), each with its own randomness pools.

Pool layout per block, shared by both ends:

* ``J[i]`` = bits for ``(F1 \\ F31_acute) | F4check`` (index order), then the
  ``F31_size`` masking bits ``F31^(i)``.
* ``J1_bar`` = bits for ``(F2 \\ F32_acute) | F4hat``, then the ``F32_size``
  masking bits ``F32`` (reused in every block).
* ``J2_bar`` fills ``F7`` in every block, ``M1[i]`` fills ``F6``,
  ``M2[i]`` fills ``V_Y_BC``.

Block 1 has no predecessor; its acute positions carry the masking bits
alone, i.e. the chained F3 bits are taken as zero.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .polar import polar_transform
from .prob import CoordinationSystem
from .sc import ARGMAX, FROZEN, SAMPLE, ScPolicy, sc_sweep_leaves
from .sets import ChainLayout, SetFamily, symbol_joint

MODES = ("sample", "argmax")
_STREAMS = ("J", "J1_bar", "J2_bar", "M1", "M2", "enc_c", "enc_a", "dec_c", "dec_t")


@dataclass
class RandomnessPools:
    """Common/local randomness for ``B`` independent runs of ``k`` blocks.

    ``enc_c``, ``enc_a`` (node X) and ``dec_c``, ``dec_t`` (node Y) are the
    uniform draws for randomized rounding; they are separate from the
    rate-counted pools. ``touched`` records which pool bits were read.
    """

    J: np.ndarray        # (B, k, |J|)
    J1_bar: np.ndarray   # (B, |J1_bar|)
    J2_bar: np.ndarray   # (B, |F7|)
    M1: np.ndarray       # (B, k, |F6|)
    M2: np.ndarray       # (B, k, |V_Y_BC|)
    enc_c: np.ndarray    # (B, k, N)
    enc_a: np.ndarray
    dec_c: np.ndarray
    dec_t: np.ndarray
    touched: dict = field(default_factory=dict)

    @classmethod
    def generate(cls, layout: ChainLayout, trials: int, seed) -> "RandomnessPools":
        B, k, N = trials, layout.k, layout.N
        ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
        rngs = dict(zip(_STREAMS, (np.random.default_rng(s) for s in ss.spawn(len(_STREAMS)))))

        def bits(name, shape):
            return rngs[name].integers(0, 2, size=shape, dtype=np.uint8)

        pools = cls(
            J=bits("J", (B, k, layout.J_size)),
            J1_bar=bits("J1_bar", (B, layout.J1_bar_size)),
            J2_bar=bits("J2_bar", (B, layout.J2_bar_size)),
            M1=bits("M1", (B, k, layout.M1_size)),
            M2=bits("M2", (B, k, layout.M2_size)),
            enc_c=rngs["enc_c"].random((B, k, N)),
            enc_a=rngs["enc_a"].random((B, k, N)),
            dec_c=rngs["dec_c"].random((B, k, N)),
            dec_t=rngs["dec_t"].random((B, k, N)),
        )
        pools.reset_accounting()
        return pools

    @property
    def trials(self) -> int:
        return self.J.shape[0]

    @property
    def k(self) -> int:
        return self.J.shape[1]

    def reset_accounting(self) -> None:
        self.touched = {
            "J": np.zeros(self.J.shape[1:], bool),
            "J1_bar": np.zeros(self.J1_bar.shape[1:], bool),
            "J2_bar": np.zeros(self.J2_bar.shape[1:], bool),
            "M1": np.zeros(self.M1.shape[1:], bool),
            "M2": np.zeros(self.M2.shape[1:], bool),
        }

    def read(self, name: str, block: int | None = None) -> np.ndarray:
        arr = getattr(self, name)
        if block is None:
            self.touched[name][...] = True
            return arr
        if not 0 <= block < arr.shape[1]:
            raise IndexError(f"pool {name} exhausted: block {block + 1} of {arr.shape[1]}")
        self.touched[name][block] = True
        return arr[:, block]

    def consumed(self) -> dict[str, int]:
        """Distinct pool bits read so far, per pool (one run)."""
        return {k: int(v.sum()) for k, v in self.touched.items()}

    def with_reused_J(self) -> "RandomnessPools":
        """Copy in which every block reuses block 1's ``J`` (a deliberate flaw)."""
        J = np.repeat(self.J[:, :1], self.k, axis=1)
        out = RandomnessPools(J, self.J1_bar, self.J2_bar, self.M1, self.M2,
                              self.enc_c, self.enc_a, self.dec_c, self.dec_t)
        out.reset_accounting()
        return out


@dataclass
class EncodeResult:
    a: np.ndarray        # (B, k, N)
    payload: np.ndarray  # (B, |F3|) F3 bits of block k
    u2: np.ndarray
    c: np.ndarray
    u1: np.ndarray


@dataclass
class DecodeResult:
    y: np.ndarray        # (B, k, N)
    u2_hat: np.ndarray
    c_hat: np.ndarray
    t: np.ndarray
    acute: np.ndarray    # (B, k, F31+F32) acute bits used for unchaining


class CoordCodec:
    """Encoder/decoder pair for one system, set family and chain layout."""

    def __init__(self, sys: CoordinationSystem, fam: SetFamily, layout: ChainLayout,
                 backend: str | None = None):
        if not fam.partitioned:
            raise ValueError("set family must be partitioned")
        self.sys, self.fam, self.layout, self.backend = sys, fam, layout, backend
        self.N = layout.N
        self.sj = {lab: symbol_joint(sys, lab)
                   for lab in ("C", "C|X", "C|B", "A", "A|C", "A|CX", "Y|BC")}
        sizes = sys.alphabet_sizes
        self._n_x, self._n_c = sizes["X"], sizes["C"]
        self._n_b = sizes["B"]
        self._a31 = layout.F31_acute.members()
        self._a32 = layout.F32_acute.members()
        self._nj = layout.j_positions.size
        self._nj1 = layout.j1_positions.size
        self._build_policies()

    # --- policies ---------------------------------------------------------

    def _build_policies(self) -> None:
        f, L, N = self.fam, self.layout, self.N
        chained = np.concatenate([L.j_positions, L.j1_positions, self._a31, self._a32])

        # C-code encoder: ctx 0 = no side info, ctx 1 = given X
        act = np.full(N, SAMPLE, np.int8)
        ctx = np.zeros(N, np.intp)
        msg = (f.F3 | f.F5).members()
        ctx[msg] = 1
        act[chained] = FROZEN
        self.enc_c_policy = ScPolicy(act, ctx)

        # A-code encoder: ctx 0 = none, 1 = given C, 2 = given (C, X)
        act = np.full(N, SAMPLE, np.int8)
        ctx = np.zeros(N, np.intp)
        ctx[f.F9.members()] = 1
        ctx[f.F8.members()] = 2
        act[np.concatenate([L.m1_positions, L.j2_positions])] = FROZEN
        self.enc_a_policy = ScPolicy(act, ctx)

        # Y synthesis: single context given (B, C)
        act = np.full(N, SAMPLE, np.int8)
        act[L.m2_positions] = FROZEN
        self.synth_policy = ScPolicy(act, np.zeros(N, np.intp))

    def _dec_policy(self, block: int, mode: str) -> ScPolicy:
        if mode not in MODES:
            raise ValueError(f"unknown decoder mode {mode!r}")
        f, L, N = self.fam, self.layout, self.N
        pick = SAMPLE if mode == "sample" else ARGMAX
        # C-code decoder: ctx 0 = no side info, ctx 1 = given B
        if mode == "sample":
            act = np.full(N, SAMPLE, np.int8)
            ctx = np.zeros(N, np.intp)
        else:
            act = np.full(N, ARGMAX, np.int8)
            ctx = np.ones(N, np.intp)
        decoded = np.concatenate([self._a31, self._a32, f.F5.members()]) if block > 0 else f.F5.members()
        act[decoded] = pick
        ctx[decoded] = 1
        known = [L.j_positions, L.j1_positions, L.f3]
        if block == 0:
            known += [self._a31, self._a32]
        act[np.concatenate(known)] = FROZEN
        return ScPolicy(act, ctx)

    # --- helpers -------------------------------------------------------------

    def _leaves(self, contexts, B: int) -> np.ndarray:
        out = np.empty((len(contexts), B, self.N))
        for k, (sj, side) in enumerate(contexts):
            out[k] = np.broadcast_to(sj.posterior(side), (B, self.N))
        return out

    def _split_j(self, pools: RandomnessPools, block: int):
        Ji = pools.read("J", block)
        J1 = pools.read("J1_bar")
        return Ji[:, :self._nj], Ji[:, self._nj:], J1[:, :self._nj1], J1[:, self._nj1:]

    def masks(self, pools: RandomnessPools, block: int) -> tuple[np.ndarray, np.ndarray]:
        """Masking bits ``F31^(block)`` and ``F32``."""
        _, f31, _, f32 = self._split_j(pools, block)
        return f31, f32

    # --- node X ------------------------------------------------------------

    def encode_block_c(self, x, pools: RandomnessPools, block: int, prev_f3=None):
        """Build ``u2`` for one block; returns ``(u2, c, f3_bits)``.

        ``block`` is 0-based; for ``block >= 1`` with chaining, ``prev_f3``
        must hold the previous block's F3 bits.
        """
        x = np.atleast_2d(x)
        B = x.shape[0]
        L = self.layout
        j_bits, f31, j1_bits, f32 = self._split_j(pools, block)
        if block == 0 or not L.chaining:
            e31, e32 = f31, f32
        else:
            if prev_f3 is None:
                raise ValueError(f"block {block + 1} needs the F3 bits of block {block}")
            prev_f3 = np.atleast_2d(prev_f3)
            e31 = prev_f3[:, :L.F31_size] ^ f31
            e32 = prev_f3[:, L.F31_size:] ^ f32
        frozen = np.zeros((B, self.N), np.uint8)
        frozen[:, L.j_positions] = j_bits
        frozen[:, L.j1_positions] = j1_bits
        frozen[:, self._a31] = e31
        frozen[:, self._a32] = e32
        leaves = self._leaves([(self.sj["C"], None), (self.sj["C|X"], x)], B)
        u2, _ = sc_sweep_leaves(leaves, self.enc_c_policy, frozen,
                                pools.enc_c[:, block], self.backend)
        c = polar_transform(u2)
        return u2, c, u2[:, L.f3]

    def encode_block_a(self, x, c, pools: RandomnessPools, block: int):
        """Build ``u1`` given ``c``; returns ``(u1, a)``."""
        x, c = np.atleast_2d(x), np.atleast_2d(c)
        B = x.shape[0]
        L = self.layout
        frozen = np.zeros((B, self.N), np.uint8)
        frozen[:, L.m1_positions] = pools.read("M1", block)
        frozen[:, L.j2_positions] = pools.read("J2_bar")
        cx = c.astype(np.intp) * self._n_x + x
        leaves = self._leaves([(self.sj["A"], None), (self.sj["A|C"], c), (self.sj["A|CX"], cx)], B)
        u1, _ = sc_sweep_leaves(leaves, self.enc_a_policy, frozen,
                                pools.enc_a[:, block], self.backend)
        return u1, polar_transform(u1)

    def encode_run(self, x_blocks, pools: RandomnessPools) -> EncodeResult:
        """Encode blocks ``1..k`` in order; the last block's F3 bits form the payload."""
        x_blocks = np.asarray(x_blocks)
        if x_blocks.ndim == 2:
            x_blocks = x_blocks[None]
        B, k, N = x_blocks.shape
        if k != pools.k:
            raise ValueError(f"{k} source blocks but pools sized for {pools.k}")
        u2s, cs, u1s, as_ = (np.zeros((B, k, N), np.uint8) for _ in range(4))
        prev = None
        for i in range(k):
            u2, c, prev = self.encode_block_c(x_blocks[:, i], pools, i, prev)
            u1, a = self.encode_block_a(x_blocks[:, i], c, pools, i)
            u2s[:, i], cs[:, i], u1s[:, i], as_[:, i] = u2, c, u1, a
        return EncodeResult(as_, prev, u2s, cs, u1s)

    # --- node Y -------------------------------------------------------------

    def decode_block_c(self, b, pools: RandomnessPools, block: int, f3_bits, mode: str = "sample",
                       literal_step4: bool = False):
        """Recover ``u2_hat`` for one block given its F3 bits.

        Returns ``(u2_hat, acute)``: ``acute`` concatenates the bits at
        ``F31_acute`` then ``F32_acute`` as used for unchaining. With
        ``literal_step4`` those positions are overwritten by the masking
        bits after the sweep.
        """
        b = np.atleast_2d(b)
        B = b.shape[0]
        L = self.layout
        j_bits, f31, j1_bits, f32 = self._split_j(pools, block)
        frozen = np.zeros((B, self.N), np.uint8)
        frozen[:, L.j_positions] = j_bits
        frozen[:, L.j1_positions] = j1_bits
        if L.f3.size:
            frozen[:, L.f3] = np.atleast_2d(f3_bits)
        if block == 0:
            frozen[:, self._a31] = f31
            frozen[:, self._a32] = f32
        leaves = self._leaves([(self.sj["C"], None), (self.sj["C|B"], b)], B)
        u2_hat, _ = sc_sweep_leaves(leaves, self._dec_policy(block, mode), frozen,
                                    pools.dec_c[:, block], self.backend)
        if literal_step4:
            u2_hat[:, self._a31] = f31
            u2_hat[:, self._a32] = f32
        acute = np.concatenate([u2_hat[:, self._a31], u2_hat[:, self._a32]], axis=1)
        return u2_hat, acute

    def unchain(self, acute_next, pools: RandomnessPools, next_block: int):
        """F3 bits of block ``next_block - 1`` from block ``next_block``'s acute bits."""
        f31, f32 = self.masks(pools, next_block)
        s = self.layout.F31_size
        return np.concatenate([acute_next[:, :s] ^ f31, acute_next[:, s:] ^ f32], axis=1)

    def synthesize_y(self, b, c_hat, pools: RandomnessPools, block: int):
        """Channel simulation of ``P_Y|BC``; returns ``(t, y)``."""
        b, c_hat = np.atleast_2d(b), np.atleast_2d(c_hat)
        B = b.shape[0]
        frozen = np.zeros((B, self.N), np.uint8)
        frozen[:, self.layout.m2_positions] = pools.read("M2", block)
        bc = b.astype(np.intp) * self._n_c + c_hat
        leaves = self._leaves([(self.sj["Y|BC"], bc)], B)
        t, _ = sc_sweep_leaves(leaves, self.synth_policy, frozen, pools.dec_t[:, block], self.backend)
        return t, polar_transform(t)

    def decode_run(self, b_blocks, payload, pools: RandomnessPools, mode: str = "sample",
                   literal_step4: bool = False) -> DecodeResult:
        """Decode blocks ``k..1`` then synthesize ``Y`` for each."""
        b_blocks = np.asarray(b_blocks)
        if b_blocks.ndim == 2:
            b_blocks = b_blocks[None]
        B, k, N = b_blocks.shape
        L = self.layout
        if L.chaining and payload is None:
            raise ValueError("missing block k+1 payload")
        u2h, ch, ts, ys = (np.zeros((B, k, N), np.uint8) for _ in range(4))
        acutes = np.zeros((B, k, L.F31_size + L.F32_size), np.uint8)
        f3 = np.atleast_2d(payload) if L.chaining else np.zeros((B, 0), np.uint8)
        for i in range(k - 1, -1, -1):
            if i < k - 1 and L.chaining:
                f3 = self.unchain(acutes[:, i + 1], pools, i + 1)
            u2_hat, acute = self.decode_block_c(b_blocks[:, i], pools, i, f3, mode, literal_step4)
            u2h[:, i], acutes[:, i] = u2_hat, acute
            ch[:, i] = polar_transform(u2_hat)
            ts[:, i], ys[:, i] = self.synthesize_y(b_blocks[:, i], ch[:, i], pools, i)
        return DecodeResult(ys, u2h, ch, ts, acutes)


def _hex(word) -> str:
    w = np.asarray(word, dtype=np.uint8)
    if w.size and w.max() <= 1:
        return np.packbits(w).tobytes().hex()
    return w.tobytes().hex()


def export_traces(path, x, enc: EncodeResult, b, dec: DecodeResult, meta: dict | None = None) -> int:
    """Write one JSON line per (trial, block); returns the number of records."""
    B, k, N = enc.a.shape
    count = 0
    with open(path, "w") as fh:
        for r in range(B):
            for i in range(k):
                rec = {"trial": r, "block": i + 1, "N": N, **(meta or {})}
                for name, arr in (("x", x), ("u2", enc.u2), ("c", enc.c), ("u1", enc.u1), ("a", enc.a),
                                  ("b", b), ("u2_hat", dec.u2_hat), ("c_hat", dec.c_hat),
                                  ("t", dec.t), ("y", dec.y)):
                    rec[name] = _hex(arr[r, i])
                fh.write(json.dumps(rec) + "\n")
                count += 1
    return count


def load_traces(path) -> list[dict]:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


def unpack_word(hex_str: str, N: int, binary: bool = True) -> np.ndarray:
    raw = np.frombuffer(bytes.fromhex(hex_str), dtype=np.uint8)
    return np.unpackbits(raw)[:N] if binary else raw[:N]
