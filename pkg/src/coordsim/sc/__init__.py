"""Successive cancellation for a memoryless binary source with side information.

For i.i.d. pairs ``(V_i, S_i)`` and ``U = V G_n`` (so ``V = U G_n``), a sweep
visits ``j = 0 .. N-1`` and computes the exact posterior
``P(U_j = 1 | u_{<j}, s^N)`` in the probability domain, then fixes ``u_j``
according to a per-index action. Several conditioning contexts can be swept
together: they share the bit decisions and each index reads the posterior of
the context assigned to it.

Two interchangeable kernels exist. The compiled one (``_kernel``) is used
when importable; set ``COORDSIM_BACKEND=python`` to force the numpy kernel.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..polar import _bit_reversal, _log2_len, polar_transform
from ..prob import JointPmf, binary_entropy
from . import _kernel_py

FROZEN, SAMPLE, ARGMAX = _kernel_py.FROZEN, _kernel_py.SAMPLE, _kernel_py.ARGMAX

_KERNELS = {"python": _kernel_py.sc_kernel}
try:
    from . import _kernel as _kernel_c  # type: ignore[attr-defined]

    _KERNELS["cython"] = _kernel_c.sc_kernel
except ImportError:  # pragma: no cover - depends on the build
    _kernel_c = None

if os.environ.get("COORDSIM_BACKEND", "").lower() == "python" or "cython" not in _KERNELS:
    BACKEND = "python"
else:
    BACKEND = "cython"


def available_backends() -> tuple[str, ...]:
    return tuple(_KERNELS)


def get_kernel(name: str | None = None):
    return _KERNELS[name or BACKEND]


class SymbolJoint:
    """Per-position joint of a binary ``V`` and a finite side variable ``S``.

    ``table[v, s] = P(V=v, S=s)``.
    """

    def __init__(self, table):
        t = np.array(table, dtype=float)
        if t.ndim == 1:
            t = t[:, None]
        if t.ndim != 2 or t.shape[0] != 2:
            raise ValueError("SymbolJoint table must have shape (2, |S|)")
        if np.any(t < 0) or abs(t.sum() - 1.0) > 1e-9:
            raise ValueError("SymbolJoint table is not a pmf")
        t.setflags(write=False)
        self.table = t
        s_marg = t.sum(axis=0)
        with np.errstate(invalid="ignore", divide="ignore"):
            post = np.where(s_marg > 0, t[1] / s_marg, 0.5)
        post.setflags(write=False)
        self._post = post

    @classmethod
    def from_joint(cls, joint: JointPmf, v_axis: str, s_axes: Sequence[str] = ()) -> "SymbolJoint":
        """Marginalize ``joint`` to ``(V, S)`` with ``S`` the flattened tuple of ``s_axes``."""
        j = joint.marginal((v_axis, *s_axes))
        if j.table.shape[0] != 2:
            raise ValueError(f"axis {v_axis} must be binary")
        return cls(j.table.reshape(2, -1))

    @property
    def n_side(self) -> int:
        return self.table.shape[1]

    @property
    def p_one(self) -> float:
        return float(self.table[1].sum())

    @property
    def degenerate(self) -> bool:
        """True when ``V`` is deterministic."""
        return self.p_one in (0.0, 1.0)

    def posterior(self, side=None) -> np.ndarray:
        """``P(V=1 | S=s)`` per position; ``side=None`` means no side information."""
        if side is None:
            return np.array(self.p_one)
        return self._post[np.asarray(side)]

    def sample(self, shape, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
        flat = rng.choice(self.table.size, size=shape, p=self.table.reshape(-1))
        v, s = np.divmod(flat, self.n_side)
        return v.astype(np.uint8), s


@dataclass(frozen=True)
class ScPolicy:
    """One action and one context index per position.

    Actions: ``FROZEN`` (value supplied by the caller), ``SAMPLE`` (randomized
    rounding from the posterior), ``ARGMAX`` (hard decision, ties to 0).
    """

    actions: np.ndarray
    context: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.actions, dtype=np.int8).reshape(-1)
        c = np.broadcast_to(np.asarray(self.context, dtype=np.intp), a.shape).copy()
        if not np.isin(a, (FROZEN, SAMPLE, ARGMAX)).all():
            raise ValueError("unknown action code")
        _log2_len(a.size)
        object.__setattr__(self, "actions", a)
        object.__setattr__(self, "context", c)

    @property
    def N(self) -> int:
        return self.actions.size

    @classmethod
    def constant(cls, N: int, action: int, context: int = 0) -> "ScPolicy":
        return cls(np.full(N, action, dtype=np.int8), np.full(N, context, dtype=np.intp))


@dataclass(frozen=True)
class PosteriorTrace:
    posteriors: np.ndarray  # P(U_j = 1 | past, side) under the index's context
    bits: np.ndarray


def leaf_table(contexts, N: int, batch: int) -> np.ndarray:
    """Stack per-context leaf posteriors into an ``(n_ctx, batch, N)`` array."""
    out = np.empty((len(contexts), batch, N))
    for k, (sj, side) in enumerate(contexts):
        p = sj.posterior(side)
        out[k] = np.broadcast_to(p, (batch, N))
    return out


def sc_sweep_leaves(leaves, policy: ScPolicy, frozen=None, uniforms=None, backend: str | None = None):
    """Sweep from precomputed natural-order leaf posteriors ``(n_ctx, B, N)``."""
    leaves = np.asarray(leaves, dtype=np.float64)
    n_ctx, B, N = leaves.shape
    if policy.N != N:
        raise ValueError(f"policy covers {policy.N} indices, words have {N}")
    if policy.context.max(initial=0) >= n_ctx or policy.context.min(initial=0) < 0:
        raise ValueError("policy references a missing context")
    n = _log2_len(N)
    frozen = np.zeros((B, N), np.uint8) if frozen is None else np.broadcast_to(frozen, (B, N))
    uniforms = np.ones((B, N)) if uniforms is None else np.broadcast_to(uniforms, (B, N))
    tree = np.ascontiguousarray(leaves[..., _bit_reversal(n)])
    u, post = get_kernel(backend)(tree, policy.actions, policy.context,
                                  np.ascontiguousarray(frozen, dtype=np.uint8),
                                  np.ascontiguousarray(uniforms, dtype=np.float64))
    return u, PosteriorTrace(post, u)


def sc_sweep(contexts, policy: ScPolicy, frozen=None, uniforms=None, rng=None, backend=None):
    """Run one successive-cancellation sweep.

    Parameters
    ----------
    contexts : (SymbolJoint, side) pair or sequence of pairs
        ``side`` is an integer array of shape ``(N,)`` or ``(B, N)``, or
        ``None`` for no side information.
    policy : ScPolicy
    frozen : array, optional
        Values for ``FROZEN`` indices, broadcast to ``(B, N)``.
    uniforms : array, optional
        Uniform draws consumed by ``SAMPLE`` indices (``u_j = [U < p]``).
        Drawn from ``rng`` when omitted.

    Returns
    -------
    u : ndarray of uint8
    trace : PosteriorTrace
    """
    if isinstance(contexts, tuple) and len(contexts) == 2 and isinstance(contexts[0], SymbolJoint):
        contexts = [contexts]
    N = policy.N
    shapes = [np.shape(s) for _, s in contexts if s is not None]
    squeeze = all(len(s) <= 1 for s in shapes)
    B = max([s[0] for s in shapes if len(s) == 2] + [1])
    if uniforms is None and np.any(policy.actions == SAMPLE):
        rng = np.random.default_rng() if rng is None else rng
        uniforms = rng.random((B, N))
    leaves = leaf_table(contexts, N, B)
    u, trace = sc_sweep_leaves(leaves, policy, None if frozen is None else np.atleast_2d(frozen),
                               uniforms, backend)
    if squeeze and B == 1:
        return u[0], PosteriorTrace(trace.posteriors[0], u[0])
    return u, trace


def profile_from_samples(sj: SymbolJoint, v, s, backend=None) -> tuple[np.ndarray, np.ndarray]:
    """Teacher-forced mean ``h(P(U_j | u_<j, s^N))`` per index and its standard error.

    ``v``, ``s`` are ``(M, N)`` samples drawn from ``sj``; ``s=None`` drops the
    side information.
    """
    v = np.atleast_2d(v)
    M, N = v.shape
    if sj.degenerate:
        return np.zeros(N), np.zeros(N)
    u = polar_transform(v)
    policy = ScPolicy.constant(N, FROZEN)
    leaves = leaf_table([(sj, s)], N, M)
    _, trace = sc_sweep_leaves(leaves, policy, frozen=u, backend=backend)
    h = binary_entropy(trace.posteriors)
    se = h.std(axis=0, ddof=1) / np.sqrt(M) if M > 1 else np.zeros(N)
    return h.mean(axis=0), se


CHUNK = 250


def entropy_profile(sj: SymbolJoint, n: int, num_samples: int = 2000, seed=0,
                    workers: int = 1, backend=None) -> tuple[np.ndarray, np.ndarray]:
    """Monte-Carlo estimate of ``H(U_j | U_<j, S^N)`` for every index.

    Samples are split into fixed-size chunks, each with its own child seed,
    so the result does not depend on ``workers``.
    """
    if num_samples < 1:
        raise ValueError("num_samples must be at least 1")
    N = 1 << n
    if sj.degenerate:
        return np.zeros(N), np.zeros(N)
    sizes = [CHUNK] * (num_samples // CHUNK)
    if num_samples % CHUNK:
        sizes.append(num_samples % CHUNK)
    seeds = np.random.SeedSequence(seed).spawn(len(sizes))

    def run(args):
        size, ss = args
        rng = np.random.default_rng(ss)
        v, s = sj.sample((size, N), rng)
        u = polar_transform(v)
        leaves = leaf_table([(sj, s if sj.n_side > 1 else None)], N, size)
        _, trace = sc_sweep_leaves(leaves, ScPolicy.constant(N, FROZEN), frozen=u, backend=backend)
        h = binary_entropy(trace.posteriors)
        return h.sum(axis=0), (h ** 2).sum(axis=0)

    jobs = list(zip(sizes, seeds))
    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            parts = list(ex.map(run, jobs))
    else:
        parts = [run(j) for j in jobs]
    s1 = sum(p[0] for p in parts)
    s2 = sum(p[1] for p in parts)
    mean = s1 / num_samples
    if num_samples > 1:
        var = np.maximum(s2 - num_samples * mean ** 2, 0.0) / (num_samples - 1)
        se = np.sqrt(var / num_samples)
    else:
        se = np.zeros(N)
    return mean, se
