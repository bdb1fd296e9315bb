"""Finite-alphabet probability objects and information measures.

All quantities are in bits. Conventions: ``0 log 0 = 0`` and
``p log(p/0) = +inf`` for ``p > 0``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import linprog

NORM_TOL = 1e-9
COMPOSE_TOL = 1e-6
LP_TOL = 1e-7


class AlphabetError(ValueError):
    """Alphabets of two objects do not agree."""


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


def _check_probs(arr: np.ndarray, what: str) -> None:
    if arr.size == 0:
        raise ValueError(f"{what}: empty alphabet")
    if not np.all(np.isfinite(arr)) or np.any(arr < 0):
        raise ValueError(f"{what}: entries must be finite and non-negative")
    total = float(arr.sum())
    if abs(total - 1.0) > NORM_TOL:
        raise ValueError(f"{what}: probabilities sum to {total!r}, not 1")


@dataclass(frozen=True, eq=False)
class Pmf:
    """Probability vector over ``range(len(probs))``."""

    probs: np.ndarray

    def __post_init__(self):
        arr = _frozen(self.probs).reshape(-1)
        _check_probs(arr, "Pmf")
        object.__setattr__(self, "probs", arr)

    @property
    def size(self) -> int:
        return self.probs.shape[0]

    def __len__(self) -> int:
        return self.size

    @classmethod
    def bernoulli(cls, p: float) -> "Pmf":
        return cls([1.0 - p, p])

    @classmethod
    def uniform(cls, k: int) -> "Pmf":
        return cls(np.full(k, 1.0 / k))

    @classmethod
    def point(cls, k: int, i: int) -> "Pmf":
        arr = np.zeros(k)
        arr[i] = 1.0
        return cls(arr)


@dataclass(frozen=True, eq=False)
class Channel:
    """Row-stochastic kernel: ``rows[i, o] = P(out=o | in=i)``."""

    rows: np.ndarray

    def __post_init__(self):
        arr = _frozen(self.rows)
        if arr.ndim != 2:
            raise ValueError("Channel rows must form a 2-D table")
        for i, row in enumerate(arr):
            _check_probs(row, f"Channel row {i}")
        object.__setattr__(self, "rows", arr)

    @property
    def n_in(self) -> int:
        return self.rows.shape[0]

    @property
    def n_out(self) -> int:
        return self.rows.shape[1]

    def row(self, i: int) -> Pmf:
        return Pmf(self.rows[i])

    def then(self, other: "Channel") -> "Channel":
        """Cascade: first ``self``, then ``other``."""
        if self.n_out != other.n_in:
            raise AlphabetError("cascade: output/input alphabets differ")
        return Channel(self.rows @ other.rows)

    @classmethod
    def bsc(cls, p: float) -> "Channel":
        return cls([[1.0 - p, p], [p, 1.0 - p]])

    @classmethod
    def bec(cls, e: float) -> "Channel":
        # outputs: 0, 1, erasure
        return cls([[1.0 - e, 0.0, e], [0.0, 1.0 - e, e]])

    @classmethod
    def identity(cls, k: int = 2) -> "Channel":
        return cls(np.eye(k))


@dataclass(frozen=True, eq=False)
class JointPmf:
    """Joint table whose axes carry variable names."""

    table: np.ndarray
    axes: tuple[str, ...]

    def __post_init__(self):
        arr = _frozen(self.table)
        axes = tuple(self.axes)
        if arr.ndim != len(axes):
            raise ValueError(f"table has {arr.ndim} dims but {len(axes)} axis labels")
        if len(set(axes)) != len(axes):
            raise ValueError(f"duplicate axis labels {axes}")
        _check_probs(arr.reshape(-1), "JointPmf")
        object.__setattr__(self, "table", arr)
        object.__setattr__(self, "axes", axes)

    def axis(self, name: str) -> int:
        try:
            return self.axes.index(name)
        except ValueError:
            raise KeyError(f"unknown axis {name!r}; have {self.axes}") from None

    def size(self, name: str) -> int:
        return self.table.shape[self.axis(name)]

    def marginal(self, names: Sequence[str]) -> "JointPmf":
        """Marginal over ``names``, axes reordered to the given order."""
        names = tuple(names)
        idx = [self.axis(a) for a in names]
        if len(set(idx)) != len(idx):
            raise ValueError(f"repeated axes in {names}")
        drop = tuple(i for i in range(len(self.axes)) if i not in idx)
        t = self.table.sum(axis=drop) if drop else self.table
        kept = [i for i in range(len(self.axes)) if i in idx]
        t = np.transpose(t, [kept.index(i) for i in idx])
        return JointPmf(t, names)

    def flat(self, names: Sequence[str] | None = None) -> Pmf:
        t = self.table if names is None else self.marginal(names).table
        return Pmf(t.reshape(-1))


@dataclass(frozen=True, eq=False)
class CoordinationSystem:
    """Factorized chain ``P_AC * P_X|AC * P_B|A * P_Y|BC``.

    Kernels with a pair input index it as ``a * |C| + c`` (resp.
    ``b * |C| + c``). ``q_xy`` defaults to the composed marginal; when
    given it must agree with it within ``COMPOSE_TOL``.
    """

    p_ac: JointPmf
    p_x_given_ac: Channel
    p_b_given_a: Channel
    p_y_given_bc: Channel
    q_xy: JointPmf | None = None
    _joint: JointPmf = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.p_ac.axes != ("A", "C"):
            object.__setattr__(self, "p_ac", self.p_ac.marginal(("A", "C")))
        n_a, n_c = self.p_ac.table.shape
        if self.p_x_given_ac.n_in != n_a * n_c:
            raise AlphabetError("P_X|AC input alphabet must be |A|*|C|")
        if self.p_b_given_a.n_in != n_a:
            raise AlphabetError("P_B|A input alphabet must be |A|")
        n_b = self.p_b_given_a.n_out
        if self.p_y_given_bc.n_in != n_b * n_c:
            raise AlphabetError("P_Y|BC input alphabet must be |B|*|C|")
        joint = compose_joint(self)
        object.__setattr__(self, "_joint", joint)
        composed = joint.marginal(("X", "Y"))
        if self.q_xy is None:
            object.__setattr__(self, "q_xy", composed)
        else:
            target = self.q_xy.marginal(("X", "Y"))
            if target.table.shape != composed.table.shape:
                raise AlphabetError("q_xy alphabet differs from the composed (X,Y) marginal")
            err = float(np.abs(target.table - composed.table).max())
            if err > COMPOSE_TOL:
                raise ValueError(f"composed (X,Y) marginal differs from q_xy by {err:.3g}")
            object.__setattr__(self, "q_xy", target)

    @property
    def joint(self) -> JointPmf:
        """Full joint over ``(X, Y, A, B, C)``."""
        return self._joint

    @property
    def alphabet_sizes(self) -> dict[str, int]:
        t = self._joint.table.shape
        return dict(zip(self._joint.axes, t))


# --- information measures ---------------------------------------------------

def _as_array(p) -> np.ndarray:
    if isinstance(p, Pmf):
        return p.probs
    if isinstance(p, JointPmf):
        return p.table.reshape(-1)
    return np.asarray(p, dtype=float).reshape(-1)


def entropy(p) -> float:
    arr = _as_array(p)
    nz = arr[arr > 0]
    return float(max(0.0, -(nz * np.log2(nz)).sum()))


def _group_entropy(j: JointPmf, names: Sequence[str]) -> float:
    if not names:
        return 0.0
    return entropy(j.marginal(names).table)


def _disjoint(*groups: Sequence[str]) -> None:
    seen: set[str] = set()
    for g in groups:
        for a in g:
            if a in seen:
                raise ValueError(f"axis {a!r} appears in more than one group")
            seen.add(a)


def conditional_entropy(j: JointPmf, target_axes: Sequence[str], given_axes: Sequence[str] = ()) -> float:
    target_axes, given_axes = tuple(target_axes), tuple(given_axes)
    _disjoint(target_axes, given_axes)
    h = _group_entropy(j, target_axes + given_axes) - _group_entropy(j, given_axes)
    return max(0.0, h)


def mutual_information(j: JointPmf, axes_1: Sequence[str], axes_2: Sequence[str]) -> float:
    axes_1, axes_2 = tuple(axes_1), tuple(axes_2)
    _disjoint(axes_1, axes_2)
    mi = _group_entropy(j, axes_1) + _group_entropy(j, axes_2) - _group_entropy(j, axes_1 + axes_2)
    if mi < -1e-9:
        raise ArithmeticError(f"negative mutual information {mi}")
    return max(0.0, mi)


def min_star(p) -> float:
    """Smallest strictly positive probability."""
    arr = _as_array(p)
    return float(arr[arr > 0].min())


def _pair(p, q) -> tuple[np.ndarray, np.ndarray]:
    a, b = _as_array(p), _as_array(q)
    if a.shape != b.shape:
        raise AlphabetError(f"alphabet sizes {a.size} and {b.size} differ")
    return a, b


def total_variation(p, q) -> float:
    a, b = _pair(p, q)
    return float(min(1.0, 0.5 * np.abs(a - b).sum()))


def kl_divergence(p, q) -> float:
    a, b = _pair(p, q)
    sup = a > 0
    if np.any(b[sup] == 0):
        return float("inf")
    return float(max(0.0, (a[sup] * np.log2(a[sup] / b[sup])).sum()))


def binary_entropy(p):
    """Elementwise h(p) with h(0) = h(1) = 0; accepts arrays."""
    p = np.asarray(p, dtype=float)
    out = np.zeros_like(p)
    m = (p > 0) & (p < 1)
    pm = p[m]
    out[m] = -(pm * np.log2(pm) + (1 - pm) * np.log2(1 - pm))
    return out if out.ndim else float(out)


# --- composition ---------------------------------------------------------------

def compose_joint(sys: CoordinationSystem) -> JointPmf:
    """Product of the four kernels as a table over ``(X, Y, A, B, C)``."""
    p_ac = sys.p_ac.marginal(("A", "C")).table
    n_a, n_c = p_ac.shape
    n_x = sys.p_x_given_ac.n_out
    n_b = sys.p_b_given_a.n_out
    n_y = sys.p_y_given_bc.n_out
    if sys.p_x_given_ac.n_in != n_a * n_c or sys.p_b_given_a.n_in != n_a or sys.p_y_given_bc.n_in != n_b * n_c:
        raise AlphabetError("inconsistent kernel alphabets")
    px = sys.p_x_given_ac.rows.reshape(n_a, n_c, n_x)
    pb = sys.p_b_given_a.rows
    py = sys.p_y_given_bc.rows.reshape(n_b, n_c, n_y)
    # indices: a c x b y
    t = np.einsum("ac,acx,ab,bcy->xyabc", p_ac, px, pb, py)
    return JointPmf(t, ("X", "Y", "A", "B", "C"))


def degradation_check(strong: Channel, weak: Channel) -> tuple[bool, Channel | None]:
    """Is ``weak`` equal to ``strong`` followed by some channel D?

    Returns ``(True, D)`` with a feasible witness, else ``(False, None)``.
    """
    if strong.n_in != weak.n_in:
        raise AlphabetError("channels must share the input alphabet")
    W, V = strong.rows, weak.rows
    m, k = W.shape[1], V.shape[1]
    # unknown D (m x k) flattened row-major; constraints W @ D = V and D 1 = 1
    a_eq = []
    b_eq = []
    for i in range(W.shape[0]):
        for o in range(k):
            row = np.zeros(m * k)
            row[o::k] = W[i]
            a_eq.append(row)
            b_eq.append(V[i, o])
    for r in range(m):
        row = np.zeros(m * k)
        row[r * k:(r + 1) * k] = 1.0
        a_eq.append(row)
        b_eq.append(1.0)
    res = linprog(np.zeros(m * k), A_eq=np.array(a_eq), b_eq=np.array(b_eq),
                  bounds=[(0, None)] * (m * k), method="highs")
    if res.status != 0:
        return False, None
    D = np.clip(res.x.reshape(m, k), 0.0, None)
    D = D / D.sum(axis=1, keepdims=True)
    if np.abs(W @ D - V).max() > LP_TOL:
        return False, None
    return True, Channel(D)
