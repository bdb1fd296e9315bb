"""Index-set construction: entropy spectra, thresholded sets, partition, chaining layout."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields, replace

import numpy as np

from .polar import IndexSet, polar_transform
from .prob import CoordinationSystem, binary_entropy, conditional_entropy
from .sc import CHUNK, FROZEN, ScPolicy, SymbolJoint, leaf_table, sc_sweep_leaves

# label -> (polarized variable, conditioning variables)
LABELS: dict[str, tuple[str, tuple[str, ...]]] = {
    "C": ("C", ()),
    "C|X": ("C", ("X",)),
    "C|XY": ("C", ("X", "Y")),
    "C|B": ("C", ("B",)),
    "C|A": ("C", ("A",)),
    "A": ("A", ()),
    "A|C": ("A", ("C",)),
    "A|CX": ("A", ("C", "X")),
    "A|CXY": ("A", ("C", "X", "Y")),
    "Y|BC": ("Y", ("B", "C")),
}

_V_SETS = {"V_C": "C", "V_C_X": "C|X", "V_C_XY": "C|XY", "V_A": "A", "V_A_C": "A|C",
           "V_A_CX": "A|CX", "V_A_CXY": "A|CXY", "V_Y_BC": "Y|BC"}
_H_SETS = {"H_C_B": "C|B", "H_C_A": "C|A"}


class DecodabilityError(ValueError):
    """The chained bits do not fit in the reliably decodable positions."""

    def __init__(self, f1: int, f2: int, f3: int):
        super().__init__(f"decodability constraint violated: |F3|={f3} > |F1|+|F2|={f1}+{f2}")
        self.sizes = (f1, f2, f3)


def symbol_joint(sys: CoordinationSystem, label: str) -> SymbolJoint:
    v, s = LABELS[label]
    return SymbolJoint.from_joint(sys.joint, v, s)


def _check_binary(sys: CoordinationSystem) -> None:
    sizes = sys.alphabet_sizes
    for var in ("A", "C", "Y"):
        if sizes[var] != 2:
            raise ValueError(f"{var} must be binary (got alphabet size {sizes[var]})")


@dataclass(frozen=True, eq=False)
class PolarSpectrum:
    """Per-index entropy profiles (mean, standard error) for every label."""

    n: int
    num_samples: int
    seed: int
    mean: dict[str, np.ndarray]
    se: dict[str, np.ndarray]

    @property
    def N(self) -> int:
        return 1 << self.n

    def to_record(self) -> dict:
        return {"n": self.n, "num_samples": self.num_samples, "seed": self.seed,
                "mean": {k: v.tolist() for k, v in self.mean.items()},
                "se": {k: v.tolist() for k, v in self.se.items()}}

    @classmethod
    def from_record(cls, rec: dict) -> "PolarSpectrum":
        return cls(rec["n"], rec["num_samples"], rec["seed"],
                   {k: np.array(v) for k, v in rec["mean"].items()},
                   {k: np.array(v) for k, v in rec["se"].items()})


def build_spectrum(sys: CoordinationSystem, n: int, num_samples: int = 2000, seed: int = 0,
                   workers: int = 1, labels=None, backend=None) -> PolarSpectrum:
    """Estimate every profile from one shared set of i.i.d. samples of ``(X,Y,A,B,C)``.

    Sharing the samples across labels keeps Monte-Carlo noise correlated
    between profiles that are compared to each other (e.g. ``C|A`` vs ``C|B``).
    """
    _check_binary(sys)
    if num_samples < 1:
        raise ValueError("num_samples must be at least 1")
    labels = tuple(LABELS) if labels is None else tuple(labels)
    N = 1 << n
    joint = sys.joint
    shape = joint.table.shape
    sjs = {lab: symbol_joint(sys, lab) for lab in labels}
    sizes = [CHUNK] * (num_samples // CHUNK)
    if num_samples % CHUNK:
        sizes.append(num_samples % CHUNK)
    seeds = np.random.SeedSequence(seed).spawn(len(sizes))
    p_flat = joint.table.reshape(-1)

    def run(job):
        size, ss = job
        rng = np.random.default_rng(ss)
        flat = rng.choice(p_flat.size, size=(size, N), p=p_flat)
        coords = dict(zip(joint.axes, np.unravel_index(flat, shape)))
        out = {}
        for lab in labels:
            sj = sjs[lab]
            v_ax, s_ax = LABELS[lab]
            if sj.degenerate:
                out[lab] = (np.zeros(N), np.zeros(N))
                continue
            v = coords[v_ax].astype(np.uint8)
            side = None
            if s_ax:
                side = np.ravel_multi_index([coords[a] for a in s_ax], [joint.size(a) for a in s_ax])
            leaves = leaf_table([(sj, side)], N, size)
            _, trace = sc_sweep_leaves(leaves, ScPolicy.constant(N, FROZEN),
                                       frozen=polar_transform(v), backend=backend)
            h = binary_entropy(trace.posteriors)
            out[lab] = (h.sum(axis=0), (h ** 2).sum(axis=0))
        return out

    jobs = list(zip(sizes, seeds))
    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            parts = list(ex.map(run, jobs))
    else:
        parts = [run(j) for j in jobs]
    mean, se = {}, {}
    M = num_samples
    for lab in labels:
        s1 = sum(p[lab][0] for p in parts)
        s2 = sum(p[lab][1] for p in parts)
        m = s1 / M
        mean[lab] = np.clip(m, 0.0, 1.0)
        if M > 1:
            se[lab] = np.sqrt(np.maximum(s2 - M * m ** 2, 0.0) / (M - 1) / M)
        else:
            se[lab] = np.zeros(N)
    return PolarSpectrum(n, num_samples, seed, mean, se)


@dataclass(frozen=True)
class SetFamily:
    """Raw polarization sets plus (after :func:`derive_partition`) the F-partition."""

    N: int
    V_C: IndexSet
    V_C_X: IndexSet
    V_C_XY: IndexSet
    H_C_B: IndexSet
    H_C_A: IndexSet
    V_A: IndexSet
    V_A_C: IndexSet
    V_A_CX: IndexSet
    V_A_CXY: IndexSet
    V_Y_BC: IndexSet
    F1: IndexSet | None = None
    F2: IndexSet | None = None
    F3: IndexSet | None = None
    F4: IndexSet | None = None
    F4hat: IndexSet | None = None
    F4check: IndexSet | None = None
    F5: IndexSet | None = None
    F6: IndexSet | None = None
    F7: IndexSet | None = None
    F8: IndexSet | None = None
    F9: IndexSet | None = None
    eps_vh: float | None = None
    eps_h: float | None = None

    @property
    def partitioned(self) -> bool:
        return self.F1 is not None

    def sizes(self) -> dict[str, int]:
        return {f.name: len(getattr(self, f.name)) for f in fields(self)
                if isinstance(getattr(self, f.name), IndexSet)}

    def to_record(self) -> dict:
        rec = {"N": self.N, "eps_vh": self.eps_vh, "eps_h": self.eps_h, "sets": {}}
        for f in fields(self):
            val = getattr(self, f.name)
            if isinstance(val, IndexSet):
                rec["sets"][f.name] = val.members().tolist()
        return rec

    @classmethod
    def from_record(cls, rec: dict) -> "SetFamily":
        N = rec["N"]
        kw = {k: IndexSet(v, N) for k, v in rec["sets"].items()}
        return cls(N=N, eps_vh=rec.get("eps_vh"), eps_h=rec.get("eps_h"), **kw)


def _enforce_nesting(sets: dict[str, IndexSet]) -> dict[str, IndexSet]:
    sets["V_C_X"] = sets["V_C_X"] & sets["V_C"]
    sets["V_C_XY"] = sets["V_C_XY"] & sets["V_C_X"]
    sets["V_A_C"] = sets["V_A_C"] & sets["V_A"]
    sets["V_A_CX"] = sets["V_A_CX"] & sets["V_A_C"]
    sets["V_A_CXY"] = sets["V_A_CXY"] & sets["V_A_CX"]
    return sets


def threshold_sets(spec: PolarSpectrum, eps_vh: float = 0.1, eps_h: float = 0.1) -> SetFamily:
    """V-sets: entropy above ``1 - eps_vh``; H-sets: entropy above ``eps_h``."""
    if not 0 < eps_h <= eps_vh < 1:
        raise ValueError("thresholds must satisfy 0 < eps_h <= eps_vh < 1")
    N = spec.N
    sets = {}
    for name, lab in _V_SETS.items():
        # all polarized variables are binary, so log2|alphabet| = 1
        sets[name] = IndexSet.from_bool(spec.mean[lab] > 1.0 - eps_vh)
    for name, lab in _H_SETS.items():
        sets[name] = IndexSet.from_bool(spec.mean[lab] > eps_h)
    return SetFamily(N=N, eps_vh=eps_vh, eps_h=eps_h, **_enforce_nesting(sets))


def rate_targeted_sets(spec: PolarSpectrum, sys: CoordinationSystem) -> SetFamily:
    """Pick the ``round(N * H)`` highest-entropy indices per label, ``H`` the exact entropy."""
    N = spec.N
    j = sys.joint
    sets = {}
    for name, lab in {**_V_SETS, **_H_SETS}.items():
        v, s = LABELS[lab]
        size = int(round(N * conditional_entropy(j, (v,), s)))
        order = np.argsort(-spec.mean[lab], kind="stable")
        sets[name] = IndexSet(order[:size], N)
    return SetFamily(N=N, **_enforce_nesting(sets))


def derive_partition(fam: SetFamily) -> SetFamily:
    """Fill ``F1 .. F9``, ``F4hat``, ``F4check`` from the raw sets.

    ``H_{C|BX}`` and ``H_{C|BXY}`` are realized as ``V_C_X & H_C_B`` and
    ``V_C_XY & H_C_B``.
    """
    if not (fam.V_C_XY <= fam.V_C_X <= fam.V_C):
        raise ValueError("nesting violated: need V_C_XY <= V_C_X <= V_C")
    if not (fam.V_A_CXY <= fam.V_A_CX <= fam.V_A_C <= fam.V_A):
        raise ValueError("nesting violated: need V_A_CXY <= V_A_CX <= V_A_C <= V_A")
    Hc = fam.H_C_B.complement()
    H_C_BX = fam.V_C_X & fam.H_C_B
    H_C_BXY = fam.V_C_XY & fam.H_C_B
    return replace(
        fam,
        F1=(fam.V_C_X - fam.V_C_XY) & Hc,
        F2=fam.V_C_XY & Hc,
        F3=fam.H_C_B - H_C_BX,
        F4=H_C_BX,
        F4hat=H_C_BXY,
        F4check=H_C_BX - H_C_BXY,
        F5=(fam.V_C - fam.V_C_X) & Hc,
        F6=fam.V_A_CX - fam.V_A_CXY,
        F7=fam.V_A_CXY,
        F8=fam.V_A_C - fam.V_A_CX,
        F9=fam.V_A - fam.V_A_C,
    )


def build_family(spec: PolarSpectrum, eps_vh: float = 0.1, eps_h: float = 0.1) -> SetFamily:
    return derive_partition(threshold_sets(spec, eps_vh, eps_h))


@dataclass(frozen=True)
class ChainLayout:
    """Where chained bits and every randomness pool live inside one block."""

    N: int
    k: int
    F31_size: int
    F32_size: int
    F31_acute: IndexSet
    F32_acute: IndexSet
    # sorted positions
    f3: np.ndarray = field(repr=False)
    j_positions: np.ndarray = field(repr=False)    # (F1 \ F31_acute) | F4check
    j1_positions: np.ndarray = field(repr=False)   # (F2 \ F32_acute) | F4hat
    j2_positions: np.ndarray = field(repr=False)   # F7
    m1_positions: np.ndarray = field(repr=False)   # F6
    m2_positions: np.ndarray = field(repr=False)   # V_Y_BC

    @property
    def chaining(self) -> bool:
        return self.f3.size > 0

    @property
    def J_size(self) -> int:
        return self.j_positions.size + self.F31_size

    @property
    def J1_bar_size(self) -> int:
        return self.j1_positions.size + self.F32_size

    @property
    def J2_bar_size(self) -> int:
        return self.j2_positions.size

    @property
    def M1_size(self) -> int:
        return self.m1_positions.size

    @property
    def M2_size(self) -> int:
        return self.m2_positions.size

    def pool_sizes(self) -> dict[str, int]:
        return {"J": self.J_size, "J1_bar": self.J1_bar_size, "J2_bar": self.J2_bar_size,
                "M1": self.M1_size, "M2": self.M2_size}

    def to_record(self) -> dict:
        return {"N": self.N, "k": self.k, "F31_size": self.F31_size, "F32_size": self.F32_size,
                "F31_acute": self.F31_acute.members().tolist(),
                "F32_acute": self.F32_acute.members().tolist(),
                "pool_sizes": self.pool_sizes()}


def chain_layout(fam: SetFamily, k: int) -> ChainLayout:
    if not fam.partitioned:
        raise ValueError("derive_partition must run before chain_layout")
    if k < 1:
        raise ValueError("k must be at least 1")
    f1, f2, f3 = len(fam.F1), len(fam.F2), len(fam.F3)
    if f3 > f1 + f2:
        raise DecodabilityError(f1, f2, f3)
    s31 = (f1 * f3) // (f1 + f2) if f3 else 0
    s32 = f3 - s31
    a31 = fam.F1.lowest(s31)
    a32 = fam.F2.lowest(s32)
    return ChainLayout(
        N=fam.N, k=k, F31_size=s31, F32_size=s32, F31_acute=a31, F32_acute=a32,
        f3=fam.F3.members(),
        j_positions=((fam.F1 - a31) | fam.F4check).members(),
        j1_positions=((fam.F2 - a32) | fam.F4hat).members(),
        j2_positions=fam.F7.members(),
        m1_positions=fam.F6.members(),
        m2_positions=fam.V_Y_BC.members(),
    )


@dataclass(frozen=True)
class AlignmentReport:
    violations: IndexSet            # (V_C \ H_C_B) \ (V_C \ H_C_A)
    significant: tuple[int, ...]    # violations whose entropy ordering is reversed beyond z * SE

    @property
    def aligned(self) -> bool:
        return len(self.violations) == 0


def alignment_check(fam: SetFamily, spec: PolarSpectrum | None = None, z: float = 3.0) -> AlignmentReport:
    """Check ``V_C \\ H_C_B  <=  V_C \\ H_C_A``.

    With a spectrum, each violating index is also tested for a reversed
    ordering ``H(C|A) > H(C|B)`` larger than ``z`` combined standard errors.
    """
    L1 = fam.V_C - fam.H_C_A
    L2 = fam.V_C - fam.H_C_B
    bad = L2 - L1
    sig: list[int] = []
    if spec is not None:
        d = spec.mean["C|A"] - spec.mean["C|B"]
        s = np.sqrt(spec.se["C|A"] ** 2 + spec.se["C|B"] ** 2)
        sig = [j for j in bad if d[j] > z * s[j]]
    return AlignmentReport(bad, tuple(sig))
