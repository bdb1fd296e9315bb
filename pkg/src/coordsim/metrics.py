"""Experiment orchestration, rate accounting, region checks and divergence estimates."""
from __future__ import annotations

import csv
import io
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .codec import MODES, CoordCodec, RandomnessPools
from .prob import Channel, CoordinationSystem, conditional_entropy, kl_divergence, mutual_information, total_variation
from .sets import PolarSpectrum, SetFamily, build_family, build_spectrum, chain_layout

SIDECHANNELS = ("ideal", "repetition")
TRIAL_CHUNK = 50
WORD_JOINT_LIMIT = 1 << 12
CSV_VERSION = 1
CSV_COLUMNS = ("n", "k", "eps_vh", "eps_h", "M", "trials", "seed", "mode", "sidechannel",
               "R_o", "R_c", "R_a", "rho1", "rho2", "payload_overhead", "tv", "kl",
               "tv_block_max", "c_error_rate",
               "m_2a", "m_2b", "m_2c", "m_2d", "m_2e", "m_2f", "m_2g", "feasible")


class RuntimeBudgetError(RuntimeError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    sys: CoordinationSystem = field(repr=False)
    n: int
    k: int = 1
    eps_vh: float = 0.1
    eps_h: float = 0.1
    M: int = 2000
    trials: int = 100
    seed: int = 0
    mode: str = "sample"
    sidechannel: str = "ideal"
    repetition: int = 9
    literal_step4: bool = False
    workers: int = 1
    max_seconds: float | None = None
    backend: str | None = None

    def __post_init__(self):
        if self.n < 1 or self.k < 1 or self.trials < 1 or self.M < 1:
            raise ValueError("n, k, trials and M must all be at least 1")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.sidechannel not in SIDECHANNELS:
            raise ValueError(f"sidechannel must be one of {SIDECHANNELS}")
        if self.repetition < 1:
            raise ValueError("repetition must be at least 1")

    @property
    def N(self) -> int:
        return 1 << self.n

    def summary(self) -> dict:
        d = {f: getattr(self, f) for f in ("n", "k", "eps_vh", "eps_h", "M", "trials", "seed",
                                           "mode", "sidechannel", "repetition", "literal_step4")}
        return d


class Rates(NamedTuple):
    R_o: float
    R_c: float
    R_a: float
    rho1: float
    rho2: float


def code_rates(fam: SetFamily, k: int, N: int | None = None) -> Rates:
    """Rates realized by the scheme for ``k`` chained blocks of length ``N``."""
    N = fam.N if N is None else N
    R_o = (len(fam.V_C_XY) + k * len(fam.V_C_X - fam.V_C_XY)) / (k * N)
    R_c = len(fam.F5 | fam.F3) / N
    R_a = (len(fam.V_A_CXY) + k * len(fam.F8)) / (k * N)
    return Rates(R_o, R_c, R_a, len(fam.F6) / N, len(fam.V_Y_BC) / N)


def randomness_budget(fam: SetFamily, k: int) -> dict[str, int]:
    """Total pool bits the scheme is entitled to over ``k`` blocks."""
    return {
        "common": len(fam.V_C_XY) + len(fam.F7) + k * len(fam.V_C_X - fam.V_C_XY),
        "local": k * len(fam.F6) + k * len(fam.V_Y_BC),
    }


def consumed_bits(pools: RandomnessPools) -> dict[str, int]:
    c = pools.consumed()
    return {"common": c["J"] + c["J1_bar"] + c["J2_bar"], "local": c["M1"] + c["M2"]}


@dataclass(frozen=True)
class RegionReport:
    margins: dict[str, float]
    info: dict[str, float]
    conflicts: tuple[tuple[str, str], ...]

    @property
    def feasible(self) -> bool:
        return all(m > 0 for m in self.margins.values())

    def failing(self) -> list[str]:
        return [k for k, m in self.margins.items() if m <= 0]


def region_info(sys: CoordinationSystem) -> dict[str, float]:
    j = sys.joint
    return {
        "I(XY;AC)": mutual_information(j, ("X", "Y"), ("A", "C")),
        "I(XY;C)": mutual_information(j, ("X", "Y"), ("C",)),
        "I(X;AC)": mutual_information(j, ("X",), ("A", "C")),
        "I(X;C)": mutual_information(j, ("X",), ("C",)),
        "I(B;C)": mutual_information(j, ("B",), ("C",)),
        "H(Y|BC)": conditional_entropy(j, ("Y",), ("B", "C")),
    }


def region_check(sys: CoordinationSystem, rates) -> RegionReport:
    """Signed margins of the seven inner-bound inequalities (positive = satisfied).

    ``rates`` is a :class:`Rates` or a mapping with the same field names.
    A conflict is reported when ``R_c > I(X;C)`` and ``R_c < I(B;C)`` cannot
    hold together for any ``R_c``.
    """
    r = rates._asdict() if isinstance(rates, Rates) else dict(rates)
    Ra, Ro, Rc, r1, r2 = (float(r[k]) for k in ("R_a", "R_o", "R_c", "rho1", "rho2"))
    info = region_info(sys)
    margins = {
        "2a": Ra + Ro + Rc - info["I(XY;AC)"],
        "2b": Ro + Rc - info["I(XY;C)"],
        "2c": Ra + Rc - info["I(X;AC)"],
        "2d": Rc - info["I(X;C)"],
        "2e": info["I(B;C)"] - Rc,
        "2f": r1 - (Ra + Rc - info["I(X;AC)"]),
        "2g": r2 - info["H(Y|BC)"],
    }
    conflicts = (("2d", "2e"),) if info["I(X;C)"] >= info["I(B;C)"] else ()
    return RegionReport(margins, info, conflicts)


def dmc_transmit(a, ch: Channel, rng=None) -> np.ndarray:
    """Pass every symbol of ``a`` independently through ``ch``."""
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    a = np.asarray(a)
    if a.size and (a.min() < 0 or a.max() >= ch.n_in):
        raise ValueError(f"input symbols outside the channel alphabet of size {ch.n_in}")
    cdf = np.cumsum(ch.rows, axis=1)
    cdf[:, -1] = 1.0
    u = rng.random(a.shape)
    out = (u[..., None] >= cdf[a]).sum(axis=-1)
    return out.astype(np.uint8 if ch.n_out <= 256 else np.intp)


def repetition_transport(bits, ch: Channel, r: int, rng) -> np.ndarray:
    """Send each bit ``r`` times over ``ch`` (binary input) and ML-decode."""
    bits = np.asarray(bits, dtype=np.uint8)
    if ch.n_in != 2:
        raise ValueError("repetition side channel needs a binary-input channel")
    rx = dmc_transmit(np.repeat(bits[..., None], r, axis=-1), ch, rng)
    with np.errstate(divide="ignore"):
        logw = np.log(ch.rows)
    score = logw[1][rx].sum(axis=-1) - logw[0][rx].sum(axis=-1)
    score = np.nan_to_num(score, nan=0.0)
    return (score > 0).astype(np.uint8)


def empirical_joint(counts) -> np.ndarray:
    c = np.asarray(counts, dtype=float)
    return c / c.sum()


def smoothed_kl(counts, q) -> float:
    """KL(empirical || q) with add-1/2 smoothing of the counts on the support of ``q``.

    Cells outside the support keep their raw counts, so observed mass there
    still gives ``+inf``.
    """
    q = np.asarray(q, dtype=float)
    c = np.asarray(counts, dtype=float) + np.where(q > 0, 0.5, 0.0)
    return kl_divergence(c / c.sum(), q)


@dataclass
class SimReport:
    config: dict
    sizes: dict[str, int]
    rates: Rates
    payload_overhead: float
    empirical_xy: np.ndarray
    tv: float
    kl: float
    block_tv: list[float]
    region: RegionReport
    consumed: dict[str, int]
    budget: dict[str, int]
    c_error_rate: float
    runtime: float
    pair_counts: np.ndarray | None = field(default=None, repr=False)
    word_counts: np.ndarray | None = field(default=None, repr=False)
    acute_counts: np.ndarray | None = field(default=None, repr=False)

    def csv_row(self) -> dict:
        cfg = self.config
        row = {k: cfg[k] for k in ("n", "k", "eps_vh", "eps_h", "M", "trials", "seed", "mode", "sidechannel")}
        row.update(self.rates._asdict())
        row.update(payload_overhead=self.payload_overhead, tv=self.tv, kl=self.kl,
                   tv_block_max=max(self.block_tv), c_error_rate=self.c_error_rate)
        row.update({f"m_{k}": v for k, v in self.region.margins.items()})
        row["feasible"] = int(self.region.feasible)
        return row

    def to_record(self) -> dict:
        return {
            "config": self.config,
            "sizes": self.sizes,
            "rates": self.rates._asdict(),
            "payload_overhead": self.payload_overhead,
            "empirical_xy": self.empirical_xy.tolist(),
            "tv": self.tv,
            "kl": self.kl,
            "block_tv": list(self.block_tv),
            "margins": self.region.margins,
            "info": self.region.info,
            "conflicts": [list(c) for c in self.region.conflicts],
            "feasible": self.region.feasible,
            "consumed": self.consumed,
            "budget": self.budget,
            "c_error_rate": self.c_error_rate,
            "runtime": self.runtime,
        }


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(round(v, 12))
    return str(v)


def csv_text(reports) -> str:
    buf = io.StringIO()
    buf.write(f"# coordsim csv v{CSV_VERSION}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for rep in reports:
        row = rep.csv_row()
        w.writerow([_fmt(row[c]) for c in CSV_COLUMNS])
    return buf.getvalue()


def _word_index(words, size: int) -> np.ndarray:
    """Row-major index of each length-``N`` word (first symbol most significant)."""
    N = words.shape[-1]
    weights = size ** np.arange(N - 1, -1, -1)
    return (words.astype(np.int64) * weights).sum(axis=-1)


def prepare(cfg: ExperimentConfig, spectrum: PolarSpectrum | None = None):
    """Spectrum, partitioned family, layout and codec for ``cfg``."""
    if spectrum is None:
        spectrum = build_spectrum(cfg.sys, cfg.n, cfg.M, cfg.seed, workers=cfg.workers, backend=cfg.backend)
    fam = build_family(spectrum, cfg.eps_vh, cfg.eps_h)
    layout = chain_layout(fam, cfg.k)
    return spectrum, fam, layout, CoordCodec(cfg.sys, fam, layout, cfg.backend)


def run_experiment(cfg: ExperimentConfig, spectrum: PolarSpectrum | None = None,
                   progress=None, pools_hook=None) -> SimReport:
    """Encode, transmit and decode ``cfg.trials`` independent runs of ``k`` blocks.

    Trials are processed in fixed-size chunks with their own child seeds, so
    the result is independent of ``cfg.workers``. ``pools_hook`` may replace
    each chunk's pools (used for negative controls).
    """
    t0 = time.perf_counter()
    spectrum, fam, layout, codec = prepare(cfg, spectrum)
    sys = cfg.sys
    j = sys.joint
    nx, ny = j.size("X"), j.size("Y")
    q_x = j.marginal(("X",)).table
    ch = sys.p_b_given_a
    N, k = cfg.N, cfg.k
    word_ok = (nx * ny) ** N <= WORD_JOINT_LIMIT

    sizes = [TRIAL_CHUNK] * (cfg.trials // TRIAL_CHUNK)
    if cfg.trials % TRIAL_CHUNK:
        sizes.append(cfg.trials % TRIAL_CHUNK)
    seeds = np.random.SeedSequence([cfg.seed, 0x5EED]).spawn(len(sizes))

    def run(job):
        size, ss = job
        s_pool, s_x, s_ch, s_side = ss.spawn(4)
        pools = RandomnessPools.generate(layout, size, s_pool)
        if pools_hook is not None:
            pools = pools_hook(pools)
        rx = np.random.default_rng(s_x)
        x = rx.choice(nx, size=(size, k, N), p=q_x).astype(np.uint8)
        enc = codec.encode_run(x, pools)
        b = dmc_transmit(enc.a, ch, np.random.default_rng(s_ch))
        payload = enc.payload
        if cfg.sidechannel == "repetition" and payload.size:
            payload = repetition_transport(payload, ch, cfg.repetition, np.random.default_rng(s_side))
        dec = codec.decode_run(b, payload, pools, cfg.mode, cfg.literal_step4)
        y = dec.y
        out = {
            "block": np.stack([np.bincount((x[:, i] * ny + y[:, i]).ravel(), minlength=nx * ny)
                               for i in range(k)]),
            "c_err": int((dec.c_hat != enc.c).sum()),
            "consumed": consumed_bits(pools),
        }
        if k > 1:
            sym = (x * ny + y).astype(np.int64)
            out["pairs"] = np.stack([np.bincount((sym[:, i - 1] * nx * ny + sym[:, i]).ravel(),
                                                 minlength=(nx * ny) ** 2) for i in range(1, k)])
        if word_ok:
            wi = _word_index(x, nx) * ny ** N + _word_index(y, ny)
            out["words"] = np.bincount(wi.ravel(), minlength=(nx * ny) ** N)
        if layout.chaining:
            # acute bits of every block as embedded at the encoder
            out["acute"] = np.concatenate([enc.u2[:, :, codec._a31], enc.u2[:, :, codec._a32]], axis=-1)
        return out

    jobs = list(zip(sizes, seeds))
    parts = []

    def check_budget():
        if cfg.max_seconds is not None and time.perf_counter() - t0 > cfg.max_seconds:
            raise RuntimeBudgetError(f"runtime budget of {cfg.max_seconds:g}s exceeded")

    if cfg.workers > 1:
        with ThreadPoolExecutor(cfg.workers) as ex:
            for done, p in enumerate(ex.map(run, jobs), 1):
                parts.append(p)
                check_budget()
                if progress:
                    progress(done, len(jobs))
    else:
        for done, job in enumerate(jobs, 1):
            parts.append(run(job))
            check_budget()
            if progress:
                progress(done, len(jobs))

    block = sum(p["block"] for p in parts)
    counts = block.sum(axis=0).reshape(nx, ny)
    q = sys.q_xy.table
    emp = empirical_joint(counts)
    block_tv = [total_variation(empirical_joint(bc.reshape(nx, ny)), q) for bc in block]
    rates = code_rates(fam, k, N)
    consumed = {key: parts[0]["consumed"][key] for key in ("common", "local")}
    return SimReport(
        config=cfg.summary(),
        sizes=fam.sizes(),
        rates=rates,
        payload_overhead=len(fam.F3) / (k * N),
        empirical_xy=emp,
        tv=total_variation(emp, q),
        kl=smoothed_kl(counts, q),
        block_tv=block_tv,
        region=region_check(sys, rates),
        consumed=consumed,
        budget=randomness_budget(fam, k),
        c_error_rate=sum(p["c_err"] for p in parts) / (cfg.trials * k * N),
        runtime=time.perf_counter() - t0,
        pair_counts=sum(p["pairs"] for p in parts) if k > 1 else None,
        word_counts=sum(p["words"] for p in parts) if word_ok else None,
        acute_counts=np.concatenate([p["acute"] for p in parts]) if layout.chaining else None,
    )


MIN_PROBE_TRIALS = 1000


def block_independence_probe(x_blocks, y_blocks, min_trials: int = MIN_PROBE_TRIALS) -> dict:
    """Dependence between adjacent blocks, from pooled same-position statistics.

    For each ``i`` the joint of ``(x, y)`` at position ``j`` of block ``i-1``
    and position ``j`` of block ``i`` (pooled over ``j`` and trials) is
    compared in total variation with the product of the two per-block joints.

    Returns ``{"pairs": [tv, ...], "max": tv}``; empty for ``k = 1``.
    """
    x_blocks, y_blocks = np.asarray(x_blocks), np.asarray(y_blocks)
    T, k, _ = x_blocks.shape
    if k < 2:
        return {"pairs": [], "max": None}
    if T < min_trials:
        raise ValueError(f"block independence probe needs at least {min_trials} trials, got {T}")
    nx = int(x_blocks.max()) + 1
    ny = int(y_blocks.max()) + 1
    sym = x_blocks.astype(np.int64) * ny + y_blocks
    m = nx * ny
    pairs = [np.bincount((sym[:, i - 1] * m + sym[:, i]).ravel(), minlength=m * m) for i in range(1, k)]
    return probe_from_pair_counts(np.stack(pairs), m)


def probe_from_pair_counts(pair_counts, m: int | None = None) -> dict:
    pair_counts = np.asarray(pair_counts, dtype=float)
    if pair_counts.size == 0:
        return {"pairs": [], "max": None}
    m = int(round(np.sqrt(pair_counts.shape[-1]))) if m is None else m
    tvs = []
    for pc in pair_counts:
        pj = (pc / pc.sum()).reshape(m, m)
        tvs.append(total_variation(pj, np.outer(pj.sum(axis=1), pj.sum(axis=0))))
    return {"pairs": tvs, "max": max(tvs)}


__all__ = [
    "ExperimentConfig", "Rates", "RegionReport", "SimReport", "RuntimeBudgetError",
    "code_rates", "randomness_budget", "region_check", "region_info", "dmc_transmit",
    "repetition_transport", "run_experiment", "block_independence_probe", "csv_text",
    "prepare", "smoothed_kl", "consumed_bits", "CSV_COLUMNS", "CSV_VERSION",
]
