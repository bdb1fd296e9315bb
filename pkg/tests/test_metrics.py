import numpy as np
import pytest

from coordsim.codec import RandomnessPools
from coordsim.metrics import (CSV_COLUMNS, ExperimentConfig, Rates, RuntimeBudgetError, block_independence_probe,
                              code_rates, csv_text, dmc_transmit, probe_from_pair_counts, region_check,
                              prepare, repetition_transport, run_experiment, smoothed_kl)
from coordsim.polar import IndexSet
from coordsim.presets import make_system
from coordsim.prob import Channel, binary_entropy, mutual_information
from coordsim.sets import SetFamily, derive_partition

from conftest import build, copy_system


def _fam(N, **sets):
    names = ("V_C", "V_C_X", "V_C_XY", "H_C_B", "H_C_A", "V_A", "V_A_C", "V_A_CX", "V_A_CXY", "V_Y_BC")
    return derive_partition(SetFamily(N=N, **{k: IndexSet(sets.get(k, ()), N) for k in names}))


def test_dmc_examples():
    rng = np.random.default_rng(0)
    a = rng.integers(0, 2, 1000)
    np.testing.assert_array_equal(dmc_transmit(a, Channel.bsc(0.0), 1), a)
    np.testing.assert_array_equal(dmc_transmit(a, Channel.bsc(1.0), 1), 1 - a)
    a = rng.integers(0, 2, 100_000)
    agree = (dmc_transmit(a, Channel.bsc(0.5), 2) == a).mean()
    assert abs(agree - 0.5) <= 3 * np.sqrt(0.25 / a.size)
    with pytest.raises(ValueError):
        dmc_transmit([0, 2], Channel.bsc(0.1))


def test_dmc_general_channel():
    ch = Channel.bec(0.3)
    a = np.ones(50_000, int)
    b = dmc_transmit(a, ch, 4)
    assert set(np.unique(b)) <= {1, 2}
    assert abs((b == 2).mean() - 0.3) < 4 * np.sqrt(0.21 / a.size)


def test_repetition_transport():
    rng = np.random.default_rng(1)
    bits = rng.integers(0, 2, 20_000).astype(np.uint8)
    out = repetition_transport(bits, Channel.bsc(0.1), 9, rng)
    # majority of 9 BSC(0.1) uses fails with probability sum_{j>=5} C(9,j) 0.1^j 0.9^(9-j)
    from math import comb
    p_err = sum(comb(9, j) * 0.1 ** j * 0.9 ** (9 - j) for j in range(5, 10))
    assert abs((out != bits).mean() - p_err) <= 4 * np.sqrt(p_err / bits.size) + 1e-4
    # BEC: an erasure-only channel decodes unless every copy is erased
    out = repetition_transport(bits, Channel.bec(0.5), 9, rng)
    assert (out != bits).mean() < 0.01


def test_code_rates_examples():
    fam = _fam(1024, V_C=range(256))
    assert code_rates(fam, 1).R_c == 0.25
    fam = _fam(16, V_C=range(12), V_C_X=range(8), V_C_XY=range(3), V_A=range(10), V_A_C=range(9),
               V_A_CX=range(6), V_A_CXY=range(2), V_Y_BC=range(5), H_C_B=[10, 11, 2])
    for k in (1, 10, 100):
        r = code_rates(fam, k)
        first = len(fam.V_C_XY) / (k * 16)
        assert r.R_o == pytest.approx(first + len(fam.V_C_X - fam.V_C_XY) / 16, abs=1e-15)
        assert r.R_a == pytest.approx(len(fam.V_A_CXY) / (k * 16) + len(fam.F8) / 16, abs=1e-15)
    assert code_rates(fam, 100).R_o - 5 / 16 == pytest.approx(3 / 1600)
    r = code_rates(fam, 1)
    assert r.rho1 == len(fam.F6) / 16 and r.rho2 == 5 / 16
    assert r.R_c == len(fam.F5 | fam.F3) / 16


def test_region_margin_linearity():
    sys = make_system("uniform", "bsc(c, 0.2)", "bsc(a, 0.25)", "identity", "copy(b)")
    base = Rates(0.5, 0.3, 0.4, 0.2, 0.1)
    m0 = region_check(sys, base).margins
    own = {"R_c": "2d", "rho1": "2f", "rho2": "2g"}
    for name, key in own.items():
        bumped = base._replace(**{name: getattr(base, name) + 0.01})
        assert region_check(sys, bumped).margins[key] - m0[key] == pytest.approx(0.01, abs=1e-12)
    m_ra = region_check(sys, base._replace(R_a=base.R_a + 0.01)).margins
    assert m_ra["2a"] - m0["2a"] == pytest.approx(0.01) and m_ra["2c"] - m0["2c"] == pytest.approx(0.01)


def test_region_examples():
    slack = make_system("uniform", "bsc(c, 0.2)", "bsc(a, 0.25)", "identity", "copy(b)")
    rep = region_check(slack, dict(R_a=10, R_o=10, R_c=0.1, rho1=10, rho2=10))
    assert rep.feasible and not rep.conflicts
    rep = region_check(slack, dict(R_a=10, R_o=10, R_c=0.3, rho1=10, rho2=10))
    assert rep.info["I(B;C)"] < 0.3 and rep.margins["2e"] <= 0 and not rep.feasible
    assert "2e" in rep.failing() and rep.margins["2d"] > 0
    clash = make_system("uniform", "copy", "copy(c)", "bsc(0.11)", "copy(b)")
    rep = region_check(clash, dict(R_a=10, R_o=10, R_c=0.75, rho1=10, rho2=10))
    assert rep.info["I(X;C)"] == pytest.approx(1.0)
    assert rep.info["I(B;C)"] == pytest.approx(1 - binary_entropy(0.11), abs=1e-12)
    assert rep.conflicts == (("2d", "2e"),) and not rep.feasible


def test_config_validation():
    s = copy_system()
    for bad in (dict(n=0), dict(k=0), dict(trials=0), dict(mode="foo"), dict(sidechannel="x"), dict(M=0)):
        with pytest.raises(ValueError):
            ExperimentConfig(sys=s, **{"n": 2, **bad})


def test_copy_system_tv_and_accounting():
    cfg = ExperimentConfig(sys=copy_system(), n=2, k=2, trials=12_500, mode="argmax", seed=1)
    rep = run_experiment(cfg)
    assert rep.tv < 0.02  # 10^5 symbol pairs
    np.testing.assert_allclose(rep.empirical_xy.sum(), 1.0)
    assert rep.empirical_xy[0, 1] == 0 and rep.empirical_xy[1, 0] == 0
    assert rep.c_error_rate == 0.0
    assert rep.consumed == rep.budget
    assert 0 <= rep.tv <= 1 and np.isfinite(rep.kl)


def test_independent_target_needs_no_communication():
    s = make_system("point(0)", "copy", "uniform", "identity", "uniform")
    cfg = ExperimentConfig(sys=s, n=6, trials=300, seed=2, M=400)
    spec, fam, layout, codec = prepare(cfg)
    assert len(fam.F3 | fam.F5) == 0
    rep = run_experiment(cfg, spec)
    assert rep.tv < 0.02 and rep.rates.R_c == 0.0


def test_results_independent_of_workers():
    cfg, spec, *_ = build("chained", 8, k=2)
    a = run_experiment(cfg.__class__(**{**cfg.__dict__, "trials": 120, "workers": 1}), spec)
    b = run_experiment(cfg.__class__(**{**cfg.__dict__, "trials": 120, "workers": 3}), spec)
    assert a.tv == b.tv and a.block_tv == b.block_tv and a.c_error_rate == b.c_error_rate


def test_runtime_budget():
    cfg, spec, *_ = build("chained", 8, k=2)
    slow = cfg.__class__(**{**cfg.__dict__, "trials": 200, "max_seconds": 0.0})
    with pytest.raises(RuntimeBudgetError):
        run_experiment(slow, spec)


def test_repetition_sidechannel_runs():
    cfg, spec, *_ = build("chained", 8, k=2)
    rep = run_experiment(cfg.__class__(**{**cfg.__dict__, "trials": 100, "sidechannel": "repetition"}), spec)
    assert rep.payload_overhead > 0 and 0 <= rep.tv <= 1


def test_csv_columns_frozen():
    cfg = ExperimentConfig(sys=copy_system(), n=1, trials=50, mode="argmax")
    text = csv_text([run_experiment(cfg)])
    lines = text.splitlines()
    assert lines[0] == "# coordsim csv v1"
    assert lines[1].split(",") == list(CSV_COLUMNS)
    assert len(lines[2].split(",")) == len(CSV_COLUMNS)


def test_smoothed_kl():
    assert np.isfinite(smoothed_kl([10, 0], [0.5, 0.5]))
    assert np.isfinite(smoothed_kl([[5, 0], [0, 5]], [[0.5, 0], [0, 0.5]]))
    assert smoothed_kl([[5, 1], [0, 5]], [[0.5, 0], [0, 0.5]]) == float("inf")


def test_probe_examples():
    x = np.zeros((1000, 1, 4), np.uint8)
    assert block_independence_probe(x, x) == {"pairs": [], "max": None}
    with pytest.raises(ValueError):
        block_independence_probe(np.zeros((999, 2, 4), np.uint8), np.zeros((999, 2, 4), np.uint8))
    # fully dependent fake blocks: block 2 copies block 1
    rng = np.random.default_rng(0)
    xb = rng.integers(0, 2, (2000, 1, 8))
    xx = np.concatenate([xb, xb], axis=1)
    assert block_independence_probe(xx, xx)["max"] > 0.2
    assert probe_from_pair_counts(np.zeros((0, 16))) == {"pairs": [], "max": None}


def test_probe_copy_system():
    cfg = ExperimentConfig(sys=copy_system(), n=4, k=3, trials=10_000, seed=3, mode="argmax")
    rep = run_experiment(cfg)
    assert probe_from_pair_counts(rep.pair_counts)["max"] < 0.05


def test_probe_detects_reused_randomness():
    # X independent of C and Y = C_hat: u2 is made of J bits only, so reusing J repeats y across blocks
    s = make_system("uniform", "copy", "uniform", "identity", "copy(c)")
    cfg = ExperimentConfig(sys=s, n=3, k=3, trials=2000, seed=1, M=1000, mode="argmax")
    honest = run_experiment(cfg)
    bad = run_experiment(cfg, pools_hook=RandomnessPools.with_reused_J)
    h = probe_from_pair_counts(honest.pair_counts)["max"]
    b = probe_from_pair_counts(bad.pair_counts)["max"]
    assert h < 0.05 and b > 0.2
