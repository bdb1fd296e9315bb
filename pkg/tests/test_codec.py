import numpy as np
import pytest

from coordsim.codec import CoordCodec, RandomnessPools, export_traces, load_traces, unpack_word
from coordsim.polar import polar_transform
from coordsim.metrics import consumed_bits, dmc_transmit, randomness_budget
from coordsim.presets import make_system
from coordsim.sets import build_family, build_spectrum, chain_layout

from conftest import build


def run_pipeline(codec, layout, sys, trials, k, seed, mode="sample", literal=False, pools=None):
    rng = np.random.default_rng(seed)
    N = layout.N
    q_x = sys.joint.marginal(("X",)).table
    x = rng.choice(q_x.size, size=(trials, k, N), p=q_x).astype(np.uint8)
    pools = RandomnessPools.generate(layout, trials, seed) if pools is None else pools
    enc = codec.encode_run(x, pools)
    b = dmc_transmit(enc.a, sys.p_b_given_a, rng)
    dec = codec.decode_run(b, enc.payload, pools, mode, literal)
    return x, pools, enc, b, dec


@pytest.fixture(scope="module")
def chained():
    cfg, spec, fam, layout, codec = build("chained", 8, k=3)
    assert layout.chaining, "test system must exercise chaining"
    return cfg, fam, layout, codec


@pytest.fixture(scope="module")
def copy4():
    cfg, spec, fam, layout, codec = build("copy", 4, k=3)
    return cfg, fam, layout, codec


def test_seeded_determinism(chained):
    cfg, fam, layout, codec = chained
    a = run_pipeline(codec, layout, cfg.sys, 20, 3, seed=11)
    b = run_pipeline(codec, layout, cfg.sys, 20, 3, seed=11)
    for r1, r2 in ((a[2].u2, b[2].u2), (a[2].c, b[2].c), (a[2].u1, b[2].u1), (a[4].c_hat, b[4].c_hat),
                   (a[4].y, b[4].y)):
        np.testing.assert_array_equal(r1, r2)
    c = run_pipeline(codec, layout, cfg.sys, 20, 3, seed=12)
    assert not np.array_equal(a[2].u2, c[2].u2)


def test_structural_identities(chained):
    cfg, fam, layout, codec = chained
    x, pools, enc, b, dec = run_pipeline(codec, layout, cfg.sys, 10, 3, seed=1)
    from coordsim.polar import polar_transform
    np.testing.assert_array_equal(enc.c, polar_transform(enc.u2))
    np.testing.assert_array_equal(enc.a, polar_transform(enc.u1))
    np.testing.assert_array_equal(dec.c_hat, polar_transform(dec.u2_hat))
    np.testing.assert_array_equal(dec.y, polar_transform(dec.t))


def test_xor_embedding_identity(chained):
    cfg, fam, layout, codec = chained
    x, pools, enc, b, dec = run_pipeline(codec, layout, cfg.sys, 30, 3, seed=2)
    s = layout.F31_size
    a31, a32 = layout.F31_acute.members(), layout.F32_acute.members()
    for i in (1, 2):
        prev = enc.u2[:, i - 1][:, layout.f3]
        f31, f32 = codec.masks(pools, i)
        np.testing.assert_array_equal(enc.u2[:, i][:, a31], prev[:, :s] ^ f31)
        np.testing.assert_array_equal(enc.u2[:, i][:, a32], prev[:, s:] ^ f32)
    # block 1 carries only the masks
    f31, f32 = codec.masks(pools, 0)
    np.testing.assert_array_equal(enc.u2[:, 0][:, a31], f31)
    np.testing.assert_array_equal(enc.u2[:, 0][:, a32], f32)
    np.testing.assert_array_equal(enc.payload, enc.u2[:, 2][:, layout.f3])


def test_pool_positions_shared(chained):
    cfg, fam, layout, codec = chained
    x, pools, enc, b, dec = run_pipeline(codec, layout, cfg.sys, 30, 3, seed=3)
    for pos in (layout.j_positions, layout.j1_positions):
        np.testing.assert_array_equal(dec.u2_hat[..., pos], enc.u2[..., pos])
    # J1_bar and J2_bar are reused by every block
    np.testing.assert_array_equal(enc.u2[:, 0][:, layout.j1_positions], enc.u2[:, 2][:, layout.j1_positions])
    np.testing.assert_array_equal(enc.u1[:, 0][:, layout.j2_positions], enc.u1[:, 1][:, layout.j2_positions])


def test_conditional_exactness(chained):
    cfg, fam, layout, codec = chained
    x, pools, enc, b, dec = run_pipeline(codec, layout, cfg.sys, 100, 3, seed=4, mode="argmax")
    acute = np.concatenate([layout.F31_acute.members(), layout.F32_acute.members()])
    ok = (dec.u2_hat[..., acute] == enc.u2[..., acute]).all(axis=-1)
    msg = (fam.F1 | fam.F2).members()
    assert ok.any()
    np.testing.assert_array_equal(dec.u2_hat[..., msg][ok], enc.u2[..., msg][ok])


def test_randomness_accounting_exact(chained):
    cfg, fam, layout, codec = chained
    x, pools, enc, b, dec = run_pipeline(codec, layout, cfg.sys, 5, 3, seed=5)
    assert consumed_bits(pools) == randomness_budget(fam, 3)
    assert randomness_budget(fam, 3)["common"] == len(fam.V_C_XY) + len(fam.F7) + 3 * len(fam.V_C_X - fam.V_C_XY)


def test_missing_chain_state_and_payload(chained):
    cfg, fam, layout, codec = chained
    x, pools, enc, b, dec = run_pipeline(codec, layout, cfg.sys, 4, 3, seed=6)
    with pytest.raises(ValueError):
        codec.encode_block_c(x[:, 1], pools, 1, None)
    with pytest.raises(ValueError):
        codec.decode_run(b, None, pools)
    with pytest.raises(ValueError):
        codec.encode_run(x[:, :2], pools)


def test_pool_exhaustion(chained):
    cfg, fam, layout, codec = chained
    pools = RandomnessPools.generate(layout, 4, 0)
    with pytest.raises(IndexError, match="exhausted"):
        pools.read("J", 3)
    with pytest.raises(IndexError):
        codec.encode_block_a(np.zeros((4, 256), np.uint8), np.zeros((4, 256), np.uint8), pools, 5)


def test_pool_sizes_match_layout(chained):
    cfg, fam, layout, codec = chained
    p = RandomnessPools.generate(layout, 7, 0)
    assert p.J.shape == (7, 3, layout.J_size)
    assert p.J1_bar.shape == (7, layout.J1_bar_size)
    assert p.J2_bar.shape == (7, len(fam.F7))
    assert p.M1.shape == (7, 3, len(fam.F6))
    assert p.M2.shape == (7, 3, len(fam.V_Y_BC))
    assert layout.J_size == len(fam.F1 | fam.F4check)


def test_reused_j_control(chained):
    cfg, fam, layout, codec = chained
    p = RandomnessPools.generate(layout, 5, 0).with_reused_J()
    for i in range(3):
        np.testing.assert_array_equal(p.J[:, i], p.J[:, 0])


def test_k1_payload_and_literal_noop():
    cfg, spec, fam, layout, codec = build("chained", 8, k=1)
    x, pools, enc, b, dec = run_pipeline(codec, layout, cfg.sys, 40, 1, seed=7)
    np.testing.assert_array_equal(enc.payload, enc.u2[:, 0][:, layout.f3])
    dec2 = codec.decode_run(b, enc.payload, pools, "sample", literal_step4=True)
    np.testing.assert_array_equal(dec.y, dec2.y)


def test_no_chaining_uses_pools_verbatim():
    s = make_system("uniform", "copy", "bsc(c, 0.1)", "identity", "copy(b)")
    spec = build_spectrum(s, 6, 800, seed=0)
    fam = build_family(spec)
    layout = chain_layout(fam, 2)
    assert len(fam.F3) == 0 and not layout.chaining and len(fam.F1) > 0
    codec = CoordCodec(s, fam, layout)
    x = np.random.default_rng(0).integers(0, 2, (10, 2, 64)).astype(np.uint8)
    pools = RandomnessPools.generate(layout, 10, 3)
    enc = codec.encode_run(x, pools)
    assert enc.payload.shape == (10, 0)
    for i in range(2):
        np.testing.assert_array_equal(enc.u2[:, i][:, layout.j_positions], pools.J[:, i])
    dec = codec.decode_run(enc.a, None, pools, "argmax")
    np.testing.assert_array_equal(dec.c_hat, enc.c)


def test_copy_system_exact_reconstruction(copy4):
    cfg, fam, layout, codec = copy4
    for seed in range(5):
        x, pools, enc, b, dec = run_pipeline(codec, layout, cfg.sys, 30, 3, seed=seed, mode="argmax")
        np.testing.assert_array_equal(enc.c, x)       # C = f(X), whatever the seed
        np.testing.assert_array_equal(enc.a, enc.c)   # A = C
        np.testing.assert_array_equal(dec.u2_hat, enc.u2)
        np.testing.assert_array_equal(dec.c_hat, enc.c)
        np.testing.assert_array_equal(dec.y, x)
    assert len(fam.V_Y_BC) == 0 and len(fam.F6) == 0 and pools.M1.shape[-1] == 0


def test_bsc_half_f5_agreement():
    # code built for a noiseless link, then operated over BSC(0.5): F5 decisions are coin flips
    good = make_system("uniform", "copy", "copy(c)", "identity", "copy(b)")
    bad = make_system("uniform", "copy", "copy(c)", "bsc(0.5)", "copy(b)")
    spec = build_spectrum(good, 5, 400, seed=0)
    fam = build_family(spec)
    layout = chain_layout(fam, 1)
    assert len(fam.F5) == 32
    codec = CoordCodec(bad, fam, layout)
    x, pools, enc, b, dec = run_pipeline(codec, layout, bad, 2000, 1, seed=1)
    f5 = fam.F5.members()
    agree = (dec.u2_hat[..., f5] == enc.u2[..., f5]).mean()
    n = enc.u2[..., f5].size
    assert abs(agree - 0.5) <= 3 * np.sqrt(0.25 / n)


def test_synthesis_crossover():
    s = make_system("uniform", "copy", "copy(c)", "identity", "bsc(b, 0.1)")
    spec = build_spectrum(s, 8, 600, seed=0)
    fam = build_family(spec)
    layout = chain_layout(fam, 1)
    codec = CoordCodec(s, fam, layout)
    rng = np.random.default_rng(3)
    b = rng.integers(0, 2, (40, 256)).astype(np.uint8)
    pools = RandomnessPools.generate(layout, 40, 4)
    _, y = codec.synthesize_y(b, b, pools, 0)
    rate = (y != b).mean()
    assert abs(rate - 0.1) <= 3 * np.sqrt(0.09 / b.size)


def test_synthesis_deterministic_and_uniform():
    s = make_system("uniform", "copy", "copy(c)", "identity", "uniform")
    spec = build_spectrum(s, 4, 300, seed=0)
    fam = build_family(spec)
    assert len(fam.V_Y_BC) == 16
    codec = CoordCodec(s, fam, chain_layout(fam, 1))
    pools = RandomnessPools.generate(codec.layout, 4000, 1)
    b = np.zeros((4000, 16), np.uint8)
    _, y = codec.synthesize_y(b, b, pools, 0)
    np.testing.assert_array_equal(y, polar_transform(pools.M2[:, 0]))
    assert abs(y.mean() - 0.5) < 3 * np.sqrt(0.25 / y.size)
    # Y = B: nothing to simulate
    cfg, spec2, fam2, layout2, codec2 = build("copy", 4, k=1)
    b = np.random.default_rng(0).integers(0, 2, (5, 16)).astype(np.uint8)
    pools2 = RandomnessPools.generate(layout2, 5, 0)
    np.testing.assert_array_equal(codec2.synthesize_y(b, b, pools2, 0)[1], b)


def test_trace_round_trip(tmp_path, chained):
    cfg, fam, layout, codec = chained
    x, pools, enc, b, dec = run_pipeline(codec, layout, cfg.sys, 3, 3, seed=8)
    path = tmp_path / "traces.jsonl"
    assert export_traces(path, x, enc, b, dec, {"seed": 8}) == 9
    recs = load_traces(path)
    assert len(recs) == 9 and recs[4]["trial"] == 1 and recs[4]["block"] == 2 and recs[4]["seed"] == 8
    np.testing.assert_array_equal(unpack_word(recs[4]["c_hat"], 256), dec.c_hat[1, 1])
    np.testing.assert_array_equal(unpack_word(recs[4]["u2"], 256), enc.u2[1, 1])
    assert recs[4]["b"]  # BSC output is binary
    np.testing.assert_array_equal(unpack_word(recs[4]["x"], 256, binary=False), x[1, 1])
