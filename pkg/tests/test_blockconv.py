import numpy as np
import pytest

from convhybrid import blockconv as bc
from convhybrid.core import (
    ExplicitFilter,
    GroupSpec,
    SeqTensor,
    causal_conv_taps_grad,
    direct_causal_conv,
    full_toeplitz,
    uniform_groups,
)
from convhybrid.rand import make_rng
from convhybrid.testing import central_diff, random_explicit_groups, random_seq, rel_err


def test_spill_count_values():
    # spill factors needed beyond the diagonal block: ceil((lh-1)/lb)
    cases = {(1, 3): 0, (3, 3): 1, (4, 3): 1, (5, 3): 2, (7, 3): 2, (9, 2): 4}
    for (lh, lb), want in cases.items():
        assert bc.spill_count(lh, lb) == want, f"spill_count({lh},{lb})"


def test_build_factors_four_taps_block_three():
    rng = make_rng(40)
    h = rng.standard_normal(4)
    f = bc.build_factors(h, 3)
    assert f.blocks.shape == (2, 3, 3)
    assert f.spill_count == 1
    want0 = np.array([
        [h[0], 0.0, 0.0],
        [h[1], h[0], 0.0],
        [h[2], h[1], h[0]],
    ])
    want1 = np.array([
        [h[3], h[2], h[1]],
        [0.0, h[3], h[2]],
        [0.0, 0.0, h[3]],
    ])
    assert np.array_equal(f.blocks[0], want0)
    assert np.array_equal(f.blocks[1], want1)


def test_assemble_toeplitz_six_by_six():
    rng = make_rng(41)
    h = rng.standard_normal(4)
    t = bc.assemble_toeplitz(bc.build_factors(h, 3), 6)
    assert t.shape == (6, 6)
    for row in range(6):
        for col in range(6):
            lag = row - col
            want = h[lag] if 0 <= lag < 4 else 0.0
            assert t[row, col] == want, f"T[{row},{col}]"


def test_assemble_matches_full_toeplitz_random():
    rng = make_rng(42)
    for lh, lb, length in ((1, 4, 12), (5, 4, 16), (9, 4, 20), (6, 5, 17)):
        taps = rng.standard_normal(lh)
        got = bc.assemble_toeplitz(bc.build_factors(taps, lb), length)
        assert np.array_equal(got, full_toeplitz(taps, length)), f"(lh={lh}, lb={lb})"


def test_build_factors_rejects_bad_block():
    with pytest.raises(ValueError):
        bc.build_factors([1.0], 0)


def test_block_conv_matches_direct():
    rng = make_rng(43)
    for d, dg, length, lh, lb in (
        (1, 1, 32, 4, 8),
        (4, 2, 100, 9, 16),
        (8, 4, 257, 40, 16),  # length not a block multiple, three spill factors
        (2, 1, 64, 64, 8),    # filter as long as the sequence
    ):
        groups = random_explicit_groups(rng, d, dg, lh)
        x = random_seq(rng, d, length)
        got = bc.block_conv(x, groups, lb).data
        want = direct_causal_conv(x, groups).data
        err = np.max(np.abs(got - want))
        assert err < 1e-12, f"(d={d}, dg={dg}, l={length}, lh={lh}, lb={lb}): {err}"


def test_block_conv_single_chunk_is_dense_toeplitz():
    rng = make_rng(44)
    taps = rng.standard_normal(5)
    x = random_seq(rng, 3, 16)
    got = bc.block_conv(x, uniform_groups(3, taps), 16).data
    want = x.data @ full_toeplitz(taps, 16).T
    assert np.max(np.abs(got - want)) < 1e-13


def test_two_stage_eligibility_boundary():
    rng = make_rng(45)
    x = random_seq(rng, 2, 32)
    fits = random_explicit_groups(rng, 2, 1, 9)  # lh = lb + 1
    bc.two_stage_forward(x, fits, 8)
    too_long = random_explicit_groups(rng, 2, 1, 10)  # lh = lb + 2
    with pytest.raises(bc.TwoStageIneligibleError):
        bc.two_stage_forward(x, too_long, 8)


def test_two_stage_matches_direct():
    rng = make_rng(46)
    for d, dg, length, lh, lb in ((1, 1, 48, 3, 4), (4, 4, 96, 17, 16), (6, 2, 65, 8, 8)):
        groups = random_explicit_groups(rng, d, dg, lh)
        x = random_seq(rng, d, length)
        got = bc.two_stage_forward(x, groups, lb).data
        want = direct_causal_conv(x, groups).data
        assert np.max(np.abs(got - want)) < 1e-12


def test_two_stage_gating_oracle():
    rng = make_rng(47)
    groups = random_explicit_groups(rng, 4, 2, 5)
    v, q, k = (random_seq(rng, 4, 40) for _ in range(3))
    got = bc.two_stage_forward(v, groups, 8, q=q, k=k).data
    want = q.data * direct_causal_conv(SeqTensor(k.data * v.data), groups).data
    assert np.max(np.abs(got - want)) < 1e-12


def test_two_stage_gate_shape_mismatch():
    rng = make_rng(48)
    groups = random_explicit_groups(rng, 4, 2, 5)
    v = random_seq(rng, 4, 40)
    with pytest.raises(ValueError):
        bc.two_stage_forward(v, groups, 8, q=random_seq(rng, 4, 39))


def test_multiply_counter_both_factors_always_run():
    rng = make_rng(49)
    counter = bc.MultiplyCounter()
    x = random_seq(rng, 4, 64)
    bc.two_stage_forward(x, random_explicit_groups(rng, 4, 2, 9), 8, counter=counter)
    # 2 GEMMs per chunk: 2 * lb^2 * d * (l / lb)
    assert counter.multiplies == 2 * 8 * 8 * 4 * 8


def test_two_stage_flops_closed_form():
    assert bc.two_stage_flops(1024, 128, 64) == 16_777_216
    assert bc.two_stage_flops(100, 8, 2) == 2 * 64 * 2 * 13  # ceil(100/8) = 13 chunks


def test_counter_matches_closed_form_when_grouped():
    rng = make_rng(50)
    counter = bc.MultiplyCounter()
    x = random_seq(rng, 8, 120)
    bc.two_stage_forward(x, random_explicit_groups(rng, 8, 4, 5), 16, counter=counter)
    assert counter.multiplies == bc.two_stage_flops(120, 16, 8)


def test_backward_hand_example():
    # d=1, h=[1,1], v=[1,2,3,4], dy=1 -> dtaps = [y'd dot shifts] = [10, 6]
    _, saved = bc.two_stage_forward_saved(SeqTensor([[1.0, 2.0, 3.0, 4.0]]),
                                          uniform_groups(1, [1.0, 1.0]), 2)
    g = bc.two_stage_backward(saved, np.ones((1, 4)))
    assert np.array_equal(g.dtaps, [[10.0, 6.0]])
    assert np.array_equal(g.dv, [[2.0, 2.0, 2.0, 1.0]])  # column sums of T


def test_backward_zero_cotangent():
    rng = make_rng(51)
    groups = random_explicit_groups(rng, 4, 2, 5)
    v, q, k = (random_seq(rng, 4, 32) for _ in range(3))
    _, saved = bc.two_stage_forward_saved(v, groups, 8, q=q, k=k)
    g = bc.two_stage_backward(saved, np.zeros((4, 32)))
    for name, arr in (("dv", g.dv), ("dq", g.dq), ("dk", g.dk), ("dtaps", g.dtaps)):
        assert np.max(np.abs(arr)) == 0.0, name


def test_backward_finite_differences_all_inputs():
    rng = make_rng(52)
    groups = random_explicit_groups(rng, 4, 2, 5)
    v, q, k = (random_seq(rng, 4, 24) for _ in range(3))
    w = rng.standard_normal((4, 24))
    _, saved = bc.two_stage_forward_saved(v, groups, 4, q=q, k=k)
    g = bc.two_stage_backward(saved, w)

    def run(vd=None, qd=None, kd=None, bank=None):
        return float(np.sum(w * bc.two_stage_forward(
            SeqTensor(vd if vd is not None else v.data),
            bank if bank is not None else groups, 4,
            q=SeqTensor(qd if qd is not None else q.data),
            k=SeqTensor(kd if kd is not None else k.data)).data))

    assert rel_err(g.dv, central_diff(lambda a: run(vd=a), v.data)) < 1e-6
    assert rel_err(g.dq, central_diff(lambda a: run(qd=a), q.data)) < 1e-6
    assert rel_err(g.dk, central_diff(lambda a: run(kd=a), k.data)) < 1e-6

    taps0 = np.stack([f.taps for f in groups.filters])

    def loss_taps(tp):
        bank = GroupSpec(4, 2, tuple(ExplicitFilter(row) for row in tp))
        return run(bank=bank)

    assert rel_err(g.dtaps, central_diff(loss_taps, taps0)) < 1e-6


def test_backward_taps_two_pass_equals_correlation():
    rng = make_rng(53)
    groups = random_explicit_groups(rng, 6, 3, 9)
    v = random_seq(rng, 6, 70)
    dy = rng.standard_normal((6, 70))
    _, saved = bc.two_stage_forward_saved(v, groups, 8)
    assert np.max(np.abs(bc.two_stage_backward(saved, dy).dtaps
                         - causal_conv_taps_grad(dy, v.data, groups))) < 1e-12


def test_backward_requires_saved():
    with pytest.raises(ValueError):
        bc.two_stage_backward(None, np.zeros((1, 4)))


def test_chunk_parallel_matches_direct():
    rng = make_rng(54)
    for d, length, lh, lb in ((1, 64, 5, 8), (16, 512, 9, 8), (4, 100, 17, 16)):
        taps = rng.standard_normal(lh)
        x = random_seq(rng, d, length)
        got = bc.chunk_parallel_forward(x, taps, lb).data
        want = direct_causal_conv(x, uniform_groups(d, taps)).data
        assert np.max(np.abs(got - want)) < 1e-12


def test_chunk_parallel_eligibility():
    rng = make_rng(55)
    x = random_seq(rng, 2, 32)
    with pytest.raises(bc.TwoStageIneligibleError):
        bc.chunk_parallel_forward(x, rng.standard_normal(10), 8)


def test_chunk_parallel_counter():
    rng = make_rng(56)
    counter = bc.MultiplyCounter()
    x = random_seq(rng, 4, 64)
    bc.chunk_parallel_forward(x, rng.standard_normal(9), 8, counter=counter)
    assert counter.multiplies == bc.two_stage_flops(64, 8, 4)
