import numpy as np
import pytest

from vseg.flowops import (
    NEUTRAL_VALUE,
    apply_warp,
    apply_warp_adjoint,
    build_horizon_warps,
    build_warp,
    compose_flow,
    flow_reliability,
    round_half_away,
)


def explicit_warp_matrix(flow):
    """Entry-by-entry oracle: the count-normalized 0/1 scatter matrix."""
    h, w = flow.shape[:2]
    n = h * w
    f = np.zeros((n, n))
    for r in range(h):
        for c in range(w):
            dj = int(round_half_away(flow[r, c, 0]))
            di = int(round_half_away(flow[r, c, 1]))
            tr, tc = r + di, c + dj
            if 0 <= tr < h and 0 <= tc < w:
                f[tr * w + tc, r * w + c] = 1.0
    counts = f.sum(axis=1)
    valid = counts > 0
    norm = np.divide(f, counts[:, None], where=counts[:, None] > 0)
    return norm, valid


def test_round_half_away():
    x = np.array([0.0, 0.5, -0.5, 1.4, -1.4, 1.5, 2.5, -2.5])
    np.testing.assert_array_equal(round_half_away(x), [0, 1, -1, 1, -1, 2, 3, -3])


def test_zero_flow_identity():
    op = build_warp(np.zeros((3, 3, 2)))
    assert op.valid.all()
    assert (op.contributor_count == 1).all()
    np.testing.assert_array_equal(op.src_idx, op.tgt_idx)
    mask = np.linspace(0.1, 0.9, 9)
    warped, valid = apply_warp(op, mask)
    np.testing.assert_allclose(warped, mask)
    assert valid.all()


def test_uniform_shift_boundary():
    flow = np.zeros((3, 3, 2))
    flow[:, :, 0] = 1.0  # dx = +1
    op = build_warp(flow)
    # rightmost column's sources fall off the grid
    assert op.src_idx.size == 6
    # leftmost target column receives nothing
    valid = op.valid.reshape(3, 3)
    assert not valid[:, 0].any()
    assert valid[:, 1:].all()


def test_collision_counts_and_mean():
    flow = np.zeros((1, 3, 2))
    flow[0, 0, 0] = 1.0  # cell 0 -> cell 1
    op = build_warp(flow)
    assert op.contributor_count[1] == 2
    warped, valid = apply_warp(op, np.array([0.2, 0.8, 0.4]))
    assert warped[1] == pytest.approx(0.5)
    assert not valid[0]
    assert warped[0] == NEUTRAL_VALUE


def test_apply_warp_matches_matrix_oracle():
    rng = np.random.default_rng(21)
    for _ in range(25):
        h, w = rng.integers(3, 9, size=2)
        flow = rng.integers(-3, 4, size=(h, w, 2)).astype(np.float64)
        flow += rng.normal(0, 0.2, size=flow.shape)  # rounding must agree too
        mask = rng.random(h * w)
        op = build_warp(flow)
        warped, valid = apply_warp(op, mask)
        f, valid_ref = explicit_warp_matrix(flow)
        expected = f @ mask
        np.testing.assert_array_equal(valid, valid_ref)
        np.testing.assert_allclose(warped[valid], expected[valid], atol=1e-6)
        assert np.all(warped[~valid] == NEUTRAL_VALUE)


def test_apply_warp_linearity():
    rng = np.random.default_rng(3)
    flow = rng.integers(-2, 3, size=(6, 6, 2)).astype(float)
    op = build_warp(flow)
    m1, m2 = rng.random(36), rng.random(36)
    a, b = 0.3, 1.7
    combo, valid = apply_warp(op, a * m1 + b * m2)
    w1, _ = apply_warp(op, m1)
    w2, _ = apply_warp(op, m2)
    np.testing.assert_allclose(combo[valid], (a * w1 + b * w2)[valid], atol=1e-6)


def test_adjoint_matches_matrix_transpose():
    rng = np.random.default_rng(8)
    flow = rng.integers(-2, 3, size=(5, 7, 2)).astype(float)
    op = build_warp(flow)
    f, valid = explicit_warp_matrix(flow)
    g = rng.random(35)
    g[~valid] = 0.0
    np.testing.assert_allclose(apply_warp_adjoint(op, g), f.T @ g, atol=1e-12)


def test_warp_shape_mismatch():
    op = build_warp(np.zeros((3, 3, 2)))
    with pytest.raises(ValueError, match="cells"):
        apply_warp(op, np.zeros(5))


def test_unreliable_sources_dropped():
    rel = np.ones((3, 3), dtype=np.uint8)
    rel[0, 0] = 0
    op = build_warp(np.zeros((3, 3, 2)), reliability=rel)
    assert 0 not in op.src_idx
    assert not op.valid[0]


def test_reliability_perfect_flow():
    rng = np.random.default_rng(2)
    frame_q = rng.random((8, 8, 1))
    shift = np.zeros((8, 8, 2))
    flags = flow_reliability(frame_q, frame_q, shift, k=90)
    assert flags.all()


def test_reliability_flags_corrupted_locations():
    rng = np.random.default_rng(13)
    h, w = 10, 10
    frame_q = rng.random((h, w, 1))
    flow = np.zeros((h, w, 2))
    frame_p = frame_q.copy()
    # corrupt exactly 10 locations: their content no longer matches the flow
    idx = rng.choice(h * w, size=10, replace=False)
    corrupted = np.zeros(h * w, dtype=bool)
    corrupted[idx] = True
    frame_p.reshape(-1, 1)[idx] += 5.0
    flags = flow_reliability(frame_p, frame_q, flow, k=90)
    np.testing.assert_array_equal(flags.ravel() == 0, corrupted)


def test_reliability_k100_keeps_all():
    rng = np.random.default_rng(4)
    frame_p = rng.random((6, 6, 1))
    frame_q = rng.random((6, 6, 1))
    flags = flow_reliability(frame_p, frame_q, np.zeros((6, 6, 2)), k=100)
    assert flags.all()


def test_reliability_cardinality_strictly_increasing():
    h, w = 10, 12
    n = h * w
    frame_p = np.arange(1, n + 1, dtype=np.float64).reshape(h, w, 1) ** 1.1
    frame_q = np.zeros((h, w, 1))
    flags = flow_reliability(frame_p, frame_q, np.zeros((h, w, 2)), k=90)
    n_unreliable = int((flags == 0).sum())
    assert abs(n_unreliable - int(np.ceil(0.1 * n))) <= 1


def test_compose_flow_integer_translations():
    a = np.zeros((6, 6, 2))
    a[:, :, 0] = 1.0
    b = np.zeros((6, 6, 2))
    b[:, :, 1] = 2.0
    comp = compose_flow(a, b)
    np.testing.assert_allclose(comp[:3, :4, 0], 1.0)
    np.testing.assert_allclose(comp[:3, :4, 1], 2.0)


def test_horizon_warps_shapes():
    rng = np.random.default_rng(6)
    flows_f = [rng.normal(0, 0.3, (5, 5, 2)) for _ in range(3)]
    flows_b = [-f for f in flows_f]
    wf, wb = build_horizon_warps(flows_f, flows_b, horizon=3)
    assert [len(r) for r in wf] == [3, 2, 1]
    assert [len(r) for r in wb] == [3, 2, 1]


def test_horizon_two_equals_composed_flow():
    rng = np.random.default_rng(15)
    flows_f = [rng.integers(-1, 2, (6, 6, 2)).astype(float) for _ in range(2)]
    flows_b = [-f for f in flows_f]
    wf, _ = build_horizon_warps(flows_f, flows_b, horizon=2)
    direct = build_warp(compose_flow(flows_f[0], flows_f[1]))
    np.testing.assert_array_equal(wf[1][0].tgt_idx, direct.tgt_idx)
    np.testing.assert_array_equal(wf[1][0].src_idx, direct.src_idx)
