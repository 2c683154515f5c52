import numpy as np
import pytest

from aspen.errors import ConfigError, ParameterError
from aspen.fusion import (
    STRATEGIES,
    BilinearFusion,
    CrossAttentionFusion,
    GLUFusion,
    GlobalAttentionFusion,
    MultiplicativeFusion,
    SpatialAttentionFusion,
    StaticFusion,
    build_fusion,
)
from aspen.nn.tensor import Tensor

from oracles import sigmoid

F64 = np.float64
D = 8


def inputs(seed=0, B=5, d=D):
    r = np.random.default_rng(seed)
    return Tensor(r.normal(size=(B, d))), Tensor(r.normal(size=(B, d)))


def zero_params(module):
    for p in module.parameters():
        p.data[...] = 0.0


def softmax(z):
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def mlp(m, c):
    return np.maximum(c @ m.fc1.weight.data.T + m.fc1.bias.data, 0) @ m.fc2.weight.data.T + m.fc2.bias.data


def randomize(module, seed=1):
    r = np.random.default_rng(seed)
    for p in module.parameters():
        p.data = r.normal(size=p.shape)


def test_registry_has_seven_strategies():
    assert len(STRATEGIES) == 7
    r = np.random.default_rng(0)
    for name in STRATEGIES:
        assert build_fusion(name, D, r, rank=4, dtype=F64).name == name
    with pytest.raises(ConfigError):
        build_fusion("concat", D, r)


@pytest.mark.parametrize("name", STRATEGIES)
def test_output_shape_and_mismatch(name):
    m = build_fusion(name, D, np.random.default_rng(0), rank=4, heads=2, dtype=F64)
    x_s, x_t = inputs()
    pc = Tensor(np.random.default_rng(2).normal(size=(5, 3, D)))
    assert m(x_s, x_t, pc).shape == (5, D)
    if not m.needs_per_channel:
        with pytest.raises(ParameterError):
            m(x_s, Tensor(np.zeros((5, D + 1))))


# ---------------------------------------------------------------- static


def test_static():
    m = StaticFusion(D, F64)
    x_s, x_t = inputs()
    assert np.array_equal(m.fuse(x_s, x_s).data, x_s.data)
    assert not np.any(m.fuse(x_s, -x_s).data)
    assert np.allclose(m.fuse(x_s, x_t).data, (x_s.data + x_t.data) / 2, atol=1e-12, rtol=0)


# ---------------------------------------------------------------- global attention


def test_global_attention_zero_mlp_is_static_plus_residual():
    m = GlobalAttentionFusion(D, np.random.default_rng(0), dtype=F64)
    zero_params(m)
    x_s, x_t = inputs()
    mean = (x_s.data + x_t.data) / 2
    # residual gate sigmoid(0) = 0.5 adds half the mean
    assert np.allclose(m.fuse(x_s, x_t).data, 1.5 * mean, atol=1e-12)
    assert np.allclose(m.last_weights, 0.5)


def test_global_attention_weights_sum_to_one_and_match_oracle():
    m = GlobalAttentionFusion(D, np.random.default_rng(0), tau=0.7, dtype=F64)
    randomize(m)
    x_s, x_t = inputs(3)
    out = m.fuse(x_s, x_t).data
    a = softmax(mlp(m.mlp, np.concatenate([x_s.data, x_t.data], axis=1)) / 0.7)
    assert np.all(np.abs(m.last_weights.sum(axis=1) - 1) <= 1e-12)
    ref = a[:, :1] * x_s.data + a[:, 1:] * x_t.data + sigmoid(m.alpha.data) * (x_s.data + x_t.data) / 2
    assert np.allclose(out, ref, atol=1e-12, rtol=0)


def test_global_attention_high_temperature_is_uniform():
    m = GlobalAttentionFusion(D, np.random.default_rng(0), tau=1e3, dtype=F64)
    x_s, x_t = inputs(4)
    m.fuse(x_s, x_t)
    assert np.max(np.abs(m.last_weights - 0.5)) < 0.01


def test_nonpositive_temperature_rejected():
    with pytest.raises(ConfigError):
        GlobalAttentionFusion(D, np.random.default_rng(0), tau=0.0)


# ---------------------------------------------------------------- spatial attention


def test_spatial_attention_single_channel_matches_global_attention():
    r = np.random.default_rng(0)
    sp = SpatialAttentionFusion(D, r, dtype=F64)
    randomize(sp)
    ga = GlobalAttentionFusion(D, r, dtype=F64)
    ga.mlp = sp.mlp
    ga.alpha.data[:] = -np.inf  # residual off: sigmoid(-inf) = 0
    x_s, x_t = inputs(5)
    one = sp.fuse(x_s, x_t, Tensor(x_s.data[:, None, :])).data
    assert np.allclose(one, ga.fuse(x_s, x_t).data, atol=1e-12)
    dup = sp.fuse(x_s, x_t, Tensor(np.repeat(x_s.data[:, None, :], 4, axis=1))).data
    assert np.allclose(dup, one, atol=1e-9)
    assert np.all(np.abs(sp.last_weights.sum(axis=-1) - 1) <= 1e-12)


def test_spatial_attention_requires_per_channel():
    m = SpatialAttentionFusion(D, np.random.default_rng(0), dtype=F64)
    with pytest.raises(ParameterError):
        m(*inputs())


# ---------------------------------------------------------------- GLU


def test_glu_gate():
    m = GLUFusion(D, np.random.default_rng(0), dtype=F64)
    x_s, x_t = inputs(6)
    zero_params(m)
    assert np.allclose(m.fuse(x_s, x_t).data, (x_s.data + x_t.data) / 2, atol=1e-12)
    randomize(m)
    m.fuse(Tensor(x_s.data * 3), x_t)
    assert np.all((m.last_weights > 0) & (m.last_weights < 1))
    m.gate.bias.data[:] = -1e4
    assert np.max(np.abs(m.fuse(x_s, x_t).data)) < 1e-12


# ---------------------------------------------------------------- multiplicative


def identity_projections(m):
    zero_params(m)
    m.proj_s.weight.data = np.eye(D)
    m.proj_t.weight.data = np.eye(D)


def test_multiplicative_identity_is_product():
    m = MultiplicativeFusion(D, np.random.default_rng(0), dtype=F64).eval()
    identity_projections(m)
    x_s, x_t = inputs(7)
    assert np.array_equal(m.fuse(x_s, x_t).data, x_s.data * x_t.data)


def test_multiplicative_and_gate_is_exact():
    m = MultiplicativeFusion(D, np.random.default_rng(0), dtype=F64).eval()
    randomize(m)
    x_s, x_t = inputs(8)
    # coordinate 3 of the temporal projection is exactly zero for every input
    m.proj_t.weight.data[3] = 0.0
    m.proj_t.bias.data[3] = 0.0
    out = m.fuse(x_s, Tensor(1e6 * x_t.data)).data
    assert np.all(out[:, 3] == 0.0) and np.all(out[:, 2] != 0.0)


def test_multiplicative_matches_oracle():
    m = MultiplicativeFusion(D, np.random.default_rng(0), dtype=F64).eval()
    randomize(m)
    x_s, x_t = inputs(9)
    ps = x_s.data @ m.proj_s.weight.data.T + m.proj_s.bias.data
    pt = x_t.data @ m.proj_t.weight.data.T + m.proj_t.bias.data
    assert np.allclose(m.fuse(x_s, x_t).data, ps * pt, atol=1e-12, rtol=0)


# ---------------------------------------------------------------- bilinear


def test_bilinear_full_rank_identity_equals_multiplicative():
    r = np.random.default_rng(0)
    bl = BilinearFusion(D, r, rank=D, dtype=F64).eval()
    zero_params(bl)
    for lin in (bl.u_s, bl.u_t, bl.out):
        lin.weight.data = np.eye(D)
    mu = MultiplicativeFusion(D, r, dtype=F64).eval()
    identity_projections(mu)
    x_s, x_t = inputs(10)
    assert np.max(np.abs(bl.fuse(x_s, x_t).data - mu.fuse(x_s, x_t).data)) <= 1e-9


def test_bilinear_is_linear_in_each_input():
    bl = BilinearFusion(D, np.random.default_rng(0), rank=4, dtype=F64).eval()
    randomize(bl)
    bl.out.bias.data[:] = 0.0
    x_s, x_t = inputs(11)
    base = bl.fuse(x_s, x_t).data
    assert np.allclose(bl.fuse(Tensor(2.5 * x_s.data), x_t).data, 2.5 * base, atol=1e-10)
    assert np.allclose(bl.fuse(x_s, Tensor(-3 * x_t.data)).data, -3 * base, atol=1e-10)


def test_bilinear_rank_bounds():
    with pytest.raises(ConfigError):
        BilinearFusion(D, np.random.default_rng(0), rank=D + 1)


# ---------------------------------------------------------------- cross attention


def test_cross_attention_length_one():
    m = CrossAttentionFusion(D, np.random.default_rng(0), heads=2, dtype=F64)
    randomize(m)
    x_s, x_t = inputs(12)
    attended = m.attend(x_s, x_t).data
    assert np.allclose(m.last_attention, 1.0)
    ref = x_t.data @ m.w_v.weight.data.T @ m.w_o.weight.data.T
    assert np.allclose(attended, ref, atol=1e-9)


def test_cross_attention_matches_per_head_oracle():
    tau = 0.9
    m = CrossAttentionFusion(D, np.random.default_rng(0), heads=4, tau=tau, dtype=F64)
    randomize(m, 13)
    x_s, x_t = inputs(14)
    out = m.fuse(x_s, x_t).data
    assert np.all(np.abs(m.last_weights.sum(axis=1) - 1) <= 1e-12)
    dh = D // 4
    heads = []
    for h in range(4):
        sl = slice(h * dh, (h + 1) * dh)
        q = x_s.data @ m.w_q.weight.data[sl].T
        k = x_t.data @ m.w_k.weight.data[sl].T
        v = x_t.data @ m.w_v.weight.data[sl].T
        score = np.sum(q * k, axis=1, keepdims=True) / (tau * np.sqrt(dh))
        heads.append(softmax(score) * v)
    x_attn = np.concatenate(heads, axis=1) @ m.w_o.weight.data.T
    w = softmax(mlp(m.mlp, np.concatenate([x_s.data, x_attn], axis=1)) / tau)
    ref = w[:, :1] * x_s.data + w[:, 1:] * x_attn + sigmoid(m.alpha.data) * (x_s.data + x_t.data) / 2
    assert np.allclose(out, ref, atol=1e-9, rtol=0)


def test_cross_attention_heads_must_divide():
    with pytest.raises(ConfigError):
        CrossAttentionFusion(D, np.random.default_rng(0), heads=3)


def test_projections_only_where_defined():
    r = np.random.default_rng(0)
    x_s, x_t = inputs()
    for name in STRATEGIES:
        m = build_fusion(name, D, r, rank=4, dtype=F64)
        if m.has_projections:
            p_s, p_t = m.projections(x_s, x_t)
            assert p_s.shape[0] == 5 and p_s.shape == p_t.shape
        else:
            with pytest.raises(NotImplementedError):
                m.projections(x_s, x_t)
