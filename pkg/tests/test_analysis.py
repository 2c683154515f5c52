import csv

import numpy as np
import pytest

from aspen.analysis import (
    SaliencyMap,
    analyze_contributions,
    band_mass_fraction,
    cam_from_activation,
    contribution_from_projections,
    cosine_from_projections,
    feature_correlation,
    grad_cam,
    grad_cam_batch,
    minmax_normalize,
    read_float_matrix,
    read_pgm,
    resize_bilinear,
    stream_contribution,
    write_float_matrix,
    write_pgm,
)
from aspen.errors import ConfigError, ParameterError
from aspen.model import AspenModel, ModelConfig
from aspen.nn.layers import Module
from aspen.nn.tensor import Tensor

C, T, FS, F, TP = 3, 64, 64.0, 17, 5


def model(fusion="multiplicative", n_classes=4):
    cfg = ModelConfig(C, T, FS, F, TP, n_classes, fusion=fusion, d=8, dtype="float64")
    return AspenModel(cfg, 0)


def batch(seed=0, b=4):
    r = np.random.default_rng(seed)
    return r.normal(size=(b, C, T)), r.gamma(2.0, size=(b, C, F, TP))


# ---------------------------------------------------------------- w_S and rho


def test_contribution_examples():
    w_s, w_t = contribution_from_projections(np.array([[3.0, 4.0]]), np.array([[0.0, 5.0]]))
    assert w_s[0] == 0.5 and w_t[0] == 0.5
    assert contribution_from_projections(np.ones((1, 4)), np.zeros((1, 4)))[0][0] == 1.0
    unit = np.array([[1.0, 0.0]])
    assert contribution_from_projections(3 * unit, unit)[0][0] == 0.75


def test_contribution_missing_when_both_zero():
    w_s, w_t = contribution_from_projections(np.zeros((2, 3)), np.array([[0, 0, 0], [1, 0, 0]]))
    assert np.isnan(w_s[0]) and np.isnan(w_t[0])
    assert w_s[1] == 0.0 and w_t[1] == 1.0


def test_cosine_examples():
    v = np.array([[1.0, 2.0, 3.0]])
    assert cosine_from_projections(v, v)[0] == pytest.approx(1.0)
    assert cosine_from_projections(np.array([[1.0, 0.0]]), np.array([[0.0, 2.0]]))[0] == 0.0
    assert np.isnan(cosine_from_projections(v, np.zeros((1, 3)))[0])
    assert cosine_from_projections(5 * v, v)[0] == pytest.approx(cosine_from_projections(v, 0.1 * v)[0])


def test_random_cosine_null():
    r = np.random.default_rng(0)
    rho = cosine_from_projections(r.normal(size=(1000, 64)), r.normal(size=(1000, 64)))
    # null: mean 0, sd 1/sqrt(64) per draw
    assert abs(rho.mean()) < 0.1
    assert np.all(np.abs(rho) <= 1)


def test_model_contributions_are_consistent():
    m = model()
    x, s = batch()
    w_s, w_t = stream_contribution(m, x, s)
    assert w_s.shape == (4,) and np.all((w_s >= 0) & (w_s <= 1))
    assert np.allclose(w_s + w_t, 1.0, rtol=0, atol=1e-15)
    single = stream_contribution(m, x[0], s[0])[0]
    assert single.shape == (1,) and single[0] == pytest.approx(w_s[0])
    rho = feature_correlation(m, x, s)
    assert np.all(np.abs(rho) <= 1)


def test_not_applicable_without_projections():
    m = model("glu")
    with pytest.raises(ConfigError, match="not applicable"):
        stream_contribution(m, *batch())


def test_analyze_contributions_batches(tmp_path):
    m = model()
    x, s = batch(1, b=7)
    rec = analyze_contributions(m, x, s, np.arange(7) % 4, "unseen", batch_size=3)
    assert rec.w_s.shape == (7,)
    assert np.allclose(rec.w_s, stream_contribution(m, x, s)[0])
    summary = rec.summary()
    assert summary["n"] == 7 and summary["n_missing"] == 0
    assert summary["w_s_mean"] + summary["w_t_mean"] == pytest.approx(1.0)
    rec.write_csv(tmp_path / "c.csv")
    rows = list(csv.DictReader(open(tmp_path / "c.csv")))
    assert len(rows) == 7 and rows[3]["label"] == "3"


# ---------------------------------------------------------------- Grad-CAM


class _Identity(Module):
    def forward(self, x_spec):
        B = x_spec.shape[0]
        self.cam_activation = Tensor(x_spec.reshape(B * C, 1, F, TP), requires_grad=True)
        return self.cam_activation


class IdentityCamModel(Module):
    """One feature map equal to the input; single logit = <w, sum over channels>."""

    def __init__(self, w, scale=1.0):
        super().__init__()
        self.spectral = _Identity()
        self.w = w
        self.scale = scale

    def forward(self, x_time, x_spec):
        act = self.spectral(np.asarray(x_spec, dtype=np.float64))
        B = x_spec.shape[0]
        weighted = (act * Tensor(self.w * self.scale)).reshape(B, C * F * TP)
        return weighted.sum(axis=1, keepdims=True)


def test_degenerate_cam_is_gradient_weighted_input():
    r = np.random.default_rng(0)
    w = r.normal(size=(F, TP)) + 0.3
    _, s = batch(2, b=3)
    s = s - 1.0  # mixed signs so the ReLU matters
    maps = grad_cam_batch(IdentityCamModel(w), None, s, targets=[1, 1, 1])
    for b, mp in enumerate(maps):
        ref = np.maximum(w.mean() * s[b].sum(axis=0), 0)
        assert np.allclose(mp.raw, ref, atol=1e-12)
        assert np.allclose(mp.heatmap, (ref - ref.min()) / (ref.max() - ref.min()), atol=1e-12)


def test_cam_invariant_to_gradient_scale():
    w = np.random.default_rng(1).normal(size=(F, TP)) + 0.5
    _, s = batch(3, b=2)
    a = grad_cam_batch(IdentityCamModel(w), None, s, targets=[1, 1])
    b = grad_cam_batch(IdentityCamModel(w, scale=4.0), None, s, targets=[1, 1])
    for ma, mb in zip(a, b):
        assert np.allclose(ma.heatmap, mb.heatmap, atol=1e-12)


def test_negative_class_flips_binary_gradient():
    w = np.full((F, TP), 1.0)
    _, s = batch(4, b=1)
    pos = grad_cam_batch(IdentityCamModel(w), None, s, targets=[1])[0]
    with pytest.warns(UserWarning, match="zero everywhere"):
        neg = grad_cam_batch(IdentityCamModel(w), None, s, targets=[0])[0]
    # gamma inputs are positive: the class-0 map is ReLU of a negative map
    assert np.any(pos.heatmap > 0)
    assert not np.any(neg.heatmap) and not np.any(neg.raw)


def test_model_heatmap_contract():
    m = model()
    x, s = batch(5, b=3)
    maps = grad_cam_batch(m, x, s)
    logits = m.eval()(x, s).data
    for i, mp in enumerate(maps):
        assert isinstance(mp, SaliencyMap)
        assert mp.heatmap.shape == (F, TP)
        assert mp.heatmap.min() >= 0 and mp.heatmap.max() <= 1
        assert mp.predicted == mp.target == int(logits[i].argmax())
        assert 0.25 <= mp.confidence <= 1
    one = grad_cam(m, x[0], s[0], target_class=2)
    assert one.target == 2 and one.heatmap.shape == (F, TP)
    assert all(p.grad is None or not np.any(p.grad) for p in m.parameters())


def test_target_count_checked():
    with pytest.raises(ParameterError):
        grad_cam_batch(model(), *batch(b=2), targets=[0])


def test_cam_from_activation_sums_planes():
    a = np.arange(2 * 3 * 2 * 2, dtype=float).reshape(2, 3, 2, 2)
    g = np.ones_like(a)
    assert np.array_equal(cam_from_activation(a, g), a.sum(axis=(0, 1)))
    assert not np.any(cam_from_activation(a, -g))


def test_resize_bilinear():
    m = np.array([[0.0, 1.0], [2.0, 3.0]])
    assert np.array_equal(resize_bilinear(m, (2, 2)), m)
    up = resize_bilinear(m, (4, 4))
    assert up.shape == (4, 4)
    assert up[0, 0] == 0.0 and up[-1, -1] == 3.0
    # half-pixel centres: output column 1 sits at input x = 0.25
    assert up[0, 1] == pytest.approx(0.25)
    assert np.allclose(resize_bilinear(np.full((3, 5), 7.0), (9, 2)), 7.0)


def test_minmax_and_band_mass():
    assert not np.any(minmax_normalize(np.full((2, 2), 5.0)))
    h = np.array([[1.0, 1.0], [2.0, 0.0], [0.0, 4.0]])
    assert band_mass_fraction(h, np.array([2.0, 6.0, 10.0]), 8.0) == pytest.approx(0.5)
    assert np.isnan(band_mass_fraction(np.zeros((3, 2)), np.arange(3.0), 8.0))


# ---------------------------------------------------------------- export


def test_pgm_roundtrip(tmp_path):
    h = np.random.default_rng(0).uniform(size=(6, 4))
    write_pgm(h, tmp_path / "h.pgm")
    raw = (tmp_path / "h.pgm").read_bytes()
    assert raw.startswith(b"P5\n4 6\n255\n") and len(raw) == 11 + 24
    # top image row is the highest frequency bin
    assert raw[11] == round(h[-1, 0] * 255)
    assert np.max(np.abs(read_pgm(tmp_path / "h.pgm") - h)) <= 0.5 / 255 + 1e-12
    (tmp_path / "x.pgm").write_bytes(b"P2\n1 1\n255\n0")
    with pytest.raises(ParameterError):
        read_pgm(tmp_path / "x.pgm")


def test_float_matrix_roundtrip(tmp_path):
    m = np.random.default_rng(1).normal(size=(5, 3))
    write_float_matrix(m, tmp_path / "m.f32")
    assert (tmp_path / "m.f32").stat().st_size == 60
    assert np.array_equal(np.frombuffer((tmp_path / "m.f32").read_bytes(), "<f4")[:3], m[0].astype("<f4"))
    assert np.array_equal(read_float_matrix(tmp_path / "m.f32", (5, 3)), m.astype(np.float32))
