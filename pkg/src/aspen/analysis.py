"""Interpretability: relative stream magnitudes, projected-feature cosine
similarity and Grad-CAM over the spectral stream."""

from __future__ import annotations

import csv
import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigError, ParameterError
from .nn.layers import Module
from .nn.tensor import Tensor, _sigmoid, no_grad

log = logging.getLogger(__name__)


# ---------------------------------------------------------------- stream contribution


def contribution_from_projections(p_s: np.ndarray, p_t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-row w_S = |p_s| / (|p_s| + |p_t|) and w_T = 1 - w_S; NaN when both norms vanish."""
    n_s = np.linalg.norm(np.atleast_2d(p_s).astype(np.float64), axis=-1)
    n_t = np.linalg.norm(np.atleast_2d(p_t).astype(np.float64), axis=-1)
    total = n_s + n_t
    with np.errstate(invalid="ignore", divide="ignore"):
        w_s = np.where(total > 0, n_s / np.where(total > 0, total, 1.0), np.nan)
    return w_s, 1.0 - w_s


def cosine_from_projections(p_s: np.ndarray, p_t: np.ndarray) -> np.ndarray:
    """Per-row cosine similarity; NaN when either vector is zero."""
    a = np.atleast_2d(p_s).astype(np.float64)
    b = np.atleast_2d(p_t).astype(np.float64)
    denom = np.linalg.norm(a, axis=-1) * np.linalg.norm(b, axis=-1)
    dot = np.sum(a * b, axis=-1)
    with np.errstate(invalid="ignore", divide="ignore"):
        rho = np.where(denom > 0, dot / np.where(denom > 0, denom, 1.0), np.nan)
    return np.clip(rho, -1.0, 1.0)


def _batch(x_time, x_spec) -> tuple[np.ndarray, np.ndarray]:
    x_time, x_spec = np.asarray(x_time), np.asarray(x_spec)
    if x_time.ndim == 2:
        x_time, x_spec = x_time[None], x_spec[None]
    return x_time, x_spec


def projected_features(model: Module, x_time, x_spec) -> tuple[np.ndarray, np.ndarray]:
    fusion = getattr(model, "fusion", None)
    if fusion is None or not fusion.has_projections:
        name = getattr(fusion, "name", type(model).__name__)
        raise ConfigError(f"{name} has no explicit stream projections; w_S and rho are not applicable")
    x_time, x_spec = _batch(x_time, x_spec)
    model.eval()
    with no_grad():
        x_s, x_t, _ = model.streams(x_time, x_spec)
        p_s, p_t = fusion.projections(x_s, x_t)
    return p_s.data, p_t.data


def stream_contribution(model: Module, x_time, x_spec) -> tuple[np.ndarray, np.ndarray]:
    """(w_S, w_T) for one trial ``(C, T), (C, F, T')`` or a batch."""
    return contribution_from_projections(*projected_features(model, x_time, x_spec))


def feature_correlation(model: Module, x_time, x_spec) -> np.ndarray:
    """Cosine similarity between the projected spectral and temporal features."""
    return cosine_from_projections(*projected_features(model, x_time, x_spec))


@dataclass
class ContributionRecord:
    split: str
    w_s: np.ndarray
    w_t: np.ndarray
    rho: np.ndarray
    labels: np.ndarray

    def summary(self) -> dict:
        def stats(v):
            v = v[np.isfinite(v)]
            return (float(v.mean()), float(v.std())) if v.size else (float("nan"), float("nan"))

        ws_mean, ws_std = stats(self.w_s)
        wt_mean, wt_std = stats(self.w_t)
        rho_mean, rho_std = stats(self.rho)
        return {
            "split": self.split,
            "n": int(self.w_s.size),
            "n_missing": int(np.sum(~np.isfinite(self.w_s))),
            "w_s_mean": ws_mean, "w_s_std": ws_std,
            "w_t_mean": wt_mean, "w_t_std": wt_std,
            "rho_mean": rho_mean, "rho_std": rho_std,
        }

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["split", "trial", "label", "w_s", "w_t", "rho"])
            for i in range(self.w_s.size):
                w.writerow([self.split, i, int(self.labels[i]), repr(float(self.w_s[i])),
                            repr(float(self.w_t[i])), repr(float(self.rho[i]))])


def analyze_contributions(model: Module, x_time, x_spec, labels, split: str = "", batch_size: int = 256) -> ContributionRecord:
    ws, wt, rho = [], [], []
    for start in range(0, len(labels), batch_size):
        sl = slice(start, start + batch_size)
        p_s, p_t = projected_features(model, x_time[sl], x_spec[sl])
        a, b = contribution_from_projections(p_s, p_t)
        ws.append(a)
        wt.append(b)
        rho.append(cosine_from_projections(p_s, p_t))
    return ContributionRecord(split, np.concatenate(ws), np.concatenate(wt), np.concatenate(rho), np.asarray(labels))


# ---------------------------------------------------------------- Grad-CAM


@dataclass
class SaliencyMap:
    heatmap: np.ndarray  # (F, T') in [0, 1]
    predicted: int
    confidence: float
    target: int
    raw: np.ndarray = field(repr=False, default=None)  # pre-normalization map


def resize_bilinear(m: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    """Separable linear interpolation with half-pixel centres, edges clamped."""
    out = np.asarray(m, dtype=np.float64)
    for axis, n_out in enumerate(shape):
        n_in = out.shape[axis]
        if n_in == n_out:
            continue
        pos = np.clip((np.arange(n_out) + 0.5) * n_in / n_out - 0.5, 0, n_in - 1)
        out = np.apply_along_axis(lambda v: np.interp(pos, np.arange(n_in), v), axis, out)
    return out


def minmax_normalize(m: np.ndarray) -> np.ndarray:
    lo, hi = float(m.min()), float(m.max())
    if hi - lo <= 0:
        return np.zeros_like(m, dtype=np.float64)
    return (m - lo) / (hi - lo)


def cam_from_activation(activation: np.ndarray, gradient: np.ndarray) -> np.ndarray:
    """Grad-CAM on (..., K, H, W) maps: alpha_k = spatial mean of the
    gradient, map = ReLU(sum over K and any leading planes of alpha_k A_k)."""
    a = np.asarray(activation, dtype=np.float64)
    g = np.asarray(gradient, dtype=np.float64)
    alpha = g.mean(axis=(-2, -1), keepdims=True)
    cam = np.sum(alpha * a, axis=-3)
    while cam.ndim > 2:
        cam = cam.sum(axis=0)
    return np.maximum(cam, 0.0)


def _target_scores(logits: Tensor, targets: np.ndarray) -> Tensor:
    if logits.shape[1] == 1:
        sign = np.where(targets == 1, 1.0, -1.0).astype(logits.dtype)[:, None]
        return (logits * Tensor(sign)).sum()
    mask = np.zeros(logits.shape, dtype=logits.dtype)
    mask[np.arange(len(targets)), targets] = 1.0
    return (logits * Tensor(mask)).sum()


def _predictions(logits: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    logits = logits.astype(np.float64)
    if logits.shape[1] == 1:
        p = _sigmoid(logits[:, 0])
        pred = (p >= 0.5).astype(int)
        return pred, np.where(pred == 1, p, 1 - p)
    z = logits - logits.max(axis=1, keepdims=True)
    prob = np.exp(z) / np.exp(z).sum(axis=1, keepdims=True)
    pred = prob.argmax(axis=1)
    return pred, prob[np.arange(len(pred)), pred]


def grad_cam_batch(
    model: Module, x_time, x_spec, targets: Optional[Sequence[int]] = None, threshold: float = 0.5
) -> list[SaliencyMap]:
    """Grad-CAM at the last spectral stage (before pooling), one map per trial.

    Channel weights are computed separately for every EEG channel's plane and
    the weighted planes are summed over feature maps and EEG channels.
    ``targets`` defaults to the predicted classes. For single-logit binary
    models the class-0 score is the negated logit.
    """
    x_time, x_spec = _batch(x_time, x_spec)
    B, C, F, Tp = x_spec.shape
    model.eval()
    logits = model(x_time, x_spec)
    if logits.shape[1] == 1:
        prob = _sigmoid(logits.data[:, 0].astype(np.float64))
        pred = (prob >= threshold).astype(int)
        conf = np.where(pred == 1, prob, 1 - prob)
    else:
        pred, conf = _predictions(logits.data)
    targets = pred if targets is None else np.asarray(targets, dtype=int)
    if targets.shape != (B,):
        raise ParameterError(f"need one target per trial, got {targets.shape} for {B} trials")
    act = model.spectral.cam_activation
    _target_scores(logits, targets).backward()
    grad = act.grad if act.grad is not None else np.zeros_like(act.data)
    model.zero_grad()
    A = act.data.reshape(B, C, *act.shape[1:])
    G = grad.reshape(B, C, *grad.shape[1:])
    maps = []
    for b in range(B):
        raw = resize_bilinear(cam_from_activation(A[b], G[b]), (F, Tp))
        if not np.any(raw > 0):
            warnings.warn("Grad-CAM map is zero everywhere (no positive gradient-weighted activation)")
        maps.append(SaliencyMap(minmax_normalize(raw), int(pred[b]), float(conf[b]), int(targets[b]), raw))
    return maps


def grad_cam(model: Module, x_time, x_spec, target_class: Optional[int] = None) -> SaliencyMap:
    targets = None if target_class is None else [target_class]
    return grad_cam_batch(model, x_time, x_spec, targets)[0]


def band_mass_fraction(heatmap: np.ndarray, freqs: np.ndarray, cutoff: float) -> float:
    """Share of total heatmap mass in frequency rows strictly below ``cutoff``."""
    total = float(heatmap.sum())
    if total <= 0:
        return float("nan")
    return float(heatmap[np.asarray(freqs) < cutoff].sum() / total)


# ---------------------------------------------------------------- export


def write_pgm(heatmap: np.ndarray, path) -> None:
    """8-bit binary PGM; row 0 of the image is the highest frequency."""
    img = np.round(np.clip(heatmap, 0, 1)[::-1] * 255).astype(np.uint8)
    h, w = img.shape
    Path(path).write_bytes(f"P5\n{w} {h}\n255\n".encode("ascii") + img.tobytes())


def read_pgm(path) -> np.ndarray:
    buf = Path(path).read_bytes()
    parts = buf.split(b"\n", 3)
    if parts[0] != b"P5":
        raise ParameterError(f"{path} is not a binary PGM")
    w, h = map(int, parts[1].split())
    return np.frombuffer(parts[3], dtype=np.uint8).reshape(h, w)[::-1] / 255.0


def write_float_matrix(m: np.ndarray, path) -> None:
    """Raw little-endian float32, row-major (the epochs payload convention)."""
    Path(path).write_bytes(np.ascontiguousarray(m, dtype="<f4").tobytes())


def read_float_matrix(path, shape: tuple[int, ...]) -> np.ndarray:
    return np.frombuffer(Path(path).read_bytes(), dtype="<f4").reshape(shape).astype(np.float32)
