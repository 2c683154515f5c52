"""Slow, obviously-correct reference implementations used by the tests."""

import itertools
import math

import numpy as np


def naive_stft(x, n_perseg, hop, n_fft):
    """O(n^2) DFT of each periodic-Hann windowed frame."""
    w = np.array([0.5 - 0.5 * math.cos(2 * math.pi * m / n_perseg) for m in range(n_perseg)])
    n_frames = (len(x) - n_perseg) // hop + 1
    out = np.zeros((n_fft // 2 + 1, n_frames), dtype=complex)
    for t in range(n_frames):
        seg = np.zeros(n_fft)
        seg[:n_perseg] = x[t * hop : t * hop + n_perseg] * w
        for k in range(n_fft // 2 + 1):
            out[k, t] = sum(
                seg[n] * complex(math.cos(-2 * math.pi * k * n / n_fft), math.sin(-2 * math.pi * k * n / n_fft))
                for n in range(n_fft)
            )
    return out


def naive_conv2d(x, w, b=None, groups=1):
    """Direct loop cross-correlation, no padding, stride 1."""
    B, cin, H, W = x.shape
    cout, cin_g, kh, kw = w.shape
    cout_g = cout // groups
    out = np.zeros((B, cout, H - kh + 1, W - kw + 1))
    for n, o, i, j in itertools.product(range(B), range(cout), range(H - kh + 1), range(W - kw + 1)):
        g = o // cout_g
        acc = 0.0
        for c in range(cin_g):
            for u in range(kh):
                for v in range(kw):
                    acc += x[n, g * cin_g + c, i + u, j + v] * w[o, c, u, v]
        out[n, o, i, j] = acc + (b[o] if b is not None else 0.0)
    return out


def naive_avg_pool(x, kh, kw):
    B, C, H, W = x.shape
    out = np.zeros((B, C, H // kh, W // kw))
    for i in range(H // kh):
        for j in range(W // kw):
            out[:, :, i, j] = x[:, :, i * kh : (i + 1) * kh, j * kw : (j + 1) * kw].mean(axis=(2, 3))
    return out


def sigmoid(z):
    return 1.0 / (1.0 + np.exp(-z))


def pairwise_auc(y, s):
    """Mann-Whitney by explicit comparison of every positive/negative pair."""
    pos = [si for yi, si in zip(y, s) if yi]
    neg = [si for yi, si in zip(y, s) if not yi]
    total = 0.0
    for p in pos:
        for q in neg:
            total += 1.0 if p > q else 0.5 if p == q else 0.0
    return total / (len(pos) * len(neg))


def grid_threshold(probs, labels):
    """Brute-force threshold: first grid point reaching the maximal F1."""
    best_t, best = None, -1.0
    for i in range(1, 100):
        t = i / 100
        pred = [p >= t for p in probs]
        tp = sum(1 for p, y in zip(pred, labels) if p and y)
        fp = sum(1 for p, y in zip(pred, labels) if p and not y)
        fn = sum(1 for p, y in zip(pred, labels) if not p and y)
        f1 = 2 * tp / (2 * tp + fp + fn) if tp + fp + fn else 0.0
        if f1 > best:
            best_t, best = t, f1
    return best_t, best


def pearson(a, b):
    a = np.ravel(a) - np.mean(a)
    b = np.ravel(b) - np.mean(b)
    return float(a @ b / math.sqrt((a @ a) * (b @ b)))
