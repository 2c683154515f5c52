"""Subject-level seen/unseen split with per-subject 60/20/20 trial split."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from ..dataset import EEGDataset
from ..errors import ConfigError

RATIOS = (0.6, 0.2, 0.2)  # train, val, test1 (cross-session)
SPLIT_NAMES = ("train", "val", "test1", "test2")


@dataclass
class SplitPlan:
    seen: list[int]
    unseen: list[int]
    train: np.ndarray
    val: np.ndarray
    test1: np.ndarray
    test2: np.ndarray
    seed: int
    seen_fraction: float

    def indices(self, name: str) -> np.ndarray:
        return getattr(self, name)

    def audit(self) -> dict:
        """Pairwise overlap counts between the four trial sets (all zero for a valid plan)."""
        sets = {k: set(self.indices(k).tolist()) for k in SPLIT_NAMES}
        out = {}
        for i, a in enumerate(SPLIT_NAMES):
            for b in SPLIT_NAMES[i + 1 :]:
                out[f"{a}&{b}"] = len(sets[a] & sets[b])
        return out

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "seen_fraction": self.seen_fraction,
            "seen": self.seen,
            "unseen": self.unseen,
            **{k: self.indices(k).tolist() for k in SPLIT_NAMES},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SplitPlan":
        return cls(
            list(d["seen"]), list(d["unseen"]),
            *(np.asarray(d[k], dtype=np.int64) for k in SPLIT_NAMES),
            seed=d["seed"], seen_fraction=d["seen_fraction"],
        )


def largest_remainder(n: int, ratios=RATIOS) -> list[int]:
    """Integer allocation of ``n`` items proportional to ``ratios`` (sums to n)."""
    raw = [n * r / sum(ratios) for r in ratios]
    counts = [math.floor(x) for x in raw]
    order = sorted(range(len(raw)), key=lambda i: (-(raw[i] - counts[i]), i))
    for i in order[: n - sum(counts)]:
        counts[i] += 1
    return counts


def split_subjects(ds: EEGDataset, seen_fraction: float = 0.75, seed: int = 0) -> SplitPlan:
    """Seeded subject shuffle, the first ceil(fraction*S) are seen.

    Within each seen subject and label, trials are split 60/20/20 into
    train/val/test1. When the subject has several sessions, test1 is filled
    from the latest session first so that it is as cross-session as the
    quota allows. Every unseen-subject trial goes to test2.
    """
    subjects = ds.subject_ids
    if len(subjects) < 2:
        raise ConfigError("a seen/unseen split needs at least two subjects")
    if not 0 < seen_fraction < 1:
        raise ConfigError(f"seen_fraction must be in (0, 1), got {seen_fraction}")
    rng = np.random.default_rng(seed)
    order = [subjects[i] for i in rng.permutation(len(subjects))]
    n_seen = min(len(subjects) - 1, math.ceil(seen_fraction * len(subjects)))
    seen, unseen = sorted(order[:n_seen]), sorted(order[n_seen:])

    parts = {"train": [], "val": [], "test1": []}
    for s in seen:
        in_subject = ds.subjects == s
        multi_session = np.unique(ds.sessions[in_subject]).size > 1
        present = set(np.unique(ds.labels[in_subject]).tolist())
        missing = sorted(set(range(ds.n_classes)) - present)
        if missing:
            warnings.warn(f"subject {s} has no trials of class(es) {missing}; splitting the rest proportionally")
        for label in sorted(present):
            idx = np.nonzero(in_subject & (ds.labels == label))[0]
            idx = idx[rng.permutation(idx.size)]
            n_train, n_val, n_test = largest_remainder(idx.size)
            if multi_session:
                # stable sort: latest session first, shuffled order kept within a session
                idx = idx[np.argsort(-ds.sessions[idx], kind="stable")]
                test, rest = idx[:n_test], idx[n_test:]
                rest = rest[rng.permutation(rest.size)]
            else:
                test, rest = idx[n_train + n_val :], idx[: n_train + n_val]
            parts["train"].append(rest[:n_train])
            parts["val"].append(rest[n_train:])
            parts["test1"].append(test)

    def _cat(chunks):
        return np.sort(np.concatenate(chunks)) if chunks else np.zeros(0, dtype=np.int64)

    test2 = np.nonzero(np.isin(ds.subjects, unseen))[0]
    return SplitPlan(
        seen, unseen, _cat(parts["train"]), _cat(parts["val"]), _cat(parts["test1"]), test2,
        seed, seen_fraction,
    )
