"""Class-representative patterns and their cross-session / cross-subject
Pearson agreement in the temporal and spectral domains."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .dataset import EEGDataset
from .errors import EmptyClassError, EmptyReportError, ParameterError, UndefinedCorrelationError
from .signal import StftConfig, Trial, spectral_tensor

DOMAINS = ("temporal", "spectral")


@dataclass
class RepresentativePattern:
    domain: str
    tensor: np.ndarray  # (C, T) or (C, F, T')
    label: int
    subject: Union[int, str] = "all"
    session: Union[int, str] = "all"
    n_trials: int = 0


@dataclass
class CorrelationReport:
    mode: str
    domain: str
    pairs: list[dict] = field(default_factory=list)
    cohort: list[int] = field(default_factory=list)

    @property
    def values(self) -> np.ndarray:
        return np.array([p["r"] for p in self.pairs], dtype=np.float64)

    @property
    def count(self) -> int:
        return len(self.pairs)

    @property
    def mean(self) -> float:
        return float(self.values.mean()) if self.pairs else float("nan")

    @property
    def std(self) -> float:
        return float(self.values.std()) if self.pairs else float("nan")

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "domain": self.domain,
            "cohort": list(self.cohort),
            "aggregate": {"mean": self.mean, "std": self.std, "count": self.count},
            "pairs": self.pairs,
        }

    def write_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    def write_csv(self, path) -> None:
        cols = ["mode", "domain", "subject", "id_a", "id_b", "label", "r"]
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=cols, lineterminator="\n")
            w.writeheader()
            for p in self.pairs:
                w.writerow({"mode": self.mode, "domain": self.domain, **{k: p.get(k, "") for k in cols[2:]}})


def _check_domain(domain: str, cfg: Optional[StftConfig]) -> None:
    if domain not in DOMAINS:
        raise ParameterError(f"domain must be one of {DOMAINS}, got {domain!r}")
    if domain == "spectral" and cfg is None:
        raise ParameterError("spectral patterns need an StftConfig")


def _average(stack: np.ndarray, domain: str, cfg: Optional[StftConfig]) -> np.ndarray:
    stack = np.asarray(stack, dtype=np.float64)
    if domain == "temporal":
        return stack.mean(axis=0)
    return spectral_tensor(stack, cfg).mean(axis=0)


def class_representative(
    trials: Sequence[Trial], label: int, domain: str, cfg: Optional[StftConfig] = None
) -> RepresentativePattern:
    """Average of all trials carrying ``label``; spectral patterns average
    per-trial power spectrograms."""
    _check_domain(domain, cfg)
    chosen = [t for t in trials if t.label == label]
    if not chosen:
        raise EmptyClassError(f"no trials with label {label}")
    subjects = {t.subject for t in chosen}
    sessions = {t.session for t in chosen}
    return RepresentativePattern(
        domain,
        _average(np.stack([t.data for t in chosen]), domain, cfg),
        label,
        subjects.pop() if len(subjects) == 1 else "all",
        sessions.pop() if len(sessions) == 1 else "all",
        len(chosen),
    )


def pattern_correlation(a: RepresentativePattern | np.ndarray, b: RepresentativePattern | np.ndarray) -> float:
    """Pearson r of the flattened, z-normalized patterns."""
    if isinstance(a, RepresentativePattern) and isinstance(b, RepresentativePattern) and a.domain != b.domain:
        raise ParameterError(f"cannot correlate a {a.domain} pattern with a {b.domain} pattern")
    x = np.asarray(getattr(a, "tensor", a), dtype=np.float64).ravel()
    y = np.asarray(getattr(b, "tensor", b), dtype=np.float64).ravel()
    if x.shape != y.shape:
        raise ParameterError(f"pattern shapes differ: {x.size} vs {y.size} elements")
    sx, sy = x.std(), y.std()
    if sx == 0 or sy == 0 or not (np.isfinite(sx) and np.isfinite(sy)):
        raise UndefinedCorrelationError("pattern has zero variance; correlation undefined")
    zx = (x - x.mean()) / sx
    zy = (y - y.mean()) / sy
    return float(np.clip(np.mean(zx * zy), -1.0, 1.0))


def _group_patterns(ds: EEGDataset, mask: np.ndarray, domain: str, cfg) -> dict[int, np.ndarray]:
    out = {}
    for label in range(ds.n_classes):
        idx = np.nonzero(mask & (ds.labels == label))[0]
        if idx.size:
            out[label] = _average(ds.data[idx], domain, cfg)
    return out


def _correlate_into(report: CorrelationReport, pa: dict, pb: dict, row: dict) -> None:
    for label in sorted(set(pa) & set(pb)):
        try:
            r = pattern_correlation(pa[label], pb[label])
        except UndefinedCorrelationError:
            continue
        report.pairs.append({**row, "label": label, "r": r})


def cross_session_correlation(ds: EEGDataset, domain: str, cfg: Optional[StftConfig] = None) -> CorrelationReport:
    """Per subject, every unordered session pair and label."""
    _check_domain(domain, cfg)
    report = CorrelationReport("cross_session", domain)
    for subject in ds.subject_ids:
        in_subject = ds.subjects == subject
        sessions = sorted(np.unique(ds.sessions[in_subject]).tolist())
        if len(sessions) < 2:
            continue
        report.cohort.append(subject)
        patterns = {s: _group_patterns(ds, in_subject & (ds.sessions == s), domain, cfg) for s in sessions}
        for sa, sb in combinations(sessions, 2):
            _correlate_into(report, patterns[sa], patterns[sb], {"subject": subject, "id_a": sa, "id_b": sb})
    if not report.cohort:
        raise EmptyReportError("no subject has two or more sessions")
    return report


def cross_subject_correlation(ds: EEGDataset, domain: str, cfg: Optional[StftConfig] = None) -> CorrelationReport:
    """Every unordered subject pair and label, sessions pooled per subject."""
    _check_domain(domain, cfg)
    subjects = ds.subject_ids
    if len(subjects) < 2:
        raise EmptyReportError("cross-subject correlation needs at least two subjects")
    report = CorrelationReport("cross_subject", domain, cohort=list(subjects))
    patterns = {s: _group_patterns(ds, ds.subjects == s, domain, cfg) for s in subjects}
    for sa, sb in combinations(subjects, 2):
        _correlate_into(report, patterns[sa], patterns[sb], {"subject": "", "id_a": sa, "id_b": sb})
    return report
