"""Training cells, the STFT and fusion ablations, and the multi-seed benchmark.

A *cell* is one (task, STFT config, model/strategy, seed) training run. It
owns its model and RNG, so cells can run in worker processes; tables are
always assembled in cell-key order, never completion order.
"""

from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from ..dataset import EEGDataset
from ..errors import ConfigError
from ..fusion import STRATEGIES
from ..model import build_model
from ..nn.checkpoint import save_checkpoint
from ..signal import StftConfig, generate_stft_search_space
from ..training import TrainConfig, table_row, train_and_evaluate
from .records import clean, write_csv, write_json
from .runconfig import RunConfig
from .splits import SplitPlan, split_subjects
from .tasks import TaskPreset, model_config_for, preprocess, split_arrays

log = logging.getLogger(__name__)

TABLE_COLUMNS = [
    "val_acc", "seen_acc", "seen_loss", "unseen_acc", "unseen_f1",
    "unseen_recall", "unseen_auc", "unseen_pr_auc", "unseen_loss",
]
KEY_COLUMNS = ["task", "config_id", "model", "strategy", "seed", "status"]
SUMMARY_COLUMNS = ["task", "best_fusion", "best_config", "best_acc", "mult_acc", "mult_config", "delta"]


@dataclass
class Prepared:
    task: TaskPreset
    data: EEGDataset  # preprocessed
    plan: SplitPlan


def prepare(raw: EEGDataset, task: TaskPreset, split_seed: int, seen_fraction: float) -> Prepared:
    if raw.paradigm and raw.paradigm != task.paradigm:
        raise ConfigError(f"data paradigm {raw.paradigm!r} does not match task {task.name!r}")
    data = preprocess(raw, task)
    return Prepared(task, data, split_subjects(data, seen_fraction, split_seed))


def cell_dir(out: Path, task: str, config_id: str, strategy: str, seed: int) -> Path:
    return Path(out) / task / config_id / strategy / str(seed)


def run_cell(
    prep: Prepared,
    stft_cfg: StftConfig,
    kind: str,
    strategy: str,
    seed: int,
    train_cfg: TrainConfig,
    model_overrides: Optional[dict] = None,
    out_dir: Optional[Path] = None,
    run_config: Optional[RunConfig] = None,
) -> dict:
    """Train and evaluate one cell; optionally write its results directory."""
    overrides = dict(model_overrides or {})
    overrides["fusion"] = strategy if kind == "aspen" else overrides.get("fusion", "multiplicative")
    arrays = split_arrays(prep.data, prep.plan, stft_cfg)
    mcfg = model_config_for(prep.data, stft_cfg, **overrides)
    model = build_model(mcfg, seed, kind)
    result, metrics = train_and_evaluate(model, arrays, train_cfg, seed, prep.data.n_classes)
    label = strategy if kind == "aspen" else "spen"
    row = {
        "task": prep.task.name,
        "config_id": stft_cfg.identifier,
        "model": kind,
        "strategy": label,
        "seed": seed,
        "status": "ok",
        **table_row(metrics, prep.data.n_classes),
        "epochs": result.stopped_epoch,
        "best_epoch": result.best_epoch,
    }
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        if run_config is not None:
            run_config.write(out_dir / "config.json")
        write_csv(result.history, out_dir / "history.csv")
        write_json({"row": row, "splits": {k: v.to_dict() for k, v in metrics.items()},
                    "loss": result.loss_info, "model": mcfg.to_dict(), "stft": stft_cfg.to_dict()},
                   out_dir / "metrics.json")
        write_csv([m.to_dict() for m in metrics.values()], out_dir / "metrics.csv")
        save_checkpoint(model, out_dir / "checkpoint",
                        clean({"model": mcfg.to_dict(), "kind": kind, "seed": seed, "stft": stft_cfg.to_dict(),
                               "threshold": metrics["val"].threshold}))
    return row


def _run_cell_args(args) -> dict:
    return run_cell(*args)


def run_cells(cells: Sequence[tuple], workers: int = 1) -> list[dict]:
    """Run cells (argument tuples for ``run_cell``), preserving input order."""
    if workers <= 1 or len(cells) <= 1:
        return [run_cell(*c) for c in cells]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_cell_args, cells))


def default_workers() -> int:
    return max(1, int(os.environ.get("ASPEN_WORKERS", "1")))


def _score(row: dict, n_classes: int) -> float:
    """Validation selection score of a table row."""
    if n_classes > 2:
        return row["val_acc"]
    v = row.get("val_pr_auc")
    return v if v is not None and not math.isnan(v) else row.get("val_auc", float("nan"))


def top_k(rows: Sequence[dict], n_classes: int, k: int = 3) -> list[dict]:
    """Best ``k`` trained rows by validation score; ties keep table order."""
    ok = [(i, r) for i, r in enumerate(rows) if r["status"] == "ok"]
    ok.sort(key=lambda ir: (-_score(ir[1], n_classes), ir[0]))
    return [r for _, r in ok[:k]]


@dataclass
class StftAblation:
    rows: list[dict]  # every candidate, trained or skipped
    top3: list[StftConfig]

    @property
    def trained(self) -> list[dict]:
        return [r for r in self.rows if r["status"] == "ok"]


def run_stft_ablation(
    prep: Prepared,
    seed: int,
    train_cfg: TrainConfig,
    model_overrides: Optional[dict] = None,
    out: Optional[Path] = None,
    workers: int = 1,
    configs: Optional[Sequence[StftConfig]] = None,
) -> StftAblation:
    """Train the spectral-only model once per STFT candidate and keep the top 3."""
    default = prep.task.stft_config(prep.data.fs)
    n = prep.data.n_samples
    rows, cells, by_id = [], [], {}
    if configs is None:
        space = generate_stft_search_space(default, n)
        candidates = list(space.configs)
        for desc, reason in space.pruned:
            rows.append({"task": prep.task.name, "config_id": desc, "model": "spen", "strategy": "spen",
                         "seed": seed, "status": f"skipped: {reason}"})
    else:
        candidates = list(configs)
    for cfg in candidates:
        try:
            cfg.validate(n)
        except ValueError as exc:
            rows.append({"task": prep.task.name, "config_id": cfg.identifier, "model": "spen",
                         "strategy": "spen", "seed": seed, "status": f"skipped: {exc}"})
            continue
        by_id[cfg.identifier] = cfg
        cell_out = cell_dir(out, prep.task.name, cfg.identifier, "spen", seed) if out else None
        cells.append((prep, cfg, "spen", "spen", seed, train_cfg, model_overrides, cell_out))
    trained = run_cells(cells, workers)
    # trained rows first in enumeration order, then skipped candidates
    all_rows = trained + rows
    best = top_k(trained, prep.data.n_classes)
    return StftAblation(all_rows, [by_id[r["config_id"]] for r in best])


@dataclass
class FusionAblation:
    rows: list[dict]
    summary: dict


def fusion_summary(rows: Sequence[dict], task: str) -> dict:
    """Winner by unseen accuracy (ties favour multiplicative, then table
    order), multiplicative's best score and delta = mult - best (<= 0)."""
    ok = [r for r in rows if r["status"] == "ok"]
    if not ok:
        raise ConfigError("no trained fusion rows to summarize")
    order = sorted(range(len(ok)), key=lambda i: (-ok[i]["unseen_acc"], ok[i]["strategy"] != "multiplicative", i))
    best = ok[order[0]]
    mult = [r for r in ok if r["strategy"] == "multiplicative"]
    mult_best = max(mult, key=lambda r: r["unseen_acc"]) if mult else None
    if best["strategy"] == "multiplicative":
        delta = 0.0
    else:
        delta = mult_best["unseen_acc"] - best["unseen_acc"] if mult_best else float("nan")
    return {
        "task": task,
        "best_fusion": best["strategy"],
        "best_config": best["config_id"],
        "best_acc": best["unseen_acc"],
        "mult_acc": mult_best["unseen_acc"] if mult_best else float("nan"),
        "mult_config": mult_best["config_id"] if mult_best else "",
        "delta": delta,
    }


def run_fusion_ablation(
    prep: Prepared,
    configs: Sequence[StftConfig],
    seed: int,
    train_cfg: TrainConfig,
    model_overrides: Optional[dict] = None,
    out: Optional[Path] = None,
    workers: int = 1,
    strategies: Sequence[str] = STRATEGIES,
) -> FusionAblation:
    """Every fusion strategy on every supplied STFT config (7 x 3 = 21 rows)."""
    if not configs:
        raise ConfigError("fusion ablation needs at least one STFT config")
    cells = []
    for cfg in configs:
        for strategy in strategies:
            cell_out = cell_dir(out, prep.task.name, cfg.identifier, strategy, seed) if out else None
            cells.append((prep, cfg, "aspen", strategy, seed, train_cfg, model_overrides, cell_out))
    rows = run_cells(cells, workers)
    return FusionAblation(rows, fusion_summary(rows, prep.task.name))


def seed_summary(rows: Sequence[dict], columns: Sequence[str] = TABLE_COLUMNS) -> dict:
    """Mean and population std across seeds for every numeric table column."""
    out = {k: rows[0][k] for k in ("task", "config_id", "model", "strategy")}
    out["seeds"] = " ".join(str(r["seed"]) for r in rows)
    for c in columns:
        vals = np.array([r[c] for r in rows if r.get(c) is not None], dtype=np.float64)
        if vals.size:
            out[f"{c}_mean"] = float(vals.mean())
            out[f"{c}_std"] = float(vals.std())
    return out


def run_benchmark(
    prep: Prepared,
    stft_cfg: StftConfig,
    kind: str,
    strategy: str,
    seeds: Sequence[int],
    train_cfg: TrainConfig,
    model_overrides: Optional[dict] = None,
    out: Optional[Path] = None,
    run_config: Optional[RunConfig] = None,
    workers: int = 1,
) -> tuple[list[dict], dict]:
    """One cell per seed plus the mean/std summary row."""
    cells = []
    label = strategy if kind == "aspen" else "spen"
    for seed in seeds:
        cell_out = cell_dir(out, prep.task.name, stft_cfg.identifier, label, seed) if out else None
        snapshot = run_config.copy(seeds=[seed]) if run_config is not None else None
        cells.append((prep, stft_cfg, kind, strategy, seed, train_cfg, model_overrides, cell_out, snapshot))
    rows = run_cells(cells, workers)
    return rows, seed_summary(rows)


def table_columns(rows: Sequence[dict]) -> list[str]:
    extra = [c for r in rows for c in r if c not in KEY_COLUMNS + TABLE_COLUMNS]
    cols = KEY_COLUMNS + [c for c in TABLE_COLUMNS if any(c in r for r in rows)]
    for c in extra:
        if c not in cols:
            cols.append(c)
    return cols


def write_table(rows: Sequence[dict], path) -> None:
    write_csv(rows, path, table_columns(rows))
