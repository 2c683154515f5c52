"""Command-line entry point: ``aspen <subcommand> [options]``.

Exit codes: 0 success, 1 runtime failure, 2 usage error, 3 configuration
error. Failures print one JSON error record on stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import analysis
from .characterization import DOMAINS, cross_session_correlation, cross_subject_correlation
from .errors import AspenError, ConfigError, EmptyReportError, ParameterError
from .fusion import STRATEGIES
from .harness.epochs import load_epochs, save_epochs
from .harness.records import read_csv, read_json, write_csv, write_json
from .harness.runconfig import DEFAULTS, RunConfig
from .harness.runner import (
    Prepared,
    SUMMARY_COLUMNS,
    TABLE_COLUMNS,
    cell_dir,
    default_workers,
    prepare,
    run_benchmark,
    run_fusion_ablation,
    run_stft_ablation,
    seed_summary,
    write_table,
)
from .harness.splits import split_subjects
from .harness.synth import synthesize
from .harness.tasks import TASKS, split_arrays
from .model import ModelConfig, build_model, select_loss
from .nn.checkpoint import load_checkpoint
from .signal import StftConfig, stft_axes
from .training import evaluate

log = logging.getLogger("aspen")

EXIT_RUNTIME, EXIT_USAGE, EXIT_CONFIG = 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _error_record(kind: str, exc: BaseException, code: int) -> int:
    record = {"status": "error", "kind": kind, "type": type(exc).__name__, "message": str(exc), "exit_code": code}
    print(json.dumps(record), file=sys.stderr)
    return code


# ---------------------------------------------------------------- helpers


def parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _parse_sets(pairs: Sequence[str]) -> dict:
    out = {}
    for p in pairs or ():
        if "=" not in p:
            raise ConfigError(f"--set expects key=value, got {p!r}")
        k, v = p.split("=", 1)
        out[k.strip()] = parse_value(v)
    return out


def load_run_config(args, **flags) -> RunConfig:
    """Defaults <- config file <- --set pairs <- explicit flags."""
    cfg = RunConfig.from_file(args.config) if getattr(args, "config", None) else RunConfig()
    cfg.update(_parse_sets(getattr(args, "set", None)))
    cfg.update({k: v for k, v in flags.items() if v is not None})
    return cfg.validate()


def _out_root(args) -> Path:
    return Path(args.out or os.environ.get("ASPEN_OUT") or DEFAULTS["out"])


def _workers(cfg: RunConfig) -> int:
    env = os.environ.get("ASPEN_WORKERS")
    return default_workers() if env else int(cfg["workers"])


def _ensure_fresh(path: Path, overwrite: bool) -> None:
    if path.exists() and any(path.iterdir() if path.is_dir() else [path]) and not overwrite:
        raise ConfigError(f"refusing to overwrite existing output {path} (pass --overwrite)")


def parse_identifier(ident: str, fs: float) -> StftConfig:
    """Inverse of ``StftConfig.identifier``: nperseg{n}_ov{pct}_nfft{m}."""
    try:
        a, b, c = ident.split("_")
        n_perseg = int(a.removeprefix("nperseg"))
        ratio = float(b.removeprefix("ov")) / 100.0
        n_fft = int(c.removeprefix("nfft"))
    except ValueError:
        raise ConfigError(f"malformed STFT config identifier {ident!r}") from None
    return StftConfig(fs, n_perseg, int(math.floor(ratio * n_perseg)), n_fft, ratio=ratio)


def _load_prepared(cfg: RunConfig) -> Prepared:
    if not cfg["data"]:
        raise ConfigError("no input data: pass --data or set 'data' in the config")
    raw = load_epochs(cfg["data"])
    return prepare(raw, cfg.task, cfg["split_seed"], cfg["seen_fraction"])


def _resolve_task(args, data_path: Optional[str]) -> Optional[str]:
    if getattr(args, "task", None):
        return args.task
    if data_path and Path(str(data_path) + ".json").exists():
        paradigm = read_json(str(data_path) + ".json").get("paradigm")
        if paradigm in TASKS:
            return paradigm
    return None


# ---------------------------------------------------------------- subcommands


def cmd_synth(args) -> dict:
    cfg = load_run_config(args, task=args.paradigm, synth_seed=args.seed, mi_variant=args.variant)
    spec = cfg.synth_spec()
    ds = synthesize(spec, cfg["synth_seed"])
    out = Path(args.out)
    _ensure_fresh(out, args.overwrite)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_epochs(ds, out)
    return {"path": str(out), "paradigm": ds.paradigm, "n": len(ds), "channels": ds.n_channels,
            "samples": ds.n_samples, "fs": ds.fs, "classes": ds.n_classes, "seed": cfg["synth_seed"]}


def cmd_split(args) -> dict:
    ds = load_epochs(args.data)
    plan = split_subjects(ds, args.seen_fraction, args.seed)
    out = Path(args.out)
    _ensure_fresh(out, args.overwrite)
    write_json(plan.to_dict(), out)
    return {"path": str(out), "seen": plan.seen, "unseen": plan.unseen,
            **{k: int(plan.indices(k).size) for k in ("train", "val", "test1", "test2")}, "overlaps": plan.audit()}


def _stft_flags(args) -> dict:
    return {"n_perseg": args.n_perseg, "n_overlap": args.n_overlap, "n_fft": args.n_fft}


def cmd_train(args) -> dict:
    data = args.data
    if data is None and args.config:
        data = RunConfig.from_file(args.config)["data"]
    cfg = load_run_config(
        args, data=data, task=_resolve_task(args, data), fusion=args.fusion, model=args.model,
        seeds=args.seeds, max_epochs=args.max_epochs, **_stft_flags(args),
    )
    root = _out_root(args)
    prep = _load_prepared(cfg)
    stft_cfg = cfg.stft_config(prep.data.fs)
    label = cfg["fusion"] if cfg["model"] == "aspen" else "spen"
    base = root / prep.task.name / stft_cfg.identifier / label
    for seed in cfg["seeds"]:
        _ensure_fresh(cell_dir(root, prep.task.name, stft_cfg.identifier, label, seed), args.overwrite)
    rows, summary = run_benchmark(
        prep, stft_cfg, cfg["model"], cfg["fusion"], cfg["seeds"], cfg.train_config(),
        cfg.model_overrides(), root, cfg.copy(out=str(root)), _workers(cfg),
    )
    write_table(rows, base / "runs.csv")
    write_json({"rows": rows, "summary": summary}, base / "summary.json")
    return {"results": str(base), "summary": summary}


def _cell_config(run_dir: Path) -> RunConfig:
    path = run_dir / "config.json"
    if not path.exists():
        raise ConfigError(f"{run_dir} has no config.json snapshot")
    return RunConfig.from_file(path).validate()


def _load_run(run_dir: Path, data: Optional[str]):
    cfg = _cell_config(run_dir)
    if data:
        cfg.update({"data": data})
    prep = _load_prepared(cfg)
    metrics = read_json(run_dir / "metrics.json")
    stft_cfg = StftConfig(**metrics["stft"])
    mcfg = ModelConfig.from_dict(metrics["model"])
    model = build_model(mcfg, cfg["seeds"][0], cfg["model"])
    meta = load_checkpoint(model, run_dir / "checkpoint")
    model.eval()
    return cfg, prep, stft_cfg, model, meta


def cmd_evaluate(args) -> dict:
    run_dir = Path(args.run)
    cfg, prep, stft_cfg, model, meta = _load_run(run_dir, args.data)
    arrays = split_arrays(prep.data, prep.plan, stft_cfg)
    loss_fn, _ = select_loss(prep.data.n_classes, arrays["train"].y)
    rows = {}
    for name in args.splits:
        rows[name] = evaluate(model, arrays[name], prep.data.n_classes, loss_fn, name, meta.get("threshold"))
    out = Path(args.out) if args.out else run_dir / "evaluation.json"
    _ensure_fresh(out, args.overwrite or not args.out)
    write_json({k: v.to_dict() for k, v in rows.items()}, out)
    return {"path": str(out), **{k: {"acc": v.acc, "loss": v.loss} for k, v in rows.items()}}


def cmd_ablate_stft(args) -> dict:
    cfg = load_run_config(args, data=args.data, task=_resolve_task(args, args.data), max_epochs=args.max_epochs)
    seed = args.seed if args.seed is not None else cfg["seeds"][0]
    root = _out_root(args)
    prep = _load_prepared(cfg)
    base = root / prep.task.name
    _ensure_fresh(base / "stft_ablation.csv", args.overwrite)
    result = run_stft_ablation(prep, seed, cfg.train_config(), cfg.model_overrides(),
                               root if args.keep_runs else None, _workers(cfg))
    base.mkdir(parents=True, exist_ok=True)
    write_table(result.rows, base / "stft_ablation.csv")
    top3 = [c.identifier for c in result.top3]
    write_json({"task": prep.task.name, "seed": seed, "rows": result.rows, "top3": top3}, base / "stft_ablation.json")
    write_json({"task": prep.task.name, "top3": top3}, base / "top3.json")
    return {"table": str(base / "stft_ablation.csv"), "trained": len(result.trained),
            "rows": len(result.rows), "top3": top3}


def cmd_ablate_fusion(args) -> dict:
    cfg = load_run_config(args, data=args.data, task=_resolve_task(args, args.data), max_epochs=args.max_epochs)
    seed = args.seed if args.seed is not None else cfg["seeds"][0]
    root = _out_root(args)
    prep = _load_prepared(cfg)
    base = root / prep.task.name
    if args.configs:
        ids = args.configs.split(",")
    else:
        top3_path = Path(args.top3) if args.top3 else base / "top3.json"
        if not top3_path.exists():
            raise ConfigError(f"no top-3 STFT configs: run ablate-stft first or pass --configs / --top3 ({top3_path})")
        ids = read_json(top3_path)["top3"]
    configs = [parse_identifier(i, prep.data.fs) for i in ids]
    _ensure_fresh(base / "fusion_ablation.csv", args.overwrite)
    result = run_fusion_ablation(prep, configs, seed, cfg.train_config(), cfg.model_overrides(),
                                 root if args.keep_runs else None, _workers(cfg))
    base.mkdir(parents=True, exist_ok=True)
    write_table(result.rows, base / "fusion_ablation.csv")
    write_csv([result.summary], base / "fusion_summary.csv", SUMMARY_COLUMNS)
    write_json({"task": prep.task.name, "seed": seed, "rows": result.rows, "summary": result.summary},
               base / "fusion_ablation.json")
    return {"table": str(base / "fusion_ablation.csv"), "rows": len(result.rows), "summary": result.summary}


def cmd_characterize(args) -> dict:
    cfg = load_run_config(args, data=args.data, task=_resolve_task(args, args.data))
    prep = _load_prepared(cfg)
    stft_cfg = cfg.stft_config(prep.data.fs)
    base = _out_root(args) / prep.task.name / "characterization"
    _ensure_fresh(base, args.overwrite)
    base.mkdir(parents=True, exist_ok=True)
    summary = []
    modes = {"cross_subject": cross_subject_correlation, "cross_session": cross_session_correlation}
    for mode in args.modes:
        for domain in args.domains:
            try:
                report = modes[mode](prep.data, domain, stft_cfg if domain == "spectral" else None)
            except EmptyReportError as exc:
                log.warning("%s/%s skipped: %s", mode, domain, exc)
                continue
            report.write_json(base / f"{mode}_{domain}.json")
            report.write_csv(base / f"{mode}_{domain}.csv")
            summary.append({"mode": mode, "domain": domain, "mean": report.mean, "std": report.std,
                            "count": report.count, "cohort": " ".join(map(str, report.cohort))})
    write_csv(summary, base / "summary.csv")
    return {"path": str(base), "summary": summary}


def cmd_analyze(args) -> dict:
    run_dir = Path(args.run)
    cfg, prep, stft_cfg, model, meta = _load_run(run_dir, args.data)
    arrays = split_arrays(prep.data, prep.plan, stft_cfg)
    out = Path(args.out) if args.out else run_dir / "analysis"
    _ensure_fresh(out, args.overwrite)
    out.mkdir(parents=True, exist_ok=True)
    result: dict = {"path": str(out)}
    summaries = []
    for split in args.splits:
        data = arrays[split]
        try:
            rec = analysis.analyze_contributions(model, data.x_time, data.x_spec, data.y, split)
        except ConfigError as exc:
            summaries.append({"split": split, "status": f"not applicable: {exc}"})
            continue
        rec.write_csv(out / f"contributions_{split}.csv")
        summaries.append({**rec.summary(), "status": "ok"})
    write_csv(summaries, out / "contributions_summary.csv")
    result["contributions"] = summaries

    freqs, _ = stft_axes(stft_cfg, prep.data.n_samples)
    data = arrays[args.cam_split]
    n = min(args.max_cams, len(data))
    cams = analysis.grad_cam_batch(model, data.x_time[:n], data.x_spec[:n], threshold=meta.get("threshold") or 0.5)
    cam_dir = out / "gradcam"
    cam_dir.mkdir(exist_ok=True)
    rows = []
    for i, cam in enumerate(cams):
        stem = f"{args.cam_split}_{i:05d}"
        analysis.write_pgm(cam.heatmap, cam_dir / f"{stem}.pgm")
        analysis.write_float_matrix(cam.heatmap, cam_dir / f"{stem}.f32")
        rows.append({"trial": i, "label": int(data.y[i]), "predicted": cam.predicted, "confidence": cam.confidence,
                     "rows": cam.heatmap.shape[0], "cols": cam.heatmap.shape[1],
                     "mass_below_8hz": analysis.band_mass_fraction(cam.heatmap, freqs, 8.0)})
    write_csv(rows, cam_dir / "index.csv")
    result["gradcam"] = len(rows)
    return result


def cmd_report(args) -> dict:
    root = _out_root(args)
    if not root.exists():
        raise ConfigError(f"results root {root} does not exist")
    runs = []
    for path in sorted(root.rglob("metrics.json")):
        row = read_json(path).get("row")
        if row:
            runs.append(row)
    groups: dict = {}
    for r in runs:
        groups.setdefault((r["task"], r["config_id"], r["model"], r["strategy"]), []).append(r)
    table3 = [seed_summary(sorted(g, key=lambda r: r["seed"]), TABLE_COLUMNS) for _, g in sorted(groups.items())]
    fusion = []
    for path in sorted(root.glob("*/fusion_summary.csv")):
        fusion.extend(read_csv(path))
    report_dir = root / "report"
    report_dir.mkdir(parents=True, exist_ok=True)
    write_csv(table3, report_dir / "benchmark.csv")
    write_csv(fusion, report_dir / "fusion.csv", SUMMARY_COLUMNS)
    write_json({"benchmark": table3, "fusion": fusion}, report_dir / "report.json")
    return {"path": str(report_dir), "runs": len(runs), "groups": len(table3), "fusion_tasks": len(fusion)}


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="aspen", description="ASPEN dual-stream EEG decoding toolkit")
    p.add_argument("--log-level", default="WARNING", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, data=True, out=True):
        sp.add_argument("--config", help="JSON run config (flat key/value object)")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key (repeatable)")
        if data:
            sp.add_argument("--data", help="EEGT epochs file")
            sp.add_argument("--task", choices=sorted(TASKS))
        if out:
            sp.add_argument("--out", help="results root (default $ASPEN_OUT or ./results)")
        sp.add_argument("--overwrite", action="store_true", help="allow replacing existing outputs")

    sp = sub.add_parser("synth", help="generate a synthetic EEGT file")
    common(sp, data=False, out=False)
    sp.add_argument("--paradigm", choices=sorted(TASKS), required=True)
    sp.add_argument("--out", required=True, help="output .eegt path")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--variant", choices=["standard", "phase_coded"])
    sp.set_defaults(func=cmd_synth)

    sp = sub.add_parser("split", help="write a seen/unseen subject split plan")
    sp.add_argument("--data", required=True)
    sp.add_argument("--seed", type=int, default=44)
    sp.add_argument("--seen-fraction", type=float, default=0.75)
    sp.add_argument("--out", required=True, help="output JSON path")
    sp.add_argument("--overwrite", action="store_true")
    sp.set_defaults(func=cmd_split)

    def stft_flags(sp):
        sp.add_argument("--n-perseg", type=int)
        sp.add_argument("--n-overlap", type=int)
        sp.add_argument("--n-fft", type=int)

    sp = sub.add_parser("train", help="train one model for every seed")
    common(sp)
    stft_flags(sp)
    sp.add_argument("--model", choices=["aspen", "spen"])
    sp.add_argument("--fusion", choices=STRATEGIES)
    sp.add_argument("--seeds", type=int, nargs="+")
    sp.add_argument("--max-epochs", type=int)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("evaluate", help="re-evaluate a trained results directory")
    sp.add_argument("--run", required=True, help="results directory of one seed")
    sp.add_argument("--data", help="override the data path recorded in the snapshot")
    sp.add_argument("--splits", nargs="+", default=["val", "seen", "unseen"], choices=["train", "val", "seen", "unseen"])
    sp.add_argument("--out", help="output JSON (default <run>/evaluation.json)")
    sp.add_argument("--overwrite", action="store_true")
    sp.set_defaults(func=cmd_evaluate)

    for name, func, helptext in (
        ("ablate-stft", cmd_ablate_stft, "STFT search-space ablation with the spectral-only model"),
        ("ablate-fusion", cmd_ablate_fusion, "all fusion strategies on the top-3 STFT configs"),
    ):
        sp = sub.add_parser(name, help=helptext)
        common(sp)
        sp.add_argument("--seed", type=int)
        sp.add_argument("--max-epochs", type=int)
        sp.add_argument("--keep-runs", action="store_true", help="also write every cell's results directory")
        if name == "ablate-fusion":
            sp.add_argument("--top3", help="top3.json from ablate-stft (default <out>/<task>/top3.json)")
            sp.add_argument("--configs", help="comma-separated STFT config identifiers")
        sp.set_defaults(func=func)

    sp = sub.add_parser("characterize", help="cross-session / cross-subject pattern correlations")
    common(sp)
    sp.add_argument("--domains", nargs="+", default=list(DOMAINS), choices=DOMAINS)
    sp.add_argument("--modes", nargs="+", default=["cross_subject", "cross_session"],
                    choices=["cross_subject", "cross_session"])
    sp.set_defaults(func=cmd_characterize)

    sp = sub.add_parser("analyze", help="stream contributions and Grad-CAM for a trained run")
    sp.add_argument("--run", required=True)
    sp.add_argument("--data")
    sp.add_argument("--splits", nargs="+", default=["unseen"], choices=["val", "seen", "unseen"])
    sp.add_argument("--cam-split", default="unseen", choices=["val", "seen", "unseen"])
    sp.add_argument("--max-cams", type=int, default=16)
    sp.add_argument("--out")
    sp.add_argument("--overwrite", action="store_true")
    sp.set_defaults(func=cmd_analyze)

    sp = sub.add_parser("report", help="merge results into benchmark and fusion summary tables")
    sp.add_argument("--out", help="results root to scan")
    sp.set_defaults(func=cmd_report)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        return _error_record("usage", exc, EXIT_USAGE)
    logging.basicConfig(level=args.log_level, format="%(levelname)s %(name)s: %(message)s")
    try:
        result = args.func(args)
    except (ConfigError, ParameterError) as exc:
        return _error_record("config", exc, EXIT_CONFIG)
    except (AspenError, OSError) as exc:
        return _error_record("runtime", exc, EXIT_RUNTIME)
    except KeyboardInterrupt:
        raise
    except Exception as exc:  # noqa: BLE001 - last-resort machine-readable record
        log.debug("unhandled error", exc_info=True)
        return _error_record("runtime", exc, EXIT_RUNTIME)
    print(json.dumps({"status": "ok", "command": args.command, **result}, default=_json_default))
    return 0


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    return str(o)


if __name__ == "__main__":
    sys.exit(main())
