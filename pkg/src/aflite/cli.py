"""Command-line driver.

Runs one of four pipelines from a JSON config, with flags overriding
individual keys::

    aflite --mode filter --embeddings data.csv --tau 0.75 --out-dir out/
    aflite --mode synthetic-sweep --out-dir sweep/
    aflite --mode afopt-check --out-dir check/
    aflite --mode generate --separation 0 --out-dir data/

All artifacts are written after the pipeline has finished.
"""

from __future__ import annotations

import argparse
import csv
import io as _io
import json
import logging
import os
import sys
from dataclasses import asdict, fields
from pathlib import Path

import numpy as np

from . import io
from .afopt import afopt_search, exact_representation_bias
from .classifiers import TrainConfig
from .core import EmbeddedDataset, FilterResult
from .errors import AFLiteError, ConfigError, PhaseError
from .evaluation import evaluate
from .filtering import FilterConfig, run_filter
from .synthetic import SyntheticSpec, bias_noise_toy, generate

log = logging.getLogger("aflite")

MODES = ("filter", "synthetic-sweep", "afopt-check", "generate")
TOP_LEVEL_KEYS = {
    "mode", "embeddings", "masks", "out_dir", "threads", "emit_plot_data",
    "holdout_fraction", "separation", "filter", "synthetic",
}
FILTER_KEYS = {f.name for f in fields(FilterConfig)}
TRAIN_KEYS = {f.name for f in fields(TrainConfig)}
SYNTHETIC_KEYS = {f.name for f in fields(SyntheticSpec)}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="aflite",
        description="Adversarial filtering of spuriously predictable instances.",
    )
    p.add_argument("--config", type=Path, help="JSON run configuration")
    p.add_argument("--mode", choices=MODES)
    p.add_argument("--embeddings", type=Path, help="CSV with header id,f0,...,label")
    p.add_argument("--masks", type=Path, help="optional CSV id,bias,flip for removal rates")
    p.add_argument("--out-dir", type=Path)
    p.add_argument("--n", type=int, help="minimum retained size")
    p.add_argument("--m", type=int, help="partitions per phase")
    p.add_argument("--t", type=int, help="training size per partition")
    p.add_argument("--k", type=int, help="slice size")
    p.add_argument("--tau", type=float, help="early-stopping threshold")
    p.add_argument("--strategy", choices=("greedy", "greedy_slicing", "gumbel_sampling"))
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int, help="worker threads (default: $AFLITE_THREADS or CPU count)")
    p.add_argument("--holdout-fraction", type=float)
    p.add_argument("--separation", type=int, help="separation level for --mode generate")
    p.add_argument("--emit-plot-data", action="store_true", default=None,
                   help="also write per-instance x,y,bias,retained rows")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def load_config(path: Path | None) -> dict:
    if path is None:
        return {}
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(raw) - TOP_LEVEL_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    base = Path(path).resolve().parent
    for key in ("embeddings", "masks", "out_dir"):
        if key in raw and raw[key] is not None:
            raw[key] = str(base / raw[key])
    return raw


def merge_overrides(cfg: dict, args: argparse.Namespace) -> dict:
    cfg = json.loads(json.dumps(cfg))
    cfg.setdefault("filter", {})
    for key in ("n", "m", "t", "k", "tau", "strategy", "seed"):
        value = getattr(args, key)
        if value is not None:
            cfg["filter"][key] = value
    for key, attr in (("mode", "mode"), ("embeddings", "embeddings"), ("masks", "masks"),
                      ("out_dir", "out_dir"), ("threads", "threads"),
                      ("holdout_fraction", "holdout_fraction"), ("separation", "separation"),
                      ("emit_plot_data", "emit_plot_data")):
        value = getattr(args, attr)
        if value is not None:
            cfg[key] = str(value) if isinstance(value, Path) else value
    return cfg


def resolve_threads(cfg: dict) -> int:
    threads = cfg.get("threads")
    if threads is None:
        env = os.environ.get("AFLITE_THREADS")
        if env:
            try:
                threads = int(env)
            except ValueError:
                raise ConfigError(f"AFLITE_THREADS must be an integer, got {env!r}") from None
        else:
            threads = os.cpu_count() or 1
    if threads < 1:
        raise ConfigError("threads must be at least 1")
    return threads


def filter_config(section: dict, **defaults) -> FilterConfig:
    section = {**defaults, **section}
    unknown = set(section) - FILTER_KEYS
    if unknown:
        raise ConfigError(f"unknown filter keys: {sorted(unknown)}")
    train = section.pop("train", None) or {}
    if set(train) - TRAIN_KEYS:
        raise ConfigError(f"unknown train keys: {sorted(set(train) - TRAIN_KEYS)}")
    section.setdefault("t", 100)
    if section.get("n") is None:
        # tau is the intended stopping control; n only has to exceed t
        section["n"] = section["t"] + 1
    try:
        return FilterConfig(train=TrainConfig(**train), **section)
    except (TypeError, AFLiteError) as exc:
        raise ConfigError(f"invalid filter config: {exc}") from None


def synthetic_spec(section: dict | None) -> SyntheticSpec:
    section = dict(section or {})
    unknown = set(section) - SYNTHETIC_KEYS
    if unknown:
        raise ConfigError(f"unknown synthetic keys: {sorted(unknown)}")
    try:
        return SyntheticSpec(**section)
    except (TypeError, AFLiteError) as exc:
        raise ConfigError(f"invalid synthetic spec: {exc}") from None


def _eval_seed(seed: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(2,)))


def _report(dataset, result, fcfg, cfg, bias_mask=None, flip_mask=None, extra=None) -> dict:
    holdout = cfg.get("holdout_fraction", 0.2)
    report = evaluate(
        dataset, result, holdout, _eval_seed(fcfg.seed), bias_mask, flip_mask,
        fcfg.train, seed=fcfg.seed,
    ).to_dict()
    report["filter_config"] = _config_dict(fcfg)
    report["phases"] = len(result.phases)
    report["evaluation_protocol"] = (
        "stratified holdout carved from the full dataset; each of full, retained and "
        "control sets is trained on its non-holdout part and scored on its holdout part"
    )
    if extra:
        report.update(extra)
    return report


def _config_dict(fcfg: FilterConfig) -> dict:
    out = asdict(fcfg)
    out["train"] = asdict(fcfg.train)
    return out


def _artifacts(dataset: EmbeddedDataset, result: FilterResult, report: dict | None,
               emit_plot: bool, bias_mask=None) -> dict[str, str]:
    files = {
        "retained_ids.txt": io.retained_ids_text(result, dataset.ids),
        "history.csv": io.history_csv_text(result),
    }
    if report is not None:
        files["report.json"] = io.json_text(report)
    if emit_plot:
        files["plot_data.csv"] = io.plot_data_csv_text(dataset, result.retained_ids, bias_mask)
    return files


def run_filter_mode(cfg: dict, threads: int) -> dict[str, str]:
    if not cfg.get("embeddings"):
        raise ConfigError("filter mode needs an embeddings path (--embeddings)")
    dataset = io.load_embeddings(cfg["embeddings"])
    fcfg = filter_config(cfg.get("filter", {}))
    bias_mask = flip_mask = None
    if cfg.get("masks"):
        bias_mask, flip_mask = io.load_masks(cfg["masks"], dataset.ids)
    result = run_filter(dataset, fcfg, threads)
    report = _report(dataset, result, fcfg, cfg, bias_mask, flip_mask)
    return _artifacts(dataset, result, report, cfg.get("emit_plot_data", False), bias_mask)


SUMMARY_COLUMNS = [
    "separation_index", "gap", "original", "retained", "phases",
    "bias_removal", "flip_removal",
    "linear_before", "linear_after", "linear_control",
    "rbf_before", "rbf_after", "rbf_control",
]


def run_sweep_mode(cfg: dict, threads: int) -> dict[str, str]:
    spec = synthetic_spec(cfg.get("synthetic"))
    fcfg = filter_config(cfg.get("filter", {}))
    files: dict[str, str] = {}
    rows = []
    for level, gap in enumerate(spec.separations):
        data = generate(spec, level)
        log.info("separation %d (gap %.2f): filtering %d instances", level, gap, len(data.dataset))
        try:
            result = run_filter(data.dataset, fcfg, threads)
        except PhaseError as exc:
            exc.separation = level
            raise
        report = _report(data.dataset, result, fcfg, cfg, data.bias_mask, data.flip_mask,
                         {"separation_index": level, "gap": gap, "synthetic_spec": asdict(spec)})
        for name, text in _artifacts(data.dataset, result, report,
                                     cfg.get("emit_plot_data", False), data.bias_mask).items():
            files[f"separation_{level}/{name}"] = text
        rows.append([
            level, gap, report["dataset_sizes"][0], report["dataset_sizes"][1], report["phases"],
            report["bias_removal"], report["flip_removal"],
            *report["linear_accuracy"], *report["rbf_accuracy"],
        ])
    buf = _io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SUMMARY_COLUMNS)
    for row in rows:
        writer.writerow(["" if v is None else (format(v, ".17g") if isinstance(v, float) else v)
                         for v in row])
    files["summary.csv"] = buf.getvalue()
    return files


def run_afopt_mode(cfg: dict, threads: int) -> dict[str, str]:
    if cfg.get("embeddings"):
        dataset = io.load_embeddings(cfg["embeddings"])
    else:
        dataset = bias_noise_toy().dataset
    defaults = {"n": len(dataset) // 2, "t": 2, "m": 256, "k": 1, "tau": 0.0,
                "single_class_splits": "constant"}
    fcfg = filter_config(cfg.get("filter", {}), **defaults)
    optimum = afopt_search(dataset, fcfg.n, fcfg.t)
    result = run_filter(dataset, fcfg, threads)
    kept = sorted(dataset.index_of(result.retained_ids).tolist())
    heuristic = exact_representation_bias(dataset, fcfg.t, subset=kept)
    report = {
        "filter_config": _config_dict(fcfg),
        "afopt_subset_ids": [dataset.ids[i] for i in optimum.subset],
        "afopt_bias": optimum.bias,
        "filter_subset_ids": [dataset.ids[i] for i in heuristic.subset],
        "filter_bias": heuristic.bias,
        "filter_bias_factored": heuristic.factored_bias,
        "bias_gap": heuristic.bias - optimum.bias,
        "full_bias": exact_representation_bias(dataset, fcfg.t).bias,
    }
    return _artifacts(dataset, result, report, False)


def run_generate_mode(cfg: dict, threads: int) -> dict[str, str]:
    spec = synthetic_spec(cfg.get("synthetic"))
    level = cfg.get("separation")
    if level is None:
        level = spec.largest_separation_index
    data = generate(spec, level)
    return {
        "embeddings.csv": io.embeddings_text(data.dataset),
        "masks.csv": io.masks_text(data.dataset.ids, data.bias_mask, data.flip_mask),
    }


PIPELINES = {
    "filter": run_filter_mode,
    "synthetic-sweep": run_sweep_mode,
    "afopt-check": run_afopt_mode,
    "generate": run_generate_mode,
}


def run_experiment(config_path: Path | None, overrides: argparse.Namespace) -> int:
    cfg = merge_overrides(load_config(config_path), overrides)
    mode = cfg.get("mode")
    if mode not in PIPELINES:
        raise ConfigError(f"mode must be one of {MODES}, got {mode!r}")
    out_dir = Path(cfg.get("out_dir") or ".")
    threads = resolve_threads(cfg)
    files = PIPELINES[mode](cfg, threads)
    for name, text in files.items():
        io.write_text(out_dir / name, text)
    log.info("wrote %d file(s) to %s", len(files), out_dir)
    return 0


def _diagnostic(exc: AFLiteError) -> str:
    parts = [f"module={exc.module}"]
    if isinstance(exc, PhaseError):
        if getattr(exc, "separation", None) is not None:
            parts.append(f"separation={exc.separation}")
        parts.append(f"phase={exc.phase}")
        cause = exc.cause
        if isinstance(cause, AFLiteError):
            parts[0] = f"module={cause.module}"
    else:
        cause = exc
    return f"aflite: error [{' '.join(parts)}] {cause}"


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return run_experiment(args.config, args)
    except ConfigError as exc:
        print(_diagnostic(exc), file=sys.stderr)
        return 2
    except AFLiteError as exc:
        print(_diagnostic(exc), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
