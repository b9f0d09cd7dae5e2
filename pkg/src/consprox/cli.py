"""Command-line experiment harness.

Four subcommands cover the experiment families: ``cdl-train`` learns a
filter bank, ``csc-solve`` sparse-codes signals against a saved bank,
``denoise-eval`` sweeps the sparsity weight on noise-corrupted images,
``anomaly-detect`` scores synchronized series. Each writes its artifacts
(traces, banks, maps, metrics, a JSON summary) under the output directory.

Exit codes: 0 success, 1 solver divergence or runtime failure, 2 bad
configuration or arguments.
"""

from __future__ import annotations

import argparse
import glob
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from .anomaly import (AnomalyProblem, anomaly_score, caddict_admm_consensus,
                      caddict_apg_consensus, flag_scores, flagged_windows,
                      read_series_csv, write_scores_csv)
from .cdl import CdlConfig, cdl_train
from .config import ConfigError, ExperimentConfig, load_config
from .csc import CscProblem, csc_admm_solve, csc_fista_solve
from .fourier import conv_sum
from .images import load_grayscale_images, synthetic_textures
from .metrics import awgn_corrupt, psnr, sparsity_measure
from .signals import (Dictionary, SignalSet, load_dictionary, save_dictionary,
                      save_maps)
from .trace import DivergenceError

log = logging.getLogger(__name__)


def _expand_paths(patterns: list[str]) -> list[str]:
    paths: list[str] = []
    for pat in patterns:
        hits = sorted(glob.glob(pat))
        if hits:
            paths.extend(hits)
        elif Path(pat).exists():
            paths.append(pat)
        else:
            raise ConfigError(f"dataset: no files match {pat!r}")
    return paths


def _load_dataset(cfg: ExperimentConfig) -> SignalSet:
    ds = cfg.dataset
    if ds.synthetic is not None:
        count, shape, seed = ds.synthetic
        return synthetic_textures(count, shape, seed)
    return load_grayscale_images(_expand_paths(ds.images), ds.crop, ds.rescale)


def _reframe(d: Dictionary, frame_shape: tuple[int, ...]) -> Dictionary:
    if d.frame_shape == frame_shape:
        return d
    return Dictionary(d.filters, frame_shape)


def _write_summary(out_dir: Path, payload: dict) -> None:
    (out_dir / "summary.json").write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n")


def run_cdl(cfg: ExperimentConfig, out_dir: Path) -> dict:
    signals = _load_dataset(cfg)
    holdout_set = None
    every = 0
    if cfg.holdout is not None and cfg.holdout.every > 0:
        holdout_set = load_grayscale_images(
            _expand_paths(cfg.holdout.images), cfg.dataset.crop,
            cfg.dataset.rescale)
        every = cfg.holdout.every
    started = time.perf_counter()
    result = cdl_train(
        cfg.cdl, signals,
        holdout=holdout_set, holdout_every=every,
        holdout_lam=cfg.holdout.sparsity if cfg.holdout else 0.1,
        holdout_iters=cfg.holdout.iters if cfg.holdout else 200)
    elapsed = time.perf_counter() - started
    save_dictionary(out_dir / "dictionary.cpxd", result.dictionary)
    save_maps(out_dir / "maps.cpxm", result.maps)
    result.trace.save(out_dir / "trace.csv", cfg.deterministic)
    summary = {
        "task": "cdl",
        "seed": cfg.seed,
        "signals": signals.k_count,
        "frame": list(signals.frame_shape),
        "filters": cfg.cdl.m_count,
        "filter_size": list(cfg.cdl.filter_shape),
        "coef_solver": cfg.cdl.coef_solver,
        "dict_solver": cfg.cdl.dict_solver,
        "outer_iters": cfg.cdl.outer_iters,
        "final_objective": result.trace.final_objective,
        "holdout": [[it, val] for it, val in result.holdout],
    }
    if not cfg.deterministic:
        summary["elapsed_s"] = elapsed
    return summary


def run_csc(cfg: ExperimentConfig, out_dir: Path) -> dict:
    signals = _load_dataset(cfg)
    sec = cfg.csc
    d = _reframe(load_dictionary(sec.dict_path), signals.frame_shape)
    problem = CscProblem(d, signals, sec.sparsity)
    if sec.solver == "admm":
        maps, trace = csc_admm_solve(problem, iters=sec.iters, rho0=sec.rho0,
                                     relax=sec.relax, workers=cfg.workers)
    else:
        maps, trace = csc_fista_solve(problem, iters=sec.iters,
                                      variant=sec.solver)
    save_maps(out_dir / "maps.cpxm", maps)
    trace.save(out_dir / "trace.csv", cfg.deterministic)
    n = int(np.prod(signals.frame_shape))
    return {
        "task": "csc",
        "solver": sec.solver,
        "sparsity_weight": sec.sparsity,
        "iters": sec.iters,
        "final_objective": trace.final_objective,
        "sparsity_percent": [sparsity_measure(maps.maps[k], n)
                             for k in range(maps.k_count)],
    }


def run_denoise(cfg: ExperimentConfig, out_dir: Path) -> dict:
    clean = _load_dataset(cfg)
    sec = cfg.denoise
    noisy = awgn_corrupt(clean.data, sec.noise_sigma, sec.noise_seed)
    noisy_set = SignalSet(noisy)
    grid = np.geomspace(sec.grid_low, sec.grid_high, sec.grid_points)
    n = int(np.prod(clean.frame_shape))
    rows = ["dictionary,image,lambda,psnr,sparsity_percent"]
    best: dict[str, dict] = {}
    for path in sec.dict_paths:
        d = _reframe(load_dictionary(path), clean.frame_shape)
        name = Path(path).name
        for lam in grid:
            problem = CscProblem(d, noisy_set, float(lam))
            maps, _ = csc_admm_solve(problem, iters=sec.iters,
                                     trace_every=sec.iters,
                                     workers=cfg.workers)
            recon = conv_sum(d, maps)
            for k in range(clean.k_count):
                val = psnr(clean.data[k], recon[k])
                spa = sparsity_measure(maps.maps[k], n)
                rows.append(f"{name},{k},{repr(float(lam))},{repr(val)},"
                            f"{repr(spa)}")
                key = f"{name}:{k}"
                if key not in best or val > best[key]["psnr"]:
                    best[key] = {"lambda": float(lam), "psnr": val,
                                 "sparsity_percent": spa}
    (out_dir / "results.csv").write_text("\n".join(rows) + "\n")
    return {
        "task": "denoise",
        "noise_sigma": sec.noise_sigma,
        "grid": [float(g) for g in grid],
        "best": best,
    }


def _train_series_banks(cfg: ExperimentConfig, series: np.ndarray) -> np.ndarray:
    tr = cfg.anomaly.train
    a, b = tr.segment
    if b > series.shape[1]:
        raise ConfigError("anomaly.train.segment: beyond the series length")
    banks = []
    for p in range(series.shape[0]):
        seg = series[p, a:b]
        train_cfg = CdlConfig(
            m_count=tr.filters, filter_shape=(tr.filter_length,),
            lam=tr.sparsity, outer_iters=tr.outer_iters,
            seed=cfg.seed + p, workers=cfg.workers)
        result = cdl_train(train_cfg, SignalSet(seg[None]))
        banks.append(result.dictionary.filters)
    return np.stack(banks)


def run_anomaly(cfg: ExperimentConfig, out_dir: Path) -> dict:
    sec = cfg.anomaly
    names, series = read_series_csv(sec.series_csv)
    if sec.dict_paths is not None:
        if len(sec.dict_paths) != series.shape[0]:
            raise ConfigError("anomaly.dict_paths: need one bank per series")
        banks = np.stack([load_dictionary(p).filters for p in sec.dict_paths])
    else:
        banks = _train_series_banks(cfg, series)
    problem = AnomalyProblem(banks, series, sec.sparsity, sec.anomaly_weight,
                             grouping=sec.grouping)
    if sec.solver == "apg_cns":
        solution, trace = caddict_apg_consensus(problem, iters=sec.iters)
    else:
        solution, trace = caddict_admm_consensus(problem, iters=sec.iters)
    score = anomaly_score(solution)
    flags = flag_scores(score, sec.flag_sigma)
    windows = flagged_windows(flags)
    write_scores_csv(out_dir / "scores.csv", score, flags)
    trace.save(out_dir / "trace.csv", cfg.deterministic)
    return {
        "task": "anomaly",
        "series": names,
        "solver": sec.solver,
        "iters": sec.iters,
        "final_objective": trace.final_objective,
        "flagged_count": int(flags.sum()),
        "flagged_windows": [[a, b] for a, b in windows],
    }


_RUNNERS = {
    "cdl": run_cdl,
    "csc": run_csc,
    "denoise": run_denoise,
    "anomaly": run_anomaly,
}


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", required=True, help="YAML experiment file")
    parser.add_argument("--out", help="output directory (overrides config)")
    parser.add_argument("--seed", type=int, help="seed override")
    parser.add_argument("--workers", type=int, help="worker thread count")
    parser.add_argument("--deterministic", action="store_true",
                        help="force reproducible outputs (zeroed timings)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="consprox",
        description="Consensus proximal-gradient experiment harness")
    sub = parser.add_subparsers(dest="command", required=True)
    for cmd, task in (("cdl-train", "cdl"), ("csc-solve", "csc"),
                      ("denoise-eval", "denoise"),
                      ("anomaly-detect", "anomaly")):
        p = sub.add_parser(cmd, help=f"run the {task} task")
        p.set_defaults(task=task)
        _add_common(p)
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.task)
        if args.out:
            cfg.out_dir = args.out
        if args.seed is not None:
            cfg.seed = args.seed
            if cfg.cdl is not None:
                cfg.cdl.seed = args.seed
        if args.workers is not None:
            cfg.workers = args.workers
            if cfg.cdl is not None:
                cfg.cdl.workers = args.workers
        if args.deterministic:
            cfg.deterministic = True
        out_dir = Path(cfg.out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        summary = _RUNNERS[cfg.task](cfg, out_dir)
        summary["deterministic"] = cfg.deterministic
        summary["workers"] = cfg.workers
        _write_summary(out_dir, summary)
        print(f"{cfg.task}: ok, outputs in {out_dir}")
        return 0
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2
    except DivergenceError as err:
        print(f"solver diverged: {err}", file=sys.stderr)
        return 1
    except (OSError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
