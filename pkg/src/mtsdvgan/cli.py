"""Command-line interface.

Commands: synth, preprocess, train, evaluate, sweep-lambda, stats-cd.
Every command writes a manifest JSON next to its outputs recording the
command, the fully resolved configuration, input/output paths, seed and
wall-clock duration; re-running a command with the same manifest inputs
reproduces its outputs byte-identically in the sequential build.

Exit codes: 0 success, 2 validation error (bad flags, bad config, bad
input files), 3 runtime/numeric error.

MTSDVGAN_THREADS caps internal (BLAS) parallelism; it must be honored
before numpy loads, which is why the heavy imports happen inside main().
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_RUNTIME = 3

MANIFEST_VERSION = 1


def _apply_thread_cap() -> None:
    cap = os.environ.get("MTSDVGAN_THREADS", "").strip()
    if cap:
        for var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ.setdefault(var, cap)


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n",
                    encoding="utf-8")


def _manifest(path: Path, command: str, config: dict, inputs: dict,
              outputs: dict, seed, t0: float) -> None:
    from . import kernels

    _write_json(path, {
        "command": command,
        "format_version": MANIFEST_VERSION,
        "config": config,
        "inputs": {k: str(v) for k, v in inputs.items()},
        "outputs": {k: str(v) for k, v in outputs.items()},
        "seed": seed,
        "backend": kernels.BACKEND,
        "duration_s": round(time.perf_counter() - t0, 3),
    })


def _load_series_auto(path):
    """Load a CSV, with labels when a label column is present."""
    import csv as _csv

    from .data import LABEL_COLUMN, load_csv

    with open(path, "r", encoding="utf-8", newline="") as fh:
        header = next(_csv.reader(fh), [])
    return load_csv(path, has_labels=LABEL_COLUMN in [h.strip() for h in header])


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_synth(args) -> int:
    from . import config as cfgmod
    from .data import RawSeries, write_csv
    from .synth import synth_generate

    t0 = time.perf_counter()
    file_vals = cfgmod.load_config_file(args.config) if args.config else {}
    synth_cfg, train_cfg = cfgmod.resolve(file_vals, {"seed": args.seed})
    series = synth_generate(synth_cfg)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_csv(out, series)
    outputs = {"corpus": out}

    if args.train_out or args.eval_out:
        if not (args.train_out and args.eval_out):
            raise cfgmod.ConfigError("--train-out and --eval-out must be given together")
        if not 0.0 < args.train_frac < 1.0:
            raise cfgmod.ConfigError("--train-frac must lie in (0, 1)")
        cut = int(round(series.values.shape[0] * args.train_frac))
        head = RawSeries(values=series.values[:cut], labels=series.labels[:cut],
                         feature_names=series.feature_names)
        tail = RawSeries(values=series.values[cut:], labels=series.labels[cut:],
                         feature_names=series.feature_names)
        write_csv(args.train_out, head)
        write_csv(args.eval_out, tail)
        outputs["train"] = args.train_out
        outputs["eval"] = args.eval_out

    _manifest(out.with_suffix(".manifest.json"), "synth",
              cfgmod.as_flat_dict(synth_cfg, train_cfg),
              {"config": args.config or ""}, outputs, synth_cfg.seed, t0)
    return EXIT_OK


def cmd_preprocess(args) -> int:
    import numpy as np

    from . import config as cfgmod
    from .data import (RawSeries, apply_normalizer, apply_pca, fit_normalizer,
                       fit_pca, make_windows)
    from .serialize import save_preproc, save_windows

    t0 = time.perf_counter()
    file_vals = cfgmod.load_config_file(args.config) if args.config else {}
    synth_cfg, cfg = cfgmod.resolve(file_vals, {
        "signal_number": args.signal_number,
        "window_size": args.window_size,
        "shift_length": args.shift_length,
    })

    train_series = _load_series_auto(args.train_csv)
    eval_series = _load_series_auto(args.eval_csv)

    # preprocessing state comes from normal training rows only
    if train_series.labels is not None and train_series.labels.any():
        normal_rows = train_series.values[train_series.labels == 0]
        fit_basis = RawSeries(values=normal_rows,
                              feature_names=train_series.feature_names)
    else:
        fit_basis = train_series
    norm = fit_normalizer(fit_basis)
    normed_basis = apply_normalizer(norm, fit_basis)
    pca = fit_pca(normed_basis, cfg.signal_number)

    def reduce(series):
        return apply_pca(pca, apply_normalizer(norm, series))

    train_red = reduce(train_series)
    eval_red = reduce(eval_series)

    train_ws = make_windows(train_red, train_series.labels,
                            cfg.window_size, cfg.shift_length)
    eval_ws = make_windows(eval_red, eval_series.labels,
                           cfg.window_size, cfg.shift_length)

    # training uses normal windows only; the tail of that split is held
    # out as the score-normalization reference
    if train_ws.window_labels is not None:
        keep = train_ws.window_labels == 0
    else:
        keep = np.ones(len(train_ws), dtype=bool)
    normal_idx = np.flatnonzero(keep)
    n_val = max(1, int(round(len(normal_idx) * cfg.val_fraction)))
    if len(normal_idx) <= n_val:
        raise cfgmod.ConfigError(
            f"too few normal training windows ({len(normal_idx)}) for "
            f"val_fraction={cfg.val_fraction}")
    train_idx, val_idx = normal_idx[:-n_val], normal_idx[-n_val:]

    from .data import WindowSet
    def subset(ws, idx, with_labels):
        return WindowSet(windows=ws.windows[idx],
                         window_labels=ws.window_labels[idx] if with_labels and ws.window_labels is not None else None,
                         start_indices=ws.start_indices[idx])

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    save_preproc(out_dir / "preproc_state.npz", norm, pca)
    save_windows(out_dir / "train_windows.npz", subset(train_ws, train_idx, False))
    save_windows(out_dir / "val_windows.npz", subset(train_ws, val_idx, False))
    save_windows(out_dir / "eval_windows.npz", eval_ws)

    _manifest(out_dir / "preprocess.manifest.json", "preprocess",
              cfgmod.as_flat_dict(synth_cfg, cfg),
              {"train_csv": args.train_csv, "eval_csv": args.eval_csv,
               "config": args.config or ""},
              {"out_dir": out_dir}, cfg.seed, t0)
    return EXIT_OK


def cmd_train(args) -> int:
    from . import config as cfgmod
    from .serialize import load_windows
    from .training import ABLATION_FLAGS, train

    t0 = time.perf_counter()
    file_vals = cfgmod.load_config_file(args.config) if args.config else {}
    overrides = {
        "epochs": args.epochs,
        "learning_rate": args.learning_rate,
        "seed": args.seed,
        "batch_size": args.batch_size,
    }
    if args.ablate:
        for flag in args.ablate:
            if flag not in ABLATION_FLAGS:
                raise cfgmod.ConfigError(
                    f"unknown ablation '{flag}'; choose from {ABLATION_FLAGS}")
            overrides[flag] = True
    synth_cfg, cfg = cfgmod.resolve(file_vals, overrides)

    windows_dir = Path(args.windows_dir)
    train_ws = load_windows(windows_dir / "train_windows.npz")
    out_dir = Path(args.out_dir)
    _, history = train(train_ws, cfg, out_dir)

    _manifest(out_dir / "train.manifest.json", "train",
              cfgmod.as_flat_dict(synth_cfg, cfg),
              {"windows_dir": windows_dir, "config": args.config or ""},
              {"out_dir": out_dir, "history": out_dir / "history.csv",
               "checkpoints": len(history.checkpoints)},
              cfg.seed, t0)
    return EXIT_OK


def _pick_checkpoint(args, eval_ws, val_ws):
    """Resolve --checkpoint / --run-dir [--best-by f1] to a model bundle."""
    from .detection import detect
    from .serialize import load_checkpoint

    if args.checkpoint:
        bundle, cfg, epoch = load_checkpoint(args.checkpoint)
        return bundle, cfg, args.checkpoint
    run_dir = Path(args.run_dir)
    ckpts = sorted(run_dir.glob("epoch_*.npz"))
    if not ckpts:
        raise FileNotFoundError(f"no checkpoints under {run_dir}")
    if args.best_by is None:
        bundle, cfg, _ = load_checkpoint(ckpts[-1])
        return bundle, cfg, ckpts[-1]
    best = None
    for path in ckpts:
        bundle, cfg, _ = load_checkpoint(path)
        report = detect(bundle, eval_ws, val_ws, lam="auto", threshold="auto")
        f1 = report.metrics.f1 if report.metrics else 0.0
        if best is None or f1 > best[0]:
            best = (f1, bundle, cfg, path)
    return best[1], best[2], best[3]


def cmd_evaluate(args) -> int:
    from .detection import detect
    from .serialize import load_windows

    t0 = time.perf_counter()
    windows_dir = Path(args.windows_dir)
    eval_ws = load_windows(windows_dir / "eval_windows.npz")
    val_ws = load_windows(windows_dir / "val_windows.npz")

    lam = "auto" if args.lam == "auto" else float(args.lam)
    if lam != "auto" and not 0.0 <= lam <= 1.0:
        raise ValueError(f"--lambda must be 'auto' or in [0, 1], got {lam}")
    threshold = "auto" if args.threshold == "auto" else float(args.threshold)

    bundle, cfg, ckpt_path = _pick_checkpoint(args, eval_ws, val_ws)
    report = detect(bundle, eval_ws, val_ws, lam=lam, threshold=threshold,
                    or_rule=args.or_rule)

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    metrics = {"format_version": MANIFEST_VERSION, "mode": report.mode,
               "lambda": report.lam, "threshold": report.threshold}
    if report.metrics is not None:
        m = report.metrics
        metrics.update({"precision": m.precision, "accuracy": m.accuracy,
                        "recall": m.recall, "f1": m.f1, "auc": m.auc,
                        "counts": {"tp": m.tp, "fp": m.fp, "fn": m.fn, "tn": m.tn},
                        "degenerate": list(m.degenerate)})
    _write_json(out_dir / "metrics.json", metrics)

    lines = ["fpr,tpr,threshold"]
    if report.roc is not None:
        fpr, tpr, thr = report.roc
        lines += [f"{repr(float(a))},{repr(float(b))},{repr(float(c))}"
                  for a, b, c in zip(fpr, tpr, thr)]
    (out_dir / "roc.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")

    s = report.scores
    lines = ["start_index,l_r,l_d,rd,label"]
    for i in range(len(s.rd)):
        label = "" if s.window_labels is None else str(int(s.window_labels[i]))
        lines.append(f"{int(s.start_indices[i])},{repr(float(s.l_r[i]))},"
                     f"{repr(float(s.l_d[i]))},{repr(float(s.rd[i]))},{label}")
    (out_dir / "scores.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")

    from dataclasses import asdict
    resolved = asdict(cfg)
    resolved.update({"lambda": report.lam, "threshold": report.threshold,
                     "or_rule": args.or_rule})
    _manifest(out_dir / "evaluate.manifest.json", args.command_name,
              resolved, {"checkpoint": ckpt_path, "windows_dir": windows_dir},
              {"metrics": out_dir / "metrics.json", "roc": out_dir / "roc.csv",
               "scores": out_dir / "scores.csv"},
              cfg.seed, t0)
    return EXIT_OK


def cmd_stats_cd(args) -> int:
    import numpy as np

    from .stats import friedman_ranks

    t0 = time.perf_counter()
    payload = json.loads(Path(args.scores).read_text(encoding="utf-8"))
    if not isinstance(payload, dict) or "scores" not in payload:
        raise ValueError("scores JSON must contain a 'scores' mapping "
                         "{dataset: {method: value}}")
    table = payload["scores"]
    datasets = payload.get("datasets") or sorted(table)
    methods = payload.get("methods")
    if methods is None:
        methods = sorted({m for row in table.values() for m in row})
    matrix = []
    for ds in datasets:
        row = table.get(ds)
        if row is None or set(methods) - set(row):
            raise ValueError(f"dataset '{ds}' is missing method scores")
        matrix.append([float(row[m]) for m in methods])

    rank_table = friedman_ranks(np.asarray(matrix), methods=methods,
                                datasets=datasets, alpha=args.alpha,
                                cd_k=args.k)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    _write_json(out, {
        "format_version": MANIFEST_VERSION,
        "alpha": rank_table.alpha,
        "k": rank_table.k,
        "n_datasets": rank_table.n_datasets,
        "cd": rank_table.cd,
        "average_ranks": {m: float(r) for m, r in
                          zip(rank_table.methods, rank_table.average)},
        "per_dataset_ranks": {ds: {m: float(r) for m, r in zip(rank_table.methods, row)}
                              for ds, row in zip(rank_table.datasets, rank_table.ranks)},
    })
    _manifest(out.with_suffix(".manifest.json"), "stats-cd", {"alpha": args.alpha,
              "k": args.k}, {"scores": args.scores}, {"ranks": out}, None, t0)
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument wiring
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mtsdvgan",
        description="Dual-variational LSTM GAN anomaly detection for "
                    "multivariate time series")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a labeled synthetic corpus")
    p.add_argument("--config", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--train-out", default=None)
    p.add_argument("--eval-out", default=None)
    p.add_argument("--train-frac", type=float, default=0.4)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("preprocess",
                       help="fit normalizer+PCA on training data, window both splits")
    p.add_argument("--train-csv", required=True)
    p.add_argument("--eval-csv", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--signal-number", type=int, default=None)
    p.add_argument("--window-size", type=int, default=None)
    p.add_argument("--shift-length", type=int, default=None)
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("train", help="train the three networks")
    p.add_argument("--windows-dir", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--learning-rate", type=float, default=None)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--ablate", action="append", default=None,
                   metavar="no_contrastive|no_encoder|bce_generator")
    p.set_defaults(func=cmd_train)

    for name, lam_default in (("evaluate", "auto"), ("sweep-lambda", "auto")):
        p = sub.add_parser(name, help="score an evaluation split"
                           if name == "evaluate" else
                           "evaluate with the full lambda grid (alias)")
        p.add_argument("--checkpoint", default=None)
        p.add_argument("--run-dir", default=None)
        p.add_argument("--best-by", choices=("f1",), default=None)
        p.add_argument("--windows-dir", required=True)
        p.add_argument("--out-dir", required=True)
        if name == "evaluate":
            p.add_argument("--lambda", dest="lam", default=lam_default)
        else:
            p.set_defaults(lam="auto")
        p.add_argument("--threshold", default="auto")
        p.add_argument("--or-rule", action="store_true",
                       help="alarm when either score channel alone crosses "
                            "its own best-F1 threshold (exploratory)")
        p.set_defaults(func=cmd_evaluate, command_name=name)

    p = sub.add_parser("stats-cd",
                       help="Friedman average ranks + Nemenyi critical difference")
    p.add_argument("--scores", required=True)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--k", type=int, default=None,
                   help="method count for the CD formula (default: all methods)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_stats_cd)

    return parser


def run(argv=None) -> int:
    _apply_thread_cap()
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "func", None) is cmd_evaluate:
        if bool(args.checkpoint) == bool(args.run_dir):
            print("error: exactly one of --checkpoint / --run-dir is required",
                  file=sys.stderr)
            return EXIT_VALIDATION

    from .detection import ScoreNormalizationError

    try:
        return args.func(args)
    except (ScoreNormalizationError, FloatingPointError, ArithmeticError,
            RuntimeError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
