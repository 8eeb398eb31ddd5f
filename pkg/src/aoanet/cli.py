"""Command-line interface.

Exit codes: 0 success, 2 usage/configuration, 3 data/I-O, 4 numeric domain.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np
import yaml
from filelock import FileLock, Timeout

from .array import ArrayConfig, array_factor
from .dataset import DatasetConfig, DatasetManifest, build_dataset, load_dataset, snr_eval_set
from .errors import AoAError, ConfigurationError, DataError
from .metrics import confusion_matrix, error_cdf, metrics_by_class, snr_sweep
from .music import estimate_aoa_music
from .nn.checkpoint import load_checkpoint, save_checkpoint
from .nn.model import build_model
from .nn.train import TrainConfig, train
from .pipeline import bench, infer_frame, model_records, music_records
from .signals import BASEBAND_KINDS, SourceSpec, load_frame, save_frame, synthesize_frame

log = logging.getLogger("aoanet")


def _load_config(path) -> dict:
    if path is None:
        return {}
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as e:
        raise DataError(f"cannot read config {p}: {e}") from e
    try:
        data = json.loads(text) if p.suffix == ".json" else yaml.safe_load(text)
    except (ValueError, yaml.YAMLError) as e:
        raise ConfigurationError(f"{p}: not a valid key-value config: {e}") from e
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigurationError(f"{p}: top level must be a mapping")
    return data


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def _out_dir(args) -> Path:
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _emit(obj):
    print(json.dumps(obj, sort_keys=True))


def cmd_simulate(args):
    angles = args.angle or []
    kinds = args.kind or ["random_qpsk"]
    seed0 = args.seed or 0
    sources = [SourceSpec(a, kinds[i % len(kinds)], seed=seed0 + i) for i, a in enumerate(angles)]
    out = _out_dir(args)
    written = []
    for k in range(args.count):
        seed = seed0 * 1000 + k
        frame = synthesize_frame(sources, length=args.length, snr_db=args.snr, seed=seed,
                                 noise_power=args.noise_power)
        path = out / f"frame_{k:04d}.iq"
        save_frame(frame, path)
        written.append(str(path))
    _emit({"frames": written, "angles_deg": angles, "snr_db": args.snr})


def cmd_build_dataset(args):
    conf = _load_config(args.config)
    if args.seed is not None:
        conf["seed"] = args.seed
    if args.captures is not None:
        conf["captures_per_angle"] = args.captures
    cfg = DatasetConfig.from_dict(conf)
    manifest = build_dataset(cfg, _out_dir(args), workers=args.workers)
    _emit({"manifest": str(manifest.path), "class_counts": manifest.class_counts,
           "split_counts": manifest.split_counts})


def _train_config(args) -> TrainConfig:
    conf = _load_config(args.config)
    known = {f.name for f in fields(TrainConfig)}
    unknown = set(conf) - known
    if unknown:
        raise ConfigurationError(f"unknown training config keys: {sorted(unknown)}")
    if "stages" in conf:
        conf["stages"] = tuple((int(e), tuple(t)) for e, t in conf["stages"])
    if args.seed is not None:
        conf["seed"] = args.seed
    if args.epochs is not None:
        first, second = args.epochs
        stages = conf.get("stages", TrainConfig().stages)
        conf["stages"] = ((first, stages[0][1]), (second, stages[1][1]))
    if args.keep_best:
        conf["keep_best"] = True
    return TrainConfig(**conf)


def cmd_train(args):
    cfg = _train_config(args)
    data = load_dataset(args.data)
    out = _out_dir(args)
    ckpt = out / "model.bin"
    lock = FileLock(str(ckpt) + ".lock")
    try:
        lock.acquire(timeout=0)
    except Timeout as e:
        raise DataError(f"{ckpt} is locked by another training run") from e
    try:
        model = build_model(args.model, seed=cfg.seed)
        hist = train(model, data.select("train"), data.select("val"), cfg)
        save_checkpoint(ckpt, model, data.scaler, {"epochs": cfg.total_epochs, "data": str(args.data),
                                               "best_epoch": hist.best_epoch})
        hist.write_csv(out / "history.csv")
    finally:
        lock.release()
    last = hist.rows[-1] if hist.best_epoch is None else hist.rows[hist.best_epoch - 1]
    _emit({"checkpoint": str(ckpt), "history": str(out / "history.csv"), "epoch": last["epoch"],
           "val_rmse": last["val_rmse"], "val_acc": last["val_acc"]})


def cmd_eval(args):
    model, scaler, _ = load_checkpoint(args.checkpoint)
    data = load_dataset(args.data)
    idx = data.indices(args.split)
    if len(idx) == 0:
        raise ConfigurationError(f"split {args.split!r} is empty")
    recs = model_records(model, scaler, data.features[idx], data.labels[idx], data.snr_db[idx], args.threshold)
    out = _out_dir(args)
    rows = []
    levels = sorted({r.snr_db for r in recs if not np.isnan(r.snr_db)})
    by_snr = {s: [r for r in recs if r.snr_db == s] for s in levels}
    for key, group in [("all", recs), *[(f"snr{s:g}", g) for s, g in by_snr.items()]]:
        for cls, m in metrics_by_class(group).items():
            rows.append([key, cls, m["n"], m["accuracy"], m["rmse"], m["mae"], m["rmse_per_angle"],
                         m["mae_per_angle"]])
    _write_csv(out / "metrics.csv", ["subset", "true_L", "n", "accuracy", "rmse", "mae", "rmse_per_angle",
                                     "mae_per_angle"], rows)
    cm = confusion_matrix(recs)
    (out / "confusion.txt").write_text(cm.to_text() + "\n")
    table = cm.to_csv_rows()
    _write_csv(out / "confusion.csv", table[0], table[1:])
    summary = metrics_by_class(recs)["all"]
    print(cm.to_text())
    _emit({"split": args.split, **summary})


def cmd_infer(args):
    model, scaler, _ = load_checkpoint(args.checkpoint)
    frame = load_frame(args.frame)
    _emit(infer_frame(model, scaler, frame, args.threshold, magnitude_threshold=args.detect_threshold))


def cmd_music(args):
    frame = load_frame(args.frame)
    angles, ambiguous, spec = estimate_aoa_music(frame, args.sources, frame.config, full_output=True)
    if args.out:
        out = _out_dir(args)
        _write_csv(out / "spectrum.csv", ["angle_deg", "power"], zip(spec.grid.tolist(), spec.power.tolist()))
    _emit({"angles_deg": [round(float(a), 4) for a in angles], "ambiguous": bool(ambiguous)})


def cmd_bench(args):
    if args.checkpoint:
        model, scaler, _ = load_checkpoint(args.checkpoint)
    else:
        model, scaler = build_model(args.model, seed=args.seed or 0), None
    report = bench(model, scaler, runs=args.runs)
    _emit(report.to_dict())


def cmd_plot(args):
    out = _out_dir(args)
    if args.kind == "array-factor":
        grid = np.round(np.arange(-1800, 1801) * 0.1, 10)
        cfg = ArrayConfig(args.elements, args.spacing)
        series = {s: array_factor(s, grid, cfg) for s in args.steer}
        header = ["angle_deg"] + [f"steer{s:g}_db" for s in args.steer]
        _write_csv(out / "array_factor.csv", header,
                   ([g, *[series[s][i] for s in args.steer]] for i, g in enumerate(grid)))
        _emit({"csv": str(out / "array_factor.csv")})
        return
    if args.checkpoint is None or args.data is None:
        raise ConfigurationError(f"plot {args.kind} needs --checkpoint and --data")
    model, scaler, _ = load_checkpoint(args.checkpoint)
    cfg = DatasetManifest.load(args.data).config
    if args.kind == "cdf":
        es = snr_eval_set(cfg, args.snr[0], pair_ratio=0.0, limit=args.limit)
        grid = np.round(np.arange(0, 201) * 0.1, 10)
        nn = error_cdf(model_records(model, scaler, es.features, es.labels, es.snr_db), grid)
        mu = error_cdf(music_records(es.covariances, es.labels, es.snr_db), grid)
        _write_csv(out / "cdf.csv", ["rmse_deg", "model_cdf", "music_cdf"], zip(grid, nn, mu))
        _emit({"csv": str(out / "cdf.csv"), "n": len(es.labels)})
        return
    sets = {s: snr_eval_set(cfg, s, limit=args.limit) for s in args.snr}
    rows = []
    for name, est in (("model", lambda es: model_records(model, scaler, es.features, es.labels, es.snr_db)),
                      ("music", lambda es: music_records(es.covariances, es.labels, es.snr_db))):
        for r in snr_sweep(est, sets):
            rows.append([r["snr_db"], name, r["n"], r["rmse"], r["log10_rmse"], r["mae"]])
    _write_csv(out / "snr_sweep.csv", ["snr_db", "estimator", "n", "rmse", "log10_rmse", "mae"], rows)
    _emit({"csv": str(out / "snr_sweep.csv")})


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="master RNG seed")
    common.add_argument("--config", default=None, help="key-value config file (JSON or YAML)")
    common.add_argument("--out", default=None, help="output directory (default: current directory)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="aoanet", description="ULA angle-of-arrival toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="write synthetic IQ frames")
    p.add_argument("--angle", type=float, action="append", help="source angle in degrees (repeat for two)")
    p.add_argument("--kind", action="append", choices=BASEBAND_KINDS)
    p.add_argument("--snr", type=float, default=None, help="SNR in dB (omit for noiseless)")
    p.add_argument("--noise-power", type=float, default=None, help="noise power for noise-only frames")
    p.add_argument("--length", type=int, default=2**15)
    p.add_argument("--count", type=int, default=1)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("build-dataset", parents=[common], help="generate a feature dataset")
    p.add_argument("--captures", type=int, default=None, help="captures per (scenario, angle)")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_build_dataset)

    p = sub.add_parser("train", parents=[common], help="train a model on a dataset")
    p.add_argument("--data", required=True, help="dataset manifest.json")
    p.add_argument("--model", choices=("fc", "cnn"), default="fc")
    p.add_argument("--epochs", type=int, nargs=2, metavar=("STAGE1", "STAGE2"), default=None)
    p.add_argument("--keep-best", action="store_true",
                   help="keep the weights of the epoch with the lowest validation RMSE")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", parents=[common], help="score a checkpoint on a dataset split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", choices=("train", "val", "test"), default="test")
    p.add_argument("--threshold", type=float, default=0.5)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("infer", parents=[common], help="estimate angles in one frame file")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--frame", required=True)
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--detect-threshold", type=float, default=1e-4)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("music", parents=[common], help="MUSIC estimate and spectrum for one frame")
    p.add_argument("--frame", required=True)
    p.add_argument("--sources", type=int, default=1)
    p.set_defaults(func=cmd_music)

    p = sub.add_parser("bench", parents=[common], help="single-sample inference latency")
    p.add_argument("--model", choices=("fc", "cnn"), default="cnn")
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--runs", type=int, default=1000)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("plot", parents=[common], help="CSV series for plots")
    p.add_argument("kind", choices=("array-factor", "cdf", "snr-sweep"))
    p.add_argument("--steer", type=float, nargs="+", default=[0.0, 60.0])
    p.add_argument("--elements", type=int, default=4)
    p.add_argument("--spacing", type=float, default=0.25)
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--data", default=None, help="manifest whose generation config defines the test captures")
    p.add_argument("--snr", type=float, nargs="+", default=[-10.0, -5.0, 0.0, 5.0])
    p.add_argument("--limit", type=int, default=None, help="cap records per class")
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(levelname)s %(message)s")
    try:
        args.func(args)
    except AoAError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return DataError.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
