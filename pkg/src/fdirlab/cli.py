"""Command-line front end: generate, train, evaluate, tune, simulate, report.

Every subcommand reads an optional JSON config, writes into ``--output-dir``
and leaves a ``manifest.json`` there that records the arguments, the
effective configuration and a SHA-256 of each output file.

Exit codes: 0 success, 3 configuration error, 4 data or format error,
5 requirement not met.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import logging
import platform
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import metrics as mt
from . import reports as rp
from . import simgen as sg
from . import tuner as tn
from .errors import ConfigError, DataError, FdirlabError, FormatError, RequirementError
from .fdir import FdirConfig, run_chain_dataset, write_reaction_log
from .nnet import ModelConfig, TrainConfig, fit_detector, load_model, predict_track, save_model

log = logging.getLogger("fdirlab")

EXIT_OK = 0
EXIT_CONFIG = 3
EXIT_DATA = 4
EXIT_REQUIREMENT = 5


def _load_config(path):
    if path is None:
        return {}
    try:
        cfg = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError("config", f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError("config", f"{path} is not valid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config", "top level must be an object")
    return cfg


def _build(cls, section, name):
    try:
        return cls(**section)
    except TypeError as exc:
        raise ConfigError(name, str(exc)) from exc


def _sha256(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(out_dir, command, args, config, outputs):
    manifest = {
        "command": command,
        "fdirlab_version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "arguments": {k: (str(v) if isinstance(v, Path) else v)
                      for k, v in vars(args).items() if k != "func"},
        "config": config,
        "outputs": {Path(p).name: _sha256(p) for p in outputs if Path(p).is_file()},
    }
    path = Path(out_dir) / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str))
    return path


def _fdir_config(cfg, persistency):
    fdir = _build(FdirConfig, cfg.get("fdir", {}), "fdir")
    if persistency is not None:
        fdir = dataclasses.replace(fdir, persistency=persistency)
    return fdir


# --------------------------------------------------------------------------
# subcommands


def cmd_generate(args, cfg):
    tc = dict(cfg.get("trajectory", {}))
    ic = dict(cfg.get("injection", {}))
    if args.seed is not None:
        tc["rng_seed"], ic["rng_seed"] = args.seed, args.seed + 1
    traj_cfg = _build(sg.TrajectoryConfig, tc, "trajectory")
    inj_cfg = _build(sg.InjectionConfig, ic, "injection")
    ds = sg.generate_dataset(traj_cfg, inj_cfg)
    out = args.output_dir
    outputs = []
    if args.val_fraction:
        n_val = int(round(len(ds) * args.val_fraction))
        if not 0 < n_val < len(ds):
            raise ConfigError("val_fraction", f"gives {n_val} of {len(ds)} trajectories")
        outputs.append(sg.export_dataset(ds.subset(range(len(ds) - n_val)), out / "train.fdirds"))
        outputs.append(sg.export_dataset(ds.subset(range(len(ds) - n_val, len(ds))),
                                         out / "val.fdirds"))
    else:
        outputs.append(sg.export_dataset(ds, out / "dataset.fdirds"))
    log.info("generated %d trajectories with %d faults", len(ds), len(ds.fault_records))
    return outputs, {"trajectory": traj_cfg.to_dict(), "injection": inj_cfg.to_dict()}


def cmd_train(args, cfg):
    model_cfg = _build(ModelConfig, cfg.get("model", {}), "model")
    tcfg = dict(cfg.get("training", {}))
    if args.seed is not None:
        tcfg["rng_seed"] = args.seed
    train_cfg = _build(TrainConfig, tcfg, "training")
    sc = cfg.get("scaler", {})
    q_lo, q_hi = float(sc.get("q_lo", 33.0)), float(sc.get("q_hi", 90.0))
    stride = int(cfg.get("train_stride", 1))
    train_ds = sg.load_dataset(args.train)
    val_ds = sg.load_dataset(args.val) if args.val else None
    params, history = fit_detector(train_ds, val_ds, model_cfg, train_cfg, q_lo, q_hi, stride,
                                   cfg.get("val_stride"))
    path = save_model(params, args.output_dir / "model.fdirmodel")
    log.info("trained %d epochs, best epoch %d", history["epochs_run"], history["best_epoch"])
    return [path], {"model": model_cfg.to_dict(), "training": train_cfg.to_dict(),
                    "scaler": {"q_lo": q_lo, "q_hi": q_hi}, "train_stride": stride}


def _model_and_fdir(args, cfg):
    if args.bundle:
        bundle = tn.load_bundle(args.bundle)
        fdir = bundle.fdir_config
        if args.persistency is not None:
            fdir = dataclasses.replace(fdir, persistency=args.persistency)
        return bundle.model, fdir
    if not args.model:
        raise ConfigError("model", "need --model or --bundle")
    return load_model(args.model), _fdir_config(cfg, args.persistency)


def cmd_evaluate(args, cfg):
    model, fdir = _model_and_fdir(args, cfg)
    objective = _build(mt.ObjectiveConfig, cfg.get("objective", {}), "objective")
    ds = sg.load_dataset(args.dataset)
    pred = predict_track(model, ds)
    report = mt.evaluate(ds.labels, pred, fdir.persistency, fdir, objective)
    hists = rp.eval_histograms(report)
    out = args.output_dir
    outputs = [rp.write_report_json(report, out / "evaluation.json", hists),
               rp.write_summary_csv(report, out / "summary.csv")]
    print(f"persistency {report.persistency} objective {report.objective:.4f}")
    for row in rp.summary_rows(report):
        print(f"  {row['sensor']:<13} precision {row['reaction_precision']:.4f} "
              f"recall {row['reaction_recall']:.4f} "
              f"FP% {row['false_positives_percentage']:.4f} "
              f"missed {row['missed_faults_score']:.4f}")
    return outputs, {"fdir": fdir.to_dict(), "objective": dataclasses.asdict(objective)}


def cmd_simulate(args, cfg):
    model, fdir = _model_and_fdir(args, cfg)
    ds = sg.load_dataset(args.dataset)
    reactions = run_chain_dataset(predict_track(model, ds), fdir)
    path = write_reaction_log(reactions, args.output_dir / "reactions.csv")
    print(f"{len(reactions)} reactions at persistency {fdir.persistency}")
    return [path], {"fdir": fdir.to_dict()}


def cmd_tune(args, cfg):
    search = dict(cfg.get("search", {}))
    if args.seed is not None:
        search["rng_seed"] = args.seed
    space = _build(tn.SearchSpace, search, "search")
    model_cfg = _build(ModelConfig, cfg.get("model", {}), "model")
    train_cfg = _build(TrainConfig, cfg.get("training", {}), "training")
    fdir = _fdir_config(cfg, None)
    objective = _build(mt.ObjectiveConfig, cfg.get("objective", {}), "objective")
    reqs = _build(tn.Requirements, cfg.get("requirements", {}), "requirements")
    thresholds = _build(tn.DetectionThresholds, cfg.get("double_check", {}), "double_check")
    half_width = int(cfg.get("sweep_half_width", 10))

    train_ds, val_ds = sg.load_dataset(args.train), sg.load_dataset(args.val)
    results = tn.grid_search(space, train_ds, val_ds, model_cfg, train_cfg, fdir, objective,
                             int(cfg.get("train_stride", 1)), cfg.get("val_stride"))
    out = args.output_dir
    outputs = [tn.write_ledger(results, space.persistency_grid, out / "ledger.csv")]
    config = {"search": space.to_dict(), "requirements": dataclasses.asdict(reqs)}
    best = results[0]
    if best.failed:
        raise DataError(f"every candidate failed; first error: {best.error}")
    centre = args.persistency if args.persistency is not None else best.persistency
    sweep = tn.persistency_sweep(best, tn.sweep_interval(centre, half_width), reqs, fdir,
                                 objective)
    outputs.append(rp.write_sweep_csv(sweep, out / "sweep.csv"))
    if not sweep.compliant:
        write_manifest(out, "tune", args, config, outputs)
        raise RequirementError("no compliant persistency in "
                               f"[{min(sweep.curve)}, {max(sweep.curve)}]")
    check = tn.detection_double_check(best, thresholds, sweep.chosen)
    for reason in check.reasons:
        print("double-check:", reason)
    if not check.passed:
        write_manifest(out, "tune", args, config, outputs)
        raise RequirementError("detection double-check failed")
    bundle = tn.freeze(best, sweep.chosen, check, out / "bundle", fdir)
    outputs += sorted(bundle.iterdir())
    print(f"candidate {best.candidate_id} frozen with persistency {sweep.chosen}")
    return outputs, config


def cmd_report(args, cfg):
    doc = json.loads(Path(args.input).read_text())
    if "detection" not in doc:
        raise FormatError(f"{args.input} is not an evaluation report")
    p = int(doc["persistency"])
    width = int(cfg.get("bin_width", 5))
    outputs = []
    lines = []
    for sensor, det in doc["detection"].items():
        for key, title in (("prediction_delays", "prediction delay"),
                           ("false_positive_durations", "false-positive duration")):
            h = rp.histogram(det[key], f"{sensor} {title}", width, p)
            lines.append(h.render())
            path = args.output_dir / f"{sensor}_{key}.csv"
            with open(path, "w") as fh:
                fh.write("lower,upper,count\n")
                for lo, hi, c in zip(h.edges[:-1], h.edges[1:], h.counts):
                    fh.write(f"{lo:g},{hi:g},{c}\n")
            outputs.append(path)
    text = args.output_dir / "histograms.txt"
    text.write_text("\n\n".join(lines) + "\n")
    print(text.read_text(), end="")
    return outputs + [text], {"bin_width": width}


# --------------------------------------------------------------------------


def build_parser():
    ap = argparse.ArgumentParser(prog="fdirlab", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def add(name, func, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", type=Path, help="JSON configuration file")
        p.add_argument("--output-dir", type=Path, required=True)
        p.add_argument("--seed", type=int)
        p.set_defaults(func=func)
        return p

    p = add("generate", cmd_generate, "simulate trajectories and inject faults")
    p.add_argument("--val-fraction", type=float, default=0.0)

    p = add("train", cmd_train, "fit the scaler and train the detector")
    p.add_argument("--train", type=Path, required=True)
    p.add_argument("--val", type=Path)

    for name, func, help_ in (("evaluate", cmd_evaluate, "detection and system metrics"),
                              ("simulate", cmd_simulate, "replay predictions through FDIR")):
        p = add(name, func, help_)
        p.add_argument("--dataset", type=Path, required=True)
        p.add_argument("--model", type=Path)
        p.add_argument("--bundle", type=Path)
        p.add_argument("--persistency", type=int)

    p = add("tune", cmd_tune, "grid search, persistency sweep, double-check and freeze")
    p.add_argument("--train", type=Path, required=True)
    p.add_argument("--val", type=Path, required=True)
    p.add_argument("--persistency", type=int, help="centre of the persistency sweep")

    p = add("report", cmd_report, "histograms from an evaluation report")
    p.add_argument("--input", type=Path, required=True)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _load_config(args.config)
        args.output_dir.mkdir(parents=True, exist_ok=True)
        outputs, effective = args.func(args, cfg)
        write_manifest(args.output_dir, args.command, args, effective, outputs)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except RequirementError as exc:
        print(f"requirement not met: {exc}", file=sys.stderr)
        return EXIT_REQUIREMENT
    except (DataError, FormatError, FdirlabError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
