"""Command-line interface: ``tdcless <subcommand> ...``.

Every artifact-producing subcommand writes only inside its ``--out``
directory and finishes by writing ``run_manifest.json`` there, recording the
command line, resolved configuration, seeds and SHA-256 digests of inputs
and outputs.  ``tdcless rerun`` replays a manifest and compares digests.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import subprocess
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, OpticalConfig, SensorConfig, apply_overrides, format_config, load_config

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
RUN_MANIFEST = "run_manifest.json"
COMPARE_SCHEMA = 2


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class NumericError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EXIT_USAGE)


def sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


class RunManifest:
    """Provenance of one run: command, config snapshot, seeds, digests."""

    def __init__(self, subcommand, argv, config_text, seeds=None):
        self.subcommand = subcommand
        self.argv = list(argv)
        self.config = config_text
        self.seeds = dict(seeds or {})
        self.inputs = {}
        self.outputs = {}
        self.volatile = []
        self.notes = {}

    def add_input(self, path):
        p = Path(path)
        files = sorted(x for x in p.rglob("*") if x.is_file()) if p.is_dir() else [p]
        for f in files:
            self.inputs[str(f.resolve())] = sha256_file(f)

    def collect_outputs(self, out_dir):
        out = Path(out_dir)
        for f in sorted(x for x in out.rglob("*") if x.is_file()):
            if f.name != RUN_MANIFEST:
                self.outputs[str(f.relative_to(out))] = sha256_file(f)

    def to_dict(self):
        return {"format": "tdcless-run", "version": 1, "tool_version": __version__,
                "subcommand": self.subcommand, "argv": self.argv, "cwd": os.getcwd(),
                "config": self.config, "seeds": self.seeds, "inputs": self.inputs,
                "outputs": self.outputs, "volatile": self.volatile, "notes": self.notes}

    def write(self, out_dir):
        self.collect_outputs(out_dir)
        path = Path(out_dir) / RUN_MANIFEST
        path.write_text(json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n")
        return path


# -- shared options ------------------------------------------------------------------


def _config_flag(name):
    return "--" + name.replace("_", "-")


def _add_config_flags(p):
    g = p.add_argument_group("instrument configuration (overrides --config)")
    g.add_argument("--config", help="flat key = value configuration file")
    for cls in (OpticalConfig, SensorConfig):
        for f in fields(cls):
            g.add_argument(_config_flag(f.name), dest=f"cfg_{f.name}", default=None, metavar="V")


def resolve_config(args):
    optical, sensor = OpticalConfig(), SensorConfig()
    if getattr(args, "config", None):
        try:
            optical, sensor = load_config(args.config)
        except OSError as exc:
            raise ConfigError(f"cannot read config file: {exc}") from exc
    overrides = {k[4:]: v for k, v in vars(args).items() if k.startswith("cfg_") and v is not None}
    if overrides:
        optical, sensor = apply_overrides(optical, sensor, overrides)
    return optical, sensor


def _out_dir(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_dataset(path):
    from .dataset import Dataset
    try:
        return Dataset(path)
    except FileNotFoundError as exc:
        raise DataError(f"dataset not found: {path}") from exc
    except (ValueError, KeyError) as exc:
        raise DataError(f"bad dataset {path}: {exc}") from exc


def _load_checkpoint(path):
    from .snn import load_checkpoint
    try:
        return load_checkpoint(path)
    except FileNotFoundError as exc:
        raise DataError(f"checkpoint not found: {path}") from exc
    except (ValueError, OSError) as exc:
        raise DataError(f"bad checkpoint {path}: {exc}") from exc


def _dataset_name(path):
    return Path(path).resolve().name


# -- subcommands ----------------------------------------------------------------------


def cmd_gen(args, argv):
    from .dataset import DatasetSpec, generate_dataset
    optical, sensor = resolve_config(args)
    spec = DatasetSpec(mode=args.mode, count=args.count, validation=args.validation,
                       per_depth=args.per_depth, reflectivity=args.reflectivity,
                       ambient=args.ambient)
    out = _out_dir(args)
    sections = [s for s in (args.sections or "").split(",") if s]
    generate_dataset(spec, args.seed, out, optical, sensor, workers=args.workers, sections=sections)
    man = RunManifest("gen", argv, format_config(optical, sensor), {"master_seed": args.seed})
    man.write(out)
    print(f"wrote {spec.n_exposures} exposures to {out}")


def _training_arrays(params, ds, indices, combiner, workers=1):
    from .train import batch_inputs
    return batch_inputs(params, [ds[i] for i in indices], combiner, workers)


def cmd_train(args, argv):
    from .plotting import plot_training
    from .snn import NetworkConfig, init_network, save_checkpoint
    from .train import AdamConfig, DivergenceError, TrainConfig, train, write_log
    ds = _load_dataset(args.dataset)
    out = _out_dir(args)
    tr_idx, val_idx = ds.split()
    desk = not args.full and len(tr_idx) > args.train_count
    if desk:
        tr_idx = tr_idx[:args.train_count]
    if args.init:
        params = _load_checkpoint(args.init)
    else:
        params = init_network(NetworkConfig(theta=args.theta, tau_out=args.tau_out,
                                            tau_trigger=args.tau_trigger, seed=args.seed))
    cfg = TrainConfig(adam=AdamConfig(lr=args.lr), batch_size=args.batch_size, epochs=args.epochs,
                      seed=args.seed, combiner=args.combiner, smoothing=args.smoothing)
    tr = _training_arrays(params, ds, tr_idx, args.combiner, args.workers)
    va = _training_arrays(params, ds, val_idx, args.combiner, args.workers) if len(val_idx) else None
    log_path = out / "train_log.csv"
    try:
        res = train(params, tr, va, cfg, log_path=log_path,
                    progress=lambda r: print(
                        f"epoch {r['epoch']}: loss {r['train_loss']:.6f} val MAE {r['val_mae']:.4f} m",
                        flush=True),
                    cycle_window=ds.sensor.cycle_window)
    except DivergenceError as exc:
        raise NumericError(str(exc)) from exc
    write_log(res.log, log_path)
    save_checkpoint(res.params, out / "checkpoint.bin")
    meta = {"training_exposures": int(len(tr_idx)), "validation_exposures": int(len(val_idx)),
            "desk_scale": bool(desk or len(tr_idx) < 10_000), "best_epoch": res.best_epoch,
            "best_val_mae_m": res.best_val_mae, "parameters": res.params.parameter_count(),
            "state_variables": res.params.state_variables, "epochs": args.epochs,
            "batch_size": args.batch_size, "lr": args.lr, "seed": args.seed,
            "combiner": args.combiner, "smoothing": args.smoothing}
    (out / "checkpoint.json").write_text(json.dumps(meta, indent=1, sort_keys=True) + "\n")
    plot_training(res.log, out / "training.png")
    man = RunManifest("train", argv, ds.manifest["config"], {"train_seed": args.seed})
    man.add_input(args.dataset)
    if args.init:
        man.add_input(args.init)
    man.volatile = ["train_log.csv"]  # wall-clock column
    man.notes = meta
    man.write(out)
    print(f"trainable parameters: {meta['parameters']}; best val MAE {res.best_val_mae:.4f} m "
          f"(epoch {res.best_epoch}); {'desk-scale' if meta['desk_scale'] else 'full-scale'} run")


def _checkpoint_scale(path):
    side = Path(path).with_suffix(".json")
    if side.exists():
        return "desk" if json.loads(side.read_text()).get("desk_scale") else "full"
    return "unknown"


def cmd_eval(args, argv):
    from .plotting import plot_scatter
    from .train import evaluate
    out = _out_dir(args)
    sets = [(_dataset_name(p), _load_dataset(p)) for p in args.datasets]
    params = _load_checkpoint(args.checkpoint) if args.checkpoint else None
    rep = evaluate(sets, params, mode=args.mode, combiner=args.combiner, workers=args.workers,
                   limit_per_depth=args.limit_per_depth)
    _check_finite(rep)
    rep.write_csv(out / "eval_report.csv")
    rep.write_scatter(out / "scatter.csv")
    truth = [r[2] for r in rep.scatter]
    plot_scatter(truth, {rep.method: [r[3] for r in rep.scatter]}, out / "scatter.png")
    man = RunManifest("eval", argv, sets[0][1].manifest["config"])
    for p in args.datasets:
        man.add_input(p)
    if args.checkpoint:
        man.add_input(args.checkpoint)
        man.notes["training_scale"] = _checkpoint_scale(args.checkpoint)
    man.write(out)
    print(f"{rep.method}: MAE {rep.mae:.4f} m (std {rep.mae_std:.4f}), "
          f"within 15 cm {100 * rep.within:.1f}%")


def _check_finite(rep):
    bad = [r for r in rep.scatter if not math.isfinite(r[3])]
    if rep.method != "com" and bad:
        raise NumericError(f"{len(bad)} non-finite predictions")


def cmd_compare(args, argv):
    from .energy import PRESETS, estimate_energy, format_energy
    from .plotting import plot_scatter
    from .snn import SpikeCounters
    from .train import evaluate
    out = _out_dir(args)
    sets = [(_dataset_name(p), _load_dataset(p)) for p in args.datasets]
    reports = [evaluate(sets, None, method="com", limit_per_depth=args.limit_per_depth)]
    if args.checkpoint:
        params = _load_checkpoint(args.checkpoint)
        for comb in args.combiners.split(","):
            reports.append(evaluate(sets, params, mode="spiking", combiner=comb,
                                    workers=args.workers, limit_per_depth=args.limit_per_depth))
    else:
        print("no checkpoint given: SNN rows omitted", file=sys.stderr)
    header = ["schema_version", "method", "failed", "mae_m", "mae_std_m", "within_15cm",
              "mean_neural_spikes", "mean_synaptic_spikes"] + [f"energy_{k}" for k in PRESETS]
    lines = [",".join(header)]
    for rep in reports:
        row = [str(COMPARE_SCHEMA), rep.method, str(rep.failed), f"{rep.mae:.6f}", f"{rep.mae_std:.6f}",
               f"{rep.within:.6f}"]
        if math.isnan(rep.mean_neural):
            row += ["", ""] + [""] * len(PRESETS)
        else:
            c = SpikeCounters(int(round(rep.mean_neural)), int(round(rep.mean_synaptic)))
            row += [f"{rep.mean_neural:.1f}", f"{rep.mean_synaptic:.1f}"]
            row += [format_energy(estimate_energy(c, p).total_zj) for p in PRESETS.values()]
        lines.append(",".join(row))
    (out / "compare.csv").write_text("\n".join(lines) + "\n")
    truth = [r[2] for r in reports[0].scatter]
    plot_scatter(truth, {r.method: [x[3] for x in r.scatter] for r in reports}, out / "compare.png")
    for rep in reports:
        rep.write_scatter(out / f"scatter_{rep.method}.csv")
    man = RunManifest("compare", argv, sets[0][1].manifest["config"])
    for p in args.datasets:
        man.add_input(p)
    if args.checkpoint:
        man.add_input(args.checkpoint)
    man.write(out)
    print("\n".join(lines))


def cmd_infer(args, argv):
    from .snn import infer_exposure, to_rate_mode, to_spiking_mode
    from .train import combined_signal
    ds = _load_dataset(args.dataset)
    if not 0 <= args.index < len(ds):
        raise DataError(f"index {args.index} out of range (0..{len(ds) - 1})")
    params = _load_checkpoint(args.checkpoint)
    params = to_spiking_mode(params) if args.mode == "spiking" else to_rate_mode(params)
    rec = ds[args.index]
    dt_ps = int(round(params.dt * 1000))
    sig = combined_signal(rec, args.combiner, dt_ps)
    depth, c = infer_exposure(sig, rec.trigger_times, params, rec.length,
                              rec.sensor.cycle_window, dt_ps)
    if not math.isfinite(depth):
        raise NumericError("non-finite prediction")
    print(f"index={args.index} truth_m={rec.scene.depth:.4f} prediction_m={depth:.4f} "
          f"neural_spikes={c.neural} synaptic_spikes={c.synaptic}")


def cmd_hist(args, argv):
    from .histogram import DegeneratePeakError, NoSignalError, accumulate_histogram, com_depth
    from .plotting import plot_histogram
    ds = _load_dataset(args.dataset)
    if not 0 <= args.index < len(ds):
        raise DataError(f"index {args.index} out of range (0..{len(ds) - 1})")
    out = _out_dir(args)
    rec = ds[args.index]
    hist = accumulate_histogram(rec)
    hist.to_csv(out / "histogram.csv")
    try:
        com = com_depth(hist)
        title = f"truth {rec.scene.depth:.2f} m, CoM {com.depth_estimate:.3f} m"
    except (NoSignalError, DegeneratePeakError) as exc:
        title = f"truth {rec.scene.depth:.2f} m, CoM failed ({exc})"
    plot_histogram(hist, out / "histogram.png", title)
    man = RunManifest("hist", argv, ds.manifest["config"])
    man.add_input(args.dataset)
    man.write(out)
    print(title)


def cmd_energy(args, argv):
    from .energy import (PRESETS, NeuronEnergyProfile, derive_synaptic_energy, energy_rows,
                         parse_energy, write_energy_report)
    from .plotting import plot_energy
    from .snn import SpikeCounters
    out = _out_dir(args)
    n_n, n_s = args.neural, args.synaptic
    if args.from_report:
        n_n, n_s = _mean_counts(args.from_report)
    if n_n is None or n_s is None:
        raise UsageError("give --neural and --synaptic, or --from-report")
    profiles = list(PRESETS.values())
    if args.profile:
        if args.profile not in PRESETS:
            raise UsageError(f"unknown profile {args.profile!r}; choose from {', '.join(PRESETS)}")
        profiles = [PRESETS[args.profile]]
    if args.neural_energy:
        e_n = parse_energy(args.neural_energy)
        e_s = parse_energy(args.synaptic_energy) if args.synaptic_energy \
            else round(derive_synaptic_energy(e_n))
        profiles = [NeuronEnergyProfile("custom", e_n, e_s)]
    rows = energy_rows(SpikeCounters(n_n, n_s), profiles, fps=args.fps)
    write_energy_report(rows, out / "energy.csv")
    plot_energy([(p.name, *_parts(SpikeCounters(n_n, n_s), p)) for p in profiles], out / "energy.png")
    man = RunManifest("energy", argv, "")
    if args.from_report:
        man.add_input(args.from_report)
    man.write(out)
    for r in rows:
        print(", ".join(f"{k}={v}" for k, v in r.items()))


def _parts(counters, profile):
    from .energy import estimate_energy
    e = estimate_energy(counters, profile)
    return e.neural_zj, e.synaptic_zj


def _mean_counts(path):
    import csv
    try:
        with open(path) as fh:
            rows = [r for r in csv.DictReader(fh) if r.get("set") == "all"]
        return int(round(float(rows[0]["mean_neural_spikes"]))), int(round(float(rows[0]["mean_synaptic_spikes"])))
    except (OSError, KeyError, IndexError, ValueError) as exc:
        raise DataError(f"no spike counts in {path}: {exc}") from exc


def cmd_ingest(args, argv):
    import warnings
    from .ingest import FrameFormatError, read_frames, reformat_frames, render_depth_map
    from .plotting import plot_depth_maps
    out = _out_dir(args)
    optical, sensor = resolve_config(args)
    try:
        frames = read_frames(args.frames)
    except FileNotFoundError as exc:
        raise DataError(f"frame file not found: {args.frames}") from exc
    except FrameFormatError as exc:
        raise DataError(str(exc)) from exc
    if frames.n_frames < args.frames_per_exposure:
        raise DataError(f"need at least {args.frames_per_exposure} frames, got {frames.n_frames}")
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        grid = reformat_frames(frames, args.frames_per_exposure, args.group, args.time_scale,
                               sensor, args.order)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    maps = {"CoM": render_depth_map(grid, "com", exposure=args.exposure)}
    if args.checkpoint:
        from .snn import to_spiking_mode
        params = to_spiking_mode(_load_checkpoint(args.checkpoint))
        maps["SNN"] = render_depth_map(grid, "snn", params, exposure=args.exposure)
    for label, m in maps.items():
        m.to_csv(out / f"depth_{label.lower()}.csv")
        m.to_pgm(out / f"depth_{label.lower()}.pgm")
    plot_depth_maps(maps, out / "depth_maps.png")
    man = RunManifest("ingest", argv, format_config(optical, sensor))
    man.add_input(args.frames)
    if args.checkpoint:
        man.add_input(args.checkpoint)
    man.notes = {"timestamps_in": grid.n_in, "timestamps_used": grid.n_out,
                 "dropped": grid.dropped, "exposures": len(grid.exposures)}
    man.write(out)
    print(f"{len(grid.exposures)} exposures of {grid.shape[0]}x{grid.shape[1]} macropixels; "
          f"dropped {grid.dropped} timestamps")


def cmd_rerun(args, argv):
    try:
        man = json.loads(Path(args.manifest).read_text())
        old_argv = man["argv"]
    except (OSError, ValueError, KeyError) as exc:
        raise DataError(f"bad run manifest {args.manifest}: {exc}") from exc
    new_argv = list(old_argv)
    if "--out" not in new_argv:
        raise DataError("manifest command has no --out")
    new_argv[new_argv.index("--out") + 1] = str(Path(args.out).resolve())
    proc = subprocess.run([sys.executable, "-m", "tdcless.cli", *new_argv], cwd=man.get("cwd"),
                          capture_output=True, text=True)
    if proc.returncode != 0:
        print(proc.stderr, file=sys.stderr)
        return proc.returncode
    new = json.loads((Path(args.out) / RUN_MANIFEST).read_text())
    volatile = set(man.get("volatile", []))
    diffs = [k for k in man["outputs"] if k not in volatile and man["outputs"][k] != new["outputs"].get(k)]
    diffs += [k for k in new["outputs"] if k not in man["outputs"]]
    if diffs:
        print("outputs differ: " + ", ".join(sorted(diffs)), file=sys.stderr)
        return EXIT_NUMERIC
    print(f"reproduced {len(man['outputs']) - len(volatile & set(man['outputs']))} artifacts byte-for-byte")
    return EXIT_OK


# -- parser ----------------------------------------------------------------------------


def build_parser():
    p = _Parser(prog="tdcless", description="TDC-less SPAD depth estimation toolkit")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen", help="generate a synthetic dataset")
    g.add_argument("--out", required=True)
    g.add_argument("--mode", choices=("train", "test"), default="train")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--count", type=int, default=12_000)
    g.add_argument("--validation", type=int, default=None)
    g.add_argument("--per-depth", type=int, default=500)
    g.add_argument("--reflectivity", type=float, default=0.4)
    g.add_argument("--ambient", type=float, default=1.0, help="kLux")
    g.add_argument("--sections", default="", help="comma list: level_sst,edge_sst")
    g.add_argument("--workers", type=int, default=1)
    _add_config_flags(g)

    t = sub.add_parser("train", help="train the network in rate mode")
    t.add_argument("dataset")
    t.add_argument("--out", required=True)
    t.add_argument("--epochs", type=int, default=40)
    t.add_argument("--batch-size", type=int, default=32)
    t.add_argument("--lr", type=float, default=3e-3)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--smoothing", type=float, default=0.05)
    t.add_argument("--theta", type=float, default=3870.0, help="LMU window, ns")
    t.add_argument("--tau-out", type=float, default=100.0, help="output synapse, ns")
    t.add_argument("--tau-trigger", type=float, default=43.0, help="trigger synapse, ns")
    t.add_argument("--combiner", default="level_sst", choices=("level_sst", "edge_sst", "adder_async"))
    t.add_argument("--train-count", type=int, default=2000, help="desk-scale training subset")
    t.add_argument("--full", action="store_true", help="use every training exposure")
    t.add_argument("--init", help="start from this checkpoint")
    t.add_argument("--workers", type=int, default=1, help="processes for input preparation")

    e = sub.add_parser("eval", help="evaluate a checkpoint (or CoM) on test datasets")
    e.add_argument("datasets", nargs="+")
    e.add_argument("--out", required=True)
    e.add_argument("--checkpoint")
    e.add_argument("--mode", choices=("spiking", "rate"), default="spiking")
    e.add_argument("--combiner", default="level_sst", choices=("level_sst", "edge_sst", "adder_async"))
    e.add_argument("--limit-per-depth", type=int, default=None)
    e.add_argument("--workers", type=int, default=1)

    c = sub.add_parser("compare", help="CoM vs SNN comparison table (MAE, spikes, energy)")
    c.add_argument("datasets", nargs="+")
    c.add_argument("--out", required=True)
    c.add_argument("--checkpoint")
    c.add_argument("--combiners", default="level_sst")
    c.add_argument("--limit-per-depth", type=int, default=None)
    c.add_argument("--workers", type=int, default=1)

    i = sub.add_parser("infer", help="run the network on one exposure")
    i.add_argument("dataset")
    i.add_argument("--index", type=int, default=0)
    i.add_argument("--checkpoint", required=True)
    i.add_argument("--mode", choices=("spiking", "rate"), default="spiking")
    i.add_argument("--combiner", default="level_sst", choices=("level_sst", "edge_sst", "adder_async"))

    h = sub.add_parser("hist", help="histogram and CoM for one exposure")
    h.add_argument("dataset")
    h.add_argument("--index", type=int, default=0)
    h.add_argument("--out", required=True)

    en = sub.add_parser("energy", help="energy per exposure and power at a frame rate")
    en.add_argument("--out", required=True)
    en.add_argument("--neural", type=int, default=15_000, help="neural spikes per exposure")
    en.add_argument("--synaptic", type=int, default=916_000, help="synaptic spikes per exposure")
    en.add_argument("--from-report", help="take mean spike counts from an eval_report.csv")
    en.add_argument("--fps", type=float, default=30)
    en.add_argument("--profile", help="one preset profile")
    en.add_argument("--neural-energy", help="custom E_n, e.g. '2 fJ'")
    en.add_argument("--synaptic-energy", help="custom E_s, e.g. '200 aJ'")

    ing = sub.add_parser("ingest", help="real timestamp frames -> depth maps")
    ing.add_argument("frames")
    ing.add_argument("--out", required=True)
    ing.add_argument("--checkpoint")
    ing.add_argument("--frames-per-exposure", type=int, default=45)
    ing.add_argument("--group", type=int, default=4)
    ing.add_argument("--time-scale", type=float, default=3.0)
    ing.add_argument("--order", choices=("scale_then_shift", "shift_then_scale"),
                     default="scale_then_shift")
    ing.add_argument("--exposure", type=int, default=0)
    _add_config_flags(ing)

    r = sub.add_parser("rerun", help="replay a run manifest and compare output digests")
    r.add_argument("manifest")
    r.add_argument("--out", required=True)
    return p


COMMANDS = {"gen": cmd_gen, "train": cmd_train, "eval": cmd_eval, "compare": cmd_compare,
            "infer": cmd_infer, "hist": cmd_hist, "energy": cmd_energy, "ingest": cmd_ingest,
            "rerun": cmd_rerun}


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    if args.command == "gen" and args.validation is None:
        args.validation = min(2000, args.count // 6) if args.mode == "train" else 0
    recorded = _absolute_paths(argv)
    try:
        code = COMMANDS[args.command](args, recorded)
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericError, FloatingPointError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return code or EXIT_OK


def _absolute_paths(argv):
    """Record existing paths absolutely so manifests replay from anywhere."""
    return argv[:1] + [str(Path(a).resolve()) if not a.startswith("-") and os.path.exists(a) else a
                       for a in argv[1:]]


if __name__ == "__main__":
    sys.exit(main())
