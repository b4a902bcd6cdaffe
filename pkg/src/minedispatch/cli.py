"""Command-line entry point: simulate, train, evaluate, sweep (and rerun).

Exit codes: 0 success, 2 configuration or usage error, 3 runtime failure.
Outputs go to ``--out`` or, if absent, ``$MINEDISPATCH_OUT/<command>``
(default root ``runs``). Every output directory holds a ``manifest.json``
from which ``minedispatch rerun <dir>`` repeats the run exactly.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import statistics
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import __version__
from .config import load_config, read_text
from .engine import ConfigError, RandomStreams
from .kernels import BACKEND
from .metrics import curve_csv, to_csv, to_json
from .policies import check_model_dims, make_policy, QPolicy
from .runner import format_trace, run_episode

log = logging.getLogger("minedispatch")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3
OUT_ENV = "MINEDISPATCH_OUT"
MANIFEST_VERSION = 1


class UsageError(ValueError):
    pass


# -- argument helpers -------------------------------------------------------

def parse_seeds(text: str) -> list:
    seeds = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if ".." in part:
            lo, hi = part.split("..", 1)
            seeds.extend(range(int(lo), int(hi) + 1))
        else:
            seeds.append(int(part))
    if not seeds:
        raise UsageError(f"no seeds in {text!r}")
    return seeds


def parse_trucks(text):
    """``n`` or ``a..b`` (inclusive) or a comma list; None keeps the config's fleet."""
    if text is None:
        return [None]
    try:
        return parse_seeds(text)
    except ValueError as exc:
        raise UsageError(f"bad --trucks value {text!r}") from exc


def _split(text: str) -> list:
    return [p.strip() for p in text.split(",") if p.strip()]


def out_dir(args, command: str) -> str:
    path = args.out or os.path.join(os.environ.get(OUT_ENV, "runs"), command)
    os.makedirs(path, exist_ok=True)
    return path


def resolve_config(spec: str, trucks=None, shift=None, seed=0):
    cfg = load_config(spec)
    if shift is not None:
        cfg = cfg.with_shift(shift)
    if trucks is not None:
        cfg = cfg.with_truck_count(trucks, seed)
    return cfg


def _write(path: str, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def write_manifest(directory: str, command: str, argv: list, extra: dict) -> None:
    manifest = {
        "manifest_version": MANIFEST_VERSION,
        "command": command,
        "argv": argv,
        "package_version": __version__,
        "kernel_backend": BACKEND,
        "numpy_version": np.__version__,
        "python_version": sys.version.split()[0],
    }
    manifest.update(extra)
    _write(os.path.join(directory, "manifest.json"), json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _copy_config(directory: str, spec: str, name: str, prefix: str = "") -> str:
    text, _ = read_text(spec, prefix)
    _write(os.path.join(directory, name), text)
    return name


def _median(values):
    values = [v for v in values if v is not None]
    return statistics.median(values) if values else None


def _mean(values):
    values = [v for v in values if v is not None]
    return statistics.fmean(values) if values else None


# -- commands ---------------------------------------------------------------

def cmd_simulate(args) -> int:
    seeds = parse_seeds(args.seed)
    out = out_dir(args, "simulate")
    cfg_name = _copy_config(out, args.config, "config.ini")
    metrics = []
    for seed in seeds:
        streams = RandomStreams(seed)
        for ep in range(args.episodes):
            ep_seed = seed if ep == 0 else streams.derive_seed(5, ep)
            cfg = resolve_config(args.config, args.trucks, args.shift_minutes, seed)
            policy = make_policy(args.policy, cfg)
            mine, m = run_episode(cfg, policy, ep_seed, keep_trace=args.trace, episode=ep, policy_name=args.policy)
            m.seed = ep_seed
            metrics.append(m)
            if args.trace:
                _write(os.path.join(out, f"trace_seed{ep_seed}.tsv"), format_trace(mine))
    _write(os.path.join(out, "metrics.csv"), to_csv(metrics))
    _write(os.path.join(out, "metrics.json"), to_json(metrics))
    argv = ["simulate", "--config", cfg_name, "--policy", args.policy, "--seed", args.seed,
            "--episodes", str(args.episodes)]
    argv += _optional(args)
    if args.trace:
        argv.append("--trace")
    write_manifest(out, "simulate", argv, {"seeds": seeds, "policy": args.policy})
    for m in metrics:
        print(f"seed {m.seed}: {m.production_tons:.0f} t, cycle {_fmt(m.mean_cycle_min)} min, "
              f"MF {_fmt(m.matching_factor)} ({m.label})")
    return EXIT_OK


def _fmt(x, digits=3):
    return "n/a" if x is None else f"{x:.{digits}f}"


def _optional(args) -> list:
    extra = []
    if getattr(args, "trucks", None) is not None:
        extra += ["--trucks", str(args.trucks)]
    if getattr(args, "shift_minutes", None) is not None:
        extra += ["--shift-minutes", repr(args.shift_minutes)]
    return extra


def cmd_train(args) -> int:
    from .rl.network import TrainingDiverged
    from .rl.train import Trainer, parse_train_config

    seed = parse_seeds(args.seed)[0]
    out = out_dir(args, "train")
    ckpt = os.path.join(out, "checkpoint")
    cfg = resolve_config(args.config, args.trucks, args.shift_minutes, seed)
    text, source = read_text(args.train_config, "train_")
    overrides = {"max_iterations": args.episodes}
    if args.no_tailoring:
        overrides["tailoring"] = False
    tcfg = parse_train_config(text, source, **overrides)

    if args.resume:
        trainer = Trainer.resume(args.resume, cfg, tcfg)
    else:
        trainer = Trainer(cfg, tcfg, seed)
    cfg_name = _copy_config(out, args.config, "config.ini")
    _write(os.path.join(out, "train.ini"), tcfg.to_ini())

    def progress(row):
        if args.verbose or row["episode"] % max(1, tcfg.max_iterations // 10) == 0:
            print(f"episode {row['episode']}: {row['production_tons']:.0f} t, eps {row['epsilon']:.3f}, "
                  f"loss {_fmt(row['loss'], 6)}, memory {row['memory']}", flush=True)

    try:
        trainer.train(checkpoint_dir=ckpt, progress=progress)
    except TrainingDiverged as exc:
        print(f"error: training diverged: {exc}; last checkpoint kept in {ckpt}", file=sys.stderr)
        return EXIT_RUNTIME
    trainer.net.save(os.path.join(out, "model.emdq"))
    _write(os.path.join(out, "curve.csv"), curve_csv(trainer.curve))
    argv = ["train", "--config", cfg_name, "--train-config", "train.ini", "--seed", str(seed),
            "--episodes", str(tcfg.max_iterations)]
    argv += _optional(args)
    write_manifest(out, "train", argv, {"seed": seed, "episodes": tcfg.max_iterations,
                                        "tailoring": tcfg.tailoring, "resumed_from": args.resume})
    print(f"model written to {os.path.join(out, 'model.emdq')}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    from .rl.network import QNetwork

    seeds = parse_seeds(args.seed)
    truck_counts = parse_trucks(args.trucks)
    out = out_dir(args, "evaluate")
    net = QNetwork.load(args.model)
    base = load_config(args.config)
    check_model_dims(net, base.n_shovels, base.n_dumps)
    policy = QPolicy(net, 0.0, name="dqn")
    metrics = []
    for trucks in truck_counts:
        for seed in seeds:
            cfg = resolve_config(args.config, trucks, args.shift_minutes, seed)
            _, m = run_episode(cfg, policy, seed, policy_name="dqn")
            metrics.append(m)
    _write(os.path.join(out, "metrics.csv"), to_csv(metrics))
    _write(os.path.join(out, "summary.csv"), _summary_csv(metrics, key=lambda m: m.trucks, key_name="trucks"))
    cfg_name = _copy_config(out, args.config, "config.ini")
    model_copy = os.path.join(out, "model.emdq")
    if os.path.abspath(args.model) != os.path.abspath(model_copy):
        net_bytes = open(args.model, "rb").read()
        with open(model_copy, "wb") as fh:
            fh.write(net_bytes)
    argv = ["evaluate", "--model", "model.emdq", "--config", cfg_name, "--seed", args.seed]
    if args.trucks is not None:
        argv += ["--trucks", args.trucks]
    if args.shift_minutes is not None:
        argv += ["--shift-minutes", repr(args.shift_minutes)]
    write_manifest(out, "evaluate", argv, {"seeds": seeds, "trucks": args.trucks})
    print(open(os.path.join(out, "summary.csv"), encoding="utf-8").read(), end="")
    return EXIT_OK


SUMMARY_COLUMNS = ["runs", "median_production_tons", "mean_production_tons", "median_production_rate_tph",
                   "median_cycle_min", "mean_cycle_min", "median_matching_factor"]


def _summary_csv(metrics, key, key_name) -> str:
    groups = {}
    for m in metrics:
        groups.setdefault(key(m), []).append(m)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([key_name] + SUMMARY_COLUMNS)
    for k, ms in groups.items():
        w.writerow([k, len(ms),
                    repr(_median([m.production_tons for m in ms])),
                    repr(_mean([m.production_tons for m in ms])),
                    repr(_median([m.production_rate_tph for m in ms])),
                    repr(_median([m.mean_cycle_min for m in ms])),
                    repr(_mean([m.mean_cycle_min for m in ms])),
                    repr(_median([m.matching_factor for m in ms]))])
    return buf.getvalue()


def _sweep_cell(cell):
    config_spec, policy_spec, seed, trucks, shift = cell
    try:
        cfg = resolve_config(config_spec, trucks, shift, seed)
        policy = make_policy(policy_spec, cfg)
        _, m = run_episode(cfg, policy, seed, policy_name=policy_spec)
        return m, None
    except Exception as exc:  # recorded per cell; the sweep carries on
        return None, f"{type(exc).__name__}: {exc}"


def run_sweep(configs, policies, seeds, trucks_list=(None,), shift=None, jobs=1, cell_fn=_sweep_cell):
    cells = [(c, p, s, t, shift) for c in configs for p in policies for t in trucks_list for s in seeds]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(cell_fn, cells))
    else:
        results = [cell_fn(cell) for cell in cells]
    rows, errors = [], []
    for cell, (m, err) in zip(cells, results):
        if err is None:
            rows.append((cell, m))
        else:
            errors.append({"config": cell[0], "policy": cell[1], "seed": cell[2], "trucks": cell[3], "error": err})
    return rows, errors


def config_labels(configs) -> list:
    """Short unique names for config specs; a copied ``<label>.ini`` maps back to the same label."""
    labels = []
    for c in configs:
        label = os.path.splitext(os.path.basename(c))[0] or "config"
        while label in labels:
            label += "_"
        labels.append(label)
    return labels


def improvement_column(rows, baseline: str) -> list:
    """Relative production-rate gain over ``baseline`` at the same (config, seed, trucks)."""
    base = {(c[0], c[2], c[3]): m.production_rate_tph for c, m in rows if c[1] == baseline}
    out = []
    for c, m in rows:
        ref = base.get((c[0], c[2], c[3]))
        out.append(None if not ref else (m.production_rate_tph - ref) / ref)
    return out


def extra_cycles_column(rows, baseline: str, capacity: dict) -> list:
    """Tons gained over ``baseline`` expressed as loads of the largest truck of each config."""
    base = {(c[0], c[2], c[3]): m.production_tons for c, m in rows if c[1] == baseline}
    out = []
    for c, m in rows:
        ref = base.get((c[0], c[2], c[3]))
        out.append(None if ref is None else (m.production_tons - ref) / capacity[c[0]])
    return out


def cmd_sweep(args) -> int:
    configs = _split(args.config)
    policies = _split(args.policy)
    seeds = parse_seeds(args.seed)
    trucks = parse_trucks(args.trucks)
    for p in policies:
        if not (p in ("random", "sq", "ssq") or (p.startswith("dqn:") and len(p) > 4)):
            raise UsageError(f"unknown policy {p!r}")
    largest = [max(f.fleet.capacity for f in load_config(c).fleets) for c in configs]
    out = out_dir(args, "sweep")
    labels = config_labels(configs)
    copied = [_copy_config(out, c, f"{label}.ini") for c, label in zip(configs, labels)]
    rows, errors = run_sweep(configs, policies, seeds, trucks, args.shift_minutes, args.jobs)
    label_of = dict(zip(configs, labels))
    rows = [((label_of[c[0]],) + c[1:], m) for c, m in rows]
    for e in errors:
        e["config"] = label_of[e["config"]]
    baseline = args.baseline
    improvement = improvement_column(rows, baseline)
    extra = extra_cycles_column(rows, baseline, dict(zip(labels, largest)))
    metrics = [m for _, m in rows]
    cfg_col = [c[0] for c, _ in rows]
    if metrics:
        _write(os.path.join(out, "sweep.csv"),
               to_csv(metrics, [("config", cfg_col), (f"improvement_vs_{baseline}", improvement),
                                (f"extra_cycles_vs_{baseline}", extra)]))
        groups = {}
        for (c, m), imp in zip(rows, improvement):
            groups.setdefault((c[0], c[1]), []).append((m, imp))
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["config", "policy"] + SUMMARY_COLUMNS + [f"median_improvement_vs_{baseline}"])
        for (c, p), items in groups.items():
            ms = [m for m, _ in items]
            w.writerow([c, p, len(ms),
                        repr(_median([m.production_tons for m in ms])),
                        repr(_mean([m.production_tons for m in ms])),
                        repr(_median([m.production_rate_tph for m in ms])),
                        repr(_median([m.mean_cycle_min for m in ms])),
                        repr(_mean([m.mean_cycle_min for m in ms])),
                        repr(_median([m.matching_factor for m in ms])),
                        repr(_median([i for _, i in items]))])
        _write(os.path.join(out, "summary.csv"), buf.getvalue())
    _write(os.path.join(out, "errors.json"), json.dumps(errors, indent=2, sort_keys=True) + "\n")
    argv = ["sweep", "--config", ",".join(copied), "--policy", args.policy, "--seed", args.seed,
            "--baseline", baseline]
    argv += _optional(args)
    write_manifest(out, "sweep", argv, {"cells": len(rows) + len(errors), "errors": len(errors)})
    print(f"{len(rows)} runs, {len(errors)} failed; results in {out}")
    return EXIT_OK


def cmd_rerun(args) -> int:
    src = args.directory
    with open(os.path.join(src, "manifest.json"), encoding="utf-8") as fh:
        manifest = json.load(fh)
    argv = list(manifest["argv"])
    # file arguments in the manifest are relative to the run directory
    for flag in ("--config", "--train-config", "--model"):
        if flag in argv:
            i = argv.index(flag) + 1
            argv[i] = ",".join(
                os.path.join(src, p) if os.path.exists(os.path.join(src, p)) else p for p in argv[i].split(",")
            )
    argv += ["--out", args.out]
    return main(argv)


# -- parser -----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="minedispatch", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__} ({BACKEND} kernels)")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, policy=True):
        p.add_argument("--config", default="desk", help="config file or preset name (desk, full)")
        if policy:
            p.add_argument("--policy", default="ssq", help="random, sq, ssq or dqn:<model-path>")
        p.add_argument("--seed", default="1", help="seed, list (1,2,3) or range (1..5)")
        p.add_argument("--trucks", default=None, help="override the truck count")
        p.add_argument("--shift-minutes", type=float, default=None, help="time-limited shift of this length")
        p.add_argument("--out", default=None, help=f"output directory (default ${OUT_ENV}/<command>)")

    p = sub.add_parser("simulate", help="run episodes with a fixed policy")
    common(p)
    p.add_argument("--episodes", type=int, default=1)
    p.add_argument("--trace", action="store_true", help="also write the event log")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("train", help="train a shared DQN dispatcher (memory tailoring on by default)")
    common(p, policy=False)
    p.add_argument("--train-config", default="desk", help="training config file or preset name")
    p.add_argument("--episodes", type=int, default=None, help="total training episodes")
    p.add_argument("--no-tailoring", action="store_true", help="keep cut-in transitions (experience sharing only)")
    p.add_argument("--resume", default=None, help="checkpoint directory to continue from")
    p.add_argument("--verbose", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="greedy evaluation of a trained model")
    common(p, policy=False)
    p.set_defaults(seed="1..5")
    p.add_argument("--model", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sweep", help="configs x policies x seeds comparison")
    common(p)
    p.set_defaults(policy="sq,ssq", seed="1..5")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--baseline", default="ssq", help="policy the improvement column is relative to")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("rerun", help="repeat a run from its manifest")
    p.add_argument("directory")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_rerun)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "trucks", None) is not None and args.command in ("simulate", "train"):
        try:
            args.trucks = int(args.trucks)
        except ValueError:
            parser.error(f"--trucks must be a single integer for {args.command}")
    try:
        return args.func(args)
    except (ConfigError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
