"""Command-line front end: generate, run, sweep, selfcheck.

Exit codes: 0 ok, 2 configuration error, 3 I/O error, 4 selfcheck failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import itertools
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import classifier as clf
from .baseline_pca import learn_pca_banks
from .data import generate_shapes, load_dataset, split, write_dataset
from .errors import (
    ConfigError,
    ContainerError,
    ImageFormatError,
    MomentsNetError,
)
from .kernels import MomentFamily
from .pipeline import (
    NetConfig,
    auto_threshold,
    build_banks,
    extract_batch,
    feature_dim,
    final_maps,
    moment_descriptor,
    ones_fraction,
    with_threshold,
    write_features_binary,
    write_features_csv,
)
from .selfcheck import format_report, run_selfcheck

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_SELFCHECK = 0, 2, 3, 4

RESULT_COLUMNS = ["family", "stages", "L1", "k1", "h1", "R", "t", "train_acc", "test_acc", "feat_dim", "wall_seconds"]
MAX_SWEEP_AXES = 3
MAX_SWEEP_POINTS = 500
# cap on pooled map values used to pick the automatic threshold
AUTO_T_VALUES = 1 << 23

# option name -> (type, default); generator options default to None so an
# explicit --dataset can be checked against them
OPTIONS = {
    "family": (str, "Zernike"),
    "stages": (int, 1),
    "l1": (int, 9),
    "l2": (int, None),
    "k": (int, 11),
    "h": (int, 8),
    "overlap": (float, 0.5),
    "threshold": (float, 0.1),
    "auto_threshold": (bool, False),
    "c": (float, 1.0),
    "seed": (int, 0),
    "jobs": (int, 1),
    "dataset": (str, None),
    "out": (str, "out"),
    "size": (int, 32),
    "train_fraction": (float, 0.5),
    "epochs": (int, 50),
    "solver": (str, "dcd"),
    "complex_mode": (str, "modulus"),
    "p1": (float, 0.5),
    "p2": (float, 0.5),
    "hahn_a": (float, 0.0),
    "hahn_c": (float, 0.0),
    "s": (float, 2.0),
    "raw_order": (int, None),
    "timed": (bool, False),
    "export_features": (bool, False),
    "classes": (int, None),
    "rotations": (int, None),
    "replicas": (int, None),
    "deform": (float, None),
}
GENERATOR_DEFAULTS = {"classes": 9, "rotations": 12, "replicas": 12, "deform": 0.0}
SWEEP_AXES = ("family", "stages", "l1", "l2", "k", "h", "overlap", "threshold", "c", "s")


def _bool(text):
    value = str(text).strip().lower()
    if value in ("1", "true", "yes", "on"):
        return True
    if value in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


def _convert(key, text):
    kind, _ = OPTIONS[key]
    try:
        return _bool(text) if kind is bool else kind(text)
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {text!r}", key) from exc


def read_config(path):
    """Flat ``key = value`` file; ``#`` starts a comment. Keys use flag names."""
    values = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            key = key.lstrip("-").replace("-", "_")
            if key not in OPTIONS:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}", key)
            values[key] = _convert(key, value)
    return values


@dataclass(frozen=True)
class Experiment:
    net: NetConfig
    dataset: str | None
    generator: dict
    seed: int
    C: float
    out: str
    jobs: int
    auto: bool
    train_fraction: float = 0.5
    epochs: int = 50
    solver: str = "dcd"
    raw_order: int | None = None
    timed: bool = False
    export_features: bool = False


def _family(opts):
    tag = opts["family"]
    return MomentFamily(tag, p1=opts["p1"], p2=opts["p2"], a=opts["hahn_a"], c=opts["hahn_c"], s=opts["s"])


def _thread_cap(jobs):
    cap = os.environ.get("MOMENTSNET_THREADS")
    if cap:
        try:
            jobs = min(jobs, max(1, int(cap)))
        except ValueError as exc:
            raise ConfigError(f"MOMENTSNET_THREADS must be an integer, got {cap!r}", "jobs") from exc
    return max(1, jobs)


def build_experiment(opts):
    """Turn merged option values into a validated ``Experiment``."""
    given = {k for k in GENERATOR_DEFAULTS if opts.get(k) is not None}
    if opts["dataset"] and given:
        raise ConfigError(
            f"give either --dataset or generator options ({', '.join(sorted(given))}), not both", "dataset"
        )
    generator = {k: (GENERATOR_DEFAULTS[k] if opts.get(k) is None else opts[k]) for k in GENERATOR_DEFAULTS}
    size = opts["size"]
    net = NetConfig(
        family=_family(opts),
        stages=opts["stages"],
        l1=opts["l1"],
        l2=opts["l2"],
        k1=opts["k"],
        h1=opts["h"],
        overlap=opts["overlap"],
        threshold=opts["threshold"],
        input_size=(size, size),
        complex_mode=opts["complex_mode"],
    )
    if opts["raw_order"] is None:
        net.validate()
    elif opts["raw_order"] < 0:
        raise ConfigError("raw_order must be non-negative", "raw_order")
    if opts["c"] <= 0:
        raise ConfigError(f"C must be positive, got {opts['c']}", "c")
    if opts["solver"] not in ("dcd", "sgd"):
        raise ConfigError(f"unknown solver {opts['solver']!r}", "solver")
    return Experiment(
        net=net,
        dataset=opts["dataset"],
        generator=generator,
        seed=opts["seed"],
        C=opts["c"],
        out=opts["out"],
        jobs=_thread_cap(opts["jobs"]),
        auto=opts["auto_threshold"],
        train_fraction=opts["train_fraction"],
        epochs=opts["epochs"],
        solver=opts["solver"],
        raw_order=opts["raw_order"],
        timed=opts["timed"],
        export_features=opts["export_features"],
    )


def load_data(exp):
    size = exp.net.input_size
    if exp.dataset:
        return load_dataset(exp.dataset, size=size)
    g = exp.generator
    return generate_shapes(g["classes"], g["rotations"], size[0], exp.seed, g["replicas"], deform=g["deform"])


def _sample_maps(images, config, banks):
    per_image = config.l1 * (config.l2 if config.stages == 2 else 1) * int(np.prod(config.input_size))
    count = max(1, min(len(images), AUTO_T_VALUES // per_image))
    return np.stack([final_maps(im, config, banks) for im in images[:count]])


def _fmt(value):
    if value is None or value == "":
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def evaluate(exp, dataset=None):
    """Train and test one configuration; returns (row, model, timings, extras)."""
    timings = {}
    clock = time.perf_counter()
    data = load_data(exp) if dataset is None else dataset
    train_set, test_set = split(data, exp.train_fraction, exp.seed)
    timings["load"] = time.perf_counter() - clock
    net = exp.net
    extras = {"ones_fraction": ""}

    clock = time.perf_counter()
    if exp.raw_order is not None:
        Xtr = np.stack([moment_descriptor(im, net.family, exp.raw_order, net.complex_mode) for im in train_set.images])
        Xte = np.stack([moment_descriptor(im, net.family, exp.raw_order, net.complex_mode) for im in test_set.images])
        t = ""
    else:
        if net.family.is_pca:
            banks = learn_pca_banks(train_set.images, net)
        else:
            banks = build_banks(net)
        maps = _sample_maps(train_set.images, net, banks)
        if exp.auto:
            net = with_threshold(net, auto_threshold(maps))
        extras["ones_fraction"] = ones_fraction(maps >= net.threshold)
        del maps
        Xtr = extract_batch(train_set.images, net, banks, exp.jobs)
        Xte = extract_batch(test_set.images, net, banks, exp.jobs)
        t = net.threshold
    timings["extract"] = time.perf_counter() - clock

    clock = time.perf_counter()
    model = clf.train(Xtr, train_set.labels, C=exp.C, max_epochs=exp.epochs, seed=exp.seed, solver=exp.solver)
    timings["train"] = time.perf_counter() - clock

    clock = time.perf_counter()
    train_acc = clf.accuracy(model, Xtr, train_set.labels)
    test_acc = clf.accuracy(model, Xte, test_set.labels)
    timings["eval"] = time.perf_counter() - clock

    raw = exp.raw_order is not None
    row = {
        "family": net.family.tag,
        "stages": 0 if raw else net.stages,
        "L1": exp.raw_order if raw else net.l1,
        "k1": "" if raw else net.k1,
        "h1": "" if raw else net.h1,
        "R": "" if raw else float(net.overlap),
        "t": t if t == "" else float(t),
        "train_acc": float(train_acc),
        "test_acc": float(test_acc),
        "feat_dim": int(Xtr.shape[1]) if raw else feature_dim(net),
        "wall_seconds": float(round(sum(timings.values()), 3)) if exp.timed else "",
    }
    extras.update(features=(Xtr, train_set, Xte, test_set))
    return row, model, timings, extras


def _write_csv(path, columns, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_fmt(row.get(c, "")) for c in columns])
    Path(path).write_text(buf.getvalue())


def cmd_run(exp, stream=None):
    stream = stream or sys.stdout
    out = Path(exp.out)
    out.mkdir(parents=True, exist_ok=True)
    row, model, timings, extras = evaluate(exp)
    _write_csv(out / "results.csv", RESULT_COLUMNS, [row])
    clf.save_model(model, out / "model.mnlm")
    _write_csv(out / "timings.csv", ["phase", "seconds"], [{"phase": k, "seconds": round(v, 4)} for k, v in timings.items()])
    if exp.export_features:
        Xtr, train_set, Xte, test_set = extras["features"]
        for name, X, ds in (("train", Xtr, train_set), ("test", Xte, test_set)):
            write_features_binary(out / f"features_{name}.mnfv", X)
            write_features_csv(out / f"features_{name}.csv", X, ds.labels.tolist(), [im.ident for im in ds.images])
    print(
        f"{row['family']} stages={row['stages']} t={_fmt(row['t'])} feat_dim={row['feat_dim']} "
        f"train_acc={row['train_acc']:.4f} test_acc={row['test_acc']:.4f}",
        file=stream,
    )
    return row


def parse_axis(text):
    """``name=v1,v2,...`` or ``name=start:stop:step`` (stop inclusive)."""
    if "=" not in text:
        raise ConfigError(f"sweep axis must look like name=values, got {text!r}", "axis")
    name, values_text = (part.strip() for part in text.split("=", 1))
    name = name.replace("-", "_")
    if name not in SWEEP_AXES:
        raise ConfigError(f"unknown sweep parameter {name!r}; choose from {', '.join(SWEEP_AXES)}", name)
    if ":" in values_text:
        try:
            start, stop, step = (float(v) for v in values_text.split(":"))
        except ValueError as exc:
            raise ConfigError(f"bad range {values_text!r} for {name}", name) from exc
        if step <= 0:
            raise ConfigError(f"range step must be positive for {name}", name)
        count = int(np.floor((stop - start) / step + 1e-9)) + 1
        raw = [repr(round(start + i * step, 10)) for i in range(count)]
    else:
        raw = [v.strip() for v in values_text.split(",") if v.strip()]
    if not raw:
        raise ConfigError(f"sweep axis {name} has no values", name)
    return name, [_convert(name, v) for v in raw]


def _sweep_point(args):
    opts, dataset = args
    exp = build_experiment(opts)
    row, _, _, extras = evaluate(exp, dataset)
    row["ones_fraction"] = extras["ones_fraction"]
    return row


def cmd_sweep(opts, axes, stream=None):
    stream = stream or sys.stdout
    if not axes:
        return [cmd_run(build_experiment(opts), stream)]
    if len(axes) > MAX_SWEEP_AXES:
        raise ConfigError(f"at most {MAX_SWEEP_AXES} sweep axes, got {len(axes)}", "axis")
    names = [name for name, _ in axes]
    if len(set(names)) != len(names):
        raise ConfigError("sweep axes must be distinct", "axis")
    points = list(itertools.product(*(values for _, values in axes)))
    if len(points) > MAX_SWEEP_POINTS:
        raise ConfigError(f"sweep has {len(points)} points; the budget is {MAX_SWEEP_POINTS}", "axis")
    base = build_experiment(opts)
    dataset = load_data(base)
    jobs = base.jobs
    tasks = []
    for values in points:
        point = dict(opts, **dict(zip(names, values)))
        point["jobs"] = 1 if jobs > 1 else point["jobs"]
        build_experiment(point)  # reject invalid points before any work starts
        tasks.append((point, dataset))
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_sweep_point, tasks))
    else:
        rows = [_sweep_point(task) for task in tasks]
    for values, row in zip(points, rows):
        for name, value in zip(names, values):
            row[f"axis_{name}"] = value
    out = Path(base.out)
    out.mkdir(parents=True, exist_ok=True)
    columns = [f"axis_{n}" for n in names] + RESULT_COLUMNS + ["ones_fraction"]
    _write_csv(out / "sweep.csv", columns, rows)
    print(f"{len(rows)} sweep points written to {out / 'sweep.csv'}", file=stream)
    return rows


def cmd_generate(opts, stream=None):
    stream = stream or sys.stdout
    exp = build_experiment(dict(opts, dataset=None))
    data = load_data(exp)
    manifest = write_dataset(data, exp.out)
    for name, count in data.counts.items():
        print(f"{name}: {count}", file=stream)
    print(f"{len(data)} images, manifest {manifest}", file=stream)
    return data


def cmd_selfcheck(perturb=None, stream=None):
    stream = stream or sys.stdout
    results = run_selfcheck(perturb)
    print(format_report(results), file=stream)
    return all(r.passed for r in results)


def _add_options(parser, keys):
    for key in keys:
        kind, _ = OPTIONS[key]
        flag = "--" + key.replace("_", "-")
        if kind is bool:
            parser.add_argument(flag, dest=key, action="store_const", const=True, default=None)
        else:
            parser.add_argument(flag, dest=key, type=str, default=None, metavar=key.upper())
    parser.add_argument("--config", default=None, help="key=value file; flags override its entries")


def build_parser():
    parser = argparse.ArgumentParser(prog="momentsnet", description="Moment-kernel feature networks for shape recognition.")
    sub = parser.add_subparsers(dest="command", required=True)
    run_keys = [k for k in OPTIONS]
    gen_keys = ["seed", "out", "size", "classes", "rotations", "replicas", "deform"]
    p = sub.add_parser("generate", help="write the synthetic shape dataset")
    _add_options(p, gen_keys)
    p = sub.add_parser("run", help="extract features, train and evaluate once")
    _add_options(p, run_keys)
    p = sub.add_parser("sweep", help="evaluate the cross product of parameter axes")
    _add_options(p, run_keys)
    p.add_argument("--axis", action="append", default=[], help="name=v1,v2 or name=start:stop:step")
    p = sub.add_parser("selfcheck", help="numerical checks of the kernel families")
    p.add_argument("--perturb", action="append", default=[], help=argparse.SUPPRESS)
    return parser


def merge_options(args):
    opts = {k: default for k, (_, default) in OPTIONS.items()}
    if getattr(args, "config", None):
        opts.update(read_config(args.config))
    for key in OPTIONS:
        value = getattr(args, key, None)
        if value is not None:
            opts[key] = value if isinstance(value, bool) else _convert(key, value)
    return opts


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.command == "selfcheck":
            perturb = {}
            for item in args.perturb:
                name, _, factor = item.partition("=")
                perturb[name] = float(factor or 1.01)
            return EXIT_OK if cmd_selfcheck(perturb) else EXIT_SELFCHECK
        opts = merge_options(args)
        if args.command == "generate":
            cmd_generate(opts)
        elif args.command == "run":
            cmd_run(build_experiment(opts))
        else:
            cmd_sweep(opts, [parse_axis(a) for a in args.axis])
        return EXIT_OK
    except ConfigError as exc:
        where = f" [{exc.param}]" if exc.param else ""
        print(f"config error{where}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, ImageFormatError, ContainerError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (MomentsNetError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
