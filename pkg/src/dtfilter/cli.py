"""Command-line interface: filtering, edges, training, checks, sweeps, eval, bench.

Every subcommand is deterministic given its flags.  Data goes to stdout or the
requested output file; diagnostics go to stderr.  Exit codes: 0 on success,
1 on a failed check or IO problem, 2 on a usage error.
"""

from __future__ import annotations

import argparse
import hashlib
import os
import sys
import time

import numpy as np

from .edgenet import extract_features, make_toy_dataset, predict_edges, train
from .errors import FilterError, InvalidParameterError
from .filtering import filter_2d, gradient_magnitude_edges
from .gradients import gradient_check_suite
from .grids import DtParams, EdgeMap, ScoreMap
from .io_formats import (
    read_checkpoint,
    read_pgm,
    read_ppm,
    read_tensor,
    write_checkpoint,
    write_pgm,
    write_tensor,
)
from .metrics import iou_report_csv, mean_iou, trimap_csv, trimap_curve


class _UsageError(Exception):
    """Bad flag combination or config content; maps to exit code 2."""


def _resolve_threads(value: int | None) -> int:
    """Explicit flag wins; DT_THREADS is the fallback; default is serial."""
    if value is not None:
        return value
    env = os.environ.get("DT_THREADS")
    if env is None:
        return 1
    try:
        return int(env)
    except ValueError:
        raise _UsageError(f"DT_THREADS must be an integer, got {env!r}") from None


def _params_from_args(args: argparse.Namespace) -> DtParams:
    return DtParams(args.sigma_s, args.sigma_r, args.iters)


def _float_list(text: str, flag: str) -> list[float]:
    items = [part for part in text.split(",") if part.strip()]
    if not items:
        raise _UsageError(f"{flag} must list at least one value, got {text!r}")
    try:
        return [float(part) for part in items]
    except ValueError:
        raise _UsageError(f"{flag} must be comma-separated numbers, got {text!r}") from None


def _int_list(text: str, flag: str) -> list[int]:
    values = _float_list(text, flag)
    out = []
    for v in values:
        if v != int(v):
            raise _UsageError(f"{flag} must be comma-separated integers, got {text!r}")
        out.append(int(v))
    return out


# ---------------------------------------------------------------------------
# subcommands


def cmd_filter(args: argparse.Namespace) -> int:
    if (args.edges is None) == (args.image is None):
        raise _UsageError("exactly one of --edges or --image is required")
    scores = read_tensor(args.scores)
    if args.edges is not None:
        tensor = read_tensor(args.edges)
        if tensor.channels != 1:
            raise _UsageError(f"--edges tensor must have 1 channel, got {tensor.channels}")
        edges = EdgeMap(tensor.data[:, :, 0])
    else:
        edges = gradient_magnitude_edges(read_ppm(args.image))
    params = _params_from_args(args)
    filtered, _ = filter_2d(scores, edges, params, threads=_resolve_threads(args.threads))
    write_tensor(args.out, filtered)
    return 0


def cmd_edges(args: argparse.Namespace) -> int:
    image = read_ppm(args.image)
    if args.model is None:
        edges = gradient_magnitude_edges(image)
    else:
        model = read_checkpoint(args.model)
        edges = predict_edges(extract_features(image, model), model)
    # PGM carries the map normalized by its own peak; a flat zero map stays zero.
    peak = float(np.max(edges.data))
    scaled = edges.data / peak if peak > 0 else np.zeros_like(edges.data)
    write_pgm(args.out, EdgeMap(scaled), mode="edge")
    return 0


_CONFIG_SCHEMA: dict[str, type] = {
    "count": int,
    "size": int,
    "classes": int,
    "blur": float,
    "noise": float,
    "sigma_s": float,
    "sigma_r": float,
    "iterations": int,
    "lr": float,
    "epochs": int,
    "seed": int,
}

_CONFIG_DEFAULTS: dict = {
    "count": 12,
    "size": 64,
    "classes": 4,
    "blur": 1.5,
    "noise": 0.35,
    "sigma_s": 10.0,
    "sigma_r": 0.5,
    "iterations": 3,
    "lr": 1e-2,
    "epochs": 30,
    "seed": 0,
}


def _load_train_config(path) -> dict:
    """Parse a flat key=value file; unknown keys are usage errors."""
    config = dict(_CONFIG_DEFAULTS)
    with open(path, "r", encoding="ascii") as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise _UsageError(f"{path}:{lineno}: expected key=value, got {raw.strip()!r}")
            key, _, value = line.partition("=")
            key, value = key.strip(), value.strip()
            if key not in _CONFIG_SCHEMA:
                valid = ", ".join(sorted(_CONFIG_SCHEMA))
                raise _UsageError(f"{path}:{lineno}: unknown config key {key!r}; valid keys: {valid}")
            try:
                config[key] = _CONFIG_SCHEMA[key](value)
            except ValueError:
                raise _UsageError(
                    f"{path}:{lineno}: key {key!r} expects {_CONFIG_SCHEMA[key].__name__}, got {value!r}"
                ) from None
    return config


def cmd_train(args: argparse.Namespace) -> int:
    config = _load_train_config(args.config)
    # One seed covers dataset and parameter init: same config, same checkpoint.
    samples = make_toy_dataset(
        config["count"],
        config["size"],
        config["classes"],
        seed=config["seed"],
        blur=config["blur"],
        noise=config["noise"],
    )
    params = DtParams(config["sigma_s"], config["sigma_r"], config["iterations"])
    hyper = {"lr": config["lr"], "epochs": config["epochs"], "seed": config["seed"]}
    model, history = train(samples, params, hyper)
    write_checkpoint(args.out, model)
    if args.history is not None:
        with open(args.history, "w", encoding="ascii") as f:
            f.write("epoch,loss\n")
            for epoch, loss in enumerate(history):
                f.write(f"{epoch},{loss:.17g}\n")
    return 0


def cmd_gradcheck(args: argparse.Namespace) -> int:
    if args.cases <= 0:
        raise _UsageError(f"--cases must be positive, got {args.cases}")
    if args.tol < 0:
        raise _UsageError(f"--tol must be >= 0, got {args.tol}")
    worst, info = gradient_check_suite(args.cases, args.seed)
    print(f"max relative error {worst:.6e} over {args.cases} cases (tol {args.tol:g})")
    if worst <= args.tol:
        return 0
    print(f"worst case: {info}", file=sys.stderr)
    return 1


def cmd_sweep(args: argparse.Namespace) -> int:
    scores = read_tensor(args.scores)
    tensor = read_tensor(args.edges)
    if tensor.channels != 1:
        raise _UsageError(f"--edges tensor must have 1 channel, got {tensor.channels}")
    edges = EdgeMap(tensor.data[:, :, 0])
    gt = read_pgm(args.labels, mode="labels")
    sigma_s_grid = _float_list(args.sigma_s_grid, "--sigma-s-grid")
    sigma_r_grid = _float_list(args.sigma_r_grid, "--sigma-r-grid")
    iters_grid = _int_list(args.iters_grid, "--iters-grid")
    classes = scores.channels
    lines = ["sigma_s,sigma_r,iterations,miou"]
    for ss in sigma_s_grid:
        for sr in sigma_r_grid:
            for k in iters_grid:
                filtered, _ = filter_2d(scores, edges, DtParams(ss, sr, k))
                report = mean_iou(np.argmax(filtered.data, axis=2), gt, classes)
                value = "n/a" if report.mean_iou is None else f"{report.mean_iou:.17g}"
                lines.append(f"{ss:.17g},{sr:.17g},{k},{value}")
    text = "\n".join(lines) + "\n"
    if args.out is None:
        sys.stdout.write(text)
    else:
        with open(args.out, "w", encoding="ascii") as f:
            f.write(text)
    return 0


def cmd_bench(args: argparse.Namespace) -> int:
    for flag, value in (("--height", args.height), ("--width", args.width),
                        ("--channels", args.channels), ("--iters", args.iters),
                        ("--repeat", args.repeat)):
        if value <= 0:
            raise _UsageError(f"{flag} must be positive, got {value}")
    threads = _resolve_threads(args.threads)
    rng = np.random.default_rng(0)
    x = ScoreMap(rng.random((args.height, args.width, args.channels)))
    g = EdgeMap(rng.random((args.height, args.width)) * 2.0)
    params = DtParams(100.0, 1.0, args.iters)
    filter_2d(x, g, params, threads=threads)  # warmup
    times = []
    digest = ""
    for _ in range(args.repeat):
        start = time.perf_counter()
        y, _ = filter_2d(x, g, params, threads=threads)
        times.append((time.perf_counter() - start) * 1e3)
        digest = hashlib.sha256(y.data.tobytes()).hexdigest()
    print("height,width,channels,iterations,threads,repeat,mean_ms,min_ms,sha256")
    print(
        f"{args.height},{args.width},{args.channels},{args.iters},{threads},"
        f"{args.repeat},{np.mean(times):.3f},{np.min(times):.3f},{digest}"
    )
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    pred = read_pgm(args.pred, mode="labels")
    gt = read_pgm(args.gt, mode="labels")
    report = mean_iou(pred, gt, args.classes)
    text = iou_report_csv(report)
    if args.trimap_widths is not None:
        widths = _float_list(args.trimap_widths, "--trimap-widths")
        curve = trimap_curve(pred, gt, args.classes, widths)
        text += "\n" + trimap_csv(curve)
    with open(args.out, "w", encoding="ascii") as f:
        f.write(text)
    mean = report.mean_iou
    print(f"mean_iou {'n/a' if mean is None else format(mean, '.17g')}")
    return 0


# ---------------------------------------------------------------------------
# parser


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dtfilter",
        description="Edge-preserving domain-transform filtering toolkit.",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("filter", help="filter a score tensor with a reference edge map")
    p.add_argument("--scores", required=True)
    p.add_argument("--edges", default=None)
    p.add_argument("--image", default=None)
    p.add_argument("--sigma-s", type=float, required=True)
    p.add_argument("--sigma-r", type=float, required=True)
    p.add_argument("--iters", type=int, required=True)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_filter)

    p = sub.add_parser("edges", help="write an edge map from an image")
    p.add_argument("--image", required=True)
    p.add_argument("--model", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_edges)

    p = sub.add_parser("train", help="train the edge predictor on the toy task")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--history", default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("gradcheck", help="compare backward_2d against finite differences")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--cases", type=int, default=100)
    p.add_argument("--tol", type=float, default=1e-5)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("sweep", help="grid-sweep filter parameters against labels")
    p.add_argument("--scores", required=True)
    p.add_argument("--edges", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--sigma-s-grid", required=True)
    p.add_argument("--sigma-r-grid", required=True)
    p.add_argument("--iters-grid", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("bench", help="time filter_2d on random data")
    p.add_argument("--height", type=int, default=513)
    p.add_argument("--width", type=int, default=513)
    p.add_argument("--channels", type=int, default=21)
    p.add_argument("--iters", type=int, default=3)
    p.add_argument("--repeat", type=int, default=3)
    p.add_argument("--threads", type=int, default=None)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("eval", help="score a predicted label map against ground truth")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--classes", type=int, required=True)
    p.add_argument("--trimap-widths", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except InvalidParameterError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except (FilterError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
