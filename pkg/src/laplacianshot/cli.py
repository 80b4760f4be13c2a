"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 data or parse error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

import numpy as np

from . import bench
from .core import FeatureMatrix, FewShotTask, InvalidConfig, LaplacianShotError, NumericalFailure
from .io import config as cfgmod
from .io.features import read_features, write_features
from .io.report import format_report, write_report_jsonl

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

log = logging.getLogger("laplacianshot")


class UsageError(Exception):
    pass


class Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _flag(parser, name, **kw):
    dashed = name.replace("_", "-")
    names = [f"--{dashed}"] + ([f"--{name}"] if dashed != name else [])
    parser.add_argument(*names, dest=name, default=None, **kw)


def _inference_flags(p):
    g = p.add_argument_group("inference")
    g.add_argument("--lambda", dest="lambda", type=float, default=None)
    _flag(g, "knn", type=int)
    _flag(g, "distance", choices=("euclidean", "squared_euclidean", "cosine_distance"))
    _flag(g, "normalization", choices=("none", "l2", "cl2"))
    for name in ("rectify_prototypes", "shift_correction", "symmetrize_affinity"):
        _flag(g, name, action=argparse.BooleanOptionalAction)
    _flag(g, "max_iterations", type=int)
    _flag(g, "rel_tolerance", type=float)


def _shots(text):
    parts = [int(s) for s in text.split(",")]
    return parts[0] if len(parts) == 1 else parts


def _episode_flags(p):
    g = p.add_argument_group("episodes")
    _flag(g, "ways", type=int)
    _flag(g, "shots", type=_shots, help="K, or comma-separated per-class counts")
    _flag(g, "queries_per_class", type=int)
    _flag(g, "num_episodes", type=int)
    _flag(g, "seed", type=int)
    _flag(g, "workers", type=int)


def _floats(text):
    return [float(v) for v in text.split(",")]


def _ints(text):
    return [int(v) for v in text.split(",")]


def build_parser() -> argparse.ArgumentParser:
    parser = Parser(prog="laplacianshot", description="Laplacian-regularised few-shot inference")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=Parser)

    p = sub.add_parser("infer", help="label the query file of one task")
    p.add_argument("--config")
    _flag(p, "support")
    _flag(p, "query")
    _flag(p, "output", help="prediction CSV (default: stdout)")
    _inference_flags(p)

    p = sub.add_parser("bench", help="episode benchmark on a labelled pool")
    p.add_argument("--config")
    _flag(p, "pool")
    _flag(p, "output", help="report path (default: stdout)")
    p.add_argument("--jsonl", help="also write one JSON record per episode here")
    p.add_argument("--episodes", action="store_true", help="include the per-episode table")
    p.add_argument("--no-timing", action="store_true", help="omit wall-clock lines")
    p.add_argument("--method", choices=("laplacian", "nearest_prototype"), default="laplacian")
    p.add_argument("--ablation", action="store_true",
                   help="run the four nearest-prototype/Laplacian/rectification variants")
    _inference_flags(p)
    _episode_flags(p)

    p = sub.add_parser("tune", help="grid search lambda and k on validation episodes")
    p.add_argument("--config")
    _flag(p, "pool")
    _flag(p, "output")
    _flag(p, "lambda_grid", type=_floats)
    _flag(p, "knn_grid", type=_ints)
    _inference_flags(p)
    _episode_flags(p)

    p = sub.add_parser("synth", help="write a synthetic Gaussian-blob pool")
    p.add_argument("output")
    p.add_argument("--num-classes", type=int, default=20)
    p.add_argument("--dim", type=int, default=64)
    p.add_argument("--cluster-std", type=float, default=1.0)
    p.add_argument("--center-scale", type=float, default=10.0)
    p.add_argument("--points-per-class", type=int, default=40)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("convert", help="convert between CSV and binary feature files")
    p.add_argument("input")
    p.add_argument("output")
    return parser


OWN_KEYS = {"command", "config", "verbose", "jsonl", "episodes", "no_timing", "method",
            "ablation"}


def _run_config(args) -> cfgmod.RunConfig:
    overrides = {k: v for k, v in vars(args).items() if k not in OWN_KEYS}
    return cfgmod.load_config(getattr(args, "config", None), overrides)


def _emit(text, path):
    if path:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _require(value, name):
    if not value:
        raise UsageError(f"--{name} is required (flag or config key)")
    return value


def cmd_infer(args):
    rc = _run_config(args)
    config = rc.inference()
    support, base_mean = read_features(_require(rc.support, "support"))
    query, q_mean = read_features(_require(rc.query, "query"))
    base_mean = base_mean if base_mean is not None else q_mean

    task = FewShotTask(support, FeatureMatrix(query.data, None, query.ids))
    solution, warnings = bench.infer(task, config, base_mean)
    classes = np.unique(support.labels)
    predicted = classes[solution.labels]
    for w in warnings:
        log.warning(w)

    ids = query.ids if query.ids is not None else range(query.rows)
    lines = ["id,label"] + [f"{i},{int(p)}" for i, p in zip(ids, predicted)]
    _emit("\n".join(lines) + "\n", rc.output)

    trace = solution.trace
    summary = {"iterations": trace.iterations, "converged": trace.converged,
               "monotone": trace.monotone, "objective": trace.objective_values[-1]}
    if query.labels is not None:
        summary["accuracy"] = float(np.mean(predicted == query.labels))
    print(json.dumps(summary), file=sys.stderr)
    return EXIT_OK


def _load_pool(rc):
    return read_features(_require(rc.pool, "pool"))


def cmd_bench(args):
    rc = _run_config(args)
    config, spec = rc.inference(), rc.episodes()
    pool, base_mean = _load_pool(rc)
    timing = not args.no_timing
    if args.ablation:
        reports = bench.ablation(pool, spec, config, base_mean, rc.workers)
        text = "".join(f"== {name}\n" + format_report(r, args.episodes, timing)
                       for name, r in reports.items())
    else:
        report = bench.run_benchmark(pool, spec, config, args.method, base_mean, rc.workers)
        text = format_report(report, args.episodes, timing)
        if args.jsonl:
            write_report_jsonl(report, args.jsonl)
    _emit(text, rc.output)
    return EXIT_OK


def cmd_tune(args):
    rc = _run_config(args)
    config, spec = rc.inference(), rc.episodes()
    pool, base_mean = _load_pool(rc)
    lam, knn, rows = bench.tune(pool, spec, config, rc.lambda_grid, rc.knn_grid, base_mean,
                                rc.workers)
    lines = ["knn lambda accuracy"]
    lines += [f"{r.knn} {r.lam:g} {100 * r.mean_accuracy:.2f} ± {100 * r.ci95:.2f}" for r in rows]
    lines.append(f"best: knn={knn} lambda={lam:g}")
    _emit("\n".join(lines) + "\n", rc.output)
    return EXIT_OK


def cmd_synth(args):
    try:
        spec = bench.SyntheticSpec(args.num_classes, args.dim, args.cluster_std,
                                   args.center_scale, args.points_per_class, args.seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    write_features(bench.generate_synthetic(spec), args.output)
    return EXIT_OK


def cmd_convert(args):
    features, base_mean = read_features(args.input)
    write_features(features, args.output, base_mean)
    return EXIT_OK


COMMANDS = {"infer": cmd_infer, "bench": cmd_bench, "tune": cmd_tune, "synth": cmd_synth,
            "convert": cmd_convert}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (UsageError, InvalidConfig) as exc:
        print(f"laplacianshot: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalFailure as exc:
        print(f"laplacianshot: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except bench.EpisodeFailure as exc:
        print(f"laplacianshot: {exc}", file=sys.stderr)
        return EXIT_NUMERIC if isinstance(exc.cause, NumericalFailure) else EXIT_DATA
    except (LaplacianShotError, OSError, ValueError) as exc:
        print(f"laplacianshot: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
