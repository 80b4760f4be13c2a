"""Benchmark report emission.

The text report is line oriented. Every line that depends on wall-clock time
starts with ``time``; :func:`strip_timing` removes exactly those lines, which is
what makes two runs with the same seed comparable.

The JSON-lines variant holds one object per episode with keys in this order:
``index, seed, accuracy, per_class_accuracy, iterations, converged, monotone,
seconds, classes, warnings`` (plus ``predictions`` when they were kept).
"""

from __future__ import annotations

import json
from dataclasses import asdict
from pathlib import Path

from ..bench import EpisodeReport

EPISODE_FIELDS = ("index", "seed", "accuracy", "per_class_accuracy", "iterations",
                  "converged", "monotone", "seconds", "classes", "warnings")


def pct(acc: float, ci: float) -> str:
    return f"{100 * acc:.2f} ± {100 * ci:.2f}"


def format_report(report: EpisodeReport, episodes: bool = False, timing: bool = True) -> str:
    cfg = asdict(report.config)
    cfg["lambda"] = cfg.pop("lam")
    spec = report.spec
    lines = [
        "laplacianshot episode report",
        f"method: {report.method}",
        f"seed: {spec.seed}",
        "config:",
        *(f"  {k}: {cfg[k]}" for k in sorted(cfg)),
        "episodes:",
        f"  ways: {spec.ways}",
        f"  shots: {spec.shots}",
        f"  queries_per_class: {spec.queries_per_class}",
        f"  num_episodes: {spec.num_episodes}",
        "results:",
        f"  accuracy: {pct(report.mean_accuracy, report.ci95)}",
        f"  per_class_accuracy: {pct(report.mean_per_class_accuracy, report.per_class_ci95)}",
        f"  iterations_mean: {report.mean_iterations:.2f}",
        f"  iterations_median: {report.median_iterations:.1f}",
        f"  converged_episodes: {sum(e.converged for e in report.per_episode)}",
        f"  non_monotone_episodes: {report.non_monotone_episodes}",
    ]
    warnings = sorted({w for e in report.per_episode for w in e.warnings})
    for w in warnings:
        lines.append(f"warning: {w}")
    if timing:
        lines.append(f"time_mean_seconds: {report.mean_seconds:.6f}")
    if episodes:
        lines.append("per_episode: index seed accuracy per_class iterations converged monotone classes")
        for e in report.per_episode:
            classes = ",".join(str(c) for c in e.classes)
            lines.append(
                f"  {e.index} {e.seed} {100 * e.accuracy:.2f} {100 * e.per_class_accuracy:.2f} "
                f"{e.iterations} {int(e.converged)} {int(e.monotone)} {classes}"
            )
        if timing:
            lines.append("time_per_episode_seconds: " +
                         " ".join(f"{e.seconds:.6f}" for e in report.per_episode))
    return "\n".join(lines) + "\n"


def strip_timing(text: str) -> str:
    return "".join(line for line in text.splitlines(keepends=True) if not line.startswith("time"))


def write_report(report: EpisodeReport, path, episodes: bool = False, timing: bool = True) -> None:
    Path(path).write_text(format_report(report, episodes, timing), encoding="utf-8")


def episode_records(report: EpisodeReport) -> list:
    records = []
    for e in report.per_episode:
        d = asdict(e)
        rec = {k: d[k] for k in EPISODE_FIELDS}
        rec["classes"] = list(rec["classes"])
        if d["predictions"] is not None:
            rec["predictions"] = d["predictions"]
        records.append(rec)
    return records


def write_report_jsonl(report: EpisodeReport, path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for rec in episode_records(report):
            fh.write(json.dumps(rec) + "\n")
