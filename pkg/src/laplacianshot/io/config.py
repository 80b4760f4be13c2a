"""Flat JSON run configuration.

Every key is optional; missing keys take the defaults below. Unknown keys are
an error. Command-line flags override values read from the file.

=====================  =============  ==========================================
key                    default        meaning
=====================  =============  ==========================================
lambda                 1.0            Laplacian weight
knn                    3              neighbours per query in the affinity graph
distance               "euclidean"    euclidean | squared_euclidean | cosine_distance
normalization          "none"         none | l2 | cl2
rectify_prototypes     false          rectified prototypes
shift_correction       false          add support-minus-query mean shift to queries
symmetrize_affinity    false          W := max(W, W^T)
max_iterations         1000           solver iteration cap
rel_tolerance          1e-6           relative change in the objective that stops the solver
ways                   5              classes per episode
shots                  1              support rows per class (int or list per class)
queries_per_class      15             query rows per class
num_episodes           1000           episodes per benchmark
seed                   0              root seed
workers                1              episode worker threads
lambda_grid            8 values       grid for ``tune`` (0.1 ... 1.5)
knn_grid               [3, 5, 10]     grid for ``tune``
pool                   null           labelled pool for bench/tune
support                null           support file for infer
query                  null           query file for infer
output                 null           report / prediction output path
=====================  =============  ==========================================
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

from ..bench import DEFAULT_KNN_GRID, DEFAULT_LAMBDA_GRID, EpisodeSpec
from ..core import InferenceConfig, InvalidConfig


@dataclass
class RunConfig:
    lam: float = 1.0
    knn: int = 3
    distance: str = "euclidean"
    normalization: str = "none"
    rectify_prototypes: bool = False
    shift_correction: bool = False
    symmetrize_affinity: bool = False
    max_iterations: int = 1000
    rel_tolerance: float = 1e-6
    ways: int = 5
    shots: object = 1
    queries_per_class: int = 15
    num_episodes: int = 1000
    seed: int = 0
    workers: int = 1
    lambda_grid: list = field(default_factory=lambda: list(DEFAULT_LAMBDA_GRID))
    knn_grid: list = field(default_factory=lambda: list(DEFAULT_KNN_GRID))
    pool: Optional[str] = None
    support: Optional[str] = None
    query: Optional[str] = None
    output: Optional[str] = None

    def inference(self) -> InferenceConfig:
        return InferenceConfig(
            lam=float(self.lam), knn=int(self.knn), distance=self.distance,
            normalization=self.normalization, rectify_prototypes=bool(self.rectify_prototypes),
            shift_correction=bool(self.shift_correction),
            symmetrize_affinity=bool(self.symmetrize_affinity),
            max_iterations=int(self.max_iterations), rel_tolerance=float(self.rel_tolerance),
        )

    def episodes(self) -> EpisodeSpec:
        try:
            return EpisodeSpec(ways=int(self.ways), shots=self.shots,
                               queries_per_class=int(self.queries_per_class),
                               num_episodes=int(self.num_episodes), seed=int(self.seed))
        except ValueError as exc:
            raise InvalidConfig(str(exc)) from exc

    def to_dict(self) -> dict:
        d = asdict(self)
        d["lambda"] = d.pop("lam")
        return d


# file key -> attribute
KEYS = {("lambda" if f.name == "lam" else f.name): f.name for f in fields(RunConfig)}


def merge(config: RunConfig, values: dict) -> RunConfig:
    """Apply ``values`` (file keys) on top of ``config``; ``None`` values are skipped."""
    unknown = sorted(set(values) - set(KEYS))
    if unknown:
        raise InvalidConfig(f"unknown config key(s): {', '.join(unknown)}")
    for key, value in values.items():
        if value is not None:
            setattr(config, KEYS[key], value)
    return config


def load_config(path=None, overrides: Optional[dict] = None) -> RunConfig:
    config = RunConfig()
    if path is not None:
        try:
            values = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise InvalidConfig(f"{path}: invalid JSON: {exc}") from exc
        if not isinstance(values, dict):
            raise InvalidConfig(f"{path}: top level must be an object")
        nested = [k for k, v in values.items() if isinstance(v, dict)]
        if nested:
            raise InvalidConfig(f"{path}: config must be flat, got nested key(s) {nested}")
        merge(config, values)
    if overrides:
        merge(config, overrides)
    return config
