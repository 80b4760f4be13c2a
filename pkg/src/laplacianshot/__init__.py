"""Transductive few-shot inference with Laplacian-regularised bound optimisation."""

from .bench import (
    EpisodeReport,
    EpisodeSpec,
    SyntheticSpec,
    generate_synthetic,
    infer,
    infer_nearest_prototype,
    run_benchmark,
    sample_episode,
    time_inference,
    tune_lambda,
)
from .core import (
    FeatureMatrix,
    FewShotTask,
    InferenceConfig,
    Rng,
    SoftAssignment,
    remap_labels,
)
from .graph import AffinityGraph, build_knn_graph, pairwise_term
from .prototype import (
    PrototypeSet,
    mean_prototypes,
    normalize_cl2,
    normalize_l2,
    rectify_prototypes,
    shift_correction,
)
from .solver import (
    initialize_assignment,
    mm_update,
    pairwise_potentials,
    relaxed_objective,
    solve,
    surrogate_value,
    unary_potentials,
)

__version__ = "0.1.0"
