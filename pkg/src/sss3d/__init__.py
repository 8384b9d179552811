"""Multi-objective evolutionary search over point-cloud segmentation supernets."""

from .cost import (
    CostReport,
    LayerRole,
    LayerSpec,
    StructuralError,
    SupernetDescription,
    cost_report,
    count_flops,
    count_params,
    l1_filter_selection,
    resolve_channels,
)
from .engine import (
    SearchConfig,
    SearchResult,
    TwoStageResult,
    builtin_evaluator_factory,
    external_evaluator_factory,
    hyperarea_difference,
    hypervolume,
    run_single_stage,
    run_two_stage,
    seed_population,
)
from .evaluation import (
    BuiltinSurrogateEvaluator,
    EarlyStopPolicy,
    EvaluationOutcome,
    SurrogateParams,
    evaluate_with_early_stopping,
    surrogate_batch_accuracies,
    surrogate_error,
)
from .nsga2 import (
    Individual,
    ObjectiveVector,
    Population,
    crowded_compare,
    crowding_distance,
    dominates,
    fast_non_dominated_sort,
    next_generation,
)
from .space import (
    Genome,
    GenomeParseError,
    MaskMode,
    SearchSpace,
    StageMask,
    cardinality,
    crossover,
    decode,
    encode,
    mutate,
    random_genome,
    supernet_genome,
)
from .supernet import reference_description

__version__ = "0.1.0"
