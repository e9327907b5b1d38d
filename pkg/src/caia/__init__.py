"""Class attribute inference toolkit.

Infers a hidden, class-constant sensitive attribute (hair color, gender, ...)
of every class of a black-box image classifier from its logits on
attribute-varied image tuples, evaluates attack quality, runs sample-count
ablations, and aggregates relative attribution over externally supplied
maps and masks. A built-in synthetic target-model simulator supports
end-to-end statistical verification without any trained model.
"""

from .core import (
    AdvantageTable,
    AttackResult,
    AttackTuple,
    AttributeSpace,
    ClassPrediction,
    LogitBatch,
    LogitRecord,
    LogitRequest,
    accumulate,
    predict,
    relative_advantage,
    run_attack,
    tuple_advantage_matrix,
)
from .errors import (
    CaiaError,
    ConfigurationError,
    DegenerateSampleError,
    DomainError,
    EmptyAttackSetError,
    EvaluationError,
    MalformedGridError,
    MalformedMaskError,
    MalformedScoreError,
    MalformedTupleError,
    MissingRecordError,
    ProtocolError,
    ShapeError,
    TransportError,
)
from .evaluation import (
    AblationPoint,
    ConfusionMatrix,
    MetricsReport,
    ValueMetrics,
    ablate,
    aggregate_runs,
    confusion,
    evaluate,
    metrics,
    partition_subsets,
    read_ground_truth,
    write_ground_truth,
)
from .filtering import (
    CandidateTuple,
    FilterDecision,
    FilterResult,
    build_attack_set,
    filter_tuple,
)
from .oracle import (
    HttpLogitProvider,
    InMemoryLogitProvider,
    OracleDescriptor,
    OracleMetadata,
    fetch_attribute_scores,
    fetch_logits,
    metadata,
    open_oracle,
    read_logit_file,
    write_logit_file,
)
from .simulator import (
    Scenario,
    ScenarioConfig,
    SimulatorLogitProvider,
    SimulatorServer,
    generate_scenario,
    load_scenario_config,
    save_scenario_config,
    serve,
    simulate_logits,
    tuple_logit_matrix,
)
from .attribution import (
    RelativeAttributionReport,
    read_float_grid,
    read_mask,
    relative_attribution,
    write_float_grid,
    write_mask,
)
from .manifests import (
    default_attribute_space,
    default_prompts,
    read_attack_manifest,
    read_candidates,
    read_predictions,
    read_report,
    write_attack_manifest,
    write_candidates,
    write_predictions,
    write_report,
)

__version__ = "0.1.0"
