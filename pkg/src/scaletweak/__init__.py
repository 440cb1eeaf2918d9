"""Scale a relational dataset and tweak its statistical features.

The package has three layers. The bottom layer models schemas, datasets and
atomic modifications. The middle layer holds one tweaking tool per feature
(linear join matrices, coappearance distributions, pairwise interaction
distributions) plus the coordinator that validates and applies their
proposals. The top layer is the pipeline: random size scaling, tool runs in a
configurable order, error reports and query evaluation, all reachable from
the command line front end in :mod:`scaletweak.cli`.
"""

from .coappear import (
    CoappearDistribution,
    CoappearGroup,
    CoappearTool,
    compute_coappear,
    detect_coappear_groups,
)
from .coordinator import (
    ChangeEvent,
    Coordinator,
    CoordinatorConfig,
    ToolRunSummary,
    Verdict,
    Violation,
)
from .dataset import (
    EMPTY,
    Dataset,
    Table,
    load_dataset,
    validate_integrity,
    write_dataset,
)
from .errors import ScaletweakError
from .linear import (
    ChainState,
    LinearJoinMatrix,
    LinearTool,
    compute_linear_matrix,
    resolve_chain,
)
from .metrics import (
    QuerySpec,
    default_query_suite,
    eval_query,
    feature_error_report,
    parse_query_suite,
    query_error,
)
from .modify import (
    AppendTuple,
    DeleteValues,
    InsertValues,
    RemoveTuple,
    ReplaceValues,
    apply_modification,
    check_modification,
    decode_journal_record,
    encode_journal_record,
    replay_journal,
)
from .pairwise import (
    PairwiseDistribution,
    PairwiseState,
    PairwiseTool,
    compute_pairwise,
)
from .pipeline import PipelineConfig, run_measure, run_pipeline, run_scale
from .randscale import load_size_target, rand_scale
from .schema import DatasetSchema, enumerate_maximal_chains
from .seeding import derive_rng

__all__ = [
    "AppendTuple",
    "ChainState",
    "ChangeEvent",
    "CoappearDistribution",
    "CoappearGroup",
    "CoappearTool",
    "Coordinator",
    "CoordinatorConfig",
    "Dataset",
    "DatasetSchema",
    "DeleteValues",
    "EMPTY",
    "InsertValues",
    "LinearJoinMatrix",
    "LinearTool",
    "PairwiseDistribution",
    "PairwiseState",
    "PairwiseTool",
    "PipelineConfig",
    "QuerySpec",
    "RemoveTuple",
    "ReplaceValues",
    "ScaletweakError",
    "Table",
    "ToolRunSummary",
    "Verdict",
    "Violation",
    "apply_modification",
    "check_modification",
    "compute_coappear",
    "compute_linear_matrix",
    "compute_pairwise",
    "decode_journal_record",
    "derive_rng",
    "encode_journal_record",
    "detect_coappear_groups",
    "enumerate_maximal_chains",
    "default_query_suite",
    "eval_query",
    "feature_error_report",
    "load_dataset",
    "load_size_target",
    "parse_query_suite",
    "query_error",
    "rand_scale",
    "replay_journal",
    "resolve_chain",
    "run_measure",
    "run_pipeline",
    "run_scale",
    "validate_integrity",
    "write_dataset",
]
