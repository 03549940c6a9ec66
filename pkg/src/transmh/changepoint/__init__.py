"""The Gaussian changepoint benchmark model and its move families."""

from .fast import run_fast_chain
from .model import (
    ChangepointState,
    Dataset,
    ModelParams,
    SegmentStats,
    benchmark_dataset,
    generate_dataset,
    load_dataset,
    log_L,
    log_likelihood,
    log_prior,
    save_dataset,
    segment_mean,
)
from .moves import (
    MOVE_NAMES,
    VARIANTS,
    MoveSchedule,
    adhoc_death_ratio,
    adjust_ratio,
    birth_ratio,
    build_moves,
    changepoint_space,
    from_mixture,
    make_target,
    merge_heights,
    move_schedule,
    plain_death_ratio,
    posthoc_death_ratio,
    shift_ratio,
    split_heights,
    to_mixture,
)

__all__ = [
    "MOVE_NAMES",
    "VARIANTS",
    "ChangepointState",
    "Dataset",
    "ModelParams",
    "MoveSchedule",
    "SegmentStats",
    "adhoc_death_ratio",
    "adjust_ratio",
    "benchmark_dataset",
    "birth_ratio",
    "build_moves",
    "changepoint_space",
    "from_mixture",
    "generate_dataset",
    "load_dataset",
    "log_L",
    "log_likelihood",
    "log_prior",
    "make_target",
    "merge_heights",
    "move_schedule",
    "plain_death_ratio",
    "posthoc_death_ratio",
    "run_fast_chain",
    "save_dataset",
    "segment_mean",
    "shift_ratio",
    "split_heights",
    "to_mixture",
]
